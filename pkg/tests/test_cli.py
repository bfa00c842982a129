import csv
import io
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from adcompliance.augment import encode_png
from adcompliance.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from adcompliance.store import REPORTS, RunArchive


def cli(*argv):
    return main([str(a) for a in argv])


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_end_to_end(toy_dir, capsys):
    cfg = toy_dir / "config.json"
    assert cli("run", "--config", cfg, "--run-id", "base") == EXIT_OK
    assert "24 reports, 0 failed" in capsys.readouterr().out
    assert cli("judge", "--config", cfg, "--run-id", "base") == EXIT_OK
    assert "144 verdicts, 0 abstentions" in capsys.readouterr().out
    # judging again is a no-op
    assert cli("judge", "--config", cfg, "--run-id", "base") == EXIT_OK
    assert "0 verdicts" in capsys.readouterr().out

    assert cli("metaeval", "--config", cfg, "--run-id", "base", "--out", toy_dir / "meta") == EXIT_OK
    rows = list(csv.DictReader(io.StringIO((toy_dir / "meta" / "metaeval.csv").read_text())))
    assert {r["attribute"] for r in rows} == {"Face Detection", "Human Presence", "Logo Detection", "Logo Position",
                                              "OCR Text", "Primary Color"}
    assert all(int(r["n"]) == 24 for r in rows)

    out = toy_dir / "rep"
    assert cli("report", "--config", cfg, "--run-id", "base", "--out", out) == EXIT_OK
    for name in ("scorecards.csv", "judge_scorecards.csv", "cost_summary.csv", "report.json",
                 "cost_per_image.png", "accuracy_heatmap.png", "latency.png"):
        assert (out / name).stat().st_size > 0, name
    first = tree_bytes(out)
    assert cli("report", "--config", cfg, "--run-id", "base", "--out", out) == EXIT_OK
    assert tree_bytes(out) == first
    metrics = RunArchive(toy_dir / "archive").read_metrics("base")
    assert {"metaeval", "report"} <= set(metrics)

    capsys.readouterr()
    assert cli("select", "--config", cfg, "--run-id", "base") == EXIT_OK
    rec = json.loads(capsys.readouterr().out)
    assert rec["action"] == "switch" and rec["model_id"] == "gemini-2.0-flash"
    assert cli("select", "--config", cfg, "--current", "gemini-2.0-flash") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["action"] == "keep"


def test_run_is_resumable(toy_dir, capsys):
    cfg = toy_dir / "config.json"
    assert cli("run", "--config", cfg, "--run-id", "r", "--models", "gpt-4.1") == EXIT_OK
    before = (toy_dir / "archive" / "r" / REPORTS).read_bytes()
    assert cli("run", "--config", cfg, "--run-id", "r", "--models", "gpt-4.1") == EXIT_OK
    assert (toy_dir / "archive" / "r" / REPORTS).read_bytes() == before
    assert "12 reports" in capsys.readouterr().out


def test_scripted_failure_gives_partial_exit(toy_dir, capsys):
    cfg = toy_dir / "config.json"
    fixtures = toy_dir / "fixtures" / "gpt-4.1.json"
    table = json.loads(fixtures.read_text())
    first = sorted(table)[0]
    table[first]["scripted_failures"] = 10
    fixtures.write_text(json.dumps(table))
    assert cli("run", "--config", cfg, "--run-id", "r") == EXIT_PARTIAL
    out = capsys.readouterr().out
    assert "23 reports, 1 failed" in out and "TransportError" in out
    run = RunArchive(toy_dir / "archive").read_run("r")
    assert len(run.reports()) == 23 and len(run.failures()) == 1
    # judging skips the failed pair
    assert cli("judge", "--config", cfg, "--run-id", "r") == EXIT_OK
    assert "138 verdicts" in capsys.readouterr().out
    # fixing the fixture and rerunning completes only the missing pair
    table[first]["scripted_failures"] = 0
    fixtures.write_text(json.dumps(table))
    assert cli("run", "--config", cfg, "--run-id", "r") == EXIT_OK


def test_parallelism_does_not_change_archive(toy_dir):
    cfg = toy_dir / "config.json"
    archive = toy_dir / "archive"
    snapshots = []
    for p in (1, 8):
        assert cli("run", "--config", cfg, "--run-id", "p", "--parallelism", p) == EXIT_OK
        assert cli("judge", "--config", cfg, "--run-id", "p", "--parallelism", p) == EXIT_OK
        snapshots.append(tree_bytes(archive))
        shutil.rmtree(archive)
    assert snapshots[0] == snapshots[1]


def test_augment_one_hundred_inputs(tmp_path, toy_dir, capsys):
    src = tmp_path / "in"
    src.mkdir()
    rng = np.random.default_rng(0)
    for i in range(100):
        (src / f"img{i:03d}.png").write_bytes(encode_png(rng.integers(0, 256, (24, 24, 3), dtype=np.uint8)))
    cfg = toy_dir / "config.json"
    out = tmp_path / "out"
    assert cli("augment", "--config", cfg, "--input", src, "--out", out) == EXIT_OK
    assert len((out / "variants.jsonl").read_text().splitlines()) == 1100
    assert len(list((out / "images").iterdir())) == 1100
    first = tree_bytes(out)
    shutil.rmtree(out)
    assert cli("augment", "--config", cfg, "--input", src, "--out", out) == EXIT_OK
    assert tree_bytes(out) == first


def test_augment_missing_mask(toy_dir, tmp_path, capsys):
    raw = json.loads((toy_dir / "config.json").read_text())
    del raw["augmentation"]["mask"]
    (toy_dir / "nomask.json").write_text(json.dumps(raw))
    out = tmp_path / "aug"
    assert cli("augment", "--config", toy_dir / "nomask.json", "--out", out) == EXIT_PARTIAL
    errors = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("  ")]
    unmasked = sorted(set(f"toy-{i:02d}" for i in range(1, 13)) - set(raw["augmentation"]["masks"]))
    assert [ln.split()[:2] for ln in errors] == [[cid, "Occluded:"] for cid in unmasked]
    assert len((out / "variants.jsonl").read_text().splitlines()) == 12 * 11 - len(unmasked)


def test_augmented_run_and_robustness(toy_dir, capsys):
    cfg = toy_dir / "config.json"
    aug = toy_dir / "aug"
    assert cli("augment", "--config", cfg, "--out", aug) == EXIT_OK
    assert cli("run", "--config", cfg, "--run-id", "base") == EXIT_OK
    assert cli("run", "--config", cfg, "--run-id", "aug", "--models", "gemini-2.0-flash",
               "--dataset", aug / "variants.jsonl") == EXIT_OK
    out = toy_dir / "rep"
    assert cli("report", "--config", cfg, "--run-id", "base", "--run-id", "aug", "--out", out,
               "--no-figures") == EXIT_OK
    table = list(csv.reader((out / "robustness_gemini-2.0-flash.csv").open()))
    assert table[0][0] == "variant" and len(table) == 13
    rows = {r[0]: r[1:] for r in table[1:]}
    assert rows["Rotated"][0] == "-" and rows["Grayscale"][-1] == "-"
    assert not (out / "accuracy_heatmap.png").exists()


def test_agreement_and_toy(tmp_path, toy_dir, capsys):
    cfg = toy_dir / "config.json"
    ann = toy_dir / "annotations"
    assert cli("agreement", "--config", cfg, ann / "a1.jsonl", ann / "a2.jsonl") == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("attribute,n") and lines[-1].startswith("all,72,")
    dest = tmp_path / "fresh"
    assert cli("toy", "--out", dest) == EXIT_OK
    assert (dest / "config.json").exists() and not (dest / "archive").exists()
    assert cli("toy", "--out", dest) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["run", "--config", "missing.json"],
    ["judge", "--config", "{cfg}"],
    ["report", "--config", "{cfg}", "--run-id", "nope"],
    ["augment", "--config", "{cfg}"],
])
def test_usage_errors_exit_one(toy_dir, argv, capsys):
    argv = [a.replace("{cfg}", str(toy_dir / "config.json")) for a in argv]
    assert main(argv) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_bad_config_exit_one(toy_dir, capsys):
    bad = toy_dir / "bad.json"
    bad.write_text('{"models": [{"model_id": "gpt-4.1", "provider": "mock"}], "child_models": ["gpt-4.1"]}')
    assert cli("run", "--config", bad) == EXIT_CONFIG
    assert "fixtures" in capsys.readouterr().err


def test_verbose_flag_positions(toy_dir):
    cfg = toy_dir / "config.json"
    assert cli("-v", "run", "--config", cfg, "--models", "gpt-4.1") == EXIT_OK
    assert cli("run", "-v", "--config", cfg, "--models", "gpt-4.1") == EXIT_OK
