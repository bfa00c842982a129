"""Acceptance criteria. Each test prints one PASS/FAIL line, repeated in the terminal summary."""

import contextlib
import json
import math
import random
import shutil
import socket
import time
from pathlib import Path

import numpy as np
import pytest

from adcompliance.augment import AugmentationKind, augment_creatives, default_lexicon, encode_png, load_image, rotation_angle, \
    suite as augment_suite, variant_seed
from adcompliance.backends import MODELS
from adcompliance.cli import EXIT_OK, main
from adcompliance.engine import Creative, EvaluationRun, Outcome, OutcomeError
from adcompliance.judge import JudgeReport, Verdict, VerdictForm, ocr_similarity
from adcompliance.metrics import (ModelScorecard, cohen_kappa, cost_of, cost_reduction_factor, policy_profile,
                                  recommend_switch)
from adcompliance.schema import AttributeKind, AttributeValue, ComplianceReport, PositionSector, TokenUsage, \
    default_attribute_suite
from adcompliance.store import REPORTS, VERDICTS, RunArchive, load_dataset
from adcompliance.toy import bundled_toy

RESULTS: list[str] = []


@contextlib.contextmanager
def criterion(number: int, title: str, budget: float | None = None):
    start = time.perf_counter()
    status = "FAIL"
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget is not None:
            assert elapsed < budget, f"took {elapsed:.2f}s, budget {budget}s"
        status = "PASS"
    finally:
        line = f"criterion {number} {status}: {title} ({time.perf_counter() - start:.2f}s)"
        RESULTS.append(line)
        print(line)


# 1 ---------------------------------------------------------------------------------------------------------------


def test_c1_cost_arithmetic():
    with criterion(1, "cost_of exact at list price and linear", budget=1.0):
        gpt = MODELS["gpt-4.1"]
        assert (gpt.input_rate, gpt.output_rate) == (2.0, 8.0)
        assert cost_of(TokenUsage(1_000_000, 1_000_000), gpt) == 10.00
        rng = random.Random(1)
        for _ in range(1000):
            a = TokenUsage(rng.randrange(2_000_000), rng.randrange(200_000))
            b = TokenUsage(rng.randrange(2_000_000), rng.randrange(200_000))
            assert abs(cost_of(a + b, gpt) - (cost_of(a, gpt) + cost_of(b, gpt))) <= 1e-12


# 2 ---------------------------------------------------------------------------------------------------------------


def test_c2_cost_ratio():
    with criterion(2, "per-image cost ratio of the quoted constants", budget=1.0):
        ratio = cost_reduction_factor(0.0159, 0.0005)
        assert ratio >= 31.0
        assert abs(ratio - 31.8) <= 0.1


# 3 ---------------------------------------------------------------------------------------------------------------


def _oracle_kappa(a, b):
    n = len(a)
    cats = sorted(set(a) | set(b))
    counts = {(x, y): 0 for x in cats for y in cats}
    for x, y in zip(a, b):
        counts[(x, y)] += 1
    p_o = sum(counts[(c, c)] for c in cats) / n
    p_e = sum(sum(counts[(c, y)] for y in cats) * sum(counts[(x, c)] for x in cats) for c in cats) / (n * n)
    return 1.0 if p_e == 1 else (p_o - p_e) / (1 - p_e)


def test_c3_kappa_oracle():
    with criterion(3, "kappa equals brute-force oracle on 10,000 random pairs", budget=30.0):
        rng = random.Random(3)
        for _ in range(10_000):
            n = rng.randint(1, 500)
            k = rng.randint(2, 5)
            a = [rng.randrange(k) for _ in range(n)]
            b = [rng.randrange(k) for _ in range(n)]
            kappa = cohen_kappa(a, b).kappa
            assert abs(kappa - _oracle_kappa(a, b)) <= 1e-12
            assert -1.0 <= kappa <= 1.0
            assert abs(cohen_kappa(b, a).kappa - kappa) <= 1e-12
            perm = list(range(k))
            rng.shuffle(perm)
            names = [f"L{p}" for p in perm]
            assert abs(cohen_kappa([names[x] for x in a], [names[x] for x in b]).kappa - kappa) <= 1e-12


# 4 ---------------------------------------------------------------------------------------------------------------


def test_c4_kappa_analytic():
    with criterion(4, "analytic kappa cases"):
        mixed = [True, False, False, True, True, False, True]
        assert cohen_kappa(mixed, mixed).kappa == 1.0
        assert cohen_kappa([True, True, False, False], [True, False, True, False]).kappa == 0.0


# 5 ---------------------------------------------------------------------------------------------------------------


def test_c5_augmentation(tmp_path):
    toy = bundled_toy()
    with criterion(5, "augmentation determinism and semantics on the toy set", budget=60.0):
        creatives = load_dataset(toy / "manifest.jsonl")
        assert len(creatives) == 12
        lexicon = default_lexicon()
        mask = (0.4, 0.4, 0.6, 0.6)
        for c in creatives:
            img = load_image(c.image_path)
            first = augment_suite(img, 99, mask, lexicon, source_id=c.creative_id)
            second = augment_suite(img, 99, mask, lexicon, source_id=c.creative_id)
            assert [v.kind for v in first] == list(AugmentationKind)
            assert [encode_png(v.pixels) for v in first] == [encode_png(v.pixels) for v in second]
            by_kind = {v.kind: v.pixels for v in first}
            expected = np.clip(img.astype(np.int16) + 60, 0, 255).astype(np.uint8)
            assert np.array_equal(by_kind[AugmentationKind.BRIGHT], expected)
            gray = by_kind[AugmentationKind.GRAYSCALE]
            assert np.array_equal(gray[..., 0], gray[..., 1]) and np.array_equal(gray[..., 1], gray[..., 2])
        for seed in range(2000):
            assert -30.0 <= rotation_angle(variant_seed(seed, AugmentationKind.ROTATED)) <= 30.0

        rng = np.random.default_rng(5)
        src = tmp_path / "hundred"
        src.mkdir()
        inputs = []
        for i in range(100):
            p = src / f"i{i:03d}.png"
            p.write_bytes(encode_png(rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)))
            inputs.append(Creative(f"i{i:03d}", str(p)))
        result = augment_creatives(inputs, tmp_path / "out", 11, lexicon=lexicon, default_mask=mask)
        assert len(result.variants) == 1100 and not result.errors
        assert len(list((tmp_path / "out" / "images").iterdir())) == 1100


# 6 ---------------------------------------------------------------------------------------------------------------


def test_c6_ocr_similarity():
    with criterion(6, "OCR cosine similarity"):
        # tf over (buy, now, today): (1,1,1) . (1,1,0) = 2; norms sqrt 3 and sqrt 2
        assert abs(ocr_similarity("buy now today", "buy now") - 2 / math.sqrt(6)) <= 1e-9
        rng = random.Random(6)
        vocab = ["buy", "now", "today", "sale", "free", "Shop", "new!", "deal"]
        for _ in range(1000):
            a = " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 10)))
            b = " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 10)))
            s = ocr_similarity(a, b)
            assert 0.0 <= s <= 1.0
            assert abs(s - ocr_similarity(b, a)) <= 1e-12


# 7 ---------------------------------------------------------------------------------------------------------------


@pytest.fixture
def no_network(monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


def _tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _cells(csv_text: str) -> dict[str, list[str]]:
    return {row.split(",")[0]: row.split(",")[1:] for row in csv_text.strip().splitlines()}


def test_c7_end_to_end(toy_dir, no_network):
    cfg = str(toy_dir / "config.json")
    with criterion(7, "mock pipeline run, judge, metaeval, report", budget=60.0):
        assert main(["run", "--config", cfg, "--run-id", "e2e", "--parallelism", "1"]) == EXIT_OK
        assert main(["judge", "--config", cfg, "--run-id", "e2e", "--parallelism", "1"]) == EXIT_OK
        assert main(["metaeval", "--config", cfg, "--run-id", "e2e"]) == EXIT_OK
        out = toy_dir / "report"
        assert main(["report", "--config", cfg, "--run-id", "e2e", "--out", str(out)]) == EXIT_OK

        archive = RunArchive(toy_dir / "archive")
        run = archive.read_run("e2e")
        assert len(run.outcomes) == 24 and all(o.ok for o in run.outcomes.values())
        assert all(len(o.report.results) == 21 for o in run.outcomes.values())
        for jr in archive.read_judge_reports("e2e"):
            for v in jr.verdicts.values():
                assert (v.form is VerdictForm.BINARY and isinstance(v.value, bool)) or \
                       (v.form is VerdictForm.SCALAR and 0.0 <= v.value <= 1.0)

        # hand-computed from the fixture error tables: each wrong answer costs 100/12 points
        gpt = [100.0, 100.0, 100 * 11 / 12, 100.0, 50.0, 100.0]
        flash = [100 * 8 / 12, 100.0, 100 * 10 / 12, 100.0, 100.0, 100 * 10 / 12]
        cells = _cells((out / "scorecards.csv").read_text())
        assert cells["parameter"] == ["gpt-4.1", "gemini-2.0-flash"]
        assert cells["Average"] == [f"{sum(gpt) / 6:.2f}", f"{sum(flash) / 6:.2f}"]
        assert cells["Median"] == [f"{100.0:.2f}", f"{(100 * 10 / 12 + 100) / 2:.2f}"]
        report = json.loads((out / "report.json").read_text())
        means = {c["model_id"]: (c["mean_accuracy"], c["median_accuracy"]) for c in report["scorecards"]}
        assert means["gpt-4.1"][0] == pytest.approx(sum(gpt) / 6, abs=1e-9)
        assert means["gemini-2.0-flash"][1] == pytest.approx((100 * 10 / 12 + 100) / 2, abs=1e-9)

        first = _tree(toy_dir / "archive" / "e2e")
        shutil.rmtree(toy_dir / "archive")
        assert main(["run", "--config", cfg, "--run-id", "e2e", "--parallelism", "8"]) == EXIT_OK
        assert main(["judge", "--config", cfg, "--run-id", "e2e", "--parallelism", "8"]) == EXIT_OK
        assert main(["metaeval", "--config", cfg, "--run-id", "e2e"]) == EXIT_OK
        assert main(["report", "--config", cfg, "--run-id", "e2e", "--out", str(out)]) == EXIT_OK
        assert _tree(toy_dir / "archive" / "e2e") == first


# 8 ---------------------------------------------------------------------------------------------------------------


def _dominates(x: ModelScorecard, y: ModelScorecard) -> bool:
    xs, ys = (x.mean_accuracy, -x.mean_cost, -x.mean_latency), (y.mean_accuracy, -y.mean_cost, -y.mean_latency)
    return all(p >= q for p, q in zip(xs, ys)) and xs != ys


def test_c8_selection():
    with criterion(8, "selection Pareto consistency, tie stability, reported-figure example"):
        rng = random.Random(8)
        for trial in range(10_000):
            k = rng.randint(1, 6)
            cards = [ModelScorecard(f"m{i}", {}, rng.choice([93.0, 95.0, 97.0, rng.uniform(93, 100)]),
                                    0.0, rng.choice([0.001, 0.01, rng.uniform(0, 0.02)]),
                                    rng.choice([1.0, 2.0, rng.uniform(0.5, 5)])) for i in range(k)]
            current = rng.choice(cards)
            if trial % 3 == 0:  # inject an exact twin of the current model
                cards.append(ModelScorecard("twin", {}, current.mean_accuracy, 0.0, current.mean_cost,
                                            current.mean_latency))
            policy = policy_profile("cost_sensitive", current.model_id)
            rec = recommend_switch(cards, policy)
            chosen = next(c for c in cards if c.model_id == rec.model_id)
            assert not any(_dominates(c, chosen) for c in cards if c.mean_accuracy >= policy.min_accuracy_floor)
            scores = dict(rec.ranking)
            if scores[current.model_id] == max(scores.values()):
                assert not rec.switch and rec.model_id == current.model_id

        pro = ModelScorecard("gemini-2.5-pro", {}, 94.22, 94.22, 0.0159, 1.0)
        flash = ModelScorecard("gemini-2.0-flash", {}, 93.17, 93.17, 0.0005, 1.0)
        rec = recommend_switch([pro, flash], policy_profile("cost_sensitive", "gemini-2.5-pro"))
        assert rec.switch and rec.model_id == "gemini-2.0-flash"


# 9 ---------------------------------------------------------------------------------------------------------------


def _sample_run(suite):
    sample = {AttributeKind.BOOLEAN: True, AttributeKind.POSITION_SECTOR: PositionSector.TOP_RIGHT,
              AttributeKind.TEXT: "Fresh ☕ daily", AttributeKind.TEXT_LIST: ("free",),
              AttributeKind.COLOR_LIST: ("red", "white"), AttributeKind.SUGGESTION: "Add a CTA."}
    creatives = [Creative(f"c{i}", f"c{i}.png", "cap", "b") for i in range(4)]
    outcomes = {}
    for i, c in enumerate(creatives):
        if i == 2:
            outcomes[(c.creative_id, "m")] = Outcome(c.creative_id, "m", error=OutcomeError(
                "TransportError", "connection reset", 3, TokenUsage(10, 0)))
        else:
            results = {a.name: AttributeValue(a.kind, sample[a.kind]) for a in suite}
            outcomes[(c.creative_id, "m")] = Outcome(c.creative_id, "m", report=ComplianceReport(
                c.creative_id, "m", results, TokenUsage(1500 + i, 90), 0.5 * i, "2024-05-01T00:00:00+00:00", 1 + i))
    return EvaluationRun("dur", "toy", ["m"], suite, creatives, outcomes, "s", "f", "v", "h")


def test_c9_store_durability(tmp_path):
    with criterion(9, "archive round trip and truncated-tail recovery"):
        suite = default_attribute_suite()
        run = _sample_run(suite)
        judged = [JudgeReport("c0", "m", "mom", {"OCR Text": Verdict.scalar("OCR Text", 0.75),
                                                 "Logo Detection": Verdict.binary("Logo Detection", False, "none")},
                              {"Primary Color": "VerdictParseError: nothing"}, TokenUsage(90, 4)),
                  JudgeReport("c1", "m", "mom", {"Face Detection": Verdict.binary("Face Detection", True)}, {},
                              TokenUsage(30, 1))]
        arch = RunArchive(tmp_path / "a")
        arch.write_header(run)
        arch.append_outcomes("dur", run.outcomes.values())
        arch.append_judge_reports("dur", judged)
        arch.write_metrics("dur", "metaeval", {"k": 0.5})
        assert arch.read_run("dur") == run
        assert arch.read_judge_reports("dur") == judged
        assert arch.read_metrics("dur")["metaeval"] == {"k": 0.5}

        for segment, count in ((REPORTS, len(run.outcomes)), (VERDICTS, 4)):
            path = arch.run_dir("dur") / segment
            data = path.read_bytes()
            lines = data.splitlines(keepends=True)
            tail_start = len(data) - len(lines[-1])
            for cut in range(tail_start, len(data)):
                path.write_bytes(data[:cut])
                records = list(arch.iter_segment("dur", segment))
                assert len(records) in (count - 1, count)
                if segment == REPORTS:
                    kept = arch.read_run("dur").outcomes
                    assert list(kept.items())[:count - 1] == list(run.outcomes.items())[:count - 1]
            path.write_bytes(data)
