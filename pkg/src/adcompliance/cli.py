"""Command line entry point: ``adcompliance <command> ...``.

Exit codes: 0 success, 1 configuration or usage error, 2 partial failure
(some creative/model pairs, variants or judge calls failed).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .augment import augment_creatives
from .backends import Backend, MockBackend, ModelSpec, Provider, RetryPolicy, backend_for
from .config import Config, ConfigError, load_config
from .engine import Creative, EvaluationRun, fixed_clock, run_batch, utc_now
from .judge import EmptyJudgeSet, JudgeReport, judge_report
from .metrics import (MissingReference, NoEligibleModel, annotator_agreement, metaeval, metaeval_csv,
                      recommend_switch, scorecard, split_by_augmentation)
from .report import merge_runs, write_report
from .schema import SchemaError
from .store import AnnotationSet, NotFound, RunArchive, StoreError, load_annotations, load_dataset

log = logging.getLogger("adcompliance")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


class UsageError(Exception):
    pass


# --- helpers -----------------------------------------------------------------------------------------------------


def _all_mock(specs: Sequence[ModelSpec]) -> bool:
    return all(s.provider is Provider.MOCK for s in specs)


def _clock(specs: Sequence[ModelSpec]):
    """Wall clock for live models; a fixed stamp in mock mode so archives are reproducible."""
    if not _all_mock(specs):
        return utc_now
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return fixed_clock(datetime.fromtimestamp(epoch, timezone.utc).isoformat(timespec="milliseconds"))


def _backends(specs: Sequence[ModelSpec]) -> dict[str, Backend]:
    # fresh mock tables per command so edited fixture files are always re-read
    return {s.model_id: MockBackend.from_file(s.fixtures) if s.provider is Provider.MOCK else backend_for(s)
            for s in specs}


def _policy(cfg: Config, seed: int | None) -> RetryPolicy:
    if seed is None:
        return cfg.retry
    return RetryPolicy(cfg.retry.max_retries, cfg.retry.base_backoff, cfg.retry.max_backoff, seed)


def _split_ids(values: Sequence[str] | None) -> list[str]:
    return [v for item in values or () for v in item.split(",") if v]


def _dataset_path(cfg: Config, override: str | None) -> Path:
    if override:
        return Path(override)
    if cfg.dataset is None:
        raise UsageError("no dataset: pass --dataset or set it in the config")
    return cfg.dataset


def _default_run_id(dataset: Path, model_ids: Sequence[str]) -> str:
    h = hashlib.sha256(f"{dataset.resolve()}\0{','.join(model_ids)}".encode()).hexdigest()[:10]
    return f"run-{h}"


def _annotations(cfg: Config, path: str | None) -> AnnotationSet | None:
    p = Path(path) if path else cfg.annotations
    return load_annotations(p, cfg.suite) if p else None


def _archive(cfg: Config) -> RunArchive:
    return RunArchive(cfg.archive)


def _read_runs(archive: RunArchive, run_ids: Sequence[str]) -> EvaluationRun:
    if not run_ids:
        raise UsageError("pass at least one --run-id")
    return merge_runs([archive.read_run(r) for r in run_ids])


def _judge_reports(archive: RunArchive, run_ids: Sequence[str], mother: str | None) -> list[JudgeReport]:
    return [j for r in run_ids for j in archive.read_judge_reports(r, mother)]


def _emit(text: str, out: str | None, name: str) -> None:
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


# --- commands ----------------------------------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    model_ids = _split_ids(args.models) or cfg.child_models
    if not model_ids:
        raise UsageError("no models: pass --models or set child_models in the config")
    specs = [cfg.model(m) for m in model_ids]
    dataset_path = _dataset_path(cfg, args.dataset)
    creatives = load_dataset(dataset_path)
    run_id = args.run_id or _default_run_id(dataset_path, model_ids)
    archive = _archive(cfg)

    done = set()
    if archive.exists(run_id):
        prior = archive.read_run(run_id)
        done = {k for k, o in prior.outcomes.items() if o.ok}
        log.info("run %s: resuming, %d pairs already complete", run_id, len(done))
    run = run_batch(creatives, specs, cfg.suite, cfg.brands, args.parallelism or cfg.parallelism, run_id=run_id,
                    dataset_ref=str(dataset_path.resolve()), policy=_policy(cfg, args.seed),
                    backends=_backends(specs), clock=_clock(specs), skip=done)
    archive.write_header(run)
    archive.append_outcomes(run_id, run.outcomes.values())

    final = archive.read_run(run_id)
    ok = sum(1 for o in final.outcomes.values() if o.ok)
    failed = len(creatives) * len(specs) - ok
    print(f"run {run_id}: {ok} reports, {failed} failed -> {archive.run_dir(run_id)}")
    for o in final.failures():
        print(f"  failed {o.creative_id} on {o.model_id}: {o.error.error_type}: {o.error.message}")
    return EXIT_OK if failed == 0 else EXIT_PARTIAL


def _input_creatives(cfg: Config, args) -> list[Creative]:
    if args.input:
        root = Path(args.input)
        if not root.is_dir():
            raise UsageError(f"{root} is not a directory")
        files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        return [Creative(p.stem, str(p)) for p in files]
    return load_dataset(_dataset_path(cfg, args.dataset))


def cmd_augment(args) -> int:
    cfg = load_config(args.config)
    if not args.out:
        raise UsageError("augment needs --out")
    aug = cfg.augmentation
    creatives = _input_creatives(cfg, args)
    seed = aug.seed if args.seed is None else args.seed
    result = augment_creatives(creatives, args.out, seed, lexicon=aug.lexicon, default_mask=aug.mask,
                               masks=aug.masks, params=aug.params)
    print(f"{len(result.variants)} variants from {len(creatives)} images -> {Path(args.out) / 'variants.jsonl'}")
    for cid, kind, msg in result.errors:
        print(f"  {cid} {kind}: {msg}")
    return EXIT_OK if not result.errors else EXIT_PARTIAL


def cmd_judge(args) -> int:
    cfg = load_config(args.config)
    mother_id = args.mother or cfg.mother_model
    if not mother_id:
        raise UsageError("no mother model: pass --mother or set mother_model in the config")
    mother = cfg.model(mother_id)
    archive = _archive(cfg)
    if not args.run_id:
        raise UsageError("judge needs --run-id")
    run_id = args.run_id
    run = archive.read_run(run_id)
    judgeable = _split_ids(args.attributes) or cfg.judgeable
    judged = archive.judged_keys(run_id)
    todo = []
    for o in run.outcomes.values():
        if not o.ok:
            continue
        missing = [a for a in judgeable if (o.creative_id, o.model_id, mother_id, a) not in judged]
        if missing:
            todo.append((o, missing))
    backend = _backends([mother])[mother_id]
    policy = _policy(cfg, args.seed)

    def one(item):
        o, names = item
        return judge_report(mother, run.creative(o.creative_id), o.report, names, suite=run.suite, policy=policy,
                            backend=backend, ocr_threshold=cfg.ocr_threshold)

    with ThreadPoolExecutor(max_workers=args.parallelism or cfg.parallelism) as pool:
        reports = list(pool.map(one, todo))
    archive.append_judge_reports(run_id, reports)
    abstained = sum(len(r.abstained) for r in reports)
    verdicts = sum(len(r.verdicts) for r in reports)
    print(f"judge {run_id} with {mother_id}: {verdicts} verdicts, {abstained} abstentions "
          f"({len(todo)} reports judged, {len(run.outcomes) - len(todo)} already complete or failed)")
    return EXIT_OK if abstained == 0 else EXIT_PARTIAL


def cmd_metaeval(args) -> int:
    cfg = load_config(args.config)
    archive = _archive(cfg)
    if not args.run_id:
        raise UsageError("metaeval needs --run-id")
    annotations = _annotations(cfg, args.annotations)
    if annotations is None:
        raise UsageError("metaeval needs --annotations or an annotations path in the config")
    run = _read_runs(archive, args.run_id)
    reports = _judge_reports(archive, args.run_id, args.mother)
    results = metaeval(run, reports, annotations, threshold=cfg.ocr_threshold)
    payload = {m: {a: s.to_dict() for a, s in per.items()} for m, per in results.items()}
    archive.write_metrics(args.run_id[0], "metaeval", payload)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "metaeval.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                                      encoding="utf-8")
    _emit(metaeval_csv(results), args.out, "metaeval.csv")
    return EXIT_OK


def cmd_agreement(args) -> int:
    cfg = load_config(args.config)
    a = load_annotations(args.first, cfg.suite)
    b = load_annotations(args.second, cfg.suite)
    wanted = _split_ids(args.attributes) or sorted(set(a.attributes) & set(b.attributes))
    lines = ["attribute,n,accuracy,kappa,kappa_undefined"]
    for name in wanted + ["*"]:
        stats = annotator_agreement(a, b, None if name == "*" else [name])
        lines.append(f"{'all' if name == '*' else name},{stats.n},{stats.accuracy:.4f},{stats.kappa:.4f},"
                     f"{stats.kappa_undefined}")
    _emit("\n".join(lines) + "\n", args.out, "agreement.csv")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    archive = _archive(cfg)
    if not args.run_id:
        raise UsageError("report needs --run-id")
    run = _read_runs(archive, args.run_id)
    out = Path(args.out) if args.out else archive.run_dir(args.run_id[0]) / "report"
    summary = write_report(out, run, specs=cfg.models, annotations=_annotations(cfg, args.annotations),
                           judge_reports=_judge_reports(archive, args.run_id, args.mother or cfg.mother_model),
                           mother_model_id=args.mother or cfg.mother_model, ocr_threshold=cfg.ocr_threshold,
                           figures=not args.no_figures)
    archive.write_metrics(args.run_id[0], "report", {k: v for k, v in summary.items() if k != "files"})
    print(f"report for {run.run_id} -> {out}")
    for name in summary["files"]:
        print(f"  {name}")
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = load_config(args.config)
    archive = _archive(cfg)
    run_ids = args.run_id or archive.run_ids()
    run = _read_runs(archive, run_ids)
    baseline, _ = split_by_augmentation(run)
    annotations = _annotations(cfg, args.annotations)
    if annotations is not None:
        cards = scorecard(baseline, annotations, specs=cfg.models, ocr_threshold=cfg.ocr_threshold)
    else:
        mother = args.mother or cfg.mother_model
        cards = scorecard(baseline, _judge_reports(archive, run_ids, mother), specs=cfg.models,
                          ocr_threshold=cfg.ocr_threshold, mother_model_id=mother)
    policy = cfg.selection
    if policy is None:
        raise UsageError("select needs a selection section in the config")
    if args.current:
        policy = replace(policy, current_model_id=args.current)
    rec = recommend_switch(cards, policy)
    _emit(rec.to_json() + "\n", args.out, "recommendation.json")
    return EXIT_OK


def cmd_toy(args) -> int:
    from .toy import bundled_toy

    dest = Path(args.out or "toy")
    if dest.exists() and any(dest.iterdir()):
        raise UsageError(f"{dest} exists and is not empty")
    shutil.copytree(bundled_toy(), dest, dirs_exist_ok=True, ignore=shutil.ignore_patterns("archive"))
    print(f"toy workspace -> {dest} (try: adcompliance run --config {dest / 'config.json'} --run-id demo)")
    return EXIT_OK


# --- parser ------------------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adcompliance", description="Ad-creative compliance evaluation with "
                                "child/mother multimodal models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    # -v is accepted before or after the subcommand
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, help: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help, parents=[verbose])

    def common(sp, *, run_ids: bool = True, multi: bool = False):
        sp.add_argument("--config", required=True, help="JSON config file")
        if multi:
            sp.add_argument("--run-id", action="append", help="archive run id (repeatable)")
        elif run_ids:
            sp.add_argument("--run-id", help="archive run id")
        sp.add_argument("--out", help="output directory")
        return sp

    sp = common(add("run", help="evaluate creatives with child models"))
    sp.add_argument("--models", action="append", help="comma-separated child model ids (default: config)")
    sp.add_argument("--dataset", help="manifest (JSON lines)")
    sp.add_argument("--parallelism", type=int)
    sp.add_argument("--seed", type=int, help="retry-jitter seed")
    sp.set_defaults(func=cmd_run)

    sp = common(add("augment", help="write the 11 altered variants of every image"), run_ids=False)
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--dataset", help="manifest (JSON lines)")
    src.add_argument("--input", help="directory of images")
    sp.add_argument("--seed", type=int, help="augmentation seed (default: config)")
    sp.set_defaults(func=cmd_augment)

    sp = common(add("judge", help="judge archived child reports with a mother model"))
    sp.add_argument("--mother", help="mother model id (default: config)")
    sp.add_argument("--attributes", action="append", help="comma-separated attributes (default: config)")
    sp.add_argument("--parallelism", type=int)
    sp.add_argument("--seed", type=int, help="retry-jitter seed")
    sp.set_defaults(func=cmd_judge)

    sp = common(add("metaeval", help="agreement of mother verdicts with human labels"), multi=True)
    sp.add_argument("--annotations", help="labels (JSON lines); default: config")
    sp.add_argument("--mother")
    sp.set_defaults(func=cmd_metaeval)

    sp = common(add("agreement", help="Cohen's kappa between two annotators"), run_ids=False)
    sp.add_argument("first")
    sp.add_argument("second")
    sp.add_argument("--attributes", action="append")
    sp.set_defaults(func=cmd_agreement)

    sp = common(add("report", help="scorecards, robustness and cost tables with figures"), multi=True)
    sp.add_argument("--annotations", help="labels (JSON lines); default: config")
    sp.add_argument("--mother")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_report)

    sp = common(add("select", help="recommend keeping or switching the production model"), multi=True)
    sp.add_argument("--annotations", help="labels (JSON lines); default: config")
    sp.add_argument("--mother")
    sp.add_argument("--current", help="current production model id (default: config)")
    sp.set_defaults(func=cmd_select)

    sp = add("toy", help="copy the bundled 12-creative toy workspace")
    sp.add_argument("--out", help="destination directory (default: ./toy)")
    sp.set_defaults(func=cmd_toy)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotFound, StoreError, SchemaError, MissingReference, NoEligibleModel, EmptyJudgeSet, KeyError,
            ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
