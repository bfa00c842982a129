"""Report bundle: scorecards, robustness tables, cost/latency summary, and figures.

Figures are rendered with the Agg backend and saved without a software
stamp, so rerunning on the same archive rewrites byte-identical files.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .backends import DISPLAY_NAMES, ModelSpec  # noqa: E402
from .engine import EvaluationRun  # noqa: E402
from .judge import JudgeReport  # noqa: E402
from .metrics import (MissingReference, ModelScorecard, RobustnessTable, cost_summary, robustness_table,  # noqa: E402
                      scorecard, scorecards_csv, split_by_augmentation)
from .store import AnnotationSet  # noqa: E402

log = logging.getLogger(__name__)

_PNG_META = {"Software": None}


def merge_runs(runs: Sequence[EvaluationRun]) -> EvaluationRun:
    """Union of several runs (e.g. a baseline run and a run over its variants)."""
    if len(runs) == 1:
        return runs[0]
    first = runs[0]
    creatives, seen = [], set()
    outcomes = {}
    models = list(dict.fromkeys(m for r in runs for m in r.model_ids))
    for r in runs:
        for c in r.creatives:
            if c.creative_id not in seen:
                seen.add(c.creative_id)
                creatives.append(c)
        outcomes.update(r.outcomes)
    return EvaluationRun("+".join(r.run_id for r in runs), first.dataset_ref, models, first.suite, creatives,
                         outcomes, first.started, runs[-1].finished, first.prompt_version, first.prompt_hash)


def _label(model_id: str) -> str:
    return DISPLAY_NAMES.get(model_id, model_id)


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_cost(cards: Sequence[ModelScorecard], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [_label(c.model_id) for c in cards]
    ax.bar(names, [c.mean_cost for c in cards], color="#4C72B0")
    ax.set_ylabel("USD per image")
    ax.set_title("Cost per image")
    ax.tick_params(axis="x", labelrotation=20)
    fig.tight_layout()
    _save(fig, path)


def plot_latency(cards: Sequence[ModelScorecard], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [_label(c.model_id) for c in cards]
    ax.bar(names, [c.mean_latency for c in cards], color="#DD8452")
    ax.set_ylabel("seconds per image")
    ax.set_title("Mean latency")
    ax.tick_params(axis="x", labelrotation=20)
    fig.tight_layout()
    _save(fig, path)


def plot_accuracy_heatmap(cards: Sequence[ModelScorecard], path: Path) -> None:
    attrs = list(dict.fromkeys(a for c in cards for a in c.per_attribute))
    grid = np.array([[c.per_attribute.get(a, np.nan) for c in cards] for a in attrs], dtype=float)
    fig, ax = plt.subplots(figsize=(1.6 + 1.3 * len(cards), 0.9 + 0.35 * len(attrs)))
    im = ax.imshow(grid, vmin=0, vmax=100, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(cards)), [_label(c.model_id) for c in cards], rotation=20)
    ax.set_yticks(range(len(attrs)), attrs)
    for i in range(len(attrs)):
        for j in range(len(cards)):
            if not math.isnan(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center",
                        color="white" if grid[i, j] < 60 else "black", fontsize=8)
    fig.colorbar(im, ax=ax, label="accuracy (%)")
    ax.set_title("Accuracy per attribute")
    fig.tight_layout()
    _save(fig, path)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


def write_report(out_dir: str | Path, run: EvaluationRun, *, specs: Mapping[str, ModelSpec] | None = None,
                 annotations: AnnotationSet | None = None, judge_reports: Sequence[JudgeReport] = (),
                 mother_model_id: str | None = None, ocr_threshold: float = 0.8,
                 figures: bool = True) -> dict:
    """Write the report files into ``out_dir`` and return the JSON summary.

    Scorecards use the human labels when given, else the mother verdicts.
    Robustness tables are produced for every model that has variant reports.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    baseline, variants = split_by_augmentation(run)
    summary: dict = {"run_id": run.run_id, "files": []}

    def emit(name: str, text: str) -> None:
        (out / name).write_text(text, encoding="utf-8")
        summary["files"].append(name)

    cards: list[ModelScorecard] = []
    if annotations is not None:
        cards = scorecard(baseline, annotations, specs=specs, ocr_threshold=ocr_threshold)
        summary["reference"] = f"annotations:{annotations.annotator_id}"
    elif judge_reports:
        cards = scorecard(baseline, judge_reports, specs=specs, ocr_threshold=ocr_threshold,
                          mother_model_id=mother_model_id)
        summary["reference"] = f"judge:{mother_model_id or 'any'}"
    if cards:
        emit("scorecards.csv", scorecards_csv(cards))
        summary["scorecards"] = [c.to_dict() for c in cards]

    if judge_reports and annotations is not None:
        judged = scorecard(baseline, judge_reports, specs=specs, ocr_threshold=ocr_threshold,
                           mother_model_id=mother_model_id)
        emit("judge_scorecards.csv", scorecards_csv(judged))
        summary["judge_scorecards"] = [c.to_dict() for c in judged]

    costs = cost_summary(baseline, specs)
    if costs:
        header = "model_id,n_images,total_cost,mean_cost_per_image,mean_latency,mean_input_tokens,mean_output_tokens\n"
        rows = "".join(f"{c.model_id},{c.n_images},{c.total_cost:.6f},{c.mean_cost_per_image:.6f},"
                       f"{c.mean_latency:.3f},{c.mean_input_tokens:.1f},{c.mean_output_tokens:.1f}\n" for c in costs)
        emit("cost_summary.csv", header + rows)
        summary["cost_summary"] = [asdict(c) for c in costs]

    if variants and annotations is not None:
        tables: list[RobustnessTable] = []
        for model_id in run.model_ids:
            per_kind = {k: r for k, r in variants.items() if r.reports(model_id)}
            if not per_kind or not baseline.reports(model_id):
                continue
            try:
                tables.append(robustness_table(baseline, per_kind, annotations, model_id=model_id,
                                               ocr_threshold=ocr_threshold))
            except MissingReference as exc:
                log.warning("robustness table for %s skipped: %s", model_id, exc)
        for t in tables:
            emit(f"robustness_{t.model_id}.csv", t.to_csv())
        if tables:
            summary["robustness"] = [t.to_dict() for t in tables]

    if figures and cards:
        plot_cost(cards, out / "cost_per_image.png")
        plot_accuracy_heatmap(cards, out / "accuracy_heatmap.png")
        plot_latency(cards, out / "latency.png")
        summary["files"] += ["cost_per_image.png", "accuracy_heatmap.png", "latency.png"]

    summary["files"] = sorted(summary["files"] + ["report.json"])
    _dump(out / "report.json", summary)
    return summary
