"""Agreement statistics, cost/latency accounting, scorecards, robustness tables and model selection."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .augment import AugmentationKind
from .backends import MODELS, ModelSpec
from .engine import EvaluationRun
from .judge import DEFAULT_OCR_THRESHOLD, JudgeReport, ocr_similarity
from .schema import AttributeKind, AttributeValue, ComplianceReport, TokenUsage
from .store import AnnotationSet


class LengthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class MissingReference(LookupError):
    def __init__(self, creative_id: str, attribute: str):
        super().__init__(f"no reference for creative {creative_id!r}, attribute {attribute!r}")
        self.creative_id = creative_id
        self.attribute = attribute


class MissingVariant(LookupError):
    pass


class NoEligibleModel(ValueError):
    pass


# --- agreement ---------------------------------------------------------------------------------------------------


def _label_key(label: Hashable):
    return type(label).__name__, repr(label)


@dataclass(frozen=True)
class AgreementStats:
    categories: tuple
    confusion: tuple[tuple[int, ...], ...]  # rows: rater A, columns: rater B
    p_o: float
    p_e: float
    kappa: float
    n: int
    kappa_undefined: bool = False

    @property
    def accuracy(self) -> float:
        return self.p_o

    def to_dict(self) -> dict:
        return {"categories": [c if isinstance(c, (str, int, float, bool)) or c is None else repr(c)
                               for c in self.categories],
                "confusion": [list(r) for r in self.confusion], "p_o": self.p_o, "p_e": self.p_e,
                "kappa": self.kappa, "accuracy": self.accuracy, "n": self.n,
                "kappa_undefined": self.kappa_undefined}


def _check_pair(labels_a: Sequence, labels_b: Sequence) -> None:
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"label vectors differ in length: {len(labels_a)} vs {len(labels_b)}")
    if not labels_a:
        raise EmptyInput("label vectors are empty")


def cohen_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> AgreementStats:
    """Cohen's kappa between two raters over a shared label alphabet.

    When both raters use one and the same label throughout, expected agreement
    is 1 and kappa is undefined; it is then reported as 1.0 with
    ``kappa_undefined`` set.
    """
    _check_pair(labels_a, labels_b)
    categories = tuple(sorted(set(labels_a) | set(labels_b), key=_label_key))
    index = {c: i for i, c in enumerate(categories)}
    k, n = len(categories), len(labels_a)
    ia = np.fromiter((index[x] for x in labels_a), dtype=np.int64, count=n)
    ib = np.fromiter((index[x] for x in labels_b), dtype=np.int64, count=n)
    confusion = np.bincount(ia * k + ib, minlength=k * k).reshape(k, k)
    agreed = int(np.trace(confusion))
    rows, cols = confusion.sum(axis=1), confusion.sum(axis=0)
    chance = sum(int(r) * int(c) for r, c in zip(rows, cols))
    p_o = agreed / n
    p_e = chance / (n * n)
    if chance == n * n:
        kappa, undefined = (1.0 if agreed == n else math.nan), True
    else:
        kappa, undefined = (p_o - p_e) / (1.0 - p_e), False
    return AgreementStats(categories, tuple(tuple(int(v) for v in row) for row in confusion), p_o, p_e, kappa, n,
                          undefined)


def accuracy(labels_a: Sequence, labels_b: Sequence) -> float:
    _check_pair(labels_a, labels_b)
    return sum(1 for x, y in zip(labels_a, labels_b) if x == y) / len(labels_a)


def _hashable(value: AttributeValue) -> Hashable:
    v = value.value
    return tuple(s.casefold() for s in v) if isinstance(v, tuple) else v


def annotator_agreement(a: AnnotationSet, b: AnnotationSet, attributes: Iterable[str] | None = None) -> AgreementStats:
    """Kappa between two annotators over the (creative, attribute) keys both labelled."""
    wanted = set(attributes) if attributes is not None else None
    keys = sorted(k for k in a.labels.keys() & b.labels.keys() if wanted is None or k[1] in wanted)
    if not keys:
        raise EmptyInput(f"annotators {a.annotator_id!r} and {b.annotator_id!r} share no labels")
    return cohen_kappa([_hashable(a.labels[k]) for k in keys], [_hashable(b.labels[k]) for k in keys])


# --- answer comparison -------------------------------------------------------------------------------------------


def values_agree(hypothesis: AttributeValue, reference: AttributeValue,
                 ocr_threshold: float = DEFAULT_OCR_THRESHOLD) -> bool:
    """Whether a model answer matches a reference label of the same kind.

    Booleans and sectors compare exactly; free text by token cosine
    similarity; phrase lists as case-folded sets; colour lists on the
    reference's dominant colour; suggestions on presence only.
    """
    if hypothesis.kind is not reference.kind:
        return False
    kind = reference.kind
    h, r = hypothesis.value, reference.value
    if kind in (AttributeKind.BOOLEAN, AttributeKind.POSITION_SECTOR):
        return h == r
    if kind is AttributeKind.TEXT:
        return ocr_similarity(r, h) >= ocr_threshold
    if kind is AttributeKind.TEXT_LIST:
        return {s.casefold() for s in h} == {s.casefold() for s in r}
    if kind is AttributeKind.COLOR_LIST:
        if not r:
            return not h
        return r[0].casefold() in {c.casefold() for c in h}
    return bool(h.strip()) == bool(r.strip())


# --- cost --------------------------------------------------------------------------------------------------------


def cost_of(usage: TokenUsage, spec: ModelSpec) -> float:
    """USD for one call at the spec's per-million-token rates (no rounding)."""
    return (usage.input_tokens * spec.input_rate + usage.output_tokens * spec.output_rate) / 1_000_000


@dataclass(frozen=True)
class CostRecord:
    model_id: str
    usage: TokenUsage
    cost_usd: float
    latency: float

    @classmethod
    def of(cls, report: ComplianceReport, spec: ModelSpec) -> "CostRecord":
        return cls(report.model_id, report.usage, cost_of(report.usage, spec), report.latency)


def cost_reduction_factor(expensive_per_image: float, cheap_per_image: float) -> float:
    if cheap_per_image <= 0:
        raise ValueError("cheaper per-image cost must be positive")
    return expensive_per_image / cheap_per_image


def _spec_for(model_id: str, specs: Mapping[str, ModelSpec] | None) -> ModelSpec | None:
    if specs and model_id in specs:
        return specs[model_id]
    return MODELS.get(model_id)


@dataclass(frozen=True)
class CostSummary:
    model_id: str
    n_images: int
    total_cost: float
    mean_cost_per_image: float
    mean_latency: float
    mean_input_tokens: float
    mean_output_tokens: float


def cost_summary(run: EvaluationRun, specs: Mapping[str, ModelSpec] | None = None) -> list[CostSummary]:
    out = []
    for model_id in run.model_ids:
        reports = run.reports(model_id)
        spec = _spec_for(model_id, specs)
        if not reports:
            continue
        costs = [cost_of(r.usage, spec) if spec else math.nan for r in reports]
        n = len(reports)
        out.append(CostSummary(model_id, n, math.fsum(costs), math.fsum(costs) / n,
                               math.fsum(r.latency for r in reports) / n,
                               sum(r.usage.input_tokens for r in reports) / n,
                               sum(r.usage.output_tokens for r in reports) / n))
    return out


# --- scorecards --------------------------------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelScorecard:
    model_id: str
    per_attribute: Mapping[str, float]  # percent
    mean_accuracy: float
    median_accuracy: float
    mean_cost: float  # USD per image
    mean_latency: float  # seconds
    n_reports: int = 0

    def to_dict(self) -> dict:
        return asdict(self) | {"per_attribute": dict(self.per_attribute)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelScorecard":
        return cls(d["model_id"], dict(d.get("per_attribute", {})), d["mean_accuracy"], d.get("median_accuracy", math.nan),
                   d["mean_cost"], d["mean_latency"], d.get("n_reports", 0))


def _summarize(model_id: str, per_attribute: dict[str, float], reports: Sequence[ComplianceReport],
               spec: ModelSpec | None) -> ModelScorecard:
    values = list(per_attribute.values())
    mean = math.fsum(values) / len(values) if values else math.nan
    median = statistics.median(values) if values else math.nan
    n = len(reports)
    cost = math.fsum(cost_of(r.usage, spec) for r in reports) / n if spec and n else math.nan
    latency = math.fsum(r.latency for r in reports) / n if n else math.nan
    return ModelScorecard(model_id, per_attribute, mean, median, cost, latency, n)


def _reference_id(run: EvaluationRun, creative_id: str) -> str:
    try:
        c = run.creative(creative_id)
    except KeyError:
        return creative_id
    return c.variant_of or creative_id


def attribute_accuracy(run: EvaluationRun, model_id: str, annotations: AnnotationSet, attribute: str,
                       ocr_threshold: float = DEFAULT_OCR_THRESHOLD) -> float:
    reports = run.reports(model_id)
    if not reports:
        return math.nan
    hits = 0
    for r in reports:
        ref = annotations.get(_reference_id(run, r.creative_id), attribute)
        if ref is None:
            raise MissingReference(r.creative_id, attribute)
        hits += values_agree(r.results[attribute], ref, ocr_threshold)
    return 100.0 * hits / len(reports)


def scorecard(run: EvaluationRun, reference: AnnotationSet | Sequence[JudgeReport], *,
              specs: Mapping[str, ModelSpec] | None = None, attributes: Sequence[str] | None = None,
              ocr_threshold: float = DEFAULT_OCR_THRESHOLD, mother_model_id: str | None = None) -> list[ModelScorecard]:
    """Per-model accuracy (percent) per attribute, with mean, median, cost and latency.

    ``reference`` is either human labels or mother judge reports. With labels,
    the scored attributes are those the labels cover (or ``attributes``); with
    judge reports, those the mother judged, and abstentions are skipped.
    """
    suite_names = [a.name for a in run.suite]
    cards = []
    if isinstance(reference, AnnotationSet):
        covered = set(reference.attributes)
        names = list(attributes) if attributes is not None else [n for n in suite_names if n in covered]
        for model_id in run.model_ids:
            per_attr = {n: attribute_accuracy(run, model_id, reference, n, ocr_threshold) for n in names}
            per_attr = {k: v for k, v in per_attr.items() if not math.isnan(v)}
            cards.append(_summarize(model_id, per_attr, run.reports(model_id), _spec_for(model_id, specs)))
        return cards

    judged = [j for j in reference if mother_model_id is None or j.mother_model_id == mother_model_id]
    by_key = {(j.creative_id, j.child_model_id): j for j in judged}
    for model_id in run.model_ids:
        reports = run.reports(model_id)
        scores: dict[str, list[float]] = defaultdict(list)
        for r in reports:
            j = by_key.get((r.creative_id, model_id))
            if j is None:
                raise MissingReference(r.creative_id, "*")
            for name, verdict in j.verdicts.items():
                scores[name].append(verdict.score)
        names = list(attributes) if attributes is not None else [n for n in suite_names if n in scores]
        per_attr = {n: 100.0 * math.fsum(scores[n]) / len(scores[n]) for n in names if scores.get(n)}
        cards.append(_summarize(model_id, per_attr, reports, _spec_for(model_id, specs)))
    return cards


def scorecards_csv(cards: Sequence[ModelScorecard]) -> str:
    names = list(dict.fromkeys(n for c in cards for n in c.per_attribute))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter"] + [c.model_id for c in cards])
    for n in names:
        w.writerow([n] + [_fmt(c.per_attribute.get(n)) for c in cards])
    w.writerow(["Average"] + [_fmt(c.mean_accuracy) for c in cards])
    w.writerow(["Median"] + [_fmt(c.median_accuracy) for c in cards])
    w.writerow(["Cost per image (USD)"] + [_fmt(c.mean_cost, 6) for c in cards])
    w.writerow(["Mean latency (s)"] + [_fmt(c.mean_latency, 3) for c in cards])
    return buf.getvalue()


def _fmt(v: float | None, digits: int = 2) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.{digits}f}"


# --- meta-evaluation ---------------------------------------------------------------------------------------------


def metaeval(run: EvaluationRun, judge_reports: Sequence[JudgeReport], annotations: AnnotationSet, *,
             threshold: float = DEFAULT_OCR_THRESHOLD) -> dict[str, dict[str, AgreementStats]]:
    """Agreement between mother verdicts and human-derived correctness, per mother and attribute.

    The human side of each pair is whether the child's answer matches the
    label; the mother side is the verdict (scalars binarized at ``threshold``).
    """
    reports = {(o.creative_id, o.model_id): o.report for o in run.outcomes.values() if o.report is not None}
    pairs: dict[str, dict[str, tuple[list, list]]] = defaultdict(lambda: defaultdict(lambda: ([], [])))
    for j in judge_reports:
        report = reports.get((j.creative_id, j.child_model_id))
        if report is None:
            continue
        for name in sorted(j.verdicts):
            ref = annotations.get(_reference_id(run, j.creative_id), name)
            if ref is None:
                raise MissingReference(j.creative_id, name)
            human, mother = pairs[j.mother_model_id][name]
            human.append(values_agree(report.results[name], ref, threshold))
            mother.append(j.verdicts[name].is_correct(threshold))
    return {m: {a: cohen_kappa(mother, human) for a, (human, mother) in sorted(per.items())}
            for m, per in sorted(pairs.items())}


def metaeval_csv(results: Mapping[str, Mapping[str, AgreementStats]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mother_model_id", "attribute", "n", "accuracy", "kappa", "kappa_undefined"])
    for mother, per in results.items():
        for attr, s in per.items():
            w.writerow([mother, attr, s.n, f"{s.accuracy:.4f}", f"{s.kappa:.4f}", s.kappa_undefined])
    return buf.getvalue()


# --- robustness --------------------------------------------------------------------------------------------------

ROBUSTNESS_METRICS = {
    "Logo Position": "Logo Pos.",
    "Logo Detection": "Logo Det.",
    "Human Presence": "Human Pres.",
    "Face Detection": "Face Det.",
    "OCR Text": "OCR",
    "Primary Color": "Color Score",
}

# (kind, metric) cells reported as not applicable.
DEFAULT_NOT_APPLICABLE = frozenset({
    (AugmentationKind.ROTATED, "Logo Position"),
    (AugmentationKind.GRAYSCALE, "Primary Color"),
})

BASELINE_ROW = "Actual"


@dataclass(frozen=True)
class RobustnessTable:
    model_id: str
    metrics: tuple[str, ...]
    rows: tuple[tuple[str, tuple[float | None, ...]], ...]

    def cell(self, row: str, metric: str) -> float | None:
        for label, values in self.rows:
            if label == row:
                return values[self.metrics.index(metric)]
        raise KeyError(row)

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "metrics": list(self.metrics),
                "rows": [{"variant": label, **dict(zip(self.metrics, values))} for label, values in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant"] + [ROBUSTNESS_METRICS.get(m, m) for m in self.metrics])
        for label, values in self.rows:
            w.writerow([label] + ["-" if v is None else f"{v:.1f}" for v in values])
        return buf.getvalue()


def robustness_table(baseline_run: EvaluationRun, augmented_runs: Mapping[AugmentationKind, EvaluationRun],
                     reference: AnnotationSet, *, model_id: str | None = None,
                     metrics: Sequence[str] = tuple(ROBUSTNESS_METRICS),
                     not_applicable: Iterable[tuple[AugmentationKind, str]] = DEFAULT_NOT_APPLICABLE,
                     ocr_threshold: float = DEFAULT_OCR_THRESHOLD) -> RobustnessTable:
    model_id = model_id or baseline_run.model_ids[0]
    na = set(not_applicable)
    baseline_ids = {c.creative_id for c in baseline_run.creatives}

    def row(run: EvaluationRun, kind: AugmentationKind | None) -> tuple[float | None, ...]:
        return tuple(None if kind is not None and (kind, m) in na
                     else attribute_accuracy(run, model_id, reference, m, ocr_threshold) for m in metrics)

    rows = [(BASELINE_ROW, row(baseline_run, None))]
    for kind in AugmentationKind:
        run = augmented_runs.get(kind)
        if run is None:
            continue
        for c in run.creatives:
            if c.variant_of is None or c.variant_of not in baseline_ids:
                raise MissingVariant(f"{kind.value} creative {c.creative_id!r} does not link to a baseline creative")
        rows.append((kind.value, row(run, kind)))
    return RobustnessTable(model_id, tuple(metrics), tuple(rows))


def split_by_augmentation(run: EvaluationRun) -> tuple[EvaluationRun, dict[AugmentationKind, EvaluationRun]]:
    """Separate a mixed run into its baseline creatives and per-kind variant runs."""
    groups: dict[AugmentationKind, list[str]] = defaultdict(list)
    base = []
    for c in run.creatives:
        if c.augmentation:
            groups[AugmentationKind.parse(c.augmentation)].append(c.creative_id)
        else:
            base.append(c.creative_id)
    return run.subset(base), {k: run.subset(ids) for k, ids in groups.items()}


# --- selection ---------------------------------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionPolicy:
    """Linear trade-off: accuracy_weight * mean accuracy (percent) minus weighted
    min-max-normalized cost and latency, over models at or above the floor."""

    min_accuracy_floor: float
    accuracy_weight: float
    cost_weight: float
    latency_weight: float
    current_model_id: str

    def __post_init__(self):
        weights = (self.accuracy_weight, self.cost_weight, self.latency_weight)
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise ValueError("weights must be non-negative with at least one positive")


POLICY_PROFILES = {
    # Cost-sensitive: a few accuracy points are worth less than the full cost range.
    "cost_sensitive": dict(min_accuracy_floor=93.0, accuracy_weight=1.0, cost_weight=5.0, latency_weight=1.0),
    "accuracy_first": dict(min_accuracy_floor=0.0, accuracy_weight=1.0, cost_weight=0.1, latency_weight=0.1),
}


def policy_profile(name: str, current_model_id: str, **overrides) -> SelectionPolicy:
    return SelectionPolicy(current_model_id=current_model_id, **(POLICY_PROFILES[name] | overrides))


@dataclass(frozen=True)
class Recommendation:
    action: str  # "keep" or "switch"
    model_id: str
    current_model_id: str
    ranking: tuple[tuple[str, float], ...]
    excluded: tuple[str, ...]
    justification: str

    @property
    def switch(self) -> bool:
        return self.action == "switch"

    def to_json(self) -> str:
        d = asdict(self)
        d["ranking"] = [{"model_id": m, "score": s} for m, s in self.ranking]
        d["excluded"] = list(self.excluded)
        return json.dumps(d, indent=2, sort_keys=True)


def _minmax(values: Sequence[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def rank_models(cards: Sequence[ModelScorecard], policy: SelectionPolicy) -> list[tuple[ModelScorecard, float]]:
    eligible = [c for c in cards if c.mean_accuracy >= policy.min_accuracy_floor]
    if not eligible:
        return []
    costs = _minmax([c.mean_cost for c in eligible])
    lats = _minmax([c.mean_latency for c in eligible])
    scored = [(c, policy.accuracy_weight * c.mean_accuracy - policy.cost_weight * nc - policy.latency_weight * nl)
              for c, nc, nl in zip(eligible, costs, lats)]
    scored.sort(key=lambda cs: (-cs[1], cs[0].model_id != policy.current_model_id, -cs[0].mean_accuracy,
                                cs[0].mean_cost, cs[0].mean_latency, cs[0].model_id))
    return scored


def recommend_switch(scorecards: Sequence[ModelScorecard], policy: SelectionPolicy) -> Recommendation:
    if not scorecards:
        raise EmptyInput("no scorecards")
    ids = [c.model_id for c in scorecards]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate model ids in scorecards: {ids}")
    by_id = {c.model_id: c for c in scorecards}
    current = by_id.get(policy.current_model_id)
    if current is None:
        raise ValueError(f"current model {policy.current_model_id!r} has no scorecard")
    for c in scorecards:
        if any(math.isnan(v) for v in (c.mean_accuracy, c.mean_cost, c.mean_latency)):
            raise ValueError(f"scorecard for {c.model_id!r} has missing values")
    ranked = rank_models(scorecards, policy)
    if not ranked:
        raise NoEligibleModel(f"no model reaches the {policy.min_accuracy_floor}% accuracy floor")
    excluded = tuple(sorted(set(ids) - {c.model_id for c, _ in ranked}))
    top, top_score = ranked[0]
    switch = top.model_id != current.model_id
    scores = dict((c.model_id, s) for c, s in ranked)

    def describe(c: ModelScorecard) -> str:
        return (f"{c.model_id} (mean accuracy {c.mean_accuracy:.2f}%, ${c.mean_cost:.4f}/image, "
                f"{c.mean_latency:.2f}s)")

    if switch:
        cur = (f"current {describe(current)} scores {scores[current.model_id]:.4f}" if current.model_id in scores
               else f"current {describe(current)} is below the {policy.min_accuracy_floor}% floor")
        text = f"Switch to {describe(top)}: policy score {top_score:.4f}; {cur}."
    else:
        text = f"Keep {describe(current)}: it ranks first with policy score {top_score:.4f}."
    if excluded:
        text += f" Excluded below the {policy.min_accuracy_floor}% floor: {', '.join(excluded)}."
    return Recommendation("switch" if switch else "keep", top.model_id, current.model_id,
                          tuple((c.model_id, s) for c, s in ranked), excluded, text)
