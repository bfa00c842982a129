"""Dataset and annotation loading, plus the append-only JSON-lines run archive.

Archive layout, one directory per run::

    <root>/<run_id>/header.json      run metadata, written once
    <root>/<run_id>/reports.jsonl    child outcomes (report or error records)
    <root>/<run_id>/verdicts.jsonl   mother verdicts and abstentions, one line per attribute
    <root>/<run_id>/metrics.json     derived statistics, one section per producing command

Every record carries ``run_id`` and ``schema_version``. When a key appears
more than once in a segment (a resumed or retried pair) the last record wins.
"""

from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .engine import Creative, EvaluationRun, Outcome, OutcomeError
from .judge import JudgeReport, Verdict
from .schema import (SCHEMA_VERSION, AttributeSpec, AttributeValue, ComplianceReport, TokenUsage, TypeMismatch,
                     UnknownAttribute, coerce_value)

log = logging.getLogger(__name__)

GOLD_ANNOTATOR = "gold"

HEADER = "header.json"
REPORTS = "reports.jsonl"
VERDICTS = "verdicts.jsonl"
METRICS = "metrics.json"


class StoreError(Exception):
    pass


class DuplicateId(StoreError):
    pass


class MissingImage(StoreError):
    def __init__(self, path: str):
        super().__init__(f"image not found: {path}")
        self.path = path


class NotFound(StoreError):
    pass


class CorruptSegment(StoreError):
    def __init__(self, path: Path, offset: int, reason: str):
        super().__init__(f"{path}: corrupt record at byte {offset}: {reason}")
        self.path = path
        self.offset = offset


def load_dataset(manifest: str | Path, *, check_images: bool = True) -> list[Creative]:
    """Read a JSON-lines manifest; relative image paths resolve against the manifest's directory."""
    manifest = Path(manifest)
    base = manifest.parent
    creatives, seen = [], set()
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        creative = Creative.from_dict(rec)
        if creative.creative_id in seen:
            raise DuplicateId(f"{manifest}:{lineno}: duplicate creative_id {creative.creative_id!r}")
        seen.add(creative.creative_id)
        path = Path(creative.image_path)
        if not path.is_absolute():
            path = base / path
        if check_images and not path.is_file():
            raise MissingImage(str(path))
        creatives.append(Creative(creative.creative_id, str(path), creative.caption, creative.brand_id,
                                  creative.variant_of, creative.augmentation))
    return creatives


def write_manifest(creatives: Iterable[Creative], path: str | Path, *, relative_to: str | Path | None = None) -> None:
    lines = []
    for c in creatives:
        d = c.to_dict()
        if relative_to is not None:
            d["image_path"] = os.path.relpath(c.image_path, relative_to)
        lines.append(json.dumps(d, sort_keys=True))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


@dataclass
class AnnotationSet:
    annotator_id: str
    labels: dict[tuple[str, str], AttributeValue] = field(default_factory=dict)

    def get(self, creative_id: str, attribute: str) -> AttributeValue | None:
        return self.labels.get((creative_id, attribute))

    @property
    def attributes(self) -> list[str]:
        return sorted({a for _, a in self.labels})


def load_annotations(path: str | Path, suite: Iterable[AttributeSpec], *,
                     annotator_id: str | None = None) -> AnnotationSet:
    """Load JSON-lines labels. A file may mix annotators; pass ``annotator_id`` to pick one."""
    kinds = {a.name: a.kind for a in suite}
    sets: dict[str, AnnotationSet] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        name = rec["attribute"]
        if name not in kinds:
            raise UnknownAttribute(name)
        value = AttributeValue(kinds[name], coerce_value(name, kinds[name], rec["value"]))
        who = str(rec["annotator_id"])
        sets.setdefault(who, AnnotationSet(who)).labels[(str(rec["creative_id"]), name)] = value
    if annotator_id is not None:
        if annotator_id not in sets:
            raise NotFound(f"{path}: no labels from annotator {annotator_id!r}")
        return sets[annotator_id]
    if not sets:
        raise StoreError(f"{path}: no annotations")
    if len(sets) > 1:
        if GOLD_ANNOTATOR in sets:
            return sets[GOLD_ANNOTATOR]
        raise StoreError(f"{path}: labels from several annotators {sorted(sets)}; choose one")
    return next(iter(sets.values()))


# --- archive ---------------------------------------------------------------------------------------------------


def _outcome_record(run_id: str, o: Outcome) -> dict:
    rec = {"schema_version": SCHEMA_VERSION, "run_id": run_id, "creative_id": o.creative_id,
           "model_id": o.model_id}
    if o.report is not None:
        rec["type"] = "report"
        rec["report"] = o.report.to_dict()
    else:
        e = o.error
        rec["type"] = "error"
        rec["error"] = {"error_type": e.error_type, "message": e.message, "attempt_count": e.attempt_count,
                        "usage": {"input_tokens": e.usage.input_tokens, "output_tokens": e.usage.output_tokens}}
    return rec


def _outcome_from(rec: Mapping) -> Outcome:
    if rec["type"] == "report":
        return Outcome(rec["creative_id"], rec["model_id"], report=ComplianceReport.from_dict(rec["report"]))
    e = rec["error"]
    usage = e.get("usage", {})
    return Outcome(rec["creative_id"], rec["model_id"],
                   error=OutcomeError(e["error_type"], e["message"], e.get("attempt_count", 0),
                                      TokenUsage(usage.get("input_tokens", 0), usage.get("output_tokens", 0))))


def judge_records(run_id: str, report: JudgeReport) -> list[dict]:
    base = {"schema_version": SCHEMA_VERSION, "run_id": run_id, "creative_id": report.creative_id,
            "child_model_id": report.child_model_id, "mother_model_id": report.mother_model_id}
    recs = []
    names = sorted(set(report.verdicts) | set(report.abstained))
    share = _split_usage(report.usage, len(names))
    for name, used in zip(names, share):
        rec = dict(base, attribute=name, usage={"input_tokens": used.input_tokens,
                                                "output_tokens": used.output_tokens})
        if name in report.verdicts:
            rec["type"] = "verdict"
            rec["verdict"] = report.verdicts[name].to_dict()
        else:
            rec["type"] = "abstain"
            rec["reason"] = report.abstained[name]
        recs.append(rec)
    return recs


def _split_usage(usage: TokenUsage, n: int) -> list[TokenUsage]:
    # whole usage on the first line so the per-line sum is exact
    if n == 0:
        return []
    return [usage] + [TokenUsage()] * (n - 1)


class RunArchive:
    """Single-writer, append-only store of runs under ``root``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def exists(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / HEADER).is_file()

    def run_ids(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / HEADER).is_file())

    def write_header(self, run: EvaluationRun) -> None:
        d = self.run_dir(run.run_id)
        d.mkdir(parents=True, exist_ok=True)
        header = {
            "schema_version": SCHEMA_VERSION,
            "run_id": run.run_id,
            "dataset_ref": run.dataset_ref,
            "model_ids": run.model_ids,
            "suite": [a.to_dict() for a in run.suite],
            "creatives": [c.to_dict() for c in run.creatives],
            "started": run.started,
            "finished": run.finished,
            "prompt_version": run.prompt_version,
            "prompt_hash": run.prompt_hash,
        }
        path = d / HEADER
        if path.exists():
            old = json.loads(path.read_text(encoding="utf-8"))
            volatile = ("started", "finished")
            if ({k: v for k, v in old.items() if k not in volatile}
                    != {k: v for k, v in header.items() if k not in volatile}):
                raise StoreError(f"run {run.run_id!r} exists with a different header")
            return
        path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def _append(self, run_id: str, segment: str, records: Iterable[dict]) -> int:
        if not self.exists(run_id):
            raise NotFound(f"run {run_id!r} has no header in {self.root}")
        lines = [json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records]
        if not lines:
            return 0
        with open(self.run_dir(run_id) / segment, "a", encoding="utf-8") as fh:
            fh.writelines(lines)
            fh.flush()
            os.fsync(fh.fileno())
        return len(lines)

    def append(self, record: dict, segment: str = REPORTS) -> int:
        """Append one raw record (must carry run_id); returns the count written."""
        if "run_id" not in record:
            raise StoreError("record lacks run_id")
        record = dict(record)
        record.setdefault("schema_version", SCHEMA_VERSION)
        return self._append(record["run_id"], segment, [record])

    def append_outcomes(self, run_id: str, outcomes: Iterable[Outcome]) -> int:
        return self._append(run_id, REPORTS, (_outcome_record(run_id, o) for o in outcomes))

    def append_judge_reports(self, run_id: str, reports: Iterable[JudgeReport]) -> int:
        return self._append(run_id, VERDICTS, (r for jr in reports for r in judge_records(run_id, jr)))

    def iter_segment(self, run_id: str, segment: str) -> Iterator[dict]:
        """Yield records, skipping (with a warning) any line that fails to parse."""
        path = self.run_dir(run_id) / segment
        if not path.exists():
            return
        offset = 0
        with open(path, "rb") as fh:
            for raw in fh:
                start, offset = offset, offset + len(raw)
                if not raw.strip():
                    continue
                try:
                    rec = json.loads(raw.decode("utf-8"))
                    if not isinstance(rec, dict) or rec.get("run_id") != run_id:
                        raise ValueError("not a record of this run")
                except (ValueError, UnicodeDecodeError) as exc:
                    log.warning("%s", CorruptSegment(path, start, str(exc)))
                    continue
                yield rec

    def read_header(self, run_id: str) -> dict:
        path = self.run_dir(run_id) / HEADER
        if not path.is_file():
            raise NotFound(f"run {run_id!r} not found in {self.root}")
        return json.loads(path.read_text(encoding="utf-8"))

    def read_run(self, run_id: str) -> EvaluationRun:
        header = self.read_header(run_id)
        outcomes: dict[tuple[str, str], Outcome] = {}
        for rec in self.iter_segment(run_id, REPORTS):
            o = _outcome_from(rec)
            outcomes[(o.creative_id, o.model_id)] = o
        creatives = [Creative.from_dict(c) for c in header["creatives"]]
        order = {c.creative_id: i for i, c in enumerate(creatives)}
        models = {m: i for i, m in enumerate(header["model_ids"])}
        ordered = dict(sorted(outcomes.items(), key=lambda kv: (order.get(kv[0][0], len(order)),
                                                               models.get(kv[0][1], len(models)), kv[0])))
        return EvaluationRun(run_id, header["dataset_ref"], header["model_ids"],
                             [AttributeSpec.from_dict(a) for a in header["suite"]], creatives, ordered,
                             header.get("started", ""), header.get("finished", ""),
                             header.get("prompt_version", ""), header.get("prompt_hash", ""))

    def read_judge_reports(self, run_id: str, mother_model_id: str | None = None) -> list[JudgeReport]:
        self.read_header(run_id)
        grouped: dict[tuple[str, str, str], dict] = defaultdict(lambda: {"verdicts": {}, "abstained": {},
                                                                         "usage": TokenUsage()})
        for rec in self.iter_segment(run_id, VERDICTS):
            if mother_model_id is not None and rec["mother_model_id"] != mother_model_id:
                continue
            key = (rec["creative_id"], rec["child_model_id"], rec["mother_model_id"])
            g = grouped[key]
            name = rec["attribute"]
            u = rec.get("usage", {})
            g["usage"] = g["usage"] + TokenUsage(u.get("input_tokens", 0), u.get("output_tokens", 0))
            if rec["type"] == "verdict":
                g["verdicts"][name] = Verdict.from_dict(rec["verdict"])
                g["abstained"].pop(name, None)
            else:
                g["abstained"][name] = rec.get("reason", "")
                g["verdicts"].pop(name, None)
        return [JudgeReport(c, child, mother, dict(sorted(g["verdicts"].items())), dict(sorted(g["abstained"].items())),
                            g["usage"]) for (c, child, mother), g in grouped.items()]

    def judged_keys(self, run_id: str) -> set[tuple[str, str, str, str]]:
        return {(r["creative_id"], r["child_model_id"], r["mother_model_id"], r["attribute"])
                for r in self.iter_segment(run_id, VERDICTS) if r.get("type") == "verdict"}

    def write_metrics(self, run_id: str, section: str, payload) -> None:
        """Replace one section of metrics.json (written via a temp file and rename)."""
        self.read_header(run_id)
        path = self.run_dir(run_id) / METRICS
        doc = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {
            "run_id": run_id, "schema_version": SCHEMA_VERSION}
        doc[section] = payload
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    def read_metrics(self, run_id: str) -> dict:
        path = self.run_dir(run_id) / METRICS
        return json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}


__all__ = [
    "AnnotationSet", "CorruptSegment", "DuplicateId", "GOLD_ANNOTATOR", "MissingImage", "NotFound", "RunArchive",
    "StoreError", "TypeMismatch", "UnknownAttribute", "load_annotations", "load_dataset", "write_manifest",
]
