"""Grounding evaluation: query records, scene stores and accuracy metrics."""

from __future__ import annotations

import enum
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from ..geometry import iou_3d
from ..llm_gateway import LlmConfig, LlmError, generate_program
from ..program import ProgramError, compile_program
from ..scene import Aabb, Point3, Scene, SceneError, load_scene_file, normalize_label
from ..solver import Diagnostic, GroundingResult, SolverConfig, Status, solve

log = logging.getLogger(__name__)


class EvaluationError(RuntimeError):
    pass


class Mode(enum.Enum):
    BBOX = "bbox"
    SELECTION = "selection"


class Subset(enum.Enum):
    UNIQUE = "UNIQUE"
    MULTIPLE = "MULTIPLE"


@dataclass(frozen=True)
class QueryRecord:
    scene_id: str
    query: str
    gt_label: str
    gt_bbox: Aabb | None = None
    gt_instance_id: str | None = None
    program: str | None = None
    subset_tag: Subset | None = None
    record_id: str | None = None

    def __post_init__(self):
        if self.gt_bbox is None and self.gt_instance_id is None:
            raise EvaluationError("record needs gt_bbox or gt_instance_id")

    @classmethod
    def from_dict(cls, doc: dict) -> QueryRecord:
        try:
            bbox = doc.get("gt_bbox")
            subset = doc.get("subset_tag")
            return cls(
                scene_id=str(doc["scene_id"]),
                query=str(doc["query"]),
                gt_label=normalize_label(str(doc["gt_label"])),
                gt_bbox=Aabb(Point3(*bbox[0]), Point3(*bbox[1])) if bbox is not None else None,
                gt_instance_id=doc.get("gt_instance_id"),
                program=doc.get("program"),
                subset_tag=Subset(subset.upper()) if subset else None,
                record_id=doc.get("record_id"),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise EvaluationError(f"malformed query record: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "query": self.query,
            "gt_label": self.gt_label,
            "gt_bbox": self.gt_bbox.to_list() if self.gt_bbox else None,
            "gt_instance_id": self.gt_instance_id,
            "program": self.program,
            "subset_tag": self.subset_tag.value if self.subset_tag else None,
            "record_id": self.record_id,
        }


def load_records(path) -> list[QueryRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(QueryRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, EvaluationError) as exc:
                raise EvaluationError(f"{path}:{lineno}: {exc}") from exc
    return records


def dump_records(records: Iterable[QueryRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in records)


class SceneStore:
    """Loads `<root>/<scene_id>.json` on first use."""

    def __init__(self, root):
        self.root = Path(root)
        self._cache: dict[str, Scene] = {}

    def __contains__(self, scene_id: str) -> bool:
        return scene_id in self._cache or (self.root / f"{scene_id}.json").is_file()

    def __getitem__(self, scene_id: str) -> Scene:
        if scene_id not in self._cache:
            path = self.root / f"{scene_id}.json"
            if not path.is_file():
                raise KeyError(scene_id)
            self._cache[scene_id] = load_scene_file(path)
        return self._cache[scene_id]


@dataclass
class SubsetMetrics:
    n_total: int = 0
    n_solved: int = 0
    acc_at_025: float | None = None
    acc_at_05: float | None = None
    selection_accuracy: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MetricsReport(SubsetMetrics):
    per_subset: dict[str, SubsetMetrics] = field(default_factory=dict)
    failures: list[tuple[str, str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_solved": self.n_solved,
            "acc_at_025": self.acc_at_025,
            "acc_at_05": self.acc_at_05,
            "selection_accuracy": self.selection_accuracy,
            "per_subset": {k: v.to_dict() for k, v in sorted(self.per_subset.items())},
            "failures": [list(f) for f in self.failures],
        }


def classify_query(scene: Scene, gt_label: str) -> tuple[Subset, str | None]:
    """UNIQUE iff exactly one real instance carries `gt_label`.

    Returns the subset and a diagnostic (set when nothing matched).
    """
    n = sum(1 for inst in scene.real_instances if inst.label == gt_label)
    if n == 1:
        return Subset.UNIQUE, None
    if n == 0:
        return Subset.MULTIPLE, f"no instance labeled {gt_label!r} in scene {scene.id!r}"
    return Subset.MULTIPLE, None


def ground_text(text: str, scene: Scene, cfg: SolverConfig, seed=None) -> GroundingResult:
    """Parse, lower (lenient) and solve one program."""
    try:
        csp, diags = compile_program(text, strict=False)
    except ProgramError as exc:
        return GroundingResult(Status.INVALID_PROGRAM, diagnostics=[Diagnostic("program", str(exc))])
    result = solve(csp, scene, cfg, seed=seed)
    result.diagnostics[:0] = [Diagnostic("program", str(d)) for d in diags]
    return result


def scene_labels(scene: Scene) -> list[str]:
    """Relevant labels offered to the LLM: every distinct label in the scene."""
    real = sorted({inst.label for inst in scene.real_instances})
    virtual = sorted({inst.label for inst in scene.instances if inst.virtual} - set(real))
    return real + virtual


def _evaluate_one(index: int, rec: QueryRecord, scene: Scene, cfg: SolverConfig, mode: Mode,
                  program_for: Callable[[int, QueryRecord, Scene], str]) -> dict:
    row = {"index": index, "scene_id": rec.scene_id, "query": rec.query, "record_id": rec.record_id}
    subset, note = (rec.subset_tag, None) if rec.subset_tag else classify_query(scene, rec.gt_label)
    row["subset"] = subset.value
    if note:
        row["note"] = note
    try:
        text = program_for(index, rec, scene)
    except (LlmError, OSError) as exc:
        row.update(status="PROGRAM_UNAVAILABLE", error=str(exc), target_instance=None)
        return _score_row(row, None, rec, mode)
    seed = None if cfg.seed is None else f"{cfg.seed}:{index}"
    result = ground_text(text, scene, cfg, seed=seed)
    row.update(status=result.status.value, target_instance=result.target_instance,
               solution_count=result.solution_count)
    if not result.solved:
        row["error"] = "; ".join(d.message for d in result.diagnostics if d.stage in ("program", "domains"))[:500]
    return _score_row(row, result, rec, mode)


def _score_row(row: dict, result: GroundingResult | None, rec: QueryRecord, mode: Mode) -> dict:
    solved = result is not None and result.solved
    if mode is Mode.BBOX:
        if rec.gt_bbox is None:
            raise EvaluationError(f"record {row['index']} has no gt_bbox for bbox mode")
        iou = iou_3d(result.target_bbox, rec.gt_bbox) if solved else 0.0
        row.update(iou=iou, correct_025=iou > 0.25, correct_05=iou > 0.5)
    else:
        if rec.gt_instance_id is None:
            raise EvaluationError(f"record {row['index']} has no gt_instance_id for selection mode")
        row["correct"] = solved and result.target_instance == rec.gt_instance_id
    return row


def _aggregate(rows: Sequence[dict], mode: Mode) -> SubsetMetrics:
    m = SubsetMetrics(n_total=len(rows), n_solved=sum(r["status"] == Status.SOLVED.value for r in rows))
    if not rows:
        return m
    n = len(rows)
    if mode is Mode.BBOX:
        m.acc_at_025 = sum(r["correct_025"] for r in rows) / n
        m.acc_at_05 = sum(r["correct_05"] for r in rows) / n
    else:
        m.selection_accuracy = sum(r["correct"] for r in rows) / n
    return m


def report_from_rows(rows: Sequence[dict], mode: Mode) -> MetricsReport:
    """Recompute the report from a per-record result log."""
    total = _aggregate(rows, mode)
    report = MetricsReport(**total.__dict__)
    for subset in Subset:
        sub = [r for r in rows if r["subset"] == subset.value]
        if sub:
            report.per_subset[subset.value] = _aggregate(sub, mode)
    report.failures = [(r["scene_id"], r["query"], r["status"]) for r in rows if r["status"] != Status.SOLVED.value]
    return report


def evaluate(
    records: Sequence[QueryRecord],
    scenes: Mapping[str, Scene] | SceneStore,
    cfg: SolverConfig | None = None,
    mode: Mode = Mode.BBOX,
    programs_dir=None,
    llm: LlmConfig | None = None,
    jobs: int = 1,
) -> tuple[MetricsReport, list[dict]]:
    """Ground every record and score it.

    Programs come from the record itself, then `programs_dir/<record_id or
    index>.txt`, then the LLM. Queries that fail at any stage count as
    incorrect.
    """
    cfg = cfg or SolverConfig()
    if not records:
        raise EvaluationError("no records")
    for rec in records:
        if rec.scene_id not in scenes:
            raise EvaluationError(f"missing scene {rec.scene_id!r}")
    loaded = {}
    for rec in records:
        try:
            loaded[rec.scene_id] = scenes[rec.scene_id]
        except SceneError as exc:
            raise EvaluationError(f"scene {rec.scene_id!r}: {exc}") from exc

    def program_for(index: int, rec: QueryRecord, scene: Scene) -> str:
        if rec.program is not None:
            return rec.program
        if programs_dir is not None:
            path = Path(programs_dir) / f"{rec.record_id or index}.txt"
            if path.is_file() or llm is None:
                return path.read_text(encoding="utf-8")
        if llm is not None:
            return generate_program(llm, rec.query, scene_labels(scene))
        raise EvaluationError(f"record {index}: no program and no LLM configured")

    if not (all(r.program is not None for r in records) or programs_dir is not None or llm is not None):
        raise EvaluationError("records lack programs and neither --programs nor --llm was given")

    def work(i: int) -> dict:
        rec = records[i]
        return _evaluate_one(i, rec, loaded[rec.scene_id], cfg, mode, program_for)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(work, range(len(records))))
    else:
        rows = [work(i) for i in range(len(records))]
    rows.sort(key=lambda r: r["index"])
    for r in rows:
        if r["status"] != Status.SOLVED.value:
            log.info("record %d (%s) failed: %s", r["index"], r["scene_id"], r.get("error", r["status"]))
    return report_from_rows(rows, mode), rows


def write_report(report: MetricsReport, rows: Sequence[dict], out_path) -> tuple[str, str]:
    """Write the report and the per-record log next to it."""
    out_path = str(out_path)
    base, _ = os.path.splitext(out_path)
    log_path = base + ".results.jsonl"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    with open(log_path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return out_path, log_path
