"""Line-delimited JSON dataset files, prediction files, matrix sidecars and run manifests.

Dataset file, one JSON object per line::

    {"type": "header", "format": "rankagg-dataset/1", "R": 5, "problems": 500, "annotators": ["a0", ...]}
    {"type": "problem", "problem_id": "p0", "items": ["first sentence", ...]}      # optional
    {"type": "annotation", "problem_id": "p0", "annotator_id": "a3", "rank": [2, 0, 1, 4, 3]}
    {"type": "truth", "problem_id": "p0", "rank": [0, 1, 2, 3, 4]}                  # optional

Item labels are integers ``0..R-1``.  Prediction files hold
``{"type": "prediction", "problem_id": ..., "rank": [...]}`` records.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field, is_dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import __version__
from .errors import ValidationError
from .model import Annotation, AnnotationSet, Problem, validate
from .perm import Permutation

log = logging.getLogger(__name__)

FORMAT = "rankagg-dataset/1"
_FIELDS = {
    "header": {"type", "format", "R", "problems", "annotators"},
    "problem": {"type", "problem_id", "items"},
    "annotation": {"type", "problem_id", "annotator_id", "rank"},
    "truth": {"type", "problem_id", "rank"},
    "prediction": {"type", "problem_id", "rank"},
}


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "))


def write_dataset(path, dataset: AnnotationSet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump({"type": "header", "format": FORMAT, "R": dataset.R,
                        "problems": len(dataset.problems), "annotators": list(dataset.annotators)}) + "\n")
        for p in dataset.problems:
            if p.item_payloads is not None:
                fh.write(_dump({"type": "problem", "problem_id": p.problem_id, "items": list(p.item_payloads)}) + "\n")
        for a in dataset.annotations:
            fh.write(_dump({"type": "annotation", "problem_id": a.problem_id,
                            "annotator_id": a.annotator_id, "rank": list(a.rank)}) + "\n")
        for pid, perm in (dataset.ground_truth or {}).items():
            fh.write(_dump({"type": "truth", "problem_id": pid, "rank": list(perm.items)}) + "\n")


def _records(path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError([f"line {lineno}: malformed JSON ({exc.msg})"]) from None
            if not isinstance(rec, dict):
                raise ValidationError([f"line {lineno}: record must be a JSON object"])
            yield lineno, rec


class _UnknownFieldWarner:
    def __init__(self):
        self.seen: set[tuple[str, str]] = set()

    def check(self, kind: str, rec: dict, lineno: int) -> None:
        for name in set(rec) - _FIELDS.get(kind, set()):
            if (kind, name) not in self.seen:
                self.seen.add((kind, name))
                log.warning("line %d: ignoring unknown field %r in %s record", lineno, name, kind)


def _rank(value, lineno: int, errors: list[str]) -> tuple[int, ...] | None:
    if not isinstance(value, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        errors.append(f"line {lineno}: rank must be a list of integer item labels")
        return None
    return tuple(value)


def read_dataset(path) -> AnnotationSet:
    """Parse and validate a dataset file; every violation is reported with its line number."""
    errors: list[str] = []
    warner = _UnknownFieldWarner()
    header: dict | None = None
    payloads: dict[str, tuple[str, ...]] = {}
    problem_order: dict[str, None] = {}
    annotations: list[Annotation] = []
    truth: dict[str, tuple[int, ...]] = {}
    truth_lines: dict[str, int] = {}
    for lineno, rec in _records(path):
        kind = rec.get("type")
        if kind not in _FIELDS:
            log.warning("line %d: ignoring record of unknown type %r", lineno, kind)
            continue
        warner.check(kind, rec, lineno)
        if kind == "header":
            if header is not None:
                errors.append(f"line {lineno}: duplicate header record")
            header = rec
            continue
        pid = rec.get("problem_id")
        if not isinstance(pid, str):
            errors.append(f"line {lineno}: {kind} record needs a string problem_id")
            continue
        if kind == "problem":
            payloads[pid] = tuple(str(x) for x in rec.get("items", []))
            problem_order.setdefault(pid)
        elif kind == "annotation":
            aid = rec.get("annotator_id")
            rank = _rank(rec.get("rank"), lineno, errors)
            if not isinstance(aid, str):
                errors.append(f"line {lineno}: annotation needs a string annotator_id")
            elif rank is not None:
                problem_order.setdefault(pid)
                annotations.append(Annotation(pid, aid, rank, source_line=lineno))
        elif kind == "truth":
            rank = _rank(rec.get("rank"), lineno, errors)
            if rank is not None:
                if pid in truth:
                    errors.append(f"line {lineno}: duplicate truth for {pid!r}")
                truth[pid] = rank
                truth_lines[pid] = lineno
    if header is None:
        errors.append("missing header record")
        raise ValidationError(errors)
    R = header.get("R")
    if not isinstance(R, int) or R < 2:
        errors.append(f"header: R must be an integer >= 2, got {R!r}")
        raise ValidationError(errors)
    roster = header.get("annotators")
    if roster is None:
        roster = list(dict.fromkeys(a.annotator_id for a in annotations))
    n_declared = header.get("problems")
    if n_declared is not None and n_declared != len(problem_order):
        errors.append(f"header declares {n_declared} problems, file contains {len(problem_order)}")
    gt = None
    if truth:
        gt = {}
        for pid, rank in truth.items():
            if sorted(rank) != list(range(R)):
                errors.append(f"line {truth_lines[pid]}: truth for {pid!r} is not a permutation of 0..{R - 1}")
            else:
                gt[pid] = Permutation(rank)
    problems = tuple(Problem(pid, R, payloads.get(pid)) for pid in problem_order)
    dataset = AnnotationSet(problems, tuple(roster), tuple(annotations), gt)
    try:
        validate(dataset)
    except ValidationError as exc:
        errors.extend(exc.violations)
    if errors:
        raise ValidationError(errors)
    return dataset


def read_csv_annotations(path, R: int, *, one_based: bool = False) -> AnnotationSet:
    """Adapter for tabular crowd exports with columns ``problem_id, annotator_id, rank``.

    ``rank`` is a space- or comma-separated item list; ``one_based`` shifts
    labels ``1..R`` down to ``0..R-1``.  An optional ``truth`` column, when
    filled on any row, supplies the ground-truth rank for that problem.
    """
    shift = 1 if one_based else 0
    annotations, truth = [], {}

    def parse(cell: str):
        return tuple(int(x) - shift for x in cell.replace(",", " ").split())

    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            annotations.append(Annotation(row["problem_id"], row["annotator_id"], parse(row["rank"]), source_line=lineno))
            if row.get("truth"):
                truth[row["problem_id"]] = parse(row["truth"])
    dataset = AnnotationSet.build(annotations, R=R, ground_truth=truth or None)
    return validate(dataset)


def write_predictions(path, predictions: Mapping[str, Permutation]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pid, perm in predictions.items():
            fh.write(_dump({"type": "prediction", "problem_id": pid, "rank": list(perm)}) + "\n")


def read_ranks(path, kinds: tuple[str, ...] = ("prediction", "truth")) -> dict[str, Permutation]:
    """Map problem id to rank from every record whose type is in ``kinds``."""
    out: dict[str, Permutation] = {}
    errors: list[str] = []
    for lineno, rec in _records(path):
        if rec.get("type") not in kinds:
            continue
        rank = _rank(rec.get("rank"), lineno, errors)
        pid = rec.get("problem_id")
        if rank is None or not isinstance(pid, str):
            errors.append(f"line {lineno}: bad {rec.get('type')} record")
            continue
        if sorted(rank) != list(range(len(rank))):
            errors.append(f"line {lineno}: {list(rank)} is not a permutation")
            continue
        if pid in out:
            errors.append(f"line {lineno}: duplicate rank for {pid!r}")
        out[pid] = Permutation(rank)
    if errors:
        raise ValidationError(errors)
    return out


def write_matrices(path, matrices: Mapping[str, np.ndarray]) -> None:
    """Dense row-major blocks, each preceded by a ``# R=<R> id=<id>`` header line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, m in matrices.items():
            m = np.asarray(getattr(m, "entries", m))
            fh.write(f"# R={m.shape[0]} id={key}\n")
            for row in m:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_matrices(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    i = 0
    while i < len(lines):
        head = lines[i]
        if not head.startswith("# "):
            raise ValidationError([f"{path}: expected block header at line {i + 1}, got {head[:40]!r}"])
        meta = dict(part.split("=", 1) for part in head[2:].split())
        R = int(meta["R"])
        rows = [[float(x) for x in ln.split()] for ln in lines[i + 1 : i + 1 + R]]
        out[meta["id"]] = np.array(rows)
        i += 1 + R
    return out


def write_vector(path, values: Iterable[float], header: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {header}\n")
        for v in values:
            fh.write(f"{v:.17g}\n")


def read_vector(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return np.array([float(ln) for ln in fh if ln.strip() and not ln.startswith("#")])


def write_csv(path, rows: Iterable[Mapping], columns: Iterable[str]) -> None:
    columns = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row[k]) for k in columns})


def _jsonable(obj):
    if is_dataclass(obj):
        return asdict(obj)
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    return str(obj)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str = __version__
    python: str = field(default_factory=platform.python_version)
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    wall_clock_s: float = 0.0
    timings_s: dict[str, float] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    class phase:
        def __init__(self, manifest: "RunManifest", name: str):
            self.manifest, self.name = manifest, name

        def __enter__(self):
            self.t = time.perf_counter()

        def __exit__(self, *exc):
            self.manifest.timings_s[self.name] = round(time.perf_counter() - self.t, 6)

    def timed(self, name: str) -> "RunManifest.phase":
        return RunManifest.phase(self, name)

    def write(self, path) -> None:
        self.wall_clock_s = round(time.perf_counter() - self._t0, 6)
        data = {k: v for k, v in asdict(self).items() if not k.startswith("_")}
        Path(path).write_text(json.dumps(data, indent=2, default=_jsonable) + "\n", encoding="utf-8")
