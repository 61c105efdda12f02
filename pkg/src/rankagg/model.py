"""Datasets of listwise annotations, confusion matrices and EM model state."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import factorial
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .perm import Permutation

DEFAULT_EPS = 1e-12


@dataclass(frozen=True)
class Problem:
    problem_id: str
    R: int
    item_payloads: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Annotation:
    problem_id: str
    annotator_id: str
    rank: tuple[int, ...]
    source_line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class IndexedData:
    """Integer-coded view of an :class:`AnnotationSet` used by the numeric kernels.

    ``ranks[n]`` holds annotation ``n``'s item sequence and ``slots[n, item]``
    the 0-based slot where that annotation placed ``item``.
    """

    R: int
    problem_ids: tuple[str, ...]
    annotator_ids: tuple[str, ...]
    problem: np.ndarray
    annotator: np.ndarray
    ranks: np.ndarray
    slots: np.ndarray

    @property
    def I(self) -> int:
        return len(self.problem_ids)

    @property
    def J(self) -> int:
        return len(self.annotator_ids)

    @property
    def K(self) -> int:
        return factorial(self.R)

    @property
    def N(self) -> int:
        return len(self.problem)


@dataclass(frozen=True)
class AnnotationSet:
    problems: tuple[Problem, ...]
    annotators: tuple[str, ...]
    annotations: tuple[Annotation, ...]
    ground_truth: Mapping[str, Permutation] | None = None

    @classmethod
    def build(
        cls,
        annotations: Sequence[Annotation],
        *,
        R: int | None = None,
        problems: Sequence[Problem] | None = None,
        annotators: Sequence[str] | None = None,
        ground_truth: Mapping[str, Sequence[int]] | None = None,
    ) -> "AnnotationSet":
        """Assemble a dataset, deriving problem and annotator rosters in first-seen order when omitted."""
        annotations = tuple(annotations)
        if problems is None:
            if R is None:
                R = len(annotations[0].rank) if annotations else 0
            seen = dict.fromkeys(a.problem_id for a in annotations)
            problems = [Problem(pid, R) for pid in seen]
        if annotators is None:
            annotators = list(dict.fromkeys(a.annotator_id for a in annotations))
        truth = None
        if ground_truth is not None:
            truth = {pid: r if isinstance(r, Permutation) else Permutation(tuple(r)) for pid, r in ground_truth.items()}
        return cls(tuple(problems), tuple(annotators), annotations, truth)

    @property
    def R(self) -> int:
        return self.problems[0].R

    @property
    def problem_ids(self) -> tuple[str, ...]:
        return tuple(p.problem_id for p in self.problems)

    def annotations_for(self, problem_id: str) -> list[Annotation]:
        return [a for a in self.annotations if a.problem_id == problem_id]

    @cached_property
    def indexed(self) -> IndexedData:
        pidx = {p.problem_id: i for i, p in enumerate(self.problems)}
        aidx = {a: j for j, a in enumerate(self.annotators)}
        R = self.R
        N = len(self.annotations)
        ranks = np.array([a.rank for a in self.annotations], dtype=np.int64).reshape(N, R)
        slots = np.empty_like(ranks)
        slots[np.arange(N)[:, None], ranks] = np.arange(R)[None, :]
        return IndexedData(
            R=R,
            problem_ids=self.problem_ids,
            annotator_ids=self.annotators,
            problem=np.array([pidx[a.problem_id] for a in self.annotations], dtype=np.int64),
            annotator=np.array([aidx[a.annotator_id] for a in self.annotations], dtype=np.int64),
            ranks=ranks,
            slots=slots,
        )


def _where(a: Annotation) -> str:
    return f"line {a.source_line}: " if a.source_line is not None else ""


def validate(dataset: AnnotationSet) -> AnnotationSet:
    """Return ``dataset`` unchanged if well formed, else raise :class:`ValidationError` listing every violation."""
    errors: list[str] = []
    if not dataset.problems:
        errors.append("dataset has no problems")
        raise ValidationError(errors)

    Rs = {p.R for p in dataset.problems}
    if len(Rs) > 1:
        errors.append(f"inconsistent item counts across problems: {sorted(Rs)}")
    R = dataset.problems[0].R
    if R < 2:
        errors.append(f"R must be at least 2, got {R}")

    problem_ids = [p.problem_id for p in dataset.problems]
    if len(set(problem_ids)) != len(problem_ids):
        errors.append("duplicate problem ids")
    if len(set(dataset.annotators)) != len(dataset.annotators):
        errors.append("duplicate annotator ids")
    for p in dataset.problems:
        if p.item_payloads is not None and len(p.item_payloads) != p.R:
            errors.append(f"problem {p.problem_id!r}: {len(p.item_payloads)} payloads for R={p.R}")

    known_p = set(problem_ids)
    known_a = set(dataset.annotators)
    seen: set[tuple[str, str]] = set()
    counts = dict.fromkeys(problem_ids, 0)
    target = list(range(R))
    for a in dataset.annotations:
        where = _where(a)
        if a.problem_id not in known_p:
            errors.append(f"{where}unknown problem {a.problem_id!r}")
        else:
            counts[a.problem_id] += 1
        if a.annotator_id not in known_a:
            errors.append(f"{where}unknown annotator {a.annotator_id!r}")
        key = (a.problem_id, a.annotator_id)
        if key in seen:
            errors.append(f"{where}duplicate annotation by {a.annotator_id!r} on {a.problem_id!r}")
        seen.add(key)
        if sorted(a.rank) != target:
            errors.append(f"{where}invalid permutation {list(a.rank)} on {a.problem_id!r} (R={R})")

    for pid, n in counts.items():
        if n == 0:
            errors.append(f"problem {pid!r} has no annotations")

    if dataset.ground_truth is not None:
        missing = known_p - set(dataset.ground_truth)
        if missing:
            errors.append(f"ground truth missing for {len(missing)} problem(s), e.g. {sorted(missing)[0]!r}")
        for pid, perm in dataset.ground_truth.items():
            if pid not in known_p:
                errors.append(f"ground truth for unknown problem {pid!r}")
            elif len(perm) != R:
                errors.append(f"ground truth for {pid!r} has length {len(perm)}, expected {R}")

    if errors:
        raise ValidationError(errors)
    return dataset


def normalize_rows(counts: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Row-normalise the last axis, floor every entry at ``eps`` and renormalise.

    Rows with zero total mass become uniform.
    """
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=-1, keepdims=True)
    width = counts.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / width)
    probs = np.maximum(probs, eps)
    return probs / probs.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ConfusionMatrix:
    """R x R row-stochastic matrix; row = observed slot, column = true position of the item placed there."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {m.shape}")
        if np.any(m < 0) or np.any(m > 1):
            raise ValueError("confusion matrix entries must lie in [0, 1]")
        if not np.allclose(m.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise ValueError("confusion matrix rows must sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def from_counts(cls, counts, eps: float = DEFAULT_EPS) -> "ConfusionMatrix":
        return cls(normalize_rows(counts, eps))

    @classmethod
    def identity(cls, R: int) -> "ConfusionMatrix":
        return cls(np.eye(R))

    @classmethod
    def uniform(cls, R: int) -> "ConfusionMatrix":
        return cls(np.full((R, R), 1.0 / R))

    @property
    def R(self) -> int:
        return self.entries.shape[0]


@dataclass
class ModelState:
    """Parameters and responsibilities of the EM model.

    ``ability[j]`` and ``difficulty[i]`` are stacked R x R matrices aligned
    with ``annotator_ids`` and ``problem_ids``; ``posterior[i, k]`` is the
    responsibility of permutation index ``k`` for problem ``i``.
    """

    theta: np.ndarray
    ability: np.ndarray
    difficulty: np.ndarray
    posterior: np.ndarray
    problem_ids: tuple[str, ...]
    annotator_ids: tuple[str, ...]
    log_likelihood: float = float("nan")
    iteration: int = 0
    empty_annotators: tuple[str, ...] = ()

    @property
    def R(self) -> int:
        return self.ability.shape[-1]

    def ability_map(self) -> dict[str, ConfusionMatrix]:
        return {a: ConfusionMatrix(m) for a, m in zip(self.annotator_ids, self.ability)}

    def difficulty_map(self) -> dict[str, ConfusionMatrix]:
        return {p: ConfusionMatrix(m) for p, m in zip(self.problem_ids, self.difficulty)}

    def copy(self) -> "ModelState":
        return ModelState(
            theta=self.theta.copy(),
            ability=self.ability.copy(),
            difficulty=self.difficulty.copy(),
            posterior=self.posterior.copy(),
            problem_ids=self.problem_ids,
            annotator_ids=self.annotator_ids,
            log_likelihood=self.log_likelihood,
            iteration=self.iteration,
            empty_annotators=self.empty_annotators,
        )
