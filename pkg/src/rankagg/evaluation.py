"""Accuracy metrics and the synthetic parameter-sweep harness."""

from __future__ import annotations

import logging
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import baselines
from .em import EmConfig, fit
from .errors import EvaluationError
from .perm import Permutation
from .synth import SynthConfig, gen_dataset

log = logging.getLogger(__name__)

ALL_METHODS = ("lac",) + baselines.METHODS
SWEEPABLE = ("R", "I", "eta", "J", "e")
DEFAULT_GRIDS: dict[str, tuple] = {
    "R": (3, 4, 5, 6, 7),
    "I": (100, 200, 300, 400, 500),
    "eta": (0.3, 0.4, 0.5, 0.6, 0.7),
    "J": (10, 12, 14, 16, 18),
    "e": (0.1, 0.3, 0.5, 0.7, 0.9),
}
RAW_COLUMNS = ("method", "param", "value", "trial", "accuracy")
SUMMARY_COLUMNS = ("method", "param", "value", "n", "mean", "std")


def _as_items(p) -> tuple[int, ...]:
    return tuple(p.items) if isinstance(p, Permutation) else tuple(p)


def positionwise_accuracy(predicted: Mapping[str, Sequence[int]], truth: Mapping[str, Sequence[int]]) -> float:
    """Fraction of (problem, position) slots where the predicted item equals the true one."""
    if not truth:
        raise EvaluationError("no problems to evaluate")
    if set(predicted) != set(truth):
        missing = sorted(set(truth) - set(predicted))
        extra = sorted(set(predicted) - set(truth))
        raise EvaluationError(f"key mismatch: {len(missing)} missing {missing[:3]}, {len(extra)} unexpected {extra[:3]}")
    hits = total = 0
    for pid, t in truth.items():
        t, p = _as_items(t), _as_items(predicted[pid])
        if len(t) != len(p):
            raise EvaluationError(f"problem {pid!r}: rank lengths differ ({len(p)} vs {len(t)})")
        hits += sum(a == b for a, b in zip(p, t))
        total += len(t)
    return hits / total


def ability_estimation_error(true_mats: Mapping[str, np.ndarray], est_mats: Mapping[str, np.ndarray]) -> float:
    """Mean absolute entrywise gap between true and estimated ability matrices over all annotators."""
    if set(true_mats) != set(est_mats):
        raise EvaluationError("annotator sets differ between true and estimated matrices")
    if not true_mats:
        raise EvaluationError("no matrices to compare")
    total, R = 0.0, None
    for a, t in true_mats.items():
        t = np.asarray(getattr(t, "entries", t), dtype=float)
        e = np.asarray(getattr(est_mats[a], "entries", est_mats[a]), dtype=float)
        if t.shape != e.shape or t.ndim != 2 or (R is not None and t.shape[0] != R):
            raise EvaluationError(f"dimension mismatch for annotator {a!r}: {t.shape} vs {e.shape}")
        R = t.shape[0]
        total += np.abs(t - e).sum()
    return total / (R * R * len(true_mats))


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple
    base: SynthConfig = field(default_factory=SynthConfig)
    trials: int = 5
    methods: tuple[str, ...] = ALL_METHODS
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        if self.param not in SWEEPABLE:
            raise ValueError(f"cannot sweep {self.param!r}; choose from {SWEEPABLE}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        bad = set(self.methods) - set(ALL_METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    @classmethod
    def default_grid(cls, param: str, **kwargs) -> "SweepSpec":
        return cls(param=param, values=DEFAULT_GRIDS[param], **kwargs)

    def cell_config(self, value, trial: int) -> SynthConfig:
        # distinct trials get distinct seeds; the grid value is already part of the config
        cast = int if self.param in ("R", "I", "J") else float
        return replace(self.base, **{self.param: cast(value)}, seed=self.base.seed + trial)


def run_method(method: str, dataset, em: EmConfig = EmConfig(), seed: int = 0):
    if method == "lac":
        return fit(dataset, em).inferred_ranks
    return baselines.aggregate(dataset, method, seed=seed)


def _run_cell(spec: SweepSpec, value, trial: int) -> list[dict]:
    config = spec.cell_config(value, trial)
    synth = gen_dataset(config)
    rows = []
    for method in spec.methods:
        try:
            pred = run_method(method, synth.dataset, spec.em, seed=config.seed)
            acc = positionwise_accuracy(pred, synth.dataset.ground_truth)
        except Exception as exc:  # a failed cell is recorded, the sweep goes on
            log.warning("%s failed at %s=%s trial %d: %s", method, spec.param, value, trial, exc)
            acc = None
        rows.append({"method": method, "param": spec.param, "value": value, "trial": trial, "accuracy": acc})
    return rows


def default_workers() -> int:
    env = os.environ.get("RANKAGG_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list[dict]:
    """Raw result rows (one per method, grid value and trial), in grid order regardless of ``workers``."""
    cells = [(v, t) for v in spec.values for t in range(spec.trials)]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(cells) == 1:
        chunks = [_run_cell(spec, v, t) for v, t in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, [spec] * len(cells), *zip(*cells)))
    return [row for chunk in chunks for row in chunk]


def summarize(rows: Iterable[dict]) -> list[dict]:
    """Mean and sample standard deviation per (method, value); failed trials are excluded from ``n``."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        key = (row["method"], row["param"], row["value"])
        groups.setdefault(key, [])
        if row["accuracy"] is not None:
            groups[key].append(row["accuracy"])
    out = []
    for (method, param, value), accs in groups.items():
        mean = statistics.fmean(accs) if accs else None
        std = statistics.stdev(accs) if len(accs) > 1 else (0.0 if accs else None)
        out.append({"method": method, "param": param, "value": value, "n": len(accs), "mean": mean, "std": std})
    return out
