"""Per-problem comparison aggregators: Borda count, Bradley-Terry and CondorcetFuse."""

from __future__ import annotations

import warnings
from typing import NamedTuple, Sequence

import numpy as np

from .model import AnnotationSet
from .perm import Permutation
from .synth import substream

METHODS = ("borda", "bt", "condorcet")


class ConvergenceWarning(UserWarning):
    pass


def pairwise_tally(ranks: Sequence[Sequence[int]], R: int | None = None) -> np.ndarray:
    """``tally[a, b]`` = number of ranks placing item ``a`` above item ``b``."""
    ranks = np.asarray(ranks, dtype=np.int64)
    if R is None:
        R = ranks.shape[1]
    slots = np.empty_like(ranks)
    slots[np.arange(len(ranks))[:, None], ranks] = np.arange(R)[None, :]
    return (slots[:, :, None] < slots[:, None, :]).sum(axis=0).astype(float)


def _order_by(score: np.ndarray, descending: bool) -> Permutation:
    key = -score if descending else score
    # lexsort: last key is primary, ties fall back to item label
    return Permutation(tuple(int(x) for x in np.lexsort((np.arange(len(score)), key))))


def borda(ranks: Sequence[Sequence[int]]) -> Permutation:
    """Sort items by the sum of their 1-based positions; smaller label wins ties."""
    ranks = np.asarray(ranks, dtype=np.int64)
    R = ranks.shape[1]
    score = np.zeros(R)
    np.add.at(score, ranks, np.broadcast_to(np.arange(1, R + 1), ranks.shape))
    return _order_by(score, descending=False)


class BradleyTerryFit(NamedTuple):
    ranking: Permutation
    strengths: np.ndarray
    converged: bool
    iterations: int


def fit_bradley_terry(
    tally: np.ndarray, iterations: int = 1000, tol: float = 1e-10, smoothing: float = 0.5
) -> BradleyTerryFit:
    """Minorize-maximize fit of item strengths (Hunter 2004) on a smoothed win matrix."""
    tally = np.asarray(tally, dtype=float)
    R = tally.shape[0]
    wins = tally + smoothing * (1.0 - np.eye(R))
    games = wins + wins.T
    total_wins = wins.sum(axis=1)
    p = np.full(R, 1.0 / R)
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        denom = games / (p[:, None] + p[None, :])
        np.fill_diagonal(denom, 0.0)
        p_new = total_wins / denom.sum(axis=1)
        p_new /= p_new.sum()
        delta = np.max(np.abs(p_new - p))
        p = p_new
        if delta < tol:
            converged = True
            break
    return BradleyTerryFit(_order_by(p, descending=True), p, converged, it)


def bradley_terry(tally: np.ndarray, iterations: int = 1000, tol: float = 1e-10) -> Permutation:
    result = fit_bradley_terry(tally, iterations, tol)
    if not result.converged:
        warnings.warn(f"Bradley-Terry did not converge in {iterations} iterations", ConvergenceWarning)
    return result.ranking


def condorcet_fuse(tally: np.ndarray, rng: np.random.Generator) -> Permutation:
    """Randomised quicksort with pairwise majority as comparator."""
    tally = np.asarray(tally)

    def before(a: int, b: int) -> bool:
        if tally[a, b] != tally[b, a]:
            return tally[a, b] > tally[b, a]
        return a < b

    def qsort(items: list[int]) -> list[int]:
        if len(items) <= 1:
            return items
        pivot = items[int(rng.integers(len(items)))]
        rest = [x for x in items if x != pivot]
        left = [x for x in rest if before(x, pivot)]
        right = [x for x in rest if not before(x, pivot)]
        return qsort(left) + [pivot] + qsort(right)

    return Permutation(tuple(qsort(list(range(tally.shape[0])))))


def aggregate(dataset: AnnotationSet, method: str, seed: int = 0) -> dict[str, Permutation]:
    """Run a baseline on each problem independently."""
    if method not in METHODS:
        raise ValueError(f"unknown baseline {method!r}; choose from {METHODS}")
    R = dataset.R
    by_problem: dict[str, list[tuple[int, ...]]] = {pid: [] for pid in dataset.problem_ids}
    for a in dataset.annotations:
        by_problem[a.problem_id].append(a.rank)
    rng = substream(seed, "quicksort-pivots")
    out = {}
    for pid, ranks in by_problem.items():
        if method == "borda":
            out[pid] = borda(ranks)
        elif method == "bt":
            out[pid] = bradley_terry(pairwise_tally(ranks, R))
        else:
            out[pid] = condorcet_fuse(pairwise_tally(ranks, R), rng)
    return out
