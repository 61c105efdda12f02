"""EM fitting of the listwise confusion model (LAC).

The loop alternates an E-step over all ``K = R!`` truth hypotheses of each
problem with closed-form M-steps for the permutation prior, the per-annotator
ability matrices and the per-problem difficulty matrices.  Both matrix
updates are row-normalised soft counts, and both are built from the
posterior's item-by-true-position marginals, so no step ever materialises an
``N x K x R`` tensor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError
from .likelihood import log_scores
from .model import DEFAULT_EPS, AnnotationSet, IndexedData, ModelState, normalize_rows, validate
from .perm import Permutation, encode_many, position_indicator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 500
    ll_tolerance: float = 1e-8
    posterior_tolerance: float = 1e-6
    eps: float = DEFAULT_EPS
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.ll_tolerance <= 0 or self.posterior_tolerance <= 0 or self.eps <= 0:
            raise ValueError("tolerances and eps must be positive")


@dataclass
class FitResult:
    state: ModelState
    inferred_ranks: dict[str, Permutation]
    iterations_used: int
    converged: bool
    log_likelihood_trace: list[float] = field(default_factory=list)


def _floor(p: np.ndarray, eps: float) -> np.ndarray:
    p = np.maximum(p, eps)
    return p / p.sum(axis=-1, keepdims=True)


def position_marginals(posterior: np.ndarray, R: int) -> np.ndarray:
    """(I, R, R) array: ``out[i, item, b]`` = posterior mass of ``item`` having true position ``b``."""
    return (posterior @ position_indicator(R)).reshape(-1, R, R)


def _annotation_counts(data: IndexedData, posterior: np.ndarray) -> np.ndarray:
    """(N, R, R) soft tallies ``c[n, r, b]``: mass on the item at slot ``r`` of annotation ``n`` having true position ``b``."""
    marg = position_marginals(posterior, data.R)
    return marg[data.problem[:, None], data.ranks]


def m_step_theta(posterior: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    return _floor(posterior.mean(axis=0), eps)


def m_step_ability(
    dataset: AnnotationSet, posterior: np.ndarray, eps: float = DEFAULT_EPS
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Per-annotator matrices plus the ids of annotators with no annotations (their matrices are uniform)."""
    data = dataset.indexed
    counts = np.zeros((data.J, data.R, data.R))
    np.add.at(counts, data.annotator, _annotation_counts(data, posterior))
    n_per = np.bincount(data.annotator, minlength=data.J)
    empty = tuple(a for a, n in zip(data.annotator_ids, n_per) if n == 0)
    return normalize_rows(counts, eps), empty


def m_step_difficulty(dataset: AnnotationSet, posterior: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    data = dataset.indexed
    counts = np.zeros((data.I, data.R, data.R))
    np.add.at(counts, data.problem, _annotation_counts(data, posterior))
    return normalize_rows(counts, eps)


def majority_posterior(dataset: AnnotationSet, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Soft majority vote: mass proportional to exact-match count plus ``eps`` on every permutation."""
    data = dataset.indexed
    counts = np.zeros((data.I, data.K))
    np.add.at(counts, (data.problem, encode_many(data.ranks)), 1.0)
    counts += eps
    return counts / counts.sum(axis=1, keepdims=True)


def initialize(dataset: AnnotationSet, eps: float = DEFAULT_EPS) -> ModelState:
    data = dataset.indexed
    posterior = majority_posterior(dataset, eps)
    ability, empty = m_step_ability(dataset, posterior, eps)
    return ModelState(
        theta=np.full(data.K, 1.0 / data.K),
        ability=ability,
        difficulty=m_step_difficulty(dataset, posterior, eps),
        posterior=posterior,
        problem_ids=data.problem_ids,
        annotator_ids=data.annotator_ids,
        empty_annotators=empty,
    )


def _softmax_rows(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lse = logsumexp(scores, axis=1, keepdims=True)
    return np.exp(scores - lse), lse[:, 0]


def e_step(dataset: AnnotationSet, state: ModelState) -> np.ndarray:
    posterior, _ = _e_step(dataset, state)
    return posterior


def _e_step(dataset: AnnotationSet, state: ModelState) -> tuple[np.ndarray, float]:
    scores = log_scores(dataset, state)
    if not np.all(np.isfinite(scores)):
        raise NumericalError("non-finite E-step score")
    posterior, per_problem = _softmax_rows(scores)
    return posterior, float(per_problem.sum())


def m_step(dataset: AnnotationSet, state: ModelState, posterior: np.ndarray, eps: float) -> ModelState:
    ability, empty = m_step_ability(dataset, posterior, eps)
    return ModelState(
        theta=m_step_theta(posterior, eps),
        ability=ability,
        difficulty=m_step_difficulty(dataset, posterior, eps),
        posterior=posterior,
        problem_ids=state.problem_ids,
        annotator_ids=state.annotator_ids,
        iteration=state.iteration + 1,
        empty_annotators=empty,
    )


def iterate(
    dataset: AnnotationSet, config: EmConfig = EmConfig(), state: ModelState | None = None
) -> Iterator[tuple[ModelState, ModelState]]:
    """Yield ``(evaluated, updated)`` pairs, one per EM iteration, without a stopping rule.

    ``evaluated`` carries the parameters the E-step used together with the
    resulting posterior and log-likelihood; ``updated`` holds the M-step output.
    """
    if state is None:
        state = initialize(dataset, config.eps)
    while True:
        posterior, ll = _e_step(dataset, state)
        evaluated = state.copy()
        evaluated.posterior = posterior
        evaluated.log_likelihood = ll
        state = m_step(dataset, evaluated, posterior, config.eps)
        yield evaluated, state


def infer_ranks(state: ModelState) -> dict[str, Permutation]:
    """Posterior mode per problem; ``np.argmax`` breaks ties toward the smallest permutation index."""
    R = state.R
    best = np.argmax(state.posterior, axis=1)
    return {pid: Permutation.from_index(int(k), R) for pid, k in zip(state.problem_ids, best)}


def fit(dataset: AnnotationSet, config: EmConfig = EmConfig()) -> FitResult:
    validate(dataset)
    trace: list[float] = []
    initial = initialize(dataset, config.eps)
    previous_posterior = initial.posterior
    converged = False
    for it, (evaluated, _) in enumerate(iterate(dataset, config, initial), start=1):
        ll = evaluated.log_likelihood
        if not np.isfinite(ll):
            raise NumericalError(f"log-likelihood became {ll} at iteration {it}")
        ll_change = abs(ll - trace[-1]) / max(abs(trace[-1]), 1.0) if trace else np.inf
        post_change = float(np.max(np.abs(evaluated.posterior - previous_posterior)))
        trace.append(ll)
        log.debug("iteration %d: ll=%.10f dpost=%.3g", it, ll, post_change)
        if ll_change < config.ll_tolerance or post_change < config.posterior_tolerance:
            converged = True
            break
        if it >= config.max_iterations:
            break
        previous_posterior = evaluated.posterior
    evaluated.iteration = len(trace)
    return FitResult(
        state=evaluated,
        inferred_ranks=infer_ranks(evaluated),
        iterations_used=len(trace),
        converged=converged,
        log_likelihood_trace=trace,
    )
