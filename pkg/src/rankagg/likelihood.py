"""Log-space evaluation of the listwise confusion model.

Under hypothesis ``k`` an annotation ``d`` by annotator ``j`` on problem ``i``
scores

    sum_r  log Pi_j[r, tau(k, d_r)] + log Delta_i[r, tau(k, d_r)] - log(|tau(k, d_r) - r| + 1)

(0-based slots here).  Because that sum is additive over items, each
annotation can be turned into an ``R x R`` table ``W[item, b]`` (the score of
``item`` having true position ``b``) and a hypothesis picks one entry per
item.  The score of every hypothesis is then a single product with
:func:`rankagg.perm.position_indicator`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import MissingAnnotationError
from .model import AnnotationSet, ConfusionMatrix, IndexedData, ModelState
from .perm import position_indicator, pos_distance, tau


def log_distance_table(R: int) -> np.ndarray:
    """``out[s, b] = log(|b - s| + 1)``."""
    idx = np.arange(R)
    return np.log(np.abs(idx[None, :] - idx[:, None]) + 1.0)


def _entries(m) -> np.ndarray:
    return m.entries if isinstance(m, ConfusionMatrix) else np.asarray(m, dtype=float)


def log_factor(k: Sequence[int], d: Sequence[int], ability, difficulty) -> float:
    """Log of the per-annotation factor for truth hypothesis ``k`` and annotation ``d``."""
    A, D = _entries(ability), _entries(difficulty)
    R = len(d)
    if len(k) != R or A.shape != (R, R) or D.shape != (R, R):
        raise ValueError(f"shape mismatch: R={R}, ability {A.shape}, difficulty {D.shape}")
    total = 0.0
    for r in range(1, R + 1):
        b = tau(k, d[r - 1])
        total += np.log(A[r - 1, b - 1]) + np.log(D[r - 1, b - 1]) - np.log(pos_distance(k, d, r))
    return float(total)


def annotation_log_weights(data: IndexedData, ability: np.ndarray, difficulty: np.ndarray) -> np.ndarray:
    """(N, R*R) tables ``W[n, item*R + b]`` for every annotation."""
    R = data.R
    per_slot = (
        np.log(ability)[data.annotator]
        + np.log(difficulty)[data.problem]
        - log_distance_table(R)[None]
    )
    per_item = np.take_along_axis(per_slot, data.slots[:, :, None], axis=1)
    return per_item.reshape(data.N, R * R)


def log_factor_table(dataset: AnnotationSet, state: ModelState) -> np.ndarray:
    """(N, K) cache of ``log_factor`` for every annotation and every hypothesis."""
    data = dataset.indexed
    W = annotation_log_weights(data, state.ability, state.difficulty)
    return W @ position_indicator(data.R).T


def log_scores(dataset: AnnotationSet, state: ModelState) -> np.ndarray:
    """(I, K) unnormalised log joint ``log theta_k + sum_j log F`` per problem and hypothesis."""
    data = dataset.indexed
    W = annotation_log_weights(data, state.ability, state.difficulty)
    S = np.zeros((data.I, data.R * data.R))
    np.add.at(S, data.problem, W)
    return np.log(state.theta)[None, :] + S @ position_indicator(data.R).T


def problem_log_likelihood(problem_id: str, dataset: AnnotationSet, state: ModelState) -> float:
    """Log marginal likelihood of one problem's annotations, summed over all hypotheses."""
    data = dataset.indexed
    i = data.problem_ids.index(problem_id)
    mask = data.problem == i
    if not mask.any():
        raise MissingAnnotationError(f"problem {problem_id!r} has no annotations")
    W = annotation_log_weights(data, state.ability, state.difficulty)[mask].sum(axis=0)
    scores = np.log(state.theta) + position_indicator(data.R) @ W
    return float(logsumexp(scores))


def dataset_log_likelihood(dataset: AnnotationSet, state: ModelState) -> float:
    return float(logsumexp(log_scores(dataset, state), axis=1).sum())
