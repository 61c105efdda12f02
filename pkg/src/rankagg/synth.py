"""Synthetic crowdsourced listwise datasets with known truth and annotator matrices."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import SamplingStallError
from .model import Annotation, AnnotationSet, ConfusionMatrix, Problem
from .perm import Permutation

MAX_DRAWS = 10**6


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named consumer of the single user seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass(frozen=True)
class SynthConfig:
    I: int = 500
    J: int = 10
    R: int = 5
    e: float = 0.3
    eta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.I < 1 or self.J < 1 or self.R < 2:
            raise ValueError("need I >= 1, J >= 1 and R >= 2")
        if not 0.0 <= self.e <= 1.0:
            raise ValueError(f"e must lie in [0, 1], got {self.e}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.per_problem < 1:
            raise ValueError(f"round(eta * J) = {self.per_problem}; need at least one annotator per problem")

    @property
    def per_problem(self) -> int:
        return int(round(self.eta * self.J))


@dataclass(frozen=True)
class SynthDataset:
    dataset: AnnotationSet
    ability: dict[str, np.ndarray]
    config: SynthConfig


def gen_ability_matrix(e: float, R: int, rng: np.random.Generator) -> np.ndarray:
    """Diagonal drawn from U[e, 1]; the remaining row mass is split by scaled uniform weights."""
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"e must lie in [0, 1], got {e}")
    m = np.zeros((R, R))
    for r in range(R):
        v = rng.uniform(e, 1.0)
        w = rng.uniform(0.0, 1.0, size=R - 1)
        off = (1.0 - v) * w / w.sum() if w.sum() > 0 else np.full(R - 1, (1.0 - v) / (R - 1))
        m[r, np.arange(R) != r] = off
        m[r, r] = v
    return m


def gen_biased_rank(truth, ability, rng: np.random.Generator) -> tuple[int, ...]:
    """Noisy copy of ``truth``: slot ``r`` draws a true position from row ``r`` until it hits an unplaced item."""
    truth = tuple(truth)
    m = ability.entries if isinstance(ability, ConfusionMatrix) else np.asarray(ability)
    R = len(truth)
    cdf = np.cumsum(m, axis=1)
    cdf[:, -1] = np.inf
    placed = [False] * R
    out: list[int] = []
    draws = 0
    for r in range(R - 1):
        while True:
            p = int(np.searchsorted(cdf[r], rng.random(), side="right"))
            draws += 1
            if not placed[p]:
                break
            if draws >= MAX_DRAWS:
                raise SamplingStallError(f"no unplaced position drawn after {draws} draws at slot {r + 1}")
        placed[p] = True
        out.append(truth[p])
    out.append(truth[placed.index(False)])
    return tuple(out)


def gen_dataset(config: SynthConfig) -> SynthDataset:
    rng = substream(config.seed, "generation")
    I, J, R = config.I, config.J, config.R
    width_p, width_a = len(str(I - 1)), len(str(J - 1))
    annotators = tuple(f"a{j:0{width_a}d}" for j in range(J))
    ability = {a: gen_ability_matrix(config.e, R, rng) for a in annotators}
    problems, annotations, truth = [], [], {}
    for i in range(I):
        pid = f"p{i:0{width_p}d}"
        problems.append(Problem(pid, R))
        y = tuple(int(x) for x in rng.permutation(R))
        truth[pid] = Permutation(y)
        chosen = np.sort(rng.choice(J, size=config.per_problem, replace=False))
        for j in chosen:
            a = annotators[j]
            annotations.append(Annotation(pid, a, gen_biased_rank(y, ability[a], rng)))
    dataset = AnnotationSet(tuple(problems), annotators, tuple(annotations), truth)
    return SynthDataset(dataset, ability, config)
