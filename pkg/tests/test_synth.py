import itertools
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from rankagg.errors import SamplingStallError
from rankagg.model import validate
from rankagg.synth import SynthConfig, gen_ability_matrix, gen_biased_rank, gen_dataset, substream


def rejection_distribution(truth, M):
    """Exact output law of the slot-by-slot rejection sampler for R = 3."""
    probs = {}
    for p1 in range(3):
        for p2 in range(3):
            if p2 == p1:
                continue
            # slot 2 redraws while it hits p1: sum_n M[1,p1]^n M[1,p2]
            pr = M[0, p1] * M[1, p2] / (1.0 - M[1, p1])
            p3 = 3 - p1 - p2
            out = (truth[p1], truth[p2], truth[p3])
            probs[out] = probs.get(out, 0.0) + pr
    return probs


def admissible(m, e):
    return (np.all(m >= 0) and np.allclose(m.sum(axis=1), 1, atol=1e-12, rtol=0)
            and np.all(np.diag(m) >= e))


def test_reference_matrix_is_admissible():
    example = np.array([[0.8, 0.15, 0.05], [0.05, 0.9, 0.05], [0.0, 0.0, 1.0]])
    assert admissible(example, 0.8)


def test_quality_one_gives_identity():
    assert np.array_equal(gen_ability_matrix(1.0, 5, np.random.default_rng(0)), np.eye(5))


@pytest.mark.parametrize("e", [0.0, 0.1, 0.5, 0.9])
def test_generated_matrices_admissible(e):
    rng = np.random.default_rng(1)
    for _ in range(500):
        assert admissible(gen_ability_matrix(e, 4, rng), e)


def test_identity_ability_copies_truth():
    rng = np.random.default_rng(2)
    for _ in range(200):
        truth = tuple(int(x) for x in rng.permutation(5))
        assert gen_biased_rank(truth, np.eye(5), rng) == truth


def test_uniform_ability_gives_uniform_permutations():
    rng = np.random.default_rng(3)
    n = 60_000
    counts = Counter(gen_biased_rank((0, 1, 2), np.full((3, 3), 1 / 3), rng) for _ in range(n))
    observed = [counts[p] for p in itertools.permutations(range(3))]
    assert chisquare(observed).pvalue > 1e-3


def test_two_items():
    rng = np.random.default_rng(4)
    m = np.array([[0.9, 0.1], [0.3, 0.7]])
    n = 100_000
    hits = sum(gen_biased_rank((1, 0), m, rng) == (1, 0) for _ in range(n))
    assert abs(hits / n - 0.9) < 0.01


def test_rejection_oracle_sums_to_one():
    M = gen_ability_matrix(0.2, 3, np.random.default_rng(5))
    assert sum(rejection_distribution((2, 0, 1), M).values()) == pytest.approx(1.0, abs=1e-12)


def test_stall_guard():
    # slot 1 can only draw the position slot 1 already took
    m = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SamplingStallError):
        gen_biased_rank((0, 1, 2), m, np.random.default_rng(0))


def test_dataset_counts_and_validity():
    synth = gen_dataset(SynthConfig())
    ds = synth.dataset
    assert len(ds.annotations) == 500 * 5
    assert validate(ds) is ds
    assert set(ds.ground_truth) == set(ds.problem_ids)
    per_problem = Counter(a.problem_id for a in ds.annotations)
    assert set(per_problem.values()) == {5}
    assert set(synth.ability) == set(ds.annotators)


def test_full_ratio_uses_every_annotator():
    ds = gen_dataset(SynthConfig(I=40, J=7, eta=1.0)).dataset
    assert len(ds.annotations) == 40 * 7


def test_seed_determinism():
    a = gen_dataset(SynthConfig(I=50, seed=12))
    b = gen_dataset(SynthConfig(I=50, seed=12))
    c = gen_dataset(SynthConfig(I=50, seed=13))
    assert a.dataset == b.dataset
    assert all(np.array_equal(a.ability[k], b.ability[k]) for k in a.ability)
    assert a.dataset.annotations != c.dataset.annotations


def test_substreams_independent():
    assert substream(0, "generation").random() != substream(0, "quicksort-pivots").random()
    assert substream(0, "generation").random() == substream(0, "generation").random()


@pytest.mark.parametrize("kwargs", [dict(e=1.5), dict(eta=0.0), dict(eta=0.04), dict(R=1)])
def test_config_bounds(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)
