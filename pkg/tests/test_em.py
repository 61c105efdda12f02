import numpy as np
import pytest

import oracle
from conftest import make_dataset, make_state, random_stochastic
from rankagg.em import (
    EmConfig,
    _softmax_rows,
    e_step,
    fit,
    infer_ranks,
    initialize,
    iterate,
    m_step_ability,
    m_step_difficulty,
    m_step_theta,
)
from rankagg.errors import NumericalError, ValidationError
from rankagg.likelihood import dataset_log_likelihood, log_scores
from rankagg.model import AnnotationSet, normalize_rows
from rankagg.perm import encode
from rankagg.synth import SynthConfig, gen_dataset

EPS = 1e-12


def one_hot(I, K, idx):
    post = np.zeros((I, K))
    post[np.arange(I), idx] = 1.0
    return post


# -- initialization ----------------------------------------------------------


def test_initial_posterior_unanimous():
    ds = make_dataset({"p": {"a": (2, 0, 1), "b": (2, 0, 1), "c": (2, 0, 1)}})
    post = initialize(ds).posterior[0]
    assert post[encode((2, 0, 1))] == pytest.approx(1.0, abs=1e-10)


def test_initial_posterior_even_split():
    ds = make_dataset({"p": {"a": (0, 1, 2), "b": (1, 0, 2), "c": (0, 1, 2), "d": (1, 0, 2)}})
    post = initialize(ds).posterior[0]
    assert post[[encode((0, 1, 2)), encode((1, 0, 2))]] == pytest.approx([0.5, 0.5], abs=1e-10)


def test_initial_posterior_all_distinct():
    ds = make_dataset({"p": {"a": (0, 1, 2), "b": (1, 2, 0), "c": (2, 1, 0)}})
    post = initialize(ds).posterior[0]
    seen = [encode(r) for r in [(0, 1, 2), (1, 2, 0), (2, 1, 0)]]
    assert post[seen] == pytest.approx([1 / 3] * 3, abs=1e-10)
    rest = np.delete(post, seen)
    assert np.all(rest < 1e-11)


def test_initial_theta_uniform_and_matrices_stochastic(toy_dataset):
    st = initialize(toy_dataset)
    assert np.allclose(st.theta, 1 / 6)
    assert np.allclose(st.ability.sum(axis=-1), 1, atol=1e-12)
    assert np.allclose(st.difficulty.sum(axis=-1), 1, atol=1e-12)


# -- E-step --------------------------------------------------------------------


def test_e_step_deterministic_matrices_unanimous():
    ds = make_dataset({"p": {"a": (1, 2, 0), "b": (1, 2, 0)}})
    ident = normalize_rows(np.eye(3), EPS)
    st = make_state(ds, ability=[ident, ident], difficulty=[ident])
    post = e_step(ds, st)[0]
    assert post[encode((1, 2, 0))] == pytest.approx(1.0, abs=1e-9)


def test_e_step_two_items_uniform():
    ds = make_dataset({"p": {"a": (0, 1)}})
    post = e_step(ds, make_state(ds))[0]
    # (1/4)^2 against (1/8)^2: ratio 4
    assert post == pytest.approx([0.8, 0.2], abs=1e-12)


def test_e_step_matches_brute_force():
    ds = make_dataset({"p": {"a1": (0, 2, 1), "a2": (2, 1, 0)}})
    rng = np.random.default_rng(11)
    th, A, D = random_stochastic(rng, 6), random_stochastic(rng, (2, 3, 3)), random_stochastic(rng, (1, 3, 3))
    post = e_step(ds, make_state(ds, th, A, D))
    ann = [(a.problem_id, a.annotator_id, a.rank) for a in ds.annotations]
    expected, _ = oracle.e_step(3, ["p"], ann, list(th), {"a1": A[0].tolist(), "a2": A[1].tolist()},
                                {"p": D[0].tolist()})
    assert post[0] == pytest.approx(expected["p"], abs=1e-10)


def test_e_step_rejects_nonfinite_scores(toy_dataset):
    st = make_state(toy_dataset, theta=np.r_[0.0, np.full(5, 0.2)])
    with np.errstate(divide="ignore"):
        with pytest.raises(NumericalError):
            e_step(toy_dataset, st)


# -- M-step --------------------------------------------------------------------


def test_m_step_theta_examples():
    K = 6
    post = np.zeros((2, K))
    post[0, 0] = 1.0
    post[1, :2] = 0.5
    assert m_step_theta(post, EPS)[:2] == pytest.approx([0.75, 0.25], abs=1e-10)
    assert m_step_theta(np.full((4, K), 1 / K), EPS) == pytest.approx([1 / K] * K)
    row = random_stochastic(np.random.default_rng(0), (1, K))
    assert m_step_theta(row, EPS) == pytest.approx(row[0], abs=1e-11)


def test_m_step_ability_always_correct_is_identity():
    truths = [(0, 1, 2), (2, 0, 1), (1, 2, 0)]
    ds = make_dataset({f"p{i}": {"a": t} for i, t in enumerate(truths)})
    post = one_hot(3, 6, [encode(t) for t in truths])
    ability, empty = m_step_ability(ds, post, EPS)
    assert np.allclose(ability[0], np.eye(3), atol=1e-11)
    assert empty == ()


def test_m_step_ability_transposition():
    truths = [(0, 1, 2), (2, 0, 1), (1, 2, 0)]
    swapped = {f"p{i}": {"a": (t[1], t[0], t[2])} for i, t in enumerate(truths)}
    ds = make_dataset(swapped)
    post = one_hot(3, 6, [encode(t) for t in truths])
    ability, _ = m_step_ability(ds, post, EPS)
    assert np.allclose(ability[0], [[0, 1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-11)


def test_m_step_ability_soft_posterior_averages_hard_counts():
    ds = make_dataset({"p": {"a": (0, 1, 2)}})
    k1, k2 = (0, 1, 2), (1, 2, 0)
    post = np.zeros((1, 6))
    post[0, [encode(k1), encode(k2)]] = 0.5

    def hard(k):
        m = np.zeros((3, 3))
        for r, item in enumerate((0, 1, 2)):
            m[r, k.index(item)] = 1
        return m

    ability, _ = m_step_ability(ds, post, EPS)
    assert np.allclose(ability[0], (hard(k1) + hard(k2)) / 2, atol=1e-11)


def test_m_step_ability_flags_idle_annotator():
    base = make_dataset({"p": {"a": (0, 1, 2)}})
    ds = AnnotationSet(base.problems, ("a", "idle"), base.annotations)
    ability, empty = m_step_ability(ds, initialize(base).posterior, EPS)
    assert empty == ("idle",)
    assert np.allclose(ability[1], 1 / 3)


def test_m_step_difficulty_correct_and_reversed():
    ds = make_dataset({"p": {"a": (0, 1, 2), "b": (2, 1, 0)}})
    diff = m_step_difficulty(ds, one_hot(1, 6, [0]), EPS)
    assert np.allclose(diff[0], [[0.5, 0, 0.5], [0, 1, 0], [0.5, 0, 0.5]], atol=1e-11)


def test_m_step_difficulty_uniform_posterior_brute_force():
    ds = make_dataset({"p": {"a": (0, 2, 1), "b": (1, 0, 2), "c": (0, 1, 2)}})
    hyps = oracle.hypotheses(3)
    counts = np.zeros((3, 3))
    for a in ds.annotations:
        for k in hyps:
            for r, item in enumerate(a.rank):
                counts[r, k.index(item)] += 1 / len(hyps)
    expected = counts / counts.sum(axis=1, keepdims=True)
    diff = m_step_difficulty(ds, np.full((1, 6), 1 / 6), EPS)
    assert np.allclose(diff[0], expected, atol=1e-12)
    assert np.allclose(diff[0], 1 / 3)


# -- full loop -----------------------------------------------------------------


def test_perfect_annotators_converge_fast():
    synth = gen_dataset(SynthConfig(I=60, J=6, R=4, e=1.0, eta=0.5, seed=3))
    result = fit(synth.dataset)
    assert result.converged and result.iterations_used <= 2
    for a in synth.dataset.annotations:
        assert result.inferred_ranks[a.problem_id].items == a.rank


def _naive_run(ds, iterations):
    R = ds.R
    problems, annotators = list(ds.problem_ids), list(ds.annotators)
    ann = [(a.problem_id, a.annotator_id, a.rank) for a in ds.annotations]
    hyps = oracle.hypotheses(R)
    post = {}
    for i in problems:
        c = [sum(1.0 for p, _, d in ann if p == i and d == k) + EPS for k in hyps]
        post[i] = [x / sum(c) for x in c]
    _, ability, difficulty = oracle.m_step(R, problems, annotators, ann, post)
    theta = [1 / len(hyps)] * len(hyps)
    out = []
    for _ in range(iterations):
        post, ll = oracle.e_step(R, problems, ann, theta, ability, difficulty)
        out.append((post, ll, theta, ability, difficulty))
        theta, ability, difficulty = oracle.m_step(R, problems, annotators, ann, post)
    return out


def test_iterations_match_naive_updates(toy_dataset):
    naive = _naive_run(toy_dataset, 3)
    for (evaluated, _), (post, ll, theta, ability, difficulty) in zip(iterate(toy_dataset), naive):
        assert np.allclose(evaluated.theta, theta, atol=1e-10, rtol=0)
        for j, a in enumerate(toy_dataset.annotators):
            assert np.allclose(evaluated.ability[j], ability[a], atol=1e-10, rtol=0)
        for i, p in enumerate(toy_dataset.problem_ids):
            assert np.allclose(evaluated.difficulty[i], difficulty[p], atol=1e-10, rtol=0)
            assert np.allclose(evaluated.posterior[i], post[p], atol=1e-10, rtol=0)
        assert evaluated.log_likelihood == pytest.approx(ll, abs=1e-9)


def test_ascent_and_normalisation():
    ds = gen_dataset(SynthConfig(I=120, J=8, R=4, e=0.2, eta=0.5, seed=9)).dataset
    lls = []
    for n, (evaluated, updated) in enumerate(iterate(ds, EmConfig())):
        lls.append(evaluated.log_likelihood)
        assert np.allclose(evaluated.posterior.sum(axis=1), 1, atol=1e-9)
        assert updated.theta.sum() == pytest.approx(1, abs=1e-9)
        assert np.allclose(updated.ability.sum(axis=-1), 1, atol=1e-9)
        assert np.allclose(updated.difficulty.sum(axis=-1), 1, atol=1e-9)
        # the reported value is the likelihood of the parameters that produced it
        assert evaluated.log_likelihood == pytest.approx(dataset_log_likelihood(ds, evaluated), abs=1e-8)
        if n == 30:
            break
    assert np.all(np.diff(lls) >= -1e-9)


def test_fit_is_deterministic():
    ds = gen_dataset(SynthConfig(I=80, seed=4)).dataset
    a, b = fit(ds), fit(ds)
    assert a.log_likelihood_trace == b.log_likelihood_trace
    assert np.array_equal(a.state.posterior, b.state.posterior)
    assert a.inferred_ranks == b.inferred_ranks


def test_argmax_invariant_to_score_scaling(toy_dataset):
    scores = log_scores(toy_dataset, initialize(toy_dataset))
    shifted = scores + np.array([[np.log(7.5)], [np.log(1e-30)]])
    p1, _ = _softmax_rows(scores)
    p2, _ = _softmax_rows(shifted)
    assert np.allclose(p1, p2, atol=1e-12)
    assert np.array_equal(p1.argmax(axis=1), p2.argmax(axis=1))


def test_ties_break_toward_smallest_index(toy_dataset):
    st = initialize(toy_dataset)
    st.posterior = np.zeros((2, 6))
    st.posterior[:, [3, 1, 5]] = 1 / 3
    assert [p.index for p in infer_ranks(st).values()] == [1, 1]


def test_max_iterations_cap():
    ds = gen_dataset(SynthConfig(I=80, e=0.1, seed=1)).dataset
    result = fit(ds, EmConfig(max_iterations=1))
    assert result.iterations_used == 1 and not result.converged
    assert len(result.log_likelihood_trace) == 1


def test_fit_validates_first():
    ds = make_dataset({"p": {"a": (0, 0, 1)}}, R=3)
    with pytest.raises(ValidationError):
        fit(ds)


def test_config_validation():
    with pytest.raises(ValueError):
        EmConfig(max_iterations=0)
    with pytest.raises(ValueError):
        EmConfig(ll_tolerance=0)
