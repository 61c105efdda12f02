import numpy as np
import pytest

from rankagg.model import Annotation, AnnotationSet, ModelState, Problem

_criteria: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if not marker:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[marker[0]] = (marker[1], "PASS" if report.outcome == "passed" else "FAIL")


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m:
        item.user_properties.append(("criterion", (str(m.args[0]), m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria, key=int):
        title, outcome = _criteria[n]
        terminalreporter.write_line(f"[{outcome}] criterion {n:>2}: {title}")


def make_dataset(ranks_by_problem, R=None, truth=None):
    """``ranks_by_problem``: {problem_id: {annotator_id: rank}}."""
    annotations = [
        Annotation(pid, aid, tuple(rank))
        for pid, by_annot in ranks_by_problem.items()
        for aid, rank in by_annot.items()
    ]
    R = R or len(annotations[0].rank)
    problems = tuple(Problem(pid, R) for pid in ranks_by_problem)
    annotators = tuple(dict.fromkeys(a.annotator_id for a in annotations))
    return AnnotationSet.build(annotations, problems=problems, annotators=annotators, ground_truth=truth)


@pytest.fixture
def toy_dataset():
    """R=3, two problems, two annotators, disagreeing on one problem."""
    return make_dataset({
        "p1": {"a1": (0, 1, 2), "a2": (1, 0, 2)},
        "p2": {"a1": (2, 0, 1), "a2": (2, 0, 1)},
    })


def make_state(dataset, theta=None, ability=None, difficulty=None):
    """ModelState with explicit parameters; defaults are uniform."""
    data = dataset.indexed
    R, K = data.R, data.K
    uniform = np.full((R, R), 1.0 / R)
    return ModelState(
        theta=np.full(K, 1.0 / K) if theta is None else np.asarray(theta, float),
        ability=np.stack([uniform] * data.J) if ability is None else np.asarray(ability, float),
        difficulty=np.stack([uniform] * data.I) if difficulty is None else np.asarray(difficulty, float),
        posterior=np.full((data.I, K), 1.0 / K),
        problem_ids=data.problem_ids,
        annotator_ids=data.annotator_ids,
    )


def random_stochastic(rng, shape):
    m = rng.uniform(0.05, 1.0, size=shape)
    return m / m.sum(axis=-1, keepdims=True)
