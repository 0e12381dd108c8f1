import re

import numpy as np
import pytest
from hypothesis import settings

from budro.fairmetric import CostMatrix, ProjectionMetric, SensitiveDirections, build_cost_matrix, build_projection
from budro.otsolver import LossColumns

settings.register_profile("budro", max_examples=60, deadline=None)
settings.load_profile("budro")

# two points at unit transport cost, labels (1, 0), margins (2, -1)
T2_MARGINS = np.array([2.0, -1.0])
T2_LABELS = np.array([1, 0])
T2_COST = np.array([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def t2():
    return LossColumns.from_margins(T2_MARGINS, T2_LABELS), CostMatrix.from_dense(T2_COST)


def random_instance(rng, n_max=15, d_max=5):
    """Random transport instance: projection metric, logistic losses, eps in [0, mean cost]."""
    n = int(rng.integers(2, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.normal(size=(n, d))
    k = int(rng.integers(0, d))
    if k:
        metric = build_projection(SensitiveDirections(tuple(rng.normal(size=d) for _ in range(k))))
    else:
        metric = ProjectionMetric.identity(d)
    C = build_cost_matrix(metric, X)
    y = rng.integers(0, 2, n)
    R = LossColumns.from_margins(rng.normal(scale=2.0, size=n), y)
    eps = float(rng.uniform(0, C.costs.mean()))
    return R, C, eps


def distinct_dataset(rng, n, d):
    """Small dataset with distinct rows and both labels."""
    from budro.dataio import Dataset
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, n)
    y[:2] = (0, 1)
    return Dataset(features=X, labels=y, feature_names=tuple(f"f{j}" for j in range(d)))


ACCEPTANCE = []


def record(criterion, ok, detail):
    """Log one acceptance line; the summary prints them after the run."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(re.match(r"\d+", s.split("criterion ")[1]).group())):
            terminalreporter.write_line(line)
