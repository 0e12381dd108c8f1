import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from budro.dataio import Dataset
from budro.errors import ConfigError, DegenerateDirectionError
from budro.fairmetric import (CostMatrix, ProjectionMetric, SensitiveDirections, build_cost_matrix, build_projection,
                              fair_distance, fit_logistic_direction, fit_ridge_direction, indicator_directions)


def frame(X, names):
    return Dataset(features=X, labels=np.zeros(X.shape[0], dtype=int), feature_names=names)


def test_logistic_concentrates_on_predictive_feature():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 5))
    p = (X[:, 3] > 0).astype(float)
    data = frame(np.column_stack([X, p]), ("f0", "f1", "f2", "f3", "f4", "p"))
    w = fit_logistic_direction(data, "p").weights
    assert w[5] == 0
    assert abs(w[3]) / np.linalg.norm(w) >= 0.99


def test_logistic_random_target_is_small():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 4))
    p = rng.integers(0, 2, 300).astype(float)
    data = frame(np.column_stack([X, p]), ("a", "b", "c", "d", "p"))
    assert np.linalg.norm(fit_logistic_direction(data, "p", l2_strength=10.0).weights) <= 0.1


def test_logistic_proxy_signs():
    rng = np.random.default_rng(2)
    n = 600
    male = rng.random(n) < 0.6
    married = rng.random(n) < 0.5
    husband = (male & married).astype(float)
    wife = (~male & married).astype(float)
    noise = rng.normal(size=(n, 2))
    data = frame(np.column_stack([husband, wife, noise, male.astype(float)]),
                 ("is_husband", "is_wife", "n1", "n2", "sex"))
    w = fit_logistic_direction(data, "sex", l2_strength=0.1).weights
    assert w[0] != 0 and w[1] != 0 and np.sign(w[0]) == -np.sign(w[1])


def test_ridge_exact_relation():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 3))
    data = frame(np.column_stack([X, 2 * X[:, 0]]), ("x1", "x2", "x3", "t"))
    d = fit_ridge_direction(data, "t", l2_grid=(1e-12,))
    assert abs(d.weights[0] - 2) < 1e-6 and np.all(np.abs(d.weights[1:3]) < 1e-6)


def test_ridge_noise_large_penalty():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(200, 3))
    data = frame(np.column_stack([X, rng.normal(size=200)]), ("a", "b", "c", "t"))
    assert np.linalg.norm(fit_ridge_direction(data, "t", l2_grid=(1e4,)).weights) <= 0.05


def test_ridge_selects_cv_minimizer():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(80, 4))
    t = X @ np.array([1.0, -0.5, 0.0, 0.3]) + rng.normal(scale=0.5, size=80)
    data = frame(np.column_stack([X, t]), ("a", "b", "c", "d", "t"))
    d = fit_ridge_direction(data, "t", l2_grid=(0.1, 1.0, 10.0), folds=5, seed=0)
    # recompute the fold errors independently
    parts = np.array_split(np.random.default_rng(0).permutation(80), 5)
    errs = {}
    for lam in (0.1, 1.0, 10.0):
        sse = 0.0
        for held in parts:
            tr = np.setdiff1d(np.arange(80), held)
            xm, ym = X[tr].mean(0), t[tr].mean()
            w = np.linalg.solve((X[tr] - xm).T @ (X[tr] - xm) + lam * np.eye(4), (X[tr] - xm).T @ (t[tr] - ym))
            sse += np.sum((t[held] - (X[held] - xm) @ w - ym) ** 2)
        errs[lam] = sse / 80
    assert d.penalty == min(errs, key=errs.get)
    for lam in errs:
        assert abs(errs[lam] - d.cv_errors[lam]) < 1e-10


def test_ridge_singular_at_zero():
    X = np.ones((10, 2))
    data = frame(np.column_stack([X, np.arange(10.0)]), ("a", "b", "t"))
    with pytest.raises(ConfigError):
        fit_ridge_direction(data, "t", l2_grid=(0.0,))


def test_projection_examples():
    e1 = SensitiveDirections((np.array([1.0, 0.0]),))
    assert np.array_equal(build_projection(e1).Q, [[0, 0], [0, 1]])
    par = SensitiveDirections((np.array([1.0, 1.0]), np.array([2.0, 2.0])))
    one = SensitiveDirections((np.array([1.0, 1.0]),))
    assert np.allclose(build_projection(par).Q, build_projection(one).Q, atol=1e-15)
    full = SensitiveDirections((np.array([1.0, 0.0]), np.array([1.0, 1.0])))
    assert np.allclose(build_projection(full).Q, 0, atol=1e-15)
    with pytest.raises(DegenerateDirectionError):
        build_projection(SensitiveDirections((np.zeros(3),)))


@given(st.integers(1, 6).flatmap(lambda d: st.lists(arrays(float, d, elements=st.floats(-5, 5)), min_size=1,
                                                    max_size=d + 1)))
def test_projection_properties(vectors):
    if all(np.linalg.norm(v) < 1e-3 for v in vectors):
        return
    vectors = [v for v in vectors if np.linalg.norm(v) >= 1e-3]
    Q = build_projection(SensitiveDirections(tuple(vectors))).Q
    assert np.allclose(Q, Q.T, atol=0)
    assert np.allclose(Q @ Q, Q, atol=1e-10)
    for v in vectors:
        assert np.linalg.norm(Q @ v) <= 1e-8 * max(1.0, np.linalg.norm(v))
    assert np.all(np.linalg.eigvalsh(Q) > -1e-10)


def test_distance_examples():
    m = ProjectionMetric(np.diag([0.0, 1.0]))
    assert fair_distance(m, [5, 3], [0, 1]) == 2.0
    assert fair_distance(m, [1, 1], [1, 1]) == 0.0
    assert fair_distance(m, [7, 1], [0, 1]) == 0.0


def test_indicator_directions():
    data = Dataset(features=np.zeros((2, 4)), labels=[0, 1], feature_names=("a", "s=0", "s=1", "b"),
                   attribute_columns={"a": (0,), "s": (1, 2), "b": (3,)})
    dirs = indicator_directions(data, "s")
    assert [np.flatnonzero(v).tolist() for v in dirs.directions] == [[1], [2]]


def test_metric_roundtrip(tmp_path):
    m = build_projection(SensitiveDirections((np.array([1.0, 2.0, 3.0]),)))
    m.save(tmp_path / "m.txt")
    assert np.array_equal(ProjectionMetric.load(tmp_path / "m.txt").Q, m.Q)
    assert (tmp_path / "m.txt").read_text().splitlines()[0] == "budro-metric v1"


def test_cost_examples():
    ident = ProjectionMetric.identity(2)
    C = build_cost_matrix(ident, np.array([[0.0, 0.0], [1.0, 0.0]]))
    assert C.to_dense()[0, 1] == 1.0
    C = build_cost_matrix(ident, np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert np.array_equal(C.to_dense(), np.zeros((2, 2)))
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]])
    sparse = build_cost_matrix(ident, X, "sparse", tau=0.5)
    assert np.diff(sparse.indptr).tolist() == [1, 1, 1] and sparse.rows.tolist() == [0, 1, 2]


@given(st.integers(1, 25), st.integers(1, 4), st.integers(0, 10 ** 6))
def test_cost_matrix_properties(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    m = build_projection(SensitiveDirections((rng.normal(size=d),))) if d > 1 else ProjectionMetric.identity(d)
    C = build_cost_matrix(m, X, chunk=7)
    dense = C.to_dense()
    assert np.all(np.diag(dense) == 0) and np.array_equal(dense, dense.T) and np.all(dense >= 0)
    for j in range(n):
        rows, costs = C.column(j)
        assert np.all(np.diff(costs) >= 0)
    ref = np.array([[fair_distance(m, a, b) ** 2 for b in X] for a in X])
    assert np.allclose(dense, ref, atol=1e-10)
    sparse = build_cost_matrix(m, X, "sparse", tau=np.inf)
    assert np.array_equal(sparse.rows, C.rows) and np.array_equal(sparse.costs, C.costs)
    lookup = C.lookup(np.repeat(np.arange(n), n), np.tile(np.arange(n), n))
    assert np.array_equal(lookup.reshape(n, n), dense)
    assert np.array_equal(CostMatrix.from_dense(dense).costs, C.costs)
