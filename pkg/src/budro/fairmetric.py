"""Sensitive subspaces, the projection fair metric and transport cost matrices.

The fair metric ignores every direction in a sensitive subspace spanned by
protected-attribute indicators and the normals of linear models that
predict a protected attribute from the remaining features:

    d_x(a, b) = ||Q (a - b)||,   Q = I - U U^T,

with ``U`` an orthonormal basis of the subspace.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from . import fileformats
from .errors import ConfigError, ConvergenceError, DataError, DegenerateDirectionError, SchemaError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class SensitiveDirections:
    directions: tuple

    def __post_init__(self):
        vectors = tuple(np.asarray(v, dtype=float).ravel() for v in self.directions)
        if not vectors:
            raise DegenerateDirectionError("need at least one sensitive direction")
        if len({v.size for v in vectors}) != 1:
            raise ValueError("sensitive directions have mismatched dimensions")
        object.__setattr__(self, "directions", vectors)

    @property
    def dim(self):
        return self.directions[0].size

    def __add__(self, other):
        return SensitiveDirections(self.directions + other.directions)


@dataclass(frozen=True, eq=False)
class LinearDirection:
    """Coefficients of a linear model, embedded in the full feature space.

    ``penalty`` is the l2 strength used; ``cv_errors`` holds the
    cross-validated mean squared error per grid value for ridge fits.
    """

    weights: np.ndarray
    intercept: float = 0.0
    penalty: float = 0.0
    cv_errors: dict = field(default_factory=dict)
    iterations: int = 0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ConvergenceError("linear direction has non-finite weights")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def as_directions(self):
        return SensitiveDirections((self.weights,))


def _attribute_columns(data, name):
    if name in data.attribute_columns:
        return data.attribute_columns[name]
    if name in data.feature_names:
        return (data.feature_names.index(name),)
    raise SchemaError(f"unknown attribute {name!r}")


def indicator_directions(data, name):
    """Unit vectors of every encoded column belonging to attribute ``name``."""
    eye = np.eye(data.d)
    return SensitiveDirections(tuple(eye[j] for j in _attribute_columns(data, name)))


def _split_target(data, name):
    cols = _attribute_columns(data, name)
    keep = np.setdiff1d(np.arange(data.d), cols)
    if keep.size == 0:
        raise DataError(f"no features left after removing {name!r}")
    return cols, keep


def _embed(data, keep, coef):
    full = np.zeros(data.d)
    full[keep] = coef
    return full


def _logistic_objective(X, y, w, b, l2):
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
    return loss, z


def fit_logistic_direction(data, target_protected, l2_strength=0.1, tol=1e-6, max_iter=500):
    """Normal vector of an l2-regularized logistic model predicting a binary attribute.

    The objective is the mean log-loss plus ``l2_strength / 2 * ||w||^2``
    (intercept unpenalized), minimized by damped Newton steps.
    """
    if l2_strength < 0:
        raise ConfigError("l2_strength must be nonnegative")
    cols, keep = _split_target(data, target_protected)
    if len(cols) == 1:
        source = data.raw if data.raw is not None else data.features
        values = source[:, cols[0]]
    elif len(cols) == 2:
        values = data.features[:, cols[1]]
    else:
        raise DataError(f"{target_protected!r} is not binary ({len(cols)} levels)")
    levels = np.unique(values)
    if levels.size != 2:
        raise DataError(f"{target_protected!r} is not binary: {levels.size} distinct values")
    y = (values == levels[1]).astype(float)
    X = data.features[:, keep]
    m, p = X.shape

    w, b = np.zeros(p), 0.0
    loss, z = _logistic_objective(X, y, w, b, l2_strength)
    for it in range(1, max_iter + 1):
        s = expit(z)
        resid = s - y
        grad = np.append(X.T @ resid / m + l2_strength * w, resid.mean())
        if np.linalg.norm(grad) <= tol:
            break
        v = s * (1 - s)
        Xa = np.hstack([X, np.ones((m, 1))])
        hess = (Xa * v[:, None]).T @ Xa / m
        hess[:p, :p] += l2_strength * np.eye(p)
        step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        t = 1.0
        while True:
            new_loss, new_z = _logistic_objective(X, y, w + t * step[:p], b + t * step[p], l2_strength)
            if new_loss <= loss + 1e-4 * t * (grad @ step) or t < 1e-10:
                break
            t *= 0.5
        w, b = w + t * step[:p], b + t * step[p]
        loss, z = new_loss, new_z
    else:
        raise ConvergenceError(f"logistic fit for {target_protected!r} did not converge in {max_iter} iterations")
    return LinearDirection(_embed(data, keep, w), float(b), float(l2_strength), iterations=it)


def _ridge_solve(X, y, lam):
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    gram = Xc.T @ Xc + lam * np.eye(X.shape[1])
    if lam == 0 and np.linalg.matrix_rank(gram) < X.shape[1]:
        raise ConfigError("ridge system is singular at lambda=0 (collinear features); use lambda > 0")
    w = np.linalg.solve(gram, Xc.T @ yc)
    return w, ym - xm @ w


def fit_ridge_direction(data, target_protected, l2_grid=(0.1, 1.0, 10.0), folds=5, seed=0):
    """Ridge coefficients for predicting a numeric attribute from the other features.

    The penalty is chosen from ``l2_grid`` by ``folds``-fold cross-validated
    squared error (first grid value wins ties), then refit on all rows.
    The objective is ``||y - Xw - b||^2 + lambda ||w||^2``.
    """
    grid = tuple(float(v) for v in l2_grid)
    if not grid:
        raise ConfigError("ridge grid must be non-empty")
    if any(v < 0 for v in grid):
        raise ConfigError("ridge penalties must be nonnegative")
    cols, keep = _split_target(data, target_protected)
    if len(cols) != 1:
        raise DataError(f"{target_protected!r} is not a numeric column")
    X, y = data.features[:, keep], data.features[:, cols[0]]
    n = X.shape[0]
    if n < folds:
        raise DataError(f"need at least {folds} rows for {folds}-fold cross validation")
    parts = np.array_split(np.random.default_rng(seed).permutation(n), folds)
    errors = {}
    for lam in grid:
        sse = 0.0
        for held in parts:
            train = np.setdiff1d(np.arange(n), held)
            w, b = _ridge_solve(X[train], y[train], lam)
            sse += float(np.sum((y[held] - X[held] @ w - b) ** 2))
        errors[lam] = sse / n
    best = min(grid, key=lambda lam: errors[lam])
    w, b = _ridge_solve(X, y, best)
    return LinearDirection(_embed(data, keep, w), float(b), best, cv_errors=errors)


@dataclass(frozen=True, eq=False)
class ProjectionMetric:
    """``Q = I - U U^T``; ``basis`` holds the columns of ``U``."""

    Q: np.ndarray
    basis: np.ndarray | None = None

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        if self.basis is not None:
            U = np.array(self.basis, dtype=float).reshape(Q.shape[0], -1)
            U.setflags(write=False)
            object.__setattr__(self, "basis", U)

    @property
    def dim(self):
        return self.Q.shape[0]

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d), np.zeros((d, 0)))

    def transform(self, X):
        return np.asarray(X, dtype=float) @ self.Q

    def distance(self, x1, x2):
        return fair_distance(self, x1, x2)

    def to_payload(self):
        return {"dimension": self.dim, "Q": self.Q.ravel().tolist(),
                "rank": None if self.basis is None else self.basis.shape[1]}

    @classmethod
    def from_payload(cls, payload):
        d = int(payload["dimension"])
        Q = np.asarray(payload["Q"], dtype=float)
        if Q.size != d * d:
            raise DataError("metric file: Q has the wrong number of entries")
        return cls(Q.reshape(d, d))

    def save(self, path):
        fileformats.save(path, "metric", self.to_payload())

    @classmethod
    def load(cls, path):
        return cls.from_payload(fileformats.load(path, "metric"))


def build_projection(directions, tol=RANK_TOL):
    """Projection onto the orthogonal complement of ``span(directions)``.

    Directions are normalized and orthogonalized by modified Gram-Schmidt;
    one whose residual falls below ``tol`` adds nothing to the span and is
    dropped.
    """
    if not isinstance(directions, SensitiveDirections):
        directions = SensitiveDirections(tuple(directions))
    d = directions.dim
    basis = []
    for v in directions.directions:
        norm = np.linalg.norm(v)
        if not np.isfinite(norm) or norm == 0:
            raise DegenerateDirectionError("sensitive direction is zero or non-finite")
        u = v / norm
        for q in basis:
            u = u - (q @ u) * q
        # second pass keeps the basis orthonormal to working precision
        for q in basis:
            u = u - (q @ u) * q
        r = np.linalg.norm(u)
        if r >= tol:
            basis.append(u / r)
    U = np.array(basis).T if basis else np.zeros((d, 0))
    Q = np.eye(d) - U @ U.T
    return ProjectionMetric(0.5 * (Q + Q.T), U)


def fair_distance(metric, x1, x2):
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    if x1.shape != x2.shape or x1.shape[-1] != metric.dim:
        raise ValueError("dimension mismatch")
    return float(np.linalg.norm(metric.Q @ (x1 - x2)))


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Squared fair distances stored column by column.

    Column ``j`` owns entries ``indptr[j]:indptr[j+1]`` of ``rows`` and
    ``costs``, sorted by increasing cost and then row index.  Dense mode
    keeps all ``n`` rows per column; neighbor-sparse mode keeps rows with
    cost at most ``tau`` (the diagonal always qualifies).
    """

    mode: str
    n: int
    indptr: np.ndarray
    rows: np.ndarray
    costs: np.ndarray
    tau: float = np.inf

    def __post_init__(self):
        for name in ("indptr", "rows", "costs"):
            getattr(self, name).setflags(write=False)

    @property
    def nnz(self):
        return self.rows.size

    @property
    def columns(self):
        """Column index of every stored entry."""
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def column(self, j):
        lo, hi = self.indptr[j], self.indptr[j + 1]
        return self.rows[lo:hi], self.costs[lo:hi]

    def lookup(self, rows, cols):
        """Costs of arbitrary (row, col) pairs; pairs outside the support give ``inf``."""
        key = self.columns.astype(np.int64) * self.n + self.rows
        order = np.argsort(key, kind="stable")
        want = np.asarray(cols, dtype=np.int64) * self.n + np.asarray(rows, dtype=np.int64)
        pos = np.searchsorted(key[order], want)
        pos = np.minimum(pos, key.size - 1)
        found = key[order][pos] == want
        return np.where(found, self.costs[order][pos], np.inf)

    def to_dense(self, fill=np.inf):
        dense = np.full((self.n, self.n), fill)
        dense[self.rows, self.columns] = self.costs
        return dense

    @classmethod
    def from_dense(cls, C, mode="dense", tau=np.inf):
        C = np.asarray(C, dtype=float)
        n = C.shape[0]
        if C.shape != (n, n):
            raise ValueError("cost matrix must be square")
        if np.any(C < 0) or np.any(np.diag(C) != 0):
            raise DataError("costs must be nonnegative with a zero diagonal")
        return cls._from_blocks(n, [C], mode, tau)

    @classmethod
    def _from_blocks(cls, n, blocks, mode, tau):
        counts, rows, costs = [], [], []
        for block in blocks:
            order = np.argsort(block, axis=0, kind="stable")
            sorted_costs = np.take_along_axis(block, order, axis=0)
            if mode == "dense":
                counts.append(np.full(block.shape[1], n))
                rows.append(order.T.ravel())
                costs.append(sorted_costs.T.ravel())
            else:
                keep = sorted_costs <= tau
                counts.append(keep.sum(axis=0))
                rows.append(order.T[keep.T])
                costs.append(sorted_costs.T[keep.T])
        indptr = np.concatenate([[0], np.cumsum(np.concatenate(counts))]).astype(np.int64)
        return cls(mode, n, indptr, np.concatenate(rows).astype(np.int64),
                   np.concatenate(costs).astype(float), float(tau))


def build_cost_matrix(metric, data, mode="dense", tau=None, chunk=512):
    """``C_ij = d_x(x_i, x_j)^2`` for every pair of rows of ``data``.

    ``data`` may be a :class:`Dataset` or a feature matrix.  Costs come from
    ``cdist`` on the projected rows, so the diagonal is exactly zero and the
    matrix exactly symmetric.
    """
    X = np.asarray(getattr(data, "features", data), dtype=float)
    if X.ndim != 2 or X.shape[1] != metric.dim:
        raise ValueError(f"metric dimension {metric.dim} does not match data with shape {X.shape}")
    if mode not in ("dense", "sparse"):
        raise ConfigError(f"unknown cost-matrix mode {mode!r}")
    if mode == "sparse":
        if tau is None or not tau > 0:
            raise ConfigError("sparse mode needs a cutoff tau > 0")
    else:
        tau = np.inf
    Z = metric.transform(X)
    n = Z.shape[0]
    blocks = (cdist(Z, Z[start:start + chunk], "sqeuclidean") for start in range(0, n, chunk))
    return CostMatrix._from_blocks(n, blocks, mode, tau)
