"""Weighted second-order gradient boosting with regression trees, logistic loss.

Trees are grown by exact greedy search.  A split of a node with gradient
and hessian sums ``G``, ``H`` into ``(G_L, H_L)`` and ``(G_R, H_R)`` scores

    gain = 0.5 * (G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam))

and a leaf takes the Newton value ``-G/(H+lam)``.  Rows with zero weight
are ignored entirely, so they never influence thresholds.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import fileformats
from .errors import ConfigError, DataError


def logistic_loss(margin, label):
    """``log(1 + exp(margin)) - label * margin``, without cancellation for 0/1 labels."""
    margin = np.asarray(margin, dtype=float)
    signed = np.where(np.asarray(label) == 1, -margin, margin)
    out = np.logaddexp(0.0, signed)
    return out if out.ndim else float(out)


def grad_hess(margin, label, weight):
    """First and second derivative of ``weight * logistic_loss`` in the margin."""
    p = expit(np.asarray(margin, dtype=float))
    weight = np.asarray(weight, dtype=float)
    g = weight * (p - label)
    h = weight * p * (1.0 - p)
    return (g, h) if np.ndim(g) else (float(g), float(h))


@dataclass(frozen=True)
class BoostConfig:
    max_depth: int = 3
    reg_lambda: float = 1.0
    min_child_weight: float = 0.0
    eta: float = 0.3
    scale_pos_weight: float = 1.0
    base_margin: float = 0.0

    def __post_init__(self):
        if self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")
        if self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ConfigError("lambda and min_child_weight must be >= 0")
        if not self.eta > 0 or not self.scale_pos_weight > 0:
            raise ConfigError("eta and scale_pos_weight must be > 0")


@dataclass(frozen=True, eq=False)
class WeightedExamples:
    features: np.ndarray
    targets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.targets, dtype=np.int64)
        w = np.array(self.weights, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],) or w.shape != y.shape:
            raise ValueError("features, targets and weights have inconsistent shapes")
        if not np.isin(y, (0, 1)).all():
            raise DataError("targets must be 0/1")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise DataError("weights must be finite and nonnegative")
        for arr in (X, y, w):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "weights", w)

    @property
    def m(self):
        return self.targets.size

    def effective_weights(self, cfg):
        return self.weights * np.where(self.targets == 1, cfg.scale_pos_weight, 1.0)


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Flat node arrays; ``feature[k] == -1`` marks a leaf.  Rows with ``x < threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        for name, dtype in (("feature", np.int64), ("threshold", float), ("left", np.int64),
                            ("right", np.int64), ("value", float)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def split_features(self):
        return sorted(set(self.feature[self.feature >= 0].tolist()))

    def apply(self, X):
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            at = node[active]
            go_left = X[active, self.feature[at]] < self.threshold[at]
            node[active] = np.where(go_left, self.left[at], self.right[at])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_payload(self):
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(), "value": self.value.tolist()}

    @classmethod
    def from_payload(cls, payload):
        return cls(**{k: payload[k] for k in ("feature", "threshold", "left", "right", "value")})

    def same_as(self, other):
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("feature", "threshold", "left", "right", "value"))


def _midpoint(a, b):
    t = 0.5 * a + 0.5 * b
    # adjacent floats: the midpoint rounds onto a, so split right at b
    return b if t <= a else t


def _gain_terms(G, H, lam):
    denom = H + lam
    return np.divide(G * G, denom, out=np.zeros_like(G, dtype=float), where=denom > 0)


def _leaf_value(g, h, lam):
    G, H = math.fsum(g), math.fsum(h)
    return -G / (H + lam) if H + lam > 0 else 0.0


def fit_tree(examples, margins, cfg):
    """Grow one tree on the gradients of the weighted logistic loss at ``margins``."""
    weights = examples.effective_weights(cfg)
    g, h = grad_hess(np.asarray(margins, dtype=float), examples.targets, weights)
    return fit_tree_gh(examples.features, np.atleast_1d(g), np.atleast_1d(h), cfg,
                       keep=weights > 0)


def fit_tree_gh(X, g, h, cfg, keep=None):
    """Exact greedy tree for given per-row gradients and hessians.

    Rows are first put into a canonical order (lexicographic in features,
    then g, then h), so the result does not depend on input order.  Ties in
    gain go to the smallest feature index and then the smallest threshold.
    """
    X = np.asarray(X, dtype=float)
    if keep is not None:
        X, g, h = X[keep], g[keep], h[keep]
    lam, mcw = cfg.reg_lambda, cfg.min_child_weight
    feature, threshold, left, right, value = [], [], [], [], []
    if X.shape[0] == 0:
        return RegressionTree([-1], [0.0], [-1], [-1], [0.0])
    canon = np.lexsort(np.vstack([h, g, X.T[::-1]]))
    X, g, h = X[canon], g[canon], h[canon]
    m, d = X.shape
    presorted = np.argsort(X, axis=0, kind="stable")

    def new_node():
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
            arr.append(v)
        return len(feature) - 1

    stack = [(new_node(), np.ones(m, dtype=bool), 0)]
    while stack:
        node, member, depth = stack.pop()
        rows = np.flatnonzero(member)
        value[node] = _leaf_value(g[rows], h[rows], lam)
        if depth >= cfg.max_depth or rows.size < 2:
            continue
        best = _best_split(X, g, h, presorted, member, rows.size, lam, mcw)
        if best is None:
            continue
        f, t = best
        go_left = member & (X[:, f] < t)
        go_right = member & ~(X[:, f] < t)
        feature[node], threshold[node] = f, t
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], go_right, depth + 1))
        stack.append((left[node], go_left, depth + 1))
    return RegressionTree(feature, threshold, left, right, value)


def _best_split(X, g, h, presorted, member, count, lam, mcw):
    d = X.shape[1]
    order = presorted.T[member[presorted.T]].reshape(d, count)
    xs = np.take_along_axis(X.T, order, axis=1)
    cg = np.cumsum(g[order], axis=1)
    ch = np.cumsum(h[order], axis=1)
    G, H = cg[:, -1:], ch[:, -1:]
    GL, HL = cg[:, :-1], ch[:, :-1]
    GR, HR = G - GL, H - HL
    gain = 0.5 * (_gain_terms(GL, HL, lam) + _gain_terms(GR, HR, lam) - _gain_terms(G, H, lam))
    valid = (xs[:, :-1] < xs[:, 1:]) & (HL >= mcw) & (HR >= mcw) & (gain > 0)
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    f, k = np.unravel_index(int(np.argmax(gain)), gain.shape)
    return int(f), float(_midpoint(xs[f, k], xs[f, k + 1]))


@dataclass(frozen=True, eq=False)
class Ensemble:
    """``margin(x) = base_margin + sum_t eta_t * tree_t(x)``."""

    base_margin: float = 0.0
    trees: tuple = ()
    etas: tuple = ()
    loss: str = "logistic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.trees) != len(self.etas):
            raise ValueError("one eta per tree")

    def __len__(self):
        return len(self.trees)

    def append(self, tree, eta):
        return Ensemble(self.base_margin, self.trees + (tree,), self.etas + (float(eta),), self.loss, self.meta)

    def with_meta(self, **meta):
        return Ensemble(self.base_margin, self.trees, self.etas, self.loss, {**self.meta, **meta})

    def predict_margin(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], float(self.base_margin))
        for tree, eta in zip(self.trees, self.etas):
            out = out + eta * tree.predict(X)
        return out

    def predict_label(self, X, threshold=0.0):
        return (self.predict_margin(X) > threshold).astype(np.int64)

    def split_features(self):
        return sorted({f for tree in self.trees for f in tree.split_features()})

    def to_payload(self):
        return {"loss": self.loss, "base_margin": float(self.base_margin), "meta": self.meta,
                "trees": [{"eta": eta, **tree.to_payload()} for tree, eta in zip(self.trees, self.etas)]}

    @classmethod
    def from_payload(cls, payload):
        trees = tuple(RegressionTree.from_payload(t) for t in payload["trees"])
        etas = tuple(float(t["eta"]) for t in payload["trees"])
        return cls(float(payload["base_margin"]), trees, etas, payload.get("loss", "logistic"),
                   payload.get("meta", {}))

    def save(self, path):
        fileformats.save(path, "model", self.to_payload())

    @classmethod
    def load(cls, path):
        return cls.from_payload(fileformats.load(path, "model"))


def predict_margin(model, X):
    return model.predict_margin(X)


def predict_label(model, X, threshold=0.0):
    return model.predict_label(X, threshold)


def weighted_loss(model, examples, cfg, margins=None):
    margins = model.predict_margin(examples.features) if margins is None else margins
    return math.fsum(examples.effective_weights(cfg) * logistic_loss(margins, examples.targets))


def boost_step(model, examples, cfg, margins=None):
    """Append one tree fitted at the current margins, shrunk by ``cfg.eta``."""
    if margins is None:
        margins = model.predict_margin(examples.features)
    return model.append(fit_tree(examples, margins, cfg), cfg.eta)


def boost(examples, cfg, steps, model=None):
    """Run ``steps`` boosting rounds with fixed example weights."""
    model = model or Ensemble(cfg.base_margin)
    margins = model.predict_margin(examples.features)
    for _ in range(steps):
        tree = fit_tree(examples, margins, cfg)
        model = model.append(tree, cfg.eta)
        margins = margins + cfg.eta * tree.predict(examples.features)
    return model
