"""Training drivers: BuDRO (weighted boosting against a transport adversary),
the generic functional-gradient variant, and the plain weighted baseline.

Every driver starts with the same plain boosting step (weight ``1/n`` on
each training point with its observed label), then adds ``steps`` trees.
In BuDRO each later tree is fitted on the augmented set, with every copy
``(x_i, k)`` weighted by the mass the adversary's optimal plan moves onto it.
"""
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import fileformats
from .dataio import augment_support
from .errors import ConfigError, SolverError
from .fairmetric import build_cost_matrix
from .gbdt import BoostConfig, Ensemble, WeightedExamples, fit_tree, fit_tree_gh
from .otsolver import SOLVERS, LossColumns, SolverConfig, TransportPlan, plan_marginals, solve, worst_case_loss


@dataclass(frozen=True)
class BuDROConfig:
    """``solver_cfg.epsilon`` is overridden by ``epsilon``.

    ``cost_mode="sparse"`` keeps only neighbor pairs with cost at most ``tau``.
    In residual mode ``step_rule`` picks a fixed step (``boost_cfg.eta``) or
    the theoretical one.
    """

    epsilon: float = 0.1
    steps: int = 10
    solver: str = "dual-bisection"
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)
    boost_cfg: BoostConfig = field(default_factory=BoostConfig)
    mode: str = "weighted"
    step_rule: str = "fixed"
    cost_mode: str = "dense"
    tau: float | None = None
    seed: int = 0
    record_margins: bool = False
    record_plans: bool = False

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ConfigError("epsilon must be >= 0")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVERS)}")
        if self.mode not in ("weighted", "residual"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.step_rule not in ("fixed", "theoretical"):
            raise ConfigError(f"unknown step rule {self.step_rule!r}")

    @property
    def inner(self):
        return replace(self.solver_cfg, epsilon=float(self.epsilon), seed=self.seed)


@dataclass
class StepRecord:
    t: int
    robust_loss: float
    empirical_loss: float
    plan_cost: float
    eta_dual: float
    seconds: float = 0.0
    step_size: float | None = None
    accepted: bool = True


@dataclass
class TrainingTrace:
    records: list = field(default_factory=list)
    margins: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    losses: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_payload(self, with_time=False):
        keys = ["t", "robust_loss", "empirical_loss", "plan_cost", "eta_dual", "step_size", "accepted"]
        if with_time:
            keys.append("seconds")
        return {"fields": keys, "records": [[getattr(r, k) for k in keys] for r in self.records]}

    def save(self, path, with_time=False):
        fileformats.save(path, "trace", self.to_payload(with_time))


def _identity_weights(labels):
    n = labels.size
    w = np.zeros(2 * n)
    w[labels * n + np.arange(n)] = 1.0 / n
    return w


def _empirical(R):
    return worst_case_loss(R, TransportPlan.identity(R.n))


def _initial_model(X2, y2, w0, margins, cfg):
    model = Ensemble(cfg.base_margin)
    tree = fit_tree(WeightedExamples(X2, y2, w0), np.concatenate([margins, margins]), cfg)
    return model.append(tree, cfg.eta), tree


def _cost(metric, train, cfg, C):
    if C is not None:
        return C
    return build_cost_matrix(metric, train.features, cfg.cost_mode, cfg.tau)


def _inner(R, C, cfg, t):
    try:
        return solve(R, C, cfg.inner, cfg.solver)
    except SolverError as err:
        raise SolverError(str(err), step=t) from err


def train_budro(train, metric, cfg, C=None):
    """Fair gradient boosted trees: alternate an inner transport solve and one weighted tree."""
    if cfg.mode == "residual":
        return train_fair_generic(train, metric, cfg, C=C)
    X, y, n = train.features, train.labels, train.n
    C = _cost(metric, train, cfg, C)
    aug = augment_support(train)
    X2, y2 = aug.features, aug.labels
    boost = cfg.boost_cfg
    margins = np.full(n, float(boost.base_margin))
    model, tree = _initial_model(X2, y2, _identity_weights(y), margins, boost)
    margins = margins + boost.eta * tree.predict(X)
    trace = TrainingTrace()
    if cfg.record_margins:
        trace.margins.append(margins.copy())
    for t in range(1, cfg.steps + 1):
        start = time.perf_counter()
        R = LossColumns.from_margins(margins, y)
        sol = _inner(R, C, cfg, t)
        weights = plan_marginals(sol.plan, y)
        tree = fit_tree(WeightedExamples(X2, y2, weights), np.concatenate([margins, margins]), boost)
        model = model.append(tree, boost.eta)
        margins = margins + boost.eta * tree.predict(X)
        trace.records.append(StepRecord(t, sol.primal_value, _empirical(R), sol.plan_cost, sol.eta,
                                        time.perf_counter() - start, boost.eta))
        if cfg.record_margins:
            trace.margins.append(margins.copy())
        if cfg.record_plans:
            trace.plans.append(sol.plan)
            trace.losses.append(R)
    return model.with_meta(method="budro", epsilon=float(cfg.epsilon), solver=cfg.solver), trace


def train_baseline(train, boost_cfg, steps, weights=None, record_margins=False, method="baseline"):
    """Plain weighted boosting: weight ``1/n`` per row unless ``weights`` is given."""
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    X, y, n = train.features, train.labels, train.n
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    examples = WeightedExamples(X, y, w)
    margins = np.full(n, float(boost_cfg.base_margin))
    model = Ensemble(boost_cfg.base_margin)
    trace = TrainingTrace()
    for t in range(steps + 1):
        start = time.perf_counter()
        tree = fit_tree(examples, margins, boost_cfg)
        model = model.append(tree, boost_cfg.eta)
        margins = margins + boost_cfg.eta * tree.predict(X)
        if t:
            loss = _empirical(LossColumns.from_margins(margins, y))
            trace.records.append(StepRecord(t, loss, loss, 0.0, 0.0, time.perf_counter() - start, boost_cfg.eta))
        if record_margins:
            trace.margins.append(margins.copy())
    return model.with_meta(method=method), trace


def danskin_gradient(R, plan, margins, labels):
    """Gradient of the worst-case loss in the margins at the optimal plan.

    Component ``i`` is ``sum_k (sigmoid(f_i) - k) * P(i, k)`` with ``P`` the
    plan's mass on augmented point ``(i, k)``.
    """
    margins = np.asarray(margins, dtype=float)
    n = margins.size
    w = plan_marginals(plan, labels)
    return expit(margins) * (w[:n] + w[n:]) - w[n:]


def build_weights(plan, labels):
    """Augmented-set weights: the concatenation of the plan applied to each class indicator."""
    return plan_marginals(plan, labels)


def theoretical_step(grad, h, omega):
    """``-<grad, h> / (omega * ||h||^2)``; zero when ``h`` is not a descent direction."""
    inner = float(np.dot(grad, h))
    norm = float(np.dot(h, h))
    if inner >= 0 or norm == 0:
        return 0.0
    return -inner / (omega * norm)


def least_squares_tree(cfg):
    """Default weak learner for residual mode: a least-squares regression tree."""
    tree_cfg = replace(cfg, reg_lambda=0.0, min_child_weight=1.0)

    def fit(X, residual):
        residual = np.asarray(residual, dtype=float)
        return fit_tree_gh(X, -residual, np.ones_like(residual), tree_cfg)

    return fit


def train_fair_generic(train, metric, cfg, weak_fit=None, C=None):
    """Functional gradient descent on the worst-case loss with Danskin pseudo-residuals.

    Each step fits ``h_t`` to the negative gradient and moves
    ``f <- f + a_t h_t``.  With the theoretical rule ``a_t`` uses the
    curvature bound ``1/(4n)`` of the mean logistic loss; a step whose ``h_t``
    is not a descent direction is rejected and logged.
    """
    X, y, n = train.features, train.labels, train.n
    C = _cost(metric, train, cfg, C)
    boost = cfg.boost_cfg
    weak_fit = weak_fit or least_squares_tree(boost)
    omega = 1.0 / (4 * n)
    aug = augment_support(train)
    margins = np.full(n, float(boost.base_margin))
    model, tree = _initial_model(aug.features, aug.labels, _identity_weights(y), margins, boost)
    margins = margins + boost.eta * tree.predict(X)
    trace = TrainingTrace()
    if cfg.record_margins:
        trace.margins.append(margins.copy())
    for t in range(1, cfg.steps + 1):
        start = time.perf_counter()
        R = LossColumns.from_margins(margins, y)
        sol = _inner(R, C, cfg, t)
        grad = danskin_gradient(R, sol.plan, margins, y)
        learner = weak_fit(X, -grad)
        h = learner.predict(X)
        if cfg.step_rule == "theoretical":
            alpha = theoretical_step(grad, h, omega)
        else:
            alpha = boost.eta if np.dot(grad, h) < 0 else 0.0
        accepted = alpha > 0
        if accepted:
            model = model.append(learner, alpha)
            margins = margins + alpha * h
        trace.records.append(StepRecord(t, sol.primal_value, _empirical(R), sol.plan_cost, sol.eta,
                                        time.perf_counter() - start, alpha, accepted))
        if cfg.record_margins:
            trace.margins.append(margins.copy())
        if cfg.record_plans:
            trace.plans.append(sol.plan)
            trace.losses.append(R)
    meta = dict(method="budro-residual", epsilon=float(cfg.epsilon), solver=cfg.solver)
    return model.with_meta(**meta), trace


def worst_case_at(model, data, C, cfg):
    """Worst-case loss ``L(f)`` of a fitted model on ``data`` (used for monitoring)."""
    R = LossColumns.from_margins(model.predict_margin(data.features), data.labels)
    return solve(R, C, cfg.inner, cfg.solver).primal_value
