"""Inner solvers for the budget-constrained transport problem

    maximize <R, Pi>  over  Pi >= 0,  Pi^T 1 = 1/n,  <C, Pi> <= eps,

where ``R_ij = loss(f(x_i), y_j)`` and ``C_ij`` is the squared fair distance.
With binary labels ``R`` is held as two loss vectors ``r0``, ``r1``.

The Lagrangian dual is one-dimensional,

    M(eta) = eps * eta + mean_j max_i (R_ij - eta * C_ij),

convex and piecewise linear, so the exact solver bisects on its slope and
then rebuilds a primal plan from the tied rows at the optimal ``eta``.
The entropic variants add ``-gamma * <log Pi, Pi>`` and have a closed-form
plan for every ``eta``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, NoRootError, SolverError
from .fairmetric import CostMatrix
from .gbdt import logistic_loss

SOLVERS = ("dual-bisection", "dual-sgd", "entropic", "entropic-sgd")


@dataclass(frozen=True, eq=False)
class LossColumns:
    """``R_ij = r1[i] if labels[j] == 1 else r0[i]``."""

    r0: np.ndarray
    r1: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        r0, r1 = (np.array(v, dtype=float) for v in (self.r0, self.r1))
        labels = np.array(self.labels, dtype=np.int64)
        if not (r0.shape == r1.shape == labels.shape) or r0.ndim != 1:
            raise ValueError("r0, r1 and labels must be vectors of equal length")
        if not (np.all(np.isfinite(r0)) and np.all(np.isfinite(r1))):
            raise SolverError("loss values must be finite")
        for arr in (r0, r1, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "r0", r0)
        object.__setattr__(self, "r1", r1)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_margins(cls, margins, labels):
        margins = np.asarray(margins, dtype=float)
        return cls(logistic_loss(margins, 0), logistic_loss(margins, 1), labels)

    @property
    def n(self):
        return self.r0.size

    def dense(self):
        return np.where(self.labels[None, :] == 1, self.r1[:, None], self.r0[:, None])

    @property
    def spread(self):
        both = np.concatenate([self.r0, self.r1])
        return float(both.max() - both.min())


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse plan in column-major order; ``costs`` caches ``C`` on the support."""

    n: int
    cols: np.ndarray
    rows: np.ndarray
    masses: np.ndarray
    costs: np.ndarray

    def __post_init__(self):
        for name in ("cols", "rows", "masses", "costs"):
            arr = np.array(getattr(self, name), dtype=float if name in ("masses", "costs") else np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def indptr(self):
        return np.searchsorted(self.cols, np.arange(self.n + 1), side="left")

    def to_dense(self):
        dense = np.zeros((self.n, self.n))
        np.add.at(dense, (self.rows, self.cols), self.masses)
        return dense

    def column_sums(self):
        return np.bincount(self.cols, weights=self.masses, minlength=self.n)

    @property
    def cost(self):
        return float(self.masses @ self.costs)

    def entries(self):
        return list(zip(self.cols.tolist(), self.rows.tolist(), self.masses.tolist()))

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, idx, idx, np.full(n, 1.0 / n), np.zeros(n))


@dataclass(frozen=True, eq=False)
class DualSolution:
    eta: float
    dual_value: float
    primal_value: float
    plan: TransportPlan
    method: str = ""
    recovery: str = ""
    plan_cost: float = 0.0
    over_budget: bool = False
    unique: bool | None = None
    iterations: int = 0
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for every inner solver.

    ``gamma=None`` means 1% of the loss range.  ``step_size`` is the initial
    SGD step; with ``schedule="sqrt"`` step ``t`` uses ``step_size / sqrt(t)``.
    """

    epsilon: float = 0.0
    gamma: float | None = None
    batch_size: int = 200
    step_size: float = 1e-4
    schedule: str = "sqrt"
    momentum: float = 0.9
    max_iters: int = 100
    tol: float = 1e-8
    window: int = 10
    eta0: float = 0.1
    root_tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.batch_size < 1 or self.max_iters < 1 or self.window < 1:
            raise ConfigError("batch_size, max_iters and window must be positive")
        if not self.step_size > 0 or not self.tol > 0 or self.root_tol < 0:
            raise ConfigError("step_size and tol must be positive, root_tol nonnegative")
        if self.schedule not in ("sqrt", "constant"):
            raise ConfigError(f"unknown step schedule {self.schedule!r}")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.eta0 < 0:
            raise ConfigError("eta0 must be nonnegative")


def _as_cost(C):
    return C if isinstance(C, CostMatrix) else CostMatrix.from_dense(C)


class _Instance:
    """Flattened (R, C) pair: one value of ``R`` per stored cost entry."""

    def __init__(self, R, C):
        C = _as_cost(C)
        if R.n != C.n:
            raise ValueError(f"loss columns have n={R.n} but cost matrix has n={C.n}")
        self.R, self.C, self.n = R, C, C.n
        self.cols = C.columns
        self.rows = C.rows
        self.costs = C.costs
        self.starts = C.indptr[:-1]
        self.r = np.where(R.labels[self.cols] == 1, R.r1[self.rows], R.r0[self.rows])
        self.pos = np.arange(self.rows.size)

    def values(self, eta):
        return self.r - eta * self.costs if eta else self.r.copy()

    def column_max(self, vals):
        return np.maximum.reduceat(vals, self.starts)

    def tied(self, eta):
        vals = self.values(eta)
        best = self.column_max(vals)
        scale = 1.0 + np.abs(best) + eta * np.maximum.reduceat(self.costs, self.starts)
        return vals >= (best - 1e-12 * scale)[self.cols], best

    def pick(self, mask, last=False):
        """First (or last) masked entry per column, in (cost, row) order."""
        if last:
            return np.maximum.reduceat(np.where(mask, self.pos, -1), self.starts)
        return np.minimum.reduceat(np.where(mask, self.pos, self.pos.size), self.starts)

    def evaluate(self, eta, eps):
        """Dual value with the right and left slopes and the matching argmax entries."""
        mask, best = self.tied(eta)
        low, high = self.pick(mask), self.pick(mask, last=True)
        value = eps * eta + math.fsum(best) / self.n
        right = eps - math.fsum(self.costs[low]) / self.n
        left = eps - math.fsum(self.costs[high]) / self.n
        return value, right, left, low, high

    def eta_upper(self):
        diag = self.r[self.rows == self.cols]
        if diag.size != self.n:
            raise SolverError("cost matrix must store every diagonal entry")
        positive = self.costs > 0
        if not positive.any():
            return 1.0
        ratios = (self.r[positive] - diag[self.cols[positive]]) / self.costs[positive]
        return max(0.0, float(ratios.max())) + 1.0

    def plan(self, entries, masses=None):
        entries = np.asarray(entries)
        if masses is None:
            masses = np.full(entries.size, 1.0 / self.n)
        order = np.lexsort((self.rows[entries], self.cols[entries]))
        entries, masses = entries[order], np.asarray(masses)[order]
        return TransportPlan(self.n, self.cols[entries], self.rows[entries], masses, self.costs[entries])

    def primal(self, plan):
        return worst_case_loss(self.R, plan)


def dual_objective(R, C, eps, eta):
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    inst = _Instance(R, C)
    return eps * eta + math.fsum(inst.column_max(inst.values(eta))) / inst.n


def dual_subgradient(R, C, eps, eta):
    """``eps - mean_j C[i_j, j]`` with ``i_j`` the cheapest (then lowest-index) argmax row."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    return _Instance(R, C).evaluate(eta, eps)[1]


def _mix(inst, low, high, eps, eta):
    """Blend two argmax assignments so the plan spends exactly ``eps``.

    Starts from the cheap assignment ``low`` and moves columns, in increasing
    column order, onto ``high`` until the budget is met; the last moved
    column is split.  Returns ``None`` if the budget cannot be met.
    """
    n = inst.n
    c_low, c_high = inst.costs[low], inst.costs[high]
    base = math.fsum(c_low) / n
    if eta == 0:
        return (inst.plan(low), "exact") if base <= eps * (1 + 1e-12) + 1e-15 else None
    deficit = eps - base
    extra = (c_high - c_low) / n
    if deficit < -1e-8 * max(1.0, eps) or math.fsum(extra) < deficit - 1e-8 * max(1.0, eps):
        return None
    entries, masses = list(low), [1.0 / n] * n
    if deficit <= 0:
        return inst.plan(entries, masses), "exact"
    for j in np.flatnonzero(extra > 0):
        if extra[j] <= deficit:
            entries[j] = high[j]
            deficit -= extra[j]
            if deficit <= 0:
                break
            continue
        share = deficit / extra[j] / n
        entries.append(high[j])
        masses[j] = 1.0 / n - share
        masses.append(share)
        break
    return inst.plan(entries, masses), "exact"


def recover_primal_heuristic(R, C, eta, seed=0, inst=None):
    """Send each column's whole mass to one argmax row drawn uniformly among ties."""
    inst = inst or _Instance(R, C)
    mask, _ = inst.tied(eta)
    rng = np.random.default_rng(seed)
    counts = np.add.reduceat(mask.astype(np.int64), inst.starts)
    draw = np.floor(rng.random(inst.n) * counts).astype(np.int64)
    rank = np.cumsum(mask) - 1 - np.concatenate([[0], np.cumsum(counts)[:-1]])[inst.cols]
    chosen = mask & (rank == draw[inst.cols])
    return inst.plan(np.flatnonzero(chosen))


def recover_primal_exact(R, C, eps, eta, inst=None, seed=0):
    """Primal plan from complementary slackness at the dual optimum ``eta``.

    Columns with a single argmax send all mass there; tied columns are split
    between their cheapest and dearest tied rows so that the budget binds
    when ``eta > 0``.  Falls back to the heuristic if that is impossible.
    """
    inst = inst or _Instance(R, C)
    mask, _ = inst.tied(eta)
    out = _mix(inst, inst.pick(mask), inst.pick(mask, last=True), eps, eta)
    if out is None:
        return recover_primal_heuristic(R, C, eta, seed, inst), "heuristic-fallback"
    return out


def _solution(inst, eps, eta, plan, method, recovery, dual_value=None, **extra):
    cost = plan.cost
    if dual_value is None:
        dual_value = dual_objective_inst(inst, eps, eta)
    return DualSolution(
        eta=float(eta), dual_value=dual_value, primal_value=inst.primal(plan),
        plan=plan, method=method, recovery=recovery, plan_cost=cost,
        over_budget=bool(cost > eps * (1 + 1e-6) + 1e-12), **extra)


def dual_objective_inst(inst, eps, eta):
    return eps * eta + math.fsum(inst.column_max(inst.values(eta))) / inst.n


def solve_dual_bisection(R, C, eps, tol=1e-12, max_iter=200):
    """Exact LP optimum by safeguarded bisection on the dual slope.

    Each step tries the intersection of the tangent lines at the bracket
    ends, which lands on the optimal corner once the bracket straddles a
    single kink; a plain midpoint is used whenever the bracket fails to
    halve.  Stops as soon as some ``eta`` has a nonnegative right slope and
    a nonpositive left slope.
    """
    if eps < 0:
        raise ConfigError("epsilon must be >= 0")
    inst = _Instance(R, C)
    value, right, left, low, high = inst.evaluate(0.0, eps)
    if right >= 0:
        plan, how = _mix(inst, low, high, eps, 0.0)
        return _solution(inst, eps, 0.0, plan, "dual-bisection", how, iterations=0)
    lo = (0.0, value, right, low)
    hi_eta = inst.eta_upper()
    it, found, halve = 0, None, False
    value, right, left, low, high = inst.evaluate(hi_eta, eps)
    if right >= 0 and left <= 0:
        found = (hi_eta, low, high)
    hi = (hi_eta, value, left, high)
    while found is None and it < max_iter:
        width = hi[0] - lo[0]
        if width <= tol * max(1.0, hi[0]):
            break
        it += 1
        eta = (hi[1] - hi[2] * hi[0] - lo[1] + lo[2] * lo[0]) / (lo[2] - hi[2])
        if halve or not lo[0] < eta < hi[0]:
            eta = 0.5 * (lo[0] + hi[0])
        value, right, left, low, high = inst.evaluate(eta, eps)
        if right >= 0 and left <= 0:
            found = (eta, low, high)
        elif right < 0:
            lo = (eta, value, right, low)
        else:
            hi = (eta, value, left, high)
        # fall back to a midpoint whenever the tangent step fails to halve the bracket
        halve = hi[0] - lo[0] > 0.5 * width
    if found is not None:
        eta, low, high = found
    else:
        # bracket collapsed onto one kink: the assignments at its ends are both optimal there
        eta = (hi[1] - hi[2] * hi[0] - lo[1] + lo[2] * lo[0]) / (lo[2] - hi[2])
        eta = min(max(eta, lo[0]), hi[0])
        low, high = hi[3], lo[3]
    out = _mix(inst, low, high, eps, eta)
    if out is None:
        plan, how = recover_primal_heuristic(R, C, eta, 0, inst), "heuristic-fallback"
    else:
        plan, how = out
    return _solution(inst, eps, eta, plan, "dual-bisection", how, iterations=it)


def solve_dual_sgd(R, C, cfg):
    """Projected stochastic subgradient descent on the dual, heuristic primal.

    Each step samples ``batch_size`` columns without replacement and moves
    ``eta`` against ``eps - mean C[i_j, j]`` (with momentum), clipping at 0.
    Stops after ``max_iters`` steps or once ``|d eta| < tol`` for ``window``
    consecutive steps.
    """
    inst = _Instance(R, C)
    eps, n = cfg.epsilon, inst.n
    batch = min(cfg.batch_size, n)
    rng = np.random.default_rng(cfg.seed)
    eta, velocity, quiet, history = float(cfg.eta0), 0.0, 0, []
    counts = np.diff(inst.C.indptr)
    for t in range(1, cfg.max_iters + 1):
        cols = np.sort(rng.choice(n, size=batch, replace=False)) if batch < n else np.arange(n)
        grad = _batch_subgradient(inst, eps, eta, cols, counts)
        velocity = cfg.momentum * velocity + grad
        step = cfg.step_size / math.sqrt(t) if cfg.schedule == "sqrt" else cfg.step_size
        new = max(0.0, eta - step * velocity)
        quiet = quiet + 1 if abs(new - eta) < cfg.tol else 0
        eta = new
        history.append(eta)
        if quiet >= cfg.window:
            break
    plan = recover_primal_heuristic(R, C, eta, cfg.seed, inst)
    return _solution(inst, eps, eta, plan, "dual-sgd", "heuristic", iterations=t,
                     info={"eta_history": history})


def _batch_subgradient(inst, eps, eta, cols, counts):
    lo, hi = inst.C.indptr[cols], inst.C.indptr[cols + 1]
    idx = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]) if cols.size < inst.n else inst.pos
    vals = inst.r[idx] - eta * inst.costs[idx]
    starts = np.concatenate([[0], np.cumsum(counts[cols])[:-1]])
    best = np.maximum.reduceat(vals, starts)
    seg = np.repeat(np.arange(cols.size), counts[cols])
    scale = 1.0 + np.abs(best) + eta * np.maximum.reduceat(inst.costs[idx], starts)
    mask = vals >= (best - 1e-12 * scale)[seg]
    local = np.arange(idx.size)
    first = np.minimum.reduceat(np.where(mask, local, idx.size), starts)
    return eps - math.fsum(inst.costs[idx[first]]) / cols.size


# entropic regularization ---------------------------------------------------------

def default_gamma(R):
    return 0.01 * R.spread if R.spread > 0 else 1e-3


def _entropic_columns(inst, eta, gamma, entries=None):
    """Log-weights and per-column softmax over the stored support."""
    if entries is None:
        logits = inst.values(eta) / gamma
        starts = inst.starts
        counts = np.diff(inst.C.indptr)
    else:
        logits = (inst.r[entries] - eta * inst.costs[entries]) / gamma
        counts = np.bincount(inst.cols[entries], minlength=inst.n)
        counts = counts[counts > 0]
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    peak = np.maximum.reduceat(logits, starts)
    shifted = np.exp(logits - np.repeat(peak, counts))
    totals = np.add.reduceat(shifted, starts)
    return shifted / np.repeat(totals, counts)


def sinkhorn_objective(R, C, eps, gamma, eta, inst=None):
    """``m(eta) = eps - <C, Pi(eta)>`` for the entropic plan at ``eta``.

    ``Pi(eta)_ij = T_ij u_j`` with ``T = exp((R - eta C)/gamma)`` and
    ``u_j = 1 / (n sum_i T_ij)``, evaluated in log space.
    """
    if not gamma > 0 or eta < 0:
        raise ValueError("need gamma > 0 and eta >= 0")
    inst = inst or _Instance(R, C)
    probs = _entropic_columns(inst, eta, gamma)
    cost = math.fsum(np.add.reduceat(probs * inst.costs, inst.starts)) / inst.n
    if not math.isfinite(cost):
        raise SolverError(f"entropic evaluation overflowed at eta={eta}, gamma={gamma}")
    return eps - cost


def _entropic_plan(inst, eta, gamma, entries=None):
    if entries is None:
        entries = inst.pos
    probs = _entropic_columns(inst, eta, gamma, None if entries is inst.pos else entries)
    return inst.plan(entries, probs / inst.n)


def solve_entropic(R, C, eps, gamma=None, root_tol=0.0, max_doublings=60):
    """Entropic plan whose cost meets the budget.

    Finds the root of the nondecreasing ``m(eta)`` by bracket doubling and
    bisection, returning the plan at the feasible end of the final bracket.
    ``root_tol = 0`` bisects until the bracket ends are adjacent floats.
    With ``eps = 0`` the limit plan over zero-cost entries is returned.
    """
    if eps < 0:
        raise ConfigError("epsilon must be >= 0")
    inst = _Instance(R, C)
    gamma = default_gamma(R) if gamma is None else float(gamma)
    if not gamma > 0:
        raise ConfigError("gamma must be > 0")
    if eps == 0:
        zero = np.flatnonzero(inst.costs == 0)
        plan = _entropic_plan(inst, 0.0, gamma, zero)
        limit = math.fsum(np.maximum.reduceat(np.where(inst.costs == 0, inst.r, -np.inf), inst.starts)) / inst.n
        return _solution(inst, eps, np.inf, plan, "entropic", "zero-budget-limit", dual_value=limit,
                         info={"gamma": gamma})
    m0 = sinkhorn_objective(R, C, eps, gamma, 0.0, inst)
    if m0 >= 0:
        return _solution(inst, eps, 0.0, _entropic_plan(inst, 0.0, gamma), "entropic", "closed-form",
                         info={"gamma": gamma})
    lo, hi = 0.0, 1.0
    for _ in range(max_doublings):
        if sinkhorn_objective(R, C, eps, gamma, hi, inst) >= 0:
            break
        lo, hi = hi, 2 * hi
    else:
        raise NoRootError(f"no root of the entropic budget equation below eta={hi}")
    it = 0
    while hi - lo > root_tol * max(1.0, hi) and it < 2100:
        it += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if sinkhorn_objective(R, C, eps, gamma, mid, inst) >= 0:
            hi = mid
        else:
            lo = mid
    return _solution(inst, eps, hi, _entropic_plan(inst, hi, gamma), "entropic", "closed-form",
                     iterations=it, info={"gamma": gamma})


def entropic_dual_objective(R, C, eps, gamma, eta, inst=None):
    """``eta*eps + gamma * mean_j logsumexp_i((R_ij - eta C_ij)/gamma)``; its derivative is ``m(eta)``."""
    inst = inst or _Instance(R, C)
    logits = inst.values(eta) / gamma
    counts = np.diff(inst.C.indptr)
    lse = [logsumexp(logits[a:a + k]) for a, k in zip(inst.starts, counts)]
    return eta * eps + gamma * math.fsum(lse) / inst.n


def solve_entropic_sgd(R, C, cfg):
    """Projected SGD on the entropic dual; plan from the closed form at the final ``eta``."""
    inst = _Instance(R, C)
    gamma = default_gamma(R) if cfg.gamma is None else cfg.gamma
    eps, n = cfg.epsilon, inst.n
    batch = min(cfg.batch_size, n)
    rng = np.random.default_rng(cfg.seed)
    eta, velocity, quiet, history = float(cfg.eta0), 0.0, 0, []
    for t in range(1, cfg.max_iters + 1):
        cols = np.sort(rng.choice(n, size=batch, replace=False)) if batch < n else np.arange(n)
        if batch < n:
            idx = np.concatenate([np.arange(inst.C.indptr[j], inst.C.indptr[j + 1]) for j in cols])
            probs = _entropic_columns(inst, eta, gamma, idx)
            grad = eps - math.fsum(probs * inst.costs[idx]) / batch
        else:
            grad = sinkhorn_objective(R, C, eps, gamma, eta, inst)
        velocity = cfg.momentum * velocity + grad
        step = cfg.step_size / math.sqrt(t) if cfg.schedule == "sqrt" else cfg.step_size
        new = max(0.0, eta - step * velocity)
        quiet = quiet + 1 if abs(new - eta) < cfg.tol else 0
        eta = new
        history.append(eta)
        if quiet >= cfg.window:
            break
    return _solution(inst, eps, eta, _entropic_plan(inst, eta, gamma), "entropic-sgd", "closed-form",
                     iterations=t, info={"gamma": gamma, "eta_history": history})


# reference solver ------------------------------------------------------------------

def corner_enumeration_oracle(R, C, eps, max_n=50):
    """Exact LP optimum by evaluating the dual at every candidate corner.

    Works on dense matrices.  The plan is rebuilt independently of the main
    solver: every tied column puts the same fraction ``theta`` on its dearest
    tied row, with ``theta`` set by the budget.  ``unique`` reports whether
    that plan is the only optimum.
    """
    if eps < 0:
        raise ConfigError("epsilon must be >= 0")
    Cm = _as_cost(C)
    n = Cm.n
    if n > max_n:
        raise ConfigError(f"oracle limited to n <= {max_n}, got {n}")
    Rd, Cd = R.dense(), Cm.to_dense()
    allowed = np.isfinite(Cd)
    Cz = np.where(allowed, Cd, 0.0)
    cand = [0.0]
    for j in range(n):
        rows = np.flatnonzero(allowed[:, j])
        r, c = Rd[rows, j], Cz[rows, j]
        dr, dc = r[:, None] - r[None, :], c[:, None] - c[None, :]
        ok = dc != 0
        ratio = dr[ok] / dc[ok]
        cand.extend(ratio[ratio >= 0].tolist())
    cand = np.unique(np.array(cand))
    vals = np.where(allowed[None], Rd[None] - cand[:, None, None] * Cz[None], -np.inf)
    duals = eps * cand + vals.max(axis=1).mean(axis=1)
    k = int(np.argmin(duals))
    eta = float(cand[k])

    lam = vals[k].max(axis=0)
    scale = 1.0 + np.abs(lam) + eta * Cz.max(axis=0)
    tied = allowed & (vals[k] >= lam - 1e-11 * scale)
    cost_t = np.where(tied, Cz, np.nan)
    c_min, c_max = np.nanmin(cost_t, axis=0), np.nanmax(cost_t, axis=0)
    s_min, s_max = c_min.mean(), c_max.mean()
    if eta == 0 or s_max == s_min:
        theta = 0.0
    else:
        theta = float(np.clip((eps - s_min) / (s_max - s_min), 0.0, 1.0))
    plan = np.zeros((n, n))
    for j in range(n):
        rows = np.flatnonzero(tied[:, j])
        i_min = rows[np.argmin(Cz[rows, j])]
        i_max = rows[np.argmax(Cz[rows, j])]
        plan[i_min, j] += (1 - theta) / n
        plan[i_max, j] += theta / n
    primal = float(np.sum(plan * Rd))
    n_tied = tied.sum(axis=0)
    split = np.flatnonzero(n_tied > 1)
    unique = split.size == 0 or (eta > 0 and split.size == 1 and n_tied[split[0]] == 2 and 0 < theta < 1)
    cols, rows = np.nonzero(plan.T)
    tp = TransportPlan(n, cols, rows, plan[rows, cols], Cz[rows, cols])
    return DualSolution(eta=eta, dual_value=float(duals[k]), primal_value=primal, plan=tp,
                        method="oracle", recovery="corner", plan_cost=tp.cost,
                        over_budget=bool(tp.cost > eps * (1 + 1e-6) + 1e-12), unique=bool(unique))


# plan post-processing ----------------------------------------------------------------

def plan_marginals(plan, labels):
    """Weight of augmented point ``(i, k)`` at index ``k*n + i``: ``sum_{j: y_j = k} Pi_ij``."""
    labels = np.asarray(labels)
    if labels.size != plan.n:
        raise ValueError("labels do not match the plan size")
    slot = labels[plan.cols] * plan.n + plan.rows
    return np.bincount(slot, weights=plan.masses, minlength=2 * plan.n)


def worst_case_loss(R, plan):
    """``<R, Pi>``."""
    r = np.where(R.labels[plan.cols] == 1, R.r1[plan.rows], R.r0[plan.rows])
    return math.fsum(r * plan.masses)


def solve(R, C, cfg, method="dual-bisection"):
    """Dispatch to one of the inner solvers by name."""
    if method == "dual-bisection":
        return solve_dual_bisection(R, C, cfg.epsilon)
    if method == "dual-sgd":
        return solve_dual_sgd(R, C, cfg)
    if method == "entropic":
        return solve_entropic(R, C, cfg.epsilon, cfg.gamma, cfg.root_tol)
    if method == "entropic-sgd":
        return solve_entropic_sgd(R, C, cfg)
    raise ConfigError(f"unknown solver {method!r}; choose from {', '.join(SOLVERS)}")

