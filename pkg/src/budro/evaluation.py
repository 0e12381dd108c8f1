"""Accuracy, group-gap, counterfactual-consistency and certificate reports."""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fileformats
from .errors import DataError, EmptyDataError, UndefinedRateError
from .fairmetric import build_cost_matrix
from .gbdt import logistic_loss
from .otsolver import LossColumns, SolverConfig, TransportPlan, solve, worst_case_loss


def _binary(vec, name):
    vec = np.asarray(vec)
    if vec.dtype == bool:
        return vec.astype(np.int64)
    if not np.isin(vec, (0, 1)).all():
        raise DataError(f"{name} must be 0/1")
    return vec.astype(np.int64)


def balanced_accuracy(predictions, labels):
    """Mean of the true-positive and true-negative rates."""
    pred, y = _binary(predictions, "predictions"), _binary(labels, "labels")
    if pred.shape != y.shape or y.size == 0:
        raise DataError("predictions and labels must be non-empty and of equal length")
    if y.min() == y.max():
        raise UndefinedRateError("balanced accuracy needs both classes among the labels")
    tpr = np.mean(pred[y == 1] == 1)
    tnr = np.mean(pred[y == 0] == 0)
    return float(0.5 * (tpr + tnr))


@dataclass(frozen=True)
class GapReport:
    """``gaps[y] = P(yhat=y | Y=y, g=0) - P(yhat=y | Y=y, g=1)``; ``None`` when undefined."""

    gaps: dict
    gap_max: float
    gap_rms: float
    undefined: tuple = ()

    def to_payload(self):
        return {"gap_0": self.gaps[0], "gap_1": self.gaps[1], "gap_max": self.gap_max,
                "gap_rms": self.gap_rms, "undefined": list(self.undefined)}


def group_gaps(predictions, labels, group):
    pred, y, g = _binary(predictions, "predictions"), _binary(labels, "labels"), _binary(group, "group")
    if not (pred.shape == y.shape == g.shape):
        raise DataError("predictions, labels and group must have equal length")
    if g.min() == g.max():
        raise EmptyDataError("both protected groups must be non-empty")
    gaps, undefined = {}, []
    for k in (0, 1):
        rates = []
        for grp in (0, 1):
            cell = (y == k) & (g == grp)
            rates.append(np.mean(pred[cell] == k) if cell.any() else None)
        if None in rates:
            gaps[k] = None
            undefined.append(k)
        else:
            gaps[k] = float(rates[0] - rates[1])
    defined = np.array([v for v in gaps.values() if v is not None])
    if defined.size == 0:
        raise UndefinedRateError("no outcome has both groups represented")
    return GapReport(gaps, float(np.max(np.abs(defined))), float(np.sqrt(np.mean(defined ** 2))),
                     tuple(undefined))


@dataclass(frozen=True)
class ConsistencyReport:
    attribute: str
    categories: tuple
    consistency: float

    def to_payload(self):
        return {"attribute": self.attribute, "categories": [list(c) for c in self.categories],
                "consistency": self.consistency}


def counterfactual_consistency(model, variants):
    """Fraction of rows whose predicted label agrees across every feature matrix in ``variants``."""
    if len(variants) < 2:
        raise DataError("need at least two counterfactual copies")
    preds = np.vstack([model.predict_label(v) for v in variants])
    return float(np.mean(np.all(preds == preds[0], axis=0)))


def category_assignments(data, attribute):
    """One-hot assignments for every level of a categorical attribute."""
    if attribute not in data.attribute_columns:
        raise DataError(f"unknown attribute {attribute!r}")
    width = len(data.attribute_columns[attribute])
    return tuple(tuple(row) for row in np.eye(width))


def consistency(model, data, attribute, categories=None):
    """Overwrite the attribute's encoded columns with each category in turn and compare labels."""
    if attribute not in data.attribute_columns:
        raise DataError(f"unknown attribute {attribute!r}")
    cols = list(data.attribute_columns[attribute])
    categories = category_assignments(data, attribute) if categories is None else categories
    categories = tuple(tuple(float(v) for v in np.atleast_1d(c)) for c in categories)
    if len(categories) < 2:
        raise DataError("need at least two categories")
    variants = []
    for values in categories:
        if len(values) != len(cols):
            raise DataError(f"category {values} does not match the {len(cols)} columns of {attribute!r}")
        X = np.array(data.features)
        X[:, cols] = values
        variants.append(X)
    return ConsistencyReport(attribute, categories, counterfactual_consistency(model, variants))


@dataclass(frozen=True)
class Certificate:
    """A-posteriori robustness check: ``gap = L(f) - empirical loss``."""

    epsilon: float
    worst_case_loss: float
    empirical_loss: float
    gap: float
    solver: str
    eta: float
    delta: float | None = None
    verdict: bool | None = None

    def to_payload(self):
        return {"epsilon": self.epsilon, "L": self.worst_case_loss, "empirical": self.empirical_loss,
                "gap": self.gap, "solver": self.solver, "eta": self.eta, "delta": self.delta,
                "verdict": self.verdict}


def certify_drf(model, data, metric, epsilon, solver="dual-bisection", solver_cfg=None, delta=None, C=None):
    """Worst-case loss over the transport ball of radius ``epsilon`` around ``data``.

    ``L(f)`` is the better of the solver's plan and the (always feasible)
    identity plan, so the reported gap is never negative.  With ``delta``
    the verdict says whether the model is ``(epsilon, delta)``-robustly fair.
    """
    C = build_cost_matrix(metric, data.features) if C is None else C
    R = LossColumns.from_margins(model.predict_margin(data.features), data.labels)
    cfg = SolverConfig(epsilon=float(epsilon)) if solver_cfg is None else solver_cfg
    sol = solve(R, C, replace(cfg, epsilon=float(epsilon)), solver)
    empirical = worst_case_loss(R, TransportPlan.identity(R.n))
    robust = max(sol.primal_value, empirical)
    verdict = None if delta is None else bool(robust <= delta)
    return Certificate(float(epsilon), robust, empirical, robust - empirical, solver, float(sol.eta),
                       delta, verdict)


@dataclass
class AuditReport:
    bacc: float
    gaps: dict = field(default_factory=dict)
    consistency: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)

    def to_payload(self):
        return {"bacc": self.bacc,
                "gaps": {k: v.to_payload() for k, v in self.gaps.items()},
                "consistency": {k: v.to_payload() for k, v in self.consistency.items()},
                "certificates": [c.to_payload() for c in self.certificates]}

    def save(self, path):
        fileformats.save(path, "report", self.to_payload())


def audit(model, data, metric=None, epsilons=(), groups=None, consistency_specs=None,
          solver="dual-bisection", solver_cfg=None, delta=None):
    """Bundle the reports for one model on one dataset.

    ``groups`` maps a name to a binary vector; ``consistency_specs`` maps a
    name to either an attribute (all its levels) or ``(attribute, categories)``
    or a list of counterfactual feature matrices.
    """
    labels = model.predict_label(data.features)
    report = AuditReport(balanced_accuracy(labels, data.labels))
    for name, group in (groups or {}).items():
        report.gaps[name] = group_gaps(labels, data.labels, group)
    for name, spec in (consistency_specs or {}).items():
        if isinstance(spec, str):
            report.consistency[name] = consistency(model, data, spec)
        elif isinstance(spec, tuple) and len(spec) == 2 and isinstance(spec[0], str):
            report.consistency[name] = consistency(model, data, spec[0], spec[1])
        else:
            report.consistency[name] = ConsistencyReport(name, (), counterfactual_consistency(model, spec))
    if epsilons:
        if metric is None:
            raise DataError("certificates need a fair metric")
        C = build_cost_matrix(metric, data.features)
        for eps in epsilons:
            report.certificates.append(certify_drf(model, data, metric, eps, solver, solver_cfg, delta, C))
    return report


def mean_logistic_loss(model, data):
    margins = model.predict_margin(data.features)
    return math.fsum(logistic_loss(margins, data.labels)) / data.n
