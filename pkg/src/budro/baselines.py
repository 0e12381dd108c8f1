"""Comparison preprocessors: projecting out the sensitive subspace and group reweighing."""
import numpy as np

from .errors import DataError, DegenerateCellError


def project_preprocess(data, metric):
    """Replace every feature row ``x`` by ``Qx``.

    Rows already fixed by ``Q`` (to within rounding) are left untouched, so
    projecting twice returns exactly the once-projected data.
    """
    X = data.features
    if X.shape[1] != metric.dim:
        raise ValueError(f"metric dimension {metric.dim} does not match {X.shape[1]} features")
    projected = metric.transform(X)
    scale = 1.0 + np.abs(X).max(axis=1, initial=0.0)
    settled = np.abs(projected - X).max(axis=1, initial=0.0) <= 1e-12 * scale
    projected[settled] = X[settled]
    return data.with_features(projected)


def reweigh_weights(data, group):
    """Kamiran-Calders weights ``P(g) P(y) / P(g, y)`` for each example's (group, label) cell."""
    labels = np.asarray(getattr(data, "labels", data))
    group = np.asarray(group)
    if group.shape != labels.shape:
        raise DataError("group vector does not match the number of rows")
    if not np.isin(group, (0, 1)).all():
        raise DataError("reweighing needs a binary protected group")
    group = group.astype(np.int64)
    n = labels.size
    weights = np.empty(n)
    for g in (0, 1):
        for y in (0, 1):
            cell = (group == g) & (labels == y)
            count = int(cell.sum())
            if count == 0:
                raise DegenerateCellError(f"no examples with group={g}, label={y}")
            weights[cell] = (np.sum(group == g) * np.sum(labels == y)) / (n * count)
    return weights


class ProjectedModel:
    """A model trained on projected features; inputs are projected before prediction."""

    def __init__(self, model, metric):
        self.model, self.metric = model, metric

    def predict_margin(self, X):
        return self.model.predict_margin(self.metric.transform(np.atleast_2d(X)))

    def predict_label(self, X, threshold=0.0):
        return (self.predict_margin(X) > threshold).astype(np.int64)
