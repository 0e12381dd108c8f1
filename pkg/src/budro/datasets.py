"""Bundled benchmark tables and the fair-metric recipe used for each.

German credit: age is protected; the sensitive subspace is spanned by the
age indicator and the ridge direction predicting age.  Group gaps compare
applicants under 25 with the rest, and status consistency varies the
personal_status levels.

COMPAS: sex and race are protected; the subspace is spanned by both
indicators and a logistic direction predicting race.
"""
from importlib import resources

import numpy as np

from .dataio import DataSchema, load_csv
from .fairmetric import (build_projection, fit_logistic_direction, fit_ridge_direction,
                         indicator_directions, ProjectionMetric)


def data_path(name):
    return resources.files("budro") / "data" / name


def german_schema():
    return DataSchema.from_config(str(data_path("german_credit.ini")))


def load_german():
    return load_csv(str(data_path("german_credit.csv")), german_schema())


def german_metric(train, l2_grid=(0.1, 1.0, 10.0)):
    dirs = indicator_directions(train, "age") + fit_ridge_direction(train, "age", l2_grid).as_directions()
    return build_projection(dirs)


def german_age_group(data):
    """1 for applicants younger than 25."""
    return (data.raw_column("age") < 25).astype(np.int64)


def german_status_levels(data):
    """One-hot assignments for the personal_status levels observed in ``data``."""
    cols = data.attribute_columns["personal_status"]
    seen = np.flatnonzero(data.features[:, cols].max(axis=0) > 0)
    eye = np.eye(len(cols))
    return tuple(tuple(eye[k]) for k in seen)


def german_scale_pos_weight(train):
    ones = int(train.labels.sum())
    return (train.n - ones) / ones


def compas_schema():
    return DataSchema.from_config(str(data_path("compas.ini")))


def load_compas():
    return load_csv(str(data_path("compas.csv")), compas_schema())


def compas_metric(train, l2_strength=0.1):
    dirs = (indicator_directions(train, "sex") + indicator_directions(train, "race")
            + fit_logistic_direction(train, "race", l2_strength).as_directions())
    return build_projection(dirs)


def synthetic_metric():
    """The toy problem's fair metric looks only at the second coordinate."""
    return ProjectionMetric(np.diag([0.0, 1.0]), np.array([[1.0], [0.0]]))


def synthetic_counterfactuals(data, shift=2.0):
    """Each point placed in both clusters: ``x1 = u - shift`` and ``x1 = u + shift``."""
    u = data.groups["unshifted_x1"]
    left, right = np.array(data.features), np.array(data.features)
    left[:, 0] = u - shift
    right[:, 0] = u + shift
    return [left, right]
