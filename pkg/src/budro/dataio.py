"""Loading, encoding, splitting and synthesizing binary-classification tables.

Numeric columns are standardized, categorical columns are one-hot encoded
with every level kept, and rows with a missing value are dropped.  The
augmented support set duplicates each training row with both labels so the
transport adversary can move mass onto the counterfactual label.
"""
import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import fileformats
from .errors import ConfigError, DataError, EmptyDataError, LabelError, SchemaError

MISSING_TOKENS = ["", "?", "NA", "NaN", "nan"]


def _split_list(value):
    return tuple(item.strip() for item in value.replace("\n", ",").split(",") if item.strip())


@dataclass(frozen=True)
class DataSchema:
    """Column roles for a CSV table.

    ``passthrough`` columns are numeric but left unstandardized (0/1
    indicators).  ``levels`` optionally pins the category list of a
    categorical column, so levels absent from a particular file still get
    an (all-zero) indicator column.
    """

    label: str
    numeric: tuple = ()
    categorical: tuple = ()
    passthrough: tuple = ()
    protected: tuple = ()
    positive: str | None = None
    levels: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("numeric", "categorical", "passthrough", "protected"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "levels", {k: tuple(v) for k, v in self.levels.items()})
        names = [self.label, *self.feature_columns]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate column names in schema: {dupes}")
        missing = [p for p in self.protected if p not in self.feature_columns]
        if missing:
            raise SchemaError(f"protected columns not among feature columns: {missing}")
        stray = [c for c in self.levels if c not in self.categorical]
        if stray:
            raise SchemaError(f"levels given for non-categorical columns: {stray}")

    @property
    def feature_columns(self):
        return (*self.numeric, *self.passthrough, *self.categorical)

    @property
    def columns(self):
        """Ordered ``(name, kind)`` pairs; protected columns report kind ``protected``."""
        kinds = [(self.label, "binary-label")]
        for name in self.feature_columns:
            if name in self.protected:
                kinds.append((name, "protected"))
            elif name in self.categorical:
                kinds.append((name, "categorical"))
            else:
                kinds.append((name, "numeric"))
        return kinds

    @classmethod
    def from_mapping(cls, mapping, levels=None):
        allowed = {"label", "numeric", "categorical", "passthrough", "protected", "positive"}
        unknown = set(mapping) - allowed
        if unknown:
            raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
        if "label" not in mapping:
            raise ConfigError("schema needs a 'label' key")
        kwargs = {k: _split_list(v) if isinstance(v, str) else tuple(v)
                  for k, v in mapping.items() if k not in ("label", "positive")}
        levels = {k: _split_list(v) if isinstance(v, str) else tuple(v)
                  for k, v in (levels or {}).items()}
        positive = mapping.get("positive")
        return cls(label=mapping["label"].strip(), positive=None if positive is None else str(positive).strip(),
                   levels=levels, **kwargs)

    @classmethod
    def from_config(cls, path):
        """Read ``[schema]`` (and optional ``[levels]``) from an INI-style file."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        if not parser.read(path):
            raise ConfigError(f"cannot read schema file {path}")
        if "schema" not in parser:
            raise ConfigError(f"{path}: missing [schema] section")
        levels = dict(parser["levels"]) if "levels" in parser else {}
        return cls.from_mapping(dict(parser["schema"]), levels)


def _frozen(array, dtype=float):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded feature matrix with labels and column bookkeeping.

    ``raw`` keeps the unstandardized matrix so a split can refit the
    standardization on its training rows only.  ``attribute_columns`` maps
    every source column to its encoded indices; ``protected_columns`` is the
    subset for protected attributes.  ``groups`` carries optional per-row
    annotations (e.g. the cluster of a synthetic point).
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    standardization: dict = field(default_factory=dict)
    protected_columns: dict = field(default_factory=dict)
    attribute_columns: dict = field(default_factory=dict)
    raw: np.ndarray | None = None
    groups: dict = field(default_factory=dict)

    def __post_init__(self):
        features = _frozen(self.features)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n, d = features.shape
        if n < 1 or d < 1:
            raise EmptyDataError(f"dataset must be non-empty, got shape {features.shape}")
        labels = _frozen(self.labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ValueError("labels length does not match features")
        if not np.isin(labels, (0, 1)).all():
            raise LabelError("labels must be 0/1")
        if len(self.feature_names) != d:
            raise ValueError("feature_names length does not match features")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "protected_columns",
                           {k: tuple(int(i) for i in v) for k, v in self.protected_columns.items()})
        attrs = self.attribute_columns or {name: (j,) for j, name in enumerate(self.feature_names)}
        object.__setattr__(self, "attribute_columns", {k: tuple(int(i) for i in v) for k, v in attrs.items()})
        if self.raw is not None:
            object.__setattr__(self, "raw", _frozen(self.raw))
        object.__setattr__(self, "groups", {k: _frozen(v, dtype=np.asarray(v).dtype)
                                            for k, v in self.groups.items()})
        object.__setattr__(self, "standardization",
                           {k: (float(m), float(s)) for k, (m, s) in self.standardization.items()})

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def column_index(self, name):
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature column {name!r}") from None

    def raw_column(self, name):
        """Unstandardized values of an encoded column."""
        j = self.column_index(name)
        if self.raw is not None:
            return self.raw[:, j].copy()
        return self.features[:, j].copy()

    def subset(self, rows):
        rows = np.asarray(rows)
        return Dataset(
            features=self.features[rows], labels=self.labels[rows], feature_names=self.feature_names,
            standardization=self.standardization, protected_columns=self.protected_columns,
            attribute_columns=self.attribute_columns,
            raw=None if self.raw is None else self.raw[rows],
            groups={k: v[rows] for k, v in self.groups.items()})

    def with_features(self, features, standardization=None):
        """Copy with a replaced feature matrix; metadata is kept."""
        return Dataset(
            features=features, labels=self.labels, feature_names=self.feature_names,
            standardization=self.standardization if standardization is None else standardization,
            protected_columns=self.protected_columns, attribute_columns=self.attribute_columns,
            raw=self.raw, groups=self.groups)

    def restandardize(self, standardization):
        """Re-encode numeric columns from ``raw`` using the given (mean, std) pairs."""
        if self.raw is None or not standardization:
            return self.with_features(self.features, standardization)
        features = self.raw.copy()
        for name, (mean, std) in standardization.items():
            j = self.column_index(name)
            features[:, j] = _standardize(self.raw[:, j], mean, std)
        return self.with_features(features, standardization)


def _standardize(values, mean, std):
    centered = values - mean
    # zero-variance columns are only centered
    return centered / std if std > 0 else centered


def _fit_standardization(raw, names, numeric):
    stats = {}
    for name in numeric:
        column = raw[:, names.index(name)]
        stats[name] = (float(column.mean()), float(column.std()))
    return stats


def encode_frame(frame, schema):
    """Encode a string-valued DataFrame according to ``schema``.

    Returns ``(raw, labels, names, attribute_columns)`` with numeric columns
    still in their original units.
    """
    blocks, names, attrs = [], [], {}
    for name in (*schema.numeric, *schema.passthrough):
        try:
            values = frame[name].astype(float).to_numpy()
        except ValueError as err:
            raise SchemaError(f"column {name!r} is not numeric: {err}") from None
        attrs[name] = (len(names),)
        blocks.append(values[:, None])
        names.append(name)
    for name in schema.categorical:
        values = frame[name].astype(str).str.strip().to_numpy()
        levels = schema.levels.get(name) or tuple(sorted(set(values)))
        unknown = sorted(set(values) - set(levels))
        if unknown:
            raise SchemaError(f"column {name!r} has values outside its declared levels: {unknown}")
        onehot = (values[:, None] == np.asarray(levels, dtype=object)[None, :]).astype(float)
        attrs[name] = tuple(range(len(names), len(names) + len(levels)))
        blocks.append(onehot)
        names.extend(f"{name}={level}" for level in levels)
    raw = np.hstack(blocks) if blocks else np.empty((len(frame), 0))

    label_values = frame[schema.label].astype(str).str.strip().to_numpy()
    distinct = sorted(set(label_values))
    if len(distinct) > 2:
        raise LabelError(f"label column {schema.label!r} is not binary: {distinct}")
    if schema.positive is not None:
        labels = (label_values == schema.positive).astype(np.int64)
    else:
        numeric = {"0": 0, "1": 1, "0.0": 0, "1.0": 1}
        if not set(distinct) <= set(numeric):
            raise LabelError(f"label values {distinct} are not 0/1; set 'positive' in the schema")
        labels = np.array([numeric[v] for v in label_values], dtype=np.int64)
    return raw, labels, names, attrs


def load_csv(path, schema):
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Rows with any missing field are dropped.  Numeric columns are
    standardized with the statistics of the rows that survive.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=MISSING_TOKENS,
                        skipinitialspace=True, encoding="utf-8")
    frame.columns = [c.strip() for c in frame.columns]
    expected = {schema.label, *schema.feature_columns}
    header = set(frame.columns)
    if header - expected:
        raise SchemaError(f"unknown columns in {path.name}: {sorted(header - expected)}")
    if expected - header:
        raise SchemaError(f"columns missing from {path.name}: {sorted(expected - header)}")
    frame = frame.dropna(axis=0, how="any").reset_index(drop=True)
    if frame.empty:
        raise EmptyDataError(f"{path.name}: no rows left after dropping missing values")
    raw, labels, names, attrs = encode_frame(frame, schema)
    stats = _fit_standardization(raw, names, schema.numeric)
    features = raw.copy()
    for name, (mean, std) in stats.items():
        j = names.index(name)
        features[:, j] = _standardize(raw[:, j], mean, std)
    protected = {p: attrs[p] for p in schema.protected}
    return Dataset(features=features, labels=labels, feature_names=names, standardization=stats,
                   protected_columns=protected, attribute_columns=attrs, raw=raw)


def split(data, test_fraction, seed):
    """Label-stratified train/test partition.

    The test set size is ``round(n * test_fraction)``; each label class
    contributes in proportion (largest remainder).  Standardization is refit
    on the training rows and reused for the test rows.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    n_test = int(round(data.n * test_fraction))
    classes = [np.flatnonzero(data.labels == k) for k in (0, 1)]
    quotas = np.array([len(c) * n_test / data.n for c in classes])
    take = np.floor(quotas).astype(int)
    remainder = n_test - take.sum()
    for k in np.argsort(-(quotas - take), kind="stable")[:remainder]:
        take[k] += 1
    test_idx = []
    for members, count in zip(classes, take):
        test_idx.extend(rng.permutation(members)[:count])
    test_mask = np.zeros(data.n, dtype=bool)
    test_mask[np.asarray(test_idx, dtype=int)] = True
    train, test = data.subset(np.flatnonzero(~test_mask)), data.subset(np.flatnonzero(test_mask))
    if data.raw is not None and data.standardization:
        stats = _fit_standardization(train.raw, list(data.feature_names), list(data.standardization))
        train, test = train.restandardize(stats), test.restandardize(stats)
    return train, test


@dataclass(frozen=True, eq=False)
class AugmentedSet:
    """The training rows duplicated with both labels.

    Augmented index ``a`` corresponds to original row ``a % n`` with forced
    label ``a // n``: the first ``n`` entries carry label 0, the last ``n``
    label 1.
    """

    base: Dataset

    @property
    def n(self):
        return self.base.n

    def __len__(self):
        return 2 * self.base.n

    @property
    def features(self):
        return np.vstack([self.base.features, self.base.features])

    @property
    def labels(self):
        return np.repeat(np.array([0, 1]), self.base.n)

    @property
    def original_index(self):
        return np.tile(np.arange(self.base.n), 2)

    def index(self, i, k):
        return k * self.base.n + i

    def locate(self, a):
        return a % self.base.n, a // self.base.n

    def class_indicators(self):
        """``(y1, y0)`` indicator vectors of the base labels."""
        y1 = (self.base.labels == 1).astype(float)
        return y1, 1.0 - y1

    def true_label_rows(self):
        return self.index(np.arange(self.base.n), self.base.labels)

    def project_back(self):
        rows = self.true_label_rows()
        features = self.features[rows]
        return self.base.with_features(features)


def augment_support(data):
    return AugmentedSet(data)


@dataclass(frozen=True)
class SyntheticConfig:
    n_total: int = 150
    n_majority: int = 125
    shift: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.n_majority < self.n_total:
            raise ValueError("need 0 < n_majority < n_total")
        if self.shift <= 0:
            raise ValueError("shift must be positive")


def _synthetic_lines(points):
    (x0, y0), (x1, y1) = points.min(axis=0), points.max(axis=0)
    slope = (y1 - y0) / (x1 - x0)

    def above_diagonal(p):
        return p[:, 1] > y0 + slope * (p[:, 0] - x0)

    def above_antidiagonal(p):
        return p[:, 1] > y1 - slope * (p[:, 0] - x0)

    return above_diagonal, above_antidiagonal


def _synthetic_dataset(points, majority, cfg, lines):
    above_diagonal, above_antidiagonal = lines
    labels = np.where(majority, above_diagonal(points), above_antidiagonal(points)).astype(np.int64)
    shifted = points.copy()
    shifted[:, 0] += np.where(majority, -cfg.shift, cfg.shift)
    return Dataset(features=shifted, labels=labels, feature_names=("x1", "x2"),
                   protected_columns={"x1": (0,)}, groups={"majority": majority,
                                                           "unshifted_x1": points[:, 0]})


def generate_synthetic(cfg):
    """Two-cluster toy problem where the protected coordinate ``x1`` separates clusters.

    Points come from a standard 2-D normal.  The majority cluster is
    labeled by the diagonal of the bounding box and moved to ``x1 - shift``;
    the minority is labeled by the anti-diagonal and moved to ``x1 + shift``.
    """
    rng = np.random.default_rng(cfg.seed)
    points = rng.standard_normal((cfg.n_total, 2))
    majority = np.zeros(cfg.n_total, dtype=bool)
    majority[rng.choice(cfg.n_total, size=cfg.n_majority, replace=False)] = True
    return _synthetic_dataset(points, majority, cfg, _synthetic_lines(points))


def generate_synthetic_test(cfg, n):
    """Fresh draws from the same process, labeled with the lines of ``cfg``'s sample."""
    rng = np.random.default_rng(cfg.seed)
    lines = _synthetic_lines(rng.standard_normal((cfg.n_total, 2)))
    rng = np.random.default_rng([cfg.seed, 1])
    points = rng.standard_normal((n, 2))
    majority = rng.random(n) < cfg.n_majority / cfg.n_total
    return _synthetic_dataset(points, majority, cfg, lines)


def save_dataset(path, data):
    """Snapshot of an encoded dataset, including the raw matrix and group annotations."""
    payload = {
        "n": data.n, "d": data.d, "feature_names": list(data.feature_names),
        "features": data.features.ravel().tolist(), "labels": data.labels.tolist(),
        "standardization": {k: list(v) for k, v in data.standardization.items()},
        "protected_columns": {k: list(v) for k, v in data.protected_columns.items()},
        "attribute_columns": {k: list(v) for k, v in data.attribute_columns.items()},
        "raw": None if data.raw is None else data.raw.ravel().tolist(),
        "groups": {k: {"dtype": v.dtype.str, "values": v.tolist()} for k, v in data.groups.items()},
    }
    fileformats.save(path, "dataset", payload)


def load_dataset(path):
    p = fileformats.load(path, "dataset")
    try:
        n, d = int(p["n"]), int(p["d"])
        shape = (n, d)
        return Dataset(
            features=np.asarray(p["features"], dtype=float).reshape(shape), labels=p["labels"],
            feature_names=p["feature_names"], standardization=p["standardization"],
            protected_columns=p["protected_columns"], attribute_columns=p["attribute_columns"],
            raw=None if p["raw"] is None else np.asarray(p["raw"], dtype=float).reshape(shape),
            groups={k: np.asarray(v["values"], dtype=np.dtype(v["dtype"])) for k, v in p["groups"].items()})
    except (KeyError, ValueError, TypeError) as err:
        raise DataError(f"{path}: malformed dataset snapshot ({err})") from None
