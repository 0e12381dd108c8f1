"""Command-line entry point.

    budro synth  --out DIR                       synthetic train/test snapshots
    budro prep   --csv F --schema F --out DIR    encode and split a CSV table
    budro metric --data F --out DIR              learn the fair metric
    budro train  --data F --metric F --method M  fit budro | baseline | project | reweigh
    budro audit  --model F --data F --metric F   accuracy, gaps, consistency, certificates
    budro solve  --instance F                    run one inner transport solve

Settings come from an INI file (one section per command, plus ``[global]``)
and are overridden by flags.  Every run writes ``manifest.txt`` to its
output directory, also when it fails.  Exit codes: 0 ok, 2 configuration
error, 3 data error, 4 solver error.
"""
import argparse
import configparser
import hashlib
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__, fileformats
from .baselines import ProjectedModel, project_preprocess, reweigh_weights
from .dataio import (DataSchema, SyntheticConfig, generate_synthetic, generate_synthetic_test, load_csv,
                     load_dataset, save_dataset, split)
from .errors import BudroError, ConfigError, DataError, SolverError
from .evaluation import audit
from .fairmetric import (ProjectionMetric, build_projection, fit_logistic_direction, fit_ridge_direction,
                         indicator_directions, CostMatrix)
from .gbdt import BoostConfig, Ensemble
from .otsolver import SOLVERS, LossColumns, SolverConfig, solve
from .training import BuDROConfig, train_baseline, train_budro

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER, EXIT_OTHER = 0, 2, 3, 4, 1

BOOST_KEYS = {"max_depth": 3, "lambda": 1.0, "min_child_weight": 0.0, "eta": 0.3,
              "scale_pos_weight": "1", "steps": 10}

DEFAULTS = {
    "synth": {"n_total": 150, "n_majority": 125, "shift": 2.0, "n_test": 1000},
    "prep": {"csv": None, "schema": None, "test_fraction": 0.2},
    "metric": {"data": None, "directions": None, "logistic_l2": 0.1, "ridge_grid": "0.1, 1, 10",
               "ridge_folds": 5},
    "train": {"data": None, "metric": None, "method": "budro", "epsilon": 0.1, "solver": "dual-bisection",
              "gamma": None, "group": None, "batch_size": 200, "sgd_step": 1e-4, "sgd_iters": 100,
              "cost_mode": "dense", "tau": None, **BOOST_KEYS},
    "audit": {"model": None, "data": None, "metric": None, "epsilons": "", "groups": "", "consistency": "",
              "delta": None, "solver": "dual-bisection", "gamma": None},
    "solve": {"instance": None, "solver": "dual-bisection", "epsilon": None, "gamma": None,
              "batch_size": 200, "sgd_step": 1e-4, "sgd_iters": 100},
}
GLOBAL_KEYS = {"seed": 0, "threads": 1, "out": None}
INPUT_FILES = {"prep": ("csv", "schema"), "metric": ("data",), "train": ("data", "metric"),
               "audit": ("model", "data", "metric"), "solve": ("instance",)}

FLAGS = [  # (flag, key, commands)
    ("--epsilon", "epsilon", ("train", "solve")),
    ("--gamma", "gamma", ("train", "audit", "solve")),
    ("--solver", "solver", ("train", "audit", "solve")),
    ("--max-depth", "max_depth", ("train",)),
    ("--eta", "eta", ("train",)),
    ("--lambda", "lambda", ("train",)),
    ("--min-child-weight", "min_child_weight", ("train",)),
    ("--steps", "steps", ("train",)),
    ("--scale-pos-weight", "scale_pos_weight", ("train",)),
    ("--method", "method", ("train",)),
    ("--data", "data", ("metric", "train", "audit")),
    ("--metric", "metric", ("train", "audit")),
    ("--model", "model", ("audit",)),
    ("--csv", "csv", ("prep",)),
    ("--schema", "schema", ("prep",)),
    ("--instance", "instance", ("solve",)),
    ("--test-fraction", "test_fraction", ("prep",)),
    ("--directions", "directions", ("metric",)),
    ("--epsilons", "epsilons", ("audit",)),
    ("--groups", "groups", ("audit",)),
    ("--consistency", "consistency", ("audit",)),
    ("--group", "group", ("train",)),
]


def build_parser():
    parser = argparse.ArgumentParser(prog="budro", description="Individually fair gradient boosting.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in DEFAULTS:
        p = sub.add_parser(command)
        p.add_argument("--config", help="INI file with [global] and [%s] sections" % command)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int)
        for flag, key, commands in FLAGS:
            if command in commands:
                p.add_argument(flag, dest=key)
    return parser


def _coerce(value, default, key):
    if value is None or isinstance(default, str) or default is None:
        return value
    try:
        if isinstance(default, bool):
            return str(value).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value


def resolve_config(command, args):
    """Merge defaults, the INI file and flags; reject unknown keys."""
    defaults = {**GLOBAL_KEYS, **DEFAULTS[command]}
    cfg = dict(defaults)
    if args.config:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            if not parser.read(args.config):
                raise ConfigError(f"cannot read config file {args.config}")
        except configparser.Error as err:
            raise ConfigError(f"{args.config}: {err}") from None
        for section in ("global", command):
            if section not in parser:
                continue
            allowed = GLOBAL_KEYS if section == "global" else defaults
            for key, value in parser[section].items():
                key = key.replace("-", "_")
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                cfg[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    cfg = {k: _coerce(v, defaults[k], k) for k, v in cfg.items()}
    if not cfg["out"]:
        raise ConfigError("an output directory is required (--out)")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    for key in INPUT_FILES.get(command, ()):
        if not cfg.get(key):
            raise ConfigError(f"missing required setting {key!r}")
        if not Path(cfg[key]).is_file():
            raise DataError(f"{key}: file not found: {cfg[key]}")
    return cfg


def _floats(text):
    return [float(v) for v in str(text).replace(",", " ").split()] if text not in (None, "") else []


def _items(text):
    return [v.strip() for v in str(text).split(",") if v.strip()] if text else []


def _group_vector(data, spec):
    """``name`` (a 0/1 column) or ``name<value`` / ``name>=value`` on the raw column."""
    for op in ("<=", ">=", "<", ">"):
        if op in spec:
            name, value = (s.strip() for s in spec.split(op, 1))
            column = data.raw_column(name)
            value = float(value)
            result = {"<": column < value, "<=": column <= value,
                      ">": column > value, ">=": column >= value}[op]
            return result.astype(np.int64)
    if spec in data.groups:
        return np.asarray(data.groups[spec]).astype(np.int64)
    column = data.raw_column(spec)
    levels = np.unique(column)
    if levels.size > 2:
        raise DataError(f"group {spec!r} is not binary; use a threshold such as {spec}<25")
    return (column == levels[-1]).astype(np.int64)


def _boost_config(cfg, train):
    spw = cfg["scale_pos_weight"]
    if str(spw).strip().lower() == "auto":
        ones = int(train.labels.sum())
        if ones == 0 or ones == train.n:
            raise DataError("scale_pos_weight=auto needs both labels in the training data")
        spw = (train.n - ones) / ones
    else:
        spw = _coerce(spw, 1.0, "scale_pos_weight")
    return BoostConfig(max_depth=cfg["max_depth"], reg_lambda=cfg["lambda"],
                       min_child_weight=cfg["min_child_weight"], eta=cfg["eta"], scale_pos_weight=spw)


def _solver_config(cfg, epsilon):
    gamma = None if cfg.get("gamma") in (None, "") else _coerce(cfg["gamma"], 1.0, "gamma")
    return SolverConfig(epsilon=epsilon, gamma=gamma, batch_size=cfg.get("batch_size", 200),
                        step_size=cfg.get("sgd_step", 1e-4), max_iters=cfg.get("sgd_iters", 100),
                        seed=cfg["seed"])


def cmd_synth(cfg, out):
    syn = SyntheticConfig(n_total=cfg["n_total"], n_majority=cfg["n_majority"], shift=cfg["shift"],
                          seed=cfg["seed"])
    written = [out / "train.dataset"]
    save_dataset(written[0], generate_synthetic(syn))
    if cfg["n_test"] > 0:
        written.append(out / "test.dataset")
        save_dataset(written[1], generate_synthetic_test(syn, cfg["n_test"]))
    return written


def cmd_prep(cfg, out):
    data = load_csv(cfg["csv"], DataSchema.from_config(cfg["schema"]))
    frac = cfg["test_fraction"]
    if frac == 0:
        save_dataset(out / "data.dataset", data)
        return [out / "data.dataset"]
    train, test = split(data, frac, cfg["seed"])
    save_dataset(out / "train.dataset", train)
    save_dataset(out / "test.dataset", test)
    return [out / "train.dataset", out / "test.dataset"]


def learn_metric(data, directions, logistic_l2=0.1, ridge_grid=(0.1, 1.0, 10.0), ridge_folds=5, seed=0):
    """Build a metric from specs such as ``indicator:age, ridge:age, logistic:race``."""
    specs = _items(directions) or [f"indicator:{p}" for p in data.protected_columns]
    if not specs:
        raise ConfigError("no sensitive directions given and the data declares no protected columns")
    parts = None
    for spec in specs:
        kind, _, name = spec.partition(":")
        kind, name = kind.strip(), name.strip()
        if kind == "indicator":
            found = indicator_directions(data, name)
        elif kind == "ridge":
            found = fit_ridge_direction(data, name, ridge_grid, ridge_folds, seed).as_directions()
        elif kind == "logistic":
            found = fit_logistic_direction(data, name, logistic_l2).as_directions()
        else:
            raise ConfigError(f"unknown direction kind {kind!r} (use indicator, ridge or logistic)")
        parts = found if parts is None else parts + found
    return build_projection(parts)


def cmd_metric(cfg, out):
    data = load_dataset(cfg["data"])
    metric = learn_metric(data, cfg["directions"], cfg["logistic_l2"], _floats(cfg["ridge_grid"]),
                          cfg["ridge_folds"], cfg["seed"])
    metric.save(out / "metric.txt")
    return [out / "metric.txt"]


def cmd_train(cfg, out):
    train = load_dataset(cfg["data"])
    metric = ProjectionMetric.load(cfg["metric"])
    if metric.dim != train.d:
        raise DataError(f"metric has dimension {metric.dim} but the data has {train.d} features")
    boost = _boost_config(cfg, train)
    method, steps = cfg["method"], cfg["steps"]
    if method == "budro":
        if cfg["solver"] not in SOLVERS:
            raise ConfigError(f"unknown solver {cfg['solver']!r}")
        tau = None if cfg["tau"] in (None, "") else float(cfg["tau"])
        bcfg = BuDROConfig(epsilon=cfg["epsilon"], steps=steps, solver=cfg["solver"],
                           solver_cfg=_solver_config(cfg, cfg["epsilon"]), boost_cfg=boost,
                           cost_mode=cfg["cost_mode"], tau=tau, seed=cfg["seed"])
        model, trace = train_budro(train, metric, bcfg)
    elif method == "baseline":
        model, trace = train_baseline(train, boost, steps)
    elif method == "project":
        model, trace = train_baseline(project_preprocess(train, metric), boost, steps, method="project")
        model = model.with_meta(projection=metric.Q.ravel().tolist())
    elif method == "reweigh":
        if not cfg["group"]:
            raise ConfigError("reweigh needs a binary protected group (group = ...)")
        weights = reweigh_weights(train, _group_vector(train, cfg["group"])) / train.n
        model, trace = train_baseline(train, boost, steps, weights=weights, method="reweigh")
    else:
        raise ConfigError(f"unknown method {method!r} (budro, baseline, project, reweigh)")
    # model files hold only what prediction needs; the method is echoed in the manifest
    keep = {k: v for k, v in model.meta.items() if k == "projection"}
    model = Ensemble(model.base_margin, model.trees, model.etas, model.loss, keep)
    model.save(out / "model.txt")
    trace.save(out / "trace.txt")
    return [out / "model.txt", out / "trace.txt"], {"seconds_per_step": trace.column("seconds").tolist()}


def load_model(path):
    model = Ensemble.load(path)
    if "projection" in model.meta:
        q = np.asarray(model.meta["projection"], dtype=float)
        d = int(round(np.sqrt(q.size)))
        return ProjectedModel(model, ProjectionMetric(q.reshape(d, d)))
    return model


def cmd_audit(cfg, out):
    model = load_model(cfg["model"])
    data = load_dataset(cfg["data"])
    metric = ProjectionMetric.load(cfg["metric"])
    if metric.dim != data.d:
        raise DataError(f"metric has dimension {metric.dim} but the data has {data.d} features")
    groups = {spec: _group_vector(data, spec) for spec in _items(cfg["groups"])}
    cons = {name: name for name in _items(cfg["consistency"])}
    delta = None if cfg["delta"] in (None, "") else float(cfg["delta"])
    solver_cfg = _solver_config(cfg, 0.0)
    report = audit(model, data, metric, _floats(cfg["epsilons"]), groups, cons, cfg["solver"], solver_cfg, delta)
    report.save(out / "report.txt")
    return [out / "report.txt"]


def load_instance(path):
    p = fileformats.load(path, "instance")
    try:
        n = int(p["n"])
        C = np.asarray(p["C"], dtype=float).reshape(n, n)
        R = LossColumns(p["r0"], p["r1"], p["labels"])
        eps = p.get("epsilon")
    except (KeyError, ValueError, TypeError) as err:
        raise DataError(f"{path}: malformed instance ({err})") from None
    return R, CostMatrix.from_dense(C), eps


def save_instance(path, R, C, epsilon):
    C = C.to_dense() if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    fileformats.save(path, "instance", {"n": R.n, "C": C.tolist(), "r0": R.r0.tolist(), "r1": R.r1.tolist(),
                                        "labels": R.labels.tolist(), "epsilon": epsilon})


def cmd_solve(cfg, out):
    R, C, eps = load_instance(cfg["instance"])
    eps = cfg["epsilon"] if cfg["epsilon"] not in (None, "") else eps
    if eps is None:
        raise ConfigError("epsilon missing from both the instance file and the settings")
    eps = _coerce(eps, 1.0, "epsilon")
    if cfg["solver"] not in SOLVERS:
        raise ConfigError(f"unknown solver {cfg['solver']!r}")
    sol = solve(R, C, _solver_config(cfg, eps), cfg["solver"])
    payload = {"solver": cfg["solver"], "epsilon": eps, "eta": sol.eta, "dual_value": sol.dual_value,
               "primal_value": sol.primal_value, "plan_cost": sol.plan_cost, "over_budget": sol.over_budget,
               "recovery": sol.recovery, "plan": [list(e) for e in sol.plan.entries()]}
    fileformats.save(out / "solution.txt", "solution", payload)
    return [out / "solution.txt"]


COMMANDS = {"synth": cmd_synth, "prep": cmd_prep, "metric": cmd_metric, "train": cmd_train,
            "audit": cmd_audit, "solve": cmd_solve}


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _exit_code(err):
    if isinstance(err, ConfigError):
        return EXIT_CONFIG
    if isinstance(err, (DataError, FileNotFoundError)):
        return EXIT_DATA
    if isinstance(err, SolverError):
        return EXIT_SOLVER
    return EXIT_OTHER


def main(argv=None):
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    versions = {"budro": __version__, "python": platform.python_version(), "numpy": np.__version__,
                "scipy": scipy.__version__}
    manifest = {"command": args.command, "argv": list(sys.argv[1:] if argv is None else argv),
                "versions": versions}
    out, code = Path(args.out) if args.out else None, EXIT_OK
    try:
        cfg = resolve_config(args.command, args)
        out = Path(cfg["out"])
        manifest["config"] = cfg
        manifest["seed"] = cfg["seed"]
        out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(limits=cfg["threads"]):
            result = COMMANDS[args.command](cfg, out)
        written, extra = result if isinstance(result, tuple) else (result, {})
        manifest["outputs"] = {Path(p).name: _digest(p) for p in written}
        manifest.update(extra)
        manifest["status"] = "ok"
    except (BudroError, FileNotFoundError, OSError) as err:
        code = _exit_code(err)
        manifest["status"] = "error"
        manifest["error"] = f"{args.command}: {type(err).__name__}: {err}"
        print(f"budro {manifest['error']}", file=sys.stderr)
    except Exception as err:  # unexpected: still leave a manifest behind
        code = EXIT_OTHER
        manifest["status"] = "error"
        manifest["error"] = f"{args.command}: {type(err).__name__}: {err}"
        manifest["traceback"] = traceback.format_exc()
        print(f"budro {manifest['error']}", file=sys.stderr)
    manifest["exit_code"] = code
    manifest["wall_time"] = time.perf_counter() - start
    if out is not None:
        try:
            fileformats.save(out / "manifest.txt", "manifest", manifest)
        except OSError as err:
            print(f"budro: could not write manifest: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
