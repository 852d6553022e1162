"""Command-line entry point: ``sparsewind <command> [options]``.

Commands: ingest, synth, train, forecast, evaluate, compare. Every command
accepts ``--config <json>``, ``--out <dir>`` and ``--seed <int>`` and writes
``manifest.json`` into the output directory. Errors print a single line
``E_<CODE>: message`` to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import Dataset, DatasetError, ingest_csv, write_csv
from .design import BlockLayout, DesignError, build_nonuniform, build_uniform
from .forecast import (ForecastConfig, ForecastError, ForecastRun, Method, backtest,
                       resolve_layouts, split_methods, parse_method, fit_cst,
                       fit_ls_mar, fit_ar)
from .metrics import EvaluationReport, MetricError
from .orders import DEFAULT_GRID, layouts_for_all, tune_order_params
from .solver import SolverConfig, SolverError
from .synth import SimulationError, plant, simulate, clip_rate

logger = logging.getLogger("sparsewind")

SCHEMA_VERSION = 1
DEFAULT_METHODS = "persistence,ar(3),ls_mar(3),cst_uniform(3),cst_nonuniform"

# key -> (type, default); None default means "not set"
CONFIG_KEYS = {
    "data": (str, None),
    "target": (str, None),
    "split_hour": (int, None),
    "horizon": (int, 6),
    "window": (int, 720),
    "methods": (str, DEFAULT_METHODS),
    "method": (str, "cst_nonuniform"),
    "kmax": (int, None),
    "nmax": (int, 6),
    "tau": (float, 0.4),
    "tune_orders": (bool, False),
    "tune_fraction": (float, 0.25),
    "min_gain": (float, 1e-9),
    "residual_tol": (float, 1e-6),
    "ridge": (float, 1e-10),
    "normalize_columns": (bool, True),
    "center": (bool, False),
    "gap_limit": (int, 3),
    "seed": (int, 0),
    "jobs": (int, 1),
    "stations": (int, 20),
    "order": (int, 3),
    "k": (int, 3),
    "sigma": (float, 0.5),
    "hours": (int, 1080),
    "burn_in": (int, 200),
    "baseline_level": (float, None),
    "runs": (list, None),
    "timings": (bool, False),
}
# never part of the manifest snapshot: they must not change the output bytes
NON_SEMANTIC = {"jobs", "out", "config", "timings"}


class CliError(Exception):
    def __init__(self, code: str, message: str, exit_code: int = 1):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("E_USAGE", message, 2)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError("E_CONFIG", f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise CliError("E_CONFIG", "config must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise CliError("E_CONFIG", f"config schema_version must be {SCHEMA_VERSION}")
    out = {}
    for key, value in cfg.items():
        if key == "schema_version":
            continue
        if key not in CONFIG_KEYS:
            raise CliError("E_CONFIG", f"unknown config key {key!r}")
        typ = CONFIG_KEYS[key][0]
        if key == "methods" and isinstance(value, list):
            value = ",".join(value)
        ok = isinstance(value, typ) and not (typ is int and isinstance(value, bool))
        if typ is float and isinstance(value, int) and not isinstance(value, bool):
            value, ok = float(value), True
        if not ok:
            raise CliError("E_CONFIG", f"config key {key!r} must be {typ.__name__}")
        out[key] = value
    return out


def merge_settings(args: argparse.Namespace) -> dict:
    """Defaults < config file < command-line flags."""
    settings = {k: d for k, (_, d) in CONFIG_KEYS.items()}
    settings.update(load_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    settings["out"] = args.out
    return settings


def _solver_cfg(s: dict) -> SolverConfig:
    try:
        return SolverConfig(k_max=s["kmax"], residual_tol=s["residual_tol"],
                            normalize_columns=s["normalize_columns"], ridge=s["ridge"],
                            min_gain=s["min_gain"])
    except SolverError as exc:
        raise CliError("E_CONFIG", str(exc)) from None


def _require(s: dict, key: str):
    if s.get(key) is None:
        raise CliError("E_USAGE", f"missing required option --{key.replace('_', '-')}", 2)
    return s[key]


def _load_data(s: dict) -> Dataset:
    path = _require(s, "data")
    try:
        return ingest_csv(path, s["gap_limit"])
    except FileNotFoundError:
        raise CliError("E_IO", f"no such file: {path}") from None
    except DatasetError as exc:
        raise CliError("E_DATA", str(exc)) from None


def _target_index(ds: Dataset, s: dict) -> int:
    target = _require(s, "target")
    try:
        return ds.index_of(target)
    except DatasetError as exc:
        raise CliError("E_USAGE", str(exc), 2) from None


def _split(ds: Dataset, s: dict) -> int:
    split = s["split_hour"]
    if split is None:
        split = (2 * ds.T) // 3
    if not 0 < split < ds.T:
        raise CliError("E_CONFIG", f"split hour {split} outside (0, {ds.T})")
    return split


def _parse_methods(text: str) -> list[Method]:
    try:
        methods = split_methods(text)
    except ValueError as exc:
        raise CliError("E_METHOD", str(exc)) from None
    if not methods:
        raise CliError("E_METHOD", "no methods given")
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise CliError("E_METHOD", "duplicate methods")
    return methods


class Output:
    """Collects output files and writes the manifest last."""

    def __init__(self, out: str | None, command: str, settings: dict):
        if out is None:
            raise CliError("E_USAGE", "missing required option --out", 2)
        self.root = Path(out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.settings = settings
        self.files: list[str] = []
        self.inputs: dict[str, dict] = {}
        self.timings: dict[str, float] = {}
        self._t = time.perf_counter()

    def phase(self, name: str):
        now = time.perf_counter()
        self.timings[name] = round(now - self._t, 6)
        self._t = now

    def add_input(self, key: str, path: str | Path):
        path = Path(path)
        self.inputs[key] = {"file": path.name, "sha256": _sha256(path)}

    def write_text(self, rel: str, text: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.files.append(rel)
        return path

    def register(self, rel: str):
        self.files.append(rel)

    def finish(self):
        snapshot = {k: v for k, v in self.settings.items() if k not in NON_SEMANTIC}
        manifest = {
            "tool": "sparsewind",
            "version": __version__,
            "command": self.command,
            "schema_version": SCHEMA_VERSION,
            "config": snapshot,
            "seed": self.settings.get("seed"),
            "inputs": self.inputs,
            "outputs": {rel: _sha256(self.root / rel) for rel in sorted(self.files)},
        }
        if self.settings.get("timings"):
            manifest["timings_s"] = self.timings
        (self.root / "manifest.json").write_text(_dump(manifest))


def _write_dataset(out: Output, ds: Dataset, name: str = "dataset.csv"):
    path = write_csv(ds, out.root / name)
    out.register(name)
    out.register(path.with_suffix(".meta.json").name)


def _write_run(out: Output, run: ForecastRun, slug: str, with_json: bool = False):
    out.write_text(f"runs/{slug}.csv", run.to_csv())
    if with_json:
        out.write_text(f"runs/{slug}.json", run.to_json())
    for cycle, c in enumerate(run.coefficients_log):
        out.write_text(f"coeffs/{slug}/{cycle:04d}.json", _dump(c.to_dict()))


def cmd_ingest(s: dict) -> int:
    out = Output(s["out"], "ingest", s)
    ds = _load_data(s)
    out.add_input("data", s["data"])
    out.phase("ingest")
    _write_dataset(out, ds)
    out.phase("write")
    out.finish()
    print(f"ingested {ds.P} stations x {ds.T} hours, "
          f"{int(ds.filled_mask.sum())} cells interpolated")
    return 0


def cmd_synth(s: dict) -> int:
    out = Output(s["out"], "synth", s)
    P, n, K = s["stations"], s["order"], s["k"]
    try:
        model = plant(P, BlockLayout.uniform(P, n), K, s["seed"],
                      noise_sigma=s["sigma"], baseline_level=s["baseline_level"])
        ds = simulate(model, s["hours"], s["burn_in"])
        rate = clip_rate(model, s["hours"], s["burn_in"])
    except (ValueError, SimulationError) as exc:
        raise CliError("E_SYNTH", str(exc)) from None
    out.phase("simulate")
    _write_dataset(out, ds)
    truth = model.to_dict()
    truth["clip_rate"] = rate
    truth["station_ids"] = ds.ids
    out.write_text("truth.json", _dump(truth))
    out.phase("write")
    out.finish()
    print(f"synthesized {P} stations x {ds.T} hours (clipping {100 * rate:.3f}%)")
    return 0


def _nonuniform_layouts(method: Method, ds: Dataset, split: int, target: int, s: dict,
                        fcfg_kwargs: dict) -> Method:
    if method.kind != "cst_nonuniform":
        return method
    method = Method("cst_nonuniform", n_max=s["nmax"], tau=s["tau"])
    if not s["tune_orders"]:
        return resolve_layouts(method, ds, split)
    pre = ds.slice(0, split)
    inner = split - max(1, int(round(s["tune_fraction"] * split)))
    grid = list(DEFAULT_GRID)
    cfg = ForecastConfig(Method("cst_nonuniform", n_max=max(n for n, _ in grid)),
                         fcfg_kwargs["horizon"], min(fcfg_kwargs["window"], inner),
                         fcfg_kwargs["solver"], fcfg_kwargs.get("center", False))
    result = tune_order_params(pre.slice(0, inner), pre.slice(inner, split), target, grid, cfg)
    logger.info("tuned orders: n_max=%d tau=%g", result.n_max, result.tau)
    return method.with_layouts(layouts_for_all(pre, result.n_max, result.tau))


def _run_method(ds, split, target, method, s, solver) -> ForecastRun:
    fkw = {"horizon": s["horizon"], "window": s["window"], "solver": solver,
           "center": s["center"]}
    try:
        method = _nonuniform_layouts(method, ds, split, target, s, fkw)
        cfg = ForecastConfig(method, **fkw)
        return backtest(ds, split, cfg, target)
    except (ForecastError, SolverError, DesignError, DatasetError) as exc:
        raise CliError("E_FORECAST", f"{method.label}: {exc}") from None
    except ValueError as exc:
        raise CliError("E_CONFIG", f"{method.label}: {exc}") from None


def cmd_train(s: dict) -> int:
    """Fit one method on the window ending at the split hour; dump target coefficients."""
    out = Output(s["out"], "train", s)
    ds = _load_data(s)
    out.add_input("data", s["data"])
    target = _target_index(ds, s)
    split = s["split_hour"] if s["split_hour"] is not None else ds.T
    if not 0 < split <= ds.T:
        raise CliError("E_CONFIG", f"split hour {split} outside (0, {ds.T}]")
    method = _parse_methods(s["method"])[0]
    solver = _solver_cfg(s)
    window = min(s["window"], split)
    train = ds.values[:, split - window:split]
    if s["center"]:
        train = train - train.mean(axis=1, keepdims=True)
    try:
        if method.kind == "cst_nonuniform":
            method = _nonuniform_layouts(method, ds, split, target, s,
                                         {"horizon": s["horizon"], "window": window,
                                          "solver": solver, "center": s["center"]})
            _, coefs = fit_cst(train, method.layouts, solver)
        elif method.kind == "cst_uniform":
            _, coefs = fit_cst(train, [BlockLayout.uniform(ds.P, method.order)] * ds.P, solver)
        elif method.kind == "ls_mar":
            _, coefs = fit_ls_mar(train, method.order)
        elif method.kind == "ar":
            _, coefs = fit_ar(train, method.order)
        else:
            raise CliError("E_METHOD", "persistence has no coefficients to train")
    except (SolverError, DesignError) as exc:
        raise CliError("E_SOLVER", str(exc)) from None
    out.phase("fit")
    c = coefs[target]
    c.trained_at_hour = split
    out.write_text(f"coeffs/{method.slug}.json", _dump(c.to_dict()))
    out.finish()
    print(f"{method.label}: target {ds.ids[target]} support "
          f"{[ds.ids[p] for p in c.support] if c.layout.P == ds.P else list(c.support)}")
    return 0


def cmd_forecast(s: dict) -> int:
    out = Output(s["out"], "forecast", s)
    ds = _load_data(s)
    out.add_input("data", s["data"])
    target = _target_index(ds, s)
    split = _split(ds, s)
    method = _parse_methods(s["method"])[0]
    run = _run_method(ds, split, target, method, s, _solver_cfg(s))
    out.phase("backtest")
    _write_run(out, run, method.slug, with_json=True)
    out.finish()
    print(f"{run.method}: {len(run.hours)} predictions over hours {split}..{ds.T - 1}")
    return 0


def _read_run_csv(path: Path) -> tuple[str, np.ndarray, np.ndarray, np.ndarray]:
    hours, actual, predicted, methods = [], [], [], set()
    try:
        with path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                hours.append(int(row["hour"]))
                actual.append(float(row["actual"]))
                predicted.append(float(row["predicted"]))
                methods.add(row["method"])
    except (OSError, KeyError, ValueError) as exc:
        raise CliError("E_IO", f"cannot read run file {path}: {exc}") from None
    if len(methods) != 1:
        raise CliError("E_DATA", f"{path}: expected exactly one method per run file")
    return methods.pop(), np.array(hours), np.array(actual), np.array(predicted)


def cmd_evaluate(s: dict) -> int:
    out = Output(s["out"], "evaluate", s)
    runs = _require(s, "runs")
    report = None
    for i, name in enumerate(runs):
        path = Path(name)
        out.add_input(f"run{i}", path)
        method, hours, actual, predicted = _read_run_csv(path)
        if report is None:
            report = EvaluationReport(s["target"] or "", (int(hours.min()), int(hours.max()) + 1))
        steps = (hours - hours.min()) % s["horizon"] + 1
        try:
            report.add(method, actual, predicted, steps)
        except MetricError as exc:
            raise CliError("E_METRIC", f"{path}: {exc}") from None
    out.write_text("report.csv", report.to_csv())
    out.write_text("report.json", report.to_json())
    out.finish()
    print(report.format_table())
    return 0


def cmd_compare(s: dict) -> int:
    out = Output(s["out"], "compare", s)
    ds = _load_data(s)
    out.add_input("data", s["data"])
    target = _target_index(ds, s)
    split = _split(ds, s)
    methods = _parse_methods(s["methods"])
    solver = _solver_cfg(s)
    out.phase("load")

    def job(m):
        return _run_method(ds, split, target, m, s, solver)

    jobs = max(1, int(s["jobs"]))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(job, methods))
    else:
        runs = [job(m) for m in methods]
    out.phase("backtest")

    report = EvaluationReport(ds.ids[target], (split, ds.T))
    for m, run in zip(methods, runs):
        try:
            report.add(run.method, run.actual, run.predicted, run.steps)
        except MetricError as exc:
            raise CliError("E_METRIC", f"{run.method}: {exc}") from None
        _write_run(out, run, m.slug)
    out.write_text("report.csv", report.to_csv())
    out.write_text("report.json", report.to_json())
    out.phase("write")
    out.finish()
    print(report.format_table())
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsewind", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")

    def data_opts(p):
        p.add_argument("--data", help="wide hourly CSV")
        p.add_argument("--gap-limit", dest="gap_limit", type=int)

    def solver_opts(p):
        p.add_argument("--kmax", type=int, help="maximum number of station blocks")
        p.add_argument("--min-gain", dest="min_gain", type=float)
        p.add_argument("--residual-tol", dest="residual_tol", type=float)
        p.add_argument("--nmax", type=int, help="nonuniform lag cap")
        p.add_argument("--tau", type=float, help="nonuniform correlation threshold")
        p.add_argument("--tune-orders", dest="tune_orders", action="store_const", const=True)
        p.add_argument("--center", action="store_const", const=True,
                       help="fit on training-window deviations from each station's mean")

    def forecast_opts(p):
        p.add_argument("--target", help="target station id")
        p.add_argument("--split-hour", dest="split_hour", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--window", type=int)

    p = sub.add_parser("ingest", help="validate and gap-fill a wide CSV")
    common(p)
    data_opts(p)

    p = sub.add_parser("synth", help="simulate a planted block-sparse network")
    common(p)
    p.add_argument("--stations", type=int)
    p.add_argument("--order", type=int)
    p.add_argument("--k", type=int, help="blocks per target, self included")
    p.add_argument("--sigma", type=float)
    p.add_argument("--hours", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--baseline-level", dest="baseline_level", type=float)

    p = sub.add_parser("train", help="fit one method and dump the target's coefficients")
    common(p)
    data_opts(p)
    forecast_opts(p)
    solver_opts(p)
    p.add_argument("--method")

    p = sub.add_parser("forecast", help="backtest one method")
    common(p)
    data_opts(p)
    forecast_opts(p)
    solver_opts(p)
    p.add_argument("--method")

    p = sub.add_parser("evaluate", help="score run CSVs")
    common(p)
    p.add_argument("--runs", nargs="+")
    p.add_argument("--target")
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("compare", help="backtest several methods and tabulate errors")
    common(p)
    data_opts(p)
    forecast_opts(p)
    solver_opts(p)
    p.add_argument("--methods", help=f"comma-separated (default {DEFAULT_METHODS})")
    p.add_argument("--jobs", type=int)
    p.add_argument("--timings", action="store_const", const=True,
                   help="record wall-clock per phase in the manifest")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("E_USAGE", "missing command; one of " + ", ".join(COMMANDS), 2)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](merge_settings(args))
    except CliError as exc:
        print(f"{exc.code}: {' '.join(str(exc).split())}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - last-resort single-line report
        print(f"E_INTERNAL: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
