"""Command-line runs that write CSV plot data plus a reproducible manifest.

Parameter precedence is defaults < ``--config`` file < flags. Every run
writes ``manifest.txt`` in the output directory; it is itself a valid
``--config`` file, and rerunning from it reproduces every output byte for
byte. All outputs are rendered in memory first and then moved into place
with atomic renames, so a failing run leaves no partial files.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .basis import build_global
from .data import Dataset, SyntheticSpec, generate, load_csv
from .errors import InputError, SlabSmoothError
from .gibbs import McmcConfig, PriorConfig
from .global_smoother import effective_kernel, fit_global, kernel_diagonal
from .local_smoother import LocalConfig, fit_curve
from .theory import (
    CHI2_PERCENTILES,
    NullLimitInput,
    chi2_percentile_values,
    limiting_null_density,
    limiting_null_mean_curve,
    prior_density_curve,
)

COMMANDS = ("fit-global", "fit-local", "dof-curve", "theory-density", "simulate")
SCENARIOS = ("sparse", "overparam", "registration")
CURVES = ("sine", "piecewise_flat", "polynomial")


class UsageError(Exception):
    exit_code = 2


# name -> (type, default); None defaults are resolved per command
PARAMS = {
    "command": (str, None),
    "input": (str, None),
    "degree": (int, None),
    "bandwidth": (float, None),
    "a1": (float, 5.0),
    "a2": (float, 50.0),
    "v0": (float, 0.005),
    "iters": (int, None),
    "burnin": (int, None),
    "thin": (int, 1),
    "seed": (int, 0),
    "jobs": (int, 1),
    "w": (float, 0.1),
    "grid_points": (int, 400),
    "kernel_at": (int, None),
    "scenario": (str, None),
    "curve": (str, None),
    "curve_params": (str, ""),
    "n": (int, None),
    "noise_sd": (float, None),
    "x_min": (float, None),
    "x_max": (float, None),
    "signals": (int, 5),
    "degree_alt": (int, 10),
}
_SCENARIO_DEFAULTS = {
    "sparse": {"n": 400, "degree": 20, "noise_sd": 1.0, "x_min": 0.0, "x_max": 1.0},
    "overparam": {"n": 200, "degree": 25, "noise_sd": 0.3, "x_min": 0.0, "x_max": 2 * math.pi,
                  "curve": "sine"},
    "registration": {"n": 300, "degree": 3, "noise_sd": 0.1, "x_min": 0.0, "x_max": 10.0,
                     "bandwidth": 0.5, "curve": "piecewise_flat",
                     "curve_params": "breakpoint=5;frequency=2.5132741228718345"},
}
_SYNTH_DEFAULTS = {"n": 200, "noise_sd": 0.3, "x_min": 0.0, "x_max": 2 * math.pi}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="slabsmooth", description="Rescaled spike-and-slab smoothing runs.")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--input", help="CSV with columns x,y[,group]")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--degree", type=int)
    p.add_argument("--bandwidth", type=float, help="local window half-width (fit-local, dof-curve)")
    p.add_argument("--a1", type=float)
    p.add_argument("--a2", type=float)
    p.add_argument("--v0", type=float)
    p.add_argument("--iters", type=int, help="total Gibbs sweeps")
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker threads for local fits")
    p.add_argument("--w", type=float, help="mixing weight for theory-density")
    p.add_argument("--grid-points", dest="grid_points", type=int)
    p.add_argument("--kernel-at", dest="kernel_at", type=int,
                   help="also export the effective kernel row for this index (fit-global)")
    p.add_argument("--scenario", choices=SCENARIOS, help="simulate scenario")
    p.add_argument("--curve", choices=CURVES, help="synthetic mean function instead of --input")
    p.add_argument("--curve-params", dest="curve_params", help="e.g. 'frequency=2;amplitude=1'")
    p.add_argument("--n", type=int, help="synthetic sample size")
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--x-min", dest="x_min", type=float)
    p.add_argument("--x-max", dest="x_max", type=float)
    p.add_argument("--signals", type=int, help="non-zero coefficients (simulate sparse)")
    p.add_argument("--degree-alt", dest="degree_alt", type=int,
                   help="comparison degree (simulate overparam)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def read_config(path) -> dict:
    """Parse a ``key=value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in PARAMS:
            raise UsageError(f"{path}:{line_no}: unknown key {key!r}")
        typ = PARAMS[key][0]
        try:
            out[key] = typ(value) if value != "" else None
        except ValueError:
            raise UsageError(f"{path}:{line_no}: bad value {value!r} for {key}") from None
    return out


def _parse_curve_params(text):
    params = {}
    for part in filter(None, (s.strip() for s in text.split(";"))):
        if "=" not in part:
            raise UsageError(f"curve parameter {part!r} must be key=value")
        k, v = (s.strip() for s in part.split("=", 1))
        try:
            params[k] = tuple(float(c) for c in v.split(",")) if k == "coefficients" else float(v)
        except ValueError:
            raise UsageError(f"bad curve parameter value {v!r}") from None
    return params


def resolve(argv=None) -> dict:
    """Merge defaults, config file and flags into one validated parameter dict."""
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if v is not None}
    file_vals = read_config(flags["config"]) if "config" in flags else {}
    cfg = {k: default for k, (_, default) in PARAMS.items()}
    for k, v in file_vals.items():
        if v is not None:
            cfg[k] = v
    for k, v in flags.items():
        if k in PARAMS:
            cfg[k] = v
    cfg["out"] = flags.get("out", "out")

    cmd = cfg["command"]
    if cmd is None:
        raise UsageError("--command is required (one of " + ", ".join(COMMANDS) + ")")
    if cmd not in COMMANDS:
        raise UsageError(f"unknown command {cmd!r}")
    explicit = {k for k, v in file_vals.items() if v is not None} | set(flags)

    def forbid(*keys):
        for k in keys:
            if k in explicit and cfg[k] is not None and cfg[k] != PARAMS[k][1]:
                raise UsageError(f"--{k.replace('_', '-')} is not valid with {cmd}")

    local = cmd in ("fit-local", "dof-curve") or (cmd == "simulate" and cfg["scenario"] == "registration")
    if cmd == "fit-global":
        forbid("bandwidth", "scenario", "w")
    if cmd in ("fit-local", "dof-curve"):
        forbid("scenario", "w", "kernel_at")
        if cfg["bandwidth"] is None:
            raise UsageError(f"{cmd} needs --bandwidth")
    if cmd == "theory-density":
        forbid("input", "bandwidth", "degree", "scenario", "curve", "kernel_at")
    if cmd == "simulate":
        forbid("input", "kernel_at", "w")
        if cfg["scenario"] is None:
            raise UsageError("simulate needs --scenario (one of " + ", ".join(SCENARIOS) + ")")
        for k, v in _SCENARIO_DEFAULTS[cfg["scenario"]].items():
            if k not in explicit:
                cfg[k] = v
        if cfg["scenario"] != "registration":
            forbid("bandwidth")
    if cmd in ("fit-global", "fit-local", "dof-curve"):
        if cfg["input"] is None and cfg["curve"] is None:
            raise UsageError(f"{cmd} needs --input or --curve")
        if cfg["input"] is not None and cfg["curve"] is not None:
            raise UsageError("give either --input or --curve, not both")
        if cfg["curve"] is not None:
            for k, v in _SYNTH_DEFAULTS.items():
                if cfg[k] is None:
                    cfg[k] = v
    if cfg["degree"] is None and cmd != "theory-density":
        cfg["degree"] = 10 if cmd == "fit-global" else 3
    if cfg["iters"] is None:
        cfg["iters"] = 2000 if local else 5000
    if cfg["burnin"] is None:
        cfg["burnin"] = 500 if local else 1000
    if cfg["jobs"] < 1:
        raise UsageError("--jobs must be at least 1")
    if cmd != "theory-density" and cfg["degree"] < 1:
        raise UsageError("--degree must be at least 1")

    # re-validate numeric constraints owned by the fitting modules
    try:
        cfg["_prior"] = PriorConfig(cfg["a1"], cfg["a2"], cfg["v0"])
        cfg["_mcmc"] = McmcConfig(cfg["iters"], cfg["burnin"], cfg["seed"], cfg["thin"])
        if local:
            cfg["_local"] = LocalConfig(cfg["bandwidth"], cfg["degree"], cfg["_prior"], cfg["_mcmc"])
        if cmd == "theory-density":
            NullLimitInput(cfg["w"], 0.0, cfg["_prior"])
            if cfg["grid_points"] < 10:
                raise ValueError("--grid-points must be at least 10")
        cfg["_curve_params"] = _parse_curve_params(cfg["curve_params"] or "")
        if cfg["curve"] is not None:
            cfg["_synth"] = SyntheticSpec(cfg["curve"], cfg["noise_sd"], cfg["n"],
                                          (cfg["x_min"], cfg["x_max"]), cfg["seed"], cfg["_curve_params"])
    except (ValueError, SlabSmoothError) as exc:
        raise UsageError(str(exc)) from None
    return cfg


# --- output helpers ----------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _safe(tag):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in str(tag))


def write_atomic(out_dir: Path, files: dict) -> list[Path]:
    """Write every ``name -> text`` entry via temp file and rename."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        target = out_dir / name
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        written.append(target)
    return written


def manifest_text(cfg) -> str:
    lines = [f"# slabsmooth {__version__} run manifest; rerun with --config <this file>"]
    if cfg["input"] is not None:
        digest = hashlib.sha256(Path(cfg["input"]).read_bytes()).hexdigest()
        lines.append(f"# input sha256 {digest}")
    for key in PARAMS:
        v = cfg[key]
        lines.append(f"{key}={'' if v is None else _fmt(v)}")
    return "\n".join(lines) + "\n"


# --- pipelines ---------------------------------------------------------------

def _load(cfg) -> Dataset:
    if cfg["input"] is not None:
        return load_csv(cfg["input"])
    return generate(cfg["_synth"])


def _coef_rows(summary):
    for k in range(summary.d):
        yield (k + 1, summary.V[k], summary.beta_hat[k], summary.beta_ols[k],
               (1 - summary.V[k]) / summary.V[k] if summary.V[k] > 0 else float("inf"))


def run_fit_global(cfg) -> dict:
    data = _load(cfg)
    files = {}
    summary_rows = []
    for g, part in data.split_groups().items():
        fit = fit_global(part, cfg["degree"], cfg["_prior"], cfg["_mcmc"])
        tag = _safe(g)
        files[f"fit-global_{tag}.csv"] = csv_text(
            ["x", "y", "fitted_spike_slab", "fitted_ols"],
            zip(part.x, part.y, fit.fitted, fit.ols_fitted))
        files[f"fit-global_{tag}_kernel_diag.csv"] = csv_text(
            ["x", "self_weight_spike_slab", "self_weight_ols"],
            zip(part.x, kernel_diagonal(fit, "spike_slab"), kernel_diagonal(fit, "ols")))
        files[f"fit-global_{tag}_coefficients.csv"] = csv_text(
            ["k", "V", "beta_hat", "beta_ols", "penalty"], _coef_rows(fit.summary))
        if cfg["kernel_at"] is not None:
            i = cfg["kernel_at"]
            if not 0 <= i < part.n:
                raise InputError(f"--kernel-at {i} is outside group {g!r} (n={part.n})")
            rows = []
            for which in ("spike_slab", "ols"):
                k = effective_kernel(fit, i, which)
                rows.extend((which, xj, wj) for xj, wj in zip(part.x, k.weights))
            files[f"fit-global_{tag}_kernel_{i}.csv"] = csv_text(["smoother", "x_j", "weight"], rows)
        summary_rows.append((g, part.n, cfg["degree"], fit.dof, fit.ols_dof,
                             fit.summary.sigma_hat, fit.summary.w_mean, fit.degenerate))
    files["fit-global_summary.csv"] = csv_text(
        ["group", "n", "d", "dof", "ols_dof", "sigma_hat", "w_mean", "degenerate"], summary_rows)
    return files


def _local_rows(cfg, data):
    for g, part in data.split_groups().items():
        yield g, part, fit_curve(part, cfg["_local"], jobs=cfg["jobs"])


def run_fit_local(cfg) -> dict:
    data = _load(cfg)
    d = cfg["degree"]
    files = {}
    summary_rows = []
    for g, part, curve in _local_rows(cfg, data):
        tag = _safe(g)
        files[f"fit-local_{tag}.csv"] = csv_text(
            ["x", "y", "f_hat", "dof"], zip(part.x, part.y, curve.fitted, curve.dof_curve.dof))
        diag = []
        for f, xi in zip(curve.fits, part.x):
            V = f.V_i if f.ok else np.full(d, np.nan)
            diag.append((xi, f.n_i, f.sigma_i, f.dof_i, *V, f.widened, f.degenerate))
        files[f"fit-local_{tag}_diagnostics.csv"] = csv_text(
            ["x", "n_i", "sigma_i", "dof"] + [f"V_{k}" for k in range(1, d + 1)] + ["widened", "degenerate"],
            diag)
        n_fail = sum(not f.ok for f in curve.fits)
        summary_rows.append((g, part.n, d, cfg["bandwidth"], float(np.nanmean(curve.dof_curve.dof)), n_fail))
    files["fit-local_summary.csv"] = csv_text(
        ["group", "n", "d", "bandwidth", "mean_dof", "failed_points"], summary_rows)
    return files


def run_dof_curve(cfg) -> dict:
    data = _load(cfg)
    files = {}
    for g, part, curve in _local_rows(cfg, data):
        files[f"dof-curve_{_safe(g)}.csv"] = csv_text(["x", "dof"], curve.dof_curve.points)
    return files


def _density_csv(curve):
    meta = [f"{k}={_fmt(v)}" for k, v in curve.params.items()]
    return csv_text(["grid", "value", "kind"], ((g, v, curve.kind) for g, v in zip(curve.grid, curve.values)), meta)


def run_theory_density(cfg) -> dict:
    prior, w, m = cfg["_prior"], cfg["w"], cfg["grid_points"]
    wtag = _safe(format(w, "g"))
    files = {}
    u_grid = np.logspace(-4, 3, m)
    files[f"theory-density_prior_w{wtag}.csv"] = _density_csv(prior_density_curve(w, prior, u_grid))
    nu_grid = (np.arange(m) + 0.5) / m
    z_values = chi2_percentile_values()
    for pct, z_sq in zip(CHI2_PERCENTILES, z_values):
        curve = limiting_null_density(NullLimitInput(w, z_sq, prior), nu_grid)
        files[f"theory-density_limit_w{wtag}_p{int(round(pct * 100))}.csv"] = _density_csv(curve)
    files[f"theory-density_limit_mean_w{wtag}.csv"] = _density_csv(limiting_null_mean_curve(w, prior, z_values))
    return files


def run_simulate(cfg) -> dict:
    scenario = cfg["scenario"]
    return {"sparse": _sim_sparse, "overparam": _sim_overparam, "registration": _sim_registration}[scenario](cfg)


def _sim_sparse(cfg):
    n, d, s, sd = cfg["n"], cfg["degree"], cfg["signals"], cfg["noise_sd"]
    if not 0 < s <= d:
        raise UsageError("--signals must be between 1 and --degree")
    rng = np.random.default_rng(cfg["seed"])
    x = np.linspace(cfg["x_min"], cfg["x_max"], n)
    basis = build_global(x, d)
    beta = np.zeros(d)
    beta[:s] = 5.0 * sd
    truth = basis.values @ beta
    data = Dataset(x, truth + rng.normal(0.0, sd, n))
    fit = fit_global(data, d, cfg["_prior"], cfg["_mcmc"])
    sm = fit.summary
    files = {
        "simulate_sparse_truth.csv": csv_text(
            ["x", "y", "truth", "fitted_spike_slab", "fitted_ols"],
            zip(data.x, data.y, truth, fit.fitted, fit.ols_fitted)),
        "simulate_sparse_summary.csv": csv_text(
            ["k", "signal", "beta_true", "V", "beta_hat", "beta_ols", "abs_error_spike_slab", "abs_error_ols"],
            ((k + 1, beta[k] != 0, beta[k], sm.V[k], sm.beta_hat[k], sm.beta_ols[k],
              abs(sm.beta_hat[k] - beta[k]), abs(sm.beta_ols[k] - beta[k])) for k in range(d))),
    }
    return files


def _synthetic(cfg):
    spec = SyntheticSpec(cfg["curve"], cfg["noise_sd"], cfg["n"], (cfg["x_min"], cfg["x_max"]),
                         cfg["seed"], cfg["_curve_params"])
    data = generate(spec)
    return data, spec.mean(data.x)


def _sim_overparam(cfg):
    data, truth = _synthetic(cfg)
    cols, header, rows = [], ["x", "y", "truth"], []
    for d in (cfg["degree"], cfg["degree_alt"]):
        fit = fit_global(data, d, cfg["_prior"], cfg["_mcmc"])
        cols += [fit.fitted, fit.ols_fitted]
        header += [f"fitted_spike_slab_d{d}", f"fitted_ols_d{d}"]
        rows.append((d, float(np.max(np.abs(fit.fitted - truth))),
                     float(np.max(np.abs(fit.ols_fitted - truth))), fit.dof))
    return {
        "simulate_overparam_truth.csv": csv_text(header, zip(data.x, data.y, truth, *cols)),
        "simulate_overparam_summary.csv": csv_text(
            ["d", "max_abs_error_spike_slab", "max_abs_error_ols", "dof"], rows),
    }


def _sim_registration(cfg):
    data, truth = _synthetic(cfg)
    curve = fit_curve(data, cfg["_local"], jobs=cfg["jobs"])
    bp = cfg["_curve_params"].get("breakpoint", 0.5 * (cfg["x_min"] + cfg["x_max"]))
    flat = data.x < bp
    dof = curve.dof_curve.dof
    return {
        "simulate_registration_truth.csv": csv_text(
            ["x", "y", "truth", "f_hat", "dof"], zip(data.x, data.y, truth, curve.fitted, dof)),
        "simulate_registration_summary.csv": csv_text(
            ["region", "mean_dof", "max_abs_error"],
            [("flat", float(np.mean(dof[flat])), float(np.max(np.abs(curve.fitted - truth)[flat]))),
             ("curved", float(np.mean(dof[~flat])), float(np.max(np.abs(curve.fitted - truth)[~flat])))]),
    }


PIPELINES = {
    "fit-global": run_fit_global,
    "fit-local": run_fit_local,
    "dof-curve": run_dof_curve,
    "theory-density": run_theory_density,
    "simulate": run_simulate,
}


def run(cfg) -> list[Path]:
    files = PIPELINES[cfg["command"]](cfg)
    files["manifest.txt"] = manifest_text(cfg)
    return write_atomic(Path(cfg["out"]), files)


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
        written = run(cfg)
    except UsageError as exc:
        print(f"slabsmooth: usage error: {exc}", file=sys.stderr)
        return 2
    except SlabSmoothError as exc:
        kind = "data error" if exc.exit_code == 3 else "numerical error"
        print(f"slabsmooth: {kind}: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (3, 4) else 4
    except OSError as exc:
        print(f"slabsmooth: data error: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
