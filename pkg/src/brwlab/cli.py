"""Command-line driver.

Every subcommand prints a JSON summary on stdout; CSV artifacts (--out) and
SVG charts (--plot) are optional.  Options can come from an INI config file
(--config) with a [common] section plus one section per subcommand;
explicit flags override file values, file values override defaults.
Unknown config keys are rejected.

Exit codes: 0 success, 1 failed invariants or inconsistent statistics,
2 bad usage or configuration, 3 population overflow.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys

import numpy as np

from . import __version__
from . import analysis as an
from . import fluctuation as fl
from . import limits as lm
from . import spine as sp
from . import tables
from .brw import H_CONST, H_SURVIVAL, HLaplace, run_brw_ensemble
from .errors import BrwLabError, ConfigError, PopulationOverflowError
from .offspring import moment_diagnostics, resolve_law, verify_boundary
from .rng import (
    EXP_CALIBRATE,
    EXP_GREEN,
    EXP_KOZLOV,
    EXP_RENEWAL,
    EXP_SIMULATE,
    EXP_SPINE,
    LANE_AUX,
    StreamKey,
    stream,
)
from .selftest import run_selftest

__all__ = ["main"]


# -- option plumbing -----------------------------------------------------------


def _csv_ints(text):
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}") from exc


def _csv_floats(text):
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

# One entry per option; subcommands pick from this table so that a flag
# spells and parses the same way everywhere.
_OPTIONS = {
    "law": dict(type=str, metavar="LAW",
                help="named law (two-point, gaussian-binary) or path to a law config file"),
    "x": dict(type=float, metavar="X", help="root position"),
    "n": dict(type=int, metavar="N", help="generation / step horizon"),
    "n-grid": dict(type=_csv_ints, metavar="N1,N2,...",
                   help="generation grid (comma separated)"),
    "k0": dict(type=int, metavar="K0",
               help="generation the delayed killing starts from"),
    "replicates": dict(type=int, metavar="R",
                       help="independent replicates (paths, samples)"),
    "seed": dict(type=int, metavar="SEED", help="master seed"),
    "threads": dict(type=int, metavar="T",
                    help="worker threads (default $BRWLAB_THREADS or 1)"),
    "eps": dict(type=float, metavar="EPS", help="truncation threshold"),
    "lambda-grid": dict(type=_csv_floats, metavar="L1,L2,...",
                        help="Laplace exponent grid (comma separated)"),
    "t-max": dict(type=float, metavar="T", help="upper integration limit"),
    "out": dict(type=str, metavar="PATH", help="write a CSV artifact here"),
    "plot": dict(type=str, metavar="PATH", help="write an SVG chart here"),
    "exact": dict(flag=True, help="use the exact lattice route"),
    "budget": dict(type=str, choices=("small", "full"), help="selftest budget"),
}

_ENV_THREADS = "BRWLAB_THREADS"


def _default_threads():
    raw = os.environ.get(_ENV_THREADS, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"bad {_ENV_THREADS} value {raw!r}") from exc


# opts: which flags the subcommand accepts; defaults: value when neither the
# flag nor a config key supplies one (None defaults are resolved in the
# handler).  Dict keys use flag spelling; handler code sees underscores.
_SUBCOMMANDS = {
    "calibrate": dict(
        opts=("law", "replicates", "seed"),
        defaults={"law": "two-point", "replicates": 100_000, "seed": 0},
        help="verify the boundary relations and moment conditions of a law",
    ),
    "simulate": dict(
        opts=("law", "x", "n", "n-grid", "k0", "replicates", "seed",
              "threads", "out", "plot"),
        defaults={"law": "two-point", "x": 0.0, "n": 12, "n-grid": None,
                  "k0": 0, "replicates": 10_000, "seed": 0},
        help="simulate the population martingales over a generation grid",
    ),
    "spine": dict(
        opts=("law", "x", "n", "replicates", "seed", "threads",
              "lambda-grid", "out"),
        defaults={"law": "two-point", "x": 0.0, "n": 6, "replicates": 20_000,
                  "seed": 0, "lambda-grid": (0.5,)},
        help="check the many-to-one identity and the spinal change of measure",
    ),
    "renewal": dict(
        opts=("law", "replicates", "n", "seed", "out", "plot"),
        defaults={"law": "two-point", "replicates": 20_000, "n": 64,
                  "seed": 0},
        help="ladder structure: renewal measures, c=, harmonicity",
    ),
    "green": dict(
        opts=("law", "x", "replicates", "seed", "out"),
        defaults={"law": "two-point", "x": 0.0, "replicates": 20_000,
                  "seed": 0},
        help="Green operator of the killed walk, two independent routes",
    ),
    "kozlov": dict(
        opts=("law", "x", "n", "exact", "replicates", "seed", "out", "plot"),
        defaults={"law": "two-point", "x": 0.0, "n": 1024, "exact": False,
                  "replicates": 100_000, "seed": 0},
        help="survival probability of the killed walk and its decay constant",
    ),
    "seneta-heyde": dict(
        opts=("law", "x", "n-grid", "replicates", "seed", "threads",
              "lambda-grid", "out", "plot"),
        defaults={"law": "two-point", "x": 0.0, "n-grid": (8, 12, 16, 20),
                  "replicates": 2000, "seed": 0,
                  "lambda-grid": lm.DEFAULT_LAM_GRID},
        help="sqrt(n) W_n against the derivative-martingale limit proxy",
    ),
    "tauberian": dict(
        opts=("t-max", "replicates", "seed", "out", "plot"),
        defaults={"t-max": 500.0, "replicates": 200_000, "seed": 0},
        help="integral-test battery on closed-form heavy-tail pairs",
    ),
    "selftest": dict(
        opts=("budget", "seed", "threads"),
        defaults={"budget": "small", "seed": 20260814},
        help="run the named invariant battery",
    ),
}


def _build_parser():
    top = argparse.ArgumentParser(
        prog="brwlab",
        description="boundary-case branching random walk laboratory",
    )
    top.add_argument("--version", action="version",
                     version=f"brwlab {__version__}")
    subs = top.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, spec in _SUBCOMMANDS.items():
        p = subs.add_parser(name, help=spec["help"], description=spec["help"])
        p.add_argument("--config", type=str, metavar="PATH",
                       help="INI config file ([common] + per-command sections)")
        for opt in spec["opts"]:
            props = _OPTIONS[opt]
            if props.get("flag"):
                p.add_argument(f"--{opt}", dest=opt.replace("-", "_"),
                               action="store_const", const=True, default=None,
                               help=props["help"])
            else:
                kwargs = {k: v for k, v in props.items() if k != "flag"}
                p.add_argument(f"--{opt}", dest=opt.replace("-", "_"),
                               default=None, **kwargs)
    return top


def _convert_config_value(opt, raw):
    props = _OPTIONS[opt]
    if props.get("flag"):
        low = raw.strip().lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"config key {opt!r}: expected a boolean, got {raw!r}")
    choices = props.get("choices")
    if choices and raw not in choices:
        raise ConfigError(f"config key {opt!r}: expected one of {choices}, got {raw!r}")
    try:
        return props["type"](raw)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(f"config key {opt!r}: {exc}") from exc


def _read_config(path, command):
    """Values from [common] and [<command>], converted and validated."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path!r}: {exc}") from exc

    every_opt = {o for spec in _SUBCOMMANDS.values() for o in spec["opts"]}
    accepted = set(_SUBCOMMANDS[command]["opts"])
    values = {}
    for section in parser.sections():
        if section != "common" and section not in _SUBCOMMANDS:
            raise ConfigError(f"unknown config section [{section}] in {path!r}")
        if section not in ("common", command):
            continue  # another subcommand's section
        for key, raw in parser.items(section):
            opt = key.replace("_", "-")
            pool = every_opt if section == "common" else accepted
            if opt not in pool:
                raise ConfigError(
                    f"unknown config key {key!r} in [{section}] of {path!r}")
            if opt in accepted:
                # [<command>] wins over [common] regardless of file order
                if section == command or opt not in values:
                    values[opt] = _convert_config_value(opt, raw)
    if parser.defaults():
        key = next(iter(parser.defaults()))
        raise ConfigError(f"unknown config key {key!r} outside any section of {path!r}")
    return values


def _merge_options(args):
    """defaults < config file < explicit flags, as a plain namespace."""
    command = args.command
    spec = _SUBCOMMANDS[command]
    merged = {opt.replace("-", "_"): val for opt, val in spec["defaults"].items()}
    for opt in spec["opts"]:
        merged.setdefault(opt.replace("-", "_"), None)
    if "threads" in spec["opts"]:
        merged["threads"] = _default_threads()
    if args.config is not None:
        for opt, val in _read_config(args.config, command).items():
            merged[opt.replace("-", "_")] = val
    for opt in spec["opts"]:
        dest = opt.replace("-", "_")
        flag_val = getattr(args, dest)
        if flag_val is not None:
            merged[dest] = flag_val
    if merged.get("replicates") is not None and merged["replicates"] <= 0:
        raise ConfigError("replicates must be positive")
    if merged.get("threads") is not None and merged["threads"] <= 0:
        raise ConfigError("threads must be positive")
    return argparse.Namespace(command=command, **merged)


# -- output plumbing -----------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _emit(summary):
    print(json.dumps(_jsonable(summary), sort_keys=True, indent=2))


def _config_stamp(opt, skip=("out", "plot", "command", "threads")):
    # threads is execution detail, not experiment identity: results are
    # bit-identical across worker counts and the stamp must agree too
    return {k: v for k, v in sorted(vars(opt).items())
            if k not in skip and v is not None}


def _write_rows(opt, columns, rows):
    tables.write_csv(opt.out, columns, rows, config=_config_stamp(opt),
                     seed=getattr(opt, "seed", None), version=__version__)


def _plot_lines(path, x, series, xlabel, ylabel, title, logy=False):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, y in series.items():
        ax.plot(x, y, marker="o", markersize=3, linewidth=1.2, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# -- subcommand handlers ---------------------------------------------------------


def _cmd_calibrate(opt):
    law = resolve_law(opt.law)
    rep = verify_boundary(law, opt.replicates,
                          stream(StreamKey(opt.seed, EXP_CALIBRATE, 0, LANE_AUX)))
    mom = moment_diagnostics(law, opt.replicates,
                             stream(StreamKey(opt.seed, EXP_CALIBRATE, 1, LANE_AUX)))
    return {
        "command": "calibrate",
        "law": law.kind,
        "params": list(law.params),
        "sigma2": law.sigma2,
        "lattice_span": law.lattice_span,
        "residual_mass": rep.residual_mass,
        "residual_drift": rep.residual_drift,
        "mass_mean": rep.mass_mean,
        "mass_se": rep.mass_se,
        "drift_mean": rep.drift_mean,
        "drift_se": rep.drift_se,
        "wlog2_mean": mom.wlog2_mean,
        "wlog2_se": mom.wlog2_se,
        "zlog_mean": mom.zlog_mean,
        "zlog_se": mom.zlog_se,
        "moments_look_finite": mom.looks_finite,
        "samples": opt.replicates,
    }


def _cmd_simulate(opt):
    law = resolve_law(opt.law)
    grid = opt.n_grid if opt.n_grid is not None else (opt.n,)
    if min(grid) < 0 or max(grid) > opt.n:
        raise ConfigError(f"n-grid {grid} outside horizon 0..{opt.n}")
    ens = run_brw_ensemble(law, opt.x, opt.n, opt.replicates, opt.seed,
                           k0=opt.k0, experiment_id=EXP_SIMULATE,
                           threads=opt.threads)
    cols = np.asarray(grid, dtype=np.int64)
    per_point = []
    for n in cols:
        point = {"n": int(n)}
        for name in ("W", "D", "Wprime", "Wsecond"):
            vals = getattr(ens, name)[:, n]
            point[f"{name}_mean"] = float(vals.mean())
            point[f"{name}_se"] = float(vals.std(ddof=1) / math.sqrt(opt.replicates))
        point["min_mean"] = float(ens.gen_min[:, n].mean())
        per_point.append(point)
    if opt.out:
        rows = []
        for r in range(opt.replicates):
            for n in cols:
                rows.append((r, int(n), ens.W[r, n], ens.D[r, n],
                             ens.Wprime[r, n], ens.Wsecond[r, n]))
        _write_rows(opt, ("replicate", "n", "W", "D", "Wprime", "Wsecond"), rows)
    if opt.plot:
        gens = np.arange(opt.n + 1)
        _plot_lines(opt.plot, gens,
                    {"E W_n": ens.W.mean(axis=0),
                     "E W'_n": ens.Wprime.mean(axis=0)},
                    "generation", "mean", f"additive martingales, {law.kind}")
    return {
        "command": "simulate",
        "law": law.kind,
        "x": opt.x,
        "n": opt.n,
        "k0": opt.k0,
        "replicates": opt.replicates,
        "points": per_point,
    }


def _cmd_spine(opt):
    law = resolve_law(opt.law)
    lam = opt.lambda_grid[0]
    reports = []
    for H in (H_CONST, H_SURVIVAL, HLaplace(lam)):
        rep = sp.many_to_one_check(law, opt.x, opt.n, H, opt.replicates,
                                   opt.seed, experiment_id=EXP_SPINE,
                                   threads=opt.threads)
        reports.append({
            "functional": rep.functional,
            "tree_mean": rep.tree_mean,
            "tree_se": rep.tree_se,
            "spine_mean": rep.spine_mean,
            "spine_se": rep.spine_se,
            "diff_in_se": rep.diff_in_se,
            "exact_tree": rep.exact_tree,
            "exact_spine": rep.exact_spine,
        })
    worst = 0.0
    for r in range(50):
        rng = stream(StreamKey(opt.seed, EXP_SPINE, r, LANE_AUX))
        path = sp.run_spinal_brw(law, opt.x, opt.n, rng)
        lhs, rhs = sp.spine_decomposition_identity(path, law, rng)
        worst = max(worst, abs(lhs - rhs))
    if opt.out:
        cols = ("functional", "tree_mean", "tree_se", "spine_mean",
                "spine_se", "diff_in_se")
        _write_rows(opt, cols, [tuple(d[c] for c in cols) for d in reports])
    return {
        "command": "spine",
        "law": law.kind,
        "x": opt.x,
        "n": opt.n,
        "lambda": lam,
        "replicates": opt.replicates,
        "functionals": reports,
        "identity_worst_abs_diff": worst,
    }


def _cmd_renewal(opt):
    law = resolve_law(opt.law)
    ce = {m: fl.c_equals(law, m)
          for m in ("exp_series", "neg_excursion", "pos_excursion")}
    emp = fl.empirical_renewal(law, "strict-descending", opt.replicates,
                               opt.n, opt.seed, experiment_id=EXP_RENEWAL)
    summary = {
        "command": "renewal",
        "law": law.kind,
        "paths": opt.replicates,
        "epochs_per_path": opt.n,
        "c_equals": {m: {"value": r.value, "error_bound": r.error_bound}
                     for m, r in ce.items()},
        "mean_ladder_height": emp.mean_height,
        "truncation_bound": emp.truncation_bound,
    }
    if law.is_lattice:
        exact = fl.exact_lattice_renewal(law, "strict-descending")
        grid = exact.positions[exact.positions <= emp.positions.max()]
        # the top of the truncated-at-M-epochs estimate is biased low;
        # compare where the measured truncation bias is negligible
        grid = grid[emp.bias_bound(grid) < 0.01 * np.maximum(exact.cdf(grid), 1.0)]
        sup_gap = float(np.abs(emp.cdf(grid) - exact.cdf(grid)).max())
        xs = law.lattice_span * np.arange(0.0, 8.0)
        res = fl.harmonicity_residual(law, xs)
        summary["renewal_cdf_sup_gap"] = sup_gap
        summary["harmonicity_worst"] = float(np.abs(res).max())
        summary["renewal_function"] = {
            "x": xs, "R": np.asarray(fl.renewal_function(law, xs)),
        }
        if opt.plot:
            _plot_lines(opt.plot, grid,
                        {"empirical": emp.cdf(grid), "exact": exact.cdf(grid)},
                        "height", "renewal CDF",
                        f"strict descending ladder heights, {law.kind}")
    elif opt.plot:
        grid = np.linspace(0.0, float(emp.positions.max()), 200)
        _plot_lines(opt.plot, grid, {"empirical": emp.cdf(grid)},
                    "height", "renewal CDF",
                    f"strict descending ladder heights, {law.kind}")
    if opt.out:
        rows = list(zip(emp.positions, emp.masses))
        _write_rows(opt, ("position", "mass"), rows)
    return summary


def _cmd_green(opt):
    law = resolve_law(opt.law)
    functionals = (fl.F_EXP, fl.F_CAUCHY, fl.FLevel(width=law.lattice_span or 0.5))
    out = []
    for f in functionals:
        mc = fl.green_operator(law, opt.x, f, method="path_mc",
                               paths=opt.replicates, seed=opt.seed,
                               experiment_id=EXP_GREEN)
        row = {"functional": mc.f_name, "mc_value": mc.value,
               "mc_error": mc.error, "unconverged": mc.unconverged}
        if law.is_lattice:
            rf = fl.green_operator(law, opt.x, f, method="renewal_formula")
            row["formula_value"] = rf.value
            row["formula_error"] = rf.error
            err = math.hypot(mc.error, rf.error) or 1e-300
            row["gap_in_errors"] = abs(mc.value - rf.value) / err
        out.append(row)
    if opt.out:
        cols = ("functional", "mc_value", "mc_error",
                "formula_value", "formula_error")
        rows = [tuple(d.get(c, "") for c in cols) for d in out]
        _write_rows(opt, cols, rows)
    return {
        "command": "green",
        "law": law.kind,
        "x": opt.x,
        "paths": opt.replicates,
        "queries": out,
    }


def _cmd_kozlov(opt):
    law = resolve_law(opt.law)
    method = "exact" if opt.exact else "mc"
    series = fl.survival_probability(law, opt.x, opt.n, method=method,
                                     replicates=opt.replicates, seed=opt.seed,
                                     experiment_id=EXP_KOZLOV)
    m_n = float(series[-1])
    summary = {
        "command": "kozlov",
        "law": law.kind,
        "x": opt.x,
        "n": opt.n,
        "method": method,
        "m_n": m_n,
        "sqrt_n_m_n": math.sqrt(opt.n) * m_n if opt.n > 0 else m_n,
    }
    if method == "exact" and opt.n >= 256:
        rep = fl.estimate_theta(law, n_probe=opt.n)
        summary["theta"] = rep.theta
        summary["theta_vs_sqrt_2_over_pi_sigma2"] = (
            rep.theta / math.sqrt(2.0 / (math.pi * law.sigma2)))
    if opt.out:
        ns = np.arange(opt.n + 1)
        rows = list(zip(ns, series, np.sqrt(np.maximum(ns, 1)) * series))
        _write_rows(opt, ("n", "m_n", "sqrt_n_m_n"), rows)
    if opt.plot:
        ns = np.arange(1, opt.n + 1)
        _plot_lines(opt.plot, ns, {"sqrt(n) m_n": np.sqrt(ns) * series[1:]},
                    "n", "sqrt(n) m_n(x)",
                    f"killed-walk survival, {law.kind}, x={opt.x:g}")
    return summary


def _cmd_seneta_heyde(opt):
    law = resolve_law(opt.law)
    run = lm.seneta_heyde_experiment(law, opt.x, opt.n_grid, opt.replicates,
                                     opt.seed, threads=opt.threads)
    gaps, gap_se = lm.laplace_trend(run, opt.lambda_grid, seed=opt.seed)
    if opt.out:
        _write_rows(opt, ("replicate", "n", "sqrt_n_W", "c_D", "D_stability"),
                    run.rows())
    if opt.plot:
        _plot_lines(opt.plot, run.n_grid,
                    {"E min(|sqrt(n)W - cD|, 1)": run.discrepancy,
                     "sup-lambda Laplace gap": gaps},
                    "n", "gap", f"norming convergence, {law.kind}", logy=False)
    return {
        "command": "seneta-heyde",
        "law": law.kind,
        "x": opt.x,
        "n_grid": run.n_grid,
        "replicates": opt.replicates,
        "norming_constant": run.c,
        "discrepancy": run.discrepancy,
        "discrepancy_se": run.discrepancy_se,
        "correlation": run.correlation,
        "median_ratio": run.median_ratio,
        "w_mean_z": run.w_mean_z,
        "d_mean_z": run.d_mean_z,
        "lambda_grid": opt.lambda_grid,
        "laplace_gap": gaps,
        "laplace_gap_se": gap_se,
    }


_TAUBERIAN_PAIRS = (
    ("pareto-log-3.0/power-1", lambda: (an.pareto_log(3.0), an.RhoPower(1.0))),
    ("bounded/power-1", lambda: (an.bounded_law(), an.RhoPower(1.0))),
    ("pareto-log-1.5/power-1", lambda: (an.pareto_log(1.5), an.RhoPower(1.0))),
    ("pareto-log-0.9/const", lambda: (an.pareto_log(0.9), an.RhoConst())),
)


def _cmd_tauberian(opt):
    results = []
    rows = []
    for name, make in _TAUBERIAN_PAIRS:
        law_y, rho = make()
        rep = an.tauberian_check(law_y, rho, t_max=opt.t_max,
                                 samples=opt.replicates, seed=opt.seed)
        results.append({
            "pair": name,
            "classification": rep.classification,
            "slope": rep.slope,
            "moment_finite": rep.moment_finite,
            "moment_estimate": rep.moment_estimate.mean,
        })
        for t, v in zip(rep.t_grid, rep.partial_integrals):
            rows.append((name, t, v))
    if opt.out:
        _write_rows(opt, ("pair", "t", "partial_integral"), rows)
    if opt.plot:
        arr = np.asarray([(t, v) for _, t, v in rows])
        per = len(arr) // len(_TAUBERIAN_PAIRS)
        series = {}
        for i, (name, _) in enumerate(_TAUBERIAN_PAIRS):
            series[name] = arr[i * per:(i + 1) * per, 1]
        _plot_lines(opt.plot, arr[:per, 0], series, "T",
                    "partial integral", "integral-test growth", logy=False)
    return {
        "command": "tauberian",
        "t_max": opt.t_max,
        "samples": opt.replicates,
        "pairs": results,
    }


def _cmd_selftest(opt):
    results = run_selftest(opt.budget, seed=opt.seed, threads=opt.threads)
    failures = []
    for r in results:
        tag = "PASS" if r.ok else ("WARN" if r.warn_only else "FAIL")
        print(f"{tag:4s} {r.name:24s} {r.detail}", file=sys.stderr)
        if not r.ok and not r.warn_only:
            failures.append(r.name)
    summary = {
        "command": "selftest",
        "budget": opt.budget,
        "checks": [{"name": r.name, "ok": r.ok, "warn_only": r.warn_only,
                    "detail": r.detail} for r in results],
        "failures": failures,
    }
    return summary, (1 if failures else 0)


_HANDLERS = {
    "calibrate": _cmd_calibrate,
    "simulate": _cmd_simulate,
    "spine": _cmd_spine,
    "renewal": _cmd_renewal,
    "green": _cmd_green,
    "kozlov": _cmd_kozlov,
    "seneta-heyde": _cmd_seneta_heyde,
    "tauberian": _cmd_tauberian,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        opt = _merge_options(args)
        result = _HANDLERS[args.command](opt)
    except ConfigError as exc:
        print(f"brwlab: error: {exc}", file=sys.stderr)
        return 2
    except PopulationOverflowError as exc:
        print(f"brwlab: {exc}", file=sys.stderr)
        return 3
    except BrwLabError as exc:
        print(f"brwlab: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, tuple):
        summary, code = result
    else:
        summary, code = result, 0
    _emit(summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
