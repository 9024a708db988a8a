"""``dephasim`` command-line interface.

Every subcommand writes CSV files into ``--out`` whose leading ``#`` lines
record the full configuration, the time horizon and the numerical settings.
Exit status: 0 on success, 1 when a computation fails, 2 for usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import os
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .channel import DensityMatrix4, bell_state, evolve_table
from .eigen import EigenFailure
from .measures import additivity_report, divisibility, nm_report
from .params import (CONFIG_KEYS, MIN_D_OVER_L, InvalidParams,
                     default_params, from_config, parse_config, reduce, to_config)
from .plotting import SCHEMAS, SchemaMismatch, render_svg
from .sampling import CATEGORIES, DEFAULT_N_PAIRS, SeededSampler, sampled_scan
from .spectral import (DEFAULT_STEPS, DEFAULT_TOL, HorizonNotFound, QuadratureFailure,
                       auto_horizon, build_table)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_ETA = 1e-4
AXES = ("D_over_L", "aB_over_aRb")
STATES = ("phi+", "phi-", "psi+", "psi-") + tuple(c for c in CATEGORIES if c != "pure_and_mixed")

_COMPUTE_ERRORS = (QuadratureFailure, HorizonNotFound, EigenFailure, FloatingPointError,
                   ArithmeticError)


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """Render a value for CSV output; floats get 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, meta: list[tuple[str, object]], header, rows) -> Path:
    lines = [f"# {k} = {fmt(v)}" for k, v in meta]
    lines.append(",".join(header))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


# -- argument handling ------------------------------------------------------

def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (np.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text!r}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return v


_GLOBAL_DEFAULTS = {"config": None, "seed": 0, "tol": DEFAULT_TOL, "jobs": None, "out": "."}


def _global_flags() -> argparse.ArgumentParser:
    # defaults are suppressed so the flags work before or after the subcommand
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                   help="key = value parameter file")
    g.add_argument("--seed", type=_seed, default=argparse.SUPPRESS, help="sampler seed (default 0)")
    g.add_argument("--tol", type=_positive_float, default=argparse.SUPPRESS,
                   help=f"quadrature relative tolerance (default {DEFAULT_TOL:g})")
    g.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                   help="worker processes (default: all CPUs)")
    g.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                   help="output directory (default .)")
    return g


def _physics_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--aB", type=_positive_float, metavar="X",
                   help="boson scattering length in units of a_Rb (overrides config)")
    p.add_argument("--D", type=_positive_float, metavar="X",
                   help="qubit half-separation in units of L (overrides config)")
    p.add_argument("--sigma-nm", type=_positive_float, metavar="X",
                   help="lattice-site width in nm (overrides config)")
    p.add_argument("--tau-max", type=_positive_float, metavar="T",
                   help="time horizon in reduced units (default: automatic)")
    p.add_argument("--eta", type=_positive_float, default=DEFAULT_ETA,
                   help="quiet-rate fraction for the automatic horizon")
    p.add_argument("--n-steps", type=int, default=DEFAULT_STEPS, help="time steps in the grid")
    return p


def _axis_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--axis", choices=AXES, help="scanned parameter")
    p.add_argument("--values", type=float, nargs="+", metavar="V", help="explicit axis values")
    p.add_argument("--range", type=str, nargs=3, metavar=("MIN", "MAX", "COUNT"),
                   help="evenly spaced axis values")
    p.add_argument("--log", action="store_true", help="logarithmic spacing for --range")
    return p


def build_parser() -> argparse.ArgumentParser:
    glob = _global_flags()
    phys = _physics_flags()
    parser = argparse.ArgumentParser(
        prog="dephasim", parents=[glob],
        description="Two dephasing qubits in a condensate: rates, channel and non-Markovianity.")
    parser.add_argument("--version", action="version", version=f"dephasim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("rates", parents=[glob, phys], help="decay rates on the time grid")
    p = sub.add_parser("evolve", parents=[glob, phys], help="evolve an initial state")
    p.add_argument("--state", choices=STATES, default="phi+",
                   help="Bell state name or a category drawn with --seed")
    sub.add_parser("divisibility", parents=[glob, phys], help="negativity intervals of the rates")
    sub.add_parser("blp", parents=[glob, phys], help="Bell-pair and single-qubit backflow")
    sub.add_parser("scan", parents=[glob, phys, _axis_flags()], help="backflow along a parameter axis")
    p = sub.add_parser("pairs", parents=[glob, phys], help="backflow of seeded random state pairs")
    p.add_argument("--n-pairs", type=int, default=DEFAULT_N_PAIRS)
    p.add_argument("--refine", action="store_true",
                   help="refine backflow run endpoints in continuous time")
    p.add_argument("--separable-terms", type=int, default=4,
                   help="product states mixed into each separable draw")
    sub.add_parser("additivity", parents=[glob, phys, _axis_flags()],
                   help="two-qubit vs twice single-qubit backflow")
    p = sub.add_parser("plot", parents=[glob], help="render a CSV as SVG")
    p.add_argument("csv", help="CSV written by another subcommand")
    p.add_argument("--kind", choices=sorted(SCHEMAS), required=True)
    p.add_argument("--svg", metavar="PATH", help="output file (default: <out>/<csv stem>.svg)")
    return parser


@dataclass
class Settings:
    base: dict[str, float]
    tol: float
    seed: int
    jobs: int
    out: Path


def _settings(args) -> Settings:
    for k, v in _GLOBAL_DEFAULTS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    cfg = to_config(default_params())
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        cfg.update(parse_config(text))
    for flag, key in (("aB", "a_B_over_aRb"), ("D", "D_over_L"), ("sigma_nm", "sigma_nm")):
        v = getattr(args, flag, None)
        if v is not None:
            cfg[key] = v
    from_config(cfg)  # validate early
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    if jobs < 1:
        raise UsageError("--jobs must be at least 1")
    if getattr(args, "n_steps", 64) < 64:
        raise UsageError("--n-steps must be at least 64")
    if getattr(args, "eta", 0.5) >= 1:
        raise UsageError("--eta must lie in (0, 1)")
    return Settings(cfg, args.tol, args.seed, jobs, Path(args.out))


# -- shared computation -----------------------------------------------------

def _make_table(cfg: dict[str, float], tau_max, eta: float, n_steps: int, tol: float):
    rp = reduce(from_config(cfg))
    horizon = tau_max if tau_max is not None else auto_horizon(rp, eta)
    return build_table(rp, horizon, n_steps, tol)


def _meta(command: str, args, st: Settings, cfg: dict[str, float], table=None) -> list:
    meta: list[tuple[str, object]] = [("dephasim", __version__), ("command", command)]
    meta += [(k, cfg[k]) for k in CONFIG_KEYS]
    if table is not None:
        rp = table.rp
        meta += [("d", rp.d), ("s", rp.s), ("g_tilde", rp.g_tilde), ("c_rate", rp.c_rate),
                 ("t0_seconds", rp.t0), ("tau_max", float(table.tau_grid[-1]))]
    tau_max = getattr(args, "tau_max", None)
    if hasattr(args, "n_steps"):
        meta += [("horizon", "fixed" if tau_max is not None else "auto"),
                 ("eta", args.eta), ("n_steps", args.n_steps)]
    meta += [("tol", st.tol), ("seed", st.seed)]
    return meta


def _reproduce_line(args, st: Settings, extra: list[str] = ()) -> str:
    parts = ["dephasim", args.command, f"--tol={fmt(st.tol)}", f"--seed={st.seed}"]
    if args.config:
        parts.append(f"--config={args.config}")
    parts += [f"--aB={fmt(st.base['a_B_over_aRb'])}", f"--D={fmt(st.base['D_over_L'])}",
              f"--sigma-nm={fmt(st.base['sigma_nm'])}"]
    if getattr(args, "tau_max", None) is not None:
        parts.append(f"--tau-max={fmt(args.tau_max)}")
    if hasattr(args, "n_steps"):
        parts += [f"--eta={fmt(args.eta)}", f"--n-steps={args.n_steps}"]
    return shlex.join(parts + list(extra))


def _axis_values(args) -> np.ndarray | None:
    if args.axis is None:
        if args.values or args.range:
            raise UsageError("--values/--range need --axis")
        return None
    if bool(args.values) == bool(args.range):
        raise UsageError("give exactly one of --values or --range")
    if args.values:
        vals = np.array(args.values, dtype=float)
    else:
        try:
            lo, hi, count = float(args.range[0]), float(args.range[1]), int(args.range[2])
        except ValueError:
            raise UsageError("--range expects MIN MAX COUNT") from None
        if count < 1:
            raise UsageError("--range COUNT must be at least 1")
        if args.log:
            if lo <= 0:
                raise UsageError("--log needs a positive MIN")
            vals = np.geomspace(lo, hi, count)
        else:
            vals = np.linspace(lo, hi, count)
    if vals.size == 0 or not np.all(np.isfinite(vals)) or np.any(np.diff(vals) <= 0):
        raise UsageError("axis values must be finite and strictly increasing")
    if np.any(vals <= 0):
        raise UsageError("axis values must be positive")
    if args.axis == "D_over_L" and np.any(vals < MIN_D_OVER_L):
        raise UsageError(f"D_over_L values must be at least {MIN_D_OVER_L:g}")
    return vals


_AXIS_KEY = {"D_over_L": "D_over_L", "aB_over_aRb": "a_B_over_aRb"}


def _point(task):
    """Worker: build one table and evaluate the requested measures."""
    cfg, tau_max, eta, n_steps, tol, what = task
    try:
        table = _make_table(cfg, tau_max, eta, n_steps, tol)
        rep = nm_report(table)
        out = {"ok": True, "tau_max": float(table.tau_grid[-1]), "rep": rep}
        if what == "additivity":
            out["add"] = additivity_report(table, rep)
        return out
    except _COMPUTE_ERRORS + (ValueError,) as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _run_points(tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            return list(ex.map(_point, tasks))
    return [_point(t) for t in tasks]


# -- subcommands ------------------------------------------------------------

def cmd_rates(args, st: Settings) -> int:
    table = _make_table(st.base, args.tau_max, args.eta, args.n_steps, st.tol)
    meta = _meta("rates", args, st, st.base, table) + [("reproduce", _reproduce_line(args, st))]
    rows = zip(table.tau_grid, table.gamma1, table.gamma2, table.rate_sum, table.rate_diff)
    path = write_csv(st.out / "rates.csv", meta, SCHEMAS["rates"], rows)
    print(path)
    return EXIT_OK


def _initial_state(name: str, seed: int) -> DensityMatrix4:
    if name in ("phi+", "phi-", "psi+", "psi-"):
        return bell_state(name)
    from .sampling import sample_pair
    return sample_pair(name, SeededSampler(seed))[0]


def cmd_evolve(args, st: Settings) -> int:
    table = _make_table(st.base, args.tau_max, args.eta, args.n_steps, st.tol)
    rho0 = _initial_state(args.state, st.seed)
    states = evolve_table(rho0, table)
    labels = [f"{i}{j}" for i in range(4) for j in range(4)]
    header = ["tau"] + [f"re_{l}" for l in labels] + [f"im_{l}" for l in labels]
    flat = states.reshape(states.shape[0], 16)
    rows = ([t] + list(r.real) + list(r.imag) for t, r in zip(table.tau_grid, flat))
    meta = _meta("evolve", args, st, st.base, table) + [
        ("state", args.state), ("reproduce", _reproduce_line(args, st, [f"--state={args.state}"]))]
    path = write_csv(st.out / "evolve.csv", meta, header, rows)
    print(path)
    return EXIT_OK


def cmd_divisibility(args, st: Settings) -> int:
    table = _make_table(st.base, args.tau_max, args.eta, args.n_steps, st.tol)
    div, iv_sum, iv_diff = divisibility(table)
    rows = [(a, b, "sum") for a, b in iv_sum] + [(a, b, "diff") for a, b in iv_diff]
    meta = _meta("divisibility", args, st, st.base, table) + [
        ("divisible", div), ("reproduce", _reproduce_line(args, st))]
    path = write_csv(st.out / "divisibility.csv", meta, ("t_start", "t_end", "rate_combination"), rows)
    print(f"divisible = {fmt(div)}")
    print(path)
    return EXIT_OK


def _scan_row(param, rep):
    return (param, rep.N_phi, rep.N_psi, rep.N_blp, rep.N1, 2 * rep.N1, rep.divisible)


def cmd_blp(args, st: Settings) -> int:
    table = _make_table(st.base, args.tau_max, args.eta, args.n_steps, st.tol)
    rep = nm_report(table)
    meta = _meta("blp", args, st, st.base, table) + [
        ("axis", "D_over_L"), ("rhp_integral", rep.rhp_integral),
        ("reproduce", _reproduce_line(args, st))]
    path = write_csv(st.out / "blp.csv", meta, SCHEMAS["scan"],
                     [_scan_row(st.base["D_over_L"], rep)])
    iv_rows = ([(a, b, "phi") for a, b in rep.backflow_intervals_phi]
               + [(a, b, "psi") for a, b in rep.backflow_intervals_psi])
    write_csv(st.out / "blp_intervals.csv", meta, ("t_start", "t_end", "pair"), iv_rows)
    for k in ("N_phi", "N_psi", "N_blp", "N1"):
        print(f"{k} = {fmt(getattr(rep, k))}")
    print(path)
    return EXIT_OK


def _axis_scan(args, st: Settings, what: str):
    vals = _axis_values(args)
    if vals is None:
        axis, vals = "D_over_L", np.array([st.base["D_over_L"]])
    else:
        axis = args.axis
    key = _AXIS_KEY[axis]
    cfgs = []
    for v in vals:
        cfg = dict(st.base)
        cfg[key] = float(v)
        try:
            from_config(cfg)
        except InvalidParams as exc:
            raise UsageError(f"{axis} = {fmt(v)}: {exc}") from None
        cfgs.append(cfg)
    tasks = [(c, args.tau_max, args.eta, args.n_steps, st.tol, what) for c in cfgs]
    results = _run_points(tasks, st.jobs)
    meta = _meta(what, args, st, st.base)
    meta += [("axis", axis), ("spacing", "log" if args.log and args.range else "linear")]
    extra = [f"--axis={axis}"]
    if args.range:
        extra += ["--range"] + list(args.range) + (["--log"] if args.log else [])
    else:
        extra += ["--values"] + [fmt(v) for v in vals]
    meta.append(("reproduce", _reproduce_line(args, st, extra)))
    return axis, vals, results, meta


def _finish_scan(name: str, header, vals, results, meta, row_fn, st: Settings) -> int:
    rows, failed = [], None
    for v, r in zip(vals, results):
        if not r["ok"]:
            failed = (v, r["error"])
            break
        rows.append(row_fn(v, r))
    horizons = ";".join(fmt(r["tau_max"]) for r in results[:len(rows)])
    meta = meta + [("tau_max_per_point", horizons),
                   ("status", "complete" if failed is None else "partial")]
    if failed is not None:
        meta.append(("failed_at", f"{fmt(failed[0])}: {failed[1]}"))
    path = write_csv(st.out / name, meta, header, rows)
    print(path)
    if failed is not None:
        print(f"dephasim: point {fmt(failed[0])} failed: {failed[1]}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_scan(args, st: Settings) -> int:
    _, vals, results, meta = _axis_scan(args, st, "scan")
    return _finish_scan("scan.csv", SCHEMAS["scan"], vals, results, meta,
                        lambda v, r: _scan_row(v, r["rep"]), st)


def cmd_additivity(args, st: Settings) -> int:
    _, vals, results, meta = _axis_scan(args, st, "additivity")
    header = SCHEMAS["additivity"] + ("multi_interval",)

    def row(v, r):
        a = r["add"]
        return (v, a.N2, a.twoN1, a.regime, a.factorized_prediction, a.multi_interval)

    return _finish_scan("additivity.csv", header, vals, results, meta, row, st)


def cmd_pairs(args, st: Settings) -> int:
    if args.n_pairs < 1:
        raise UsageError("--n-pairs must be at least 1")
    if not 1 <= args.separable_terms <= 4:
        raise UsageError("--separable-terms must lie in 1..4")
    table = _make_table(st.base, args.tau_max, args.eta, args.n_steps, st.tol)
    sampler = SeededSampler(st.seed, separable_terms=args.separable_terms)
    scan = sampled_scan(args.n_pairs, table, sampler, jobs=st.jobs, refine=args.refine)
    extra = [f"--n-pairs={args.n_pairs}", f"--separable-terms={args.separable_terms}"]
    if args.refine:
        extra.append("--refine")
    meta = _meta("pairs", args, st, st.base, table)
    meta += [("n_pairs", args.n_pairs), ("separable_terms", args.separable_terms),
             ("refine", args.refine)]
    meta += [(f"max_{c}", scan.max_by_category[c]) for c in CATEGORIES]
    meta += [("argmax_index", scan.argmax), ("argmax_category", scan.argmax_category),
             ("reproduce", _reproduce_line(args, st, extra))]
    rows = ((i, c, v, int(i == scan.argmax))
            for i, (c, v) in enumerate(zip(scan.categories, scan.values)))
    path = write_csv(st.out / "pairs.csv", meta, SCHEMAS["pairs"], rows)
    (st.out / "pairs_argmax.json").write_text(scan.pair_json() + "\n")
    print(f"max N = {fmt(scan.global_max)} ({scan.argmax_category}, index {scan.argmax})")
    print(path)
    return EXIT_OK


def cmd_plot(args, st: Settings) -> int:
    src = Path(args.csv)
    if not src.is_file():
        raise UsageError(f"no such file: {src}")
    dest = Path(args.svg) if args.svg else st.out / (src.stem + ".svg")
    dest.parent.mkdir(parents=True, exist_ok=True)
    render_svg(src, args.kind, dest)
    print(dest)
    return EXIT_OK


COMMANDS = {
    "rates": cmd_rates,
    "evolve": cmd_evolve,
    "divisibility": cmd_divisibility,
    "blp": cmd_blp,
    "scan": cmd_scan,
    "pairs": cmd_pairs,
    "additivity": cmd_additivity,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on malformed arguments
    try:
        st = _settings(args)
        return COMMANDS[args.command](args, st)
    except (UsageError, InvalidParams, SchemaMismatch) as exc:
        print(f"dephasim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _COMPUTE_ERRORS as exc:
        print(f"dephasim: computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
