"""Command-line front end: chain runs, flow-rule sweeps, macro solves,
convergence studies, and 2D level-set runs.

Every command writes a ``manifest.txt`` (key=value, all effective parameters)
next to its outputs; a manifest doubles as a ``--config`` file, so re-running
from it reproduces the outputs bitwise.  Exit codes: 0 success, 2 usage
errors, 3 numerical aborts.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, flowrule, macro1d, micro2d
from .errors import SimulationError
from .material import MaterialParams
from .micro1d import MicroState1D, equally_spaced_state, hull_residual, simulate
from .strain import StrainField1D

log = logging.getLogger("orowan.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def _read_config(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, val = line.split("=", 1)
            values[key.strip()] = val.strip()
    return values


def _write_manifest(out_dir: Path, command: str, params: dict):
    lines = [f"command={command}"]
    for key in sorted(params):
        lines.append(f"{key}={params[key]}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _apply_config(args, parser):
    """Fill argparse defaults from a key=value config file (CLI flags win)."""
    if not getattr(args, "config", None):
        return args
    values = _read_config(args.config)
    values.pop("command", None)
    argv_keys = {a.lstrip("-").replace("-", "_").split("=")[0] for a in sys.argv[1:] if a.startswith("--")}
    for key, raw in values.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            parser.error(f"unknown config key {key!r}")
        if attr in argv_keys:
            continue  # explicit flag overrides the file
        current = getattr(args, attr)
        if isinstance(current, bool):
            setattr(args, attr, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int) and not isinstance(current, bool):
            setattr(args, attr, int(raw))
        elif isinstance(current, float):
            setattr(args, attr, float(raw))
        else:
            setattr(args, attr, raw)
    return args


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params_of(args, names) -> dict:
    return {name: getattr(args, name.replace("-", "_")) for name in names}


def _parse_list(text: str) -> list[float]:
    """Comma list ("1,2,3") or range ("a:b:n" inclusive linspace)."""
    if ":" in text:
        a, b, num = text.split(":")
        return list(np.linspace(float(a), float(b), int(num)))
    return [float(v) for v in text.split(",")]


# ---------------------------------------------------------------------------
# simulate1d
# ---------------------------------------------------------------------------

def cmd_simulate1d(args, parser):
    if args.N < 1:
        parser.error("N must be >= 1")
    if args.dt <= 0 or args.T <= 0:
        parser.error("dt and T must be positive")
    out = _out_dir(args)
    burn = 0.5 * args.T if args.burn_in < 0 else args.burn_in
    params = MaterialParams.from_mu_bar(args.mu_bar, nu=0.0, b=args.b, B=args.B)
    state = equally_spaced_state(args.N, l=args.l, A=args.A, lam_p=args.lam_p,
                                 tau_ext=args.tau_ext)
    traj, v = simulate(state, params, dt=args.dt, T=args.T, burn_in=burn,
                       sample_stride=args.sample_stride or 1)
    traj.to_csv(out / "trajectory.csv")
    rho0 = args.N / args.l
    residual = ""
    if v != 0.0:
        try:
            residual = repr(float(hull_residual(traj, rho0, v, b=args.b,
                                                transient_cutoff=burn)))
        except ValueError as exc:
            residual = f"unavailable ({exc})"
    summary = (f"v={v!r}\npinned={traj.pinned}\nrho0={rho0!r}\n"
               f"hull_residual={residual}\n")
    (out / "summary.txt").write_text(summary)
    print(summary.strip())
    _write_manifest(out, "simulate1d", _params_of(args, [
        "N", "l", "A", "lam_p", "tau_ext", "b", "B", "mu_bar", "dt", "T",
        "burn_in", "sample_stride", "seed", "out"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cmd_sweep(args, parser):
    out = _out_dir(args)
    if args.full:
        n_list = list(range(1, 201))
        tau_list = list(np.linspace(0.0, 9.0, 201))
        T = 1000.0
    elif args.desk:
        n_list = list(range(1, 51))
        tau_list = list(np.linspace(0.0, 9.0, 50))
        T = 200.0
    else:
        n_list = [int(v) for v in _parse_list(args.n_list)]
        tau_list = _parse_list(args.tau_list)
        T = args.T
    A = 0.0 if args.case_a else args.A
    proto = flowrule.SweepProtocol(l=args.l, A=A, lam_p=args.lam_p, dt=args.dt,
                                   T=T, burn_in=None if args.burn_in < 0 else args.burn_in,
                                   B=args.B, mu_bar=args.mu_bar, b=args.b)
    existing = None
    if args.resume:
        existing = flowrule.load_table(args.resume)
    table = flowrule.sweep(n_list, tau_list, proto, workers=args.workers,
                           f_tol=args.f_tol, existing=existing)
    flowrule.save_table(table, out / "table.csv")
    flowrule.save_table(flowrule.extend_odd(table), out / "table_odd.csv")
    if args.emit_matrix:
        flowrule.save_matrix(table, out / "matrix.csv",
                             pinned_sentinel=args.pinned_sentinel)
    n_failed = int(np.sum(table.failed))
    print(f"table {len(n_list)}x{len(tau_list)} written; {n_failed} failed cells")
    _write_manifest(out, "sweep", {
        "n_list": ",".join(str(n) for n in n_list),
        "tau_list": ",".join(repr(t) for t in tau_list),
        **_params_of(args, ["l", "A", "lam_p", "b", "B", "mu_bar", "dt",
                            "burn_in", "f_tol", "workers", "case_a", "seed", "out"]),
        "T": T,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# macro
# ---------------------------------------------------------------------------

def _gamma0_from_spec(spec: str, n: int, length: float) -> StrainField1D:
    """Builtin initial strains: "uniform:RHO" or "cosine:RHO:AMP"."""
    kind, _, rest = spec.partition(":")
    x = length * np.arange(n) / n
    if kind == "uniform":
        rho = float(rest)
        return StrainField1D(-rho * x, 0.0, length, periodic=True,
                             wrap_jump=-rho * length)
    if kind == "cosine":
        rho_s, _, amp_s = rest.partition(":")
        rho, amp = float(rho_s), float(amp_s)
        vals = -rho * x + (amp / (2.0 * np.pi / length)) * (np.cos(2.0 * np.pi * x / length) - 1.0)
        return StrainField1D(vals, 0.0, length, periodic=True,
                             wrap_jump=-rho * length)
    raise ValueError(f"unknown gamma0 spec {spec!r} (use uniform:RHO or cosine:RHO:AMP)")


def cmd_macro(args, parser):
    out = _out_dir(args)
    if bool(args.table) == bool(args.case_a):
        parser.error("choose exactly one of --table FILE or --case-a")
    if args.table:
        if not Path(args.table).exists():
            parser.error(f"flow-rule table not found: {args.table}")
        flow = macro1d.TableFlow(flowrule.load_table(args.table))
    else:
        flow = macro1d.CaseAFlow(args.mu_bar)
    try:
        gamma0 = _gamma0_from_spec(args.gamma0, args.nodes, args.length)
    except ValueError as exc:
        parser.error(str(exc))
    snaps = _parse_list(args.snapshots) if args.snapshots else [args.T]
    problem = macro1d.MacroProblem(
        gamma0=gamma0, tau_ext=args.tau_ext, flow=flow, T_final=args.T,
        snapshot_times=tuple(snaps),
        theta=None if args.theta < 0 else args.theta,
        dt_max=args.dt_max if args.dt_max > 0 else np.inf)
    times, fields, diag = macro1d.solve_macro(problem, mu_bar=args.mu_bar)
    for k, (t, fld) in enumerate(zip(times, fields)):
        macro1d.save_snapshot(fld, args.tau_ext, args.mu_bar,
                              out / f"snapshot_{k:04d}.csv")
    (out / "times.csv").write_text(
        "index,t\n" + "\n".join(f"{k},{t!r}" for k, t in enumerate(times)) + "\n")
    print(f"{len(fields)} snapshots, {diag['steps']} steps, "
          f"{diag['clamp_count']} clamped flow-rule queries")
    _write_manifest(out, "macro", _params_of(args, [
        "table", "case_a", "gamma0", "nodes", "length", "tau_ext", "T",
        "snapshots", "theta", "dt_max", "mu_bar", "seed", "out"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# converge
# ---------------------------------------------------------------------------

def cmd_converge(args, parser):
    out = _out_dir(args)
    eps_list = _parse_list(args.eps_list)
    if len(set(eps_list)) != len(eps_list):
        parser.error("duplicate epsilon values")
    if any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        parser.error("epsilon list must be strictly decreasing")
    if bool(args.table) == bool(args.case_a):
        parser.error("choose exactly one of --table FILE or --case-a")
    if args.table:
        if not Path(args.table).exists():
            parser.error(f"flow-rule table not found: {args.table}")
        flow = macro1d.TableFlow(flowrule.load_table(args.table))
    else:
        flow = macro1d.CaseAFlow(args.mu_bar)
    gamma0 = _gamma0_from_spec(args.gamma0, args.nodes, args.length)
    errors = macro1d.convergence_experiment(
        gamma0, flow, eps_list, t_final=args.T, tau_ext=args.tau_ext,
        A=args.A, lam_p=args.lam_p, dt_micro=args.dt, mu_bar=args.mu_bar,
        dt_max_macro=args.dt_max if args.dt_max > 0 else np.inf)
    with open(out / "errors.csv", "w") as fh:
        fh.write("epsilon,sup_error\n")
        for eps, err in errors:
            fh.write(f"{eps!r},{err!r}\n")
    for eps, err in errors:
        print(f"epsilon={eps}: sup_error={err}")
    _write_manifest(out, "converge", _params_of(args, [
        "eps_list", "table", "case_a", "gamma0", "nodes", "length", "tau_ext",
        "T", "A", "lam_p", "dt", "dt_max", "mu_bar", "seed", "out"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate2d
# ---------------------------------------------------------------------------

def cmd_simulate2d(args, parser):
    out = _out_dir(args)
    n, L = args.nodes, args.length
    params = MaterialParams(mu=args.mu, nu=args.nu, b=args.b, B=args.B)
    kernel = micro2d.build_kernel(params, R_bar=args.R_bar, n=n, length=L)
    x = L * np.arange(n) / n
    kind, _, rest = args.gamma.partition(":")
    if kind == "circle":
        r0_s, _, amp_s = rest.partition(":")
        r0 = float(r0_s)
        amp = float(amp_s) if amp_s else 0.8 * args.b
        X, Y = np.meshgrid(x, x, indexing="ij")
        r = np.hypot(X - 0.5 * L, Y - 0.5 * L)
        values = amp * np.tanh((r0 - r) / (8.0 * L / n))
    else:
        parser.error(f"unknown gamma spec {args.gamma!r} (use circle:R0[:AMP])")
    field = micro2d.LevelSetField2D(values, L, b=args.b)
    kind, _, rest = args.tau_per.partition(":")
    if kind == "const":
        obst = micro2d.ObstacleField2D(np.full((n, n), float(rest)), L)
    elif kind == "sin":
        amp_s, _, rest2 = rest.partition(":")
        per_s, _, sigma_s = rest2.partition(":")
        obst = micro2d.sinusoidal_obstacles(n, L, float(amp_s), float(per_s),
                                            float(sigma_s) if sigma_s else 0.0)
    else:
        parser.error(f"unknown tau-per spec {args.tau_per!r} (use const:S or sin:A:LAM[:S])")

    micro2d.save_field(field, out / "field_0000.csv", time=0.0)
    micro2d.save_contours(field, out / "contours_0000.csv")
    t = 0.0
    for step in range(1, args.steps + 1):
        V = micro2d.normal_velocity(field, obst, kernel, B=args.B)
        vmax = float(np.max(np.abs(V)))
        dt = args.dt if args.dt > 0 else (0.8 * field.spacing / (2.0 * vmax) if vmax > 0 else 0.1)
        field = micro2d.levelset_step(field, V, dt)
        t += dt
        if args.snap_every and step % args.snap_every == 0:
            micro2d.save_field(field, out / f"field_{step:04d}.csv", time=t)
            micro2d.save_contours(field, out / f"contours_{step:04d}.csv")
    micro2d.save_field(field, out / "field_final.csv", time=t)
    micro2d.save_contours(field, out / "contours_final.csv")
    print(f"{args.steps} steps to t={t!r}")
    _write_manifest(out, "simulate2d", _params_of(args, [
        "nodes", "length", "gamma", "tau_per", "R_bar", "mu", "nu", "b", "B",
        "dt", "steps", "snap_every", "seed", "out"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(sp, defaults=True):
    sp.add_argument("--config", help="key=value file; explicit flags override it")
    sp.add_argument("--out", default="runs/out", help="output directory")
    sp.add_argument("--seed", type=int, default=0,
                    help="reserved; the dynamics are deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orowan",
        description="dislocation chain dynamics and homogenized flow rules")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate1d", help="run one chain and report the mean velocity")
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--l", type=float, default=10.0)
    p.add_argument("--A", type=float, default=3.0)
    p.add_argument("--lam-p", type=float, default=1.0)
    p.add_argument("--tau-ext", type=float, default=5.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--mu-bar", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--T", type=float, default=1000.0)
    p.add_argument("--burn-in", type=float, default=-1.0, help="negative means T/2")
    p.add_argument("--sample-stride", type=int, default=10)
    _add_common(p)
    p.set_defaults(func=cmd_simulate1d)

    p = sub.add_parser("sweep", help="measure a flow-rule table over (N, tau)")
    p.add_argument("--desk", action="store_true", help="N=1..50, 50 tau points, T=200")
    p.add_argument("--full", action="store_true", help="N=1..200, 201 tau points, T=1000 (slow)")
    p.add_argument("--case-a", action="store_true", help="switch the obstacles off (A=0)")
    p.add_argument("--n-list", default="1,5,10,20", help="comma list or a:b:n range")
    p.add_argument("--tau-list", default="0:9:51")
    p.add_argument("--l", type=float, default=10.0)
    p.add_argument("--A", type=float, default=3.0)
    p.add_argument("--lam-p", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--mu-bar", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--T", type=float, default=200.0)
    p.add_argument("--burn-in", type=float, default=-1.0)
    p.add_argument("--f-tol", type=float, default=flowrule.DEFAULT_F_TOL)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--resume", help="existing table.csv; only missing cells are run")
    p.add_argument("--emit-matrix", action="store_true")
    p.add_argument("--pinned-sentinel", action="store_true",
                   help="matrix export only: mark the pinned region with negative values")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("macro", help="solve the homogenized strain evolution")
    p.add_argument("--table", help="flow-rule table CSV")
    p.add_argument("--case-a", action="store_true")
    p.add_argument("--gamma0", default="cosine:1.0:0.1")
    p.add_argument("--nodes", type=int, default=256)
    p.add_argument("--length", type=float, default=1.0)
    p.add_argument("--tau-ext", type=float, default=2.0)
    p.add_argument("--T", type=float, default=0.5)
    p.add_argument("--snapshots", default="", help="comma list of times")
    p.add_argument("--theta", type=float, default=-1.0, help="negative means auto")
    p.add_argument("--dt-max", type=float, default=-1.0)
    p.add_argument("--mu-bar", type=float, default=1.0)
    _add_common(p)
    p.set_defaults(func=cmd_macro)

    p = sub.add_parser("converge", help="micro vs macro sup-norm error across epsilon")
    p.add_argument("--eps-list", default="0.04,0.02,0.01")
    p.add_argument("--table", help="flow-rule table CSV")
    p.add_argument("--case-a", action="store_true")
    p.add_argument("--gamma0", default="cosine:1.0:0.1")
    p.add_argument("--nodes", type=int, default=512)
    p.add_argument("--length", type=float, default=1.0)
    p.add_argument("--tau-ext", type=float, default=2.0)
    p.add_argument("--T", type=float, default=0.2)
    p.add_argument("--A", type=float, default=0.0)
    p.add_argument("--lam-p", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--dt-max", type=float, default=-1.0)
    p.add_argument("--mu-bar", type=float, default=1.0)
    _add_common(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("simulate2d", help="evolve curved dislocations as level sets")
    p.add_argument("--nodes", type=int, default=128)
    p.add_argument("--length", type=float, default=16.0)
    p.add_argument("--gamma", default="circle:4.0")
    p.add_argument("--tau-per", default="const:1.0")
    p.add_argument("--R-bar", type=float, default=1.25)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=0.3)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=-1.0, help="negative means auto CFL")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--snap-every", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_simulate2d)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(args, parser)
    try:
        return args.func(args, parser)
    except SimulationError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
