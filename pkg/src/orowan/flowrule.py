"""Effective flow rule f(rho0, tau) measured from chain simulations.

The recipe: put N equally spaced dislocations in a cell of length l, drive
them at tau_ext, measure the long-time mean velocity v, and convert through
Orowan's law f = (N/l) * (B/mu_bar) * v.  Sweeping (N, tau) fills a table
whose rows are nondecreasing in tau and which extends to negative stresses by
odd symmetry.  Below a density-dependent threshold stress the chain is pinned
and f vanishes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import SimulationError
from .material import MaterialParams
from .micro1d import equally_spaced_state, simulate

log = logging.getLogger(__name__)

DEFAULT_F_TOL = 1e-6


def f_case_a(rho0, tau, mu_bar: float = 1.0):
    """Obstacle-free flow rule rho0 * tau / mu_bar (linear viscous glide)."""
    return np.asarray(rho0, dtype=float) * np.asarray(tau, dtype=float) / mu_bar


@dataclass(frozen=True)
class SweepProtocol:
    """Simulation protocol shared by every cell of a sweep."""

    l: float = 10.0
    A: float = 3.0
    lam_p: float = 1.0
    dt: float = 0.01
    T: float = 1000.0
    burn_in: float = None          # None -> T/2
    B: float = 1.0
    mu_bar: float = 1.0
    b: float = 1.0
    pin_exit: bool = True

    def material(self) -> MaterialParams:
        return MaterialParams.from_mu_bar(self.mu_bar, nu=0.0, b=self.b, B=self.B)

    @property
    def burn(self) -> float:
        return 0.5 * self.T if self.burn_in is None else self.burn_in

    def noise_floor(self, rho_max: float) -> float:
        """Partial-period bound on the f measurement noise."""
        return rho_max * (self.B / self.mu_bar) * self.lam_p / max(self.T - self.burn, self.dt)


def f_measure(N: int, l: float, tau_ext: float, proto: SweepProtocol) -> float:
    """Measured strain rate (N/l) * (B/mu_bar) * v for one (N, tau) cell.

    Negative stresses are answered through the odd symmetry of the obstacle
    potential: f(rho, -tau) = -f(rho, tau).
    """
    if N < 1:
        raise ValueError("need N >= 1")
    if tau_ext < 0.0:
        return -f_measure(N, l, -tau_ext, proto)
    state = equally_spaced_state(N, l=l, A=proto.A, lam_p=proto.lam_p, tau_ext=tau_ext)
    _, v = simulate(state, proto.material(), dt=proto.dt, T=proto.T,
                    burn_in=proto.burn, pin_exit=proto.pin_exit)
    return (N / l) * (proto.B / proto.mu_bar) * v


@dataclass
class FlowRuleTable:
    """f sampled on a rectangular (rho, tau) grid, plus the protocol metadata."""

    rho_axis: np.ndarray
    tau_axis: np.ndarray
    f: np.ndarray                          # shape (n_rho, n_tau)
    metadata: dict = field(default_factory=dict)
    failed: np.ndarray = None              # bool mask of cells that errored

    def __post_init__(self):
        self.rho_axis = np.asarray(self.rho_axis, dtype=float)
        self.tau_axis = np.asarray(self.tau_axis, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.f.shape != (self.rho_axis.size, self.tau_axis.size):
            raise ValueError("f shape does not match the axes")
        if self.failed is None:
            self.failed = np.zeros_like(self.f, dtype=bool)

    def row(self, rho0: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.rho_axis - rho0)))
        if abs(self.rho_axis[i] - rho0) > 1e-9 * max(1.0, abs(rho0)):
            raise ValueError(f"density {rho0} is not on the table axis")
        return self.f[i]


def _run_cell(args):
    i, j, N, l, tau, proto = args
    try:
        return i, j, f_measure(N, l, tau, proto), None
    except SimulationError as exc:  # flagged, never interpolated over
        return i, j, np.nan, f"N={N}, tau={tau}: {exc}"


def sweep(N_list, tau_list, proto: SweepProtocol = SweepProtocol(),
          workers: int = 1, f_tol: float = DEFAULT_F_TOL,
          existing: FlowRuleTable = None) -> FlowRuleTable:
    """Measure f over the (N, tau) grid; cells are independent jobs.

    The tau = 0 column is pinned to exactly zero without running.  Failed
    cells are recorded as NaN with a ``failed`` mask; passing a partial table
    as ``existing`` re-runs only missing/failed cells (resume).
    """
    N_list = [int(n) for n in N_list]
    tau_list = np.asarray(list(tau_list), dtype=float)
    if len(N_list) == 0 or tau_list.size == 0:
        raise ValueError("axes must be nonempty")
    if any(np.diff(N_list) <= 0) or np.any(np.diff(tau_list) <= 0):
        raise ValueError("axes must be strictly ascending")

    rho_axis = np.array([n / proto.l for n in N_list], dtype=float)
    f = np.full((len(N_list), tau_list.size), np.nan)
    failed = np.zeros_like(f, dtype=bool)
    if existing is not None:
        if existing.rho_axis.shape != rho_axis.shape or not np.allclose(existing.rho_axis, rho_axis) \
                or existing.tau_axis.shape != tau_list.shape or not np.allclose(existing.tau_axis, tau_list):
            raise ValueError("existing table axes do not match the requested sweep")
        f[:] = existing.f

    jobs = []
    for i, N in enumerate(N_list):
        for j, tau in enumerate(tau_list):
            if tau == 0.0:
                f[i, j] = 0.0
                continue
            if existing is not None and np.isfinite(f[i, j]):
                continue
            jobs.append((i, j, N, proto.l, float(tau), proto))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs, chunksize=4))
    else:
        results = [_run_cell(job) for job in jobs]

    for i, j, value, err in results:
        f[i, j] = value
        if err is not None:
            failed[i, j] = True
            log.warning("sweep cell failed: %s", err)

    meta = {
        "dt": proto.dt, "T": proto.T, "burn_in": proto.burn, "A": proto.A,
        "l": proto.l, "lam_p": proto.lam_p, "B": proto.B, "mu_bar": proto.mu_bar,
        "b": proto.b, "N_list": ",".join(str(n) for n in N_list),
        "tau_list": ",".join(repr(float(t)) for t in tau_list),
        "f_tol": f_tol, "noise_floor": proto.noise_floor(max(rho_axis)),
        "version": __version__,
    }
    return FlowRuleTable(rho_axis, tau_list, f, meta, failed)


def extend_odd(table: FlowRuleTable) -> FlowRuleTable:
    """Extend a tau >= 0 table to [-tau_max, tau_max] by exact odd mirroring."""
    tau = table.tau_axis
    if tau[0] < 0.0:
        if not (np.allclose(tau, -tau[::-1]) and np.allclose(table.f, -table.f[:, ::-1])):
            raise ValueError("table covers negative stresses but is not an odd extension")
        return FlowRuleTable(table.rho_axis.copy(), tau.copy(), table.f.copy(),
                             dict(table.metadata), table.failed.copy())
    if tau[0] != 0.0:
        raise ValueError("odd extension expects the axis to start at tau = 0")
    tau_ext = np.concatenate([-tau[:0:-1], tau])
    f_ext = np.concatenate([-table.f[:, :0:-1], table.f], axis=1)
    f_ext[:, tau.size - 1] = 0.0
    failed = np.concatenate([table.failed[:, :0:-1], table.failed], axis=1)
    return FlowRuleTable(table.rho_axis.copy(), tau_ext, f_ext,
                         dict(table.metadata), failed)


def threshold(table: FlowRuleTable, rho0: float, f_tol: float = None) -> float:
    """Depinning stress of the tabulated flow rule at density rho0.

    Returns the largest tau on the (nonnegative) axis where f <= f_tol,
    linearly refined towards the first exceeding neighbor; 0 when the flow is
    already live at the smallest positive stress.
    """
    if f_tol is None:
        f_tol = float(table.metadata.get("f_tol", DEFAULT_F_TOL))
    row = table.row(rho0)
    pos = table.tau_axis >= 0.0
    taus = table.tau_axis[pos]
    vals = row[pos]
    below = np.where(np.nan_to_num(vals, nan=np.inf) <= f_tol)[0]
    if below.size == 0:
        return 0.0
    k = below[-1]
    if k == taus.size - 1:
        return float(taus[k])
    f_lo, f_hi = vals[k], vals[k + 1]
    if not np.isfinite(f_hi) or f_hi <= f_lo:
        return float(taus[k])
    frac = (f_tol - f_lo) / (f_hi - f_lo)
    return float(taus[k] + frac * (taus[k + 1] - taus[k]))


_clamp_count = 0


def interp(table: FlowRuleTable, rho0, tau):
    """Bilinear interpolation of f, clamped to the table box (with a log note).

    Exact on the nodes and monotone along grid lines; NaN cells poison their
    patch rather than being silently bridged.
    """
    global _clamp_count
    rho0 = np.asarray(rho0, dtype=float)
    tau = np.asarray(tau, dtype=float)
    ra, ta = table.rho_axis, table.tau_axis
    clamped = (np.any(rho0 < ra[0]) or np.any(rho0 > ra[-1])
               or np.any(tau < ta[0]) or np.any(tau > ta[-1]))
    if clamped:
        _clamp_count += 1
        log.warning("flow-rule query clamped to the table box (count=%d)", _clamp_count)
    r = np.clip(rho0, ra[0], ra[-1])
    t = np.clip(tau, ta[0], ta[-1])
    i = np.clip(np.searchsorted(ra, r, side="right") - 1, 0, ra.size - 2)
    j = np.clip(np.searchsorted(ta, t, side="right") - 1, 0, ta.size - 2)
    wr = (r - ra[i]) / (ra[i + 1] - ra[i]) if ra.size > 1 else 0.0
    wt = (t - ta[j]) / (ta[j + 1] - ta[j])
    f = table.f
    out = ((1 - wr) * (1 - wt) * f[i, j] + (1 - wr) * wt * f[i, j + 1]
           + wr * (1 - wt) * f[i + 1, j] + wr * wt * f[i + 1, j + 1])
    return out if out.ndim else float(out)


def audit_monotonicity(table: FlowRuleTable, tol: float = 1e-8) -> float:
    """Largest decrease of f along tau within any row (0 when clean).

    The pass criterion is ``violation <= tol + noise_floor`` with the noise
    floor recorded in the table metadata.
    """
    drops = np.diff(np.nan_to_num(table.f, nan=0.0), axis=1)
    worst = -np.min(drops, initial=0.0)
    return float(max(worst, 0.0))


# ---------------------------------------------------------------------------
# persistence: data CSV (rho,tau,f) + key=value sidecar, and a matrix export
# ---------------------------------------------------------------------------

def save_table(table: FlowRuleTable, csv_path, meta_path=None):
    csv_path = str(csv_path)
    if meta_path is None:
        meta_path = csv_path[:-4] + ".meta" if csv_path.endswith(".csv") else csv_path + ".meta"
    with open(csv_path, "w") as fh:
        fh.write("rho,tau,f\n")
        for i, rho in enumerate(table.rho_axis):
            for j, tau in enumerate(table.tau_axis):
                val = table.f[i, j]
                text = "" if not np.isfinite(val) else repr(float(val))
                fh.write(f"{rho!r},{tau!r},{text}\n")
    with open(meta_path, "w") as fh:
        for key in sorted(table.metadata):
            fh.write(f"{key}={table.metadata[key]}\n")


def load_table(csv_path, meta_path=None) -> FlowRuleTable:
    csv_path = str(csv_path)
    if meta_path is None:
        guess = csv_path[:-4] + ".meta" if csv_path.endswith(".csv") else csv_path + ".meta"
        meta_path = guess
    rows = []
    with open(csv_path) as fh:
        header = fh.readline().strip()
        if header != "rho,tau,f":
            raise ValueError(f"unexpected table header {header!r}")
        for line in fh:
            rho_s, tau_s, f_s = line.rstrip("\n").split(",")
            rows.append((float(rho_s), float(tau_s), float(f_s) if f_s else np.nan))
    rho_axis = np.unique([r[0] for r in rows])
    tau_axis = np.unique([r[1] for r in rows])
    f = np.full((rho_axis.size, tau_axis.size), np.nan)
    for rho, tau, val in rows:
        i = int(np.searchsorted(rho_axis, rho))
        j = int(np.searchsorted(tau_axis, tau))
        f[i, j] = val
    meta = {}
    try:
        with open(meta_path) as fh:
            for line in fh:
                if "=" in line:
                    key, value = line.rstrip("\n").split("=", 1)
                    try:
                        meta[key] = float(value)
                    except ValueError:
                        meta[key] = value
    except FileNotFoundError:
        pass
    return FlowRuleTable(rho_axis, tau_axis, f, meta, ~np.isfinite(f))


def save_matrix(table: FlowRuleTable, path, pinned_sentinel: bool = False,
                f_tol: float = None):
    """Contour-plot matrix (rows = rho, cols = tau).

    ``pinned_sentinel`` replaces the f = 0 (pinned) region by an artificial
    negative value so level sets of the zero plateau stay visible; it is a
    display convention only and never appears in the data CSV.
    """
    if f_tol is None:
        f_tol = float(table.metadata.get("f_tol", DEFAULT_F_TOL))
    f = table.f.copy()
    if pinned_sentinel:
        fmax = np.nanmax(np.abs(f))
        f[np.nan_to_num(f, nan=np.inf) <= f_tol] = -0.05 * (fmax if fmax > 0 else 1.0)
    with open(path, "w") as fh:
        fh.write("rho\\tau," + ",".join(repr(float(t)) for t in table.tau_axis) + "\n")
        for i, rho in enumerate(table.rho_axis):
            cells = ",".join("" if not np.isfinite(v) else repr(float(v)) for v in f[i])
            fh.write(f"{rho!r},{cells}\n")
