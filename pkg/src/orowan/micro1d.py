"""Microscopic simulator for a chain of straight parallel dislocations.

N dislocations glide on a periodic cell of length l under three forces: a
periodic obstacle force of amplitude A (period lam_p), the image-summed
elastic repulsion of all other dislocations, and a constant applied stress.
The overdamped dynamics B dx/dt = F is integrated with an explicit Euler
scheme; the observable of interest is the long-time mean velocity, which is
well defined because the interaction is convex and the motion settles on a
traveling (hull-function) profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CoincidenceError, OrderingError

MIN_GAP_FACTOR = 1e-12   # coincidence guard, in units of the cell length
PROBE_TOL = 1e-8         # stagnation displacement below which a run counts as pinned


def obstacle_force(x, A: float, lam_p: float = 1.0):
    """Pinning force -A cos(2 pi x / lam_p) exerted by the obstacle array.

    A is the force amplitude, i.e. the depinning stress of an isolated
    dislocation; the underlying potential is (A lam_p / 2 pi) sin(2 pi x / lam_p).
    """
    if lam_p <= 0.0:
        raise ValueError("obstacle period must be positive")
    return -A * np.cos(2.0 * np.pi * np.asarray(x, dtype=float) / lam_p)


def pair_force_periodized(dx, l: float, mu_bar: float = 1.0, b: float = 1.0):
    """Image-summed repulsion sum_k mu_bar*b/(dx - k*l) = (mu_bar*b*pi/l) cot(pi dx/l).

    The closed form is exact for the full lattice of periodic images; it is
    l-periodic and odd in dx.  dx == 0 (mod l) means coincident dislocations
    and is rejected.
    """
    dx = np.asarray(dx, dtype=float)
    u = np.pi * dx / l
    if np.any(np.abs(np.sin(u)) < MIN_GAP_FACTOR * np.pi):
        raise CoincidenceError(message="pair separation is congruent to 0 modulo the cell")
    out = (mu_bar * b * np.pi / l) / np.tan(u)
    return out if out.ndim else float(out)


@dataclass
class MicroState1D:
    """Chain configuration on one periodic cell.

    ``positions`` are kept sorted; ``unwrapped`` accumulates the true
    displacement history (never reduced modulo l) so that mean velocities and
    hull diagnostics are well defined.
    """

    positions: np.ndarray
    l: float
    A: float = 0.0
    lam_p: float = 1.0
    tau_ext: float = 0.0
    time: float = 0.0
    unwrapped: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float)
        if self.positions.ndim != 1:
            raise ValueError("positions must be a 1D array")
        if self.l <= 0.0:
            raise ValueError("cell length must be positive")
        if self.lam_p <= 0.0:
            raise ValueError("obstacle period must be positive")
        ratio = self.l / self.lam_p
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"cell length {self.l} must be an integer multiple of the obstacle period {self.lam_p}"
            )
        n = self.positions.size
        if n > 0:
            order = np.argsort(self.positions)
            self.positions = self.positions[order]
            gaps = np.diff(self.positions)
            wrap = self.positions[0] + self.l - self.positions[-1]
            if n > 1 and (np.any(gaps <= 0.0) or wrap <= 0.0):
                raise OrderingError(step=0, message="initial positions are not strictly ordered within one cell")
            min_gap = MIN_GAP_FACTOR * self.l
            if n > 1 and (np.min(gaps) < min_gap or wrap < min_gap):
                raise CoincidenceError(step=0, message="initial positions violate the minimum gap")
        if self.unwrapped is None:
            self.unwrapped = self.positions.copy()
        else:
            self.unwrapped = np.array(self.unwrapped, dtype=float)

    @property
    def n(self) -> int:
        return self.positions.size

    def copy(self) -> "MicroState1D":
        return MicroState1D(self.positions.copy(), self.l, self.A, self.lam_p,
                            self.tau_ext, self.time, self.unwrapped.copy())


def equally_spaced_state(N: int, l: float, A: float = 0.0, lam_p: float = 1.0,
                         tau_ext: float = 0.0, offset: float = None,
                         perturbation=None) -> MicroState1D:
    """N equally spaced dislocations, the first seated at an obstacle minimum.

    The stable zero of the obstacle force sits at 3/4 of the period; a
    different ``offset`` or an additive ``perturbation`` array can override
    the default placement.
    """
    if N < 1:
        raise ValueError("need at least one dislocation")
    if offset is None:
        offset = 0.75 * lam_p
    pos = offset + (l / N) * np.arange(N)
    if perturbation is not None:
        pos = pos + np.asarray(perturbation, dtype=float)
    return MicroState1D(pos, l=l, A=A, lam_p=lam_p, tau_ext=tau_ext)


@dataclass
class Trajectory1D:
    """Sampled unwrapped trajectories of one run."""

    times: np.ndarray                 # (S,)
    positions: np.ndarray             # (S, N) unwrapped
    pinned: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def mean_displacement(self) -> np.ndarray:
        return np.mean(self.positions - self.positions[0], axis=1)

    def to_csv(self, path, stride: int = 1):
        """Dump rows ``t,i,x_unwrapped`` (long format), one per sample and dislocation."""
        with open(path, "w") as fh:
            fh.write("t,i,x_unwrapped\n")
            for k in range(0, self.times.size, stride):
                t = self.times[k]
                for i in range(self.positions.shape[1]):
                    fh.write(f"{t!r},{i},{self.positions[k, i]!r}\n")


def total_forces(state: MicroState1D, params) -> np.ndarray:
    """Obstacle + pair + applied force on every dislocation."""
    backend = _kernels.get_backend()
    x = np.ascontiguousarray(state.unwrapped, dtype=float)
    _raise_on_bad_gaps(x, state.l)
    return backend.forces(x, state.l, state.A, state.lam_p, state.tau_ext,
                          params.mu_bar, params.b)


def _raise_on_bad_gaps(x, l, step=0):
    if x.size > 1:
        gaps = np.diff(x)
        wrap = x[0] + l - x[-1]
        if np.any(gaps <= 0.0) or wrap <= 0.0:
            raise OrderingError(step)
        if min(np.min(gaps), wrap) < MIN_GAP_FACTOR * l:
            raise CoincidenceError(step)


def step_euler(state: MicroState1D, params, dt: float, backend=None) -> MicroState1D:
    """One explicit Euler step with a simultaneous update of all positions."""
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    new = state.copy()
    if dt == 0.0 or state.n == 0:
        return new
    if backend is None:
        backend = _kernels.get_backend()
    x = np.array(new.unwrapped, dtype=float)
    status, step, _ = backend.advance(
        x, new.l, new.A, new.lam_p, new.tau_ext, params.B, params.mu_bar,
        params.b, dt, 1, None, 0, 0, 0.0, MIN_GAP_FACTOR * new.l)
    _raise_status(status, step)
    new.unwrapped = x
    new.positions = np.mod(x, new.l)
    new.time = state.time + dt
    return new


def _raise_status(status, step):
    if status == _kernels.STATUS_CROSSING:
        raise OrderingError(step)
    if status == _kernels.STATUS_COINCIDENT:
        raise CoincidenceError(step)


def simulate(state: MicroState1D, params, dt: float, T: float,
             burn_in: float = None, sample_stride: int = 0,
             pin_exit: bool = True, probe_tol: float = PROBE_TOL,
             backend=None):
    """Run the chain to time T and measure the mean velocity.

    The velocity is averaged over [burn_in, T] on unwrapped coordinates
    (burn_in defaults to T/2, discarding the transient before the traveling
    profile is reached).  With ``pin_exit`` the run stops early and reports
    v = 0 as soon as the configuration stops moving: if the maximum
    displacement over one probe window of duration lam_p*B/max(|tau_ext|, 1)
    stays below ``probe_tol`` the chain is declared pinned.

    Returns (Trajectory1D, v).  ``sample_stride`` > 0 records every that-many
    steps (plus the initial and phase-boundary states).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if T <= 0.0:
        raise ValueError("T must be positive")
    if burn_in is None:
        burn_in = 0.5 * T
    if not 0.0 <= burn_in < T:
        raise ValueError(f"need 0 <= burn_in < T, got burn_in={burn_in}, T={T}")
    if backend is None:
        backend = _kernels.get_backend()

    n_total = int(round(T / dt))
    n_burn = int(round(burn_in / dt))
    if n_burn >= n_total:
        n_burn = n_total - 1

    x = np.array(state.unwrapped, dtype=float)  # private copy; the caller's state is untouched
    _raise_on_bad_gaps(x, state.l)
    min_gap = MIN_GAP_FACTOR * state.l
    probe_steps = 0
    if pin_exit and state.n > 0:
        window = state.lam_p * params.B / max(abs(state.tau_ext), 1.0)
        probe_steps = max(1, int(round(window / dt)))

    times = [state.time]
    rows = [x.copy()]
    pinned = False

    def run_phase(n_steps, step_offset):
        nonlocal pinned
        if n_steps <= 0:
            return x.copy(), True
        buf = None
        if sample_stride > 0:
            buf = np.empty((n_steps // sample_stride + 1, x.size), dtype=float)
        status, stopped, n_smp = backend.advance(
            x, state.l, state.A, state.lam_p, state.tau_ext,
            params.B, params.mu_bar, params.b, dt, n_steps,
            buf, sample_stride, probe_steps, probe_tol, min_gap)
        _raise_status(status, step_offset + stopped)
        if sample_stride > 0:
            for k in range(n_smp):
                times.append(state.time + dt * (step_offset + (k + 1) * sample_stride))
                rows.append(buf[k].copy())
        if status == _kernels.STATUS_PINNED:
            pinned = True
            if not times or times[-1] != state.time + dt * (step_offset + stopped):
                times.append(state.time + dt * (step_offset + stopped))
                rows.append(x.copy())
            return x.copy(), False
        if sample_stride <= 0 or n_steps % sample_stride != 0:
            times.append(state.time + dt * (step_offset + n_steps))
            rows.append(x.copy())
        return x.copy(), True

    x_burn, alive = run_phase(n_burn, 0)
    if alive:
        x_final, alive = run_phase(n_total - n_burn, n_burn)
    else:
        x_final = x_burn

    if pinned or state.n == 0:
        v = 0.0
    else:
        v = float(np.mean(x_final - x_burn) / (dt * (n_total - n_burn)))

    traj = Trajectory1D(
        times=np.asarray(times, dtype=float),
        positions=np.asarray(rows, dtype=float),
        pinned=pinned,
        meta={
            "dt": dt, "T": dt * n_total, "burn_in": dt * n_burn,
            "N": state.n, "l": state.l, "A": state.A, "lam_p": state.lam_p,
            "tau_ext": state.tau_ext, "B": params.B, "mu_bar": params.mu_bar,
            "b": params.b, "backend": backend.NAME, "pin_exit": pin_exit,
        },
    )
    return traj, v


def _interp_positions(traj: Trajectory1D, t):
    """Cubic (4-point Lagrange) interpolation of all trajectories at time t."""
    times = traj.times
    pos = traj.positions
    k = np.searchsorted(times, t) - 1
    k = min(max(k, 1), times.size - 3)
    idx = np.arange(k - 1, k + 3)
    ts = times[idx]
    w = np.empty(4)
    for a in range(4):
        num = 1.0
        for c in range(4):
            if c != a:
                num *= (t - ts[c]) / (ts[a] - ts[c])
        w[a] = num
    return w @ pos[idx]


def hull_residual(traj: Trajectory1D, rho0: float, v: float, b: float = 1.0,
                  transient_cutoff: float = 0.0) -> float:
    """Time-shift defect of the traveling (hull) structure.

    On the traveling profile x_i(t) = b*h(v t/b + i/rho0) every trajectory is
    the time translate of its right neighbor by Delta = b/(rho0*v); the
    wrap-around neighbor of the last dislocation is the first one shifted by
    the cell length.  Returns the max over post-cutoff sample times and
    neighbor pairs of |x_{i+1}(t) - x_i(t + Delta)|; a small value certifies
    that the transient has died out and the chain rides the hull function.
    """
    if v == 0.0:
        raise ValueError("no traveling wave to test at v = 0")
    if rho0 <= 0.0:
        raise ValueError("density must be positive")
    delta = b / (rho0 * v)
    times = traj.times
    l = traj.meta.get("l")
    t_lo = times[0] + transient_cutoff
    t_hi = times[-1]
    if delta > 0.0:
        t_hi -= delta
    else:
        t_lo -= delta
    if t_hi - t_lo < abs(delta):
        raise ValueError("trajectory does not cover two shift periods past the cutoff")
    mask = (times >= t_lo) & (times <= t_hi)
    if not np.any(mask):
        raise ValueError("no samples in the post-cutoff comparison window")
    worst = 0.0
    n = traj.positions.shape[1]
    for t in times[mask]:
        shifted = _interp_positions(traj, t + delta)
        here = traj.positions[np.searchsorted(times, t)]
        if n > 1:
            worst = max(worst, float(np.max(np.abs(here[1:] - shifted[:-1]))))
        worst = max(worst, abs(here[0] + l - shifted[-1]))
    return worst
