"""Macroscopic solver for the homogenized strain evolution.

The limit model advances the plastic strain by d(gamma)/dt = f(rho, tau)
where rho = -d(gamma)/dx, tau = tau_ext + tau_sc, and tau_sc is the nonlocal
self-stress of the density field.  The solution is understood in the
viscosity sense, so the discretization is a monotone Lax-Friedrichs scheme:
centered density differences plus an artificial viscosity that dominates the
Lipschitz constant of f in rho.  The same module drives the micro/macro
convergence experiment: quantize a smooth strain into dislocations, run the
chain, rescale, and compare.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import StabilityError
from .flowrule import FlowRuleTable, f_case_a, interp
from .material import MaterialParams
from .micro1d import MicroState1D, simulate
from .strain import StrainField1D

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# self-consistent stress
# ---------------------------------------------------------------------------

def tau_sc_1d(field: StrainField1D, mu_bar: float = 1.0) -> np.ndarray:
    """Nonlocal self-stress of the strain field on the periodic cell.

    The whole-line principal-value convolution of 1/(x - x') with the strain
    gradient periodizes to the circular (cotangent) kernel; spectrally that is
    the multiplier -mu_bar * pi * |k| acting on the periodic part of gamma.
    The linear background (uniform density) creates no stress by symmetry and
    the k = 0 mode is annihilated, so the output has zero mean.
    """
    if not field.periodic:
        raise ValueError("self-stress is defined on periodic fields")
    n = field.n
    if n % 2 != 0:
        raise ValueError("spectral path expects an even node count")
    g = field.periodic_part()
    gh = np.fft.rfft(g)
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=field.dx)
    return -mu_bar * np.pi * np.fft.irfft(np.abs(k) * gh, n)


# ---------------------------------------------------------------------------
# flow-rule adapters used by the time stepper
# ---------------------------------------------------------------------------

class CaseAFlow:
    """Closed-form rule f = rho * tau / mu_bar (no obstacles)."""

    def __init__(self, mu_bar: float = 1.0):
        self.mu_bar = mu_bar

    def __call__(self, rho, tau):
        return f_case_a(rho, tau, self.mu_bar)

    def lipschitz(self, rho, tau):
        """(L_rho, L_tau) bounds over the sampled arguments."""
        return (float(np.max(np.abs(tau))) / self.mu_bar,
                float(np.max(np.abs(rho))) / self.mu_bar)


class TableFlow:
    """Bilinear interpolation of a measured table, clamped to its box."""

    def __init__(self, table: FlowRuleTable):
        self.table = table
        dr = np.diff(table.rho_axis)
        dt_ = np.diff(table.tau_axis)
        fmat = np.nan_to_num(table.f, nan=0.0)
        self._L_rho = float(np.max(np.abs(np.diff(fmat, axis=0)) / dr[:, None])) if dr.size else 0.0
        self._L_tau = float(np.max(np.abs(np.diff(fmat, axis=1)) / dt_[None, :]))

    def __call__(self, rho, tau):
        return interp(self.table, rho, tau)

    def lipschitz(self, rho, tau):
        return self._L_rho, self._L_tau


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

@dataclass
class MacroProblem:
    """One initial-value problem for the homogenized evolution."""

    gamma0: StrainField1D
    tau_ext: float
    flow: object                    # CaseAFlow | TableFlow | callable
    T_final: float
    snapshot_times: tuple = ()
    theta: float = None             # None -> auto from the flow-rule Lipschitz bound
    dt_max: float = np.inf
    smoothness_limit: float = 1e3   # cap on |second difference| / dx^2 of gamma0

    def __post_init__(self):
        if not self.gamma0.periodic:
            raise ValueError("the solver runs on periodic cells")
        left, right = self.gamma0.neighbors()
        curv = np.max(np.abs(right - 2.0 * self.gamma0.values + left)) / self.gamma0.dx ** 2
        if curv > self.smoothness_limit:
            raise ValueError(
                f"initial strain is too rough (|gamma''| ~ {curv:.3g} exceeds {self.smoothness_limit:.3g})"
            )


def _mean_abs_k(field: StrainField1D) -> float:
    k = 2.0 * np.pi * np.fft.fftfreq(field.n, d=field.dx)
    return float(np.mean(np.abs(k)))


def hj_step(gamma: StrainField1D, f_eval, tau_ext: float, dt: float,
            theta: float, tau_sc: np.ndarray = None,
            mu_bar: float = 1.0) -> StrainField1D:
    """One monotone Lax-Friedrichs step of d(gamma)/dt = f(rho, tau).

    rho comes from centered differences, the stress is lagged (evaluated on
    the incoming field), and theta * second-difference/(2 dx) is the
    artificial viscosity; theta must dominate |df/drho| for the update to be
    monotone in the neighbor values.
    """
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    left, right = gamma.neighbors()
    dx = gamma.dx
    rho = -(right - left) / (2.0 * dx)
    if tau_sc is None:
        tau_sc = tau_sc_1d(gamma, mu_bar)
    tau = tau_ext + tau_sc
    rate = f_eval(rho, tau) + theta * (right - 2.0 * gamma.values + left) / (2.0 * dx)
    out = gamma.copy()
    out.values = gamma.values + dt * rate
    return out


def solve_macro(problem: MacroProblem, mu_bar: float = 1.0, safety: float = 0.9):
    """March the problem to T_final with adaptive monotone time steps.

    The step size honors both the neighbor bound dt <= dx/(2 theta) and the
    diagonal bound including the nonlocal stress response; theta is re-fitted
    each step from the flow-rule Lipschitz constants unless fixed by the
    problem.  Snapshots are emitted exactly at the requested times.  The mean
    density is conserved identically: the update never touches the per-period
    strain increment.

    Returns (times, fields, diagnostics).
    """
    gamma = problem.gamma0.copy()
    t = 0.0
    w0 = _mean_abs_k(gamma)
    events = sorted(set(float(s) for s in problem.snapshot_times) | {float(problem.T_final)})
    if any(e < 0.0 or e > problem.T_final + 1e-12 for e in events):
        raise ValueError("snapshot times must lie in [0, T_final]")
    times, fields = [0.0], [gamma.copy()]
    diag = {"steps": 0, "theta_max": 0.0, "dt_min": np.inf}

    for t_event in events:
        while t < t_event - 1e-14:
            tau_sc = tau_sc_1d(gamma, mu_bar)
            left, right = gamma.neighbors()
            rho = -(right - left) / (2.0 * gamma.dx)
            tau = problem.tau_ext + tau_sc
            L_rho, L_tau = problem.flow.lipschitz(rho, tau)
            theta = problem.theta
            if theta is None:
                theta = 1.25 * L_rho
            elif theta < L_rho:
                raise StabilityError(
                    f"viscosity theta={theta} cannot dominate |df/drho|={L_rho:.3g} at t={t:.6g}"
                )
            denom = theta / gamma.dx + L_tau * mu_bar * np.pi * w0
            dt_bound = min(gamma.dx / (2.0 * theta) if theta > 0 else np.inf,
                           1.0 / denom if denom > 0 else np.inf)
            dt = min(safety * dt_bound, problem.dt_max, t_event - t)
            if dt <= 0.0 or not np.isfinite(dt):
                raise StabilityError(f"step size collapsed at t={t:.6g}")
            gamma = hj_step(gamma, problem.flow, problem.tau_ext, dt, theta,
                            tau_sc=tau_sc, mu_bar=mu_bar)
            t += dt
            diag["steps"] += 1
            diag["theta_max"] = max(diag["theta_max"], theta)
            diag["dt_min"] = min(diag["dt_min"], dt)
        times.append(t_event)
        fields.append(gamma.copy())

    from . import flowrule as _fr
    diag["clamp_count"] = _fr._clamp_count
    return times, fields, diag


# ---------------------------------------------------------------------------
# micro <-> macro bridges
# ---------------------------------------------------------------------------

def positions_from_strain(gamma0: StrainField1D, epsilon: float, b: float = 1.0,
                          orientation: str = "non_increasing") -> np.ndarray:
    """Dislocation positions realizing the floor-quantized strain.

    The quantized field eps*floor(gamma0/eps) jumps where gamma0 crosses an
    integer multiple of eps; those macro crossings, mapped through
    x = x_bar * (b/eps), are the microscopic initial positions.  gamma0 must
    be monotone (non-increasing for nonnegative density; pass
    orientation="non_decreasing" for the mirrored convention).
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    values = gamma0.values
    if orientation == "non_decreasing":
        values = -values
        wrap = -gamma0.wrap_jump
    elif orientation == "non_increasing":
        wrap = gamma0.wrap_jump
    else:
        raise ValueError(f"unknown orientation {orientation!r}")

    if gamma0.periodic:
        v_ext = np.append(values, values[0] + wrap)
    else:
        v_ext = values
    rises = np.diff(v_ext)
    if np.any(rises > 1e-12 * max(1.0, np.max(np.abs(v_ext)))):
        raise ValueError("strain is not monotone non-increasing; cannot quantize")

    xs = np.append(gamma0.x, gamma0.x_max) if gamma0.periodic else gamma0.x
    crossings = []
    for j in range(v_ext.size - 1):
        a, c = v_ext[j], v_ext[j + 1]
        k_hi = np.floor(a / epsilon)
        k_lo = np.floor(c / epsilon)
        if k_hi <= k_lo:
            continue
        for k in np.arange(k_lo + 1, k_hi + 1):
            frac = (a - k * epsilon) / (a - c)
            crossings.append(xs[j] + frac * (xs[j + 1] - xs[j]))
    scale = b / epsilon
    return np.sort(np.asarray(crossings, dtype=float)) * scale


def quantized_anchor(gamma0: StrainField1D, epsilon: float) -> float:
    """Value of the quantized field at the left edge of the cell."""
    return epsilon * np.floor(gamma0.values[0] / epsilon)


def micro_strain_on_grid(unwrapped_t: np.ndarray, unwrapped_0: np.ndarray,
                         l: float, epsilon: float, anchor: float,
                         gamma0_field: StrainField1D) -> StrainField1D:
    """Rescaled microscopic strain sampled on the macro grid.

    Counts signed passages of every dislocation image through each node:
    starting from the quantized initial profile anchored at the left edge,
    each rightward passage raises the strain by one quantum eps.
    """
    xbar = gamma0_field.x
    x_micro = xbar / epsilon
    x0 = gamma0_field.x_min / epsilon
    count_t = np.floor((x_micro[:, None] - unwrapped_t[None, :]) / l).sum(axis=1)
    base_t0 = np.floor((x0 - unwrapped_0) / l).sum()
    values = anchor + epsilon * (base_t0 - count_t)
    return StrainField1D(values, gamma0_field.x_min, gamma0_field.x_max,
                         periodic=True, wrap_jump=gamma0_field.wrap_jump)


def convergence_experiment(gamma0: StrainField1D, flow, eps_list,
                           t_final: float, tau_ext: float,
                           A: float = 0.0, lam_p: float = 1.0,
                           dt_micro: float = 0.01, mu_bar: float = 1.0,
                           B: float = 1.0, theta: float = None,
                           dt_max_macro: float = np.inf):
    """Sup-norm gap between rescaled chain runs and the homogenized solution.

    For each epsilon (strictly decreasing) the initial strain is quantized
    into dislocations, the chain is run to the micro time t_final/epsilon,
    and the rescaled strain is compared on the macro grid against one shared
    macro solve.  Returns a list of (epsilon, sup_error).
    """
    eps_list = [float(e) for e in eps_list]
    if any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if any(e <= 0 for e in eps_list):
        raise ValueError("epsilon must be positive")

    problem = MacroProblem(gamma0=gamma0, tau_ext=tau_ext, flow=flow,
                           T_final=t_final, theta=theta, dt_max=dt_max_macro)
    _, fields, _ = solve_macro(problem, mu_bar=mu_bar)
    gamma_macro = fields[-1]

    params = MaterialParams.from_mu_bar(mu_bar, nu=0.0, b=1.0, B=B)
    errors = []
    for eps in eps_list:
        positions = positions_from_strain(gamma0, eps, b=1.0)
        l = gamma0.length / eps
        state = MicroState1D(positions, l=l, A=A, lam_p=lam_p, tau_ext=tau_ext)
        x0 = state.unwrapped.copy()
        T_micro = t_final * B / (mu_bar * eps)
        traj, _ = simulate(state, params, dt=dt_micro, T=T_micro, burn_in=0.0)
        x_final = traj.positions[-1]
        anchor = quantized_anchor(gamma0, eps)
        micro_field = micro_strain_on_grid(x_final, x0, l, eps, anchor, gamma0)
        errors.append((eps, float(np.max(np.abs(micro_field.values - gamma_macro.values)))))
    return errors


# ---------------------------------------------------------------------------
# snapshot persistence
# ---------------------------------------------------------------------------

def save_snapshot(field: StrainField1D, tau_ext: float, mu_bar: float, path):
    """CSV dump ``x,gamma,rho,tau_sc`` of one macro state."""
    from .strain import density_from_strain
    rho = density_from_strain(field, neg_tol=np.inf)
    tsc = tau_sc_1d(field, mu_bar)
    with open(path, "w") as fh:
        fh.write("x,gamma,rho,tau_sc\n")
        for x, g, r, s in zip(field.x, field.values, rho, tsc):
            fh.write(f"{x!r},{g!r},{r!r},{s!r}\n")
