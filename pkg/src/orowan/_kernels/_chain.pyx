# cython: language_level=3
"""Compiled integrator for the periodic dislocation chain.

Implements exactly the same stepping contract as ``numpy_backend``: explicit
Euler with simultaneous updates, image-summed (cotangent) pair forces, an
obstacle force of amplitude A, per-step ordering and minimum-gap checks, an
optional stagnation probe, and in-place trajectory sampling.
"""

from libc.math cimport M_PI, cos, fabs, tan

import numpy as np

NAME = "cython"

STATUS_DONE = 0
STATUS_PINNED = 1
STATUS_CROSSING = 2
STATUS_COINCIDENT = 3


cdef inline void _force_fill(double* x, Py_ssize_t n, double inv_l, double pair_coef,
                             double a_force, double two_pi_over_lam, double tau_ext,
                             double* out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double u, fij
    for i in range(n):
        if a_force != 0.0:
            out[i] = tau_ext - a_force * cos(two_pi_over_lam * x[i])
        else:
            out[i] = tau_ext
    # pair forces accumulated antisymmetrically so action-reaction is exact
    for i in range(n):
        for j in range(i + 1, n):
            u = M_PI * (x[i] - x[j]) * inv_l
            fij = pair_coef / tan(u)
            out[i] += fij
            out[j] -= fij


def forces(double[::1] x, double l, double a_force, double lam_p, double tau_ext,
           double mu_bar, double b):
    """Total force on each dislocation for unwrapped positions ``x``."""
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] mv = out
    cdef double pair_coef = mu_bar * b * M_PI / l
    if n > 0:
        _force_fill(&x[0], n, 1.0 / l, pair_coef, a_force,
                    2.0 * M_PI / lam_p, tau_ext, &mv[0])
    return out


def advance(double[::1] x, double l, double a_force, double lam_p, double tau_ext,
            double B, double mu_bar, double b, double dt, long n_steps,
            samples, long sample_stride, long probe_steps, double probe_tol,
            double min_gap):
    """Advance the chain ``n_steps`` Euler steps in place.

    ``samples`` is either None or a preallocated (m, n) float64 array; row k
    receives the positions after step k*sample_stride (k >= 1).  Returns
    (status, step, n_samples) where ``step`` is the step at which stepping
    stopped (== n_steps when it ran to completion).
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef double[:, ::1] smp
    cdef bint do_sample = samples is not None and sample_stride > 0
    if do_sample:
        smp = samples
    cdef double inv_l = 1.0 / l
    cdef double pair_coef = mu_bar * b * M_PI / l
    cdef double two_pi_over_lam = 2.0 * M_PI / lam_p
    cdef double dt_over_B = dt / B
    cdef double gap
    cdef long step, n_samples = 0
    cdef Py_ssize_t i
    cdef bint probing = probe_steps > 0 and n > 0
    cdef double moved, d

    force_buf = np.empty(n, dtype=np.float64)
    snap_buf = np.empty(n, dtype=np.float64)
    cdef double[::1] f = force_buf
    cdef double[::1] snap = snap_buf
    if probing:
        for i in range(n):
            snap[i] = x[i]

    if n == 0:
        return STATUS_DONE, n_steps, 0

    with nogil:
        for step in range(1, n_steps + 1):
            _force_fill(&x[0], n, inv_l, pair_coef, a_force,
                        two_pi_over_lam, tau_ext, &f[0])
            for i in range(n):
                x[i] = x[i] + dt_over_B * f[i]
            # ordering / coincidence guards on the unwrapped configuration
            for i in range(1, n):
                gap = x[i] - x[i - 1]
                if gap <= 0.0:
                    with gil:
                        return STATUS_CROSSING, step, n_samples
                if gap < min_gap:
                    with gil:
                        return STATUS_COINCIDENT, step, n_samples
            if n > 1:
                gap = x[0] + l - x[n - 1]
                if gap <= 0.0:
                    with gil:
                        return STATUS_CROSSING, step, n_samples
                if gap < min_gap:
                    with gil:
                        return STATUS_COINCIDENT, step, n_samples
            if do_sample and step % sample_stride == 0:
                for i in range(n):
                    smp[n_samples, i] = x[i]
                n_samples += 1
            if probing and step % probe_steps == 0:
                moved = 0.0
                for i in range(n):
                    d = fabs(x[i] - snap[i])
                    if d > moved:
                        moved = d
                if moved < probe_tol:
                    with gil:
                        return STATUS_PINNED, step, n_samples
                for i in range(n):
                    snap[i] = x[i]

    return STATUS_DONE, n_steps, n_samples
