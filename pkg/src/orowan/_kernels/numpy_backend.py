"""Pure-NumPy fallback for the chain integrator.

Semantically identical to the compiled extension (same statuses, same
sampling and probing contract); roughly 10-100x slower because the step loop
runs in Python.  Selected automatically when the extension is unavailable or
when ``OROWAN_PURE_PY=1``.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

STATUS_DONE = 0
STATUS_PINNED = 1
STATUS_CROSSING = 2
STATUS_COINCIDENT = 3


def forces(x, l, a_force, lam_p, tau_ext, mu_bar, b):
    """Total force on each dislocation for unwrapped positions ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.full(n, tau_ext, dtype=float)
    if a_force != 0.0:
        out -= a_force * np.cos((2.0 * np.pi / lam_p) * x)
    if n > 1:
        u = (np.pi / l) * (x[:, None] - x[None, :])
        np.fill_diagonal(u, 0.25 * np.pi)  # placeholder, zeroed below
        c = 1.0 / np.tan(u)
        np.fill_diagonal(c, 0.0)
        out += (mu_bar * b * np.pi / l) * c.sum(axis=1)
    return out


def _check_gaps(x, l, min_gap):
    n = x.size
    if n > 1:
        gaps = np.diff(x)
        wrap = x[0] + l - x[-1]
        if np.any(gaps <= 0.0) or wrap <= 0.0:
            return STATUS_CROSSING
        if np.min(gaps) < min_gap or wrap < min_gap:
            return STATUS_COINCIDENT
    return STATUS_DONE


def advance(x, l, a_force, lam_p, tau_ext, B, mu_bar, b, dt, n_steps,
            samples, sample_stride, probe_steps, probe_tol, min_gap):
    """Advance the chain ``n_steps`` Euler steps in place; see compiled twin."""
    n = x.size
    if n == 0:
        return STATUS_DONE, n_steps, 0
    do_sample = samples is not None and sample_stride > 0
    n_samples = 0
    probing = probe_steps > 0
    snap = x.copy() if probing else None
    dt_over_B = dt / B
    for step in range(1, n_steps + 1):
        f = forces(x, l, a_force, lam_p, tau_ext, mu_bar, b)
        x += dt_over_B * f
        status = _check_gaps(x, l, min_gap)
        if status != STATUS_DONE:
            return status, step, n_samples
        if do_sample and step % sample_stride == 0:
            samples[n_samples, :] = x
            n_samples += 1
        if probing and step % probe_steps == 0:
            if np.max(np.abs(x - snap)) < probe_tol:
                return STATUS_PINNED, step, n_samples
            snap[:] = x
    return STATUS_DONE, n_steps, n_samples
