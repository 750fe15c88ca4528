"""Plastic strain fields on 1D grids and their dislocation densities.

The microscopic strain is a staircase: each dislocation at x_i contributes
-b * H(x - x_i), so the field drops by b across every dislocation and the
density is rho = -dgamma/dx >= 0.

A periodic cell carrying a positive mean density cannot hold a strictly
periodic gamma: the field loses ``N b`` per cell.  ``StrainField1D`` therefore
stores the per-period increment ``wrap_jump`` = gamma(x + L) - gamma(x)
(non-positive for admissible fields) and treats the stored samples as one
representative period of a linear-plus-periodic profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def plastic_strain_1d(positions, b: float, x):
    """Strain -b * #{x_i <= x} accumulated by the given dislocations.

    ``positions`` is a finite set of abscissas (one periodic cell or any
    explicit finite family); ``x`` may be a scalar or an array.
    """
    pos = np.sort(np.asarray(positions, dtype=float))
    x = np.asarray(x, dtype=float)
    counts = np.searchsorted(pos, x, side="right")
    out = -b * counts.astype(float)
    return out if out.ndim else float(out)


@dataclass
class StrainField1D:
    """Sampled strain on a uniform grid over [x_min, x_max).

    For periodic fields the nodes are x_min + i*dx with dx = L/n (right
    endpoint excluded) and the periodic extension satisfies
    gamma(x + L) = gamma(x) + wrap_jump.  Non-periodic fields sample the
    closed interval with dx = L/(n-1) and ignore wrap_jump.
    """

    values: np.ndarray
    x_min: float
    x_max: float
    periodic: bool = True
    wrap_jump: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 3:
            raise ValueError("strain field needs at least 3 nodes")
        if not self.x_max > self.x_min:
            raise ValueError("empty domain")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n if self.periodic else self.length / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        if self.periodic:
            return self.x_min + self.dx * np.arange(self.n)
        return np.linspace(self.x_min, self.x_max, self.n)

    def copy(self) -> "StrainField1D":
        return StrainField1D(self.values.copy(), self.x_min, self.x_max,
                             self.periodic, self.wrap_jump)

    def periodic_part(self) -> np.ndarray:
        """Samples with the linear background (wrap_jump/L slope) removed."""
        if not self.periodic:
            raise ValueError("periodic_part only defined for periodic fields")
        return self.values - self.wrap_jump * (self.x - self.x_min) / self.length

    def mean_density(self) -> float:
        if self.periodic:
            return -self.wrap_jump / self.length
        return -(self.values[-1] - self.values[0]) / self.length

    def neighbors(self):
        """(left, right) neighbor samples, wrap-jump corrected on periodic fields."""
        right = np.roll(self.values, -1)
        left = np.roll(self.values, 1)
        if self.periodic:
            right[-1] += self.wrap_jump
            left[0] -= self.wrap_jump
        return left, right


def density_from_strain(field: StrainField1D, neg_tol: float = 1e-9) -> np.ndarray:
    """Discrete density rho = -dgamma/dx by centered differences.

    Periodic fields wrap (with the jump correction); non-periodic fields use
    one-sided differences at the two boundary nodes.  Densities below
    ``-neg_tol`` (relative to the density scale) mark an inadmissible field
    and are rejected.
    """
    if field.n < 3:
        raise ValueError("need at least 3 nodes")
    dx = field.dx
    if field.periodic:
        left, right = field.neighbors()
        rho = -(right - left) / (2.0 * dx)
    else:
        v = field.values
        rho = np.empty_like(v)
        rho[1:-1] = -(v[2:] - v[:-2]) / (2.0 * dx)
        rho[0] = -(v[1] - v[0]) / dx
        rho[-1] = -(v[-1] - v[-2]) / dx
    scale = max(np.max(np.abs(rho)), 1.0)
    if np.min(rho) < -neg_tol * scale:
        raise ValueError(
            f"negative dislocation density (min {np.min(rho):.3e}); "
            "field is not an admissible plastic strain"
        )
    return rho
