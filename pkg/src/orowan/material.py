"""Material constants and micro/macro unit conversions.

All dislocations carry the same Burgers vector of magnitude ``b`` and glide in
a single plane, so isotropic elasticity enters only through the effective
prefactor ``mu_bar = mu / (2 pi (1 - nu))`` of the pairwise interaction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

NU_WARN = 0.45


def mu_bar_of(mu: float, nu: float) -> float:
    """Effective interaction modulus mu / (2 pi (1 - nu)).

    nu >= 0.5 is rejected outright (the elastic kernel loses positivity there);
    values above 0.45 are accepted with a warning because the prefactor is
    already close to its pole.
    """
    if mu <= 0.0:
        raise ValueError(f"shear modulus must be positive, got {mu}")
    if nu >= 0.5:
        raise ValueError(f"Poisson ratio must be < 0.5, got {nu}")
    if nu > NU_WARN:
        warnings.warn(
            f"Poisson ratio {nu} is close to 0.5; mu_bar is nearly singular",
            stacklevel=2,
        )
    return mu / (2.0 * math.pi * (1.0 - nu))


@dataclass(frozen=True)
class MaterialParams:
    """Physical constants: shear modulus, Poisson ratio, Burgers magnitude, drag."""

    mu: float
    nu: float
    b: float
    B: float
    mu_bar: float = field(init=False)

    def __post_init__(self):
        if self.b <= 0.0:
            raise ValueError(f"Burgers magnitude must be positive, got {self.b}")
        if self.B <= 0.0:
            raise ValueError(f"drag coefficient must be positive, got {self.B}")
        object.__setattr__(self, "mu_bar", mu_bar_of(self.mu, self.nu))

    @classmethod
    def from_mu_bar(cls, mu_bar: float, nu: float = 0.0, b: float = 1.0, B: float = 1.0):
        """Build params from a target mu_bar (handy for dimensionless runs)."""
        if mu_bar <= 0.0:
            raise ValueError(f"mu_bar must be positive, got {mu_bar}")
        mu = mu_bar * 2.0 * math.pi * (1.0 - nu)
        return cls(mu=mu, nu=nu, b=b, B=B)


@dataclass(frozen=True)
class Scales:
    """Length scales of the two-scale description.

    Lambda is the macroscopic observation scale, lam the obstacle period.
    epsilon = b / Lambda is the small homogenization parameter and
    lambda_bar = lam / b the obstacle spacing in Burgers units (> 1 for a
    genuine separation between the core size and the obstacle spacing).
    """

    Lambda: float
    lam: float
    b: float
    lambda_bar: float = field(init=False)
    epsilon: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.b < self.Lambda):
            raise ValueError(f"need 0 < b < Lambda, got b={self.b}, Lambda={self.Lambda}")
        if self.lam <= self.b:
            raise ValueError(
                f"obstacle period must exceed b (lambda_bar > 1), got lam={self.lam}, b={self.b}"
            )
        object.__setattr__(self, "lambda_bar", self.lam / self.b)
        object.__setattr__(self, "epsilon", self.b / self.Lambda)


def normalize(b: float, Lambda: float, B: float, mu_bar: float) -> tuple[float, float]:
    """Return (epsilon, time_scale) for the macroscopic rescaling.

    Macroscopic coordinates are x_bar = x / Lambda and t_bar = t / time_scale
    with time_scale = B * Lambda / mu_bar.
    """
    if b <= 0.0 or Lambda <= 0.0:
        raise ValueError("lengths must be positive")
    if b >= Lambda:
        raise ValueError(f"scale separation requires b < Lambda, got b={b}, Lambda={Lambda}")
    if B <= 0.0 or mu_bar <= 0.0:
        raise ValueError("B and mu_bar must be positive")
    return b / Lambda, B * Lambda / mu_bar
