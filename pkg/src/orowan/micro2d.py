"""Curved dislocation dynamics on a periodic 2D cell.

A single continuous level function gamma_tilde represents the whole family of
dislocation curves: curve j is the level set gamma_tilde = j*b.  Each curve
feels a nonlocal stress obtained by convolving an even, nonnegative elastic
kernel with the ternary sign of (gamma_tilde - j*b); adding the periodic
obstacle stress and dividing by the drag gives a normal velocity, and the
level function is transported with a Godunov-upwinded |gradient| scheme.

The kernel equals the anisotropic far field g(direction)/|X|^3 outside a
cutoff radius R and is blended to a smooth cap inside; positivity of the
kernel is what makes the evolution monotone (ordered level functions stay
ordered).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import StabilityError

# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def kernel_g(direction, mu: float, b: float, nu: float):
    """Angular amplitude of the far-field interaction kernel.

    For a unit vector (x, y): (mu*b/4pi) * (x^2 (2 beta - 1) + y^2 (2 - beta))
    with beta = 1/(1 - nu).  Nonnegative for beta in [1/2, 2], i.e.
    nu in [-1, 1/2); outside that window the kernel would change sign and the
    dynamics would lose monotonicity, so such nu are rejected.
    """
    dx, dy = float(direction[0]), float(direction[1])
    norm = math.hypot(dx, dy)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"direction must be a unit vector, |d| = {norm}")
    beta = _beta_of(nu)
    return (mu * b / (4.0 * math.pi)) * (dx * dx * (2.0 * beta - 1.0)
                                         + dy * dy * (2.0 - beta))


def _beta_of(nu: float) -> float:
    if nu >= 0.5:
        raise ValueError(f"Poisson ratio must be < 0.5, got {nu}")
    beta = 1.0 / (1.0 - nu)
    if beta > 2.0 or beta < 0.5:
        raise ValueError(f"nu={nu} gives beta={beta} outside [1/2, 2]; kernel would change sign")
    return beta


def _wrapped_coords(n: int, spacing: float) -> np.ndarray:
    """Signed cell offsets in FFT layout: index 0 is the origin."""
    idx = (np.arange(n) + n // 2) % n - n // 2
    return idx * spacing


def _g_components(ux, uy, mu, b, beta):
    r2 = ux * ux + uy * uy
    with np.errstate(invalid="ignore", divide="ignore"):
        g = (mu * b / (4.0 * math.pi)) * (ux * ux * (2.0 * beta - 1.0)
                                          + uy * uy * (2.0 - beta)) / r2
    return g, r2


@dataclass
class Kernel2D:
    """Sampled interaction kernel on the periodic grid (FFT layout)."""

    grid: np.ndarray          # (n, n) J values, origin at [0, 0]
    spacing: float
    R: float
    mu: float
    b: float
    nu: float
    tail_images: int = 8      # image shells summed into the far-field kernel

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    @cached_property
    def fft(self):
        return np.fft.rfft2(self.grid)

    @cached_property
    def integral(self) -> float:
        """Cell-area-weighted sum of J over the periodic cell."""
        return float(np.sum(self.grid)) * self.spacing ** 2

    @cached_property
    def farfield_fft(self):
        """FFT of the far-field kernel in difference form (zero total sum).

        Used by the self-stress convolution.  The r^-3 tail beyond the cell is
        folded in by summing ``tail_images`` shells of periodic images (the
        single-window truncation loses a 1/(k L) fraction of the symbol,
        which is too coarse for the 1D consistency check).  The origin weight
        is set to the negative of all other weights, which realizes the
        principal-value / finite-part pairing (a constant field produces
        exactly zero stress) and kills the zero mode.
        """
        beta = _beta_of(self.nu)
        length = self.n * self.spacing
        u = _wrapped_coords(self.n, self.spacing)
        ux, uy = np.meshgrid(u, u, indexing="ij")
        jinf = np.zeros((self.n, self.n))
        m = self.tail_images
        for a in range(-m, m + 1):
            for c in range(-m, m + 1):
                g, r2 = _g_components(ux + a * length, uy + c * length,
                                      self.mu, self.b, beta)
                with np.errstate(invalid="ignore", divide="ignore"):
                    term = g / (r2 * np.sqrt(r2))
                if a == 0 and c == 0:
                    term[0, 0] = 0.0
                jinf += term
        jinf[0, 0] = 0.0
        jinf[0, 0] = -np.sum(jinf)
        return np.fft.rfft2(jinf)


def build_kernel(params, R_bar: float, n: int, length: float) -> Kernel2D:
    """Sample the blended kernel on an n x n periodic cell of side ``length``.

    Outside the cutoff R = R_bar * b the kernel is the far field g(theta)/r^3;
    inside, each ray carries the C^1 quadratic cap
    g(theta)/R^3 * (5/2 - 3/2 (r/R)^2), which matches value and slope at R,
    stays nonnegative, and is even because g is.  The grid must resolve R
    with at least 4 cells.
    """
    if R_bar <= 1.0:
        raise ValueError(f"cutoff ratio must exceed 1, got {R_bar}")
    R = R_bar * params.b
    spacing = length / n
    if R < 4.0 * spacing:
        raise ValueError(
            f"grid too coarse: cutoff R={R} needs >= 4 cells but spacing is {spacing}"
        )
    beta = _beta_of(params.nu)
    u = _wrapped_coords(n, spacing)
    ux, uy = np.meshgrid(u, u, indexing="ij")
    g, r2 = _g_components(ux, uy, params.mu, params.b, beta)
    r = np.sqrt(r2)
    with np.errstate(invalid="ignore", divide="ignore"):
        far = g / (r2 * r)
        cap = g / R ** 3 * (2.5 - 1.5 * (r / R) ** 2)
    J = np.where(r > R, far, cap)
    # the origin has no direction: use the angular mean of g
    g_mean = (params.mu * params.b / (8.0 * math.pi)) * (beta + 1.0)
    J[0, 0] = 2.5 * g_mean / R ** 3
    if np.min(J) < 0.0:
        raise AssertionError("kernel lost positivity; nu validation is broken")
    return Kernel2D(J, spacing, R, params.mu, params.b, params.nu)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass
class LevelSetField2D:
    """Continuous level function on an n x n periodic cell."""

    values: np.ndarray
    length: float
    b: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("level field must be a square 2D array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("level field must be finite")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return self.spacing * np.arange(self.n)

    def copy(self) -> "LevelSetField2D":
        return LevelSetField2D(self.values.copy(), self.length, self.b)

    def crossed_levels(self):
        """Integers j whose level j*b is crossed by the field."""
        lo = int(np.ceil(np.min(self.values) / self.b))
        hi = int(np.floor(np.max(self.values) / self.b))
        return range(lo, hi + 1)


@dataclass
class ObstacleField2D:
    """Periodic obstacle stress samples (may include the applied stress)."""

    values: np.ndarray
    length: float
    period: float = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.period is not None:
            ratio = self.length / self.period
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError("cell must hold an integer number of obstacle periods")


def sinusoidal_obstacles(n: int, length: float, amplitude: float, period: float,
                         tau_ext: float = 0.0) -> ObstacleField2D:
    """Product-of-sines obstacle stress plus a constant applied stress."""
    spacing = length / n
    if abs(period / spacing - round(period / spacing)) > 1e-9:
        raise ValueError("obstacle period must be a multiple of the grid spacing")
    x = spacing * np.arange(n)
    sx = np.sin(2.0 * np.pi * x / period)
    values = amplitude * sx[:, None] * sx[None, :] + tau_ext
    return ObstacleField2D(values, length, period)


def plastic_strain_2d(field: LevelSetField2D, b: float = None) -> np.ndarray:
    """Quantized strain b * floor(gamma_tilde / b)."""
    if b is None:
        b = field.b
    return b * np.floor(field.values / b)


# ---------------------------------------------------------------------------
# forces and velocity
# ---------------------------------------------------------------------------

def force_of_curve(field: LevelSetField2D, j: int, kernel: Kernel2D) -> np.ndarray:
    """Nonlocal stress exerted by curve j on every grid point.

    Half the convolution of the kernel with the ternary sign of
    (gamma_tilde - j*b), the discrete counterpart of the area integral.
    """
    if kernel.n != field.n:
        raise ValueError("kernel and field grids disagree")
    s = np.sign(field.values - j * field.b)
    conv = np.fft.irfft2(kernel.fft * np.fft.rfft2(s), s=field.values.shape)
    return 0.5 * kernel.spacing ** 2 * conv


def normal_velocity(field: LevelSetField2D, obstacles: ObstacleField2D,
                    kernel: Kernel2D, j_range=None, B: float = 1.0) -> np.ndarray:
    """(tau_per + sum_j F_j) / B on every node.

    ``j_range`` defaults to the crossed levels plus one uncrossed level of
    margin on each side; the two margin levels contribute constants of
    opposite sign that cancel, so a symmetric margin does not bias the speed.
    The infinite level sum is only conditionally convergent, which makes the
    window a gauge choice: when comparing two fields (comparison-principle
    checks) pass the same explicit j_range to both, otherwise their speeds
    differ by a constant of half the kernel integral per unpaired level.
    """
    crossed = field.crossed_levels()
    if j_range is None:
        if len(crossed) == 0:
            mid = int(round(float(np.mean(field.values)) / field.b))
            j_range = range(mid - 1, mid + 2)
        else:
            j_range = range(crossed.start - 1, crossed.stop + 1)
    else:
        j_range = range(min(j_range), max(j_range) + 1)
        if len(crossed) > 0 and (crossed.start < j_range.start or crossed.stop > j_range.stop):
            warnings.warn(
                f"level field crosses levels {list(crossed)} outside j_range {list(j_range)}",
                stacklevel=2,
            )
    total = np.zeros_like(field.values)
    for j in j_range:
        total += force_of_curve(field, j, kernel)
    return (obstacles.values + total) / B


def levelset_step(field: LevelSetField2D, velocity: np.ndarray, dt: float,
                  cfl: float = 1.0) -> LevelSetField2D:
    """One explicit upwind step of gamma_t = V |grad gamma| (Godunov flux).

    Aborts when dt exceeds the CFL bound cfl * spacing / (2 max|V|): beyond
    it the update is no longer monotone and the level structure may tear.
    """
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    vmax = float(np.max(np.abs(velocity)))
    h = field.spacing
    if vmax > 0.0 and dt > cfl * h / (2.0 * vmax):
        raise StabilityError(
            f"CFL violation: dt={dt} exceeds {cfl * h / (2.0 * vmax):.3e} for max|V|={vmax:.3g}"
        )
    g = field.values
    dxm = (g - np.roll(g, 1, axis=0)) / h
    dxp = (np.roll(g, -1, axis=0) - g) / h
    dym = (g - np.roll(g, 1, axis=1)) / h
    dyp = (np.roll(g, -1, axis=1) - g) / h
    grad_up = np.sqrt(np.minimum(dxm, 0.0) ** 2 + np.maximum(dxp, 0.0) ** 2
                      + np.minimum(dym, 0.0) ** 2 + np.maximum(dyp, 0.0) ** 2)
    grad_down = np.sqrt(np.maximum(dxm, 0.0) ** 2 + np.minimum(dxp, 0.0) ** 2
                        + np.maximum(dym, 0.0) ** 2 + np.minimum(dyp, 0.0) ** 2)
    out = field.copy()
    out.values = g + dt * (np.maximum(velocity, 0.0) * grad_up
                           + np.minimum(velocity, 0.0) * grad_down)
    return out


# ---------------------------------------------------------------------------
# self-consistent stress of a 2D strain field
# ---------------------------------------------------------------------------

def tau_sc_2d(gamma0: np.ndarray, kernel: Kernel2D) -> np.ndarray:
    """Principal-value convolution of the far-field kernel with a strain field.

    The r^-3 singularity is handled in difference form: the origin cell
    carries minus the sum of all other weights, so a constant field maps to
    exactly zero (this is also the zero-mode convention on the periodic
    cell).  For a y-independent field the result reduces to the 1D
    self-stress up to the controlled domain-truncation error of the kernel
    tail.
    """
    gamma0 = np.asarray(gamma0, dtype=float)
    if gamma0.shape != (kernel.n, kernel.n):
        raise ValueError("field and kernel grids disagree")
    conv = np.fft.irfft2(kernel.farfield_fft * np.fft.rfft2(gamma0), s=gamma0.shape)
    return kernel.spacing ** 2 * conv


# ---------------------------------------------------------------------------
# contour export and grid dumps
# ---------------------------------------------------------------------------

def contour_polylines(field: LevelSetField2D, levels=None):
    """Marching-squares contours as physical-coordinate polylines.

    Returns a list of (level, array of (x, y) vertices).  Contours are traced
    on the stored samples (the periodic wrap is not stitched).
    """
    from skimage import measure
    if levels is None:
        levels = [j * field.b for j in field.crossed_levels()]
    out = []
    for level in levels:
        for seg in measure.find_contours(field.values, level):
            out.append((float(level), seg * field.spacing))
    return out


def save_contours(field: LevelSetField2D, path, levels=None):
    """CSV rows ``level,segment,x,y`` for every contour vertex."""
    polys = contour_polylines(field, levels)
    with open(path, "w") as fh:
        fh.write("level,segment,x,y\n")
        for seg_id, (level, verts) in enumerate(polys):
            for vx, vy in verts:
                fh.write(f"{level!r},{seg_id},{vx!r},{vy!r}\n")


def save_field(field: LevelSetField2D, path, time: float = 0.0):
    """Grid dump: one header line ``nx,ny,spacing,time`` then one row per grid row."""
    with open(path, "w") as fh:
        fh.write(f"{field.n},{field.n},{field.spacing!r},{time!r}\n")
        for row in field.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_field(path, b: float = 1.0):
    with open(path) as fh:
        nx, ny, spacing, time = fh.readline().rstrip("\n").split(",")
        nx, ny = int(nx), int(ny)
        values = np.loadtxt(fh, delimiter=",").reshape(nx, ny)
    return LevelSetField2D(values, length=float(spacing) * nx, b=b), float(time)
