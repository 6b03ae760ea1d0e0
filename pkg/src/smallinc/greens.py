"""Green's kernels for the Helmholtz operator and the unit-disk Dirichlet map.

Free-space kernel: ``G(x, y) = -(i/4) H0^(1)(k|x - y|)``, normalised so that
``(Delta + k^2) G(., y) = delta_y``.  Near the diagonal it behaves like
``(1/2pi) log|x - y|``.

Unit-disk Dirichlet problem: a density ``p`` on the circle with Fourier
coefficients ``p_n`` (``n = -N..N``) has the interior Helmholtz extension

    w(r, theta) = sum_n p_n J_n(k r) / J_n(k) exp(i n theta),

which is the double-layer representation ``int dG0/dnu(y) p(y) ds(y)`` with
``G0`` the Dirichlet Green's function.  Its normal derivative on the circle
carries the multipliers ``k J_n'(k) / J_n(k)``.

Bessel and Hankel values come from ``scipy.special``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special

from .errors import ResonanceError, ValidationError

__all__ = [
    "BoundaryQuadrature",
    "BoundaryTrace",
    "ModeCoefficients",
    "DEFAULT_MODE_CAP",
    "DEFAULT_EIGENVALUE_GUARD",
    "check_wavenumber",
    "resonance_margin",
    "free_green",
    "free_green_grad_x",
    "free_green_normal_x",
    "free_green_normal_y",
    "free_green_mixed",
    "disk_dirichlet_solution",
    "disk_dirichlet_normal_trace",
    "disk_dirichlet_gradient",
    "dirichlet_to_neumann_multipliers",
]

DEFAULT_MODE_CAP = 64
DEFAULT_EIGENVALUE_GUARD = 1e-3


# -- discretisation ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryQuadrature:
    """Composite trapezoid rule on ``n`` equispaced nodes of the unit circle."""

    n: int
    aperture_mask: np.ndarray

    @classmethod
    def on_circle(cls, n: int, geometry=None) -> "BoundaryQuadrature":
        if n < 8:
            raise ValidationError("need at least 8 boundary nodes")
        theta = 2 * np.pi * np.arange(n) / n
        if geometry is None:
            mask = np.ones(n, dtype=bool)
        else:
            mask = geometry.in_aperture(theta)
        mask.setflags(write=False)
        return cls(n, mask)

    @cached_property
    def nodes(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n) / self.n

    @cached_property
    def points(self) -> np.ndarray:
        return np.column_stack([np.cos(self.nodes), np.sin(self.nodes)])

    @property
    def normals(self) -> np.ndarray:
        return self.points

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 2 * np.pi / self.n)

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.n

    def integrate(self, values, region: str = "all") -> complex:
        """Integrate nodal values over the whole circle or over the aperture."""
        values = np.asarray(values)
        if region == "all":
            return np.sum(values * self.weights)
        if region == "aperture":
            return np.sum(values[self.aperture_mask] * self.weights[self.aperture_mask])
        raise ValueError(region)


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Complex samples of a function on the boundary quadrature nodes."""

    values: np.ndarray
    quadrature: BoundaryQuadrature

    def __post_init__(self):
        if np.shape(self.values) != (self.quadrature.n,):
            raise ValidationError("trace length does not match the quadrature")

    def restrict(self) -> np.ndarray:
        """Values on the aperture nodes."""
        return self.values[self.quadrature.aperture_mask]

    def masked(self) -> "BoundaryTrace":
        """Copy with the values outside the aperture set to zero."""
        return BoundaryTrace(np.where(self.quadrature.aperture_mask, self.values, 0), self.quadrature)

    def __add__(self, other: "BoundaryTrace") -> "BoundaryTrace":
        if other.quadrature.n != self.quadrature.n:
            raise ValidationError("quadrature mismatch")
        return BoundaryTrace(self.values + other.values, self.quadrature)

    def __mul__(self, s) -> "BoundaryTrace":
        return BoundaryTrace(self.values * s, self.quadrature)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2 * self.quadrature.weights)))


@dataclass(frozen=True, eq=False)
class ModeCoefficients:
    """Fourier coefficients ``c_n``, ``n = -N..N``, of a function on the circle."""

    coefficients: np.ndarray

    @property
    def cap(self) -> int:
        return (len(self.coefficients) - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.cap, self.cap + 1)

    @classmethod
    def from_samples(cls, values, cap: int = DEFAULT_MODE_CAP) -> "ModeCoefficients":
        """Discrete Fourier coefficients of equispaced samples (nodes ``2 pi j / n``)."""
        values = np.asarray(values)
        n = values.shape[0]
        if 2 * cap + 1 > n:
            raise ValidationError(f"mode cap {cap} needs at least {2 * cap + 1} samples")
        full = np.fft.fft(values, axis=0) / n
        idx = np.arange(-cap, cap + 1) % n
        return cls(full[idx])

    def to_samples(self, n: int) -> np.ndarray:
        theta = 2 * np.pi * np.arange(n) / n
        return np.exp(1j * np.outer(theta, self.orders)) @ self.coefficients

    def energy(self) -> float:
        """``(1/2pi) int |f|^2`` by Parseval."""
        return float(np.sum(np.abs(self.coefficients) ** 2))


# -- resonance guard -----------------------------------------------------------


def resonance_margin(k: float, mode_cap: int = DEFAULT_MODE_CAP) -> tuple[float, int]:
    """Smallest normalised ``|J_n(k)|`` over the oscillatory orders ``n <= k``.

    ``J_n`` has no positive zeros below ``n``, so only orders up to
    ``min(k, mode_cap)`` can put ``k^2`` on a Dirichlet eigenvalue.  Values are
    divided by the envelope ``sqrt(J_n^2 + Y_n^2)`` so the margin does not
    shrink with ``k``.  Returns ``(margin, worst order)``.
    """
    orders = np.arange(0, int(min(np.floor(k), mode_cap)) + 1)
    j = special.jv(orders, k)
    env = np.hypot(j, special.yv(orders, k))
    ratio = np.abs(j) / env
    i = int(np.argmin(ratio))
    return float(ratio[i]), int(orders[i])


def check_wavenumber(k: float, guard: float = DEFAULT_EIGENVALUE_GUARD, mode_cap: int = DEFAULT_MODE_CAP):
    if not np.isfinite(k) or k <= 0:
        raise ValidationError("wavenumber must be positive")
    margin, order = resonance_margin(k, mode_cap)
    if margin < guard:
        raise ResonanceError(
            f"k={k:.6g} is within {margin:.2e} of a Dirichlet eigenvalue (order {order})"
        )


# -- free-space kernel ---------------------------------------------------------


def _separation(x, y):
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.hypot(diff[..., 0], diff[..., 1])
    if np.any(r == 0):
        raise ValidationError("coincident source and target points")
    return diff, r


def free_green(x, y, k: float):
    """``-(i/4) H0^(1)(k |x - y|)``; broadcasts over leading axes."""
    _, r = _separation(x, y)
    return -0.25j * special.hankel1(0, k * r)


def free_green_grad_x(x, y, k: float):
    """Gradient of ``G`` in its first argument, shape ``(..., 2)``."""
    diff, r = _separation(x, y)
    g = 0.25j * k * special.hankel1(1, k * r) / r
    return g[..., None] * diff


def free_green_normal_x(x, normal_x, y, k: float):
    """``dG(x, y)/dnu(x)``."""
    return np.sum(free_green_grad_x(x, y, k) * np.asarray(normal_x), axis=-1)


def free_green_normal_y(x, y, normal, k: float):
    """``dG(x, y)/dnu(y)``: derivative in the second argument along ``normal``."""
    return -np.sum(free_green_grad_x(x, y, k) * np.asarray(normal), axis=-1)


def free_green_mixed(x, normal_x, z, k: float):
    """``grad_z [dG(x, z)/dnu(x)]``, shape ``(..., 2)``.

    With ``d = x - z``, ``rho = |d|`` and ``grad_x G = g(rho) d``:
    ``grad_z (g d.nu) = -g nu - g'(rho) (d.nu) d / rho``.
    """
    diff, rho = _separation(x, z)
    nu = np.broadcast_to(np.asarray(normal_x, dtype=float), diff.shape)
    h0 = special.hankel1(0, k * rho)
    h1 = special.hankel1(1, k * rho)
    g = 0.25j * k * h1 / rho
    dg = 0.25j * k * (k * h0 / rho - 2 * h1 / rho**2)
    dn = np.sum(diff * nu, axis=-1)
    return -g[..., None] * nu - (dg * dn / rho)[..., None] * diff


# -- unit-disk Dirichlet map ---------------------------------------------------


def dirichlet_to_neumann_multipliers(k: float, orders) -> np.ndarray:
    """``k J_n'(k) / J_n(k)`` for the given orders."""
    orders = np.abs(np.asarray(orders))
    return k * special.jvp(orders, k) / special.jv(orders, k)


def disk_dirichlet_solution(
    density: ModeCoefficients,
    x,
    k: float,
    cap: int | None = None,
    guard: float = DEFAULT_EIGENVALUE_GUARD,
):
    """Interior Helmholtz field with Dirichlet data ``density`` at points ``x``.

    ``x`` has shape ``(..., 2)`` with ``|x| < 1``.  Only orders ``|n| <= cap``
    are summed (default: all stored orders).
    """
    check_wavenumber(k, guard)
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    if np.any(r >= 1):
        raise ValidationError("evaluation points must lie strictly inside the unit disk")
    theta = np.arctan2(x[..., 1], x[..., 0])
    basis = disk_mode_matrix(r.ravel(), theta.ravel(), k, density.cap if cap is None else cap)
    coef = _truncate(density, cap)
    return (basis @ coef).reshape(r.shape)


def disk_mode_matrix(r, theta, k: float, cap: int) -> np.ndarray:
    """Matrix with entries ``J_n(k r_i) / J_n(k) exp(i n theta_i)``, ``n = -cap..cap``."""
    orders = np.arange(-cap, cap + 1)
    an = np.abs(orders)
    radial = special.jv(an[None, :], k * np.asarray(r)[:, None]) / special.jv(an, k)[None, :]
    return radial * np.exp(1j * np.outer(theta, orders))


def disk_dirichlet_gradient(
    density: ModeCoefficients,
    x,
    k: float,
    cap: int | None = None,
    guard: float = DEFAULT_EIGENVALUE_GUARD,
):
    """Cartesian gradient of ``disk_dirichlet_solution`` at points ``x``, shape ``(..., 2)``."""
    check_wavenumber(k, guard)
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1]).ravel()
    if np.any(r >= 1):
        raise ValidationError("evaluation points must lie strictly inside the unit disk")
    theta = np.arctan2(x[..., 1], x[..., 0]).ravel()
    cap = density.cap if cap is None else cap
    coef = _truncate(density, cap)
    orders = np.arange(-cap, cap + 1)
    an = np.abs(orders)
    jk = special.jv(an, k)[None, :]
    phase = np.exp(1j * np.outer(theta, orders))
    d_r = (k * special.jvp(an[None, :], k * r[:, None]) / jk * phase) @ coef
    # J_n(kr)/r stays finite at r = 0 (only |n| = 1 contributes, with limit k/2)
    rr = np.where(r == 0, 1.0, r)[:, None]
    j_over_r = np.where(r[:, None] == 0, np.where(an == 1, k / 2, 0.0), special.jv(an[None, :], k * rr) / rr)
    d_t = (1j * orders * j_over_r / jk * phase) @ coef
    c, s = np.cos(theta), np.sin(theta)
    gx = c * d_r - s * d_t
    gy = s * d_r + c * d_t
    return np.stack([gx, gy], axis=-1).reshape(x.shape[:-1] + (2,))


def _truncate(density: ModeCoefficients, cap):
    if cap is None or cap >= density.cap:
        if cap is not None and cap > density.cap:
            pad = cap - density.cap
            return np.pad(density.coefficients, (pad, pad))
        return density.coefficients
    lo = density.cap - cap
    return density.coefficients[lo : lo + 2 * cap + 1]


def disk_dirichlet_normal_trace(
    density: ModeCoefficients,
    k: float,
    quadrature: BoundaryQuadrature,
    cap: int | None = None,
    guard: float = DEFAULT_EIGENVALUE_GUARD,
) -> BoundaryTrace:
    """``dw/dnu`` on the boundary nodes for the field of ``disk_dirichlet_solution``."""
    check_wavenumber(k, guard)
    cap = density.cap if cap is None else cap
    coef = _truncate(density, cap)
    orders = np.arange(-cap, cap + 1)
    values = ModeCoefficients(coef * dirichlet_to_neumann_multipliers(k, orders)).to_samples(quadrature.n)
    return BoundaryTrace(values, quadrature)
