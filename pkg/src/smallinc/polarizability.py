"""Polarizability tensors of small inclusions.

The tensor of a reference shape ``B`` at permeability contrast ``c = mu_j / mu0``
is

    M_ll' = |B| delta_ll' + (c - 1) * int_{dB} y_l d(phi_l')/dnu (interior side) ds

where ``phi_l'`` is harmonic inside and outside ``B``, continuous across the
boundary, decays at infinity and satisfies the flux condition

    (1/mu0) d(phi)/dnu|_ext - (1/mu_j) d(phi)/dnu|_int = -(1/mu_j) nu . e_l'.

For disks (and spheres) the tensor is a closed-form multiple of the identity.
For other smooth 2-D shapes ``phi`` is written as a harmonic single-layer
potential ``S[psi]`` with zero-mean density and the flux condition becomes a
second-kind equation on the boundary, discretised with the trapezoid rule.

Sign conventions: the single layer uses ``(1/2pi) log|x - y|``, whose normal
derivative has the limits ``(+1/2 + K*)psi`` from outside and
``(-1/2 + K*)psi`` from inside.  The disk oracle ``ptensor_disk`` pins these
signs (interior field ``mu0 / (mu0 + mu_j)`` times the unit field).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NumericalError, ValidationError

__all__ = [
    "PolarizabilityTensor",
    "ShapeCurve",
    "Disk",
    "Ellipse",
    "FourierShape",
    "ptensor_disk",
    "ptensor_nystrom",
    "ptensor",
    "load_fourier_shape",
]


@dataclass(frozen=True)
class PolarizabilityTensor:
    entries: np.ndarray
    contrast: float
    shape_area: float

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.entries, self.entries.T, rtol=1e-10, atol=0.0))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.entries + self.entries.T))

    def scalar(self) -> float:
        """Scalar multiplier ``m`` when the tensor is ``m * Identity``."""
        d = self.entries.shape[0]
        m = float(np.trace(self.entries)) / d
        off = self.entries - m * np.eye(d)
        if np.max(np.abs(off)) > 1e-8 * abs(m):
            raise ValueError("tensor is not a multiple of the identity")
        return m


@dataclass(frozen=True)
class ShapeCurve:
    """Boundary of a reference shape sampled at equispaced parameter nodes.

    ``t`` runs over ``[0, 2pi)``; ``points``, ``tangent`` (= dx/dt) and
    ``normals`` have shape ``(n, 2)``; ``speed`` is ``|dx/dt|`` and ``curvature``
    is positive on convex parts of a counterclockwise curve.
    """

    t: np.ndarray
    points: np.ndarray
    tangent: np.ndarray
    normals: np.ndarray
    speed: np.ndarray
    curvature: np.ndarray
    area: float

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def weights(self) -> np.ndarray:
        """Arc-length trapezoid weights."""
        return self.speed * (2 * np.pi / self.n)

    @classmethod
    def from_functions(
        cls,
        x: Callable[[np.ndarray], np.ndarray],
        dx: Callable[[np.ndarray], np.ndarray],
        ddx: Callable[[np.ndarray], np.ndarray],
        n: int,
    ) -> "ShapeCurve":
        t = 2 * np.pi * np.arange(n) / n
        pts = np.asarray(x(t), dtype=float).T
        d1 = np.asarray(dx(t), dtype=float).T
        d2 = np.asarray(ddx(t), dtype=float).T
        speed = np.hypot(d1[:, 0], d1[:, 1])
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        area = 0.5 * np.sum(pts[:, 0] * d1[:, 1] - pts[:, 1] * d1[:, 0]) * 2 * np.pi / n
        if area <= 0:
            raise ValidationError("shape curve must be positively oriented")
        normals = np.column_stack([d1[:, 1], -d1[:, 0]]) / speed[:, None]
        return cls(t, pts, d1, normals, speed, cross / speed**3, float(area))

    def contains_origin(self) -> bool:
        # winding number of the sampled polygon about 0
        ang = np.unwrap(np.arctan2(self.points[:, 1], self.points[:, 0]))
        total = ang[-1] - ang[0] + _wrap(ang[0] - ang[-1])
        return abs(total) > np.pi

    def is_simple(self) -> bool:
        # star-shapedness about the origin is sufficient for our descriptors
        ang = np.unwrap(np.arctan2(self.points[:, 1], self.points[:, 0]))
        return bool(np.all(np.diff(ang) > 0))


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


# -- shape descriptors ---------------------------------------------------------


@dataclass(frozen=True)
class Disk:
    """Disk of the given radius centred at the origin (default: unit disk)."""

    radius: float = 1.0

    @property
    def area(self) -> float:
        return np.pi * self.radius**2

    def curve(self, n: int) -> ShapeCurve:
        r = self.radius
        return ShapeCurve.from_functions(
            lambda t: (r * np.cos(t), r * np.sin(t)),
            lambda t: (-r * np.sin(t), r * np.cos(t)),
            lambda t: (-r * np.cos(t), -r * np.sin(t)),
            n,
        )

    def to_dict(self) -> dict:
        return {"type": "disk", "radius": self.radius}


@dataclass(frozen=True)
class Ellipse:
    """Ellipse with semi-axes ``a`` (along the rotated x axis) and ``b``."""

    a: float
    b: float
    angle: float = 0.0

    @property
    def area(self) -> float:
        return np.pi * self.a * self.b

    def curve(self, n: int) -> ShapeCurve:
        c, s = np.cos(self.angle), np.sin(self.angle)
        a, b = self.a, self.b

        def rot(u, v):
            return (c * u - s * v, s * u + c * v)

        return ShapeCurve.from_functions(
            lambda t: rot(a * np.cos(t), b * np.sin(t)),
            lambda t: rot(-a * np.sin(t), b * np.cos(t)),
            lambda t: rot(-a * np.cos(t), -b * np.sin(t)),
            n,
        )

    def to_dict(self) -> dict:
        return {"type": "ellipse", "a": self.a, "b": self.b, "angle": self.angle}


@dataclass(frozen=True)
class FourierShape:
    """Star-shaped curve ``r(t) = a0 + sum_n (a_n cos nt + b_n sin nt)``.

    ``cos_coeffs[0]`` is ``a0``; ``sin_coeffs[n-1]`` is ``b_n``.
    """

    cos_coeffs: tuple[float, ...]
    sin_coeffs: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "cos_coeffs", tuple(float(c) for c in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(c) for c in self.sin_coeffs))
        t = np.linspace(0, 2 * np.pi, 721)
        if np.min(self._radius(t)[0]) <= 0:
            raise ValidationError("Fourier descriptor radius must stay positive")

    def _radius(self, t):
        r = np.zeros_like(t)
        dr = np.zeros_like(t)
        ddr = np.zeros_like(t)
        for n, a in enumerate(self.cos_coeffs):
            r += a * np.cos(n * t)
            dr -= n * a * np.sin(n * t)
            ddr -= n * n * a * np.cos(n * t)
        for n, b in enumerate(self.sin_coeffs, start=1):
            r += b * np.sin(n * t)
            dr += n * b * np.cos(n * t)
            ddr -= n * n * b * np.sin(n * t)
        return r, dr, ddr

    @property
    def area(self) -> float:
        a = np.array(self.cos_coeffs)
        b = np.array(self.sin_coeffs)
        # (1/2) int r^2 dt
        return float(np.pi * (a[0] ** 2 + 0.5 * np.sum(a[1:] ** 2) + 0.5 * np.sum(b**2)))

    def curve(self, n: int) -> ShapeCurve:
        def x(t):
            r, _, _ = self._radius(t)
            return (r * np.cos(t), r * np.sin(t))

        def dx(t):
            r, dr, _ = self._radius(t)
            return (dr * np.cos(t) - r * np.sin(t), dr * np.sin(t) + r * np.cos(t))

        def ddx(t):
            r, dr, ddr = self._radius(t)
            return (
                ddr * np.cos(t) - 2 * dr * np.sin(t) - r * np.cos(t),
                ddr * np.sin(t) + 2 * dr * np.cos(t) - r * np.sin(t),
            )

        return ShapeCurve.from_functions(x, dx, ddx, n)

    def to_dict(self) -> dict:
        return {"type": "fourier", "cos": list(self.cos_coeffs), "sin": list(self.sin_coeffs)}


def shape_from_dict(d: dict):
    kind = d.get("type", "disk")
    if kind == "disk":
        return Disk(float(d.get("radius", 1.0)))
    if kind == "ellipse":
        return Ellipse(float(d["a"]), float(d["b"]), float(d.get("angle", 0.0)))
    if kind == "fourier":
        return FourierShape(tuple(d["cos"]), tuple(d.get("sin", ())))
    raise ValidationError(f"unknown shape type {kind!r}")


def load_fourier_shape(path: str | Path) -> FourierShape:
    """Read a star-shaped curve from a text file of Fourier descriptors.

    One descriptor per non-comment line: ``n a_n b_n`` (``b_0`` is ignored).
    """
    rows = np.loadtxt(path, comments="#", ndmin=2)
    order = int(rows[:, 0].max())
    a = np.zeros(order + 1)
    b = np.zeros(order)
    for n, an, bn in rows:
        n = int(n)
        a[n] = an
        if n > 0:
            b[n - 1] = bn
    return FourierShape(tuple(a), tuple(b))


# -- tensors -------------------------------------------------------------------


def ptensor_disk(mu0: float, muj: float, area: float, d: int = 2) -> PolarizabilityTensor:
    """Closed-form tensor of a disk (d=2) or ball (d=3) of the given measure."""
    if mu0 <= 0 or muj <= 0 or area <= 0:
        raise ValidationError("mu0, muj and area must be positive")
    if d == 2:
        factor = 2 * muj / (mu0 + muj)
    elif d == 3:
        factor = 3 * muj / (mu0 + 2 * muj)
    else:
        raise ValidationError("d must be 2 or 3")
    return PolarizabilityTensor(factor * area * np.eye(d), muj / mu0, float(area))


def _adjoint_double_layer(curve: ShapeCurve) -> np.ndarray:
    """Nystrom matrix of K*[psi](x) = int (1/2pi) (x-y).nu_x / |x-y|^2 psi(y) ds(y)."""
    x = curve.points
    diff = x[:, None, :] - x[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(r2, 1.0)
    kern = np.einsum("ijk,ik->ij", diff, curve.normals) / r2 / (2 * np.pi)
    np.fill_diagonal(kern, curve.curvature / (4 * np.pi))
    return kern * curve.weights[None, :]


def ptensor_nystrom(
    shape,
    mu0: float,
    muj: float,
    n_nodes: int = 256,
    check_convergence: bool = False,
    tol: float = 1e-6,
) -> PolarizabilityTensor:
    """Polarizability tensor of a smooth 2-D shape by a single-layer solve.

    ``shape`` is a descriptor with ``curve(n)`` (``Disk``, ``Ellipse``,
    ``FourierShape``) or an already sampled ``ShapeCurve``.  With
    ``check_convergence`` the solve is repeated on ``2 * n_nodes`` nodes and a
    ``NumericalError`` is raised when the relative change exceeds ``tol``.
    """
    if mu0 <= 0 or muj <= 0:
        raise ValidationError("contrasts must be positive")
    if isinstance(shape, ShapeCurve):
        curve = shape
    else:
        if n_nodes < 32 or n_nodes % 2:
            raise ValidationError("n_nodes must be even and at least 32")
        curve = shape.curve(n_nodes)

    c = muj / mu0
    n = curve.n
    kstar = _adjoint_double_layer(curve)
    w = curve.weights

    # [(c+1)/2 I + (c-1) K*] psi + beta = -nu_l',  sum w psi = 0
    system = np.zeros((n + 1, n + 1))
    system[:n, :n] = 0.5 * (c + 1) * np.eye(n) + (c - 1) * kstar
    system[:n, n] = 1.0
    system[n, :n] = w
    rhs = np.zeros((n + 1, 2))
    rhs[:n] = -curve.normals
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"single-layer system is singular (cond={cond:.2e})")
    psi = np.linalg.solve(system, rhs)[:n]

    flux_int = -0.5 * psi + kstar @ psi
    moments = curve.points.T @ (flux_int * w[:, None])
    entries = curve.area * np.eye(2) + (c - 1) * moments
    tensor = PolarizabilityTensor(entries, c, curve.area)

    if check_convergence and not isinstance(shape, ShapeCurve):
        fine = ptensor_nystrom(shape, mu0, muj, 2 * n_nodes)
        change = np.linalg.norm(fine.entries - entries) / np.linalg.norm(fine.entries)
        if change > tol:
            raise NumericalError(f"polarizability not converged at {n_nodes} nodes (change {change:.1e})")
    return tensor


def ptensor(shape, mu0: float, muj: float, n_nodes: int = 256) -> PolarizabilityTensor:
    """Tensor of ``shape``: closed form for disks, Nystrom otherwise."""
    if isinstance(shape, Disk):
        return ptensor_disk(mu0, muj, shape.area)
    return ptensor_nystrom(shape, mu0, muj, n_nodes)
