"""Aperture-limited test functions.

A probe is a Helmholtz solution ``w`` in the unit disk whose Dirichlet trace
vanishes outside the aperture and which approximates the plane wave
``exp(i (eta - gamma eta_perp) . x)`` on the control disk.  It is produced
from a density ``p`` on the aperture through the disk Dirichlet map

    w(x) = sum_n p_n J_n(k|x|)/J_n(k) exp(i n theta)

by Tikhonov-regularised least squares in ``L2(control disk)``.  Densities are
expanded in a tapered Fourier basis on each aperture arc, so every basis
function and its derivative vanish at the arc endpoints and the zero extension
to the rest of the circle stays smooth.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import ValidationError
from .greens import (
    DEFAULT_MODE_CAP,
    BoundaryQuadrature,
    BoundaryTrace,
    ModeCoefficients,
    check_wavenumber,
    dirichlet_to_neumann_multipliers,
    disk_mode_matrix,
)

__all__ = [
    "ProbeFrequency",
    "ProbeFunction",
    "ProbeOperator",
    "make_frequency",
    "build_probe_operator",
    "build_probe",
    "oriented_probe",
    "exact_probe",
    "probe_quality_scan",
    "discrepancy_lambda",
    "plane_wave",
    "write_scan_csv",
    "write_density_csv",
]


@dataclass(frozen=True)
class ProbeFrequency:
    eta: np.ndarray
    eta_perp: np.ndarray
    gamma: complex
    k: float

    @property
    def norm(self) -> float:
        return float(np.hypot(*self.eta))

    def direction(self, sign: int) -> np.ndarray:
        """Complex wave vector ``eta + sign * gamma * eta_perp``."""
        return self.eta + sign * self.gamma * self.eta_perp

    @property
    def probe_direction(self) -> np.ndarray:
        return self.direction(-1)

    @property
    def field_direction(self) -> np.ndarray:
        return self.direction(+1)


def make_frequency(eta, k: float, toward=None) -> ProbeFrequency:
    """Frequency record for ``eta``.

    ``eta_perp`` is ``eta`` rotated by +pi/2.  When ``toward`` is given the
    sign of ``eta_perp`` is flipped, if needed, so that ``eta_perp . toward >= 0``.
    The evanescent probe target then grows towards ``toward`` (the aperture),
    which is where it is cheap to synthesise.
    """
    eta = np.asarray(eta, dtype=float).reshape(2)
    n = np.hypot(*eta)
    perp = np.array([0.0, 1.0]) if n == 0 else np.array([-eta[1], eta[0]]) / n
    if toward is not None and perp @ np.asarray(toward, dtype=float) < -1e-12:
        perp = -perp
    gamma = complex(np.sqrt(complex(k * k - n * n)))
    if gamma.imag == 0:
        gamma = complex(abs(gamma.real), 0.0)
    return ProbeFrequency(eta, perp, gamma, float(k))


def plane_wave(direction, x):
    """``exp(i a.x)`` and its gradient for a complex wave vector ``a``."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(direction)
    val = np.exp(1j * (x @ a))
    return val, 1j * val[..., None] * a


# -- operator ------------------------------------------------------------------


def _taper(s):
    return np.sin(np.pi * s) ** 2


def aperture_basis(geometry, theta, n_basis: int) -> np.ndarray:
    """Basis densities at angles ``theta``, shape ``(len(theta), n_basis)``.

    Full aperture: the Fourier modes ``exp(i n theta)``, ``|n| <= n_basis // 2``.
    Otherwise each arc receives ``n_basis // n_arcs`` functions
    ``sin^2(pi s) exp(2 pi i m s)`` in the arc coordinate ``s``.
    """
    theta = np.asarray(theta, dtype=float)
    if geometry.is_full:
        half = n_basis // 2
        return np.exp(1j * np.outer(theta, np.arange(-half, n_basis - half)))
    arcs = len(geometry.aperture)
    per_arc = n_basis // arcs
    if per_arc < 1:
        raise ValidationError("fewer basis functions than aperture arcs")
    idx, s = geometry.arc_coordinate(theta)
    cols = []
    for a in range(arcs):
        half = per_arc // 2
        m = np.arange(-half, per_arc - half)
        block = _taper(s)[:, None] * np.exp(2j * np.pi * np.outer(s, m))
        cols.append(np.where((idx == a)[:, None], block, 0.0))
    return np.hstack(cols)


@dataclass(frozen=True, eq=False)
class ProbeOperator:
    """Discretised density-to-field map on the control disk.

    ``matrix`` rows are scaled by the square roots of the control-grid area
    weights so that Euclidean norms approximate ``L2(control disk)`` norms.
    """

    geometry: object
    k: float
    control_radius: float
    quadrature: BoundaryQuadrature
    grid_points: np.ndarray
    grid_weights: np.ndarray
    basis_samples: np.ndarray
    basis_modes: np.ndarray
    mode_cap: int
    matrix: np.ndarray
    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray

    @property
    def sigma_max(self) -> float:
        return float(self.s[0])

    def default_lambda(self) -> float:
        return 1e-8 * self.sigma_max

    def target(self, freq: ProbeFrequency) -> np.ndarray:
        """Weighted samples of the plane wave the probe should reproduce."""
        val, _ = plane_wave(freq.probe_direction, self.grid_points)
        return np.sqrt(self.grid_weights) * val

    def field(self, coeffs) -> np.ndarray:
        """Unweighted field values on the control grid for basis coefficients."""
        return (self.matrix @ coeffs) / np.sqrt(self.grid_weights)

    def density_modes(self, coeffs) -> ModeCoefficients:
        return ModeCoefficients(self.basis_modes @ coeffs)

    def solve(self, rhs, lam: float) -> np.ndarray:
        filt = self.s / (self.s**2 + lam**2)
        return self.vh.conj().T @ (filt * (self.u.conj().T @ rhs))


def control_grid(radius: float, n_radial: int, n_angular: int):
    """Polar tensor grid: Gauss-Legendre in r (weight r dr), trapezoid in angle."""
    xr, wr = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * radius * (xr + 1)
    wr = 0.5 * radius * wr * r
    th = 2 * np.pi * np.arange(n_angular) / n_angular
    rr, tt = np.meshgrid(r, th, indexing="ij")
    pts = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
    w = np.outer(wr, np.full(n_angular, 2 * np.pi / n_angular)).ravel()
    return pts, w


def build_probe_operator(
    geometry,
    control_radius: float,
    k: float,
    n_basis: int = 65,
    n_grid: tuple[int, int] = (24, 64),
    n_nodes: int = 256,
    mode_cap: int = DEFAULT_MODE_CAP,
) -> ProbeOperator:
    check_wavenumber(k)
    if not 0 < control_radius < 1:
        raise ValidationError("control radius must lie in (0, 1)")
    if geometry.aperture_length <= 0:
        raise ValidationError("degenerate aperture")
    quad = BoundaryQuadrature.on_circle(n_nodes, geometry)
    samples = aperture_basis(geometry, quad.nodes, n_basis)
    modes = ModeCoefficients.from_samples(samples, mode_cap).coefficients
    pts, w = control_grid(control_radius, *n_grid)
    r = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    field = disk_mode_matrix(r, theta, k, mode_cap) @ modes
    a = np.sqrt(w)[:, None] * field
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return ProbeOperator(geometry, float(k), float(control_radius), quad, pts, w, samples, modes, mode_cap, a, u, s, vh)


# -- probes --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProbeFunction:
    """A built probe.  ``residual`` is the achieved ``L2(control disk)`` misfit
    and ``relative_residual`` divides it by the norm of the target."""

    density: np.ndarray
    trace: BoundaryTrace
    normal_trace: BoundaryTrace
    residual: float
    target_norm: float
    target: ProbeFrequency
    lam: float

    @property
    def relative_residual(self) -> float:
        return self.residual / self.target_norm if self.target_norm else 0.0


def build_probe(op: ProbeOperator, freq: ProbeFrequency, lam: float | None = None) -> ProbeFunction:
    if not np.isclose(freq.k, op.k, rtol=1e-12):
        raise ValidationError("probe operator and frequency use different wavenumbers")
    lam = op.default_lambda() if lam is None else float(lam)
    t = op.target(freq)
    coeffs = op.solve(t, lam)
    residual = float(np.linalg.norm(op.matrix @ coeffs - t))
    trace = BoundaryTrace(op.basis_samples @ coeffs, op.quadrature)
    modes = op.basis_modes @ coeffs
    mult = dirichlet_to_neumann_multipliers(op.k, np.arange(-op.mode_cap, op.mode_cap + 1))
    normal = ModeCoefficients(modes * mult).to_samples(op.quadrature.n)
    return ProbeFunction(coeffs, trace, BoundaryTrace(normal, op.quadrature), residual, float(np.linalg.norm(t)), freq, lam)


def oriented_probe(
    op: ProbeOperator, eta, lam: float | None = None, orientation: str = "best"
) -> ProbeFunction:
    """Build a probe for ``eta`` with a chosen sign of ``eta_perp``.

    Both signs give the same product ``w E_0 = exp(2i eta . x)``, so the choice
    is free.  ``"rotate"`` keeps the +pi/2 rotation, ``"aperture"`` points
    ``eta_perp`` at the aperture and ``"best"`` builds both probes and keeps
    the one with the smaller residual (ties go to the rotation).
    """
    if orientation == "rotate":
        return build_probe(op, make_frequency(eta, op.k), lam)
    if orientation == "aperture":
        return build_probe(op, make_frequency(eta, op.k, op.geometry.aperture_direction), lam)
    if orientation != "best":
        raise ValidationError(f"unknown orientation {orientation!r}")
    f = make_frequency(eta, op.k)
    first = build_probe(op, f, lam)
    second = build_probe(op, ProbeFrequency(f.eta, -f.eta_perp, f.gamma, f.k), lam)
    return second if second.residual < first.residual else first


def exact_probe(freq: ProbeFrequency, quadrature: BoundaryQuadrature) -> ProbeFunction:
    """The target plane wave itself; admissible only when the aperture is the full circle."""
    if not np.all(quadrature.aperture_mask):
        raise ValidationError("the exact plane-wave probe needs a full aperture")
    val, grad = plane_wave(freq.probe_direction, quadrature.points)
    normal = np.sum(grad * quadrature.normals, axis=-1)
    return ProbeFunction(
        np.array([]),
        BoundaryTrace(val, quadrature),
        BoundaryTrace(normal, quadrature),
        0.0,
        1.0,
        freq,
        0.0,
    )


def discrepancy_lambda(op: ProbeOperator, freq: ProbeFrequency, noise_level: float, tau: float = 1.0) -> float:
    """Regularisation parameter whose residual equals ``tau * noise_level * ||t||``.

    Falls back to the default parameter when even that residual is above the
    target (the discrepancy cannot be met).
    """
    t = op.target(freq)
    goal = tau * noise_level * np.linalg.norm(t)
    beta = op.u.conj().T @ t
    outside = np.linalg.norm(t - op.u @ beta) ** 2

    def misfit(log_lam):
        lam2 = np.exp(2 * log_lam)
        f = lam2 / (op.s**2 + lam2)
        return np.sqrt(outside + np.sum(np.abs(f * beta) ** 2)) - goal

    lo, hi = np.log(op.default_lambda()), np.log(op.sigma_max * 1e3)
    if misfit(lo) >= 0:
        return op.default_lambda()
    if misfit(hi) <= 0:
        return float(np.exp(hi))
    return float(np.exp(optimize.brentq(misfit, lo, hi, xtol=1e-6)))


def probe_quality_scan(
    op: ProbeOperator, eta_list, lam: float | None = None, orientation: str = "best"
) -> list[tuple[float, float]]:
    """``(|eta|, relative residual)`` for each frequency in ``eta_list``."""
    rows = []
    for eta in eta_list:
        probe = oriented_probe(op, eta, lam, orientation)
        rows.append((float(np.hypot(*np.asarray(eta, dtype=float))), probe.relative_residual))
    return rows


def write_scan_csv(rows, path: str | Path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["eta_norm", "relative_residual"])
        for norm, res in rows:
            out.writerow([repr(float(norm)), repr(float(res))])


def write_density_csv(probe: ProbeFunction, path: str | Path):
    """Nodal density values of a probe (angle, real, imaginary)."""
    q = probe.trace.quadrature
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["theta", "real", "imag"])
        for th, v in zip(q.nodes, probe.trace.values):
            out.writerow([repr(float(th)), repr(float(v.real)), repr(float(v.imag))])
