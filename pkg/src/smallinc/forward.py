"""Synthetic boundary data.

Two independent routes produce the perturbation ``D = dE_alpha/dnu - dE_0/dnu``
of the Neumann trace on the unit circle:

* ``solve_trace_perturbation`` keeps the leading ``alpha^2`` term of the
  small-inclusion asymptotics and solves

      D(x) + 2 int D(y) dG(x, y)/dnu(x) ds(y) = RHS(x)

  with a Nystrom discretisation.  The kernel has a logarithmic factor in its
  derivatives, handled with Kress's product quadrature so the solve converges
  spectrally.  ``RHS`` collects a dipole term per inclusion (mixed second
  derivative of ``G`` against ``M grad E_0``) and a monopole term
  (``dG/dnu(x)`` times ``|B| E_0``).
* ``exact_concentric_disk`` matches Bessel modes across the interface of one
  centred disk inclusion; no asymptotics are involved.

The background field ``E_0`` is the prescribed plane wave itself, which solves
the Helmholtz equation in the whole plane.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy import special

from .errors import NumericalError, ValidationError
from .greens import (
    DEFAULT_MODE_CAP,
    BoundaryQuadrature,
    BoundaryTrace,
    ModeCoefficients,
    check_wavenumber,
    free_green_mixed,
    free_green_normal_x,
)
from .polarizability import ptensor
from .probes import ProbeFrequency, make_frequency, plane_wave

__all__ = [
    "BoundaryTrace",
    "ProbeBC",
    "NystromSolver",
    "trace_rhs",
    "solve_trace_perturbation",
    "exact_concentric_disk",
    "background_normal_trace",
    "add_noise",
    "write_trace_csv",
    "read_trace_csv",
]


@dataclass(frozen=True)
class ProbeBC:
    """Dirichlet data ``exp(i (eta + sign * gamma * eta_perp) . x)``."""

    eta: np.ndarray
    eta_perp: np.ndarray
    gamma: complex
    sign: int = 1

    @classmethod
    def from_frequency(cls, freq: ProbeFrequency, sign: int = 1) -> "ProbeBC":
        return cls(freq.eta, freq.eta_perp, freq.gamma, sign)

    @classmethod
    def for_eta(cls, eta, k: float, sign: int = 1) -> "ProbeBC":
        return cls.from_frequency(make_frequency(eta, k), sign)

    @property
    def direction(self) -> np.ndarray:
        return self.eta + self.sign * self.gamma * self.eta_perp

    @property
    def k(self) -> float:
        a = self.direction
        return float(np.sqrt(np.real(a @ a)))

    def field(self, x):
        """Value and gradient of the plane wave at points ``x``."""
        return plane_wave(self.direction, x)


def background_normal_trace(bc: ProbeBC, quadrature: BoundaryQuadrature) -> BoundaryTrace:
    _, grad = bc.field(quadrature.points)
    return BoundaryTrace(np.sum(grad * quadrature.normals, axis=-1), quadrature)


# -- Nystrom solve ---------------------------------------------------------------


def _kress_weights(n_nodes: int) -> np.ndarray:
    """``R_j`` with ``int log(4 sin^2((t - s)/2)) f(s) ds ~ sum_j R_{|i-j|} f(s_j)``."""
    half = n_nodes // 2
    t = np.pi * np.arange(n_nodes) / half
    m = np.arange(1, half)
    r = -(2 * np.pi / half) * (np.cos(np.outer(t, m)) @ (1.0 / m)) - (np.pi / half**2) * np.cos(half * t)
    return r


class NystromSolver:
    """LU-factorised Nystrom matrix of ``I + 2 K*`` on the unit circle.

    The matrix depends only on ``k`` and the node count, so one instance
    serves every boundary condition; it is read-only after construction.
    """

    def __init__(self, k: float, quadrature: BoundaryQuadrature):
        if quadrature.n % 2:
            raise ValidationError("Kress quadrature needs an even number of nodes")
        check_wavenumber(k)
        self.k = float(k)
        self.quadrature = quadrature
        n = quadrature.n
        idx = np.arange(n)
        lag = (idx[:, None] - idx[None, :]) % n
        t = quadrature.nodes
        r = 2 * np.abs(np.sin((t[:, None] - t[None, :]) / 2))
        off = lag != 0
        rs = np.where(off, r, 1.0)
        # 2 dG/dnu(x) on the unit circle: (i k r / 4) H1(k r)
        kern = np.where(off, 0.25j * k * rs * special.hankel1(1, k * rs), 1 / (2 * np.pi))
        log_part = np.where(off, -k * rs * special.j1(k * rs) / (4 * np.pi), 0.0)
        logs = np.where(off, np.log(np.where(off, rs**2, 1.0)), 0.0)
        smooth = kern - log_part * logs
        weights = _kress_weights(n)[lag]
        matrix = np.eye(n) + (weights * log_part + quadrature.spacing * smooth)
        cond = np.linalg.cond(matrix)
        if not np.isfinite(cond) or cond > 1e10:
            raise NumericalError(f"Nystrom matrix is singular (cond={cond:.2e}); k near a resonance")
        self.matrix = matrix
        self._lu = scipy.linalg.lu_factor(matrix)

    def solve(self, rhs) -> np.ndarray:
        return scipy.linalg.lu_solve(self._lu, rhs)


@lru_cache(maxsize=16)
def _cached_solver(k: float, n: int) -> NystromSolver:
    return NystromSolver(k, BoundaryQuadrature.on_circle(n))


def trace_rhs(scene, bc: ProbeBC, quadrature: BoundaryQuadrature) -> np.ndarray:
    """Leading-order right-hand side at the boundary nodes.

    Per inclusion ``j`` with scale ``a``:
    ``-2 a^2 (1 - mu0/mu_j) grad_z dG(x, z)/dnu(x) . M_j grad E_0(z)
      + 2 a^2 k^2 (1 - eps_j/eps0) |B_j| dG(x, z)/dnu(x) E_0(z)``.
    """
    k = scene.medium.k
    mu0, eps0 = scene.medium.mu0, scene.medium.eps0
    x, nu = quadrature.points, quadrature.normals
    rhs = np.zeros(quadrature.n, dtype=complex)
    for inc in scene.inclusions:
        z = np.asarray(inc.center)
        e0, grad_e0 = bc.field(z)
        scale2 = inc.scale**2
        if inc.mu != mu0:
            m = ptensor(inc.shape, mu0, inc.mu).entries
            mixed = free_green_mixed(x, nu, z, k)
            rhs -= 2 * scale2 * (1 - mu0 / inc.mu) * (mixed @ (m @ grad_e0))
        if inc.eps != eps0:
            rhs += 2 * scale2 * k**2 * (1 - inc.eps / eps0) * inc.shape.area * e0 * free_green_normal_x(x, nu, z, k)
    return rhs


def solve_trace_perturbation(
    scene,
    bc: ProbeBC,
    quadrature: BoundaryQuadrature,
    solver: NystromSolver | None = None,
) -> BoundaryTrace:
    k = scene.medium.k
    if not np.isclose(bc.k, k, rtol=1e-10):
        raise ValidationError("boundary condition is not a Helmholtz solution for the scene wavenumber")
    if solver is None:
        solver = _cached_solver(float(k), quadrature.n)
    elif solver.quadrature.n != quadrature.n or not np.isclose(solver.k, k):
        raise ValidationError("Nystrom solver does not match the quadrature or wavenumber")
    rhs = trace_rhs(scene, bc, quadrature)
    if not np.any(rhs):
        return BoundaryTrace(np.zeros(quadrature.n, dtype=complex), quadrature)
    return BoundaryTrace(solver.solve(rhs), quadrature)


# -- mode-matching oracle --------------------------------------------------------


def exact_concentric_disk(
    rho: float,
    mu1: float,
    eps1: float,
    bc: ProbeBC,
    medium,
    quadrature: BoundaryQuadrature,
    n_modes: int = DEFAULT_MODE_CAP,
    return_residuals: bool = False,
):
    """Neumann-trace perturbation for a centred disk of radius ``rho``.

    Per order ``n`` the field is ``a J_n(k1 r)`` inside and
    ``b J_n(k r) + c Y_n(k r)`` in the annulus; ``E`` and ``(1/mu) dE/dr`` are
    continuous at ``rho`` and ``E`` equals the plane wave on the unit circle.
    Unknowns are rescaled by ``J_n(k1 rho)``, ``J_n(k)`` and ``Y_n(k rho)`` and rows are
    equilibrated so each 3x3 system has O(1) entries.  With ``return_residuals`` the largest relative
    interface residual is returned as well.
    """
    if not 0 < rho < 1:
        raise ValidationError("inclusion radius must lie in (0, 1)")
    if mu1 <= 0 or eps1 <= 0:
        raise ValidationError("contrasts must be positive")
    k = medium.k
    check_wavenumber(k)
    k1 = medium.omega * np.sqrt(mu1 * eps1)
    mu0 = medium.mu0
    val, _ = bc.field(quadrature.points)
    f = ModeCoefficients.from_samples(val, n_modes)

    dn = np.zeros(len(f.orders), dtype=complex)
    worst = 0.0
    for i, n in enumerate(f.orders):
        an = abs(n)
        j_in, dj_in = special.jv(an, k1 * rho), special.jvp(an, k1 * rho)
        j_r, dj_r = special.jv(an, k * rho), special.jvp(an, k * rho)
        y_r, dy_r = special.yv(an, k * rho), special.yvp(an, k * rho)
        j_1, dj_1 = special.jv(an, k), special.jvp(an, k)
        y_1, dy_1 = special.yv(an, k), special.yvp(an, k)
        # unknowns (A, B, C) = (a J_n(k1 rho), b J_n(k), c Y_n(k rho))
        system = np.array(
            [
                [1.0, -j_r / j_1, -1.0],
                [rho * k1 / mu1 * dj_in / j_in, -rho * k / mu0 * dj_r / j_1, -rho * k / mu0 * dy_r / y_r],
                [0.0, 1.0, y_1 / y_r],
            ],
            dtype=complex,
        )
        rhs = np.array([0.0, 0.0, f.coefficients[i]], dtype=complex)
        row_scale = np.max(np.abs(system), axis=1)
        system /= row_scale[:, None]
        rhs /= row_scale
        if np.linalg.cond(system) > 1e13:
            raise NumericalError(f"mode {n} of the layered disk is resonant")
        A, B, C = np.linalg.solve(system, rhs)
        if return_residuals:
            res = system @ np.array([A, B, C]) - rhs
            scale = np.abs(system) @ np.abs([A, B, C]) + abs(rhs[2]) + 1e-300
            worst = max(worst, float(np.max(np.abs(res) / scale)))
        total = k * (B * dj_1 / j_1 + C * dy_1 / y_r)
        dn[i] = total - k * f.coefficients[i] * dj_1 / j_1
    trace = BoundaryTrace(ModeCoefficients(dn).to_samples(quadrature.n), quadrature)
    return (trace, worst) if return_residuals else trace


# -- noise and IO ----------------------------------------------------------------


def add_noise(trace: BoundaryTrace, level: float, seed=None) -> BoundaryTrace:
    """Add circular complex Gaussian noise with std ``level * RMS(trace)``."""
    if level < 0:
        raise ValidationError("noise level must be non-negative")
    if level == 0:
        return BoundaryTrace(trace.values.copy(), trace.quadrature)
    rng = np.random.default_rng(seed)
    rms = np.sqrt(np.mean(np.abs(trace.values) ** 2))
    noise = rng.standard_normal(trace.values.shape) + 1j * rng.standard_normal(trace.values.shape)
    return BoundaryTrace(trace.values + level * rms * noise / np.sqrt(2), trace.quadrature)


def write_trace_csv(trace: BoundaryTrace, path: str | Path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["theta", "real", "imag", "aperture"])
        q = trace.quadrature
        for th, v, m in zip(q.nodes, trace.values, q.aperture_mask):
            out.writerow([repr(float(th)), repr(float(v.real)), repr(float(v.imag)), int(m)])


def read_trace_csv(path: str | Path) -> BoundaryTrace:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    mask = rows[:, 3].astype(bool)
    mask.setflags(write=False)
    quad = BoundaryQuadrature(len(rows), mask)
    return BoundaryTrace(rows[:, 1] + 1j * rows[:, 2], quad)
