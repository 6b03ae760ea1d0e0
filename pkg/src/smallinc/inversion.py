"""Sampling functional, Fourier imaging and amplitude fitting.

For a probe ``w`` approximating ``exp(i (eta - gamma eta_perp) . x)`` on the
control disk and Dirichlet data ``E_0 = exp(i (eta + gamma eta_perp) . x)``,

    Lambda(eta) = int_{Gamma_1} dE/dnu w ds - int_{dOmega} dw/dnu E ds
                ~ alpha^2 sum_j exp(2i eta . z_j) [a_j (2|eta|^2 - k^2) + b_j]

with, for disk inclusions of scale ``alpha``,

    a_j = alpha^2 (1 - mu0/mu_j) m_j,     m_j = 2 mu_j/(mu0 + mu_j) pi
    b_j = alpha^2 k^2 (1 - eps_j/eps0) pi.

The reference shape is always the unit disk, so ``|B_j| = pi`` and the
physical size lives in ``alpha`` alone.

Imaging uses the adjoint transform ``sum_i w_i Lambda(eta_i) exp(-2i eta_i . x)``
evaluated with a zero-padded FFT; its peaks sit at ``+z_j``.  The spatial
grid conjugate to ``Delta eta`` has period ``pi / Delta eta = 2h``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, optimize

from .errors import NumericalError, ValidationError
from .forward import ProbeBC, add_noise, background_normal_trace, solve_trace_perturbation
from .greens import BoundaryTrace
from .polarizability import ptensor_disk
from .probes import ProbeFunction, oriented_probe

__all__ = [
    "SamplingPlan",
    "SpectralSamples",
    "ImagingGrid",
    "Reconstruction",
    "sampling_plan",
    "lambda_sample",
    "lambda_closed_form",
    "true_amplitudes",
    "pairing_defect",
    "probe_gain",
    "collect_samples",
    "closed_form_samples",
    "symbol",
    "imaging_functional",
    "detect_peaks",
    "recover_amplitudes",
    "locate_inclusions",
    "write_samples_csv",
    "read_samples_csv",
    "write_image_csv",
    "write_image_pgm",
    "write_reconstruction_csv",
]


# -- sampling plan -------------------------------------------------------------


@dataclass(frozen=True)
class SamplingPlan:
    """Square frequency grid ``eta = d_eta * (i, j)``, ``|i|, |j| <= half_width``.

    ``count = (2 M + 1)^d`` with ``M = ceil(h / delta)``; the ratio
    ``count / r^d`` (``r = h/delta``) lies between 1 and ``(2 + 3/r)^d`` and
    tends to ``2^d``.
    """

    h: float
    delta: float
    d: int
    eta_max: float
    d_eta: float
    half_width: int
    count: int
    pad: int = 4

    @property
    def fft_size(self) -> int:
        return self.pad * (2 * self.half_width + 1)

    @property
    def cell(self) -> float:
        """Pixel size of the padded image grid."""
        return math.pi / (self.d_eta * self.fft_size)

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """2-D grid: integer indices and the matching ``eta`` vectors."""
        if self.d != 2:
            raise ValidationError("the imaging pipeline is two-dimensional")
        r = np.arange(-self.half_width, self.half_width + 1)
        ii, jj = np.meshgrid(r, r, indexing="ij")
        idx = np.column_stack([ii.ravel(), jj.ravel()])
        return idx, self.d_eta * idx.astype(float)

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "delta": self.delta,
            "d": self.d,
            "eta_max": self.eta_max,
            "d_eta": self.d_eta,
            "half_width": self.half_width,
            "count": self.count,
            "fft_size": self.fft_size,
            "cell": self.cell,
        }


def sampling_plan(h: float, delta: float, d: int = 2, eta_max: float | None = None, pad: int = 4) -> SamplingPlan:
    """``eta_max = pi/(2 delta)`` and ``d_eta = pi/(2 h)``.

    The factor 2 comes from the ``exp(2i eta . z)`` phase: a band of
    ``|eta| <= eta_max`` resolves ``delta`` and a spacing ``d_eta`` leaves the
    ``2h``-periodic image alias-free over a box of side ``h``.  An explicit
    ``eta_max`` overrides the resolution-derived value.
    """
    if not (0 < delta <= h):
        raise ValidationError("need 0 < delta <= h")
    if d not in (2, 3):
        raise ValidationError("d must be 2 or 3")
    d_eta = math.pi / (2 * h)
    if eta_max is None:
        eta_max = math.pi / (2 * delta)
    elif eta_max <= 0:
        raise ValidationError("eta_max must be positive")
    half = max(1, math.ceil(eta_max / d_eta - 1e-9))
    return SamplingPlan(float(h), float(delta), d, float(eta_max), d_eta, half, (2 * half + 1) ** d, pad)


# -- spectral samples ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralSamples:
    """``Lambda`` on an integer-indexed grid ``eta = spacing * indices``.

    ``residuals`` holds the relative probe residual for each frequency
    (zero for exact or closed-form samples).  ``gains`` is the ``L2(Gamma_1)``
    norm of each probe trace: white trace noise reaches ``Lambda`` amplified
    by exactly this factor (ones when unknown).  ``floors`` is the size of
    ``Lambda`` for zero data, i.e. the numerical defect of the background
    Green pairing; it bounds what the samples can resolve (zeros when unknown).
    """

    indices: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    k: float
    spacing: float
    gains: np.ndarray | None = None
    floors: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int).reshape(-1, 2)
        vals = np.asarray(self.values, dtype=complex).ravel()
        res = np.asarray(self.residuals, dtype=float).ravel()
        gains = np.ones(len(vals)) if self.gains is None else np.asarray(self.gains, dtype=float).ravel()
        floors = np.zeros(len(vals)) if self.floors is None else np.asarray(self.floors, dtype=float).ravel()
        if not (len(idx) == len(vals) == len(res) == len(gains) == len(floors)):
            raise ValidationError("indices, values, residuals, gains and floors differ in length")
        if np.any(gains <= 0):
            raise ValidationError("noise gains must be positive")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("non-finite spectral samples")
        if {tuple(i) for i in idx} != {tuple(-i) for i in idx}:
            raise ValidationError("frequency grid is not symmetric about the origin")
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "spacing", float(self.spacing))
        for name, arr in (("indices", idx), ("values", vals), ("residuals", res), ("gains", gains), ("floors", floors)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def frequencies(self) -> np.ndarray:
        return self.spacing * self.indices.astype(float)

    @property
    def half_width(self) -> int:
        return int(np.max(np.abs(self.indices))) if len(self.indices) else 0

    def __len__(self) -> int:
        return len(self.values)

    def admissible(self, tol: float = 1e-2) -> np.ndarray:
        return self.residuals <= tol

    def noise_weights(self) -> np.ndarray:
        """Whitening weights ``min(gain) / gain`` (ones for uniform gains)."""
        return self.gains.min() / self.gains

    def with_values(self, values) -> "SpectralSamples":
        return SpectralSamples(self.indices, values, self.residuals, self.k, self.spacing, self.gains, self.floors)


def symbol(eta, k: float) -> np.ndarray:
    """Dipole factor ``2|eta|^2 - k^2``."""
    eta = np.asarray(eta, dtype=float)
    return 2 * np.sum(eta**2, axis=-1) - k * k


def lambda_sample(measured: BoundaryTrace, probe: ProbeFunction, bc: ProbeBC) -> complex:
    """Quadrature value of the sampling functional.

    ``measured`` is the trace perturbation ``D``; the full Neumann data on the
    aperture is ``D + dE_0/dnu`` and the Dirichlet data is the plane wave.
    """
    q = probe.trace.quadrature
    if measured.quadrature.n != q.n:
        raise ValidationError("trace and probe use different quadratures")
    t = probe.target
    if not (np.allclose(t.eta, bc.eta, rtol=0, atol=1e-12) and np.allclose(t.eta_perp, bc.eta_perp, rtol=0, atol=1e-12)):
        raise ValidationError("probe and boundary condition belong to different frequencies")
    e_val, _ = bc.field(q.points)
    neumann = measured.values + background_normal_trace(bc, q).values
    first = q.integrate(neumann * probe.trace.values, region="aperture")
    second = q.integrate(probe.normal_trace.values * e_val)
    return complex(first - second)


def pairing_defect(probe: ProbeFunction, bc: ProbeBC) -> float:
    """``|Lambda|`` for zero trace perturbation.

    In exact arithmetic this vanishes (Green's identity for two Helmholtz
    solutions); numerically it measures the round-off carried by the probe.
    """
    q = probe.trace.quadrature
    zero = BoundaryTrace(np.zeros(q.n, dtype=complex), q)
    return abs(lambda_sample(zero, probe, bc))


def probe_gain(probe: ProbeFunction) -> float:
    """``L2(Gamma_1)`` norm of the probe trace."""
    q = probe.trace.quadrature
    return float(np.sqrt(q.integrate(np.abs(probe.trace.values) ** 2, region="aperture").real))


def _disk_check(scene):
    for j, inc in enumerate(scene.inclusions):
        if not inc.is_disk:
            raise ValidationError(f"inclusion {j} is not a disk; the closed form needs M_j = m_j I")


def true_amplitudes(scene) -> np.ndarray:
    """``(a_j, b_j)`` per inclusion, shape ``(m, 2)``."""
    _disk_check(scene)
    k = scene.k
    mu0, eps0 = scene.medium.mu0, scene.medium.eps0
    out = np.zeros((len(scene.inclusions), 2))
    for j, inc in enumerate(scene.inclusions):
        m = ptensor_disk(mu0, inc.mu, np.pi).scalar()
        a2 = inc.scale**2
        out[j] = a2 * (1 - mu0 / inc.mu) * m, a2 * k * k * (1 - inc.eps / eps0) * np.pi
    return out


def _model(eta, centers, amplitudes, k) -> np.ndarray:
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    amplitudes = np.asarray(amplitudes).reshape(-1, 2)
    if len(centers) == 0:
        return np.zeros(len(eta), dtype=complex)
    phase = np.exp(2j * eta @ centers.T)
    s = symbol(eta, k)
    return phase @ amplitudes[:, 0] * s + phase @ amplitudes[:, 1]


def lambda_closed_form(scene, eta) -> complex | np.ndarray:
    """Leading-order ``Lambda`` for disk inclusions; vectorised over ``eta``."""
    eta_arr = np.asarray(eta, dtype=float)
    vals = _model(eta_arr.reshape(-1, 2), scene.centers, true_amplitudes(scene), scene.k)
    return complex(vals[0]) if eta_arr.ndim == 1 else vals


def closed_form_samples(scene, plan: SamplingPlan) -> SpectralSamples:
    idx, eta = plan.frequencies()
    return SpectralSamples(idx, lambda_closed_form(scene, eta), np.zeros(len(idx)), scene.k, plan.d_eta)


def collect_samples(
    scene,
    op,
    plan: SamplingPlan,
    lam: float | None = None,
    noise: float = 0.0,
    seed=None,
    orientation: str = "best",
    traces: dict | None = None,
) -> SpectralSamples:
    """Synthesise data and evaluate ``Lambda`` on every frequency of ``plan``.

    For each ``eta`` the trace perturbation comes from the leading-order
    forward solve (or from ``traces[(i, j)]`` when supplied), optional noise
    is added, and a probe is built from ``op`` (see ``oriented_probe`` for
    ``orientation``).  Noise draws use one generator seeded by ``seed`` and
    consumed in grid order.
    """
    if not np.isclose(op.k, scene.k, rtol=1e-12):
        raise ValidationError("probe operator and scene use different wavenumbers")
    rng = np.random.default_rng(seed)
    idx, etas = plan.frequencies()
    q = op.quadrature
    values = np.zeros(len(idx), dtype=complex)
    residuals = np.zeros(len(idx))
    gains = np.zeros(len(idx))
    floors = np.zeros(len(idx))
    for n, (ij, eta) in enumerate(zip(idx, etas)):
        probe = oriented_probe(op, eta, lam, orientation)
        bc = ProbeBC.from_frequency(probe.target)
        if traces is not None:
            trace = traces[tuple(int(t) for t in ij)]
        else:
            trace = solve_trace_perturbation(scene, bc, q)
        if noise > 0:
            trace = add_noise(trace, noise, rng)
        values[n] = lambda_sample(trace, probe, bc)
        residuals[n] = probe.relative_residual
        gains[n] = probe_gain(probe)
        floors[n] = pairing_defect(probe, bc)
    return SpectralSamples(idx, values, residuals, scene.k, plan.d_eta, gains, floors)


# -- imaging ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ImagingGrid:
    """Image on the padded FFT grid.  ``values[i, j]`` sits at ``(x[i], y[j])``."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    h: float
    delta: float

    @property
    def cell(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def peak(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def points(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([xx, yy], axis=-1)

    def value_near(self, point) -> float:
        """Image value at the grid node closest to ``point``."""
        i = int(np.argmin(np.abs(self.x - point[0])))
        j = int(np.argmin(np.abs(self.y - point[1])))
        return float(self.values[i, j])


def _window(samples: SpectralSamples, window: str) -> np.ndarray:
    if window == "none":
        return np.ones(len(samples))
    if window == "hann":
        m = samples.half_width + 1
        return np.prod(np.cos(0.5 * np.pi * samples.indices / m) ** 2, axis=1)
    raise ValidationError(f"unknown window {window!r}")


def _adjoint_fft(samples: SpectralSamples, coeffs, size: int) -> np.ndarray:
    grid = np.zeros((size, size), dtype=complex)
    grid[samples.indices[:, 0] % size, samples.indices[:, 1] % size] = coeffs
    return np.fft.fftshift(np.fft.fft2(grid))


def imaging_functional(
    samples: SpectralSamples,
    plan: SamplingPlan | None = None,
    mode: str = "raw",
    window: str = "none",
    weights=None,
    guard: float = 1e-3,
) -> ImagingGrid:
    """Adjoint-Fourier image of ``samples``.

    ``mode``:

    * ``"raw"``: ``|sum w Lambda exp(-2i eta.x)| / sum w``; a unit monopole
      gives peak 1.
    * ``"deconvolve"``: as raw after dividing by the dipole factor, skipping
      frequencies where ``|2|eta|^2 - k^2| < guard k^2``.
    * ``"two_channel"``: matched filter for one point source with unknown
      complex ``(a, b)``, ``sqrt(c^H G^-1 c / sum w)`` where ``c`` holds the
      transforms of ``s Lambda`` and ``Lambda``.  A unit monopole gives 1 and
      a unit dipole gives the weighted RMS of ``s``.

    ``weights`` multiplies the window (use zeros to drop frequencies).
    """
    if plan is not None:
        if not np.isclose(plan.d_eta, samples.spacing) or plan.half_width != samples.half_width:
            raise ValidationError("samples do not lie on the plan's grid")
        pad, h, delta = plan.pad, plan.h, plan.delta
    else:
        pad, h, delta = 4, math.pi / (2 * samples.spacing), math.pi / (2 * samples.spacing * max(samples.half_width, 1))
    size = pad * (2 * samples.half_width + 1)
    w = _window(samples, window)
    if weights is not None:
        w = w * np.asarray(weights, dtype=float)
    total = w.sum()
    coords = (np.arange(size) - size // 2) * math.pi / (samples.spacing * size)
    if total <= 0:
        return ImagingGrid(coords, coords, np.zeros((size, size)), h, delta)
    s = symbol(samples.frequencies, samples.k)
    lam = samples.values
    if mode == "raw":
        img = np.abs(_adjoint_fft(samples, w * lam, size)) / total
    elif mode == "deconvolve":
        keep = np.abs(s) >= guard * samples.k**2
        wk = np.where(keep, w, 0.0)
        safe = np.where(keep, s, 1.0)
        img = np.abs(_adjoint_fft(samples, wk * lam / safe, size)) / max(wk.sum(), 1e-300)
    elif mode == "two_channel":
        c1 = _adjoint_fft(samples, w * s * lam, size)
        c2 = _adjoint_fft(samples, w * lam, size)
        g11, g12, g22 = np.sum(w * s * s), np.sum(w * s), total
        det = g11 * g22 - g12 * g12
        if det <= 1e-14 * g11 * g22:
            raise NumericalError("two-channel Gram matrix is singular")
        quad = (g22 * np.abs(c1) ** 2 - 2 * g12 * np.real(np.conj(c1) * c2) + g11 * np.abs(c2) ** 2) / det
        img = np.sqrt(np.maximum(quad, 0.0) / total)
    else:
        raise ValidationError(f"unknown imaging mode {mode!r}")
    return ImagingGrid(coords, coords, img, h, delta)


def _refine(values, i, j):
    """Quadratic sub-cell offsets along each axis (periodic neighbours)."""
    n0, n1 = values.shape
    out = []
    for fm, f0, fp in (
        (values[(i - 1) % n0, j], values[i, j], values[(i + 1) % n0, j]),
        (values[i, (j - 1) % n1], values[i, j], values[i, (j + 1) % n1]),
    ):
        den = fm - 2 * f0 + fp
        out.append(0.0 if den >= 0 else float(np.clip(0.5 * (fm - fp) / den, -0.5, 0.5)))
    return out


def detect_peaks(
    image: ImagingGrid,
    count: int | None = None,
    threshold: float | None = None,
    separation: float = 0.25,
    radius: float | None = None,
    relative: bool = False,
) -> np.ndarray:
    """Local maxima of ``image`` as an ``(m, 2)`` array, strongest first.

    Peaks closer than ``separation`` to a stronger accepted peak are dropped.
    ``threshold`` is absolute, or a fraction of the global maximum when
    ``relative``; ``count`` keeps the strongest ones and raises when fewer
    exist.  ``radius`` restricts candidates to the disk ``|x| < radius``.
    """
    vals = image.values
    local = (vals == ndimage.maximum_filter(vals, size=3, mode="wrap")) & (vals > 0)
    pts = image.points()
    if radius is not None:
        local &= np.hypot(pts[..., 0], pts[..., 1]) < radius
    if threshold is not None:
        floor = threshold * image.peak if relative else threshold
        local &= vals >= floor
    ii, jj = np.nonzero(local)
    order = np.argsort(-vals[ii, jj], kind="stable")
    cell = image.cell
    found: list[np.ndarray] = []
    for o in order:
        i, j = ii[o], jj[o]
        di, dj = _refine(vals, i, j)
        p = np.array([image.x[i] + di * cell, image.y[j] + dj * cell])
        if all(np.hypot(*(p - q)) >= separation for q in found):
            found.append(p)
        if count is not None and len(found) == count:
            break
    if count is not None and len(found) < count:
        raise NumericalError(f"found {len(found)} peaks, {count} requested")
    return np.array(found).reshape(-1, 2)


# -- amplitudes --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Centres ``(m, 2)`` and real amplitudes ``(m, 2)`` holding ``(a_j, b_j)``.

    ``fit_residual`` is the relative misfit of the real fit and ``mismatch``
    the relative size of the imaginary parts a complex fit would need.
    """

    centers: np.ndarray
    amplitudes: np.ndarray
    fit_residual: float
    mismatch: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        a = np.asarray(self.amplitudes, dtype=float).reshape(-1, 2)
        if len(c) != len(a):
            raise ValidationError("one amplitude pair per centre")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "amplitudes", a)

    def __len__(self) -> int:
        return len(self.centers)

    @classmethod
    def empty(cls) -> "Reconstruction":
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), 0.0)


def _fit_mask(samples: SpectralSamples, mask, guard: float) -> np.ndarray:
    keep = np.abs(symbol(samples.frequencies, samples.k)) >= guard * samples.k**2
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    return keep


def _design(eta, centers, k) -> np.ndarray:
    phase = np.exp(2j * eta @ np.asarray(centers, dtype=float).reshape(-1, 2).T)
    s = symbol(eta, k)[:, None]
    cols = np.empty((len(eta), 2 * phase.shape[1]), dtype=complex)
    cols[:, 0::2] = phase * s
    cols[:, 1::2] = phase
    return cols


def recover_amplitudes(
    samples: SpectralSamples, centers, mask=None, guard: float = 1e-3, weights=None
) -> Reconstruction:
    """Real least-squares fit of ``(a_j, b_j)`` at fixed ``centers``.

    Frequencies on the zero set of the dipole factor (``|2|eta|^2 - k^2| <
    guard k^2``) and those outside ``mask`` are left out.  ``weights`` scales
    each equation; ``"noise"`` uses ``samples.noise_weights()``.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(centers) == 0:
        raise ValidationError("no centres to fit")
    if isinstance(weights, str):
        if weights != "noise":
            raise ValidationError(f"unknown weighting {weights!r}")
        weights = samples.noise_weights()
    w = np.ones(len(samples)) if weights is None else np.asarray(weights, dtype=float)
    keep = _fit_mask(samples, mask, guard) & (w > 0)
    eta = samples.frequencies[keep]
    if len(np.unique(np.round(np.sum(eta**2, axis=1), 12))) < 2:
        raise NumericalError("need at least two distinct |eta| to separate a_j from b_j")
    w = w[keep]
    lam = samples.values[keep]
    a = _design(eta, centers, samples.k)
    aw = a * w[:, None]
    lw = lam * w
    scale = np.linalg.norm(aw, axis=0)
    scale[scale == 0] = 1.0
    real_a = np.vstack([aw.real, aw.imag]) / scale
    rhs = np.concatenate([lw.real, lw.imag])
    sv = np.linalg.svd(real_a, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise NumericalError("amplitude system is rank deficient; centres too close or grid degenerate")
    x, *_ = np.linalg.lstsq(real_a, rhs, rcond=None)
    x /= scale
    norm = np.linalg.norm(lw)
    fit = float(np.linalg.norm(aw @ x - lw) / norm) if norm else 0.0
    xc, *_ = np.linalg.lstsq(aw / scale, lw, rcond=None)
    xc /= scale
    mismatch = float(np.linalg.norm(xc.imag) / max(np.linalg.norm(xc), 1e-300))
    return Reconstruction(centers, x.reshape(-1, 2), fit, mismatch)


def _polish(samples, centers, keep, w, limit):
    """Joint least-squares refinement of the centres (variable projection)."""
    eta = samples.frequencies[keep]
    lam = samples.values[keep] * w[keep]
    rhs = np.concatenate([lam.real, lam.imag])
    start = np.asarray(centers, dtype=float).ravel()

    def misfit(flat):
        a = _design(eta, flat.reshape(-1, 2), samples.k) * w[keep, None]
        real_a = np.vstack([a.real, a.imag])
        x, *_ = np.linalg.lstsq(real_a, rhs, rcond=None)
        return rhs - real_a @ x

    res = optimize.least_squares(misfit, start, method="lm", x_scale=limit)
    moved = res.x.reshape(-1, 2)
    if not res.success or np.any(np.hypot(*(moved - centers).T) > limit):
        return np.asarray(centers, dtype=float)
    return moved


def locate_inclusions(
    samples: SpectralSamples,
    plan: SamplingPlan | None = None,
    max_count: int | None = None,
    stop: float = 0.2,
    separation: float = 0.25,
    radius: float | None = None,
    window: str = "hann",
    admissible: float | None = 1e-2,
    polish: bool = True,
    guard: float = 1e-3,
    weighting: str = "uniform",
    floor_factor: float = 10.0,
) -> tuple[Reconstruction, list[ImagingGrid]]:
    """Greedy detect-fit-subtract location of point sources.

    Each round images the current residual samples with the two-channel
    matched filter, takes the strongest peak at least ``separation`` from
    the accepted centres, refits all amplitudes jointly and subtracts the
    model.  Rounds stop when the new peak drops below ``stop`` times the first
    one or ``max_count`` centres are found.  Frequencies whose probe residual
    exceeds ``admissible`` are ignored throughout.  By default all
    admissible frequencies count alike; ``weighting="noise"`` weights images
    and fits by ``samples.noise_weights()``, which pays off for noisy data
    when the gains are moderate.  Peaks below ``floor_factor`` times the
    weighted mean of ``samples.floors`` are never accepted, so data at the
    round-off level yields an empty reconstruction.  Returns the
    reconstruction and the image of every round, the last one being the
    final residual image.
    """
    if weighting == "noise":
        weights = samples.noise_weights()
    elif weighting == "uniform":
        weights = np.ones(len(samples))
    else:
        raise ValidationError(f"unknown weighting {weighting!r}")
    if admissible is not None:
        weights = weights * samples.admissible(admissible)
    mask = weights > 0
    keep = _fit_mask(samples, mask, guard)
    if not np.any(keep):
        raise NumericalError("no admissible frequencies")
    floor = floor_factor * float(np.sum(weights * samples.floors) / np.sum(weights))
    if max_count is None:
        max_count = len(samples)
    centers = np.zeros((0, 2))
    images = []
    first = None
    residual = samples
    recon = Reconstruction.empty()
    cell = None
    while True:
        img = imaging_functional(residual, plan, mode="two_channel", window=window, weights=weights)
        images.append(img)
        cell = img.cell
        if len(centers) >= max_count:
            break
        cand = detect_peaks(img, radius=radius)
        cand = [p for p in cand if all(np.hypot(*(p - c)) >= separation for c in centers)]
        if not cand:
            break
        peak = img.value_near(cand[0])
        if peak <= floor:
            break
        if first is None:
            first = peak
        elif peak < stop * first:
            break
        trial = np.vstack([centers, cand[0]])
        if polish:
            trial = _polish(samples, trial, keep, weights, 2 * cell)
        try:
            recon = recover_amplitudes(samples, trial, mask=mask, guard=guard, weights=weights)
        except NumericalError:
            break
        centers = recon.centers
        eta = samples.frequencies
        residual = samples.with_values(samples.values - _model(eta, centers, recon.amplitudes, samples.k))
    return recon, images


# -- export ------------------------------------------------------------------------


def write_samples_csv(samples: SpectralSamples, path: str | Path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["i", "j", "eta_x", "eta_y", "real", "imag", "probe_residual", "gain", "floor", "k", "d_eta"])
        rows = zip(samples.indices, samples.frequencies, samples.values, samples.residuals, samples.gains, samples.floors)
        for (i, j), eta, v, r, g, f in rows:
            out.writerow(
                [int(i), int(j), repr(float(eta[0])), repr(float(eta[1])), repr(float(v.real)), repr(float(v.imag)),
                 repr(float(r)), repr(float(g)), repr(float(f)), repr(float(samples.k)), repr(float(samples.spacing))]
            )


def read_samples_csv(path: str | Path) -> SpectralSamples:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if len(rows) == 0:
        raise ValidationError(f"{path} holds no samples")
    return SpectralSamples(
        rows[:, :2].astype(int), rows[:, 4] + 1j * rows[:, 5], rows[:, 6], float(rows[0, 9]), float(rows[0, 10]), rows[:, 7], rows[:, 8]
    )


def write_image_csv(image: ImagingGrid, path: str | Path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "y", "value"])
        for i, x in enumerate(image.x):
            for j, y in enumerate(image.y):
                out.writerow([repr(float(x)), repr(float(y)), repr(float(image.values[i, j]))])


def write_image_pgm(image: ImagingGrid, path: str | Path, maxval: int = 255):
    """Plain (ASCII) graymap; rows run from top (largest y) to bottom."""
    v = image.values
    top = v.max()
    scaled = np.zeros_like(v, dtype=int) if top <= 0 else np.rint(maxval * v / top).astype(int)
    raster = scaled.T[::-1]
    with open(path, "w") as fh:
        fh.write(f"P2\n{raster.shape[1]} {raster.shape[0]}\n{maxval}\n")
        for row in raster:
            fh.write(" ".join(str(int(p)) for p in row) + "\n")


def write_reconstruction_csv(recon: Reconstruction, path: str | Path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "y", "a", "b"])
        for c, a in zip(recon.centers, recon.amplitudes):
            out.writerow([repr(float(c[0])), repr(float(c[1])), repr(float(a[0])), repr(float(a[1]))])
