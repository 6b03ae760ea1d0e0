import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rel, single_disk_scene
from smallinc.errors import NumericalError, ValidationError
from smallinc.forward import ProbeBC, solve_trace_perturbation
from smallinc.greens import BoundaryQuadrature, BoundaryTrace
from smallinc.inversion import (
    ImagingGrid,
    SpectralSamples,
    closed_form_samples,
    collect_samples,
    detect_peaks,
    imaging_functional,
    lambda_closed_form,
    lambda_sample,
    locate_inclusions,
    read_samples_csv,
    recover_amplitudes,
    sampling_plan,
    true_amplitudes,
    write_image_csv,
    write_image_pgm,
    write_reconstruction_csv,
    write_samples_csv,
)
from smallinc.model import DomainGeometry, Inclusion, Medium, Scene
from smallinc.polarizability import Ellipse
from smallinc.probes import exact_probe, make_frequency

# closed form evaluated independently in 30-digit arithmetic
LAMBDA_REF = -0.0344366272287239143805821386244 - 0.0354572791694645668869032814882j


def two_scene(mu=(2.0, 0.5), eps=(3.0, 1.0)):
    incs = (Inclusion((0.3, 0.1), 0.02, mu[0], eps[0]), Inclusion((-0.25, -0.3), 0.02, mu[1], eps[1]))
    return Scene(Medium.from_wavenumber(4.0), DomainGeometry.full(), incs, 0.5)


# -- closed form -------------------------------------------------------------------


def test_closed_form_reference():
    scene = single_disk_scene(k=4.0, center=(0.3, 0.1), scale=0.02, mu=2.0, eps=3.0)
    assert lambda_closed_form(scene, (1.5, -0.5)) == pytest.approx(LAMBDA_REF, rel=1e-13)


def test_amplitude_signs():
    amp = true_amplitudes(two_scene())
    assert amp[0, 0] > 0 and amp[1, 0] < 0
    assert amp[0, 1] < 0 and amp[1, 1] == 0


def test_closed_form_zero_contrast():
    scene = single_disk_scene(mu=1.0, eps=1.0)
    assert lambda_closed_form(scene, (2.0, 7.0)) == 0


@given(st.floats(0, 10), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_closed_form_radial_at_origin(r, t1, t2):
    scene = single_disk_scene(center=(0.0, 0.0))
    a = lambda_closed_form(scene, (r * np.cos(t1), r * np.sin(t1)))
    b = lambda_closed_form(scene, (r * np.cos(t2), r * np.sin(t2)))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-18)


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-6, 6), st.floats(-6, 6))
def test_closed_form_translation_phase(tx, ty, ex, ey):
    base = single_disk_scene(center=(0.1, -0.2))
    moved = single_disk_scene(center=(0.1 + tx, -0.2 + ty))
    eta = np.array([ex, ey])
    expect = lambda_closed_form(base, eta) * np.exp(2j * eta @ np.array([tx, ty]))
    assert lambda_closed_form(moved, eta) == pytest.approx(expect, rel=1e-12, abs=1e-18)


def test_closed_form_rejects_non_disk():
    inc = Inclusion((0.0, 0.0), 0.02, 2.0, 3.0, Ellipse(1.0, 0.5))
    scene = Scene(Medium.from_wavenumber(4.0), DomainGeometry.full(), (inc,), 0.5)
    with pytest.raises(ValidationError):
        lambda_closed_form(scene, (1.0, 0.0))


# -- sampling functional --------------------------------------------------------------


def exact_sample(scene, eta, quad, trace=None):
    probe = exact_probe(make_frequency(eta, scene.k), quad)
    bc = ProbeBC.from_frequency(probe.target)
    if trace is None:
        trace = solve_trace_perturbation(scene, bc, quad)
    return lambda_sample(trace, probe, bc), probe, bc


def test_exact_probe_zero_contrast(quad256):
    scene = single_disk_scene(mu=1.0, eps=1.0)
    for eta in [(0.0, 0.0), (1.0, 2.0), (6.0, -3.0)]:
        val, *_ = exact_sample(scene, eta, quad256)
        assert abs(val) <= 1e-8


@pytest.mark.parametrize("eta", [(0.5, 0.0), (1.0, 2.0), (-3.0, 1.5), (4.0, 3.0)])
def test_exact_probe_matches_closed_form(quad256, eta):
    scene = single_disk_scene(center=(0.3, 0.1), scale=0.01)
    val, *_ = exact_sample(scene, eta, quad256)
    ref = lambda_closed_form(scene, eta)
    assert abs(val - ref) <= 0.02 * abs(ref)


def test_sample_is_linear_in_trace(quad256):
    scene = two_scene()
    _, probe, bc = exact_sample(scene, (1.0, 2.0), quad256)
    d1 = solve_trace_perturbation(scene, bc, quad256)
    d2 = solve_trace_perturbation(single_disk_scene(), bc, quad256)
    zero = BoundaryTrace(np.zeros(quad256.n, dtype=complex), quad256)
    lhs = lambda_sample(d1 + d2, probe, bc)
    rhs = lambda_sample(d1, probe, bc) + lambda_sample(d2, probe, bc) - lambda_sample(zero, probe, bc)
    assert abs(lhs - rhs) <= 1e-14 * abs(lhs)


def test_sample_rejects_mismatch(quad256):
    _, probe, bc = exact_sample(single_disk_scene(), (1.0, 2.0), quad256)
    other = ProbeBC.for_eta((2.0, 1.0), 4.0)
    with pytest.raises(ValidationError):
        lambda_sample(BoundaryTrace(np.zeros(quad256.n), quad256), probe, other)
    with pytest.raises(ValidationError):
        lambda_sample(BoundaryTrace(np.zeros(64), BoundaryQuadrature.on_circle(64)), probe, bc)


# -- sampling plan -----------------------------------------------------------------


@pytest.mark.parametrize("d", [2, 3])
def test_plan_order_of_count(d):
    plan = sampling_plan(1.0, 0.1, d=d)
    assert plan.eta_max == pytest.approx(np.pi / 0.2) and plan.d_eta == pytest.approx(np.pi / 2)
    assert plan.count == 21**d
    assert 1 <= plan.count / 10**d <= 3**d


def test_plan_degenerate_and_errors():
    assert sampling_plan(0.5, 0.5).count == 9
    with pytest.raises(ValidationError):
        sampling_plan(0.5, 0.6)
    with pytest.raises(ValidationError):
        sampling_plan(1.0, 0.1, d=4)


@given(st.floats(1.0, 40.0))
def test_plan_ratio_bounds(ratio):
    for d in (2, 3):
        plan = sampling_plan(ratio, 1.0, d=d)
        assert 1 <= plan.count / ratio**d <= (2 + 3 / ratio) ** d + 1e-9


def test_plan_grid():
    plan = sampling_plan(1.6, 0.3)
    idx, eta = plan.frequencies()
    assert plan.half_width == 6 and len(idx) == plan.count == 169
    assert np.max(np.abs(eta)) >= plan.eta_max - 1e-12
    assert plan.cell * plan.fft_size == pytest.approx(2 * plan.h)


# -- imaging --------------------------------------------------------------------------


PLAN = sampling_plan(1.6, 0.3)


def test_imaging_zero():
    scene = single_disk_scene(mu=1.0, eps=1.0)
    img = imaging_functional(closed_form_samples(scene, PLAN), PLAN)
    assert np.all(img.values == 0)


def test_imaging_unit_monopole_peak():
    idx, eta = PLAN.frequencies()
    z = PLAN.cell * np.array([3.0, -2.0])  # on a grid node
    s = SpectralSamples(idx, np.exp(2j * eta @ z), np.zeros(len(idx)), 4.0, PLAN.d_eta)
    img = imaging_functional(s, PLAN)
    assert img.peak == pytest.approx(1.0, rel=1e-12)
    assert img.value_near(z) == img.peak


@pytest.mark.parametrize("center", [(0.3, 0.1), (-0.4, 0.25), (0.0, -0.5)])
def test_imaging_argmax(center):
    scene = single_disk_scene(center=center, mu=1.0, eps=3.0)
    img = imaging_functional(closed_form_samples(scene, PLAN), PLAN)
    i, j = np.unravel_index(np.argmax(img.values), img.values.shape)
    assert abs(img.x[i] - center[0]) <= img.cell and abs(img.y[j] - center[1]) <= img.cell


@pytest.mark.parametrize("mode,mu", [("raw", 1.0), ("two_channel", 2.0)])
def test_imaging_shift_theorem(mode, mu):
    shift = np.array([-0.2, 0.15])
    argmax = []
    for c in (np.array([0.3, 0.1]), np.array([0.3, 0.1]) + shift):
        img = imaging_functional(closed_form_samples(single_disk_scene(center=c, mu=mu, eps=3.0), PLAN), PLAN, mode=mode)
        i, j = np.unravel_index(np.argmax(img.values), img.values.shape)
        argmax.append(np.array([img.x[i], img.y[j]]))
    assert np.all(np.abs(argmax[1] - argmax[0] - shift) <= img.cell)


def test_imaging_parseval():
    samples = closed_form_samples(two_scene(), PLAN)
    img = imaging_functional(samples, PLAN)
    n = PLAN.fft_size
    energy = np.sum(img.values**2) * len(samples) ** 2
    assert energy == pytest.approx(n * n * np.sum(np.abs(samples.values) ** 2), rel=1e-12)


@pytest.mark.parametrize("mode,mu,eps", [("raw", 1.0, 3.0), ("deconvolve", 2.0, 1.0), ("two_channel", 2.0, 3.0)])
def test_imaging_localization(mode, mu, eps):
    z = np.array([0.3, 0.1])
    scene = single_disk_scene(center=z, mu=mu, eps=eps)
    img = imaging_functional(closed_form_samples(scene, PLAN), PLAN, mode=mode)
    pts = img.points()
    far = np.hypot(pts[..., 0] - z[0], pts[..., 1] - z[1]) > PLAN.delta
    assert img.values[far].max() < 0.5 * img.peak


def test_imaging_rejects_other_grid():
    samples = closed_form_samples(two_scene(), PLAN)
    with pytest.raises(ValidationError):
        imaging_functional(samples, sampling_plan(1.6, 0.2))
    with pytest.raises(ValidationError):
        imaging_functional(samples, PLAN, mode="music")


def test_samples_invariants():
    idx = np.array([[0, 0], [1, 0]])
    with pytest.raises(ValidationError):
        SpectralSamples(idx, [1.0, 2.0], [0.0, 0.0], 4.0, 1.0)
    with pytest.raises(ValidationError):
        SpectralSamples(np.array([[0, 0]]), [np.nan], [0.0], 4.0, 1.0)


# -- peaks ----------------------------------------------------------------------------


def test_detect_single_peak():
    z = (0.3, 0.1)
    img = imaging_functional(closed_form_samples(single_disk_scene(center=z, mu=1.0), PLAN), PLAN)
    (p,) = detect_peaks(img, count=1)
    assert np.hypot(*(p - z)) <= img.cell


def test_detect_two_peaks():
    scene = two_scene(mu=(1.0, 1.0), eps=(3.0, 3.0))
    img = imaging_functional(closed_form_samples(scene, PLAN), PLAN)
    found = detect_peaks(img, threshold=0.5, relative=True, separation=0.25)
    assert len(found) == 2
    for z in scene.centers:
        assert np.min(np.hypot(*(found - z).T)) <= img.cell


def test_detect_flat_and_too_many():
    x = np.linspace(-1, 1, 16)
    flat = ImagingGrid(x, x, np.zeros((16, 16)), 1.0, 0.1)
    assert detect_peaks(flat, threshold=0.1).shape == (0, 2)
    with pytest.raises(NumericalError):
        detect_peaks(flat, count=1)


# -- amplitudes -------------------------------------------------------------------------


def test_recover_amplitudes_exact_centres():
    scene = two_scene()
    recon = recover_amplitudes(closed_form_samples(scene, PLAN), scene.centers)
    truth = true_amplitudes(scene)
    assert np.max(np.abs(recon.amplitudes - truth)) <= 1e-8 * np.max(np.abs(truth))
    assert recon.fit_residual <= 1e-10 and recon.mismatch <= 1e-10


def test_dielectric_has_no_dipole_amplitude():
    scene = single_disk_scene(mu=1.0, eps=3.0)
    (a, b), = recover_amplitudes(closed_form_samples(scene, PLAN), scene.centers).amplitudes
    assert abs(a) <= 1e-6 * abs(b)


def test_guard_drops_symbol_zeros():
    k = 2 * PLAN.d_eta  # puts the (1, 1) frequencies on the zero set
    idx, eta = PLAN.frequencies()
    vals = np.exp(2j * eta @ np.array([0.1, 0.2])) * 0.3
    hot = np.all(np.abs(idx) == 1, axis=1)
    vals[hot] += 1e3
    s = SpectralSamples(idx, vals, np.zeros(len(idx)), k, PLAN.d_eta)
    (a, b), = recover_amplitudes(s, [(0.1, 0.2)]).amplitudes
    assert abs(a) <= 1e-10 and b == pytest.approx(0.3, rel=1e-10)


def test_rank_deficiency():
    samples = closed_form_samples(two_scene(), PLAN)
    with pytest.raises(NumericalError):
        recover_amplitudes(samples, [(0.1, 0.1), (0.1, 0.1)])
    single = SpectralSamples(np.array([[0, 0]]), [1.0], [0.0], 4.0, 1.0)
    with pytest.raises(NumericalError):
        recover_amplitudes(single, [(0.0, 0.0)])
    with pytest.raises(ValidationError):
        recover_amplitudes(samples, np.zeros((0, 2)))


def test_locate_closed_form_two_inclusions():
    scene = two_scene()
    recon, images = locate_inclusions(closed_form_samples(scene, PLAN), PLAN)
    assert len(recon) == 2 and len(images) == 3
    for z, amp in zip(scene.centers, true_amplitudes(scene)):
        j = np.argmin(np.hypot(*(recon.centers - z).T))
        assert np.hypot(*(recon.centers[j] - z)) <= 1e-6
        assert np.allclose(recon.amplitudes[j], amp, rtol=1e-6, atol=1e-12)


# -- noisy pipeline on the full aperture --------------------------------------------------


@pytest.fixture(scope="module")
def noisy_runs(full_operator):
    scene = single_disk_scene(center=(0.3, 0.1), scale=0.03, mu=2.0, eps=3.0)
    q = full_operator.quadrature
    idx, etas = PLAN.frequencies()
    traces = {}
    for ij, eta in zip(idx, etas):
        f = make_frequency(eta, scene.k)
        traces[tuple(int(t) for t in ij)] = solve_trace_perturbation(scene, ProbeBC.from_frequency(f), q)
    runs = [collect_samples(scene, full_operator, PLAN, noise=0.01, seed=s, orientation="rotate", traces=traces) for s in range(10)]
    clean = collect_samples(scene, full_operator, PLAN, orientation="rotate", traces=traces)
    return scene, clean, runs


def test_noise_amplitude_recovery(noisy_runs):
    scene, _, runs = noisy_runs
    b_true = true_amplitudes(scene)[0, 1]
    recon = recover_amplitudes(runs[0], scene.centers, weights="noise")
    assert abs(recon.amplitudes[0, 1] - b_true) <= 0.1 * abs(b_true)


def test_noise_argmax_stability(noisy_runs):
    _, clean, runs = noisy_runs
    (ref,) = locate_inclusions(clean, PLAN, weighting="noise")[0].centers
    shifts = []
    for s in runs:
        recon, _ = locate_inclusions(s, PLAN, weighting="noise")
        shifts.append(np.min(np.hypot(*(recon.centers - ref).T)))
    assert np.median(shifts) < PLAN.cell


def test_seeded_noise_is_reproducible(noisy_runs, full_operator):
    scene, _, runs = noisy_runs
    again = collect_samples(scene, full_operator, PLAN, noise=0.01, seed=3, orientation="rotate")
    assert rel(again.values, runs[3].values) <= 1e-12


# -- files ------------------------------------------------------------------------------


def test_exports(tmp_path):
    scene = two_scene()
    samples = closed_form_samples(scene, PLAN)
    write_samples_csv(samples, tmp_path / "s.csv")
    back = read_samples_csv(tmp_path / "s.csv")
    assert np.array_equal(back.values, samples.values) and np.array_equal(back.indices, samples.indices)
    assert back.k == samples.k and back.spacing == samples.spacing
    img = imaging_functional(samples, PLAN)
    write_image_csv(img, tmp_path / "i.csv")
    assert len((tmp_path / "i.csv").read_text().splitlines()) == PLAN.fft_size**2 + 1
    write_image_pgm(img, tmp_path / "i.pgm")
    tokens = (tmp_path / "i.pgm").read_text().split()
    assert tokens[:4] == ["P2", str(PLAN.fft_size), str(PLAN.fft_size), "255"]
    pix = np.array(tokens[4:], dtype=int)
    assert len(pix) == PLAN.fft_size**2 and pix.max() == 255 and pix.min() >= 0
    recon = recover_amplitudes(samples, scene.centers)
    write_reconstruction_csv(recon, tmp_path / "r.csv")
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 3
