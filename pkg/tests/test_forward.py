import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rel, single_disk_scene
from smallinc.errors import NumericalError, ValidationError
from smallinc.forward import (
    NystromSolver,
    ProbeBC,
    _kress_weights,
    add_noise,
    exact_concentric_disk,
    read_trace_csv,
    solve_trace_perturbation,
    trace_rhs,
    write_trace_csv,
)
from smallinc.greens import BoundaryQuadrature, free_green_normal_x
from smallinc.model import DomainGeometry, Medium


@given(st.floats(-8, 8), st.floats(-8, 8), st.floats(0.5, 6))
def test_probe_bc_invariants(ex, ey, k):
    bc = ProbeBC.for_eta((ex, ey), k)
    assert bc.gamma**2 == pytest.approx(k * k - ex * ex - ey * ey, abs=1e-9 * (1 + k * k + ex * ex + ey * ey))
    assert abs(bc.eta @ bc.eta_perp) < 1e-12 and np.hypot(*bc.eta_perp) == pytest.approx(1.0)
    a = bc.direction
    assert a @ a == pytest.approx(k * k, abs=1e-9 * (1 + ex * ex + ey * ey))


def test_kress_weights_reproduce_log_moments():
    n = 64
    r = _kress_weights(n)
    s = 2 * np.pi * np.arange(n) / n
    assert abs(r.sum()) < 1e-12
    for m in (1, 3, 7):
        assert r @ np.cos(m * s) == pytest.approx(-2 * np.pi / m, rel=1e-12)


def test_zero_contrast_gives_zero_trace(quad256):
    scene = single_disk_scene(mu=1.0, eps=1.0)
    d = solve_trace_perturbation(scene, ProbeBC.for_eta((2.0, 1.0), 4.0), quad256)
    assert np.max(np.abs(d.values)) <= 1e-12


def test_scale_squared(quad256):
    bc = ProbeBC.for_eta((5.0, 2.0), 4.0)
    big = solve_trace_perturbation(single_disk_scene(scale=0.04), bc, quad256).values
    small = solve_trace_perturbation(single_disk_scene(scale=0.02), bc, quad256).values
    assert rel(4 * small, big) <= 1e-10


def test_dielectric_rhs_has_no_dipole(quad256):
    scene = single_disk_scene(mu=1.0, eps=3.0, scale=0.05)
    bc = ProbeBC.for_eta((1.0, 2.0), 4.0)
    e0, _ = bc.field(np.array([0.3, 0.1]))
    mono = 2 * 0.05**2 * 16 * (1 - 3.0) * np.pi * e0 * free_green_normal_x(quad256.points, quad256.normals, (0.3, 0.1), 4.0)
    np.testing.assert_allclose(trace_rhs(scene, bc, quad256), mono, rtol=1e-14)


def test_node_doubling():
    scene = single_disk_scene(center=(0.3, -0.2), scale=0.05)
    bc = ProbeBC.for_eta((3.0, 4.0), 4.0)
    d1 = solve_trace_perturbation(scene, bc, BoundaryQuadrature.on_circle(256)).values
    d2 = solve_trace_perturbation(scene, bc, BoundaryQuadrature.on_circle(512)).values
    assert np.max(np.abs(d2[::2] - d1)) / np.max(np.abs(d1)) <= 1e-6


def test_concentric_disk_convergence(quad256):
    """The leading-order model approaches the exact layered-disk trace."""
    med = Medium.from_wavenumber(4.0)
    bc = ProbeBC.for_eta((1.0, 0.7), 4.0)
    errs = []
    for rho in (0.1, 0.05, 0.025):
        scene = single_disk_scene(center=(0.0, 0.0), scale=rho)
        exact = exact_concentric_disk(rho, 2.0, 3.0, bc, med, quad256)
        errs.append(rel(solve_trace_perturbation(scene, bc, quad256).values, exact.values))
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] < 0.2


def test_exact_zero_contrast_and_residuals(quad256):
    med = Medium.from_wavenumber(3.0)
    bc = ProbeBC.for_eta((4.0, 1.0), 3.0)
    assert np.max(np.abs(exact_concentric_disk(0.1, 1.0, 1.0, bc, med, quad256).values)) <= 1e-12
    _, worst = exact_concentric_disk(0.1, 2.0, 3.0, bc, med, quad256, return_residuals=True)
    assert worst <= 1e-12


def test_exact_scales_like_area(quad256):
    med = Medium.from_wavenumber(4.0)
    bc = ProbeBC.for_eta((1.0, 0.7), 4.0)
    rho = np.array([0.1, 0.05, 0.025])
    mags = [exact_concentric_disk(r, 2.0, 3.0, bc, med, quad256).l2_norm() for r in rho]
    slope = np.polyfit(np.log(rho), np.log(mags), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_exact_rejects_bad_input(quad256):
    med = Medium.from_wavenumber(3.0)
    bc = ProbeBC.for_eta((1.0, 1.0), 3.0)
    with pytest.raises(ValidationError):
        exact_concentric_disk(1.0, 2.0, 3.0, bc, med, quad256)
    with pytest.raises(ValidationError):
        exact_concentric_disk(0.1, -2.0, 3.0, bc, med, quad256)


def test_resonant_wavenumber_rejected():
    with pytest.raises(NumericalError):
        NystromSolver(2.404825557695773, BoundaryQuadrature.on_circle(64))


def test_mismatched_wavenumber(quad256):
    with pytest.raises(ValidationError):
        solve_trace_perturbation(single_disk_scene(k=4.0), ProbeBC.for_eta((1.0, 0.0), 3.0), quad256)


def test_noise_contract(quad256):
    d = solve_trace_perturbation(single_disk_scene(), ProbeBC.for_eta((1.0, 2.0), 4.0), quad256)
    assert np.array_equal(add_noise(d, 0.0, 1).values, d.values)
    assert np.array_equal(add_noise(d, 0.01, 5).values, add_noise(d, 0.01, 5).values)
    noisy = add_noise(d, 0.01, 11)
    rms = np.sqrt(np.mean(np.abs(d.values) ** 2))
    ratio = np.sqrt(np.mean(np.abs(noisy.values - d.values) ** 2)) / rms
    assert 0.005 <= ratio <= 0.02
    with pytest.raises(ValidationError):
        add_noise(d, -0.1)


def test_trace_csv_round_trip(tmp_path):
    q = BoundaryQuadrature.on_circle(64, DomainGeometry.half())
    d = solve_trace_perturbation(single_disk_scene(), ProbeBC.for_eta((1.0, 2.0), 4.0), q)
    write_trace_csv(d, tmp_path / "t.csv")
    back = read_trace_csv(tmp_path / "t.csv")
    assert np.array_equal(back.values, d.values)
    assert np.array_equal(back.quadrature.aperture_mask, q.aperture_mask)
