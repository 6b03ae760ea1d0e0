import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smallinc.errors import NumericalError, ValidationError
from smallinc.polarizability import (
    Disk,
    Ellipse,
    FourierShape,
    load_fourier_shape,
    ptensor,
    ptensor_disk,
    ptensor_nystrom,
)


def rot(phi):
    return np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])


def test_disk_closed_form_examples():
    np.testing.assert_allclose(ptensor_disk(1, 1, np.pi).entries, np.pi * np.eye(2), rtol=1e-15)
    np.testing.assert_allclose(ptensor_disk(1, 3, np.pi).entries, 1.5 * np.pi * np.eye(2), rtol=1e-15)
    assert ptensor_disk(1, 1e12, np.pi).scalar() == pytest.approx(2 * np.pi, rel=1e-11)
    ball = ptensor_disk(1, 2, 4 * np.pi / 3, d=3)
    np.testing.assert_allclose(ball.entries, 3 * 2 / 5 * 4 * np.pi / 3 * np.eye(3), rtol=1e-15)


@pytest.mark.parametrize("args", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
def test_disk_rejects_nonpositive(args):
    with pytest.raises(ValidationError):
        ptensor_disk(*args)


@pytest.mark.parametrize("muj", [0.1, 3.0, 100.0])
def test_nystrom_matches_disk(muj):
    num = ptensor_nystrom(Disk(), 1.0, muj, 256)
    np.testing.assert_allclose(num.entries, ptensor_disk(1.0, muj, np.pi).entries, rtol=1e-8, atol=1e-12)


def test_ellipse_closed_form():
    # classical depolarisation factors for an ellipse with semi-axes a (x) and b (y)
    a, b, c = 1.0, 0.4, 5.0
    area = np.pi * a * b
    m = ptensor_nystrom(Ellipse(a, b), 1.0, c).entries
    np.testing.assert_allclose(np.diag(m), [area * (1 + (c - 1) * b / (b + c * a)), area * (1 + (c - 1) * a / (a + c * b))], rtol=1e-10)


def test_equal_contrast_gives_area_identity():
    e = Ellipse(1.0, 0.5, 0.3)
    np.testing.assert_allclose(ptensor_nystrom(e, 2.0, 2.0).entries, e.area * np.eye(2), rtol=1e-12, atol=1e-14)


@given(st.floats(0, np.pi))
def test_rotation_equivariance(phi):
    base = ptensor_nystrom(Ellipse(1.0, 0.5), 1.0, 4.0).entries
    turned = ptensor_nystrom(Ellipse(1.0, 0.5, phi), 1.0, 4.0).entries
    np.testing.assert_allclose(turned, rot(phi) @ base @ rot(phi).T, rtol=1e-8, atol=1e-10)


@given(st.floats(-3, 3))
def test_symmetric_positive_definite(log_c):
    t = ptensor_nystrom(FourierShape((1.0, 0.1, 0.15), (0.05, 0.0)), 1.0, 10.0**log_c)
    assert np.max(np.abs(t.entries - t.entries.T)) <= 1e-10 * np.max(np.abs(t.entries))
    assert np.all(t.eigenvalues > 0)


def test_node_doubling_converges():
    shape = FourierShape((1.0, 0.0, 0.2), (0.0, 0.1))
    a = ptensor_nystrom(shape, 1.0, 3.0, 256).entries
    b = ptensor_nystrom(shape, 1.0, 3.0, 512).entries
    assert np.linalg.norm(a - b) / np.linalg.norm(b) <= 1e-6
    ptensor_nystrom(shape, 1.0, 3.0, 256, check_convergence=True)


def test_scaling_by_two():
    small = ptensor_nystrom(Ellipse(1.0, 0.5, 0.2), 1.0, 3.0).entries
    big = ptensor_nystrom(Ellipse(2.0, 1.0, 0.2), 1.0, 3.0).entries
    np.testing.assert_allclose(big, 4 * small, rtol=1e-10)


def test_bad_node_count():
    with pytest.raises(ValidationError):
        ptensor_nystrom(Disk(), 1.0, 2.0, 31)


def test_degenerate_contrast_detected():
    with pytest.raises((NumericalError, ValidationError)):
        ptensor_nystrom(Disk(), 1.0, 0.0)


def test_fourier_file(tmp_path):
    path = tmp_path / "shape.txt"
    path.write_text("# n a_n b_n\n0 1.0 0\n2 0.2 0.1\n")
    shape = load_fourier_shape(path)
    curve = shape.curve(128)
    assert curve.contains_origin() and curve.is_simple()
    assert ptensor(shape, 1.0, 2.0).is_symmetric
    assert shape.area == pytest.approx(curve.area, rel=1e-12)


def test_ptensor_dispatch():
    assert isinstance(ptensor(Disk(), 1, 3).entries, np.ndarray)
    np.testing.assert_allclose(ptensor(Disk(), 1, 3).entries, 1.5 * np.pi * np.eye(2))
