import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rectldg.grid import (
    Grid,
    QField,
    RectDomain,
    ThetaField,
    lift_theta,
    make_grid,
    q_to_theta_s,
    read_field_csv,
    s2_field,
    write_field_csv,
)


def test_domain_rejects_nonpositive_sides():
    with pytest.raises(ValueError):
        RectDomain(0.0, 1.0)
    with pytest.raises(ValueError):
        RectDomain(1.0, -2.0)


@given(st.sampled_from([1.0, 1.25, 1.5, 2.0, 5.0]), st.sampled_from([1 / 8, 1 / 16, 1 / 32]))
def test_weights_integrate_area_and_perimeter(a, h):
    g = make_grid(RectDomain(a, 1.0), h)
    assert g.node_weights().sum() == pytest.approx(a)
    assert g.boundary_lengths().sum() == pytest.approx(2 * (a + 1.0))
    assert g.hx == pytest.approx(h) and g.hy == pytest.approx(h)


def test_masks_partition_nodes(square16):
    b = square16.boundary_mask()
    assert np.all(b ^ square16.interior_mask())
    assert b.sum() == 4 * (square16.nx - 1)


def test_nearest_node_and_center(rect32):
    j, i = rect32.nearest_node(0.75, 0.5)
    assert (rect32.x[i], rect32.y[j]) == (0.75, 0.5)
    X, Y = rect32.mesh()
    assert rect32.center_value(X + 2 * Y) == pytest.approx(1.75)


def test_interpolate_reproduces_bilinear(rect32):
    X, Y = rect32.mesh()
    f = 1 + 2 * X - Y + 0.5 * X * Y
    assert rect32.interpolate(f, 0.3137, 0.7712) == pytest.approx(1 + 0.6274 - 0.7712 + 0.5 * 0.3137 * 0.7712)


@given(st.floats(-3, 3), st.floats(0.1, 2))
def test_theta_lift_roundtrip(theta, s):
    g = Grid(RectDomain(1, 1), 3, 3)
    th = np.full(g.shape, theta)
    f = lift_theta(ThetaField(g, th), s)
    back, s_back = q_to_theta_s(f)
    assert np.allclose(s_back, s)
    assert np.allclose(np.cos(2 * back.theta), np.cos(2 * th)) and np.allclose(np.sin(2 * back.theta), np.sin(2 * th))
    assert np.allclose(s2_field(f), s * s)


def test_csv_roundtrip_bit_exact(tmp_path, rng):
    g = make_grid(RectDomain(1.5, 1.0), 1 / 8)
    f = QField(g, rng.normal(size=g.shape), rng.normal(size=g.shape) * 1e-7)
    path = tmp_path / "f.csv"
    write_field_csv(f, path)
    back = read_field_csv(path)
    assert back.grid.shape == g.shape
    assert np.array_equal(back.q11, f.q11) and np.array_equal(back.q12, f.q12)
    assert path.read_text().splitlines()[0] == "x,y,q11,q12,s2"


def test_csv_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_field_csv(p)


def test_qfield_arithmetic(square16):
    u = QField.uniform(square16, 1.0, -1.0)
    v = (u + u) * 0.5 - u
    assert v.max_abs_diff(QField.zeros(square16)) == 0.0
    with pytest.raises(ValueError):
        QField(square16, np.zeros((2, 2)), np.zeros((2, 2)))
