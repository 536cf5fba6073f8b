import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rectldg import QField, RectDomain, make_grid
from rectldg.boundary import NONTRIVIAL_SEED, TABLE_STATES
from rectldg.classify import (
    LABELS,
    classify,
    detect_defects,
    effective_vertex_degrees,
    probe_offset,
)
from rectldg.continuation import limit_seed, theta_seed
from rectldg.grid import ThetaField, lift_theta
from rectldg.solvers import newton_solve

from helpers import params


@pytest.mark.parametrize("a", [1.0, 1.5])
@pytest.mark.parametrize("name", list(TABLE_STATES))
def test_table_lifts_and_their_equilibria(a, name):
    g = make_grid(RectDomain(a, 1.0), 1 / 32)
    p = params(0.02)
    seed = theta_seed(g, p, TABLE_STATES[name])
    assert classify(seed).label == name
    f, rep = newton_solve(seed, p)
    assert rep.converged and classify(f).label == name


@given(st.floats(1e-3, 1e3), st.sampled_from(list(TABLE_STATES)))
def test_classification_is_scale_invariant(c, name):
    g = make_grid(RectDomain(1.5, 1.0), 1 / 16)
    f = theta_seed(g, params(0.1), TABLE_STATES[name])
    assert classify(f * c).label == classify(f).label == name


@pytest.mark.parametrize("a,label", [(1.0, "WORS"), (1.5, "BD2")])
def test_large_epsilon_classes(a, label):
    g = make_grid(RectDomain(a, 1.0), 1 / 32)
    p = params(5.0)
    f, _ = newton_solve(limit_seed(g, p), p)
    assert classify(f).label == label


def test_bd1_is_the_sign_flip_of_bd2(rect32):
    p = params(5.0)
    f, _ = newton_solve(limit_seed(rect32, p), p)
    assert classify(f * -1.0).label == "BD1"


def test_degenerate_inputs_are_unknown(square16):
    assert classify(QField.zeros(square16)).label == "Unknown"
    nan = QField(square16, np.full(square16.shape, np.nan), np.zeros(square16.shape))
    assert classify(nan).label == "Unknown"
    assert set(LABELS) >= {"WORS", "BD1", "BD2", "Unknown", *TABLE_STATES}


def test_probe_offset_respects_ramp(rect32):
    kx, ky = probe_offset(rect32, 0.03)
    assert kx * rect32.hx >= 0.06 and ky * rect32.hy >= 0.06


def test_point_defect_winding_and_location():
    g = make_grid(RectDomain(1.0, 1.0), 1 / 64)
    X, Y = g.mesh()
    x0, y0 = 0.4, 0.55
    r = np.hypot(X - x0, Y - y0)
    th = 0.5 * np.arctan2(Y - y0, X - x0)
    f = lift_theta(ThetaField(g, th), np.tanh(r / 0.03))
    ds = detect_defects(f)
    assert len(ds.points) == 1
    x, y, w = ds.points[0]
    assert w == 0.5 and abs(x - x0) < 2 * g.hx and abs(y - y0) < 2 * g.hy
    ds = detect_defects(lift_theta(ThetaField(g, -th), np.tanh(r / 0.03)))
    assert ds.points[0][2] == -0.5


def test_wors_has_diagonal_lines(square16):
    p = params(5.0)
    f, _ = newton_solve(limit_seed(square16, p), p)
    names = {ln["edge_or_diagonal"] for ln in detect_defects(f).lines}
    assert {"diagonal:main", "diagonal:anti"} <= names


def test_effective_vertex_degrees_of_seed():
    g = make_grid(RectDomain(1.0, 1.0), 1 / 64)
    f = theta_seed(g, params(0.05), NONTRIVIAL_SEED)
    vd = effective_vertex_degrees(f)
    assert vd.values == (1.25, -0.25, -0.75, -0.25)
    assert vd.total + detect_defects(f).total_winding == 0.0


@pytest.mark.parametrize("name", list(TABLE_STATES))
def test_effective_degrees_of_table_states(name):
    g = make_grid(RectDomain(1.5, 1.0), 1 / 32)
    vd = effective_vertex_degrees(theta_seed(g, params(0.05), TABLE_STATES[name]))
    assert all(abs(w) == 0.25 for w in vd) and vd.total == 0.0
