import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from eeqt.detectors import (
    DetectorSpec,
    detection_rate,
    in_backward_light_cone,
    make_window,
    on_backward_light_cone,
    total_coupling,
)
from eeqt.errors import ConfigurationError, DomainError
from eeqt.relkin import (
    Grid,
    InitialStateSpec,
    ModelParams,
    SpinorSlice,
    build_initial_state,
    bump_profile,
    charge_conjugate,
)

PARAMS = ModelParams()
GRID = Grid(-1.0, 1.0, 0.001)


def test_peak_value():
    w = make_window(DetectorSpec(0.0, 0.01, 1e-5), GRID, PARAMS)
    assert w.g.max() == pytest.approx(np.sqrt(2e-5 * PARAMS.mhat), rel=1e-14)
    assert w.g[GRID.index_of(0.0)] == w.g.max()


def test_compact_support():
    spec = DetectorSpec(0.3, 0.2, 1e-3)
    w = make_window(spec, GRID, PARAMS)
    outside = np.abs(GRID.x - 0.3) >= 0.1 - 1e-12
    assert np.all(w.g[outside] == 0)
    assert np.all(w.g[~outside] > 0)
    assert np.all(w.g[w.support] > 0)


def test_window_centre_override():
    spec = DetectorSpec(1.26, 0.02, 1e-3)
    w = make_window(spec, GRID, PARAMS, centre=0.0)
    assert w.g[GRID.index_of(0.0)] == pytest.approx(np.sqrt(2e-3 * PARAMS.mhat))


@pytest.mark.parametrize("dx, tol", [(0.0004, 1e-5), (0.0002, 1e-7)])
def test_coupling_integral_against_quadrature(dx, tol):
    spec = DetectorSpec(0.0, 0.01, 1e-5)
    exact = 2 * spec.height * PARAMS.mhat * quad(
        lambda x: bump_profile(x, 0.005) ** 2, -0.005, 0.005, epsabs=0, epsrel=1e-13)[0]
    for step in (dx, dx / 10):
        g = Grid(-0.05, 0.05, step)
        w = make_window(spec, g, PARAMS)
        assert step * w.g2.sum() == pytest.approx(exact, rel=tol)


@pytest.mark.parametrize("where", [(-0.99, 0.1), (0.95, 0.2)])
def test_support_outside_grid(where):
    with pytest.raises(ConfigurationError):
        make_window(DetectorSpec(where[0], where[1], 1e-3), GRID, PARAMS)


@pytest.mark.parametrize("field, value", [("width", 0.0), ("height", -1.0)])
def test_spec_domain(field, value):
    kw = {"x_pos": 0.0, "width": 0.1, "height": 1e-3}
    kw[field] = value
    with pytest.raises(DomainError):
        DetectorSpec(**kw)


def test_rate_zero_off_support():
    vals = np.zeros((4, GRID.n), dtype=complex)
    vals[0, :100] = 1.0
    w = make_window(DetectorSpec(0.0, 0.01, 1e-5), GRID, PARAMS)
    assert detection_rate(SpinorSlice(GRID, vals), w) == 0.0


@given(st.floats(1e-6, 1.0))
def test_rate_linear_in_height(height):
    vals = np.ones((4, GRID.n), dtype=complex)
    psi = SpinorSlice(GRID, vals)
    a = detection_rate(psi, make_window(DetectorSpec(0.0, 0.1, height), GRID, PARAMS))
    b = detection_rate(psi, make_window(DetectorSpec(0.0, 0.1, 2 * height), GRID, PARAMS))
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_rate_against_fine_grid():
    # packet centred on the detector; oracle is the same quantity at 10x resolution
    spec = InitialStateSpec("P", 1.0, 0.0)
    det = DetectorSpec(0.0, 0.01, 1e-5)
    rates = []
    for dx in (0.0002, 0.00002):
        g = Grid(-4.0, 4.0, dx)
        psi = build_initial_state(spec, PARAMS, g)
        rates.append(detection_rate(psi, make_window(det, g, PARAMS)))
    assert rates[0] == pytest.approx(rates[1], rel=1e-6)


def test_coupling_additive():
    a = make_window(DetectorSpec(-0.2, 0.3, 1e-3), GRID, PARAMS)
    b = make_window(DetectorSpec(0.0, 0.2, 5e-2), GRID, PARAMS)
    assert np.array_equal(total_coupling([a, b]), a.g2 + b.g2)


def test_rate_conjugation_invariant(packet_p):
    w = make_window(DetectorSpec(0.1, 0.4, 1e-3), packet_p.grid, PARAMS)
    assert detection_rate(charge_conjugate(packet_p), w) == pytest.approx(
        detection_rate(packet_p, w), rel=1e-14)


@given(st.floats(-3, 3), st.floats(0.01, 3), st.floats(0, 5))
def test_trajectory_starts_on_light_cone(x0, offset, tau):
    x_pos = x0 + offset
    spec = DetectorSpec(x_pos, 0.1, 1e-3)
    t, x = spec.trajectory(0.0, x0)
    assert on_backward_light_cone(float(t), float(x), x0)
    t, x = spec.trajectory(tau, x0)
    assert not in_backward_light_cone(float(t), float(x), x0)
    assert spec.frame_time(tau, x0) == pytest.approx(float(t))
