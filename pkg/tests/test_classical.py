import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eeqt.arrival import closed_form_boost
from eeqt.classical import (
    ClassicalPrediction,
    classical_arrival,
    classical_boost,
    classical_traversal,
)
from eeqt.errors import DomainError


@pytest.mark.parametrize("p0, expected", [
    (1.0, math.sqrt(2)),
    (0.25, math.sqrt(17)),
    (math.inf, 1.0),
])
def test_arrival_values(p0, expected):
    assert classical_arrival(p0, -1.0, 0.0) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("p0, expected", [
    (1.0, 1.26 * math.sqrt(2)),
    (0.75, 2.1),
    (math.inf, 1.26),
])
def test_traversal_values(p0, expected):
    assert classical_traversal(p0, 0.0, 1.26) == pytest.approx(expected, rel=1e-12)


def test_boost_values():
    assert classical_boost(1.7, 3.0, 0.0) == 1.7
    assert classical_boost(2.0, 0.0, 0.6) == pytest.approx(2.5)
    assert classical_boost(math.sqrt(2), 0.0, 0.6) == pytest.approx(1.25 * math.sqrt(2))


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
def test_nonpositive_momentum_rejected(bad):
    with pytest.raises(DomainError):
        classical_arrival(bad, -1.0, 0.0)
    with pytest.raises(DomainError):
        classical_traversal(bad, 0.0, 1.26)


def test_geometry_rejected():
    with pytest.raises(DomainError):
        classical_arrival(1.0, 0.0, -1.0)
    with pytest.raises(DomainError):
        classical_traversal(1.0, 1.26, 0.0)


@pytest.mark.parametrize("v", [1.0, -1.0, 1.5])
def test_superluminal_boost_rejected(v):
    with pytest.raises(DomainError):
        classical_boost(1.0, 0.0, v)


@given(st.floats(0.05, 50.0), st.floats(0.1, 5.0))
def test_times_exceed_light_travel(p0, length):
    assert classical_arrival(p0, -length, 0.0) > length
    assert classical_traversal(p0, 0.0, length) > length


@given(st.floats(0.0, 10.0), st.floats(-3.0, 3.0), st.floats(-0.95, 0.95))
def test_boost_matches_quantum_side_map(t, anchor, v):
    # both sides transform with the same affine map
    assert classical_boost(t, anchor, v) == pytest.approx(closed_form_boost(t, v, anchor), abs=1e-12)


@given(st.floats(0.1, 10.0), st.floats(-0.9, 0.9))
def test_boost_inverse(t, v):
    # boosting the anchor event (t, L) back recovers the rest-frame time
    L = 1.3
    t_v = classical_boost(t, L, v)
    x_v = (L - v * t) / math.sqrt(1 - v * v)
    assert classical_boost(t_v, x_v, -v) == pytest.approx(t, rel=1e-10)


def test_prediction_record():
    p = ClassicalPrediction.for_arrival(1.0, -1.0, 0.0, 0.6)
    assert p.t_arrival == pytest.approx(1.25 * math.sqrt(2))
    q = ClassicalPrediction.for_traversal(0.75, 0.0, 1.26)
    assert q.t_traversal == pytest.approx(2.1)
    assert q.t_arrival is None
