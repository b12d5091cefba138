import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eeqt.arrival import run_arrival
from eeqt.detectors import DetectorSpec
from eeqt.errors import ConfigurationError
from eeqt.mc_events import (
    BUCKETS,
    NO_EVENT_RECORD,
    SLOT_R1,
    SLOTS,
    RngStream,
    invert_loss,
    ks_distance,
    mean_with_error,
    sample_arrival_batch,
    sample_event,
    splitmix_raw,
    splitmix_uniform,
)
from eeqt.propagator import GridSpec
from eeqt.relkin import InitialStateSpec, build_initial_state, charge_conjugate

# a strong, wide detector on a small grid: most chains fire, runs take seconds
INITIAL = InitialStateSpec("P", 1.0, -1.0)
DET = DetectorSpec(0.0, 0.2, 1e-2)
GRID = GridSpec(-6.0, 3.0, 0.004, tau_cut=4.5)


@pytest.fixture(scope="module")
def strong():
    return run_arrival(INITIAL, DET, GRID, keep_record=True)


# --- random numbers -------------------------------------------------------------------

def test_splitmix_reference_sequence():
    # first outputs of the reference SplitMix64 generator seeded with 0
    assert splitmix_raw(0, 0) == 0xE220A8397B1DCDAF
    assert splitmix_raw(0, 1) == 0x6E789E6AA1B965F4
    assert splitmix_raw(0, 2) == 0x06C45D188009454F


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40))
def test_uniform_matches_raw(seed, counter):
    u = splitmix_uniform(seed, [counter])[0]
    assert u == ((splitmix_raw(seed, counter) >> 11) + 0.5) * 2.0**-53
    assert 0 < u < 1


def test_stream_block_equals_next():
    a, b = RngStream(42), RngStream(42)
    block = b.block(10)
    assert [a.next() for _ in range(10)] == list(block)
    assert a.counter == b.counter == 10


def test_chain_streams_are_disjoint():
    s = RngStream.for_chain(7, 3)
    assert s.counter == 3 * SLOTS
    assert s.next() == splitmix_uniform(7, [3 * SLOTS + SLOT_R1])[0]


def test_uniform_moments():
    u = splitmix_uniform(2024, np.arange(200_000))
    assert abs(u.mean() - 0.5) < 3e-3
    assert abs(u.var() - 1 / 12) < 1e-3


# --- loss inversion ---------------------------------------------------------------------

def test_invert_loss_interpolates():
    tau = np.array([0.0, 1.0, 2.0, 3.0])
    loss = np.array([0.0, 0.1, 0.3, 0.4])
    t, n, lam = invert_loss([0.05, 0.2, 0.4, 0.5], tau, loss)
    assert t[:3] == pytest.approx([0.5, 1.5, 3.0])
    assert np.isnan(t[3])
    assert list(n[:3]) == [0, 1, 2]


@given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=50), st.floats(0.0, 1.0))
def test_invert_loss_inverse(increments, r):
    loss = np.concatenate([[0.0], np.cumsum(increments)])
    tau = np.linspace(0.0, 1.0, loss.size)
    r = r * loss[-1]
    t, _, _ = invert_loss(r, tau, loss)
    if r > 0:
        assert np.interp(t, tau, loss) == pytest.approx(r, rel=1e-9, abs=1e-15)


# --- batch sampler -------------------------------------------------------------------------

def test_batch_needs_record(arrival_detector, coarse_arrival_grid):
    res = run_arrival(INITIAL, arrival_detector, coarse_arrival_grid)
    with pytest.raises(ConfigurationError):
        sample_arrival_batch(res, 1, n_events=10)


def test_batch_needs_one_stopping_rule(strong):
    with pytest.raises(ConfigurationError):
        sample_arrival_batch(strong, 1)
    with pytest.raises(ConfigurationError):
        sample_arrival_batch(strong, 1, n_events=5, n_chains=5)


def test_batch_fraction_matches_probability(strong):
    b = sample_arrival_batch(strong, 3, n_chains=200_000)
    assert b.n_chains == 200_000
    frac = b.tau.size / b.n_chains
    se = np.sqrt(strong.P_inf * (1 - strong.P_inf) / b.n_chains)
    assert abs(frac - strong.P_inf) < 4 * se


def test_batch_event_coordinates(strong):
    b = sample_arrival_batch(strong, 5, n_events=1000)
    assert b.tau.size == 1000
    assert np.all(b.tau > 0)
    assert np.allclose(b.t, b.tau - 1.0)
    assert np.all(b.x == 0.0)
    assert np.all(np.diff(b.chain) > 0)


def test_batch_deterministic(strong):
    a = sample_arrival_batch(strong, 11, n_events=500)
    b = sample_arrival_batch(strong, 11, n_events=500, chunk=97)
    assert np.array_equal(a.chain, b.chain)
    assert np.array_equal(a.tau, b.tau)
    c = sample_arrival_batch(strong, 12, n_events=500)
    assert not np.array_equal(a.chain, c.chain)


def test_batch_ks(strong):
    b = sample_arrival_batch(strong, 1, n_events=10_000)
    assert ks_distance(b.tau, strong.proper_density) < 0.02
    mean, se = mean_with_error(b.t)
    assert abs(mean - strong.T_a0) < 4 * se


def test_batch_csv(strong, tmp_path):
    b = sample_arrival_batch(strong, 5, n_events=20)
    path = b.to_csv(tmp_path / "events.csv")
    lines = path.read_text().splitlines()
    assert lines[1] == "chain,event,detector,tau,t,x,bucket"
    assert len(lines) == 22
    assert float(lines[2].split(",")[3]) == b.tau[0]
    assert b.counts()[BUCKETS[0]] == 20


def test_ks_distance_detects_shift(strong):
    b = sample_arrival_batch(strong, 1, n_events=2000)
    assert ks_distance(b.tau + 0.5, strong.proper_density) > 0.2


def test_mean_with_error():
    m, se = mean_with_error([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5
    assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


# --- literal sampler ------------------------------------------------------------------------

def _first_chains(batch, hit: bool, count: int):
    detected = set(batch.chain.tolist())
    out = [k for k in range(batch.n_chains) if (k in detected) == hit]
    return out[:count]


def test_literal_matches_batch(strong):
    b = sample_arrival_batch(strong, 9, n_chains=50)
    for k in _first_chains(b, True, 2):
        ev, state = sample_event(INITIAL, [DET], GRID, RngStream.for_chain(9, k))
        assert ev.is_event and ev.detector == 0 and ev.terminal
        assert ev.tau == pytest.approx(b.tau[b.chain == k][0], abs=1e-9)
        assert ev.t == pytest.approx(ev.tau - 1.0)
        assert state.norm2() == pytest.approx(1.0, abs=1e-12)


def test_literal_sentinel(strong):
    b = sample_arrival_batch(strong, 9, n_chains=50)
    k = _first_chains(b, False, 1)[0]
    ev, state = sample_event(INITIAL, [DET], GRID, RngStream.for_chain(9, k))
    assert ev == NO_EVENT_RECORD
    assert not ev.is_event
    assert state is None


def test_literal_conjugation_same_events(params):
    omega0 = build_initial_state(INITIAL, params, GRID.spatial, eval_time=-1.0, origin=0.0)
    conj = charge_conjugate(omega0)
    for k in (0, 1, 2):
        a, _ = sample_event(INITIAL, [DET], GRID, RngStream.for_chain(21, k), omega0=omega0)
        b, _ = sample_event(INITIAL, [DET], GRID, RngStream.for_chain(21, k), omega0=conj)
        assert a.detector == b.detector
        if a.is_event:
            assert a.tau == pytest.approx(b.tau, abs=1e-10)


def test_literal_needs_detector():
    with pytest.raises(ConfigurationError):
        sample_event(INITIAL, [], GRID, RngStream(0))
