"""Individual detection events: the stochastic form of the algorithm.

A chain draws r, evolves the damped field until the detector loss
1 - ||Psi||^2 reaches r, picks a detector with probability proportional to
its rate at that moment and collapses the state onto it.

Random numbers come from SplitMix64 used as a counter-based generator:
variate number c of a stream with seed s is

    mix(s + (c + 1) * 0x9E3779B97F4A7C15 mod 2^64)

with the standard SplitMix64 finalizer ``mix``, mapped to (0, 1) as
(top 53 bits + 0.5) / 2^53.  This is exactly the sequence of the reference
SplitMix64 generator seeded with s, so it is platform independent and any
variate can be computed without generating its predecessors.  Chain number
k owns the eight counters 8k .. 8k+7:

    slot 0  r for the first event        slot 2  r for the second event
    slot 1  detector choice, 1st event   slot 3  detector choice, 2nd event
    slot 5  branch choice (batch traversal sampler only)

Two samplers are provided.  ``sample_event`` and ``sample_traversal_chain``
step the propagator for every chain.  The batch samplers reuse the
deterministic records of the density pipelines: the evolution up to the first
event does not depend on the chain, so inverting the recorded loss curve is
the same computation done once.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .arrival import ArrivalResult, DensityCurve
from .detectors import DetectorSpec, in_backward_light_cone, make_window
from .errors import ConfigurationError
from .propagator import AlignedWindow, GridSpec, Propagator, cumulative_trapezoid
from .relkin import InitialStateSpec, ModelParams, SpinorSlice, build_initial_state, free_propagate
from .traversal import TraversalResult

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
SLOTS = 8
SLOT_R1, SLOT_U1, SLOT_R2, SLOT_U2, SLOT_BRANCH = 0, 1, 2, 3, 5

NO_EVENT = -1
D1, D2 = 0, 1
BUCKETS = ("traversal", "d2_first", "d1_only", "never")


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix_uniform(seed: int, counters) -> np.ndarray:
    """Uniform variates in (0, 1) for the given counters of stream ``seed``."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2**64) + (c + np.uint64(1)) * _GOLDEN
        bits = _mix(z) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def splitmix_raw(seed: int, counter: int) -> int:
    """The 64-bit output, for comparison with reference implementations."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2**64) + np.uint64(counter + 1) * _GOLDEN
        return int(_mix(np.array([z]))[0])


@dataclass
class RngStream:
    seed: int
    counter: int = 0

    def next(self) -> float:
        u = float(splitmix_uniform(self.seed, [self.counter])[0])
        self.counter += 1
        return u

    def block(self, n: int) -> np.ndarray:
        u = splitmix_uniform(self.seed, np.arange(self.counter, self.counter + n, dtype=np.uint64))
        self.counter += n
        return u

    @classmethod
    def for_chain(cls, seed: int, chain: int) -> "RngStream":
        return cls(seed, SLOTS * chain)


@dataclass(frozen=True)
class EventRecord:
    detector: int          # index into the detector list, NO_EVENT for the sentinel
    tau: float = float("nan")
    t: float = float("nan")
    x: float = float("nan")
    terminal: bool = True

    @property
    def is_event(self) -> bool:
        return self.detector != NO_EVENT


NO_EVENT_RECORD = EventRecord(NO_EVENT)


def _event(detector: int, tau: float, spec: DetectorSpec, x0: float) -> EventRecord:
    t, x = spec.trajectory(tau, x0)
    t, x = float(t), float(x)
    if not tau > 0 or in_backward_light_cone(t, x, x0):
        raise AssertionError(f"event at tau={tau} lies inside the backward light cone")
    return EventRecord(detector, float(tau), t, x, spec.destructive)


def invert_loss(r, tau: np.ndarray, loss: np.ndarray):
    """Proper time at which the cumulative loss first reaches r (linear
    interpolation between steps); nan where r exceeds the final loss.

    Returns (tau_event, step index n with loss[n] < r <= loss[n+1], fraction)."""
    r = np.asarray(r, dtype=float)
    n = np.searchsorted(loss, r, side="left") - 1
    hit = (n >= 0) & (n < len(loss) - 1)
    n = np.clip(n, 0, len(loss) - 2)
    lam = (r - loss[n]) / (loss[n + 1] - loss[n])
    t = np.where(hit, tau[n] + lam * (tau[n + 1] - tau[n]), np.nan)
    return t, n, lam


# -- literal sampler ------------------------------------------------------------


@dataclass
class _Model:
    propagator: Propagator
    detectors: list
    shifts: list
    x0: float
    origin: float


def _build_model(detectors, grid: GridSpec, params: ModelParams, x0: float, origin: float,
                 anchor: int = 0) -> _Model:
    space = grid.spatial
    ref = detectors[anchor].x_pos
    windows = [AlignedWindow(make_window(d, space, params, centre=d.x_pos - origin), ref - d.x_pos)
               for d in detectors]
    return _Model(Propagator(grid, windows, params), list(detectors),
                  [w.shift for w in windows], x0, origin)


def _run_until(model: _Model, omega: SpinorSlice, tau_start: float, r: float, u: float,
               params: ModelParams):
    """Evolve from ``omega`` until the cumulative detector loss reaches r."""
    prop = model.propagator
    total = 0.0
    prev = None
    for n, tau, buf, rates, loss, *_ in prop.iterate(omega, tau_start):
        total += float(loss.sum())
        if prev is not None and total >= r:
            p_tau, p_vals, p_rates, p_loss = prev
            lam = (r - p_loss) / (total - p_loss)
            tau1 = p_tau + lam * (tau - p_tau)
            vals = (1 - lam) * p_vals + lam * buf[:, : prop.n]
            rk = (1 - lam) * p_rates + lam * rates
            k = int(np.searchsorted(np.cumsum(rk), u * rk.sum(), side="right"))
            k = min(k, len(rk) - 1)
            return tau1, k, vals
        prev = (tau, buf[:, : prop.n].copy(), rates.copy(), total)
    return None


def _collapse_onto(model: _Model, k: int, values: np.ndarray, params: ModelParams) -> SpinorSlice:
    """Normalized g_k Psi in detector k's frame."""
    prop = model.propagator
    psi = SpinorSlice(prop.space, values)
    psi = free_propagate(psi, model.shifts[k], params)
    w = prop.windows[k].window
    v = psi.values * w.g
    norm2 = prop.space.dx * float((v.real**2 + v.imag**2).sum())
    return psi.replace(v / np.sqrt(norm2))


def sample_event(initial: InitialStateSpec, detectors, grid: GridSpec, rng: RngStream,
                 params: ModelParams = ModelParams(), origin: float | None = None,
                 omega0: SpinorSlice | None = None):
    """One event by direct evolution.

    Grid coordinates are measured from ``origin`` (default: the first
    detector), and the field is evolved in the first detector's frame.
    Returns (EventRecord, collapsed state or None).  Consumes two variates.
    """
    detectors = list(detectors)
    if not detectors:
        raise ConfigurationError("need at least one detector")
    if origin is None:
        origin = detectors[0].x_pos
    r, u = rng.next(), rng.next()
    model = _build_model(detectors, grid, params, initial.x0, origin)
    if omega0 is None:
        omega0 = build_initial_state(initial, params, grid.spatial,
                                     eval_time=initial.x0 - detectors[0].x_pos, origin=origin)
    hit = _run_until(model, omega0, 0.0, r, u, params)
    if hit is None:
        return NO_EVENT_RECORD, None
    tau1, k, vals = hit
    return _event(k, tau1, detectors[k], initial.x0), _collapse_onto(model, k, vals, params)


def sample_traversal_chain(initial: InitialStateSpec, d1: DetectorSpec, d2: DetectorSpec,
                           grid: GridSpec, rng: RngStream, params: ModelParams = ModelParams(),
                           omega0: SpinorSlice | None = None):
    """Events of one chain; returns (list of EventRecord, bucket name).

    Consumes the first four slots of the stream (r1, u1, r2, u2) when the
    stream starts at a chain boundary."""
    first, state = sample_event(initial, [d1, d2], grid, rng, params, omega0=omega0)
    r2, u2 = rng.next(), rng.next()
    if not first.is_event:
        return [], "never"
    if first.detector == D2:
        return [first], "d2_first"
    # D1 fired: it switches off, D2 keeps watching from D2's frame
    state = free_propagate(state, d1.x_pos - d2.x_pos, params)
    model = _build_model([d2], grid, params, initial.x0, d1.x_pos)
    hit = _run_until(model, state, first.tau, r2, u2, params)
    if hit is None:
        return [EventRecord(D1, first.tau, first.t, first.x, False)], "d1_only"
    tau2, _, _ = hit
    return [EventRecord(D1, first.tau, first.t, first.x, False),
            _event(D2, tau2, d2, initial.x0)], "traversal"


def traversal_time(events, d1: DetectorSpec, d2: DetectorSpec) -> float:
    return events[1].tau - events[0].tau - (d2.x_pos - d1.x_pos)


# -- batch samplers --------------------------------------------------------------


@dataclass
class EventBatch:
    chain: np.ndarray
    detector: np.ndarray
    tau: np.ndarray
    t: np.ndarray
    x: np.ndarray
    bucket: np.ndarray            # index into BUCKETS (traversal) or 0/3 for arrival
    n_chains: int
    traversal: np.ndarray = field(default_factory=lambda: np.empty(0))

    def counts(self) -> dict:
        """Chains per outcome bucket."""
        return {name: int(np.unique(self.chain[self.bucket == i]).size)
                for i, name in enumerate(BUCKETS)}

    def to_csv(self, path, d1_tau=None):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write("# tau, t in Angstrom/c; x in Angstrom; detector 0 = D1 (or the single detector)\n")
            w = csv.writer(fh)
            w.writerow(["chain", "event", "detector", "tau", "t", "x", "bucket"])
            order = np.lexsort((self.tau, self.chain))
            prev, idx = None, 0
            for i in order:
                idx = idx + 1 if self.chain[i] == prev else 0
                prev = self.chain[i]
                w.writerow([int(self.chain[i]), idx, int(self.detector[i]), repr(float(self.tau[i])),
                            repr(float(self.t[i])), repr(float(self.x[i])),
                            BUCKETS[int(self.bucket[i])]])
        return path


def _chain_uniforms(seed: int, chains: np.ndarray, slot: int) -> np.ndarray:
    return splitmix_uniform(seed, chains.astype(np.uint64) * np.uint64(SLOTS) + np.uint64(slot))


def sample_arrival_batch(result: ArrivalResult, seed: int, n_events: int | None = None,
                         n_chains: int | None = None, chunk: int = 2**22,
                         max_chains: int = 10**10) -> EventBatch:
    """Arrival events from the recorded loss curve of ``result``.

    Either ``n_chains`` chains are run, or chains are run in chunks until
    ``n_events`` detections have been collected.  Needs a result computed
    with keep_record=True."""
    rec = result.record
    if rec is None:
        raise ConfigurationError("arrival result carries no evolution record")
    if (n_events is None) == (n_chains is None):
        raise ConfigurationError("give exactly one of n_events, n_chains")
    cfg = result.config
    x_d, x0 = cfg["detector"]["x_pos"], cfg["initial"]["x0"]
    loss = rec.absorbed[0]
    chains, taus = [], []
    start, found = 0, 0
    limit = n_chains if n_chains is not None else max_chains
    while start < limit and (n_events is None or found < n_events):
        idx = np.arange(start, min(start + chunk, limit), dtype=np.int64)
        r = _chain_uniforms(seed, idx, SLOT_R1)
        hit = r <= loss[-1]
        t, _, _ = invert_loss(r[hit], rec.tau, loss)
        chains.append(idx[hit])
        taus.append(t)
        found += int(hit.sum())
        start = int(idx[-1]) + 1
    chain = np.concatenate(chains)
    tau = np.concatenate(taus)
    if n_events is not None:
        chain, tau = chain[:n_events], tau[:n_events]
        start = int(chain[-1]) + 1 if chain.size else start
    if np.any(tau <= 0):
        raise AssertionError("event inside the backward light cone")
    return EventBatch(chain, np.zeros(chain.size, int), tau, tau + x0 - x_d,
                      np.full(chain.size, x_d), np.zeros(chain.size, int), start)


def _append(out, chains, detector, tau, bucket):
    out["chain"].append(chains)
    out["detector"].append(np.full(chains.size, detector))
    out["tau"].append(tau)
    out["bucket"].append(np.broadcast_to(bucket, chains.shape))


def sample_traversal_batch(result: TraversalResult, seed: int, n_chains: int | None = None,
                           n_traversals: int | None = None, chunk: int = 2**18) -> EventBatch:
    """Traversal chains from the phase-A record and the strided branches.

    After a D1 event between branch times tau1_j and tau1_(j+1) the chain
    continues on branch j+1 with probability equal to the interpolation
    fraction and on branch j otherwise, which reproduces the linear
    interpolation in tau1 of the density pipeline."""
    rec = result.phase_a
    if rec is None:
        raise ConfigurationError("traversal result carries no phase-A record")
    if (n_traversals is None) == (n_chains is None):
        raise ConfigurationError("give exactly one of n_traversals, n_chains")
    cfg = result.config
    x0 = cfg["initial"]["x0"]
    x1, x2 = cfg["detector1"]["x_pos"], cfg["detector2"]["x_pos"]
    d = x2 - x1
    dtau = cfg["grid"]["dtau"]
    total = rec.total_absorbed
    nodes = result.joint.branch_tau1
    branches = result.branches
    out = {k: [] for k in ("chain", "detector", "tau", "bucket")}
    trav = []
    start, found = 0, 0
    limit = n_chains if n_chains is not None else 10**12
    while start < limit and (n_traversals is None or found < n_traversals):
        idx = np.arange(start, min(start + chunk, limit), dtype=np.int64)
        start = int(idx[-1]) + 1
        r1 = _chain_uniforms(seed, idx, SLOT_R1)
        u1 = _chain_uniforms(seed, idx, SLOT_U1)
        tau1, n, lam = invert_loss(r1, rec.tau, total)
        hit = np.isfinite(tau1)
        rates = (1 - lam) * rec.rates[:, n] + lam * rec.rates[:, np.minimum(n + 1, rec.tau.size - 1)]
        pick_d2 = u1 * rates.sum(axis=0) >= rates[0]
        first_d2 = hit & pick_d2
        first_d1 = hit & ~pick_d2
        never = ~hit
        _append(out, idx[first_d2], D2, tau1[first_d2], 1)
        _append(out, idx[never], NO_EVENT, np.full(never.sum(), np.nan), 3)
        # second event for D1-first chains
        ids = idx[first_d1]
        t1 = tau1[first_d1]
        pos = np.clip(np.searchsorted(nodes, t1) - 1, 0, len(nodes) - 2)
        frac = np.clip((t1 - nodes[pos]) / (nodes[pos + 1] - nodes[pos]), 0.0, 1.0)
        ub = _chain_uniforms(seed, ids, SLOT_BRANCH)
        j = pos + (ub < frac)
        r2 = _chain_uniforms(seed, ids, SLOT_R2)
        tau2 = np.full(ids.size, np.nan)
        for b in np.unique(j):
            m = j == b
            br = branches[b]
            lags = np.arange(br.absorbed.size) * dtau
            lag, _, _ = invert_loss(r2[m], lags, br.absorbed)
            tau2[m] = t1[m] + lag
        second = np.isfinite(tau2)
        _append(out, ids, D1, t1, np.where(second, 0, 2))
        _append(out, ids[second], D2, tau2[second], 0)
        trav.append(tau2[second] - t1[second] - d)
        found += int(second.sum())
    chain = np.concatenate(out["chain"])
    det = np.concatenate(out["detector"])
    tau = np.concatenate(out["tau"])
    bucket = np.concatenate(out["bucket"])
    xpos = np.where(det == D1, x1, np.where(det == D2, x2, np.nan))
    t = tau + x0 - xpos
    ok = det != NO_EVENT
    if np.any(tau[ok] <= 0):
        raise AssertionError("event inside the backward light cone")
    return EventBatch(chain, det, tau, t, xpos, bucket, start, np.concatenate(trav))


def density_cdf(curve: DensityCurve):
    """Cumulative distribution of a sampled density (trapezoid, renormalized)."""
    c = cumulative_trapezoid(curve.values, curve.abscissa)
    c = c / c[-1]
    return lambda t: np.interp(t, curve.abscissa, c, left=0.0, right=1.0)


def ks_distance(samples, curve: DensityCurve) -> float:
    """Kolmogorov-Smirnov distance between samples and a density curve."""
    return float(stats.kstest(np.asarray(samples), density_cdf(curve)).statistic)


def mean_with_error(samples):
    """(mean, standard error of the mean)."""
    x = np.asarray(samples, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))
