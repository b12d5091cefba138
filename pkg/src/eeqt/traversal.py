"""Traversal time between a non-destructive detector D1 and a destructive D2.

Phase A evolves the field with both detectors switched on and records the D1
rate r1(tau1).  At strided branch times tau1_j the state is collapsed by g1
and phase B evolves it with D2 alone, giving conditional rates r2_j as a
function of the lag s = tau2 - tau1.  The joint density is assembled with
hat-function weights w_j = int r1(tau) hat_j(tau) dtau, i.e. linear
interpolation in tau1 at fixed lag.
"""
from __future__ import annotations

import gzip
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .arrival import TRAVERSAL_TAU_CUT, DensityCurve, _lorentz, richardson_error, tau_cut_for
from .detectors import CouplingWindow, DetectorSpec, make_window
from .errors import ConfigurationError, NoDetectionError, NumericalInstabilityError, UsageError
from .io import to_jsonable
from .propagator import (
    NORM_INCREASE_TOL,
    AlignedWindow,
    BranchBatch,
    EvolutionRecord,
    GridSpec,
    Propagator,
    bookkeeping_error,
)
from .relkin import (
    InitialStateSpec,
    ModelParams,
    SpinorSlice,
    active_blocks,
    build_initial_state,
    free_propagate,
)

log = logging.getLogger(__name__)

NO_DOUBLE_DETECTION = 1e-10
SUPPORT_THRESHOLD = 1e-6
MIN_BRANCHES = 8
TRAVERSAL_WALLS = (-8.0, 8.0)
TRAVERSAL_STEPS = (0.0006, 0.001)   # (dx_B, dx_A)


def traversal_grid(p0: float, dx: float = TRAVERSAL_STEPS[0], tau_cut: float | None = None,
                   walls=TRAVERSAL_WALLS) -> GridSpec:
    """Grid coordinates are measured from the first detector."""
    return GridSpec(walls[0], walls[1], dx, tau_cut=tau_cut or tau_cut_for(p0, TRAVERSAL_TAU_CUT))


@dataclass
class Branch:
    step: int            # phase-A step of the first detection
    tau1: float
    rate: np.ndarray     # D2 rate against lag, lag = k * dtau
    absorbed: np.ndarray  # cumulative D2 loss against lag
    P_inf: float         # conditional probability of a D2 detection
    bookkeeping: float   # max relative bookkeeping error of the branch
    wall_loss: float
    bookkeeping_split: float = float("nan")   # same, splitting term included


@dataclass
class JointDensity:
    tau: np.ndarray          # phase-A time grid
    rate1: np.ndarray        # unnormalized D1 rate on that grid
    branch_tau1: np.ndarray
    lags: np.ndarray         # common lag grid
    rates2: np.ndarray       # (n_branches, n_lags), zero past each branch's cut
    P_branch: np.ndarray
    weights: np.ndarray      # hat-function weights, sum = P_inf_1
    stride: int
    P_inf_12: float

    def conditional(self, j: int) -> np.ndarray:
        """Normalized p2^(tau1_j) against lag."""
        return self.rates2[j] / self.P_branch[j]

    def density(self, tau1, tau2) -> np.ndarray:
        """p12(tau1, tau2), interpolating the conditional rates linearly in tau1."""
        tau1, tau2 = np.broadcast_arrays(np.asarray(tau1, float), np.asarray(tau2, float))
        lag = tau2 - tau1
        r1 = np.interp(tau1, self.tau, self.rate1, left=0.0, right=0.0)
        cond = np.array([np.interp(lag, self.lags, r, left=0.0, right=0.0) for r in self.rates2])
        nodes = self.branch_tau1
        pos = np.clip(np.searchsorted(nodes, tau1) - 1, 0, len(nodes) - 2)
        lam = np.clip((tau1 - nodes[pos]) / (nodes[pos + 1] - nodes[pos]), 0.0, 1.0)
        idx = np.indices(tau1.shape)
        r2 = (1 - lam) * cond[(pos, *idx)] + lam * cond[(pos + 1, *idx)]
        out = r1 * r2 / self.P_inf_12
        inside = (tau1 > 0) & (tau2 > tau1) & (tau2 < self.tau[-1])
        return np.where(inside, out, 0.0)

    def marginal_tau1(self) -> np.ndarray:
        """Mass of the joint density carried by each branch node."""
        return self.weights * self.P_branch / self.P_inf_12

    def to_csv_gz(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with gzip.open(path, "wt") as fh:
            fh.write("# tau1, tau2 in Angstrom/c; weight = w_j * r2_j / P_inf_12 in c/Angstrom\n")
            fh.write("tau1,tau2,weight\n")
            for j, t1 in enumerate(self.branch_tau1):
                vals = self.weights[j] * self.rates2[j] / self.P_inf_12
                keep = vals > 0
                block = np.column_stack([np.full(keep.sum(), t1), t1 + self.lags[keep], vals[keep]])
                np.savetxt(fh, block, delimiter=",", fmt="%.10g")
        return path


@dataclass
class TraversalResult:
    P_inf_1: float
    P_inf_12: float
    joint: JointDensity
    rest_density: DensityCurve
    T_t0: float
    error_T_t0: float | None = None
    error_P_inf_12: float | None = None
    config: dict = field(default_factory=dict)
    branches: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    P_D2_first: float = 0.0   # D2 fired during phase A
    phase_a: EvolutionRecord | None = None

    @property
    def separation(self) -> float:
        return self.config["detector2"]["x_pos"] - self.config["detector1"]["x_pos"]

    def summary(self) -> dict:
        b = self.branches
        return to_jsonable({
            "P_inf_1": self.P_inf_1,
            "P_inf_12": self.P_inf_12,
            "P_D2_first": self.P_D2_first,
            "T_t0": self.T_t0,
            "error_T_t0": self.error_T_t0,
            "error_P_inf_12": self.error_P_inf_12,
            "n_branches": len(b),
            "stride": self.joint.stride,
            "max_branch_bookkeeping": max((x.bookkeeping for x in b), default=0.0),
            "config": self.config,
            "warnings": self.warnings,
        })


def branch_nodes(rate1: np.ndarray, stride: int, threshold: float = SUPPORT_THRESHOLD) -> np.ndarray:
    """Every ``stride``-th step inside the region where rate1 exceeds
    threshold * peak, plus the region's last step."""
    if stride < 1:
        raise ConfigurationError("tau1 stride must be a positive integer")
    above = np.flatnonzero(rate1 > threshold * rate1.max())
    first, last = int(above[0]), int(above[-1])
    nodes = list(range(first, last + 1, stride))
    if nodes[-1] != last:
        nodes.append(last)
    if len(nodes) < MIN_BRANCHES:
        raise ConfigurationError(
            f"stride {stride} leaves only {len(nodes)} tau1 samples in the support of p1 "
            f"(need {MIN_BRANCHES})"
        )
    return np.asarray(nodes)


def hat_weights(tau: np.ndarray, rate: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """w_j = trapezoid integral of rate * hat_j, where hat_j are the piecewise
    linear interpolation cardinal functions on tau[nodes], extended as
    constants beyond the outermost nodes.  The weights sum to trapezoid(rate)."""
    knots = tau[nodes]
    w = np.empty(len(nodes))
    for j in range(len(nodes)):
        e = np.zeros(len(nodes))
        e[j] = 1.0
        hat = np.interp(tau, knots, e)
        w[j] = trapezoid(rate * hat, tau)
    return w


def collapse(omega_a: SpinorSlice, window: CouplingWindow, distance: float,
             params: ModelParams = ModelParams()) -> SpinorSlice:
    """T^-1 g1 Omega_A / ||g1 Omega_A||, using the grid quadrature of the rate."""
    v = omega_a.values * window.g
    norm2 = omega_a.grid.dx * float((v.real**2 + v.imag**2).sum())
    if not norm2 > 0:
        raise NoDetectionError("first detector sees no amplitude at this tau1")
    return free_propagate(omega_a.replace(v / np.sqrt(norm2)), -distance, params)


# phase B propagator, one per process
_PHASE_B: dict = {}


def _phase_b_init(grid, window, params):
    _PHASE_B["prop"] = Propagator(grid, [AlignedWindow(window)], params)


def _phase_b(step: int, values: np.ndarray) -> Branch:
    prop: Propagator = _PHASE_B["prop"]
    g = prop.grid
    tau1 = step * g.dtau
    omega = SpinorSlice(prop.space, values, tau1)
    rec = prop.evolve(omega, tau_start=tau1, conditional=True)
    rate = rec.rates[0]
    return Branch(step, tau1, rate, rec.absorbed[0], float(trapezoid(rate, rec.tau)),
                  float(rec.bookkeeping_error().max()), float(rec.wall_loss[-1]),
                  float(rec.bookkeeping_error(splitting_term=True).max()))


def _phase_b_batched(phase_a: Propagator, omega0: SpinorSlice, nodes, w1, w2, grid: GridSpec,
                     params: ModelParams, distance: float) -> list:
    """All branches in lockstep with a replay of phase A."""
    prop = Propagator(grid, [AlignedWindow(w2)], params)
    n_total = grid.n_steps
    nodes = [int(n) for n in nodes]
    k_max = len(nodes)
    width = n_total - nodes[0] + 1
    rates = np.zeros((k_max, width))
    absorbed = np.zeros((k_max, width))
    endpoint = np.zeros((k_max, width))
    wall = np.zeros(k_max)
    prev_norm = np.full(k_max, np.inf)
    batch = BranchBatch(prop, k_max, active_blocks(omega0.values))
    replay = phase_a.iterate(omega0, 0.0, nodes[-1])
    start = np.asarray(nodes)
    ptr = 0
    for n in range(n_total + 1):
        if n <= nodes[-1]:
            _, _, buf, *_ = next(replay)
            if n == nodes[ptr]:
                sl = SpinorSlice(phase_a.space, buf[:, : phase_a.n].copy(), n * grid.dtau)
                batch.add(collapse(sl, w1, distance, params).values)
                ptr += 1
        k = batch.size
        if not k:
            continue
        idx = np.arange(k)
        lag = n - start[:k]
        r, e, norm2 = batch.measure()
        rates[idx, lag] = r[:, 0]
        endpoint[idx, lag] = e
        if np.any(norm2 > prev_norm[:k] + NORM_INCREASE_TOL):
            raise NumericalInstabilityError(f"branch norm increased at step {n}")
        prev_norm[:k] = norm2
        if n < n_total:
            loss, w = batch.advance()
            absorbed[idx, lag + 1] = absorbed[idx, lag] + loss[:, 0]
            wall[:k] += w
    out = []
    for j, n in enumerate(nodes):
        m = n_total - n + 1
        tau = (n + np.arange(m)) * grid.dtau
        rate, ab, ep = rates[j, :m], absorbed[j, :m], endpoint[j, :m]
        out.append(Branch(n, n * grid.dtau, rate.copy(), ab.copy(), float(trapezoid(rate, tau)),
                          float(bookkeeping_error(tau, rate, ab).max()), float(wall[j]),
                          float(bookkeeping_error(tau, rate, ab, ep).max())))
    return out


def prepare_traversal(initial: InitialStateSpec, d1: DetectorSpec, d2: DetectorSpec,
                      grid: GridSpec, params: ModelParams = ModelParams(), **build_kw):
    if not initial.x0 < d1.x_pos < d2.x_pos:
        raise ConfigurationError("need x0 < x1 < x2")
    if d1.destructive:
        raise ConfigurationError("the first detector must be non-destructive")
    if not d2.destructive:
        raise ConfigurationError("the second detector must be destructive")
    space = grid.spatial
    distance = d2.x_pos - d1.x_pos
    omega0 = build_initial_state(initial, params, space, eval_time=initial.x0 - d1.x_pos,
                                 origin=d1.x_pos, **build_kw)
    w1 = make_window(d1, space, params, centre=0.0)
    w2 = make_window(d2, space, params, centre=distance)
    phase_a = Propagator(grid, [AlignedWindow(w1), AlignedWindow(w2, -distance)], params)
    return omega0, w1, w2, phase_a


def run_traversal(initial: InitialStateSpec, d1: DetectorSpec, d2: DetectorSpec,
                  grid: GridSpec | None = None, params: ModelParams = ModelParams(),
                  tau1_stride: int = 20, workers: int = 1, batched: bool = True,
                  **build_kw) -> TraversalResult:
    """Two-detector pipeline.

    Phase-B branches run either in a process pool (``workers`` > 1), in
    lockstep inside one process (``batched``, the default) or one after the
    other; all three give the same numbers up to rounding.
    """
    if grid is None:
        grid = traversal_grid(initial.p0)
    if not (isinstance(tau1_stride, (int, np.integer)) and tau1_stride >= 1):
        raise ConfigurationError("tau1 stride must be a positive integer")
    omega0, w1, w2, phase_a = prepare_traversal(initial, d1, d2, grid, params, **build_kw)
    distance = d2.x_pos - d1.x_pos

    # pass 1: the D1 rate
    rec_a = phase_a.evolve(omega0)
    rate1 = rec_a.rates[0]
    P1 = float(trapezoid(rate1, rec_a.tau))
    if not P1 > 0:
        raise NoDetectionError("the first detector never fires")
    nodes = branch_nodes(rate1, int(tau1_stride))
    wanted = set(int(n) for n in nodes)

    # pass 2: replay phase A and launch a branch at every node
    last = int(nodes[-1])

    def collapsed():
        for n, _, buf, *_ in phase_a.iterate(omega0, 0.0, last):
            if n in wanted:
                sl = SpinorSlice(phase_a.space, buf[:, : phase_a.n].copy(), n * grid.dtau)
                yield n, collapse(sl, w1, distance, params).values

    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_phase_b_init,
                                 initargs=(grid, w2, params)) as pool:
            futures = [pool.submit(_phase_b, n, v) for n, v in collapsed()]
            branches = [f.result() for f in futures]
    elif batched:
        branches = _phase_b_batched(phase_a, omega0, nodes, w1, w2, grid, params, distance)
    else:
        _phase_b_init(grid, w2, params)
        branches = [_phase_b(n, v) for n, v in collapsed()]

    n_lags = grid.n_steps - int(nodes[0]) + 1
    lags = grid.dtau * np.arange(n_lags)
    rates2 = np.zeros((len(branches), n_lags))
    for j, b in enumerate(branches):
        rates2[j, : b.rate.size] = b.rate
    P_branch = np.array([b.P_inf for b in branches])
    weights = hat_weights(rec_a.tau, rate1, nodes)
    P12 = float(weights @ P_branch)
    if not P12 >= NO_DOUBLE_DETECTION:
        raise NoDetectionError(f"double-detection probability {P12:.3e} below {NO_DOUBLE_DETECTION}")
    joint = JointDensity(rec_a.tau, rate1, rec_a.tau[nodes], lags, rates2, P_branch,
                         weights, int(tau1_stride), P12)
    # normalize with the curve's own quadrature: the zero padding past each
    # branch's cut shifts its trapezoid mass from P_branch by O(dtau * rate_end)
    rho = weights @ rates2
    rho /= trapezoid(rho, lags)
    rest = DensityCurve(lags - distance, rho, "rest")
    warnings = list(rec_a.warnings)
    worst = max(b.wall_loss for b in branches)
    if worst > 1e-6:
        warnings.append(f"phase-B wall leakage up to {worst:.3e}")
    config = to_jsonable({"initial": initial, "detector1": d1, "detector2": d2, "grid": grid,
                          "params": params, "tau1_stride": int(tau1_stride)})
    return TraversalResult(P1, P12, joint, rest, rest.mean(), None, None, config, branches,
                           warnings, float(trapezoid(rec_a.rates[1], rec_a.tau)), rec_a)


def boost_traversal(result: TraversalResult, v_over_c: float):
    """(DensityCurve, T_t_v) in the frame moving with v."""
    s = _lorentz(v_over_c)
    d = result.separation
    r = result.rest_density
    curve = DensityCurve((r.abscissa - v_over_c * d) / s, s * r.values, v_over_c)
    return curve, curve.mean()


def _differs_only_in_step(a: dict, b: dict) -> bool:
    a = dict(a, grid={k: v for k, v in a["grid"].items() if k not in ("dx", "dtau")})
    b = dict(b, grid={k: v for k, v in b["grid"].items() if k not in ("dx", "dtau")})
    return a == b


def traversal_error_bars(res_B: TraversalResult, res_A: TraversalResult):
    """Richardson error bars (error_T_t0, error_P_inf_12) from two step sizes."""
    if not _differs_only_in_step(res_B.config, res_A.config):
        raise UsageError("error bars need two runs that differ only in the step size")
    dx_B, dx_A = res_B.config["grid"]["dx"], res_A.config["grid"]["dx"]
    return (richardson_error(res_B.T_t0, res_A.T_t0, dx_B, dx_A),
            richardson_error(res_B.P_inf_12, res_A.P_inf_12, dx_B, dx_A))


def run_traversal_pair(initial, d1, d2, grid: GridSpec | None = None, steps=TRAVERSAL_STEPS,
                       params: ModelParams = ModelParams(), tau1_stride: int = 20, **kw):
    """Runs at dx_B and dx_A; the dx_B result carries the error bars.

    The stride is given in dx_B steps; the dx_A run uses the stride that keeps
    the branch spacing in tau1 closest to it.
    """
    dx_B, dx_A = steps
    if grid is None:
        grid = traversal_grid(initial.p0, dx_B)
    res_B = run_traversal(initial, d1, d2, replace(grid, dx=dx_B, dtau=dx_B), params,
                          tau1_stride, **kw)
    stride_A = max(1, int(round(tau1_stride * dx_B / dx_A)))
    res_A = run_traversal(initial, d1, d2, replace(grid, dx=dx_A, dtau=dx_A), params,
                          stride_A, **kw)
    cfg_A = dict(res_A.config, tau1_stride=res_B.config["tau1_stride"])
    res_B.error_T_t0, res_B.error_P_inf_12 = traversal_error_bars(
        res_B, replace(res_A, config=cfg_A))
    return res_B, res_A
