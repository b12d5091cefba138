"""Time of arrival at a single detector at rest.

The field is evolved in the detector's co-moving frame; the detector rate
p(tau) is converted to rest-frame arrival times with t = tau - (x_D - x0).
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import trapezoid

from .detectors import DetectorSpec, make_window
from .errors import ConfigurationError, DomainError, NoDetectionError, UsageError
from .io import to_jsonable, write_columns
from .propagator import AlignedWindow, EvolutionRecord, GridSpec, Propagator
from .relkin import InitialStateSpec, ModelParams, build_initial_state

NO_DETECTION_THRESHOLD = 1e-8

# (lowest p0 of the bracket, tau_cut) in mc and Angstrom/c
ARRIVAL_TAU_CUT = ((0.0, 13.0), (0.5, 7.0), (0.75, 5.0), (1.0, 4.5))
TRAVERSAL_TAU_CUT = ((0.25, 31.5), (0.5, 17.5), (0.75, 13.5), (1.0, 11.5), (1.5, 10.5))

ARRIVAL_WALLS = (-6.0, 4.0)
ARRIVAL_STEPS = (0.0004, 0.0006)   # (dx_B, dx_A)
COARSE_DX = 0.002


def tau_cut_for(p0: float, table=ARRIVAL_TAU_CUT) -> float:
    """Nearest-lower entry of a (p0, tau_cut) table; below the table, its first row."""
    keys = [k for k, _ in table]
    i = bisect.bisect_right(keys, p0) - 1
    return table[max(i, 0)][1]


def arrival_grid(p0: float, dx: float = ARRIVAL_STEPS[0], tau_cut: float | None = None,
                 walls=ARRIVAL_WALLS) -> GridSpec:
    """Detector-centred grid with the default walls and momentum-keyed tau_cut."""
    return GridSpec(walls[0], walls[1], dx, tau_cut=tau_cut or tau_cut_for(p0))


@dataclass
class DensityCurve:
    """Samples of a probability density; ``frame`` is 'proper', 'rest' or a
    boost velocity v/c."""

    abscissa: np.ndarray
    values: np.ndarray
    frame: object = "rest"

    @property
    def mass(self) -> float:
        return float(trapezoid(self.values, self.abscissa))

    def mean(self) -> float:
        return float(trapezoid(self.abscissa * self.values, self.abscissa))

    def peak(self) -> float:
        return float(self.abscissa[int(np.argmax(self.values))])

    def at(self, t) -> np.ndarray:
        return np.interp(t, self.abscissa, self.values, left=0.0, right=0.0)

    def l1_distance(self, other: "DensityCurve") -> float:
        """Integral of |rho_a - rho_b| over the union of both sample grids."""
        t = np.union1d(self.abscissa, other.abscissa)
        return float(trapezoid(np.abs(self.at(t) - other.at(t)), t))

    def to_csv(self, path, label="t"):
        unit = "Angstrom/c"
        header = f"frame={self.frame}; {label} in {unit}; density in c/Angstrom"
        return write_columns(path, header, [self.abscissa, self.values], [label, "density"])


@dataclass
class ArrivalResult:
    P_inf: float
    proper_density: DensityCurve
    rest_density: DensityCurve
    T_a0: float
    error_T_a0: float | None = None
    config: dict = field(default_factory=dict)
    record: EvolutionRecord | None = None
    warnings: list = field(default_factory=list)

    def summary(self) -> dict:
        return to_jsonable({
            "P_inf": self.P_inf,
            "T_a0": self.T_a0,
            "error_T_a0": self.error_T_a0,
            "config": self.config,
            "warnings": self.warnings,
        })


def prepare_arrival(initial: InitialStateSpec, detector: DetectorSpec, grid: GridSpec,
                    params: ModelParams = ModelParams(), **build_kw):
    """Initial co-moving slice and the propagator for one arrival run."""
    if not detector.x_pos > initial.x0:
        raise ConfigurationError("the detector must lie to the right of the preparation point")
    space = grid.spatial
    omega0 = build_initial_state(initial, params, space, eval_time=initial.x0 - detector.x_pos,
                                 origin=detector.x_pos, **build_kw)
    window = make_window(detector, space, params, centre=0.0)
    return omega0, Propagator(grid, [AlignedWindow(window)], params)


def run_arrival(initial: InitialStateSpec, detector: DetectorSpec, grid: GridSpec | None = None,
                params: ModelParams = ModelParams(), keep_record: bool = False,
                **build_kw) -> ArrivalResult:
    if grid is None:
        grid = arrival_grid(initial.p0)
    omega0, prop = prepare_arrival(initial, detector, grid, params, **build_kw)
    rec = prop.evolve(omega0)
    rate = rec.rates[0]
    P_inf = float(trapezoid(rate, rec.tau))
    if not P_inf >= NO_DETECTION_THRESHOLD:
        raise NoDetectionError(f"detection probability {P_inf:.3e} below {NO_DETECTION_THRESHOLD}")
    p = rate / P_inf
    travel = detector.x_pos - initial.x0
    proper = DensityCurve(rec.tau.copy(), p, "proper")
    rest = DensityCurve(rec.tau - travel, p.copy(), "rest")
    T_a0 = proper.mean() - travel
    config = to_jsonable({"initial": initial, "detector": detector, "grid": grid,
                          "params": params})
    return ArrivalResult(P_inf, proper, rest, T_a0, None, config,
                         rec if keep_record else None, list(rec.warnings))


def _lorentz(v_over_c: float) -> float:
    if not abs(v_over_c) < 1:
        raise DomainError(f"|v/c| must be below 1, got {v_over_c}")
    return float(np.sqrt(1.0 - v_over_c**2))


def boost_arrival(result: ArrivalResult, v_over_c: float):
    """Arrival density and mean arrival time in the frame moving with v.

    Returns (DensityCurve, T_a_v).  T_a_v comes from integrating the boosted
    density; ``closed_form_boost`` gives the same number analytically.
    """
    s = _lorentz(v_over_c)
    x_d = result.config["detector"]["x_pos"]
    x0 = result.config["initial"]["x0"]
    p = result.proper_density
    t = (p.abscissa - (x_d - x0) - v_over_c * x_d) / s
    curve = DensityCurve(t, s * p.values, v_over_c)
    return curve, curve.mean()


def closed_form_boost(T0: float, v_over_c: float, x_ref: float) -> float:
    """gamma * (T0 - v x_ref / c^2)."""
    return (T0 - v_over_c * x_ref) / _lorentz(v_over_c)


def richardson_error(value_B: float, value_A: float, dx_B: float, dx_A: float) -> float:
    """(dx_B / (dx_A - dx_B)) |value_B - value_A| for step sizes dx_A > dx_B."""
    if dx_A == dx_B:
        raise ZeroDivisionError("Richardson estimate needs two different step sizes")
    if not dx_A > dx_B > 0:
        raise UsageError(f"need dx_A > dx_B > 0, got dx_A={dx_A}, dx_B={dx_B}")
    return dx_B / (dx_A - dx_B) * abs(value_B - value_A)


def run_arrival_pair(initial: InitialStateSpec, detector: DetectorSpec,
                     grid: GridSpec | None = None, steps=ARRIVAL_STEPS,
                     params: ModelParams = ModelParams(), **kw):
    """Run at dx_B and dx_A; return the dx_B result with its error bar, and
    the dx_A result."""
    dx_B, dx_A = steps
    if grid is None:
        grid = arrival_grid(initial.p0, dx_B)
    res_B = run_arrival(initial, detector, replace(grid, dx=dx_B, dtau=dx_B), params, **kw)
    res_A = run_arrival(initial, detector, replace(grid, dx=dx_A, dtau=dx_A), params, **kw)
    res_B.error_T_a0 = richardson_error(res_B.T_a0, res_A.T_a0, dx_B, dx_A)
    return res_B, res_A
