"""Detectors at rest: coupling windows g(x) and their trajectories."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .relkin import Grid, ModelParams, SpinorSlice, bump_profile


@dataclass(frozen=True)
class DetectorSpec:
    """A detector at rest at ``x_pos``.

    width is the full support of the window (Angstrom), height the coupling
    strength W in units of mc^2.
    """

    x_pos: float
    width: float
    height: float
    destructive: bool = True

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError(f"detector width must be positive, got {self.width}")
        if not self.height > 0:
            raise DomainError(f"detector height must be positive, got {self.height}")

    def trajectory(self, tau, x0: float):
        """Spacetime point (t, x) of the detector at proper time tau.

        The trajectory starts on the backward light cone of the preparation
        event (0, x0).
        """
        tau = np.asarray(tau, dtype=float)
        t = tau + x0 - self.x_pos
        return t, np.full_like(t, self.x_pos)

    def frame_time(self, tau, x0: float):
        """Rest-frame time at which a detection at proper time tau happens."""
        return np.asarray(tau, dtype=float) + x0 - self.x_pos


def on_backward_light_cone(t: float, x: float, x0: float, t0: float = 0.0) -> bool:
    return t <= t0 and np.isclose((t0 - t) ** 2, (x0 - x) ** 2)


def in_backward_light_cone(t: float, x: float, x0: float, t0: float = 0.0) -> bool:
    """Strictly inside the past light cone of (t0, x0)."""
    return t < t0 and (t0 - t) > abs(x - x0)


@dataclass(frozen=True, eq=False)
class CouplingWindow:
    """Samples of g(x) on a grid, centred at ``centre`` in grid coordinates."""

    grid: Grid
    g: np.ndarray
    centre: float
    spec: DetectorSpec

    @property
    def g2(self) -> np.ndarray:
        return self.g * self.g

    @property
    def support(self) -> slice:
        """Index range holding every nonzero sample."""
        nz = np.flatnonzero(self.g)
        if nz.size == 0:
            return slice(0, 0)
        return slice(int(nz[0]), int(nz[-1]) + 1)


def make_window(spec: DetectorSpec, grid: Grid, params: ModelParams = ModelParams(),
                centre: float | None = None) -> CouplingWindow:
    """Sample g(x) = sqrt(2 W) F_{width/2}(x - centre) on ``grid``.

    W is converted from mc^2 to the inverse time unit with mhat.  ``centre``
    defaults to the detector position, i.e. a grid in absolute coordinates;
    detector-centred grids pass ``centre=0``.
    """
    if centre is None:
        centre = spec.x_pos
    half = spec.width / 2
    if centre - half < grid.x_min or centre + half > grid.x_max:
        raise ConfigurationError(
            f"detector support [{centre - half}, {centre + half}] leaves the grid "
            f"[{grid.x_min}, {grid.x_max}]"
        )
    peak = np.sqrt(2.0 * spec.height * params.mhat)
    g = peak * bump_profile(grid.x - centre, half)
    return CouplingWindow(grid, g, centre, spec)


def detection_rate(psi: SpinorSlice, window: CouplingWindow) -> float:
    """dx * sum g^2 Psi^+ Psi, the instantaneous detection rate."""
    sl = window.support
    v = psi.values[:, sl]
    return float(psi.grid.dx * (window.g2[sl] * (v.real**2 + v.imag**2).sum(axis=0)).sum())


def total_coupling(windows) -> np.ndarray:
    """Lambda = sum_j g_j^2 sampled on the common grid."""
    windows = list(windows)
    out = np.zeros(windows[0].grid.n)
    for w in windows:
        out += w.g2
    return out
