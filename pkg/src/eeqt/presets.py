"""Named parameter sets for the arrival and traversal experiments.

Preset names:

    fig1-p0=<p0>            arrival, x0 = -1, detector at 0 (width 0.01, W 1e-5)
    fig2-p0=<p0>            same parameters (density plots)
    arrival-dxD=<w>-WD=<W>  arrival detector study at p0 = 1 unless overridden
    fig3-p0=<p0>            traversal, x0 = -1.5, D1 at 0 (0.5, 1e-3), D2 at 1.26 (0.02, 1e-3)
    fig4-p0=<p0>            same parameters (density plots)
    fig5a-dx1=<w>           traversal at p0 = 0.75, D1 width varied
    fig5b-W1=<W>            traversal at p0 = 0.75, D1 height varied
    fig5c-dx2=<w>-W2=<W>    traversal at p0 = 0.75, D2 width and height varied

Momenta are in mc, lengths in Angstrom, heights in mc^2.  The "coarse"
variant replaces the step sizes by COARSE_DX (paired with COARSE_DX_A for
error bars) on the same walls.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .arrival import ARRIVAL_STEPS, ARRIVAL_TAU_CUT, ARRIVAL_WALLS, TRAVERSAL_TAU_CUT, tau_cut_for
from .detectors import DetectorSpec
from .errors import ConfigurationError, DomainError
from .propagator import GridSpec
from .relkin import InitialStateSpec, StateKind
from .traversal import TRAVERSAL_STEPS, TRAVERSAL_WALLS

COARSE_DX = 0.002
COARSE_DX_A = 0.003

ARRIVAL_X0 = -1.0
ARRIVAL_DETECTOR = DetectorSpec(0.0, 0.01, 1e-5)
TRAVERSAL_X0 = -1.5
TRAVERSAL_D1 = DetectorSpec(0.0, 0.5, 1e-3, destructive=False)
TRAVERSAL_D2 = DetectorSpec(1.26, 0.02, 1e-3)
STUDY_P0 = 0.75

# sample points for sweeps; the figures show curves, not tables
FIG1_MOMENTA = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0)
FIG3_MOMENTA = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0)
ARRIVAL_STUDY = ((0.01, 1e-5), (0.01, 1.0), (0.4, 1e-5), (0.4, 1.0))
FIG5A_WIDTHS = (0.02, 0.1, 0.3, 0.5, 0.75, 1.0)
FIG5B_HEIGHTS = (1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1)
FIG5C_PAIRS = ((0.02, 1e-3), (0.02, 1.0), (0.5, 1e-3), (0.5, 1.0))

_NUM = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
_PATTERNS = {
    "fig1": re.compile(rf"fig[12]-p0={_NUM}$"),
    "arrival-study": re.compile(rf"arrival-dxD={_NUM}-WD={_NUM}$"),
    "fig3": re.compile(rf"fig[34]-p0={_NUM}$"),
    "fig5a": re.compile(rf"fig5a-dx1={_NUM}$"),
    "fig5b": re.compile(rf"fig5b-W1={_NUM}$"),
    "fig5c": re.compile(rf"fig5c-dx2={_NUM}-W2={_NUM}$"),
}


@dataclass(frozen=True)
class Preset:
    name: str
    family: str                # "arrival" or "traversal"
    initial: InitialStateSpec
    detectors: tuple
    grid: GridSpec
    steps: tuple               # (dx_B, dx_A) for error bars


def _check_p0(p0):
    if not p0 > 0:
        raise DomainError(f"p0 must be positive, got {p0}")


def _arrival(name, p0, detector, coarse):
    _check_p0(p0)
    dx_b, dx_a = (COARSE_DX, COARSE_DX_A) if coarse else ARRIVAL_STEPS
    grid = GridSpec(*ARRIVAL_WALLS, dx_b, tau_cut=tau_cut_for(p0, ARRIVAL_TAU_CUT))
    ini = InitialStateSpec(StateKind.POSITIVE, p0, ARRIVAL_X0)
    return Preset(name, "arrival", ini, (detector,), grid, (dx_b, dx_a))


def _traversal(name, p0, d1, d2, coarse):
    _check_p0(p0)
    dx_b, dx_a = (COARSE_DX, COARSE_DX_A) if coarse else TRAVERSAL_STEPS
    grid = GridSpec(*TRAVERSAL_WALLS, dx_b, tau_cut=tau_cut_for(p0, TRAVERSAL_TAU_CUT))
    ini = InitialStateSpec(StateKind.POSITIVE, p0, TRAVERSAL_X0)
    return Preset(name, "traversal", ini, (d1, d2), grid, (dx_b, dx_a))


def resolve_preset(name: str, coarse: bool = False) -> Preset:
    for key, pat in _PATTERNS.items():
        m = pat.match(name)
        if not m:
            continue
        try:
            vals = [float(v) for v in m.groups()]
            if key == "fig1":
                return _arrival(name, vals[0], ARRIVAL_DETECTOR, coarse)
            if key == "arrival-study":
                return _arrival(name, 1.0, DetectorSpec(0.0, vals[0], vals[1]), coarse)
            if key == "fig3":
                return _traversal(name, vals[0], TRAVERSAL_D1, TRAVERSAL_D2, coarse)
            if key == "fig5a":
                d1 = replace(TRAVERSAL_D1, width=vals[0])
                return _traversal(name, STUDY_P0, d1, TRAVERSAL_D2, coarse)
            if key == "fig5b":
                d1 = replace(TRAVERSAL_D1, height=vals[0])
                return _traversal(name, STUDY_P0, d1, TRAVERSAL_D2, coarse)
            if key == "fig5c":
                d2 = replace(TRAVERSAL_D2, width=vals[0], height=vals[1])
                return _traversal(name, STUDY_P0, TRAVERSAL_D1, d2, coarse)
        except ValueError as exc:   # includes DomainError from the specs
            raise ConfigurationError(f"preset {name!r}: {exc}") from exc
    raise ConfigurationError(f"unknown preset {name!r}; run the 'presets' command for the catalog")


def catalog() -> list[str]:
    """Names of the presets used by the sweep scripts."""
    names = [f"fig1-p0={p}" for p in FIG1_MOMENTA]
    names += [f"arrival-dxD={w}-WD={h}" for w, h in ARRIVAL_STUDY]
    names += [f"fig3-p0={p}" for p in FIG3_MOMENTA]
    names += [f"fig5a-dx1={w}" for w in FIG5A_WIDTHS]
    names += [f"fig5b-W1={h}" for h in FIG5B_HEIGHTS]
    names += [f"fig5c-dx2={w}-W2={h}" for w, h in FIG5C_PAIRS]
    return names
