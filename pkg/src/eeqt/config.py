"""Experiment configuration files.

INI syntax (read with configparser).  Every section and key is optional
except that the experiment kind, the initial state and the detectors must
come from somewhere: either from a preset or from explicit sections.
Explicit keys override the preset.

    [experiment]
    kind = arrival            ; arrival | traversal | mc-arrival | mc-traversal
    preset = fig1-p0=1.0
    coarse = true
    both_steps = false
    boost = 0.3, -0.6
    seed = 1
    stride = 20
    events = 10000
    out = out/fig1
    threads = 1

    [initial]
    state = P                 ; P | N | PN
    p0 = 1.0                  ; mc
    x0 = -1.0                 ; Angstrom
    delta_k = 10.0            ; 1/Angstrom
    eta = 0.1                 ; Angstrom^2

    [detector]                ; arrival; traversal uses [detector1] and [detector2]
    x = 0.0                   ; Angstrom
    width = 0.01              ; Angstrom, full support
    height = 1e-5             ; mc^2

    [grid]
    x_min = -6.0
    x_max = 4.0
    dx = 0.002
    dtau = 0.002              ; defaults to dx
    tau_cut = 4.5
    dx_pair = 0.002, 0.003    ; (dx_B, dx_A) for error bars
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .arrival import ARRIVAL_STEPS, ARRIVAL_TAU_CUT, ARRIVAL_WALLS, TRAVERSAL_TAU_CUT, tau_cut_for
from .detectors import DetectorSpec
from .errors import ConfigurationError
from .propagator import GridSpec
from .presets import COARSE_DX, COARSE_DX_A, resolve_preset
from .relkin import InitialStateSpec
from .traversal import TRAVERSAL_STEPS, TRAVERSAL_WALLS

EXPERIMENTS = ("arrival", "traversal", "mc-arrival", "mc-traversal")

_KEYS = {
    "experiment": {"kind", "preset", "coarse", "both_steps", "boost", "seed", "stride",
                   "events", "out", "threads"},
    "initial": {"state", "p0", "x0", "delta_k", "eta"},
    "detector": {"x", "width", "height"},
    "detector1": {"x", "width", "height"},
    "detector2": {"x", "width", "height"},
    "grid": {"x_min", "x_max", "dx", "dtau", "tau_cut", "dx_pair"},
}


@dataclass
class ExperimentConfig:
    experiment: str
    initial: InitialStateSpec
    detectors: tuple
    grid: GridSpec
    steps: tuple = ()            # (dx_B, dx_A) when both step sizes are run
    both_steps: bool = False
    boosts: tuple = ()
    stride: int = 20
    seed: int = 0
    events: int = 10_000
    out: Path = Path("out")
    threads: int = 1
    preset: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return "arrival" if self.experiment in ("arrival", "mc-arrival") else "traversal"

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment.kind: unknown experiment {self.experiment!r}")
        n = 1 if self.family == "arrival" else 2
        if len(self.detectors) != n:
            raise ConfigurationError(f"{self.experiment} needs {n} detector(s), got {len(self.detectors)}")
        for v in self.boosts:
            if not abs(v) < 1:
                raise ConfigurationError(f"experiment.boost: |v/c| must be below 1, got {v}")
        if self.stride < 1:
            raise ConfigurationError("experiment.stride: must be a positive integer")
        if self.events < 1:
            raise ConfigurationError("experiment.events: must be positive")
        if self.threads < 1:
            raise ConfigurationError("experiment.threads: must be positive")
        if self.both_steps:
            if len(self.steps) != 2 or not self.steps[1] > self.steps[0] > 0:
                raise ConfigurationError("grid.dx_pair: need dx_B < dx_A, both positive")
        if self.family == "arrival":
            if not self.detectors[0].x_pos > self.initial.x0:
                raise ConfigurationError("detector.x: must lie to the right of initial.x0")
        else:
            d1, d2 = self.detectors
            if not self.initial.x0 < d1.x_pos < d2.x_pos:
                raise ConfigurationError("detector1.x/detector2.x: need x0 < x1 < x2")
            if d1.destructive or not d2.destructive:
                raise ConfigurationError("detector1 must be non-destructive and detector2 destructive")
        return self


def from_preset(name: str, experiment: str | None = None, coarse: bool = False,
                **overrides) -> ExperimentConfig:
    p = resolve_preset(name, coarse)
    if experiment is None:
        experiment = p.family
    cfg = ExperimentConfig(experiment, p.initial, p.detectors, p.grid, p.steps, preset=name)
    return replace(cfg, **overrides) if overrides else cfg


def parse_floats(text: str, where: str) -> tuple:
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def _get(sec, key, conv, where):
    try:
        return conv(sec[key])
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"{where}.{key}: {exc}") from exc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _detector(sec, base: DetectorSpec | None, where: str, destructive: bool) -> DetectorSpec:
    vals = {}
    for key, attr in (("x", "x_pos"), ("width", "width"), ("height", "height")):
        if key in sec:
            vals[attr] = _get(sec, key, float, where)
        elif base is not None:
            vals[attr] = getattr(base, attr)
        else:
            raise ConfigurationError(f"{where}.{key}: missing")
    try:
        return DetectorSpec(vals["x_pos"], vals["width"], vals["height"], destructive)
    except ValueError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    for name in cp.sections():
        if name not in _KEYS:
            raise ConfigurationError(f"{name}: unknown section")
        unknown = set(cp[name]) - _KEYS[name]
        if unknown:
            raise ConfigurationError(f"{name}.{sorted(unknown)[0]}: unknown key")
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    coarse = _get(exp, "coarse", _bool, "experiment") if "coarse" in exp else False
    base = None
    if "preset" in exp:
        base = resolve_preset(exp["preset"].strip(), coarse)
    kind = exp.get("kind", "").strip() or (base.family if base else None)
    if kind is None:
        raise ConfigurationError("experiment.kind: missing (and no preset given)")
    if kind not in EXPERIMENTS:
        raise ConfigurationError(f"experiment.kind: unknown experiment {kind!r}")
    family = "arrival" if kind in ("arrival", "mc-arrival") else "traversal"

    # initial state
    ini = base.initial if base else None
    if cp.has_section("initial"):
        sec = cp["initial"]
        vals = {} if ini is None else {"kind": ini.kind, "p0": ini.p0, "x0": ini.x0,
                                        "delta_k": ini.delta_k, "eta": ini.eta}
        if "state" in sec:
            vals["kind"] = sec["state"].strip().upper()
        for key in ("p0", "x0", "delta_k", "eta"):
            if key in sec:
                vals[key] = _get(sec, key, float, "initial")
        missing = {"p0", "x0"} - set(vals)
        if missing:
            raise ConfigurationError(f"initial.{sorted(missing)[0]}: missing")
        try:
            ini = InitialStateSpec(**vals)
        except ValueError as exc:
            raise ConfigurationError(f"initial: {exc}") from exc
    if ini is None:
        raise ConfigurationError("initial: missing section (and no preset given)")

    # detectors
    if family == "arrival":
        b = base.detectors[0] if base and base.family == "arrival" else None
        dets = (_detector(cp["detector"], b, "detector", True) if cp.has_section("detector")
                else b,)
        if dets[0] is None:
            raise ConfigurationError("detector: missing section (and no preset given)")
    else:
        bd = base.detectors if base and base.family == "traversal" else (None, None)
        dets = []
        for i, name in enumerate(("detector1", "detector2")):
            if cp.has_section(name):
                dets.append(_detector(cp[name], bd[i], name, destructive=(i == 1)))
            elif bd[i] is not None:
                dets.append(bd[i])
            else:
                raise ConfigurationError(f"{name}: missing section (and no preset given)")
        dets = tuple(dets)

    # grid
    if base is not None:
        grid, steps = base.grid, base.steps
    else:
        walls = ARRIVAL_WALLS if family == "arrival" else TRAVERSAL_WALLS
        table = ARRIVAL_TAU_CUT if family == "arrival" else TRAVERSAL_TAU_CUT
        steps = (COARSE_DX, COARSE_DX_A) if coarse else (
            ARRIVAL_STEPS if family == "arrival" else TRAVERSAL_STEPS)
        grid = GridSpec(walls[0], walls[1], steps[0], tau_cut=tau_cut_for(ini.p0, table))
    if cp.has_section("grid"):
        sec = cp["grid"]
        vals = {k: _get(sec, k, float, "grid") for k in ("x_min", "x_max", "dx", "dtau", "tau_cut")
                if k in sec}
        if "dx" in vals and "dtau" not in vals:
            vals["dtau"] = vals["dx"]
        try:
            grid = replace(grid, **vals)
        except ValueError as exc:
            raise ConfigurationError(f"grid: {exc}") from exc
        if "dx_pair" in sec:
            steps = parse_floats(sec["dx_pair"], "grid.dx_pair")
            if len(steps) != 2:
                raise ConfigurationError("grid.dx_pair: need exactly two step sizes")

    cfg = ExperimentConfig(kind, ini, dets, grid, tuple(steps), preset=exp.get("preset"))
    conv = {"both_steps": _bool, "seed": int, "stride": int, "events": int, "threads": int}
    for key, fn in conv.items():
        if key in exp:
            setattr(cfg, key, _get(exp, key, fn, "experiment"))
    if "boost" in exp:
        cfg.boosts = parse_floats(exp["boost"], "experiment.boost")
    if "out" in exp:
        cfg.out = Path(exp["out"].strip())
    return cfg.validate()
