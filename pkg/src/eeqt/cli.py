"""Command line front end.

    eeqt arrival --preset fig1-p0=1.0 --coarse --both-steps --boost 0.3,-0.6
    eeqt traversal --preset fig3-p0=1.0 --coarse --stride 20
    eeqt mc-arrival --preset fig1-p0=1.0 --coarse --seed 7
    eeqt mc-traversal --config my.ini
    eeqt presets

Exit codes: 0 success, 2 usage or configuration error, 3 initial-state
construction failure, 4 numerical instability, 5 no detection.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import presets
from .arrival import boost_arrival, closed_form_boost, run_arrival, run_arrival_pair
from .classical import classical_arrival, classical_boost, classical_traversal
from .config import ExperimentConfig, from_preset, load_config, parse_floats
from .errors import ConfigurationError, EEQTError
from .io import write_json
from .mc_events import (
    ks_distance,
    mean_with_error,
    sample_arrival_batch,
    sample_traversal_batch,
)
from .relkin import ModelParams, StateKind
from .traversal import boost_traversal, run_traversal, run_traversal_pair

log = logging.getLogger("eeqt")


def _rel(a, b):
    return abs(a - b) / abs(b)


def _boost_tag(v: float) -> str:
    return f"v={v:+.3f}"


def _arrival(cfg: ExperimentConfig, params: ModelParams):
    det = cfg.detectors[0]
    keep = cfg.experiment == "mc-arrival"
    if cfg.both_steps:
        res, res_a = run_arrival_pair(cfg.initial, det, cfg.grid, cfg.steps, params, keep_record=keep)
    else:
        res, res_a = run_arrival(cfg.initial, det, cfg.grid, params, keep_record=keep), None
    t_rm = classical_arrival(cfg.initial.p0, cfg.initial.x0, det.x_pos)
    out = cfg.out
    res.rest_density.to_csv(out / "density_rest.csv")
    res.proper_density.to_csv(out / "density_proper.csv", label="tau")
    summary = res.summary()
    summary.update(t_aRM=t_rm, rel_deviation=_rel(res.T_a0, t_rm))
    if res_a is not None:
        summary["T_a0_dx_A"] = res_a.T_a0
    boosts = []
    for v in cfg.boosts:
        curve, T_v = boost_arrival(res, v)
        curve.to_csv(out / f"density_{_boost_tag(v)}.csv")
        t_v = classical_boost(t_rm, det.x_pos, v)
        boosts.append({"v_over_c": v, "T_a_v": T_v,
                       "T_a_v_closed_form": closed_form_boost(res.T_a0, v, det.x_pos),
                       "t_aRM_v": t_v, "rel_deviation": _rel(T_v, t_v)})
    summary["boosts"] = boosts
    line = (f"arrival p0={cfg.initial.p0} state={cfg.initial.kind.value}: P_inf={res.P_inf:.4e} "
            f"T_a0={res.T_a0:.5f}")
    if res.error_T_a0 is not None:
        line += f" +- {res.error_T_a0:.2e}"
    line += f" (classical {t_rm:.5f}, rel. dev. {summary['rel_deviation']:.2%})"
    if cfg.experiment == "mc-arrival":
        batch = sample_arrival_batch(res, cfg.seed, n_events=cfg.events)
        batch.to_csv(out / "events.csv")
        ks = ks_distance(batch.tau, res.proper_density)
        mean, se = mean_with_error(batch.t)
        summary["mc"] = {"seed": cfg.seed, "events": int(batch.tau.size),
                         "chains": batch.n_chains, "detected_fraction": batch.tau.size / batch.n_chains,
                         "ks_distance": ks, "mean_t": mean, "stderr_t": se}
        line += f"; MC: {batch.tau.size} events from {batch.n_chains} chains, KS={ks:.4f}"
    return summary, line


def _traversal(cfg: ExperimentConfig, params: ModelParams):
    d1, d2 = cfg.detectors
    kw = {"workers": cfg.threads}
    if cfg.both_steps:
        res, res_a = run_traversal_pair(cfg.initial, d1, d2, cfg.grid, cfg.steps, params,
                                        cfg.stride, **kw)
    else:
        res, res_a = run_traversal(cfg.initial, d1, d2, cfg.grid, params, cfg.stride, **kw), None
    t_rm = classical_traversal(cfg.initial.p0, d1.x_pos, d2.x_pos)
    out = cfg.out
    res.rest_density.to_csv(out / "density_rest.csv")
    res.joint.to_csv_gz(out / "joint.csv.gz")
    summary = res.summary()
    summary.update(t_tRM=t_rm, rel_deviation=_rel(res.T_t0, t_rm),
                   peak_t=res.rest_density.peak())
    if res_a is not None:
        summary.update(T_t0_dx_A=res_a.T_t0, P_inf_12_dx_A=res_a.P_inf_12)
    d = d2.x_pos - d1.x_pos
    boosts = []
    for v in cfg.boosts:
        curve, T_v = boost_traversal(res, v)
        curve.to_csv(out / f"density_{_boost_tag(v)}.csv")
        t_v = classical_boost(t_rm, d, v)
        boosts.append({"v_over_c": v, "T_t_v": T_v, "T_t_v_closed_form": closed_form_boost(res.T_t0, v, d),
                       "t_tRM_v": t_v, "rel_deviation": _rel(T_v, t_v)})
    summary["boosts"] = boosts
    line = (f"traversal p0={cfg.initial.p0} state={cfg.initial.kind.value}: P_inf_1={res.P_inf_1:.4e} "
            f"P_inf_12={res.P_inf_12:.4e} T_t0={res.T_t0:.5f}")
    if res.error_T_t0 is not None:
        line += f" +- {res.error_T_t0:.2e}"
    line += f" (classical {t_rm:.5f}, rel. dev. {summary['rel_deviation']:.2%})"
    if cfg.experiment == "mc-traversal":
        batch = sample_traversal_batch(res, cfg.seed, n_traversals=cfg.events)
        batch.to_csv(out / "events.csv")
        mean, se = mean_with_error(batch.traversal)
        summary["mc"] = {"seed": cfg.seed, "chains": batch.n_chains, "buckets": batch.counts(),
                         "mean_traversal": mean, "stderr_traversal": se,
                         "deviation_in_stderr": abs(mean - res.T_t0) / se}
        line += f"; MC: {batch.traversal.size} traversals, mean {mean:.5f} +- {se:.5f}"
    return summary, line


def run_and_emit(cfg: ExperimentConfig, params: ModelParams = ModelParams()) -> int:
    cfg.validate()
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.family == "arrival":
        summary, line = _arrival(cfg, params)
    else:
        summary, line = _traversal(cfg, params)
    summary["experiment"] = cfg.experiment
    summary["preset"] = cfg.preset
    summary["resolved_config"] = {
        "initial": cfg.initial, "detectors": cfg.detectors, "grid": cfg.grid,
        "steps": cfg.steps if cfg.both_steps else None, "boosts": cfg.boosts,
        "stride": cfg.stride, "seed": cfg.seed, "events": cfg.events, "threads": cfg.threads,
        "mhat": params.mhat,
    }
    write_json(cfg.out / "summary.json", summary)
    print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eeqt", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("arrival", "traversal", "mc-arrival", "mc-traversal"):
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--preset", help="preset name, see the 'presets' command")
        src.add_argument("--config", type=Path, help="INI configuration file")
        p.add_argument("--coarse", action="store_true", help="coarse grid (dx = 0.002)")
        p.add_argument("--both-steps", action="store_true",
                       help="also run the larger step size and report Richardson error bars")
        p.add_argument("--boost", default=None, help="comma separated frame velocities v/c")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--stride", type=int, default=None, help="tau1 stride for traversal branches")
        p.add_argument("--events", type=int, default=None, help="MC events (or traversals) to collect")
        p.add_argument("--state", choices=[k.value for k in StateKind], default=None)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--threads", type=int, default=None)
    sub.add_parser("presets", help="list preset names")
    return ap


def config_from_args(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
        if cfg.experiment.replace("mc-", "") != args.command.replace("mc-", ""):
            raise ConfigurationError(
                f"config describes a {cfg.experiment} experiment, command is {args.command}")
        cfg.experiment = args.command
        if args.coarse:
            cfg.grid = replace(cfg.grid, dx=presets.COARSE_DX, dtau=presets.COARSE_DX)
            cfg.steps = (presets.COARSE_DX, presets.COARSE_DX_A)
    else:
        cfg = from_preset(args.preset, args.command, args.coarse)
        if cfg.family != ("arrival" if "arrival" in args.command else "traversal"):
            raise ConfigurationError(f"preset {args.preset!r} does not describe a {args.command} run")
    if args.both_steps:
        cfg.both_steps = True
    if args.boost is not None:
        cfg.boosts = parse_floats(args.boost, "--boost")
    for key in ("seed", "stride", "events", "out", "threads"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    if args.state is not None:
        cfg.initial = replace(cfg.initial, kind=StateKind(args.state))
    return cfg.validate()


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        for name in presets.catalog():
            print(name)
        return 0
    try:
        cfg = config_from_args(args)
        return run_and_emit(cfg)
    except EEQTError as exc:
        print(f"eeqt: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":   # pragma: no cover
    sys.exit(main())
