#!/usr/bin/env python3
"""Run the preset series behind one figure and collect a summary table.

    python scripts/sweep.py fig1 --coarse --both-steps
    python scripts/sweep.py fig3 --coarse --stride 40 --momenta 1.0,1.5
    python scripts/sweep.py fig5a --coarse

Each preset writes its densities and summary.json under OUT/<preset>/ exactly
as ``eeqt <command> --preset <name> --out ...`` would; the table
OUT/table.csv has one row per run.  fig1 and fig3 also run the N initial
state, which the density plots compare with the P state.
"""
import argparse
import csv
import json
import logging
from dataclasses import replace
from pathlib import Path

from eeqt import presets
from eeqt.cli import run_and_emit
from eeqt.config import from_preset, parse_floats
from eeqt.errors import EEQTError

SERIES = {
    "fig1": ("arrival", lambda m: [f"fig1-p0={p}" for p in m or presets.FIG1_MOMENTA]),
    "study": ("arrival", lambda m: [f"arrival-dxD={w}-WD={h}" for w, h in presets.ARRIVAL_STUDY]),
    "fig3": ("traversal", lambda m: [f"fig3-p0={p}" for p in m or presets.FIG3_MOMENTA]),
    "fig5a": ("traversal", lambda m: [f"fig5a-dx1={w}" for w in presets.FIG5A_WIDTHS]),
    "fig5b": ("traversal", lambda m: [f"fig5b-W1={h}" for h in presets.FIG5B_HEIGHTS]),
    "fig5c": ("traversal", lambda m: [f"fig5c-dx2={w}-W2={h}" for w, h in presets.FIG5C_PAIRS]),
}
COLUMNS = {
    "arrival": ["preset", "state", "P_inf", "T_a0", "error_T_a0", "t_aRM", "rel_deviation"],
    "traversal": ["preset", "state", "P_inf_1", "P_inf_12", "T_t0", "error_T_t0",
                  "error_P_inf_12", "t_tRM", "rel_deviation", "peak_t"],
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("series", choices=sorted(SERIES))
    ap.add_argument("--coarse", action="store_true")
    ap.add_argument("--both-steps", action="store_true")
    ap.add_argument("--momenta", default=None, help="comma separated p0 values (fig1, fig3)")
    ap.add_argument("--stride", type=int, default=20)
    ap.add_argument("--boost", default="")
    ap.add_argument("--out", type=Path, default=Path("out"))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    family, names = SERIES[args.series]
    momenta = parse_floats(args.momenta, "--momenta") if args.momenta else None
    states = ("P", "N") if args.series in ("fig1", "fig3") else ("P",)
    root = args.out / args.series
    rows = []
    for name in names(momenta):
        for state in states:
            cfg = from_preset(name, family, args.coarse)
            cfg.initial = replace(cfg.initial, kind=state)
            cfg.both_steps = args.both_steps
            cfg.stride = args.stride
            cfg.boosts = parse_floats(args.boost, "--boost")
            cfg.out = root / f"{name}_{state}"
            try:
                run_and_emit(cfg)
            except EEQTError as exc:
                logging.warning("%s (%s): %s", name, state, exc)
                continue
            summary = json.loads((cfg.out / "summary.json").read_text())
            rows.append({"preset": name, "state": state,
                         **{k: summary.get(k) for k in COLUMNS[family][2:]}})
    root.mkdir(parents=True, exist_ok=True)
    with (root / "table.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, COLUMNS[family])
        w.writeheader()
        w.writerows(rows)
    print(f"{len(rows)} runs, table in {root / 'table.csv'}")


if __name__ == "__main__":
    main()
