"""Command-line front end: ``simulate``, ``calibrate`` and ``stats``."""

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import tomli_w

from . import calibration as cal
from . import harness as hrn
from .config import ConfigError, RunConfig, load_config, parse_config

log = logging.getLogger("gpmpc")

EXIT_OK, EXIT_RUN_FAILED, EXIT_BAD_CONFIG = 0, 1, 2
CONTROLLER_LABELS = {"gp_mpc": "GP-MPC", "mpc": "MPC"}


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_run_csv(path, records):
    """One row per sample; state vectors are expanded into numbered columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(hrn.record_columns())
        for rec in records:
            writer.writerow(_fmt(v) for v in hrn.record_row(rec))


def read_run_csv(path):
    """Columns of a run CSV as float arrays; non-numeric columns stay as strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    columns = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in body]
        try:
            columns[name] = np.array([float(v) for v in raw])
        except ValueError:
            columns[name] = np.array(raw)
    return columns


def summary_dict(stats, scenario=None, controller=None, status=None):
    out = {k: (None if math.isnan(v) else v) for k, v in stats.as_dict().items()}
    for key, value in (("scenario", scenario), ("controller", controller), ("status", status)):
        if value is not None:
            out[key] = value
    return out


def format_table(rows):
    """Summary table with one line per (scenario, controller)."""
    head = (f"{'scenario':<10} {'controller':<10} {'mean +/- SD':>14} {'<70':>6} "
            f"{'70-180':>7} {'80-140':>7} {'>180':>6} {'BG@07:00':>9}")
    lines = [head, "-" * len(head)]
    for scenario, controller, s in rows:
        lines.append(
            f"{scenario:<10} {CONTROLLER_LABELS.get(controller, controller):<10} "
            f"{s.mean_bg:>7.1f} +/- {s.sd_bg:<4.1f} {s.pct_below_70:>5.1f} "
            f"{s.pct_safe_70_180:>7.1f} {s.pct_tight_80_140:>7.1f} {s.pct_above_180:>6.1f} "
            f"{s.bg_at_0700:>9.1f}")
    return "\n".join(lines)


def run_one(cfg):
    """Run a validated configuration; safe to call in a worker process."""
    return hrn.run_closed_loop(cfg.make_scenario(), cfg.sim_config())


def _save(cfg, result, out_dir):
    stem = f"{cfg.scenario}_{cfg.controller}"
    write_run_csv(out_dir / f"{stem}.csv", result.records)
    stats = hrn.compute_statistics(result.records, cfg.gp_activation * hrn.DAY)
    with open(out_dir / f"{stem}.json", "w", encoding="utf-8") as fh:
        json.dump(summary_dict(stats, cfg.scenario, cfg.controller, result.status), fh, indent=2)
        fh.write("\n")
    return stats


def _base_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.scenario is not None:
        overrides["scenario"] = args.scenario
    if args.controller is not None:
        overrides["controller"] = args.controller
    if args.seed is not None:
        overrides["seed"] = args.seed
    return parse_config(overrides, cfg)


def cmd_simulate(args):
    try:
        base = _base_config(args)
        if args.all:
            configs = [replace(base, scenario=k, controller=c).validate()
                       for k in hrn.KINDS for c in hrn.CONTROLLERS]
        else:
            configs = [base]
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(len(configs), os.cpu_count() or 1)) as pool:
            results = list(pool.map(run_one, configs))
    else:
        results = [run_one(configs[0])]

    rows, failed, combined = [], False, {}
    for cfg, result in zip(configs, results):
        if result.status != "ok":
            failed = True
            print(f"error: {cfg.scenario}/{cfg.controller}: {result.status}: {result.error}",
                  file=sys.stderr)
        stats = _save(cfg, result, out_dir)
        rows.append((cfg.scenario, cfg.controller, stats))
        combined[f"{cfg.scenario}/{cfg.controller}"] = summary_dict(
            stats, cfg.scenario, cfg.controller, result.status)
    if len(configs) > 1:
        with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(combined, fh, indent=2)
            fh.write("\n")
    print(format_table(rows))
    return EXIT_RUN_FAILED if failed else EXIT_OK


def cmd_calibrate(args):
    try:
        result = cal.calibrate(target=args.target, grams=args.grams)
    except cal.CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED
    print(f"i_mi_basal = {result.i_mi_basal:.10g} mU/L")
    print(f"meal_gain  = {result.meal_gain:.10g} (peak {result.peak_bg:.3f} mg/dL "
          f"at {result.peak_time:.0f} min)")
    text = tomli_w.dumps(result.fragment())
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_stats(args):
    try:
        columns = read_run_csv(args.csv)
        stats = hrn.compute_statistics(columns, args.from_time)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    print(json.dumps(summary_dict(stats), indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gpmpc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run closed-loop scenarios")
    sim.add_argument("--scenario", choices=hrn.KINDS)
    sim.add_argument("--controller", help="gp-mpc or mpc")
    sim.add_argument("--config", help="TOML configuration file")
    sim.add_argument("--out", default="runs", help="output directory")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--all", action="store_true", help="all scenarios with both controllers")
    sim.set_defaults(func=cmd_simulate)

    calib = sub.add_parser("calibrate", help="derive i_mi_basal and meal_gain")
    calib.add_argument("--out", help="write the config fragment here")
    calib.add_argument("--target", type=float, default=cal.TARGET_PEAK)
    calib.add_argument("--grams", type=float, default=50.0)
    calib.set_defaults(func=cmd_calibrate)

    st = sub.add_parser("stats", help="recompute summary statistics from a run CSV")
    st.add_argument("csv")
    st.add_argument("--from-time", type=float, default=2.5 * hrn.DAY, help="minutes")
    st.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
