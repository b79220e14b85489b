"""Command-line experiment runner.

Commands: synth, compare, limits, bench, tune, run, replay. Settings come
from built-in defaults, overridden by a YAML config file (--config), in
turn overridden by flags. Exit codes: 0 success, 1 usage/config error,
2 campaign finished with failed cells, 3 divergence abort.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import __version__
from .campaigns import (CampaignConfig, cmd_bench, cmd_compare, cmd_limits,
                        cmd_run, cmd_synth, cmd_tune, load_config,
                        _write_meta)
from .filters import FilterConfig, FilterDivergenceError, StepSizeParams, \
    VARIANTS, make_grid
from .replay import load_trace, peak_magnitude, replay


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise SystemExit(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bmflc",
                description="Vibration-learning experiment harness")
    p.add_argument("--version", action="version", version=f"bmflc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML campaign config")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="use this single seed")
        sp.add_argument("--seeds", help="comma-separated seed list")
        sp.add_argument("--jobs", type=int, help="worker processes")
        sp.add_argument("--force", action="store_true", default=None,
                        help="overwrite existing outputs")

    sp = sub.add_parser("synth", help="write pinned motion files")
    common(sp)
    sp = sub.add_parser("compare", help="method-comparison campaign")
    common(sp)
    sp = sub.add_parser("limits", help="limit-analysis sweep")
    sp.add_argument("kind", choices=("nnu", "band", "noise"))
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS, help="method to sweep")
    sp = sub.add_parser("bench", help="step-size timing")
    common(sp)
    sp = sub.add_parser("tune", help="tune general step-size parameters")
    common(sp)
    sp = sub.add_parser("run", help="single closed-loop run")
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS, help="step-size method")
    sp.add_argument("--duration", type=float, help="run length, seconds")
    sp = sub.add_parser("replay", help="offline filtering of a CSV trace")
    sp.add_argument("csv", help="input trace")
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS, help="step-size method")
    sp.add_argument("--time-col", default="t")
    sp.add_argument("--vel-col", default="e_vel")
    sp.add_argument("--band", nargs=2, type=float, default=(3.0, 9.0),
                    metavar=("LOW", "HIGH"), help="analysis band, Hz")
    sp.add_argument("--mode", choices=("suppress", "record"),
                    default="suppress")
    return p


def _effective_config(args) -> CampaignConfig:
    cfg = load_config(args.config) if args.config else CampaignConfig()
    if args.command == "limits":
        cfg.campaign = f"limits-{args.kind}"
    elif args.command != "replay":
        cfg.campaign = args.command
    if args.out is not None:
        cfg.out_dir = args.out
    if getattr(args, "seeds", None):
        cfg.seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "jobs", None) is not None:
        cfg.jobs = args.jobs
    if getattr(args, "force", None) is not None:
        cfg.force = args.force
    if getattr(args, "variant", None) is not None:
        cfg.variant = args.variant
    if getattr(args, "duration", None) is not None:
        cfg.duration = args.duration
    cfg.validate()
    return cfg


def _cmd_replay(args, cfg: CampaignConfig) -> int:
    t, vel = load_trace(args.csv, time_col=args.time_col, vel_col=args.vel_col)
    params = StepSizeParams(variant=cfg.variant, lam=cfg.lam)
    for key, val in cfg.step.items():
        if not hasattr(params, key):
            raise ValueError(f"unknown step-size field {key!r}")
        setattr(params, key, val)
    params.validate()
    grid = make_grid(cfg.grid_a, cfg.grid_b, cfg.grid_l)
    rep = replay(t, vel, FilterConfig(grid, params),
                 band=tuple(args.band), mode=args.mode)

    os.makedirs(cfg.out_dir, exist_ok=True)
    rpath = os.path.join(cfg.out_dir, "replay_report.csv")
    rows = [("source", args.csv),
            ("mode", args.mode),
            ("variant", params.variant),
            ("fs_hz", f"{rep.fs:.17g}"),
            ("band_low_hz", f"{rep.band[0]:.17g}"),
            ("band_high_hz", f"{rep.band[1]:.17g}"),
            ("mse_before", f"{rep.mse_before:.17g}"),
            ("mse_after", f"{rep.mse_after:.17g}")]
    with open(rpath, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("metric", "value"))
        wr.writerows(rows)
    _write_meta(rpath, cfg)

    spath = os.path.join(cfg.out_dir, "replay_spectrum.csv")
    with open(spath, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("freq_hz", "mag_before", "mag_after"))
        for i in range(rep.freqs.size):
            wr.writerow((f"{rep.freqs[i]:.17g}", f"{rep.mag_before[i]:.17g}",
                         f"{rep.mag_after[i]:.17g}"))
    _write_meta(spath, cfg)

    print(f"replayed {t.size} samples at {rep.fs:.6g} Hz "
          f"({params.variant}, {args.mode} mode)")
    print(f"band {rep.band[0]:g}-{rep.band[1]:g} Hz MSE: "
          f"{rep.mse_before:.6g} -> {rep.mse_after:.6g}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):   # --help / --version
            return 0
        print(exc.code, file=sys.stderr)
        return 1
    try:
        cfg = _effective_config(args)
        if args.command == "synth":
            code = cmd_synth(cfg)
            print(f"wrote {len(cfg.seeds)} motion file(s) to {cfg.out_dir}")
        elif args.command == "compare":
            code = cmd_compare(cfg)
            print(f"compare campaign done -> {cfg.out_dir}/compare.csv"
                  + (" (with failed cells)" if code == 2 else ""))
        elif args.command == "limits":
            code = cmd_limits(cfg)
            stem = cfg.campaign.replace("-", "_")
            print(f"limits sweep done -> {cfg.out_dir}/{stem}.csv"
                  + (" (with failed cells)" if code == 2 else ""))
        elif args.command == "bench":
            code = cmd_bench(cfg)
            print(f"bench done -> {cfg.out_dir}/bench.csv")
        elif args.command == "tune":
            code = cmd_tune(cfg)
            print(f"tuning done -> {cfg.out_dir}/tuned_params.yaml")
        elif args.command == "run":
            code = cmd_run(cfg)
            print(f"run done -> {cfg.out_dir}/run_{cfg.seeds[0]:04d}.csv")
        elif args.command == "replay":
            code = _cmd_replay(args, cfg)
        else:  # pragma: no cover - argparse restricts choices
            raise ValueError(f"unknown command {args.command!r}")
        return code
    except FilterDivergenceError as exc:
        print(f"bmflc: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"bmflc: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
