"""Campaign orchestration: seeded experiment sweeps with CSV outputs.

Every campaign is a pure function of its effective config, so a rerun with
the same config and seeds reproduces each non-timing output byte for byte.
Jobs (seed x method x sweep-point) are independent; with jobs > 1 they run
in a process pool and results are sorted by key before writing, so the
output does not depend on completion order. Failed cells (diverged runs)
become empty CSV fields and are listed in the sidecar and an error log
instead of aborting the campaign.

Each output CSV <name>.csv gets a <name>.meta.yaml sidecar carrying the
tool version, a hash of the effective config, the effective config itself
and any tuned parameters or failures.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from . import __version__ as _version
from .filters import (VARIANTS, FilterConfig, FilterDivergenceError,
                      StepSizeParams, make_grid)
from .metrics import time_step_sizes
from .plant import ControllerParams, PlantParams, run_closed_loop
from .synth import MotionSpec, SynthParams, make_motion, save_motion, \
    vibration_defaults, voluntary_defaults
from .tuning import tune_general_params

CAMPAIGNS = ("synth", "compare", "limits-nnu", "limits-band", "limits-noise",
             "bench", "tune", "run")

_LIMIT_SWEEPS = {
    "limits-nnu": [1, 2, 3, 4, 5, 6],
    "limits-band": [10.0, 20.0, 40.0, 60.0, 80.0, 100.0],
    "limits-noise": [1e-4, 1e-3, 1e-2, 1e-1, 1.0],
}


@dataclass
class CampaignConfig:
    campaign: str = "compare"
    seeds: list = field(default_factory=lambda: list(range(10)))
    methods: list = field(default_factory=lambda: list(VARIANTS))
    sweep: list | None = None        # sweep points; campaign-specific default
    out_dir: str = "out"
    grid_a: float = 6.0
    grid_b: float = 10.0
    grid_l: int = 100
    lam: float = 0.9999
    duration: float = 24.5
    sr_warmup: float = 0.0
    s_n: float = 0.001
    drift: bool = True
    tune_count: int = 5              # motions averaged into general params
    limits_tune_count: int = 3       # motions averaged per sweep point
    max_evals: int | None = None
    params_file: str | None = None   # tuned-params YAML to reuse
    variant: str = "damped"          # single-run / limits method
    bench_l: list = field(default_factory=lambda: [120])
    bench_reps: int = 100
    jobs: int = 1
    force: bool = False
    vibration: dict = field(default_factory=dict)   # SynthParams overrides
    voluntary: dict = field(default_factory=dict)
    step: dict = field(default_factory=dict)        # StepSizeParams overrides
    controller: dict = field(default_factory=dict)  # ControllerParams overrides

    def validate(self) -> None:
        if self.campaign not in CAMPAIGNS:
            raise ValueError(f"unknown campaign {self.campaign!r}; "
                             f"choose from {CAMPAIGNS}")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        for m in self.methods:
            if m not in VARIANTS:
                raise ValueError(f"unknown method {m!r}; choose from {VARIANTS}")
        if self.sweep is not None and not self.sweep:
            raise ValueError("sweep, when given, must be non-empty")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


def load_config(path) -> CampaignConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config root must be a mapping, got {type(raw).__name__}")
    cfg = CampaignConfig()
    for key, val in raw.items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown config key {key!r}")
        setattr(cfg, key, val)
    return cfg


def config_hash(cfg: CampaignConfig) -> str:
    canon = yaml.safe_dump(asdict(cfg), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


# --- shared plumbing -----------------------------------------------------------

def _synth_params(defaults: SynthParams, overrides: dict) -> SynthParams:
    p = SynthParams(**vars(defaults))
    for key, val in overrides.items():
        if not hasattr(p, key):
            raise ValueError(f"unknown synthesis field {key!r}")
        setattr(p, key, val)
    p.validate()
    return p


def _controller(cfg: CampaignConfig) -> ControllerParams:
    c = ControllerParams()
    for key, val in cfg.controller.items():
        if not hasattr(c, key):
            raise ValueError(f"unknown controller field {key!r}")
        setattr(c, key, val)
    return c


def _step_params(cfg: CampaignConfig, variant: str) -> StepSizeParams:
    p = StepSizeParams(variant=variant, lam=cfg.lam)
    for key, val in cfg.step.items():
        if not hasattr(p, key):
            raise ValueError(f"unknown step-size field {key!r}")
        setattr(p, key, val)
    p.validate()
    return p


def _motions(cfg: CampaignConfig, seeds=None,
             vib: SynthParams | None = None) -> list[MotionSpec]:
    vib = vib if vib is not None else _synth_params(vibration_defaults(), cfg.vibration)
    vol = _synth_params(voluntary_defaults(), cfg.voluntary)
    return [make_motion(seed, vib=vib, vol=vol, s_n=cfg.s_n, drift=cfg.drift)
            for seed in (cfg.seeds if seeds is None else seeds)]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def _write_meta(csv_path, cfg: CampaignConfig, **extra) -> None:
    base, _ = os.path.splitext(csv_path)
    meta = {"tool_version": _version,
            "config_hash": config_hash(cfg),
            "config": asdict(cfg)}
    meta.update(extra)
    with open(base + ".meta.yaml", "w") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)


def _write_errors(out_dir, stem, failures) -> None:
    if failures:
        with open(os.path.join(out_dir, f"{stem}_errors.log"), "w") as fh:
            for f in failures:
                fh.write(f"{f}\n")


def _params_to_dict(p: StepSizeParams) -> dict:
    return {k: v for k, v in vars(p).items()}


def _run_cell(args):
    """One (motion, method) closed-loop run; pool-safe, returns (key, sr|None, err)."""
    key, spec_dict, params_dict, ctrl_dict, grid_tuple, duration, sr_warmup = args
    from .synth import motion_from_dict
    spec = motion_from_dict(spec_dict)
    params = StepSizeParams(**params_dict)
    grid = make_grid(*grid_tuple)
    ctrl = ControllerParams(**ctrl_dict)
    try:
        rec = run_closed_loop(spec, FilterConfig(grid, params), c=ctrl,
                              duration=duration, sr_warmup=sr_warmup)
        return key, rec.final_sr, None
    except FilterDivergenceError as exc:
        return key, None, f"diverged at step {exc.step}"


def _map_jobs(jobs, n_jobs):
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_run_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_cell, jobs))


# --- campaigns -----------------------------------------------------------------

def cmd_synth(cfg: CampaignConfig) -> int:
    """Write one pinned motion file per seed; refuses to overwrite without force."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    paths = [os.path.join(cfg.out_dir, f"motion_{seed:04d}.yaml")
             for seed in cfg.seeds]
    if not cfg.force:
        existing = [p for p in paths if os.path.exists(p)]
        if existing:
            raise FileExistsError(
                f"{len(existing)} motion file(s) already exist "
                f"(first: {existing[0]}); rerun with force to overwrite")
    for seed, path in zip(cfg.seeds, paths):
        spec = _motions(cfg, seeds=[seed])[0]
        save_motion(path, spec)
    return 0


def tune_methods(cfg: CampaignConfig, motions, methods=None) -> dict:
    """General parameters per method from the configured tuning protocol."""
    grid = make_grid(cfg.grid_a, cfg.grid_b, cfg.grid_l)
    ctrl = _controller(cfg)
    out = {}
    for method in (methods if methods is not None else cfg.methods):
        res = tune_general_params(method, motions[:cfg.tune_count], grid=grid,
                                  lam=cfg.lam, ctrl=ctrl,
                                  duration=cfg.duration,
                                  max_evals=cfg.max_evals,
                                  exclude_failed=True)
        out[method] = res
    return out


def _general_params(cfg: CampaignConfig, motions) -> tuple[dict, dict]:
    """(params per method, tuned-x sidecar info); from file when configured."""
    if cfg.params_file:
        with open(cfg.params_file) as fh:
            stored = yaml.safe_load(fh)
        params = {}
        for method in cfg.methods:
            if method not in stored:
                raise ValueError(f"params file lacks method {method!r}")
            params[method] = StepSizeParams(**stored[method])
            params[method].validate()
        return params, {"params_source": cfg.params_file}
    tuned = tune_methods(cfg, motions)
    params = {m: r.params for m, r in tuned.items()}
    info = {m: {"x_mean": [float(v) for v in r.x_mean],
                "per_motion": [{"seed": pm.seed, "objective": float(pm.f),
                                "evals": pm.evals}
                               for pm in r.per_motion]}
            for m, r in tuned.items()}
    return params, {"tuning": info}


def save_params(path, params: dict) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump({m: _params_to_dict(p) for m, p in params.items()},
                       fh, sort_keys=True)


def cmd_tune(cfg: CampaignConfig) -> int:
    """Tune each method on the first tune_count motions; write the general
    parameter set as both CSV and a reusable params YAML."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    motions = _motions(cfg)
    params, info = _general_params(cfg, motions)
    save_params(os.path.join(cfg.out_dir, "tuned_params.yaml"), params)
    rows = []
    for method in sorted(params):
        for fname, fval in sorted(_params_to_dict(params[method]).items()):
            rows.append((method, fname, fval))
    path = os.path.join(cfg.out_dir, "tune.csv")
    _write_csv(path, ("method", "field", "value"), rows)
    _write_meta(path, cfg, **info)
    return 0


def cmd_compare(cfg: CampaignConfig) -> int:
    """Per-motion SR for each method with general (protocol-tuned) parameters.

    Output: compare.csv with one row per motion plus a mean row; empty cell
    for a diverged run. Exit 0, or 2 when any cell failed.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    motions = _motions(cfg)
    params, info = _general_params(cfg, motions)

    from .synth import motion_to_dict
    grid_tuple = (cfg.grid_a, cfg.grid_b, cfg.grid_l)
    ctrl_dict = vars(_controller(cfg))
    jobs = [((spec.seed, method), motion_to_dict(spec),
             _params_to_dict(params[method]), ctrl_dict, grid_tuple,
             cfg.duration, cfg.sr_warmup)
            for spec in motions for method in cfg.methods]
    results = {key: (sr, err) for key, sr, err in _map_jobs(jobs, cfg.jobs)}

    failures = []
    rows = []
    cols = {m: [] for m in cfg.methods}
    for spec in motions:
        row = [spec.seed]
        for method in cfg.methods:
            sr, err = results[(spec.seed, method)]
            row.append(sr)
            if err is not None:
                failures.append({"motion": spec.seed, "method": method,
                                 "error": err})
            else:
                cols[method].append(sr)
        rows.append(tuple(row))
    mean_row = ["mean"] + [float(np.mean(cols[m])) if cols[m] else None
                           for m in cfg.methods]
    rows.append(tuple(mean_row))

    path = os.path.join(cfg.out_dir, "compare.csv")
    _write_csv(path, ("motion", *cfg.methods), rows)
    _write_meta(path, cfg,
                tuned_params={m: _params_to_dict(p) for m, p in params.items()},
                failures=failures, **info)
    _write_errors(cfg.out_dir, "compare", failures)
    return 2 if failures else 0


def _limit_point_setup(cfg: CampaignConfig, kind: str, value):
    """(vibration SynthParams, motion s_n, grid tuple) for one sweep point."""
    vib = _synth_params(vibration_defaults(), cfg.vibration)
    s_n = cfg.s_n
    grid_tuple = (cfg.grid_a, cfg.grid_b, cfg.grid_l)
    if kind == "limits-nnu":
        # force the component count and split a fixed total amplitude across
        # it, so the sweep varies signal complexity at constant energy instead
        # of adding energy with every component
        vib.a_n = vib.b_n = int(value)
        vib.normalize_total = True
    elif kind == "limits-band":
        vib.a_nu, vib.b_nu = float(value), float(value) + 4.0
        grid_tuple = (vib.a_nu, vib.b_nu, cfg.grid_l)
    elif kind == "limits-noise":
        vib.xi_total = 0.5
        s_n = float(value)
    else:
        raise ValueError(f"unknown limits kind {kind!r}")
    vib.validate()
    return vib, s_n, grid_tuple


_LIMIT_PARAM_NAMES = {"limits-nnu": "n_nu", "limits-band": "a_nu",
                      "limits-noise": "s_n"}


def cmd_limits(cfg: CampaignConfig) -> int:
    """One sweep (nnu, band or noise) of the configured method, seeds repeated
    per point, per-point tuned step-size parameters.

    Outputs: limits_<kind>.csv (long: param,value,seed,sr) and
    limits_<kind>_summary.csv (per-point mean/std/counts).
    """
    kind = cfg.campaign
    pname = _LIMIT_PARAM_NAMES[kind]
    sweep = cfg.sweep if cfg.sweep is not None else _LIMIT_SWEEPS[kind]
    os.makedirs(cfg.out_dir, exist_ok=True)
    ctrl = _controller(cfg)
    from .synth import motion_to_dict

    rows = []
    summary = []
    failures = []
    for value in sweep:
        vib, s_n, grid_tuple = _limit_point_setup(cfg, kind, value)
        vol = _synth_params(voluntary_defaults(), cfg.voluntary)
        specs = [make_motion(seed, vib=vib, vol=vol, s_n=s_n, drift=cfg.drift)
                 for seed in cfg.seeds]
        grid = make_grid(*grid_tuple)
        point_err = None
        try:
            res = tune_general_params(cfg.variant,
                                      specs[:cfg.limits_tune_count],
                                      grid=grid, lam=cfg.lam, ctrl=ctrl,
                                      duration=cfg.duration,
                                      max_evals=cfg.max_evals,
                                      exclude_failed=True)
            params = res.params
        except RuntimeError as exc:
            point_err = f"tuning failed: {exc}"
            params = None

        srs = []
        for spec in specs:
            if params is None:
                rows.append((pname, value, spec.seed, None))
                failures.append({"point": value, "seed": spec.seed,
                                 "error": point_err})
                continue
            key, sr, err = _run_cell(((spec.seed,), motion_to_dict(spec),
                                      _params_to_dict(params), vars(ctrl),
                                      grid_tuple, cfg.duration, cfg.sr_warmup))
            rows.append((pname, value, spec.seed, sr))
            if err is not None:
                failures.append({"point": value, "seed": spec.seed, "error": err})
            else:
                srs.append(sr)
        summary.append((pname, value,
                        float(np.mean(srs)) if srs else None,
                        float(np.std(srs)) if srs else None,
                        len(srs), len(specs) - len(srs)))

    stem = kind.replace("-", "_")
    path = os.path.join(cfg.out_dir, f"{stem}.csv")
    _write_csv(path, ("param", "value", "seed", "sr"), rows)
    _write_meta(path, cfg, failures=failures)
    spath = os.path.join(cfg.out_dir, f"{stem}_summary.csv")
    _write_csv(spath, ("param", "value", "mean_sr", "std_sr", "n_ok", "n_failed"),
               summary)
    _write_meta(spath, cfg, failures=failures)
    _write_errors(cfg.out_dir, stem, failures)
    return 2 if failures else 0


def cmd_bench(cfg: CampaignConfig) -> int:
    """Per-step timing of each method at the configured filter sizes."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    for L in cfg.bench_l:
        stats = time_step_sizes(cfg.methods, L=int(L), reps=cfg.bench_reps)
        for st in stats:
            rows.append((st.variant, st.L, st.samples, st.mean_ns, st.std_ns))
    rows.sort(key=lambda r: (r[1], r[0]))
    path = os.path.join(cfg.out_dir, "bench.csv")
    _write_csv(path, ("method", "L", "samples", "mean_ns", "std_ns"), rows)
    _write_meta(path, cfg)
    return 0


def cmd_run(cfg: CampaignConfig) -> int:
    """One full closed-loop run (first seed, configured variant and step
    overrides) with per-tick wall-clock timing; writes the tick record."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    seed = cfg.seeds[0]
    spec = _motions(cfg, seeds=[seed])[0]
    params = _step_params(cfg, cfg.variant)
    grid = make_grid(cfg.grid_a, cfg.grid_b, cfg.grid_l)
    rec = run_closed_loop(spec, FilterConfig(grid, params),
                          c=_controller(cfg), duration=cfg.duration,
                          sr_warmup=cfg.sr_warmup, timed=True)
    path = os.path.join(cfg.out_dir, f"run_{seed:04d}.csv")
    rec.to_csv(path)
    _write_meta(path, cfg, final_sr=rec.final_sr,
                step_params=_params_to_dict(params))
    return 0
