"""Step-size parameter tuning.

nelder_mead is a self-contained downhill simplex with the classic
coefficients (reflection 1, expansion 2, contraction 0.5, shrink 0.5),
stopping when the simplex diameter falls below a relative tolerance or the
evaluation budget (200 per dimension by default) runs out. Objectives may
return NaN/Inf anywhere; such points are treated as +inf and the simplex
retreats from them.

tune_general_params applies the campaign protocol: optimize each tuning
motion separately (objective = negative suppression rate of a full run),
then average the per-motion optima element-wise in search coordinates.
Positive scale parameters are searched and averaged in log10 space; the
average is projected back into the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .filters import FilterConfig, FilterDivergenceError, StepSizeParams, make_grid
from .plant import ControllerParams, PlantParams, run_closed_loop


@dataclass
class NMResult:
    x: np.ndarray
    f: float
    evals: int
    converged: bool  # True when the diameter tolerance triggered


def nelder_mead(objective, x0, max_evals: int | None = None,
                xtol_rel: float = 1e-6) -> NMResult:
    """Minimize objective(x) from x0 with the downhill simplex method.

    The initial simplex perturbs each coordinate of x0 by 5% (or by 2.5e-4
    where the coordinate is zero). Non-finite objective values are treated
    as +inf; they are never fatal.
    """
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    dim = x0.size
    if dim == 0:
        raise ValueError("x0 must have at least one coordinate")
    if max_evals is None:
        max_evals = 200 * dim
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        val = objective(x)
        try:
            val = float(val)
        except (TypeError, ValueError):
            return math.inf
        return val if math.isfinite(val) else math.inf

    sim = np.repeat(x0[None, :], dim + 1, axis=0)
    for i in range(dim):
        if sim[i + 1, i] != 0.0:
            sim[i + 1, i] *= 1.05
        else:
            sim[i + 1, i] = 0.00025
    fs = np.array([f(v) for v in sim])

    def diameter() -> float:
        best = sim[np.argmin(fs)]
        d = np.max(np.abs(sim - best))
        return d / max(1.0, np.max(np.abs(best)))

    converged = False
    while evals < max_evals:
        if diameter() < xtol_rel:
            converged = True
            break
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]

        xr = centroid + (centroid - worst)          # reflection, coeff 1
        fr = f(xr)
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - worst)  # expansion, coeff 2
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = centroid + 0.5 * (xr - centroid)  # outside contraction
                fc = f(xc)
                if fc <= fr:
                    sim[-1], fs[-1] = xc, fc
                    continue
            else:
                xc = centroid - 0.5 * (centroid - worst)  # inside contraction
                fc = f(xc)
                if fc < fs[-1]:
                    sim[-1], fs[-1] = xc, fc
                    continue
            for i in range(1, dim + 1):               # shrink toward best
                sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                fs[i] = f(sim[i])

    i_best = int(np.argmin(fs))
    return NMResult(x=sim[i_best].copy(), f=float(fs[i_best]),
                    evals=evals, converged=converged)


@dataclass
class TuneProblem:
    """Search-space description for one variant.

    names are StepSizeParams fields; log_mask marks coordinates handled in
    log10 space (their box bounds are log10 values too). extra_starts lists
    additional simplex seeds tried per motion besides x0: the SR landscape
    of a closed-loop run is multimodal in the step size, and a single start
    can converge on a shoulder far below the main optimum.
    """

    variant: str
    names: tuple
    x0: np.ndarray
    lows: np.ndarray
    highs: np.ndarray
    log_mask: np.ndarray
    extra_starts: tuple = ()

    @property
    def starts(self) -> tuple:
        return (self.x0,) + tuple(self.extra_starts)

    def to_params(self, x, base: StepSizeParams | None = None) -> StepSizeParams:
        p = StepSizeParams(**(vars(base).copy() if base else {}))
        p.variant = self.variant
        for name, xi, is_log in zip(self.names, x, self.log_mask):
            setattr(p, name, float(10.0 ** xi) if is_log else float(xi))
        return p

    def project(self, x) -> np.ndarray:
        return np.clip(x, self.lows, self.highs)


def default_problem(variant: str) -> TuneProblem:
    if variant == "lms":
        return TuneProblem(variant, ("eta",),
                           x0=np.array([math.log10(0.01)]),
                           lows=np.array([-5.0]), highs=np.array([1.0]),
                           log_mask=np.array([True]),
                           extra_starts=(np.array([-3.0]), np.array([-1.0])))
    if variant == "damped":
        k0 = math.log10(350.0)
        return TuneProblem(variant, ("eta", "k_dmp", "x_dmp"),
                           x0=np.array([math.log10(0.02), k0, 0.009]),
                           lows=np.array([-5.0, 0.0, 0.0]),
                           highs=np.array([1.0, 4.0, 0.5]),
                           log_mask=np.array([True, True, False]),
                           extra_starts=(np.array([-1.0, k0, 0.009]),
                                         np.array([0.0, k0, 0.009])))
    if variant == "rls":
        # Start at the top of the box: with persistent narrowband excitation
        # the forgetting-factor covariance winds up and the closed loop only
        # stays finite very near lambda_rls = 1.
        return TuneProblem(variant, ("lambda_rls",),
                           x0=np.array([1.0]),
                           lows=np.array([0.5]), highs=np.array([1.0]),
                           log_mask=np.array([False]))
    if variant == "kalman":
        return TuneProblem(variant, ("r_kf", "q_kf_scale"),
                           x0=np.array([0.0, -6.0]),
                           lows=np.array([-6.0, -12.0]), highs=np.array([3.0, 0.0]),
                           log_mask=np.array([True, True]))
    raise ValueError(f"unknown variant {variant!r}")


@dataclass
class MotionTuneInfo:
    seed: int | None
    x: np.ndarray
    f: float
    evals: int
    converged: bool


@dataclass
class TuneResult:
    variant: str
    params: StepSizeParams
    x_mean: np.ndarray
    per_motion: list = field(default_factory=list)


def tune_general_params(variant: str, motions,
                        grid=None, lam: float = 0.9999,
                        ctrl: ControllerParams | None = None,
                        plant: PlantParams | None = None,
                        duration: float = 24.5,
                        max_evals: int | None = None,
                        exclude_failed: bool = False,
                        problem: TuneProblem | None = None) -> TuneResult:
    """Per-motion optimization followed by element-wise averaging.

    The objective for one motion is the negative suppression rate of a full
    closed-loop run with the candidate parameters; a diverged run scores
    +inf. Each motion is optimized from every start in the problem's start
    set and the best result kept (ties broken by fewer evaluations). A
    motion whose optimum is still +inf is an error unless exclude_failed is
    set, in which case it is dropped from the average.
    """
    prob = problem if problem is not None else default_problem(variant)
    grid = grid if grid is not None else make_grid(6.0, 10.0, 100)
    base = StepSizeParams(variant=variant, lam=lam)

    per_motion = []
    for spec in motions:
        def objective(x, _spec=spec):
            if np.any(x < prob.lows) or np.any(x > prob.highs):
                return math.inf
            params = prob.to_params(x, base)
            try:
                rec = run_closed_loop(_spec, FilterConfig(grid, params),
                                      c=ctrl, plant=plant, duration=duration)
            except FilterDivergenceError:
                return math.inf
            sr = rec.final_sr
            return -sr if sr is not None else math.inf

        best = None
        evals_total = 0
        for start in prob.starts:
            res = nelder_mead(objective, start, max_evals=max_evals)
            evals_total += res.evals
            if best is None or (res.f, res.evals) < (best.f, best.evals):
                best = res
        per_motion.append(MotionTuneInfo(seed=getattr(spec, "seed", None),
                                         x=best.x, f=best.f,
                                         evals=evals_total,
                                         converged=best.converged))

    good = [m for m in per_motion if math.isfinite(m.f)]
    bad = [m for m in per_motion if not math.isfinite(m.f)]
    if bad and not exclude_failed:
        seeds = [m.seed for m in bad]
        raise RuntimeError(f"optimization diverged on motions {seeds}; "
                           f"pass exclude_failed=True to drop them")
    if not good:
        raise RuntimeError("no motion produced a finite optimum")

    x_mean = prob.project(np.mean([m.x for m in good], axis=0))
    params = prob.to_params(x_mean, base)
    return TuneResult(variant=variant, params=params, x_mean=x_mean,
                      per_motion=per_motion)
