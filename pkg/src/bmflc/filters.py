"""Band-limited multiple Fourier linear combiner (BMFLC) filter family.

A BMFLC filter models a band-limited signal as a weighted sum of sine and
cosine pairs on a fixed, uniformly spaced frequency grid and adapts the
weights online from a scalar error. Four weight-update laws are provided:

- ``lms``     plain gradient update, w <- w*lam + 2*eta*g*e
- ``damped``  gradient update gated per weight by a logistic function of the
              weight magnitude, which suppresses adaptation of weights that
              have not grown past the noise floor
- ``rls``     recursive least squares gain with forgetting
- ``kalman``  Kalman gain under a random-walk weight model

All step functions mutate the passed FilterState in place and return it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from . import _kernels as _k

VARIANTS = ("lms", "damped", "rls", "kalman")


class FilterDivergenceError(RuntimeError):
    """A weight or covariance entry went non-finite during an update."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        msg = f"filter diverged at step {step}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    a_nu: float
    b_nu: float
    L: int
    freqs: np.ndarray  # shape (L,), strictly increasing, freqs[0] == a_nu

    @property
    def spacing(self) -> float:
        return (self.b_nu - self.a_nu) / self.L


def make_grid(a_nu: float, b_nu: float, L: int) -> FrequencyGrid:
    """Uniform grid nu_r = a_nu + r*(b_nu - a_nu)/L for r = 0..L-1.

    The lower band edge is included, the upper edge is not.
    """
    if not (0.0 < a_nu < b_nu):
        raise ValueError(f"need 0 < a_nu < b_nu, got a_nu={a_nu}, b_nu={b_nu}")
    if int(L) != L or L < 1:
        raise ValueError(f"L must be a positive integer, got {L}")
    L = int(L)
    freqs = a_nu + np.arange(L, dtype=np.float64) * ((b_nu - a_nu) / L)
    return FrequencyGrid(float(a_nu), float(b_nu), L, freqs)


@dataclass(frozen=True, eq=False)
class BasisVector:
    g: np.ndarray  # shape (2L,): sin block then cos block
    t: float


def eval_basis(grid: FrequencyGrid, t: float) -> BasisVector:
    """g[r] = sin(2 pi nu_r t), g[L+r] = cos(2 pi nu_r t)."""
    g = np.empty(2 * grid.L, dtype=np.float64)
    _k.fill_basis(grid.freqs, float(t), g)
    return BasisVector(g, float(t))


@dataclass
class StepSizeParams:
    """Adaptation parameters. Only the fields of the active variant matter."""

    variant: str = "lms"
    eta: float = 0.01          # learning gain (lms, damped)
    lam: float = 1.0           # weight forgetting factor, in (0, 1]
    k_dmp: float = 350.0       # logistic steepness (damped)
    x_dmp: float = 0.009       # logistic midpoint in weight units (damped)
    lambda_rls: float = 0.995  # RLS forgetting, in (0, 1]
    r_kf: float = 1.0          # measurement-noise scalar (kalman)
    q_kf_scale: float = 1e-6   # process-noise diagonal (kalman)
    p0: float = 1.0            # initial covariance diagonal (rls, kalman)

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lam must be in (0, 1], got {self.lam}")
        if self.variant in ("lms", "damped") and self.eta <= 0.0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.variant == "damped" and self.k_dmp < 0.0:
            raise ValueError(f"k_dmp must be >= 0, got {self.k_dmp}")
        if self.variant == "rls" and not (0.0 < self.lambda_rls <= 1.0):
            raise ValueError(f"lambda_rls must be in (0, 1], got {self.lambda_rls}")
        if self.variant == "kalman":
            if self.r_kf <= 0.0:
                raise ValueError(f"r_kf must be > 0, got {self.r_kf}")
            if self.q_kf_scale < 0.0:
                raise ValueError(f"q_kf_scale must be >= 0, got {self.q_kf_scale}")
        if self.variant in ("rls", "kalman") and self.p0 <= 0.0:
            raise ValueError(f"p0 must be > 0, got {self.p0}")


@dataclass
class FilterState:
    w: np.ndarray                 # shape (2L,)
    P: np.ndarray | None = None   # (2L, 2L) covariance, rls/kalman only; the
                                  # kernels keep only its upper triangle current
    steps: int = 0
    t: float = 0.0


@dataclass
class FilterConfig:
    grid: FrequencyGrid
    params: StepSizeParams = field(default_factory=StepSizeParams)


def make_filter_state(grid: FrequencyGrid, params: StepSizeParams) -> FilterState:
    params.validate()
    n = 2 * grid.L
    w = np.zeros(n, dtype=np.float64)
    P = None
    if params.variant in ("rls", "kalman"):
        P = np.eye(n, dtype=np.float64) * params.p0
    return FilterState(w=w, P=P)


def _gvec(g) -> np.ndarray:
    return g.g if isinstance(g, BasisVector) else np.asarray(g, dtype=np.float64)


def _pre(state: FilterState, g, e: float) -> np.ndarray:
    gv = _gvec(g)
    if gv.shape != state.w.shape:
        raise ValueError(f"basis length {gv.shape} does not match weights {state.w.shape}")
    if not math.isfinite(e):
        raise ValueError(f"error input must be finite, got {e}")
    return gv


def _post(state: FilterState, g, ok: bool) -> FilterState:
    state.steps += 1
    if isinstance(g, BasisVector):
        state.t = g.t
    if not ok:
        raise FilterDivergenceError(state.steps)
    return state


def predict(state: FilterState, g) -> float:
    """Model output w . g for the current weights."""
    gv = _gvec(g)
    if gv.shape != state.w.shape:
        raise ValueError(f"basis length {gv.shape} does not match weights {state.w.shape}")
    return float(np.dot(state.w, gv))


def step_lms(state: FilterState, g, e: float, p: StepSizeParams) -> FilterState:
    """w_k <- w_k*lam + 2*eta*g_k*e"""
    gv = _pre(state, g, e)
    ok = _k.lms_step(state.w, gv, float(e), p.eta, p.lam)
    return _post(state, g, ok)


def step_damped(state: FilterState, g, e: float, p: StepSizeParams) -> FilterState:
    """w_k <- w_k*lam + eta*g_k*sigma(k_dmp*(|w_k| - x_dmp))*e

    sigma is the logistic function; weights below the midpoint x_dmp adapt
    at a fraction of the nominal rate, weights above it at nearly full rate.
    """
    gv = _pre(state, g, e)
    ok = _k.damped_step(state.w, gv, float(e), p.eta, p.lam, p.k_dmp, p.x_dmp)
    return _post(state, g, ok)


def step_rls(state: FilterState, g, e: float, p: StepSizeParams) -> FilterState:
    """mu = P g / (lambda_rls + g^T P g); w <- w*lam + mu e;
    P <- (P - mu g^T P) / lambda_rls

    P is symmetric and only its upper triangle is maintained; read the full
    matrix as np.triu(P) + np.triu(P, 1).T.
    """
    gv = _pre(state, g, e)
    if state.P is None:
        raise ValueError("state has no covariance; build it with variant='rls'")
    ok = _k.rls_step(state.w, state.P, gv, float(e), p.lam, p.lambda_rls)
    return _post(state, g, ok)


def step_kalman(state: FilterState, g, e: float, p: StepSizeParams) -> FilterState:
    """mu = P g (g^T P g + r_kf)^-1; w <- w*lam + mu e;
    P <- (I - mu g^T) P + q_kf_scale*I

    Upper-triangle covariance storage, as in step_rls.
    """
    gv = _pre(state, g, e)
    if state.P is None:
        raise ValueError("state has no covariance; build it with variant='kalman'")
    ok = _k.kalman_step(state.w, state.P, gv, float(e), p.lam, p.r_kf, p.q_kf_scale)
    return _post(state, g, ok)


STEP_FUNCS = {
    "lms": step_lms,
    "damped": step_damped,
    "rls": step_rls,
    "kalman": step_kalman,
}


def step(state: FilterState, g, e: float, p: StepSizeParams) -> FilterState:
    """Dispatch to the update law selected by p.variant."""
    return STEP_FUNCS[p.variant](state, g, e, p)


def feedforward_force(y_vib: float, k_ff: float = 1.0) -> float:
    """Feedforward command f_ff = k_ff * y_vib."""
    return k_ff * y_vib


# --- checkpoint serialization ------------------------------------------------

def filter_state_to_dict(state: FilterState) -> dict:
    d = {"w": state.w.tolist(), "steps": state.steps, "t": state.t}
    if state.P is not None:
        # in memory only the upper triangle is current; checkpoints hold the
        # full symmetric matrix so they are plain dense data
        full = np.triu(state.P) + np.triu(state.P, 1).T
        d["P"] = full.tolist()
    else:
        d["P"] = None
    return d


def filter_state_from_dict(d: dict) -> FilterState:
    w = np.asarray(d["w"], dtype=np.float64)
    P = d.get("P")
    if P is not None:
        P = np.asarray(P, dtype=np.float64)
    return FilterState(w=w, P=P, steps=int(d.get("steps", 0)), t=float(d.get("t", 0.0)))


def save_filter_state(path, state: FilterState, config: FilterConfig | None = None) -> None:
    doc = {"state": filter_state_to_dict(state)}
    if config is not None:
        doc["config"] = {
            "grid": {"a_nu": config.grid.a_nu, "b_nu": config.grid.b_nu, "L": config.grid.L},
            "params": asdict(config.params),
        }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)


def load_filter_state(path):
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    state = filter_state_from_dict(doc["state"])
    config = None
    if doc.get("config"):
        c = doc["config"]
        grid = make_grid(c["grid"]["a_nu"], c["grid"]["b_nu"], c["grid"]["L"])
        config = FilterConfig(grid=grid, params=StepSizeParams(**c["params"]))
    return state, config
