"""Mass-spring-damper testbed with impedance control and adaptive feedforward.

The plant integrates m*x'' + b*x' + k*x = F with a semi-implicit Euler step
at a fixed rate. The controller tracks a voluntary reference with a PD
impedance law plus, in the classical impedance-control style, a
plant-inverse feedforward of the reference dynamics. The feedforward
inverts the *discrete* plant along the reference (reference velocity taken
as the backward difference of the sampled reference position), so without
disturbances the tracking error is zero to roundoff at every tick. The
tracking error then obeys its own mass-spring-damper equation driven only
by the disturbance, and the velocity error the filter learns from is the
filtered vibration rather than being swamped by the (much larger)
voluntary motion.
A BMFLC filter learns the vibration profile from that velocity error and
feeds y_vib forward as a force. The disturbance enters the force balance
opposing the command, so at convergence f_ff matches f_nu and cancels it.

Per tick, in order: read (x_des, xd_des), form errors, impedance force,
evaluate the basis, predict y_vib, form f_ff, update the filter on e_vel,
then step the plant with the total force. Recorded values are those seen
at the start of the tick.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from . import metrics as _metrics
from .filters import (FilterConfig, FilterDivergenceError, STEP_FUNCS,
                      make_filter_state)
from .synth import (MotionSpec, vibration_force, voluntary_position,
                    voluntary_velocity)


@dataclass
class PlantParams:
    mass: float = 3.6       # kg
    stiffness: float = 400.0  # N/m
    damping: float = 100.0  # N s/m
    dt: float = 0.001       # s (1 kHz)

    def validate(self) -> None:
        if self.mass <= 0 or self.stiffness < 0 or self.damping < 0 or self.dt <= 0:
            raise ValueError(f"bad plant parameters: {self}")


@dataclass
class ControllerParams:
    k_k: float = 400.0  # impedance stiffness gain
    k_b: float = 16.0   # impedance damping gain
    k_ff: float = 1.0   # feedforward gain
    # Compensate the plant dynamics along the reference so the impedance
    # acts on the tracking error. Off, the plant's own ground spring drags
    # tracking to a gain-dependent offset (k_k/(k_k+k) of x_des at DC).
    dynamics_compensation: bool = True


@dataclass
class PlantState:
    x: float = 0.0
    v: float = 0.0
    t: float = 0.0


def impedance_force(e_pos: float, e_vel: float, c: ControllerParams) -> float:
    """f_imp = k_k*e_pos + k_b*e_vel"""
    return c.k_k * e_pos + c.k_b * e_vel


def plant_step(s: PlantState, total_force: float, p: PlantParams) -> PlantState:
    """One semi-implicit Euler step: velocity first, then position with the
    already-updated velocity. Mutates and returns s.
    """
    s.v = s.v + p.dt * ((total_force - p.damping * s.v - p.stiffness * s.x) / p.mass)
    s.x = s.x + p.dt * s.v
    s.t = s.t + p.dt
    return s


RECORD_COLUMNS = ("t", "x_des", "x", "e_pos", "e_vel", "f_nu", "f_n",
                  "f_imp", "f_ff", "y_vib", "step_ns")


@dataclass
class ExperimentRecord:
    t: np.ndarray
    x_des: np.ndarray
    x: np.ndarray
    e_pos: np.ndarray
    e_vel: np.ndarray
    f_nu: np.ndarray
    f_n: np.ndarray
    f_imp: np.ndarray
    f_ff: np.ndarray
    y_vib: np.ndarray
    step_ns: np.ndarray
    final_sr: float | None = None
    final_state: object | None = None  # FilterState after the last tick; not serialized

    def __len__(self) -> int:
        return self.t.shape[0]

    def suppression_rate(self, warmup: float = 0.0) -> float | None:
        """SR over the run, optionally excluding the first `warmup` seconds."""
        i0 = int(np.searchsorted(self.t, warmup)) if warmup > 0.0 else 0
        return _metrics.suppression_rate(self.f_nu[i0:], self.f_ff[i0:])

    def to_csv(self, path) -> None:
        cols = [getattr(self, name) for name in RECORD_COLUMNS]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(RECORD_COLUMNS)
            for i in range(len(self)):
                row = [f"{c[i]:.17g}" for c in cols[:-1]]
                row.append(str(int(self.step_ns[i])))
                wr.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "ExperimentRecord":
        data = np.genfromtxt(path, delimiter=",", names=True)
        kw = {name: np.asarray(data[name], dtype=np.float64) for name in RECORD_COLUMNS[:-1]}
        kw["step_ns"] = np.asarray(data["step_ns"], dtype=np.int64)
        rec = cls(**kw)
        rec.final_sr = rec.suppression_rate()
        return rec


_VARIANT_IDS = {"lms": 0, "damped": 1, "rls": 2, "kalman": 3}
_DUMMY_P = np.zeros((1, 1))


def run_closed_loop(spec: MotionSpec,
                    fcfg: FilterConfig,
                    c: ControllerParams | None = None,
                    plant: PlantParams | None = None,
                    duration: float = 24.5,
                    sr_warmup: float = 0.0,
                    timed: bool = False) -> ExperimentRecord:
    """Run the full loop for `duration` seconds and return the tick record.

    The default path runs the whole loop in one compiled call and leaves
    step_ns at zero; timed=True runs the tick loop in Python instead, with
    a wall-clock sample around every tick. Both paths perform the same
    arithmetic in the same order.

    Raises FilterDivergenceError (carrying the tick index) if any weight or
    covariance entry goes non-finite; nothing is clamped.
    """
    c = c if c is not None else ControllerParams()
    plant = plant if plant is not None else PlantParams()
    plant.validate()
    spec.validate()
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")

    n = int(round(duration / plant.dt))
    ts_ext = np.arange(n + 1, dtype=np.float64) * plant.dt
    ts = ts_ext[:n]
    x_des_ext = voluntary_position(spec, ts_ext)
    x_des = x_des_ext[:n]
    # discrete reference velocity: backward difference of the sampled
    # reference, which is what the semi-implicit plant can actually realise
    # (x[i+1] = x[i] + dt*v[i+1]); the analytic velocity only seeds tick 0
    vd = np.empty(n + 1)
    vd[0] = voluntary_velocity(spec, ts[:1])[0]
    vd[1:] = np.diff(x_des_ext) / plant.dt
    xd_des = vd[:n]
    f_nu = vibration_force(spec, ts)
    if c.dynamics_compensation:
        # exact inverse of the discrete plant along the reference: applying
        # f_cmp from an on-reference state reproduces (x_des, vd) one tick on
        f_cmp = (plant.mass * np.diff(vd) / plant.dt
                 + plant.damping * xd_des + plant.stiffness * x_des)
    else:
        f_cmp = np.zeros(n)
    noise_rng = np.random.default_rng(spec.seed)
    if spec.s_n > 0.0:
        f_n = noise_rng.normal(0.0, spec.s_n, n)
    else:
        f_n = np.zeros(n)

    state = make_filter_state(fcfg.grid, fcfg.params)
    sp = fcfg.params
    freqs = fcfg.grid.freqs

    out_x = np.empty(n)
    out_ep = np.empty(n)
    out_ev = np.empty(n)
    out_fimp = np.empty(n)
    out_fff = np.empty(n)
    out_yvib = np.empty(n)
    out_ns = np.zeros(n, dtype=np.int64)

    # start on the reference so the record holds no spurious settling transient
    x0, v0 = float(x_des[0]), float(xd_des[0])
    w = state.w

    if not timed:
        P = state.P if state.P is not None else _DUMMY_P
        step, code = _k.run_loop(
            ts, x_des, xd_des, f_cmp, f_nu, f_n,
            plant.dt, plant.mass, plant.damping, plant.stiffness,
            c.k_k, c.k_b, c.k_ff, x0, v0,
            freqs, _VARIANT_IDS[sp.variant], w, P,
            sp.eta, sp.lam, sp.k_dmp, sp.x_dmp, sp.lambda_rls, sp.r_kf,
            sp.q_kf_scale,
            out_x, out_ep, out_ev, out_fimp, out_fff, out_yvib)
        if step >= 0:
            detail = "plant state became non-finite" if code == 1 else ""
            raise FilterDivergenceError(int(step), detail)
        state.steps = n
        state.t = float(ts[-1])
    else:
        step_fn = STEP_FUNCS[sp.variant]
        g = np.empty(2 * fcfg.grid.L, dtype=np.float64)
        ps = PlantState(x=x0, v=v0)
        k_k, k_b, k_ff = c.k_k, c.k_b, c.k_ff
        perf = time.perf_counter_ns

        # overflow on the way to a detected divergence is expected; the e_vel
        # finite check below turns it into an abort with a step index
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(n):
                t0 = perf()
                t = ts[i]
                ep = x_des[i] - ps.x
                ev = xd_des[i] - ps.v
                if not np.isfinite(ev):
                    raise FilterDivergenceError(i, "plant state became non-finite")
                f_imp = k_k * ep + k_b * ev
                _k.fill_basis(freqs, t, g)
                y_vib = float(_k.predict_dot(w, g))
                f_ff = k_ff * y_vib
                try:
                    step_fn(state, g, ev, sp)
                except FilterDivergenceError:
                    raise FilterDivergenceError(i) from None
                out_x[i] = ps.x
                out_ep[i] = ep
                out_ev[i] = ev
                out_fimp[i] = f_imp
                out_fff[i] = f_ff
                out_yvib[i] = y_vib
                total = f_cmp[i] + f_imp + f_ff - f_nu[i] + f_n[i]
                plant_step(ps, total, plant)
                out_ns[i] = perf() - t0

    rec = ExperimentRecord(t=ts, x_des=x_des, x=out_x, e_pos=out_ep, e_vel=out_ev,
                           f_nu=f_nu, f_n=f_n, f_imp=out_fimp, f_ff=out_fff,
                           y_vib=out_yvib, step_ns=out_ns)
    rec.final_sr = rec.suppression_rate(warmup=sr_warmup)
    rec.final_state = state
    return rec
