"""Run metrics and the step-size microbenchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import signal as _signal

from . import _kernels as _k
from .filters import StepSizeParams, VARIANTS, make_grid, eval_basis


def suppression_rate(f_nu, f_ff) -> float | None:
    """SR = 1 - sum((f_nu - f_ff)^2) / sum(f_nu^2).

    Returns None (not applicable) when the vibration has zero power; that is
    deliberately distinct from an SR of 0.0, which means the feedforward did
    no better than nothing.
    """
    f_nu = np.asarray(f_nu, dtype=np.float64)
    f_ff = np.asarray(f_ff, dtype=np.float64)
    if f_nu.shape != f_ff.shape or f_nu.ndim != 1 or f_nu.size == 0:
        raise ValueError(f"need equal-length 1-d series, got {f_nu.shape} and {f_ff.shape}")
    power = float(np.dot(f_nu, f_nu))
    if power == 0.0:
        return None
    resid = f_nu - f_ff
    return 1.0 - float(np.dot(resid, resid)) / power


def bandpass_mse(e_pos, fs: float, low: float = 3.0, high: float = 100.0) -> float:
    """Mean squared value of the series after a zero-phase 4th-order
    Butterworth band-pass (forward-backward, reflected padding).
    """
    x = np.asarray(e_pos, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be 1-d")
    if not (0.0 < low < high):
        raise ValueError(f"need 0 < low < high, got {low}, {high}")
    if high >= fs / 2.0:
        raise ValueError(f"band edge {high} Hz is not below Nyquist {fs / 2.0} Hz")
    sos = _signal.butter(4, [low, high], btype="bandpass", fs=fs, output="sos")
    padlen = 3 * 2 * sos.shape[0]  # 3x the effective filter order
    if x.size <= padlen:
        raise ValueError(f"series too short for edge padding ({x.size} <= {padlen})")
    y = _signal.sosfiltfilt(sos, x, padtype="even", padlen=padlen)
    return float(np.mean(y * y))


def dft_magnitude(series, fs: float):
    """Single-sided amplitude spectrum: (freqs, mag) with mag scaled so a
    unit-amplitude sinusoid on a bin shows magnitude ~= 1.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("series must be 1-d with at least 2 samples")
    if fs <= 0:
        raise ValueError(f"fs must be > 0, got {fs}")
    n = x.size
    spec = np.fft.rfft(x)
    mag = np.abs(spec) * (2.0 / n)
    mag[0] /= 2.0
    if n % 2 == 0:
        mag[-1] /= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    return freqs, mag


@dataclass
class TimingStats:
    variant: str
    L: int
    samples: int
    mean_ns: float
    std_ns: float


_BENCH_ETA = 0.005
_BENCH_E0 = 0.01


def _bench_driver(variant: str, L: int):
    """Returns (callable(n), description) running n consecutive updates."""
    grid = make_grid(6.0, 10.0, L)
    g = eval_basis(grid, 0.123).g
    p = StepSizeParams(variant=variant, eta=_BENCH_ETA, lam=0.9999,
                       lambda_rls=1.0, r_kf=1.0, q_kf_scale=1e-6)
    w = np.zeros(2 * L)
    if variant == "lms":
        return lambda n: _k.lms_steps(w, g, _BENCH_E0, p.eta, p.lam, n)
    if variant == "damped":
        return lambda n: _k.damped_steps(w, g, _BENCH_E0, p.eta, p.lam, p.k_dmp, p.x_dmp, n)
    P = np.eye(2 * L) * p.p0
    if variant == "rls":
        return lambda n: _k.rls_steps(w, P, g, _BENCH_E0, p.lam, p.lambda_rls, n)
    if variant == "kalman":
        return lambda n: _k.kalman_steps(w, P, g, _BENCH_E0, p.lam, p.r_kf, p.q_kf_scale, n)
    raise ValueError(f"unknown variant {variant!r}")


def time_step_sizes(variants=VARIANTS, L: int = 120, reps: int = 100,
                    target_sample_ns: float = 1e6) -> list[TimingStats]:
    """Wall time of the isolated weight update for each variant at band size L.

    Each sample times a batch of consecutive updates (batch size chosen so a
    sample lasts ~target_sample_ns) and divides by the batch size; reps
    samples give the mean/std. All variants see identical basis and error
    inputs. Run on an idle machine for stable numbers.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    out = []
    perf = time.perf_counter_ns
    for variant in variants:
        drv = _bench_driver(variant, L)
        drv(2)  # trigger JIT before any timing
        t0 = perf()
        drv(16)
        est = max(1.0, (perf() - t0) / 16.0)
        inner = int(max(1, min(200_000, round(target_sample_ns / est))))
        for _ in range(3):  # warm
            drv(inner)
        samples = np.empty(reps)
        for i in range(reps):
            t0 = perf()
            drv(inner)
            samples[i] = (perf() - t0) / inner
        out.append(TimingStats(variant=variant, L=L, samples=reps,
                               mean_ns=float(samples.mean()),
                               std_ns=float(samples.std())))
    return out
