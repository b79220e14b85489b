"""Offline filtering of recorded velocity traces.

Feeds a recorded signal through a filter tick by tick with the same kernels
the live loop uses, so replaying a live record's velocity-error column with
the live parameters reproduces the live y_vib exactly.

Two modes: "suppress" treats the trace as raw (unsuppressed) data and
learns from the residual vel - y_vib, which is what the live loop's error
signal amounts to physically; "record" feeds the trace verbatim as the
error input, reproducing a live run's filter evolution from its recorded
e_vel column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .filters import FilterConfig, FilterDivergenceError, STEP_FUNCS, \
    make_filter_state
from .metrics import bandpass_mse, dft_magnitude

MODES = ("suppress", "record")


def load_trace(path, time_col: str = "t", vel_col: str = "e_vel",
               max_jitter: float = 0.01):
    """Read (t, vel) columns from a CSV trace.

    Raises ValueError with the available column names if a requested column
    is missing, and rejects non-uniform timestamps whose spacing deviates
    from the median step by more than max_jitter (relative).
    """
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = next(rd)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        missing = [c for c in (time_col, vel_col) if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {missing}; "
                             f"available: {header}")
        it, iv = header.index(time_col), header.index(vel_col)
        t, vel = [], []
        for ln, row in enumerate(rd, start=2):
            try:
                t.append(float(row[it]))
                vel.append(float(row[iv]))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{ln}: malformed row") from None
    t = np.asarray(t)
    vel = np.asarray(vel)
    if t.size < 2:
        raise ValueError(f"{path}: need at least 2 samples, got {t.size}")
    dt = np.diff(t)
    med = float(np.median(dt))
    if med <= 0:
        raise ValueError(f"{path}: timestamps not increasing")
    if float(np.max(np.abs(dt - med))) > max_jitter * med:
        raise ValueError(f"{path}: timestamp jitter exceeds "
                         f"{max_jitter:.0%} of the median step {med:g}")
    return t, vel


@dataclass
class ReplayReport:
    t: np.ndarray
    vel: np.ndarray
    y_vib: np.ndarray
    residual: np.ndarray      # vel - y_vib
    fs: float
    band: tuple
    mse_before: float         # bandpass_mse of vel over band
    mse_after: float          # bandpass_mse of residual over band
    freqs: np.ndarray
    mag_before: np.ndarray
    mag_after: np.ndarray


def replay(t, vel, fcfg: FilterConfig, band=(3.0, 9.0),
           mode: str = "suppress") -> ReplayReport:
    """Run fcfg's filter over the trace and report before/after metrics."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    t = np.asarray(t, dtype=np.float64)
    vel = np.asarray(vel, dtype=np.float64)
    if t.shape != vel.shape or t.ndim != 1:
        raise ValueError("t and vel must be equal-length 1-D arrays")
    fs = 1.0 / float(np.median(np.diff(t)))

    state = make_filter_state(fcfg.grid, fcfg.params)
    step_fn = STEP_FUNCS[fcfg.params.variant]
    sp = fcfg.params
    freqs = fcfg.grid.freqs
    g = np.empty(2 * fcfg.grid.L)
    w = state.w
    y_vib = np.empty_like(vel)
    for i in range(t.size):
        _k.fill_basis(freqs, t[i], g)
        y = float(_k.predict_dot(w, g))
        y_vib[i] = y
        e = vel[i] - y if mode == "suppress" else vel[i]
        try:
            step_fn(state, g, e, sp)
        except FilterDivergenceError:
            raise FilterDivergenceError(i) from None

    residual = vel - y_vib
    mags_b = dft_magnitude(vel, fs)
    mags_a = dft_magnitude(residual, fs)
    return ReplayReport(
        t=t, vel=vel, y_vib=y_vib, residual=residual, fs=fs, band=tuple(band),
        mse_before=bandpass_mse(vel, fs, band[0], band[1]),
        mse_after=bandpass_mse(residual, fs, band[0], band[1]),
        freqs=mags_b[0], mag_before=mags_b[1], mag_after=mags_a[1])


def peak_magnitude(freqs, mags, target: float, halfwidth: float = 0.5) -> float:
    """Largest magnitude within +-halfwidth of target frequency."""
    m = (freqs >= target - halfwidth) & (freqs <= target + halfwidth)
    if not np.any(m):
        raise ValueError(f"no spectrum bins within {halfwidth} of {target}")
    return float(np.max(mags[m]))
