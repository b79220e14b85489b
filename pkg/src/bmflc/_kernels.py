"""Jitted inner kernels for the per-tick hot path.

Every step kernel mutates its array arguments in place and returns a
finiteness flag accumulated from the entries it wrote, so a NaN or Inf
introduced by the update is caught in the same pass that produced it
(NaN poisons the running sum; +Inf/-Inf make it non-finite too).

The *_steps drivers exist for microbenchmarking: they run n updates per
call so per-step cost can be timed without Python call overhead skewing
the small-L end. The error input drifts by 1e-9 per step, which keeps
the compiler from collapsing the loop while leaving the arithmetic
representative of real use.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def fill_basis(freqs, t, out):
    # out[:L] = sin(2 pi nu_r t), out[L:] = cos(2 pi nu_r t)
    L = freqs.shape[0]
    for r in range(L):
        a = 2.0 * math.pi * freqs[r] * t
        out[r] = math.sin(a)
        out[L + r] = math.cos(a)


@njit(cache=True)
def predict_dot(w, g):
    # plain sequential sum so the timed and compiled loop paths share
    # one summation order
    acc = 0.0
    for k in range(w.shape[0]):
        acc += w[k] * g[k]
    return acc


@njit(cache=True)
def lms_step(w, g, e, eta, lam):
    s = 0.0
    for k in range(w.shape[0]):
        w[k] = w[k] * lam + 2.0 * eta * g[k] * e
        s += w[k]
    return math.isfinite(s)


@njit(cache=True)
def damped_step(w, g, e, eta, lam, k_dmp, x_dmp):
    s = 0.0
    for k in range(w.shape[0]):
        # logistic damping on the pre-update weight magnitude
        sig = 1.0 / (1.0 + np.exp(-k_dmp * (abs(w[k]) - x_dmp)))
        w[k] = w[k] * lam + (eta * g[k] * sig) * e
        s += w[k]
    return math.isfinite(s)


# reassoc/contract let LLVM vectorize the O(L^2) reductions without the
# nan/ninf flags that would break non-finite detection
_FM = {"reassoc", "contract"}


@njit(cache=True, fastmath=_FM)
def rls_step(w, P, g, e, lam, lam_rls):
    # P is kept as its upper triangle (j >= i); the strict lower triangle is
    # never read or written. A rank-one downdate of a symmetric matrix is
    # symmetric, so one stored triangle is the whole state -- and streaming
    # half the matrix per step keeps the cost quadratic after P outgrows the
    # cache.
    n = w.shape[0]
    Pg = np.zeros(n)
    for i in range(n):
        gi = g[i]
        acc = P[i, i] * gi
        for j in range(i + 1, n):
            acc += P[i, j] * g[j]
        Pg[i] += acc
        # mirror of the row: P[j, i] == P[i, j]
        for j in range(i + 1, n):
            Pg[j] += P[i, j] * gi
    den = lam_rls
    for i in range(n):
        den += g[i] * Pg[i]
    inv = 1.0 / lam_rls
    s = 0.0
    for i in range(n):
        mu_i = Pg[i] / den
        w[i] = w[i] * lam + mu_i * e
        s += w[i]
        # (P - mu g^T P) / lam_rls over the stored triangle; g^T P == Pg^T
        # by symmetry
        for j in range(i, n):
            P[i, j] = (P[i, j] - mu_i * Pg[j]) * inv
        # cheap finite guard: w and diag(P) directly, off-diagonal blow-ups
        # through their Pg image one tick later
        s += P[i, i]
    return math.isfinite(s)


@njit(cache=True, fastmath=_FM)
def kalman_step(w, P, g, e, lam, r_kf, q_kf_scale):
    # same upper-triangle covariance storage as rls_step
    n = w.shape[0]
    Pg = np.zeros(n)
    for i in range(n):
        gi = g[i]
        acc = P[i, i] * gi
        for j in range(i + 1, n):
            acc += P[i, j] * g[j]
        Pg[i] += acc
        for j in range(i + 1, n):
            Pg[j] += P[i, j] * gi
    den = r_kf
    for i in range(n):
        den += g[i] * Pg[i]
    s = 0.0
    for i in range(n):
        mu_i = Pg[i] / den
        w[i] = w[i] * lam + mu_i * e
        s += w[i]
        for j in range(i, n):
            P[i, j] = P[i, j] - mu_i * Pg[j]
        P[i, i] += q_kf_scale
        s += P[i, i]
    return math.isfinite(s)


@njit(cache=True)
def run_loop(ts, x_des, xd_des, f_cmp, f_nu, f_n,
             dt, mass, damping, stiffness, k_k, k_b, k_ff, x0, v0,
             freqs, vid, w, P, eta, lam, k_dmp, x_dmp, lam_rls, r_kf,
             q_kf_scale, out_x, out_ep, out_ev, out_fimp, out_fff, out_yvib):
    """Whole-run closed loop, arithmetic and op order identical to the timed
    Python tick loop. Returns (step, code): (-1, 0) on success, else the
    failing tick with code 1 for a non-finite plant state or 2 for a filter
    divergence. vid selects the update: 0 lms, 1 damped, 2 rls, 3 kalman
    (P is untouched for 0/1 and may be a dummy).
    """
    n = ts.shape[0]
    L = freqs.shape[0]
    g = np.empty(2 * L)
    x = x0
    v = v0
    for i in range(n):
        t = ts[i]
        ep = x_des[i] - x
        ev = xd_des[i] - v
        if not math.isfinite(ev):
            return i, 1
        f_imp = k_k * ep + k_b * ev
        fill_basis(freqs, t, g)
        y_vib = predict_dot(w, g)
        f_ff = k_ff * y_vib
        if vid == 0:
            ok = lms_step(w, g, ev, eta, lam)
        elif vid == 1:
            ok = damped_step(w, g, ev, eta, lam, k_dmp, x_dmp)
        elif vid == 2:
            ok = rls_step(w, P, g, ev, lam, lam_rls)
        else:
            ok = kalman_step(w, P, g, ev, lam, r_kf, q_kf_scale)
        if not ok:
            return i, 2
        out_x[i] = x
        out_ep[i] = ep
        out_ev[i] = ev
        out_fimp[i] = f_imp
        out_fff[i] = f_ff
        out_yvib[i] = y_vib
        total = f_cmp[i] + f_imp + f_ff - f_nu[i] + f_n[i]
        v = v + dt * ((total - damping * v - stiffness * x) / mass)
        x = x + dt * v
    return -1, 0


@njit(cache=True)
def lms_steps(w, g, e0, eta, lam, n):
    ok = True
    for i in range(n):
        ok = lms_step(w, g, e0 * (1.0 + 1e-9 * i), eta, lam) and ok
    return ok


@njit(cache=True)
def damped_steps(w, g, e0, eta, lam, k_dmp, x_dmp, n):
    ok = True
    for i in range(n):
        ok = damped_step(w, g, e0 * (1.0 + 1e-9 * i), eta, lam, k_dmp, x_dmp) and ok
    return ok


@njit(cache=True)
def rls_steps(w, P, g, e0, lam, lam_rls, n):
    ok = True
    for i in range(n):
        ok = rls_step(w, P, g, e0 * (1.0 + 1e-9 * i), lam, lam_rls) and ok
    return ok


@njit(cache=True)
def kalman_steps(w, P, g, e0, lam, r_kf, q_kf_scale, n):
    ok = True
    for i in range(n):
        ok = kalman_step(w, P, g, e0 * (1.0 + 1e-9 * i), lam, r_kf, q_kf_scale) and ok
    return ok
