"""Fused ADMM loop compiled with numba.

Vectors are real-stacked, length ``2n`` with ``n = NL``. The per-sample
auxiliaries ``gamma`` and ``w`` use the same layout: pair ``i`` lives at
indices ``i`` and ``n + i``, every other slot is structurally zero, so they
are stored as plain length-``2n`` vectors.
"""

from __future__ import annotations

import numpy as np
from numba import njit

ALPHA_DEGENERATE = 1e-14
ROBUST_GUARD = 1e-12
MIN_RELAXATION = 1.0 / 64.0

STOP_MAX_ITER = 0
STOP_CONVERGED = 1
STOP_DIVERGED = 2
STOP_INNER_FAILED = 3


@njit(cache=True)
def _norm(a):
    s = 0.0
    for i in range(a.size):
        s += a[i] * a[i]
    return np.sqrt(s)


@njit(cache=True)
def _dist(a, b):
    s = 0.0
    for i in range(a.size):
        d = a[i] - b[i]
        s += d * d
    return np.sqrt(s)


@njit(cache=True)
def x_numerator(xc, x0, alpha, beta, gamma, u, v, w, rho, out):
    for i in range(xc.size):
        out[i] = 2.0 * xc[i] - u[i] - v[i] - w[i] + rho * alpha[i] + rho * (x0[i] + beta[i]) + rho * gamma[i]


@njit(cache=True)
def robust_fixed_point(base, xc, rho, sigma_p, inner_iters, inner_tol, out):
    """Inner fixed-point iteration for the robust x-update, started at zero.

    Plain iteration of the stationarity map while it contracts; once a step
    fails to shrink, later steps are relaxed by a halved factor.

    Returns ``(iterations used, final step norm)``; a negative count flags a
    non-finite iterate.
    """
    m = base.size
    denom = 2.0 + 3.0 * rho + 2.0 * sigma_p * sigma_p
    if sigma_p == 0.0:
        for i in range(m):
            out[i] = base[i] / (2.0 + 3.0 * rho)
        return 1, 0.0
    x = np.zeros(m)
    step = np.inf
    prev = np.inf
    theta = 1.0
    used = 0
    for p in range(inner_iters):
        a = _dist(x, xc)
        b = _norm(x)
        c1 = b / a if a >= ROBUST_GUARD else 0.0
        c2 = a / b if b >= ROBUST_GUARD else 0.0
        raw = 0.0
        finite = True
        for i in range(m):
            corr = 0.0
            if a >= ROBUST_GUARD:
                corr += c1 * (x[i] - xc[i])
            if b >= ROBUST_GUARD:
                corr += c2 * x[i]
            nxt = (base[i] - 2.0 * sigma_p * corr) / denom
            if not np.isfinite(nxt):
                finite = False
            d = nxt - x[i]
            raw += d * d
            out[i] = nxt
        used = p + 1
        if not finite:
            return -used, np.inf
        raw = np.sqrt(raw)
        # halve the relaxation whenever the plain map stops contracting
        if raw >= prev:
            theta = max(0.5 * theta, MIN_RELAXATION)
        prev = raw
        for i in range(m):
            x[i] += theta * (out[i] - x[i])
            out[i] = x[i]
        step = theta * raw
        if step < inner_tol:
            break
    return used, step


@njit(cache=True)
def admm_loop(xc, x0, alpha, beta, gamma, u, v, w, rho, eta, epsilon, max_iter,
              primal_tol, stall_window, sigma_p, inner_iters, inner_tol):
    """Run the round-robin iteration in place on the auxiliary/dual arrays.

    Returns ``(x, iterations, stop_code, objective, drift, aux_step, papr,
    similarity, inner_used, inner_step)``; histories are trimmed by the caller.
    """
    m = xc.size
    n = m // 2
    cap2 = eta / n
    cap = np.sqrt(cap2)
    x = np.zeros(m)
    base = np.zeros(m)
    obj = np.zeros(max_iter)
    drift = np.zeros(max_iter)
    aux = np.zeros(max_iter)
    papr = np.zeros(max_iter)
    sim = np.zeros(max_iter)
    inner_used = np.zeros(max_iter, dtype=np.int64)
    inner_step = np.zeros(max_iter)
    quiet = 0
    stop = STOP_MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        k = it - 1
        # x-update
        x_numerator(xc, x0, alpha, beta, gamma, u, v, w, rho, base)
        used, istep = robust_fixed_point(base, xc, rho, sigma_p, inner_iters, inner_tol, x)
        inner_used[k] = used
        inner_step[k] = istep
        if used < 0:
            stop = STOP_INNER_FAILED
            break
        # alpha-update: projection onto the unit sphere
        s = 0.0
        for i in range(m):
            t = x[i] + u[i] / rho
            s += t * t
        s = np.sqrt(s)
        da = 0.0
        if s >= ALPHA_DEGENERATE:
            for i in range(m):
                t = (x[i] + u[i] / rho) / s
                d = t - alpha[i]
                da += d * d
                alpha[i] = t
        # beta-update: projection onto the similarity ball
        s = 0.0
        for i in range(m):
            t = x[i] - x0[i] + v[i] / rho
            s += t * t
        s = np.sqrt(s)
        sc = 1.0 if s <= epsilon else epsilon / s
        db = 0.0
        for i in range(m):
            t = sc * (x[i] - x0[i] + v[i] / rho)
            d = t - beta[i]
            db += d * d
            beta[i] = t
        # gamma-update: per-sample disc projections
        dg = 0.0
        for i in range(n):
            cr = x[i] + w[i] / rho
            ci = x[n + i] + w[n + i] / rho
            mag2 = cr * cr + ci * ci
            if mag2 > cap2:
                f = cap / np.sqrt(mag2)
                cr *= f
                ci *= f
            d1 = cr - gamma[i]
            d2 = ci - gamma[n + i]
            dg += d1 * d1 + d2 * d2
            gamma[i] = cr
            gamma[n + i] = ci
        # duals, drift and trace quantities
        e2 = 0.0
        xx = 0.0
        peak = 0.0
        f_nom = 0.0
        f_sim = 0.0
        finite = True
        for i in range(m):
            r1 = x[i] - alpha[i]
            r2 = x[i] - x0[i] - beta[i]
            r3 = x[i] - gamma[i]
            u[i] += rho * r1
            v[i] += rho * r2
            w[i] += rho * r3
            e2 += r1 * r1 + r2 * r2 + r3 * r3
            xx += x[i] * x[i]
            dc = x[i] - xc[i]
            f_nom += dc * dc
            d0 = x[i] - x0[i]
            f_sim += d0 * d0
            if not np.isfinite(x[i]):
                finite = False
        for i in range(n):
            p = x[i] * x[i] + x[n + i] * x[n + i]
            if p > peak:
                peak = p
        if sigma_p > 0.0:
            r = np.sqrt(f_nom) + sigma_p * np.sqrt(xx)
            obj[k] = r * r
        else:
            obj[k] = f_nom
        drift[k] = np.sqrt(e2)
        aux[k] = np.sqrt(da + db + dg)
        papr[k] = peak * n / xx if xx > 0.0 else np.nan
        sim[k] = np.sqrt(f_sim)
        if not finite or not np.isfinite(e2):
            stop = STOP_DIVERGED
            break
        if max(drift[k], aux[k]) < primal_tol:
            quiet += 1
            if quiet >= stall_window:
                stop = STOP_CONVERGED
                break
        else:
            quiet = 0
    return x, it, stop, obj, drift, aux, papr, sim, inner_used, inner_step
