"""Euclidean projections used by the solver and the reference oracle.

The sphere-and-caps projection and the feasibility restoration work on a
batch of complex rows at once so the multistart oracle can move all of its
starts together.
"""

from __future__ import annotations

import numpy as np


class InfeasibleError(ValueError):
    """The constraint set (sphere, PAPR caps, similarity ball) is empty."""


def project_ball(t: np.ndarray, radius: float) -> np.ndarray:
    nt = np.linalg.norm(t)
    if nt <= radius:
        return t.copy()
    return radius * t / nt


def project_pairs(c: np.ndarray, radius: float) -> np.ndarray:
    """Clip each (re, im) pair of a real-stacked vector to ``radius``."""
    n = c.size // 2
    re, im = c[:n], c[n:]
    mag = np.hypot(re, im)
    scale = np.where(mag > radius, radius / np.where(mag > 0, mag, 1.0), 1.0)
    return np.concatenate([re * scale, im * scale])


def _sphere_caps_rows(Y: np.ndarray, cap: float) -> np.ndarray:
    B, n = Y.shape
    a = np.abs(Y)
    phase = np.where(a > 0, Y / np.where(a > 0, a, 1.0), 1.0)
    if n * cap * cap <= 1.0 + 1e-12:
        return phase / np.sqrt(n)
    srt = -np.sort(-a, axis=1)
    sq = srt**2
    tail = np.concatenate([np.cumsum(sq[:, ::-1], axis=1)[:, ::-1], np.zeros((B, 1))], axis=1)
    k = np.arange(n)
    rem = 1.0 - k * cap * cap
    live = tail[:, :n] > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(live, np.sqrt(np.maximum(rem, 0.0) / np.where(live, tail[:, :n], 1.0)), np.inf)
    prev = np.concatenate([np.full((B, 1), np.inf), srt[:, :-1]], axis=1)
    with np.errstate(invalid="ignore"):  # inf * 0 only in lanes masked out below
        fits = live & (s * srt <= cap * (1 + 1e-12)) & ((k == 0) | (s * prev >= cap * (1 - 1e-12)))
    # once only zero magnitudes remain, they share the leftover energy
    zeros_left = ~live & (rem > 0.0)
    pick = fits | zeros_left
    has = pick.any(axis=1)
    kk = np.where(has, np.argmax(pick, axis=1), 0)
    rows = np.arange(B)
    s_k = s[rows, kk][:, None]
    fill = np.sqrt(np.maximum(rem[kk], 0.0) / np.maximum(n - kk, 1))[:, None]
    with np.errstate(invalid="ignore"):
        mag = np.where(zeros_left[rows, kk][:, None], np.where(a > 0, cap, fill), np.minimum(s_k * a, cap))
    mag = np.where(has[:, None], mag, 1.0 / np.sqrt(n))
    X = mag * phase
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def project_sphere_caps(y: np.ndarray, cap: float) -> np.ndarray:
    """Nearest unit-norm complex vector with every ``|x_n| <= cap``.

    Phases follow ``y``; magnitudes are ``min(s |y_n|, cap)`` with ``s`` set so
    the result has unit norm. Zero entries of ``y`` absorb leftover energy
    equally when the non-zero ones saturate. A 2-D input is treated as a
    batch of rows.
    """
    Y = np.asarray(y, dtype=np.complex128)
    n = Y.shape[-1]
    if n * cap * cap < 1.0 - 1e-12:
        raise InfeasibleError(f"cap {cap} cannot hold unit energy over {n} samples")
    if Y.ndim == 1:
        return _sphere_caps_rows(Y[None, :], cap)[0]
    return _sphere_caps_rows(Y, cap)


def restore_feasibility(z: np.ndarray, x0: np.ndarray, cap: float, epsilon: float,
                        bisection_steps: int = 60) -> tuple[np.ndarray, np.ndarray | float]:
    """Map ``z`` onto sphere, caps and the ball ``||x - x0|| <= epsilon``.

    First projects onto sphere and caps. If the similarity ball is violated,
    walks back along ``x0 + t (z - x0)`` and bisects on ``t`` for the largest
    feasible step. ``x0`` itself must satisfy the caps. Returns the point and
    the accepted ``t`` (1.0 when no walk-back was needed); a 2-D ``z`` is a
    batch of rows and gives a vector of ``t``.
    """
    Z = np.asarray(z, dtype=np.complex128)
    x0 = np.asarray(x0, dtype=np.complex128)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    P = project_sphere_caps(Z, cap)
    bad = np.linalg.norm(P - x0, axis=1) > epsilon
    t = np.ones(Z.shape[0])
    if bad.any():
        if np.linalg.norm(project_sphere_caps(x0, cap) - x0) > epsilon:
            raise InfeasibleError("reference waveform violates the PAPR cap by more than epsilon")
        Zb = Z[bad]
        lo = np.zeros(Zb.shape[0])
        hi = np.ones(Zb.shape[0])
        for _ in range(bisection_steps):
            mid = 0.5 * (lo + hi)
            ok = np.linalg.norm(project_sphere_caps(x0 + mid[:, None] * (Zb - x0), cap) - x0, axis=1) <= epsilon
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        P[bad] = project_sphere_caps(x0 + lo[:, None] * (Zb - x0), cap)
        t[bad] = lo
    if single:
        return P[0], float(t[0])
    return P, t
