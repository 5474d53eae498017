"""Worst-case design under a norm-bounded channel estimation error.

With the estimate ``H~`` and ``||Delta||_F <= sigma_delta`` the interference
bound leads to the surrogate cost ``(||x - x~_comm|| + s ||x||)^2`` where
``s = sigma_delta / ||H~||_F``. The ADMM loop is unchanged except for the
x-step, which becomes a fixed-point iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernel
from .admm import SolverConfig, SolverState, db_to_linear, finish, run_admm, scatter_pairs
from .model import Scenario, WaveformFrame, check_full_row_rank, zf_precode


@dataclass(frozen=True)
class RobustConfig:
    base: SolverConfig
    sigma_delta: float = 0.0
    inner_iters: int = 50
    inner_tol: float = 1e-10

    def __post_init__(self):
        if not self.sigma_delta >= 0.0:
            raise ValueError(f"sigma_delta must be non-negative, got {self.sigma_delta}")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be at least 1")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")

    @classmethod
    def with_sigma_db(cls, base: SolverConfig, sigma_delta_db: float, **kw) -> "RobustConfig":
        """``sigma_delta`` given as a power ratio in dB."""
        return cls(base=base, sigma_delta=db_to_linear(sigma_delta_db), **kw)


def robust_target(H_est, S, sigma_delta: float = 0.0) -> tuple[WaveformFrame, float, float]:
    """Unit-norm zero-forcing target for the estimated channel.

    Returns ``(target, zf_scale, normalized sigma)`` with the normalized
    error ``sigma_delta / ||H~||_F``.
    """
    H_est = np.asarray(H_est, dtype=np.complex128)
    check_full_row_rank(H_est)
    target, g = zf_precode(H_est, S)
    return target, g, float(sigma_delta / np.linalg.norm(H_est))


def robust_update_x(state: SolverState, config: RobustConfig, xc_bar: np.ndarray, x0_bar: np.ndarray,
                    sigma_p: float) -> tuple[np.ndarray, int, float]:
    """Fixed-point x-step started from zero.

    Returns ``(x, inner iterations used, last step norm)``. Correction terms
    whose normalizing norm is below ``1e-12`` are dropped for that iterate.
    Once the plain map stops contracting, steps are relaxed by a factor that
    halves on every non-shrinking step (floor 1/64).
    """
    rho = config.base.rho
    base = (2.0 * xc_bar - state.u - state.v - scatter_pairs(state.w)
            + rho * state.alpha + rho * (x0_bar + state.beta) + rho * scatter_pairs(state.gamma))
    if sigma_p == 0.0:
        return base / (2.0 + 3.0 * rho), 1, 0.0
    denom = 2.0 + 3.0 * rho + 2.0 * sigma_p**2
    x = np.zeros_like(base)
    step = prev = np.inf
    theta = 1.0
    used = 0
    for used in range(1, config.inner_iters + 1):
        a = np.linalg.norm(x - xc_bar)
        b = np.linalg.norm(x)
        corr = np.zeros_like(x)
        if a >= _kernel.ROBUST_GUARD:
            corr += (b / a) * (x - xc_bar)
        if b >= _kernel.ROBUST_GUARD:
            corr += (a / b) * x
        nxt = (base - 2.0 * sigma_p * corr) / denom
        if not np.all(np.isfinite(nxt)):
            raise FloatingPointError(f"non-finite fixed-point iterate at inner step {used}")
        raw = float(np.linalg.norm(nxt - x))
        if raw >= prev:
            theta = max(0.5 * theta, _kernel.MIN_RELAXATION)
        prev = raw
        x = x + theta * (nxt - x)
        step = theta * raw
        if step < config.inner_tol:
            break
    return x, used, step


def robust_objective(x, target, sigma_p: float) -> float:
    a = x.x if isinstance(x, WaveformFrame) else np.asarray(x)
    b = target.x if isinstance(target, WaveformFrame) else np.asarray(target)
    return float((np.linalg.norm(a - b) + sigma_p * np.linalg.norm(a)) ** 2)


def robust_solve(scenario: Scenario, config: RobustConfig, backend: str = "numba"):
    """Same loop as :func:`isacwk.admm.solve` with the robust x-step.

    ``scenario.H`` is taken as the channel estimate. Diagnostics carry the
    inner iteration count per outer iteration.
    """
    target, g, sigma_p = robust_target(scenario.H, scenario.S, config.sigma_delta)
    base = config.base
    xu = lambda st, xc, x0: robust_update_x(st, config, xc, x0, sigma_p)[:2]
    raw, it, stop, hist = run_admm(target.xbar, scenario.x0.xbar, base, backend=backend, sigma_p=sigma_p,
                                   inner_iters=config.inner_iters, inner_tol=config.inner_tol, x_update=xu)
    return finish(scenario, base, target, g, raw, it, stop, hist, sigma_p=sigma_p, robust=True)


def draw_channel_error(K: int, N: int, sigma_delta: float, seed) -> np.ndarray:
    """Complex Gaussian direction scaled to Frobenius norm exactly ``sigma_delta``."""
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))
    return sigma_delta * D / np.linalg.norm(D)


__all__ = ["RobustConfig", "draw_channel_error", "robust_objective", "robust_solve",
           "robust_target", "robust_update_x"]
