"""ADMM waveform design under unit power, per-sample PAPR caps and a
similarity ball around a reference chirp.

The problem solved is::

    min ||xbar - xbar_comm||^2
    s.t. ||xbar|| = 1,  |x_n|^2 <= eta / (NL),  ||xbar - xbar0|| <= epsilon

split into auxiliaries ``alpha`` (sphere), ``beta`` (ball) and per-sample
pairs ``gamma_n`` (caps) with scaled duals ``u``, ``v``, ``w_n``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernel
from .metrics import MetricReport, evaluate
from .model import Scenario, WaveformFrame
from .projections import project_ball, restore_feasibility

log = logging.getLogger(__name__)

BACKENDS = ("numba", "numpy")


class DivergenceError(RuntimeError):
    """A non-finite value appeared in the iteration."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


def db_to_linear(value_db: float) -> float:
    return float(10.0 ** (value_db / 10.0))


@dataclass(frozen=True)
class SolverConfig:
    """ADMM settings. ``eta`` is the linear PAPR cap; use :meth:`with_eta_db`
    for a dB value."""

    eta: float
    epsilon: float
    rho: float = 0.1
    max_iter: int = 1000
    primal_tol: float = 1e-12
    stall_window: int = 20

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.eta >= 1.0:
            raise ValueError(f"eta must be >= 1 (PAPR is never below 1), got {self.eta}")
        if not self.epsilon >= 0.0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.primal_tol > 0:
            raise ValueError("primal_tol must be positive")
        if self.stall_window < 1:
            raise ValueError("stall_window must be at least 1")

    @classmethod
    def with_eta_db(cls, eta_db: float, epsilon: float, **kw) -> "SolverConfig":
        return cls(eta=db_to_linear(eta_db), epsilon=epsilon, **kw)

    @property
    def eta_db(self) -> float:
        return float(10.0 * np.log10(self.eta))


def scatter_pairs(pairs: np.ndarray) -> np.ndarray:
    """``(NL, 2)`` pairs to a real-stacked ``2NL`` vector (sum of F_n g_n)."""
    pairs = np.asarray(pairs, dtype=np.float64)
    return np.concatenate([pairs[:, 0], pairs[:, 1]])


def gather_pairs(xbar: np.ndarray) -> np.ndarray:
    """Real-stacked ``2NL`` vector to its ``(NL, 2)`` sample pairs."""
    xbar = np.asarray(xbar, dtype=np.float64)
    n = xbar.size // 2
    return np.column_stack([xbar[:n], xbar[n:]])


@dataclass
class SolverState:
    """Primal, auxiliary and dual iterates. ``gamma`` and ``w`` hold one
    (re, im) pair per sample."""

    xbar: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    iteration: int = 0
    residual_history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, NL: int) -> "SolverState":
        z = lambda: np.zeros(2 * NL)
        return cls(z(), z(), z(), np.zeros((NL, 2)), z(), z(), np.zeros((NL, 2)))

    @property
    def NL(self) -> int:
        return self.xbar.size // 2

    def copy(self) -> "SolverState":
        return SolverState(
            self.xbar.copy(), self.alpha.copy(), self.beta.copy(), self.gamma.copy(),
            self.u.copy(), self.v.copy(), self.w.copy(), self.iteration, list(self.residual_history),
        )


def update_x(state: SolverState, config: SolverConfig, xc_bar: np.ndarray, x0_bar: np.ndarray) -> np.ndarray:
    rho = config.rho
    num = (2.0 * xc_bar - state.u - state.v - scatter_pairs(state.w)
           + rho * state.alpha + rho * (x0_bar + state.beta) + rho * scatter_pairs(state.gamma))
    return num / (2.0 + 3.0 * rho)


def update_alpha(x_new: np.ndarray, u: np.ndarray, rho: float, previous: np.ndarray | None = None) -> np.ndarray:
    """Project ``x + u / rho`` onto the unit sphere.

    A (numerically) zero argument has no unique projection: the previous
    ``alpha`` is kept if given, otherwise ``ValueError`` is raised.
    """
    t = x_new + u / rho
    nt = np.linalg.norm(t)
    if nt < _kernel.ALPHA_DEGENERATE:
        if previous is None:
            raise ValueError("alpha-update argument is zero; projection onto the sphere is undefined")
        return np.array(previous, dtype=np.float64, copy=True)
    return t / nt


def update_beta(x_new: np.ndarray, x0_bar: np.ndarray, v: np.ndarray, rho: float, epsilon: float) -> np.ndarray:
    return project_ball(x_new - x0_bar + v / rho, epsilon)


def update_gamma(x_new: np.ndarray, w: np.ndarray, rho: float, eta: float, NL: int) -> np.ndarray:
    """Clip each sample pair of ``x + w / rho`` to radius ``sqrt(eta / NL)``."""
    c = gather_pairs(x_new) + np.asarray(w) / rho
    r = np.sqrt(eta / NL)
    mag = np.hypot(c[:, 0], c[:, 1])
    scale = np.where(mag > r, r / np.where(mag > 0, mag, 1.0), 1.0)
    return c * scale[:, None]


def update_duals(state: SolverState, x_new, alpha_new, beta_new, gamma_new, rho: float, x0_bar):
    u = state.u + rho * (x_new - alpha_new)
    v = state.v + rho * (x_new - x0_bar - beta_new)
    w = state.w + rho * (gather_pairs(x_new) - gamma_new)
    return u, v, w


def drift(state: SolverState, xbar: np.ndarray, x0_bar: np.ndarray) -> tuple[np.ndarray, float]:
    """Stacked feasibility gap ``[x - alpha; x - x0 - beta; pair_n(x) - gamma_n]``."""
    e = np.concatenate([
        xbar - state.alpha,
        xbar - x0_bar - state.beta,
        (gather_pairs(xbar) - state.gamma).ravel(),
    ])
    return e, float(np.linalg.norm(e))


@dataclass
class ConvergenceDiagnostics:
    """Per-iteration traces of one solve. ``objective`` is the (robust)
    cost at each raw iterate; ``papr`` and ``similarity`` refer to the raw
    iterate as well."""

    rho: float
    objective: np.ndarray
    drift_norm: np.ndarray
    aux_step_norm: np.ndarray
    papr: np.ndarray
    similarity: np.ndarray
    stop_reason: str
    inner_iters_used: np.ndarray | None = None
    final_objective: float = float("nan")
    restoration_step: float = 1.0
    raw_waveform: WaveformFrame | None = None
    raw_metrics: MetricReport | None = None

    @property
    def iterations(self) -> int:
        return int(self.objective.size)

    @property
    def a_m(self) -> np.ndarray:
        return 0.5 * self.rho * (self.drift_norm**2 + self.aux_step_norm**2)

    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.a_m)

    @property
    def objective_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.objective)

    @property
    def papr_db(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return 10.0 * np.log10(self.papr)

    def tail_residual(self, fraction: float = 0.1) -> float:
        """Largest ``max(drift, aux step)`` over the final ``fraction`` of iterations."""
        k = max(1, int(np.ceil(fraction * self.iterations)))
        return float(max(self.drift_norm[-k:].max(), self.aux_step_norm[-k:].max()))

    def columns(self) -> list[str]:
        cols = ["iter", "objective_db", "drift_norm", "aux_step_norm", "papr_db", "similarity"]
        if self.inner_iters_used is not None:
            cols.append("inner_iters_used")
        return cols

    def rows(self):
        obj_db, papr_db = self.objective_db, self.papr_db
        for k in range(self.iterations):
            row = [k + 1, float(obj_db[k]), float(self.drift_norm[k]), float(self.aux_step_norm[k]),
                   float(papr_db[k]), float(self.similarity[k])]
            if self.inner_iters_used is not None:
                row.append(int(self.inner_iters_used[k]))
            yield row

    def write_csv(self, path) -> None:
        path = Path(path)
        try:
            with path.open("w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(self.columns())
                for r in self.rows():
                    wr.writerow([repr(c) if isinstance(c, float) else c for c in r])
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc


XUpdate = Callable[[SolverState, np.ndarray, np.ndarray], "tuple[np.ndarray, int]"]


def _loop_numpy(xc_bar, x0_bar, config: SolverConfig, x_update: XUpdate, sigma_p: float):
    NL = xc_bar.size // 2
    st = SolverState.zeros(NL)
    hist = {k: [] for k in ("obj", "drift", "aux", "papr", "sim", "inner")}
    quiet = 0
    stop = "max_iter"
    for it in range(1, config.max_iter + 1):
        x, used = x_update(st, xc_bar, x0_bar)
        a = update_alpha(x, st.u, config.rho, previous=st.alpha)
        b = update_beta(x, x0_bar, st.v, config.rho, config.epsilon)
        g = update_gamma(x, st.w, config.rho, config.eta, NL)
        aux = np.sqrt(np.sum((a - st.alpha) ** 2) + np.sum((b - st.beta) ** 2) + np.sum((g - st.gamma) ** 2))
        u, v, w = update_duals(st, x, a, b, g, config.rho, x0_bar)
        st = SolverState(x, a, b, g, u, v, w, it, st.residual_history)
        _, dn = drift(st, x, x0_bar)
        st.residual_history.append(max(dn, aux))
        fn = float(np.sum((x - xc_bar) ** 2))
        obj = (np.sqrt(fn) + sigma_p * np.linalg.norm(x)) ** 2 if sigma_p > 0 else fn
        p = np.sum(gather_pairs(x) ** 2, axis=1)
        xx = p.sum()
        hist["obj"].append(obj)
        hist["drift"].append(dn)
        hist["aux"].append(aux)
        hist["papr"].append(p.max() * NL / xx if xx > 0 else np.nan)
        hist["sim"].append(float(np.linalg.norm(x - x0_bar)))
        hist["inner"].append(used)
        if not np.all(np.isfinite(x)) or not np.isfinite(dn):
            stop = "diverged"
            break
        if max(dn, aux) < config.primal_tol:
            quiet += 1
            if quiet >= config.stall_window:
                stop = "converged"
                break
        else:
            quiet = 0
    arrays = {k: np.asarray(v_, dtype=np.int64 if k == "inner" else np.float64) for k, v_ in hist.items()}
    return st.xbar, it, stop, arrays


_STOP_NAMES = {
    _kernel.STOP_MAX_ITER: "max_iter",
    _kernel.STOP_CONVERGED: "converged",
    _kernel.STOP_DIVERGED: "diverged",
    _kernel.STOP_INNER_FAILED: "diverged",
}


def _loop_numba(xc_bar, x0_bar, config: SolverConfig, sigma_p, inner_iters, inner_tol):
    m = xc_bar.size
    z = lambda: np.zeros(m)
    x, it, code, obj, dr, aux, pp, sim, inner, _ = _kernel.admm_loop(
        np.ascontiguousarray(xc_bar, dtype=np.float64), np.ascontiguousarray(x0_bar, dtype=np.float64),
        z(), z(), z(), z(), z(), z(), float(config.rho), float(config.eta), float(config.epsilon),
        int(config.max_iter), float(config.primal_tol), int(config.stall_window),
        float(sigma_p), int(inner_iters), float(inner_tol),
    )
    arrays = {"obj": obj[:it], "drift": dr[:it], "aux": aux[:it], "papr": pp[:it], "sim": sim[:it],
              "inner": np.abs(inner[:it])}
    return x, int(it), _STOP_NAMES[int(code)], arrays


def run_admm(xc_bar: np.ndarray, x0_bar: np.ndarray, config: SolverConfig, *, backend: str = "numba",
             sigma_p: float = 0.0, inner_iters: int = 1, inner_tol: float = 1e-10,
             x_update: XUpdate | None = None):
    """Run the iteration on real-stacked targets.

    Returns ``(raw_xbar, iterations, stop_reason, histories)``. ``x_update``
    replaces the x-step on the numpy backend; the numba backend implements the
    nominal and robust x-steps itself.
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if backend == "numba":
        return _loop_numba(xc_bar, x0_bar, config, sigma_p, inner_iters, inner_tol)
    if x_update is None:
        x_update = lambda st, xc, x0: (update_x(st, config, xc, x0), 1)
    return _loop_numpy(xc_bar, x0_bar, config, x_update, sigma_p)


def finish(scenario: Scenario, config: SolverConfig, target: WaveformFrame, zf_scale: float,
           raw_xbar: np.ndarray, iterations: int, stop: str, hist: dict, sigma_p: float = 0.0,
           robust: bool = False) -> tuple[WaveformFrame, ConvergenceDiagnostics, MetricReport]:
    """Feasibility restoration, metrics and diagnostics shared by both solvers."""
    if stop == "diverged":
        raise DivergenceError("non-finite iterate", iterations)
    N, L = scenario.N, scenario.L
    NL = N * L
    raw = WaveformFrame.from_real(raw_xbar, N, L)
    x_out, t = restore_feasibility(raw.x, scenario.x0.x, np.sqrt(config.eta / NL), config.epsilon)
    out = WaveformFrame.from_vec(x_out, N, L)
    dist = float(np.linalg.norm(out.x - target.x))
    final = (dist + sigma_p * out.norm()) ** 2 if sigma_p > 0 else dist**2
    raw_metrics = evaluate(scenario, raw, zf_scale) if np.any(raw_xbar) else None
    diag = ConvergenceDiagnostics(
        rho=config.rho, objective=hist["obj"], drift_norm=hist["drift"], aux_step_norm=hist["aux"],
        papr=hist["papr"], similarity=hist["sim"], stop_reason=stop,
        inner_iters_used=hist["inner"] if robust else None, final_objective=float(final),
        restoration_step=t, raw_waveform=raw, raw_metrics=raw_metrics,
    )
    log.debug("solve stopped (%s) after %d iterations, restoration step %.3g", stop, iterations, t)
    return out, diag, evaluate(scenario, out, zf_scale)


def solve(scenario: Scenario, config: SolverConfig, backend: str = "numba"
          ) -> tuple[WaveformFrame, ConvergenceDiagnostics, MetricReport]:
    """Design a waveform for ``scenario``.

    Starts from all-zero iterates, runs the x, alpha, beta, gamma, dual
    sweep until ``max_iter`` or until ``max(drift, aux step) < primal_tol``
    for ``stall_window`` consecutive iterations, then maps the last iterate
    onto the feasible set (unit norm, PAPR caps, similarity ball).

    Raises :class:`DivergenceError` if a non-finite value appears.
    """
    target, g = scenario.target()
    raw, it, stop, hist = run_admm(target.xbar, scenario.x0.xbar, config, backend=backend)
    return finish(scenario, config, target, g, raw, it, stop, hist)


def objective(x: np.ndarray | WaveformFrame, target: np.ndarray | WaveformFrame) -> float:
    """``||x - x_comm||^2`` for complex vectors or frames."""
    a = x.x if isinstance(x, WaveformFrame) else np.asarray(x)
    b = target.x if isinstance(target, WaveformFrame) else np.asarray(target)
    return float(np.sum(np.abs(a - b) ** 2))


__all__ = [
    "BACKENDS", "ConvergenceDiagnostics", "DivergenceError", "SolverConfig", "SolverState",
    "db_to_linear", "drift", "finish", "gather_pairs", "objective", "run_admm", "scatter_pairs",
    "solve", "update_alpha", "update_beta", "update_duals", "update_gamma", "update_x",
]
