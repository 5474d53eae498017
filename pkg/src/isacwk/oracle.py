"""Slow reference solvers for small instances and the MUI/similarity
tradeoff study.

Two independent oracles for the constrained design problem:

* ``GridPolar`` enumerates the unit sphere of R^{2NL} through hyperspherical
  angles, keeps the feasible points and returns the best one. The grid has
  ``resolution ** (2NL - 1)`` points, so it is only practical for ``2NL <= 4``
  at the default resolution (``2NL = 8`` needs a coarse grid).
* ``ProjectedDescentMultistart`` runs gradient steps from 100 random starts,
  each followed by alternating projections between the ball and the sphere
  with caps and a final feasibility restoration.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .metrics import hpa_clip, papr
from .model import Scenario, WaveformFrame
from .projections import InfeasibleError, project_sphere_caps, restore_feasibility

MAX_GRID_POINTS = 20_000_000
FEAS_TOL = 1e-9


class OracleMethod(str, enum.Enum):
    GRID_POLAR = "GridPolar"
    MULTISTART = "ProjectedDescentMultistart"


@dataclass(frozen=True)
class OracleResult:
    best_x: np.ndarray
    best_objective: float
    method: OracleMethod
    evaluations: int
    resolution_slack: float = 0.0  # bound on how far the grid optimum may sit above the true one


def _feasible(X: np.ndarray, x0: np.ndarray, cap: float, epsilon: float) -> np.ndarray:
    X = np.atleast_2d(X)
    return (
        (np.abs(np.linalg.norm(X, axis=1) - 1.0) <= FEAS_TOL)
        & (np.max(np.abs(X), axis=1) <= cap * (1 + FEAS_TOL))
        & (np.linalg.norm(X - x0, axis=1) <= epsilon + FEAS_TOL)
    )


def _sphere_points(angles: np.ndarray) -> np.ndarray:
    """Hyperspherical coordinates ``(B, d-1)`` to unit vectors ``(B, d)``."""
    B, k = angles.shape
    out = np.ones((B, k + 1))
    sin_prod = np.ones(B)
    for j in range(k):
        out[:, j] = sin_prod * np.cos(angles[:, j])
        sin_prod = sin_prod * np.sin(angles[:, j])
    out[:, k] = sin_prod
    return out


def grid_polar(xc: np.ndarray, x0: np.ndarray, eta: float, epsilon: float, resolution: int = 64,
               chunk: int = 200_000) -> OracleResult:
    """Exhaustive search over a hyperspherical angle grid."""
    xc = np.asarray(xc, dtype=np.complex128)
    x0 = np.asarray(x0, dtype=np.complex128)
    n = xc.size
    d = 2 * n
    total = resolution ** (d - 1)
    if total > MAX_GRID_POINTS:
        raise ValueError(f"grid of {total} points is too large; lower the resolution or use multistart descent")
    cap = np.sqrt(eta / n)
    polar = [np.linspace(0.0, np.pi, resolution)] * (d - 2)
    azimuth = np.linspace(0.0, 2 * np.pi, resolution, endpoint=False)
    axes = polar + [azimuth]
    best_f, best_x = np.inf, None
    it = itertools.product(*[range(resolution)] * (d - 1))
    done = 0
    while done < total:
        idx = np.array(list(itertools.islice(it, chunk)))
        done += idx.shape[0]
        ang = np.column_stack([axes[j][idx[:, j]] for j in range(d - 1)])
        P = _sphere_points(ang)
        X = P[:, :n] + 1j * P[:, n:]
        ok = _feasible(X, x0, cap, epsilon)
        if ok.any():
            f = np.sum(np.abs(X[ok] - xc) ** 2, axis=1)
            i = int(np.argmin(f))
            if f[i] < best_f:
                best_f, best_x = float(f[i]), X[ok][i]
    # any sphere point is within delta of a grid point (half a cell per angle);
    # |f(x) - f(y)| <= |x - y| (|x - xc| + |y - xc|) bounds the objective gap
    delta = np.sqrt(d - 1) * np.pi / (2 * (resolution - 1))
    if best_x is None:
        if _feasible(x0, x0, cap, epsilon)[0]:
            f0 = float(np.sum(np.abs(x0 - xc) ** 2))
            return OracleResult(x0.copy(), f0, OracleMethod.GRID_POLAR, total, 0.0)
        raise InfeasibleError("no grid point is feasible and the reference itself is infeasible")
    return OracleResult(best_x, best_f, OracleMethod.GRID_POLAR, total, float(delta * (2 * np.sqrt(best_f) + delta)))


def _feasible_map(Y: np.ndarray, x0: np.ndarray, cap: float, epsilon: float, rounds: int) -> np.ndarray:
    for _ in range(rounds):
        D = Y - x0
        nd = np.linalg.norm(D, axis=1, keepdims=True)
        Y = x0 + D * np.minimum(1.0, epsilon / np.where(nd > 0, nd, 1.0))
        Y = project_sphere_caps(Y, cap)
    return restore_feasibility(Y, x0, cap, epsilon)[0]


def multistart_descent(xc: np.ndarray, x0: np.ndarray, eta: float, epsilon: float, starts: int = 100,
                       iters: int = 300, seed: int = 0, alt_rounds: int = 5, tol: float = 1e-13) -> OracleResult:
    """Projected gradient descent from ``starts`` random feasible points.

    Every step is accepted only if it lowers the objective; otherwise that
    start's step size halves. Starts include ``x0`` and the target itself.
    """
    xc = np.asarray(xc, dtype=np.complex128)
    x0 = np.asarray(x0, dtype=np.complex128)
    n = xc.size
    cap = np.sqrt(eta / n)
    if np.linalg.norm(project_sphere_caps(x0, cap) - x0) > epsilon:
        raise InfeasibleError("reference waveform violates the PAPR cap by more than epsilon")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((starts, n)) + 1j * rng.standard_normal((starts, n))
    Z[0] = x0
    if starts > 1:
        Z[1] = xc
    X = _feasible_map(Z, x0, cap, epsilon, alt_rounds)
    f = np.sum(np.abs(X - xc) ** 2, axis=1)
    tau = np.full(starts, 0.5)
    evals = starts
    for _ in range(iters):
        Y = X - tau[:, None] * 2.0 * (X - xc)
        Xn = _feasible_map(Y, x0, cap, epsilon, alt_rounds)
        fn = np.sum(np.abs(Xn - xc) ** 2, axis=1)
        evals += starts
        better = fn < f - tol
        X = np.where(better[:, None], Xn, X)
        gain = np.where(better, f - fn, 0.0)
        f = np.where(better, fn, f)
        tau = np.where(better, np.minimum(tau * 1.5, 0.5), tau * 0.5)
        if np.all((gain < tol) & (tau < 1e-8)):
            break
    i = int(np.argmin(f))
    return OracleResult(X[i], float(f[i]), OracleMethod.MULTISTART, evals, 0.0)


def oracle_solve(scenario: Scenario, eta: float, epsilon: float, method: str | OracleMethod | None = None,
                 resolution: int = 64, starts: int = 100, seed: int = 0) -> OracleResult:
    """Best feasible point for the instance by exhaustive grid or multistart descent.

    ``method=None`` picks the grid when it fits in ``MAX_GRID_POINTS`` and
    descent otherwise.
    """
    target, _ = scenario.target()
    xc, x0 = target.x, scenario.x0.x
    d = 2 * xc.size
    if method is None:
        method = OracleMethod.GRID_POLAR if resolution ** (d - 1) <= MAX_GRID_POINTS else OracleMethod.MULTISTART
    method = OracleMethod(method)
    if method is OracleMethod.GRID_POLAR:
        if d > 8:
            raise ValueError("GridPolar is limited to 2NL <= 8")
        return grid_polar(xc, x0, eta, epsilon, resolution)
    return multistart_descent(xc, x0, eta, epsilon, starts=starts, seed=seed)


# ---------------------------------------------------------------------------
# tradeoff fronts


@dataclass(frozen=True)
class ParetoPoint:
    weight: float
    e_mui: float  # symbol-domain ||H (g X) - S||_F^2
    similarity: float  # ||x - x0||^2
    papr: float

    @property
    def e_mui_db(self) -> float:
        return float(10 * np.log10(max(self.e_mui, 1e-300)))

    @property
    def papr_db(self) -> float:
        return float(10 * np.log10(self.papr))


@dataclass(frozen=True)
class ParetoFront:
    label: str  # "M", "M_clipped" or "M_eta"
    eta: float | None
    points: tuple[ParetoPoint, ...]

    def rows(self):
        for p in self.points:
            yield [p.weight, p.e_mui_db, p.similarity, p.papr_db]


PARETO_COLUMNS = ("w", "E_MUI_db", "similarity", "papr_db")


def non_dominated(values: np.ndarray) -> np.ndarray:
    """Indices of rows of ``values`` (both columns minimized) that no other
    row dominates."""
    v = np.asarray(values, dtype=np.float64)
    keep = []
    for i in range(v.shape[0]):
        le = np.all(v <= v[i], axis=1)
        lt = np.any(v < v[i], axis=1)
        if not np.any(le & lt):
            keep.append(i)
    return np.asarray(keep, dtype=int)


def default_weights(count: int = 32) -> np.ndarray:
    return np.logspace(-4, 4, count)


def _normalized_problem(scenario: Scenario):
    target, g = scenario.target()
    H = scenario.H
    return H, scenario.S / g, scenario.x0.entries, g


def _point(scenario: Scenario, X: np.ndarray, g: float, w: float) -> ParetoPoint:
    e = float(np.sum(np.abs(scenario.H @ (g * X) - scenario.S) ** 2))
    s = float(np.sum(np.abs(X - scenario.x0.entries) ** 2))
    return ParetoPoint(float(w), e, s, papr(X))


def scalarized_unconstrained(H, Sn, X0, w: float) -> np.ndarray:
    """Minimizer of ``||H X - Sn||^2 + w ||X - X0||^2`` (column-wise ridge)."""
    N = H.shape[1]
    A = H.conj().T @ H + w * np.eye(N)
    return np.linalg.solve(A, H.conj().T @ Sn + w * X0)


def scalarized_capped(H, Sn, X0, w: float, eta: float, rho: float = 1.0, iters: int = 500,
                      rounds: int = 8, tol: float = 1e-10) -> np.ndarray:
    """Weighted tradeoff with a PAPR cap, no power constraint.

    The cap ``|x_n|^2 <= eta * P / NL`` depends on the power ``P`` of the
    solution; ``P`` is fixed, the convex capped problem is solved by ADMM,
    and ``P`` is refreshed from the solution for a few rounds. A final
    clipper pass removes any residual excess.
    """
    N, L = X0.shape
    A = H.conj().T @ H + (w + rho) * np.eye(N)
    Ainv = np.linalg.inv(A)
    rhs0 = H.conj().T @ Sn + w * X0
    X = Ainv @ (rhs0 + rho * X0)
    P_prev = -1.0
    for _ in range(rounds):
        P = float(np.sum(np.abs(X) ** 2))
        if abs(P - P_prev) <= tol * P:
            break
        P_prev = P
        r = np.sqrt(eta * P / (N * L))
        Z = X.copy()
        U = np.zeros_like(X)
        for _ in range(iters):
            X = Ainv @ (rhs0 + rho * (Z - U))
            V = X + U
            mag = np.abs(V)
            Zn = np.where(mag > r, V * (r / np.where(mag > 0, mag, 1.0)), V)
            U = U + X - Zn
            moved = np.linalg.norm(Zn - Z)
            Z = Zn
            if moved < tol and np.linalg.norm(X - Z) < tol:
                break
        X = Z
    X = hpa_clip(X, eta)
    starts = [X, hpa_clip(scalarized_unconstrained(H, Sn, X0, w), eta)]
    return min((refine_on_papr_cone(H, Sn, X0, w, eta, S0) for S0 in starts),
               key=lambda Y: _scalarized_cost(H, Sn, X0, w, Y))


def project_papr_cone(Y: np.ndarray, eta: float) -> np.ndarray:
    """Exact projection onto ``{X : max |x_n|^2 <= eta * ||X||^2 / NL}``.

    The best direction is the sphere-and-caps projection of ``Y``; the best
    length along it is the non-negative part of its inner product with ``Y``.
    """
    shape = Y.shape
    y = np.asarray(Y, dtype=np.complex128).ravel(order="F")
    if not np.any(y):
        return np.zeros(shape, dtype=np.complex128)
    u = project_sphere_caps(y, np.sqrt(eta / y.size))
    r = max(0.0, float(np.real(np.vdot(u, y))))
    return (r * u).reshape(shape, order="F")


def _scalarized_cost(H, Sn, X0, w, X) -> float:
    return float(np.sum(np.abs(H @ X - Sn) ** 2) + w * np.sum(np.abs(X - X0) ** 2))


def refine_on_papr_cone(H, Sn, X0, w: float, eta: float, X_init, iters: int = 3000,
                        tol: float = 1e-13) -> np.ndarray:
    """Monotone projected gradient on the PAPR cone from ``X_init``."""
    lip = 2.0 * (np.linalg.norm(H, 2) ** 2 + w)
    tau = 1.0 / lip
    X = project_papr_cone(X_init, eta)
    f = _scalarized_cost(H, Sn, X0, w, X)
    HH = H.conj().T
    for _ in range(iters):
        G = 2.0 * HH @ (H @ X - Sn) + 2.0 * w * (X - X0)
        Xn = project_papr_cone(X - tau * G, eta)
        fn = _scalarized_cost(H, Sn, X0, w, Xn)
        if fn > f - tol * max(1.0, f):
            if fn < f:
                X, f = Xn, fn
            break
        X, f = Xn, fn
    return X


def capped_at_similarity(scenario: Scenario, eta: float, similarity: float, w_lo: float = 1e-6,
                         w_hi: float = 1e6, steps: int = 30) -> ParetoPoint:
    """Capped tradeoff point whose similarity is as large as possible but not
    above ``similarity``, found by bisection on the weight (similarity
    falls as the weight grows)."""
    H, Sn, X0, g = _normalized_problem(scenario)

    def at(w):
        return _point(scenario, scalarized_capped(H, Sn, X0, w, eta), g, w)

    hi = at(w_hi)
    if hi.similarity > similarity:
        return hi
    lo = at(w_lo)
    if lo.similarity <= similarity:
        return lo
    a, b = np.log(w_lo), np.log(w_hi)
    best = hi
    for _ in range(steps):
        mid = 0.5 * (a + b)
        p = at(float(np.exp(mid)))
        if p.similarity <= similarity:
            best, b = p, mid
        else:
            a = mid
    return best


def pareto_sweep(scenario: Scenario, eta_values, weight_grid=None, include_unclipped: bool = True
                 ) -> list[ParetoFront]:
    """MUI versus similarity fronts by weighted-sum scalarization.

    For every ``eta`` this returns the unconstrained tradeoff passed through
    the clipper at PAPR ``eta`` (``M_clipped``) and the tradeoff designed
    with the PAPR cap (``M_eta``); ``include_unclipped`` adds the raw
    unconstrained front (``M``). Each front keeps only non-dominated points.
    """
    weights = default_weights() if weight_grid is None else np.asarray(weight_grid, dtype=np.float64)
    if np.any(weights <= 0):
        raise ValueError("scalarization weights must be positive")
    H, Sn, X0, g = _normalized_problem(scenario)
    raw = [scalarized_unconstrained(H, Sn, X0, w) for w in weights]
    fronts = []

    def _front(label, eta, pts):
        idx = non_dominated(np.array([[p.e_mui, p.similarity] for p in pts]))
        kept = sorted((pts[i] for i in idx), key=lambda p: p.similarity)
        return ParetoFront(label, eta, tuple(kept))

    if include_unclipped:
        fronts.append(_front("M", None, [_point(scenario, X, g, w) for X, w in zip(raw, weights)]))
    for eta in eta_values:
        eta = float(eta)
        if eta < 1:
            raise ValueError("eta must be >= 1")
        clipped = [_point(scenario, hpa_clip(X, eta), g, w) for X, w in zip(raw, weights)]
        capped = [_point(scenario, scalarized_capped(H, Sn, X0, w, eta), g, w) for w in weights]
        fronts.append(_front("M_clipped", eta, clipped))
        fronts.append(_front("M_eta", eta, capped))
    return fronts


def front_dominates(a: ParetoFront, b: ParetoFront, rtol: float = 1e-6) -> tuple[bool, list[float]]:
    """Whether front ``a`` weakly dominates ``b`` at every similarity level of ``b``.

    ``a``'s MUI at a given similarity is the best MUI among its points with
    no larger similarity. Returns the verdict and the per-point MUI margin
    (negative means ``a`` is better).
    """
    pa = sorted(a.points, key=lambda p: p.similarity)
    margins = []
    for q in b.points:
        cands = [p.e_mui for p in pa if p.similarity <= q.similarity * (1 + rtol) + 1e-15]
        best = min(cands) if cands else np.inf
        margins.append(best - q.e_mui)
    ok = all(m <= rtol * max(1.0, abs(q.e_mui)) for m, q in zip(margins, b.points))
    return ok, margins


def capped_dominates_clipped(scenario: Scenario, clipped: ParetoFront, rtol: float = 1e-4,
                             steps: int = 30) -> tuple[bool, list[float]]:
    """Compare the capped design against a clipped front level by level.

    For every clipped point the capped design is re-solved at exactly that
    similarity budget, so the comparison does not depend on how densely
    the weight grid samples either front. ``rtol`` absorbs the residual
    bisection error in the weight. Returns the verdict and the MUI margins
    (capped minus clipped; non-positive means recovered).
    """
    if clipped.eta is None:
        raise ValueError("clipped front carries no PAPR cap")
    margins = []
    for q in clipped.points:
        p = capped_at_similarity(scenario, clipped.eta, q.similarity, steps=steps)
        margins.append(p.e_mui - q.e_mui if p.similarity <= q.similarity * (1 + 1e-9) + 1e-15 else np.inf)
    ok = all(m <= rtol * abs(q.e_mui) + 1e-12 for m, q in zip(margins, clipped.points))
    return ok, margins


def frame_from_vec(x: np.ndarray, scenario: Scenario) -> WaveformFrame:
    return WaveformFrame.from_vec(x, scenario.N, scenario.L)
