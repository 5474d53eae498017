import numpy as np
import pytest

from isacwk import SolverConfig, make_scenario, papr, solve
from isacwk.metrics import hpa_clip
from isacwk.oracle import (
    OracleMethod, capped_at_similarity, front_dominates, grid_polar, multistart_descent, non_dominated,
    oracle_solve, pareto_sweep, project_papr_cone, scalarized_capped, scalarized_unconstrained,
)
from isacwk.projections import InfeasibleError

from .conftest import crandn


class TestSmallOracles:
    @pytest.mark.parametrize("seed", range(4))
    def test_grid_and_multistart_agree(self, seed):
        sc = make_scenario(1, 1, 2, seed=seed)
        g = oracle_solve(sc, 1.5, 0.8, method="GridPolar", resolution=64)
        m = oracle_solve(sc, 1.5, 0.8, method=OracleMethod.MULTISTART)
        assert g.method is OracleMethod.GRID_POLAR
        assert m.best_objective <= g.best_objective + 1e-12
        assert g.best_objective <= m.best_objective + g.resolution_slack

    def test_admm_within_slack_of_grid(self):
        sc = make_scenario(1, 1, 2, seed=1)
        g = oracle_solve(sc, 1.5, 0.8, method="GridPolar")
        d = solve(sc, SolverConfig(eta=1.5, epsilon=0.8, max_iter=2000))[1]
        assert d.final_objective <= g.best_objective + 1e-9

    def test_points_feasible(self):
        sc = make_scenario(1, 1, 2, seed=2)
        for method in OracleMethod:
            r = oracle_solve(sc, 1.2, 0.5, method=method)
            assert abs(np.linalg.norm(r.best_x) - 1) <= 1e-9
            assert np.max(np.abs(r.best_x)) ** 2 <= 1.2 / 2 * (1 + 1e-8)
            assert np.linalg.norm(r.best_x - sc.x0.x) <= 0.5 + 1e-9

    def test_trivial_target(self):
        x0 = np.array([1, 1j]) / np.sqrt(2)
        r = multistart_descent(x0, x0, 1.0, 0.1, starts=5)
        assert r.best_objective <= 1e-20

    def test_grid_limits(self):
        with pytest.raises(ValueError):
            grid_polar(np.ones(3), np.ones(3) / np.sqrt(3), 2, 1, resolution=64)
        with pytest.raises(ValueError):
            oracle_solve(make_scenario(3, 1, 3, seed=0), 2, 1, method="GridPolar")

    def test_infeasible_reference(self):
        x0 = np.array([1.0, 0.0])
        with pytest.raises(InfeasibleError):
            multistart_descent(np.array([0, 1.0]), x0, 1.0, 0.1)


class TestNonDominated:
    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force(self, seed):
        v = np.random.default_rng(seed).integers(0, 6, size=(40, 2)).astype(float)
        keep = set(non_dominated(v).tolist())
        for i in range(40):
            dominated = any(np.all(v[j] <= v[i]) and np.any(v[j] < v[i]) for j in range(40))
            assert (i in keep) == (not dominated)


class TestTradeoff:
    def test_weight_limits(self, base_scenario):
        sc = base_scenario
        _, g = sc.target()
        H, Sn, X0 = sc.H, sc.S / g, sc.x0.entries
        np.testing.assert_allclose(H @ scalarized_unconstrained(H, Sn, X0, 1e-10), Sn, atol=1e-7)
        np.testing.assert_allclose(scalarized_unconstrained(H, Sn, X0, 1e10), X0, atol=1e-8)

    def test_ridge_stationarity(self, base_scenario, rng):
        sc = base_scenario
        _, g = sc.target()
        H, Sn, X0 = sc.H, sc.S / g, sc.x0.entries
        X = scalarized_unconstrained(H, Sn, X0, 0.3)
        G = H.conj().T @ (H @ X - Sn) + 0.3 * (X - X0)
        assert np.linalg.norm(G) < 1e-10

    def test_cone_projection(self, rng):
        Y = crandn(rng, 3, 6)
        P = project_papr_cone(Y, 2.0)
        assert papr(P) <= 2.0 * (1 + 1e-9)
        # nearest among random cone points
        best = np.linalg.norm(P - Y)
        for _ in range(2000):
            Z = project_papr_cone(Y + 0.3 * crandn(rng, 3, 6), 2.0)
            assert np.linalg.norm(Z - Y) >= best - 1e-12
        np.testing.assert_array_equal(project_papr_cone(np.zeros((2, 2)), 2.0), 0)

    def test_capped_respects_cap(self, base_scenario):
        sc = base_scenario
        _, g = sc.target()
        X = scalarized_capped(sc.H, sc.S / g, sc.x0.entries, 0.1, 1.5)
        assert papr(X) <= 1.5 * (1 + 1e-9)

    def test_sweep_fronts(self, base_scenario):
        fr = pareto_sweep(base_scenario, [2.0], np.logspace(-3, 3, 8))
        assert [f.label for f in fr] == ["M", "M_clipped", "M_eta"]
        for f in fr:
            sims = [p.similarity for p in f.points]
            muis = [p.e_mui for p in f.points]
            assert sims == sorted(sims)
            assert all(b <= a + 1e-12 for a, b in zip(muis, muis[1:]))
        for f in fr[1:]:
            assert all(p.papr <= 2.0 * (1 + 1e-9) for p in f.points)
        # every unconstrained point minimizes its weighted cost over all waveforms,
        # clipped and capped ones included
        _, g = base_scenario.target()
        cost = lambda p, w: p.e_mui / g**2 + w * p.similarity
        for p in fr[0].points:
            assert all(cost(p, p.weight) <= cost(q, p.weight) + 1e-10 for f in fr[1:] for q in f.points)
        assert front_dominates(fr[0], fr[0])[0]
        with pytest.raises(ValueError):
            pareto_sweep(base_scenario, [0.5], [1.0])
        with pytest.raises(ValueError):
            pareto_sweep(base_scenario, [2.0], [0.0])

    def test_capped_at_similarity_budget(self, base_scenario):
        p = capped_at_similarity(base_scenario, 2.0, 0.5, steps=20)
        assert p.similarity <= 0.5 * (1 + 1e-9)
        assert p.papr <= 2.0 * (1 + 1e-9)

    def test_clip_of_unconstrained_is_on_cone(self, base_scenario):
        sc = base_scenario
        _, g = sc.target()
        X = hpa_clip(scalarized_unconstrained(sc.H, sc.S / g, sc.x0.entries, 0.01), 1.5)
        np.testing.assert_allclose(project_papr_cone(X, 1.5), X, atol=1e-10)
