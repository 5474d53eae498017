import numpy as np
import pytest
from scipy.stats import binomtest

from isacwk import SolverConfig, make_scenario, solve
from isacwk.admm import scatter_pairs, update_x
from isacwk.model import Constellation
from isacwk.oracle import oracle_solve
from isacwk.robust import RobustConfig, draw_channel_error, robust_objective, robust_solve, robust_target, robust_update_x

from .conftest import crandn
from .test_admm import fd_gradient, random_state


def robust_lagrangian(x, st, xc, x0, rho, s):
    """Augmented Lagrangian with the robust surrogate as the cost."""
    val = (np.linalg.norm(x - xc) + s * np.linalg.norm(x)) ** 2
    val += st.u @ (x - st.alpha) + rho / 2 * np.sum((x - st.alpha) ** 2)
    val += st.v @ (x - x0 - st.beta) + rho / 2 * np.sum((x - x0 - st.beta) ** 2)
    gam = scatter_pairs(st.gamma)
    val += scatter_pairs(st.w) @ (x - gam) + rho / 2 * np.sum((x - gam) ** 2)
    return val


class TestConfig:
    def test_validation(self):
        b = SolverConfig(eta=2, epsilon=1)
        with pytest.raises(ValueError):
            RobustConfig(b, sigma_delta=-1)
        with pytest.raises(ValueError):
            RobustConfig(b, inner_iters=0)
        with pytest.raises(ValueError):
            RobustConfig(b, inner_tol=0)

    def test_db(self):
        r = RobustConfig.with_sigma_db(SolverConfig(eta=2, epsilon=1), -10.0)
        assert r.sigma_delta == pytest.approx(0.1)


class TestTarget:
    def test_normalization(self, rng):
        H, S = crandn(rng, 2, 4), crandn(rng, 2, 5)
        t, g, s = robust_target(H, S, 0.3)
        assert s == pytest.approx(0.3 / np.linalg.norm(H))
        assert robust_target(H, S, 0.0)[2] == 0.0
        assert robust_target(2 * H, S, 0.3)[2] == pytest.approx(s / 2)
        np.testing.assert_allclose(H @ (g * t.entries), S, atol=1e-12)
        np.testing.assert_allclose(g * t.entries, np.linalg.pinv(H) @ S, atol=1e-12)


class TestRobustX:
    def test_sigma_zero_is_nominal(self, rng):
        st = random_state(rng, 5)
        cfg = RobustConfig(SolverConfig(eta=2, epsilon=1, rho=0.4))
        xc, x0 = rng.standard_normal(10), rng.standard_normal(10)
        x, used, _ = robust_update_x(st, cfg, xc, x0, 0.0)
        assert used == 1
        np.testing.assert_allclose(x, update_x(st, cfg.base, xc, x0), atol=1e-15)

    def test_first_iterate_is_nominal_shrunk(self, rng):
        st = random_state(rng, 5)
        cfg = RobustConfig(SolverConfig(eta=2, epsilon=1, rho=0.4), inner_iters=1)
        xc, x0 = rng.standard_normal(10), rng.standard_normal(10)
        x, used, _ = robust_update_x(st, cfg, xc, x0, 0.2)
        # from zero only the ||x - xc|| correction survives, and it vanishes at x = 0 via b = 0
        nominal_num = update_x(st, cfg.base, xc, x0) * (2 + 3 * 0.4)
        np.testing.assert_allclose(x, nominal_num / (2 + 3 * 0.4 + 2 * 0.04), atol=1e-14)

    @pytest.mark.parametrize("s", [0.05, 0.1, 0.3])
    @pytest.mark.parametrize("rho", [0.1, 1.0])
    def test_stationary_point(self, rng, s, rho):
        NL = 5
        st = random_state(rng, NL)
        xc, x0 = rng.standard_normal(2 * NL), rng.standard_normal(2 * NL)
        cfg = RobustConfig(SolverConfig(eta=2, epsilon=1, rho=rho), inner_iters=5000, inner_tol=1e-14)
        x, used, step = robust_update_x(st, cfg, xc, x0, s)
        g = fd_gradient(lambda z: robust_lagrangian(z, st, xc, x0, rho, s), x)
        assert np.linalg.norm(g) <= 1e-5

    def test_objective_formula(self, rng):
        x, t = crandn(rng, 6), crandn(rng, 6)
        assert robust_objective(x, t, 0.0) == pytest.approx(np.linalg.norm(x - t) ** 2)
        assert robust_objective(x, t, 0.5) == pytest.approx((np.linalg.norm(x - t) + 0.5 * np.linalg.norm(x)) ** 2)


class TestRobustSolve:
    @pytest.mark.parametrize("seed", range(20))
    def test_reduces_to_nominal(self, seed):
        rng = np.random.default_rng(seed)
        sc = make_scenario(4, 2, 8, seed=seed)
        cfg = SolverConfig(eta=float(rng.uniform(1.5, 6)), epsilon=float(rng.uniform(0.3, 1.8)), max_iter=200)
        w1, d1, _ = solve(sc, cfg)
        w2, d2, _ = robust_solve(sc, RobustConfig(cfg, 0.0))
        assert d2.final_objective == pytest.approx(d1.final_objective, rel=1e-8, abs=1e-14)
        np.testing.assert_allclose(w2.entries, w1.entries, atol=1e-6)

    def test_backends_agree(self, base_scenario):
        cfg = RobustConfig(SolverConfig.with_eta_db(6.0, 1.2, max_iter=200), sigma_delta=0.3)
        wa, da, _ = robust_solve(base_scenario, cfg, backend="numba")
        wb, db, _ = robust_solve(base_scenario, cfg, backend="numpy")
        np.testing.assert_allclose(wa.entries, wb.entries, atol=1e-8)

    def test_tiny_instance_near_oracle(self):
        # on the unit sphere the surrogate is (||x - xc|| + s)^2, so the
        # nominal optimum is also the robust one
        sc = make_scenario(2, 1, 2, seed=0)
        sigma = 0.2
        s = sigma / np.linalg.norm(sc.H)
        o = oracle_solve(sc, 2.0, 0.5)
        wf, d, _ = robust_solve(sc, RobustConfig(SolverConfig(eta=2.0, epsilon=0.5, max_iter=2000), sigma))
        target, _ = sc.target()
        best = (np.sqrt(o.best_objective) + s) ** 2
        assert robust_objective(wf, target, s) <= best * 1.01

    def test_output_feasible(self, base_scenario):
        cfg = SolverConfig.with_eta_db(3.0, 0.6)
        wf, d, m = robust_solve(base_scenario, RobustConfig(cfg, 0.5))
        assert abs(wf.norm() - 1) <= 1e-6
        assert m.papr_linear <= cfg.eta * (1 + 1e-6)
        assert m.similarity_dist <= cfg.epsilon + 1e-6
        assert d.inner_iters_used is not None and d.inner_iters_used.size == d.iterations

    def test_ser_not_worse_than_nominal(self):
        """Paired errors over fresh frames; robust must not be significantly
        worse than nominal by a one-sided sign test."""
        C = Constellation.of("qpsk")
        sigma, snr = 0.3, 10.0
        cfg = SolverConfig.with_eta_db(9.0, 1.85, max_iter=400)
        worse = better = 0
        for t in range(30):
            sc = make_scenario(4, 2, 20, seed=100 + t)
            _, g = sc.target()
            sent = C.nearest(sc.S)
            nom = solve(sc, cfg)[0]
            rob = robust_solve(sc, RobustConfig(cfg, sigma))[0]
            rng = np.random.default_rng(t)
            H = sc.H + draw_channel_error(2, 4, sigma, rng)
            Z = np.sqrt(0.5 / 10 ** (snr / 10)) * crandn(rng, 2, 20)
            en = C.nearest(H @ (g * nom.entries) + Z) != sent
            er = C.nearest(H @ (g * rob.entries) + Z) != sent
            worse += int((er & ~en).sum())
            better += int((en & ~er).sum())
        if worse + better:
            assert binomtest(worse, worse + better, 0.5, alternative="greater").pvalue > 0.01


def test_channel_error_norm():
    D = draw_channel_error(3, 5, 0.7, 1)
    assert D.shape == (3, 5)
    assert np.linalg.norm(D) == pytest.approx(0.7, abs=1e-14)
    np.testing.assert_array_equal(D, draw_channel_error(3, 5, 0.7, 1))
    assert not np.any(draw_channel_error(2, 2, 0.0, 0))
