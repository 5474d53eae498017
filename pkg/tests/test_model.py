import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacwk.model import (
    Constellation, RankDeficientError, Scenario, WaveformFrame, check_full_row_rank, generate_channel,
    generate_symbols, m_sequence, m_sequence_chirp, make_scenario, orthogonal_lfm_chirp, real_stack,
    real_unstack, reference_chirp, zf_precode, zf_unscaled,
)

from .conftest import crandn


class TestWaveformFrame:
    def test_views_share_norm(self, rng):
        X = crandn(rng, 3, 5)
        wf = WaveformFrame(X)
        f = np.linalg.norm(X)
        assert np.isclose(np.linalg.norm(wf.x), f, rtol=1e-12)
        assert np.isclose(np.linalg.norm(wf.xbar), f, rtol=1e-12)
        assert wf.xbar.size == 2 * 15

    def test_vec_is_column_major(self):
        X = np.arange(6).reshape(2, 3) + 0j
        wf = WaveformFrame(X)
        np.testing.assert_array_equal(wf.x, [0, 3, 1, 4, 2, 5])
        np.testing.assert_array_equal(WaveformFrame.from_vec(wf.x, 2, 3).entries, X)

    def test_real_stack_layout(self):
        x = np.array([1 + 2j, 3 - 4j])
        np.testing.assert_array_equal(real_stack(x), [1, 3, 2, -4])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_real_roundtrip(self, N, L, seed):
        X = crandn(np.random.default_rng(seed), N, L)
        wf = WaveformFrame(X)
        np.testing.assert_array_equal(WaveformFrame.from_real(wf.xbar, N, L).entries, X)
        np.testing.assert_array_equal(real_unstack(real_stack(wf.x)), wf.x)

    def test_immutable(self):
        wf = WaveformFrame(np.ones((2, 2)))
        with pytest.raises(ValueError):
            wf.entries[0, 0] = 5

    def test_rejects_vector(self):
        with pytest.raises(ValueError):
            WaveformFrame(np.ones(4))


class TestConstellation:
    @pytest.mark.parametrize("kind,size", [("qpsk", 4), ("16qam", 16), ("64qam", 64), ("256qam", 256)])
    def test_unit_energy_and_symmetry(self, kind, size):
        c = Constellation.of(kind)
        assert c.size == size
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) <= 1e-12
        for p in c.points:
            assert np.min(np.abs(c.points + p)) < 1e-12

    def test_nearest_recovers_points(self):
        c = Constellation.of("16qam")
        np.testing.assert_array_equal(c.nearest(c.points + 0.01), np.arange(16))

    def test_unknown(self):
        with pytest.raises(ValueError):
            Constellation.of("8psk")


class TestChannel:
    def test_deterministic(self):
        np.testing.assert_array_equal(generate_channel(2, 4, 7), generate_channel(2, 4, 7))

    def test_unit_variance(self):
        H = np.stack([generate_channel(2, 4, s) for s in range(10_000)])
        assert 0.97 <= np.mean(np.abs(H) ** 2) <= 1.03

    def test_scalar_rayleigh_exponential(self):
        p = np.array([abs(generate_channel(1, 1, s)[0, 0]) ** 2 for s in range(4000)])
        assert abs(p.mean() - 1.0) < 0.06
        # exponential: P(|h|^2 > 1) = e^-1
        assert abs(np.mean(p > 1.0) - np.exp(-1)) < 0.03

    def test_more_users_than_antennas(self):
        with pytest.raises(RankDeficientError):
            generate_channel(3, 2, 0)


class TestSymbols:
    def test_qpsk_unit_modulus(self):
        S = generate_symbols(Constellation.of("qpsk"), 3, 50, 1)
        np.testing.assert_allclose(np.abs(S), 1.0, atol=1e-12)

    def test_16qam_energy_over_seeds(self):
        c = Constellation.of("16qam")
        e = np.mean([np.mean(np.abs(generate_symbols(c, 2, 20, s)) ** 2) for s in range(1000)])
        assert abs(e - 1.0) < 0.02

    def test_single_point(self):
        S = generate_symbols(np.array([0.5 + 0.5j]), 2, 4, 0)
        assert np.all(S == 0.5 + 0.5j)


class TestLfm:
    def test_formula_and_norm(self):
        N, L = 4, 20
        X = orthogonal_lfm_chirp(N, L).entries
        assert abs(np.linalg.norm(X) - 1.0) <= 1e-12
        np.testing.assert_allclose(np.abs(X), 1 / np.sqrt(N * L), atol=1e-15)
        for m in range(1, N + 1):
            for ell in range(1, L + 1):
                ref = np.exp(2j * np.pi * m * (ell - 1) / L + 1j * np.pi * m * (ell - 1) ** 2 / L) / np.sqrt(N * L)
                assert abs(X[m - 1, ell - 1] - ref) < 1e-14

    def test_row_crosscorrelation_direct(self):
        X = orthogonal_lfm_chirp(2, 8).entries
        direct = sum(X[0, l] * np.conj(X[1, l]) for l in range(8))
        assert abs(np.vdot(X[1], X[0]) - direct) < 1e-15


class TestMSequence:
    def test_degree3_balance(self):
        s = m_sequence((3, 2))
        assert s.size == 7
        assert np.sum(s == -1) == 4 and np.sum(s == 1) == 3

    def test_degree3_autocorrelation_sidelobe(self):
        s = m_sequence((3, 2))
        for k in range(1, 7):
            assert abs(np.dot(s, np.roll(s, k)) / 7 - (-1 / 7)) < 1e-15

    def test_invalid_taps(self):
        # x^4 + x^2 + 1 = (x^2 + x + 1)^2 is not primitive
        with pytest.raises(ValueError):
            m_sequence((4, 2))
        with pytest.raises(ValueError):
            m_sequence((1,))

    @pytest.mark.parametrize("N,L", [(1, 1), (2, 7), (4, 20), (3, 64)])
    def test_chirp_unit_norm(self, N, L):
        X = m_sequence_chirp(N, L).entries
        assert abs(np.linalg.norm(X) - 1.0) < 1e-12
        np.testing.assert_allclose(np.abs(X), 1 / np.sqrt(N * L))

    def test_reference_dispatch(self):
        assert np.array_equal(reference_chirp("mseq", 2, 5).entries, m_sequence_chirp(2, 5).entries)
        with pytest.raises(ValueError):
            reference_chirp("barker", 2, 5)


class TestZeroForcing:
    def test_identity_channel(self, rng):
        S = crandn(rng, 3, 4)
        X, g = zf_precode(np.eye(3), S)
        np.testing.assert_allclose(X.entries * g, S, atol=1e-14)

    def test_exact_reception(self, rng):
        H = crandn(rng, 2, 4)
        S = crandn(rng, 2, 20)
        X = zf_unscaled(H, S)
        assert np.linalg.norm(H @ X - S) < 1e-9
        wf, g = zf_precode(H, S)
        assert abs(wf.norm() - 1.0) < 1e-12
        np.testing.assert_allclose(wf.entries * g, X, atol=1e-13)

    def test_matches_svd_pseudoinverse(self, rng):
        H = crandn(rng, 2, 5)
        S = crandn(rng, 2, 6)
        U, s, Vh = np.linalg.svd(H, full_matrices=False)
        pinv = Vh.conj().T @ np.diag(1 / s) @ U.conj().T
        np.testing.assert_allclose(zf_unscaled(H, S), pinv @ S, atol=1e-12)

    def test_rank_deficient(self):
        H = np.array([[1, 2, 3], [2, 4, 6]], dtype=complex)
        with pytest.raises(RankDeficientError):
            check_full_row_rank(H)
        with pytest.raises(RankDeficientError):
            zf_precode(H, np.ones((2, 3)))


class TestScenario:
    def test_pure_function_of_seed(self):
        a, b = make_scenario(4, 2, 20, seed=11), make_scenario(4, 2, 20, seed=11)
        np.testing.assert_array_equal(a.H, b.H)
        np.testing.assert_array_equal(a.S, b.S)
        assert not np.array_equal(a.H, make_scenario(4, 2, 20, seed=12).H)

    def test_validation(self):
        x0 = orthogonal_lfm_chirp(2, 3)
        with pytest.raises(ValueError):
            Scenario(np.ones((1, 2)), np.ones((1, 4)), x0)
        with pytest.raises(ValueError):
            Scenario(np.ones((1, 2)), np.ones((1, 3)), WaveformFrame(2 * x0.entries))
        with pytest.raises(ValueError):
            Scenario(np.array([[1, 0]]), np.ones((1, 3)), x0, noise_var=-1)
