"""Problem-instance construction: channels, symbols, reference chirps and the
zero-forcing target.

Complex frames are ``N x L`` (antennas x samples). The vectorized view stacks
columns (Fortran order), so sample ``l`` of antenna ``m`` sits at index
``l * N + m``. The real-stacked view is ``[Re(x), Im(x)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import max_len_seq


class RankDeficientError(ValueError):
    """Raised when a channel does not have full row rank."""


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(x: np.ndarray, N: int, L: int) -> np.ndarray:
    return np.asarray(x).reshape((N, L), order="F")


def real_stack(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return np.concatenate([x.real, x.imag]).astype(np.float64)


def real_unstack(xbar: np.ndarray) -> np.ndarray:
    xbar = np.asarray(xbar, dtype=np.float64)
    n = xbar.size // 2
    return xbar[:n] + 1j * xbar[n:]


@dataclass(frozen=True)
class WaveformFrame:
    """Complex ``N x L`` transmit matrix with vectorized and real-stacked views."""

    entries: np.ndarray

    def __post_init__(self):
        X = np.array(self.entries, dtype=np.complex128)
        if X.ndim != 2:
            raise ValueError(f"waveform must be 2-D, got shape {X.shape}")
        X.setflags(write=False)
        object.__setattr__(self, "entries", X)

    @classmethod
    def from_vec(cls, x: np.ndarray, N: int, L: int) -> "WaveformFrame":
        return cls(unvec(np.asarray(x, dtype=np.complex128), N, L))

    @classmethod
    def from_real(cls, xbar: np.ndarray, N: int, L: int) -> "WaveformFrame":
        return cls.from_vec(real_unstack(xbar), N, L)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def L(self) -> int:
        return self.entries.shape[1]

    @property
    def x(self) -> np.ndarray:
        return vec(self.entries)

    @property
    def xbar(self) -> np.ndarray:
        return real_stack(self.x)

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def scaled(self, c: complex) -> "WaveformFrame":
        return WaveformFrame(self.entries * c)


class ConstellationKind(str, Enum):
    QPSK = "qpsk"
    QAM16 = "16qam"
    QAM64 = "64qam"
    QAM256 = "256qam"


@dataclass(frozen=True)
class Constellation:
    """Square QAM alphabet normalized to unit average energy."""

    kind: ConstellationKind
    points: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, kind: str | ConstellationKind) -> "Constellation":
        kind = ConstellationKind(str(kind.value if isinstance(kind, ConstellationKind) else kind).lower())
        order = {"qpsk": 4, "16qam": 16, "64qam": 64, "256qam": 256}[kind.value]
        m = int(round(np.sqrt(order)))
        levels = np.arange(-(m - 1), m, 2, dtype=np.float64)
        pts = (levels[:, None] + 1j * levels[None, :]).ravel()
        pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
        pts.setflags(write=False)
        return cls(kind, pts)

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.size))

    def nearest(self, y: np.ndarray) -> np.ndarray:
        """Index of the minimum-distance point for every entry of ``y``."""
        y = np.asarray(y)
        d = np.abs(y[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)


class ChirpKind(str, Enum):
    LFM = "lfm"
    MSEQ = "mseq"


def generate_channel(K: int, N: int, seed) -> np.ndarray:
    """Flat Rayleigh channel: i.i.d. CN(0, 1) entries, ``K x N``."""
    if K < 1 or N < 1:
        raise ValueError("K and N must be positive")
    if K > N:
        raise RankDeficientError(f"K={K} users exceed N={N} antennas; zero-forcing is undefined")
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / np.sqrt(2.0)


def generate_symbols(constellation: Constellation | np.ndarray, K: int, L: int, seed) -> np.ndarray:
    pts = constellation.points if isinstance(constellation, Constellation) else np.asarray(constellation)
    rng = np.random.default_rng(seed)
    return pts[rng.integers(0, pts.size, size=(K, L))]


def orthogonal_lfm_chirp(N: int, L: int) -> WaveformFrame:
    """Orthogonal LFM reference, antenna index running 1..N."""
    if N < 1 or L < 1:
        raise ValueError("N and L must be positive")
    m = np.arange(1, N + 1)[:, None]
    ell = np.arange(1, L + 1)[None, :]
    X0 = np.exp(2j * np.pi * m * (ell - 1) / L) * np.exp(1j * np.pi * m * (ell - 1) ** 2 / L)
    return WaveformFrame(X0 / np.sqrt(N * L))


# Primitive feedback polynomials, given as scipy-style tap lists (degree excluded).
DEFAULT_MSEQ_TAPS = {
    2: (1,), 3: (2,), 4: (3,), 5: (3,), 6: (5,), 7: (6,), 8: (7, 6, 1),
    9: (5,), 10: (7,), 11: (9,),
}


def _prime_factors(n: int) -> list[int]:
    out, p = [], 2
    while p * p <= n:
        while n % p == 0:
            out.append(p)
            n //= p
        p += 1
    if n > 1:
        out.append(n)
    return sorted(set(out))


def m_sequence(register_taps: tuple[int, ...]) -> np.ndarray:
    """One period of a maximal-length +/-1 sequence.

    ``register_taps`` lists the exponents of the feedback polynomial,
    degree first, e.g. ``(3, 2)`` for ``x^3 + x^2 + 1``.
    """
    taps = sorted({int(t) for t in register_taps}, reverse=True)
    if not taps or taps[0] < 2 or any(t < 1 for t in taps):
        raise ValueError(f"invalid tap polynomial {register_taps!r}")
    nbits, inner = taps[0], taps[1:]
    period = 2**nbits - 1
    state = np.ones(nbits, dtype=np.int8)
    # a primitive polynomial returns to the seed state only after the full period
    for p in _prime_factors(period):
        _, st = max_len_seq(nbits, state=state, length=period // p, taps=inner)
        if np.array_equal(st, state):
            raise ValueError(f"taps {register_taps!r} do not generate a maximal-length sequence")
    seq, st = max_len_seq(nbits, state=state, length=period, taps=inner)
    if not np.array_equal(st, state):
        raise ValueError(f"taps {register_taps!r} do not generate a maximal-length sequence")
    return 1.0 - 2.0 * seq.astype(np.float64)


def m_sequence_chirp(N: int, L: int, register_taps: tuple[int, ...] | None = None) -> WaveformFrame:
    """BPSK m-sequence reference; each antenna row is a cyclic shift of the
    sequence, tiled or truncated to ``L`` samples."""
    if N < 1 or L < 1:
        raise ValueError("N and L must be positive")
    if register_taps is None:
        nbits = max(3, int(np.ceil(np.log2(L + 1))))
        nbits = min(nbits, max(DEFAULT_MSEQ_TAPS))
        register_taps = (nbits, *DEFAULT_MSEQ_TAPS[nbits])
    seq = m_sequence(register_taps)
    P = seq.size
    shift = max(1, P // N)
    idx = (np.arange(L)[None, :] + shift * np.arange(N)[:, None]) % P
    X = seq[idx].astype(np.complex128)
    return WaveformFrame(X / np.sqrt(N * L))


def reference_chirp(kind: str | ChirpKind, N: int, L: int, register_taps=None) -> WaveformFrame:
    kind = ChirpKind(kind)
    if kind is ChirpKind.LFM:
        return orthogonal_lfm_chirp(N, L)
    return m_sequence_chirp(N, L, register_taps)


def check_full_row_rank(H: np.ndarray, rtol: float = 1e-10) -> None:
    H = np.asarray(H)
    K, N = H.shape
    if K > N:
        raise RankDeficientError(f"channel {K}x{N} has more users than antennas")
    sv = np.linalg.svd(H, compute_uv=False)
    if sv.size == 0 or sv[-1] <= rtol * sv[0]:
        raise RankDeficientError("channel does not have full row rank")


def zf_unscaled(H: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``H^H (H H^H)^{-1} S``, the interference-free precoded frame."""
    H = np.asarray(H, dtype=np.complex128)
    check_full_row_rank(H)
    return H.conj().T @ np.linalg.solve(H @ H.conj().T, np.asarray(S, dtype=np.complex128))


def zf_precode(H: np.ndarray, S: np.ndarray) -> tuple[WaveformFrame, float]:
    """Zero-forcing target rescaled to unit norm.

    Returns the unit-norm frame and the scale ``g = ||H^+ S||_F`` so that
    ``g * X`` is the exact zero-forcing solution.
    """
    X = zf_unscaled(H, S)
    g = float(np.linalg.norm(X))
    if g == 0.0:
        raise ValueError("symbol frame is all zeros")
    return WaveformFrame(X / g), g


@dataclass(frozen=True)
class Scenario:
    """One problem instance: channel, symbols, reference chirp, noise level."""

    H: np.ndarray
    S: np.ndarray
    x0: WaveformFrame
    noise_var: float = 0.0
    rng_seed: int | None = None

    def __post_init__(self):
        H = np.array(self.H, dtype=np.complex128)
        S = np.array(self.S, dtype=np.complex128)
        if H.ndim != 2 or S.ndim != 2 or S.shape[0] != H.shape[0]:
            raise ValueError(f"shape mismatch: H {H.shape}, S {S.shape}")
        if self.x0.entries.shape != (H.shape[1], S.shape[1]):
            raise ValueError(f"reference shape {self.x0.entries.shape} != {(H.shape[1], S.shape[1])}")
        check_full_row_rank(H)
        if abs(self.x0.norm() - 1.0) > 1e-9:
            raise ValueError(f"reference chirp must have unit norm, got {self.x0.norm():.12g}")
        if self.noise_var < 0:
            raise ValueError("noise variance must be non-negative")
        H.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "S", S)

    @property
    def K(self) -> int:
        return self.H.shape[0]

    @property
    def N(self) -> int:
        return self.H.shape[1]

    @property
    def L(self) -> int:
        return self.S.shape[1]

    def target(self) -> tuple[WaveformFrame, float]:
        return zf_precode(self.H, self.S)


def make_scenario(N: int, K: int, L: int, constellation="qpsk", chirp="lfm",
                  seed: int = 0, noise_var: float = 0.0, register_taps=None) -> Scenario:
    """Draw a random scenario; channel and symbols use independent child streams."""
    ss = np.random.SeedSequence(seed)
    ch_seed, sym_seed = ss.spawn(2)
    H = generate_channel(K, N, ch_seed)
    S = generate_symbols(Constellation.of(constellation), K, L, sym_seed)
    return Scenario(H, S, reference_chirp(chirp, N, L, register_taps), noise_var, seed)
