"""Waveform metrics: PAPR, multi-user interference, rates, CCDF, ambiguity,
pulse compression, symbol error rate and HPA clipping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal.windows import taylor

from .model import Constellation, Scenario, WaveformFrame


def _as_vector(x) -> np.ndarray:
    if isinstance(x, WaveformFrame):
        return x.x
    return np.asarray(x, dtype=np.complex128).ravel(order="F")


def papr(x) -> float:
    """Peak power over mean power across all ``NL`` samples."""
    p = np.abs(_as_vector(x)) ** 2
    mean = p.mean() if p.size else 0.0
    if mean == 0.0:
        raise ValueError("PAPR of an all-zero waveform is undefined")
    return float(p.max() / mean)


def papr_db(x) -> float:
    return 10.0 * np.log10(papr(x))


def mui_energy(H, X, S) -> float:
    """Squared Frobenius norm of ``H X - S``."""
    H, X, S = (np.asarray(a) for a in (H, X, S))
    if H.ndim != 2 or X.ndim != 2 or S.ndim != 2 or H.shape[1] != X.shape[0] or (H.shape[0], X.shape[1]) != S.shape:
        raise ValueError(f"shape mismatch: H {H.shape}, X {X.shape}, S {S.shape}")
    return float(np.sum(np.abs(H @ X - S) ** 2))


def sinr_and_rate(H, X, S, noise_var: float) -> tuple[np.ndarray, float]:
    """Per-user SINR (empirical means over samples) and the per-user average
    of ``log2(1 + SINR_k)``."""
    if noise_var < 0:
        raise ValueError("noise variance must be non-negative")
    H, X, S = (np.asarray(a) for a in (H, X, S))
    mui = H @ X - S
    signal = np.mean(np.abs(S) ** 2, axis=1)
    interference = np.mean(np.abs(mui) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        sinr = signal / (interference + noise_var)
    rate = float(np.mean(np.log2(1.0 + sinr)))
    return sinr, rate


def ccdf(samples, thresholds) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``Pr(sample > threshold)`` on the sorted thresholds."""
    s = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if s.size == 0:
        raise ValueError("CCDF needs at least one sample")
    t = np.sort(np.asarray(thresholds, dtype=np.float64).ravel())
    exceed = s.size - np.searchsorted(s, t, side="right")
    return t, exceed / s.size


@dataclass(frozen=True)
class AmbiguitySurface:
    delays: np.ndarray
    dopplers: np.ndarray
    magnitude: np.ndarray  # shape (len(delays), len(dopplers)), peak-normalized

    def correlation(self, other: "AmbiguitySurface") -> float:
        """Normalized inner product of two magnitude grids."""
        a, b = self.magnitude.ravel(), other.magnitude.ravel()
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def ambiguity(x, max_lag: int | None = None, doppler_grid=None, reference=None) -> AmbiguitySurface:
    """Discrete narrowband ambiguity ``|sum_n x[n] conj(r[n+tau]) e^{-j2 pi nu n / M}|``.

    ``x`` is a complex vector of ``M`` samples (pass ``WaveformFrame.x`` for the
    vectorized frame or one row for the per-antenna view). ``reference``
    ``r`` defaults to ``x`` (auto-ambiguity); passing another waveform gives
    the cross-ambiguity seen by a receiver matched to ``r``. Delays run over
    ``-max_lag..max_lag``; Doppler ``nu`` is in cycles per ``M`` samples.
    The surface is normalized by ``||x|| ||r||``.
    """
    x = _as_vector(x)
    r = x if reference is None else _as_vector(reference)
    M = x.size
    if r.size != M:
        raise ValueError(f"reference length {r.size} != waveform length {M}")
    if max_lag is None:
        max_lag = M - 1
    if not 0 <= max_lag:
        raise ValueError("max_lag must be non-negative")
    if doppler_grid is None:
        doppler_grid = np.arange(-(M // 2), M // 2 + 1, dtype=np.float64)
    nu = np.asarray(doppler_grid, dtype=np.float64)
    delays = np.arange(-max_lag, max_lag + 1)
    n = np.arange(M)
    phase = np.exp(-2j * np.pi * np.outer(n, nu) / M)  # (M, len(nu))
    out = np.zeros((delays.size, nu.size))
    for i, tau in enumerate(delays):
        prod = np.zeros(M, dtype=np.complex128)
        if abs(tau) < M:
            if tau >= 0:
                prod[: M - tau] = x[: M - tau] * np.conj(r[tau:])
            else:
                prod[-tau:] = x[-tau:] * np.conj(r[: M + tau])
        out[i] = np.abs(prod @ phase)
    peak = np.linalg.norm(x) * np.linalg.norm(r)
    if peak == 0.0:
        raise ValueError("ambiguity of an all-zero waveform is undefined")
    return AmbiguitySurface(delays, nu, out / peak)


def frame_ambiguity(frame: WaveformFrame, max_lag=None, doppler_grid=None, row: int | None = None,
                    reference: WaveformFrame | None = None) -> AmbiguitySurface:
    x = frame.x if row is None else frame.entries[row]
    r = None if reference is None else (reference.x if row is None else reference.entries[row])
    return ambiguity(x, max_lag, doppler_grid, r)


def taylor_taper(M: int, nbar: int = 4, sll: float = 35.0) -> np.ndarray:
    """Taylor taper laid out in FFT bin order (DC at index 0)."""
    return np.fft.ifftshift(taylor(M, nbar=nbar, sll=sll, norm=True, sym=False))


def pulse_compression(x_tx_row, reference_row, window="taylor", nbar: int = 4, sll: float = 35.0) -> np.ndarray:
    """FFT/IFFT matched filtering of one transmit row against a reference row.

    Returns the circular compression gain over lags ``0..M-1`` in dB,
    normalized to its peak. ``window`` is ``"taylor"``, ``"rect"`` or an
    explicit length-``M`` frequency-domain taper.
    """
    tx = np.asarray(x_tx_row, dtype=np.complex128).ravel()
    ref = np.asarray(reference_row, dtype=np.complex128).ravel()
    if tx.size != ref.size:
        raise ValueError(f"row lengths differ: {tx.size} vs {ref.size}")
    M = tx.size
    if isinstance(window, str):
        if window == "taylor":
            W = taylor_taper(M, nbar, sll)
        elif window in ("rect", "rectangular", "none"):
            W = np.ones(M)
        else:
            raise ValueError(f"unknown window {window!r}")
    else:
        W = np.asarray(window, dtype=np.float64)
        if W.shape != (M,):
            raise ValueError("window length must match the row length")
    if not np.any(tx) or not np.any(ref):
        raise ValueError("pulse compression of an all-zero row is undefined")
    y = np.abs(np.fft.ifft(np.fft.fft(tx) * np.conj(np.fft.fft(ref)) * W))
    peak = y.max()
    if peak == 0.0:
        raise ValueError("compression output is identically zero")
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(y / peak)


def ser(H, X_frames, S_frames, constellation: Constellation, noise_var: float, noise_seed) -> float:
    """Empirical symbol error rate of minimum-distance detection on
    ``Y = H X + Z`` over all users, samples and frames.

    ``H`` is either one channel shared by all frames or a sequence of
    per-frame channels.
    """
    if noise_var < 0:
        raise ValueError("noise variance must be non-negative")
    X_frames = list(X_frames)
    S_frames = list(S_frames)
    if len(X_frames) != len(S_frames):
        raise ValueError("frames are not aligned")
    Hs = [H] * len(X_frames) if np.ndim(H) == 2 else list(H)
    rng = np.random.default_rng(noise_seed)
    errors = total = 0
    sd = np.sqrt(noise_var / 2.0)
    for Hf, X, S in zip(Hs, X_frames, S_frames):
        Y = np.asarray(Hf) @ np.asarray(X)
        Z = sd * (rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape))
        detected = constellation.points[constellation.nearest(Y + Z)]
        sent = constellation.points[constellation.nearest(S)]
        errors += int(np.count_nonzero(detected != sent))
        total += S.size
    return errors / total if total else 0.0


def hpa_clip(x, papr_cap: float) -> np.ndarray:
    """Hard envelope clipper whose level is set against the *output* mean power.

    Samples above amplitude ``A`` are clipped to ``A`` with phase kept, where
    ``A^2 = papr_cap * mean(|y|^2)`` for the clipped output ``y``, so the
    output PAPR never exceeds the cap.
    """
    if papr_cap < 1.0:
        raise ValueError("PAPR cap must be >= 1")
    shape = np.shape(x)
    v = np.asarray(x, dtype=np.complex128).ravel()
    a = np.abs(v)
    n = v.size
    if n == 0 or not np.any(a):
        return v.reshape(shape).copy()
    p = a**2
    if p.max() <= papr_cap * p.mean() * (1 + 1e-12):
        return v.reshape(shape).copy()
    srt = np.sort(a)[::-1]
    tail = np.cumsum((srt**2)[::-1])[::-1]  # tail[k] = sum of squares from rank k on
    level = None
    for k in range(1, n):
        denom = n - papr_cap * k
        if denom <= 0:
            break
        A = np.sqrt(papr_cap * tail[k] / denom)
        # relative slack: samples already at the level tie with A up to rounding
        if srt[k] <= A * (1 + 1e-12) and A <= srt[k - 1] * (1 + 1e-12):
            level = A
            break
    if level is None:
        raise RuntimeError("no consistent clip level found")
    scale = np.where(a > level, level / np.where(a > 0, a, 1.0), 1.0)
    return (v * scale).reshape(shape)


@dataclass(frozen=True)
class MetricReport:
    papr_linear: float
    papr_db: float
    mui_energy: float
    similarity_dist: float
    per_user_sinr: np.ndarray
    sum_rate: float
    norm: float

    def as_dict(self) -> dict:
        return {
            "papr_linear": self.papr_linear,
            "papr_db": self.papr_db,
            "mui_energy": self.mui_energy,
            "similarity_dist": self.similarity_dist,
            "per_user_sinr": [float(s) for s in self.per_user_sinr],
            "sum_rate": self.sum_rate,
            "norm": self.norm,
        }


def evaluate(scenario: Scenario, waveform: WaveformFrame, zf_scale: float | None = None,
             noise_var: float | None = None, H=None) -> MetricReport:
    """Metrics of a unit-power waveform.

    Interference and rates are measured in the symbol domain: the waveform is
    multiplied by the zero-forcing scale (``||H^+ S||_F`` by default), which is
    the gain that makes the zero-forcing target reproduce ``S`` exactly.
    ``H`` overrides the channel seen by the users (e.g. a mismatched one).
    """
    if zf_scale is None:
        _, zf_scale = scenario.target()
    if noise_var is None:
        noise_var = scenario.noise_var
    Heff = scenario.H if H is None else np.asarray(H)
    Xs = waveform.entries * zf_scale
    pl = papr(waveform)
    sinr, rate = sinr_and_rate(Heff, Xs, scenario.S, noise_var)
    return MetricReport(
        papr_linear=pl,
        papr_db=10.0 * np.log10(pl),
        mui_energy=mui_energy(Heff, Xs, scenario.S),
        similarity_dist=float(np.linalg.norm(waveform.x - scenario.x0.x)),
        per_user_sinr=sinr,
        sum_rate=rate,
        norm=waveform.norm(),
    )
