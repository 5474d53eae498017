"""Declarative Monte Carlo studies.

An :class:`ExperimentSpec` names one study kind, the scenario, solver
settings, sweep axes, trial count and base seed. :func:`run` executes it
(optionally across worker processes) and returns a :class:`ResultTable`;
:func:`emit` writes CSV or JSON plus optional long-format plot data.

Spec files are YAML or JSON mappings; ``spec_version`` must be 1. Axis keys
ending in ``_db`` are converted to linear values on load.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io as _io
import json
import logging
import math
import operator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml
from scipy.stats import binomtest

from . import __version__
from .admm import DivergenceError, SolverConfig, db_to_linear, solve
from .metrics import ccdf, evaluate, frame_ambiguity, pulse_compression
from .model import Constellation, make_scenario
from .oracle import PARETO_COLUMNS, pareto_sweep
from .projections import InfeasibleError
from .robust import RobustConfig, draw_channel_error, robust_solve

log = logging.getLogger(__name__)

SPEC_VERSION = 1


class ExperimentKind(str, enum.Enum):
    CONSTELLATION_VS_EPSILON = "ConstellationVsEpsilon"
    COST_CONVERGENCE = "CostConvergence"
    PAPR_CCDF = "PaprCcdf"
    PAPR_VS_ITER = "PaprVsIter"
    SUM_RATE_TRADEOFF = "SumRateTradeoff"
    PULSE_COMPRESSION = "PulseCompression"
    SER_VS_SNR = "SerVsSnr"
    AMBIGUITY = "Ambiguity"
    PARETO_SWEEP = "ParetoSweep"


# sweep axes each study iterates over
_AXES = {
    ExperimentKind.CONSTELLATION_VS_EPSILON: ("constellations", "epsilons", "etas"),
    ExperimentKind.COST_CONVERGENCE: ("etas", "epsilons"),
    ExperimentKind.PAPR_CCDF: ("etas", "rhos", "constellations"),
    ExperimentKind.PAPR_VS_ITER: ("constellations", "etas"),
    ExperimentKind.SUM_RATE_TRADEOFF: ("etas", "epsilons", "snr_db"),
    ExperimentKind.PULSE_COMPRESSION: ("epsilons",),
    ExperimentKind.SER_VS_SNR: ("sigma_deltas", "snr_db"),
    ExperimentKind.AMBIGUITY: ("epsilons",),
    ExperimentKind.PARETO_SWEEP: ("etas",),
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    N: int = 4
    K: int = 2
    L: int = 20
    constellation: str = "qpsk"
    chirp: str = "lfm"
    rho: float = 0.1
    max_iter: int = 1000
    primal_tol: float = 1e-12
    stall_window: int = 20
    inner_iters: int = 50
    inner_tol: float = 1e-10
    epsilons: tuple = (1.85,)
    etas: tuple = (db_to_linear(9.0),)
    rhos: tuple = (0.1,)
    snr_db: tuple = (10.0,)
    sigma_deltas: tuple = (0.0,)
    constellations: tuple = ("qpsk",)
    ccdf_thresholds_db: tuple = tuple(np.round(np.arange(0.0, 10.01, 0.05), 2).tolist())
    trials: int = 100
    seed: int = 0
    linear_average: bool = True
    checks: tuple = ()
    name: str = ""
    spec_version: int = SPEC_VERSION

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        if self.spec_version != SPEC_VERSION:
            raise ValueError(f"unsupported spec_version {self.spec_version}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for axis in _AXES[self.kind]:
            if len(getattr(self, axis)) == 0:
                raise ValueError(f"sweep axis {axis!r} is empty")
        if any(e < 1 for e in self.etas):
            raise ValueError("every eta must be >= 1")
        if any(e < 0 for e in self.epsilons) or any(s < 0 for s in self.sigma_deltas):
            raise ValueError("epsilon and sigma_delta values must be non-negative")
        if any(r <= 0 for r in self.rhos) or self.rho <= 0:
            raise ValueError("rho must be positive")
        for c in (self.constellation, *self.constellations):
            Constellation.of(c)

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        if "spec_version" not in data:
            raise ValueError("spec is missing spec_version")
        for key in ("etas", "sigma_deltas"):
            if f"{key}_db" in data:
                if key in data:
                    raise ValueError(f"give either {key} or {key}_db, not both")
                data[key] = [db_to_linear(v) for v in data.pop(f"{key}_db")]
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown spec keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise OSError(f"cannot read {path}: {exc}") from exc
        data = yaml.safe_load(text)  # JSON is a YAML subset
        if not isinstance(data, dict):
            raise ValueError(f"{path}: spec must be a mapping")
        return cls.from_mapping(data)

    def to_mapping(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def digest(self) -> str:
        blob = json.dumps(self.to_mapping(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def solver_config(self, eta: float, epsilon: float, rho: float | None = None) -> SolverConfig:
        return SolverConfig(eta=eta, epsilon=epsilon, rho=self.rho if rho is None else rho,
                            max_iter=self.max_iter, primal_tol=self.primal_tol, stall_window=self.stall_window)


@dataclass
class ResultTable:
    """Named columns (with units), rows and provenance. ``extras`` holds
    auxiliary long-format tables (histories, scatter points, surfaces)."""

    columns: list[str]
    units: list[str]
    rows: list[list] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    extras: dict[str, "ResultTable"] = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def where(self, **match) -> "ResultTable":
        idx = [self.columns.index(k) for k in match]
        keep = [r for r in self.rows if all(_same(r[i], v) for i, v in zip(idx, match.values()))]
        return ResultTable(self.columns, self.units, keep, dict(self.metadata))

    def to_dict(self) -> dict:
        return {
            "columns": self.columns,
            "units": self.units,
            "rows": [[_jsonable(c) for c in r] for r in self.rows],
            "metadata": self.metadata,
            "extras": {k: v.to_dict() for k, v in sorted(self.extras.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultTable":
        rows = [[_from_json(c) for c in r] for r in d["rows"]]
        return cls(list(d["columns"]), list(d["units"]), rows, dict(d.get("metadata", {})),
                   {k: cls.from_dict(v) for k, v in d.get("extras", {}).items()})

    def csv_text(self) -> str:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(c) for c in r])
        return buf.getvalue()

    def check_results(self) -> list[tuple[str, bool]]:
        return [tuple(c) for c in self.metadata.get("checks", [])]


def _same(a, b) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        try:
            return math.isclose(float(a), float(b), rel_tol=1e-9, abs_tol=1e-12)
        except (TypeError, ValueError):
            return False
    return a == b


def _jsonable(c):
    if isinstance(c, (np.floating, float)):
        c = float(c)
        return c if math.isfinite(c) else repr(c)
    if isinstance(c, np.integer):
        return int(c)
    return c


def _from_json(c):
    if isinstance(c, str) and c in ("nan", "inf", "-inf"):
        return float(c)
    return c


def _cell(c) -> str:
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    return str(c)


def _db(x: float) -> float:
    return float(10 * np.log10(x)) if x > 0 else float("-inf")


def _mean_db(values_linear, linear: bool) -> float:
    v = np.asarray(values_linear, dtype=np.float64)
    if v.size == 0:
        return float("nan")
    if linear:
        return _db(float(np.mean(v)))
    with np.errstate(divide="ignore"):
        return float(np.mean(10 * np.log10(v)))


def _pad(hist: np.ndarray, length: int) -> np.ndarray:
    """Early-stopped histories hold their last value to the full length."""
    if hist.size >= length:
        return hist[:length]
    return np.concatenate([hist, np.full(length - hist.size, hist[-1])])


# ---------------------------------------------------------------------------
# per-trial work; each returns plain data so it can cross process boundaries


def _scenario(spec: ExperimentSpec, trial: int, constellation: str | None = None, noise_var: float = 0.0):
    return make_scenario(spec.N, spec.K, spec.L, constellation or spec.constellation, spec.chirp,
                         seed=spec.seed + trial, noise_var=noise_var)


def _safe(fn, *args, **kw):
    try:
        return fn(*args, **kw), "ok"
    except DivergenceError as exc:
        return None, f"diverged@{exc.iteration}"
    except InfeasibleError as exc:
        return None, f"infeasible: {exc}"


def _trial_cost(spec, trial):
    sc = _scenario(spec, trial)
    out = []
    for eta in spec.etas:
        for eps in spec.epsilons:
            res, status = _safe(solve, sc, spec.solver_config(eta, eps))
            hist = _pad(res[1].objective, spec.max_iter) if res else None
            out.append((eta, eps, status, hist))
    return out


def _trial_papr_iter(spec, trial):
    out = []
    for c in spec.constellations:
        sc = _scenario(spec, trial, c)
        for eta in spec.etas:
            res, status = _safe(solve, sc, spec.solver_config(eta, spec.epsilons[0]))
            if res:
                wf, d, m = res
                out.append((c, eta, status, _pad(d.papr, spec.max_iter), d.papr[-1], m.papr_linear))
            else:
                out.append((c, eta, status, None, None, None))
    return out


def _trial_ccdf(spec, trial):
    out = []
    for c in spec.constellations:
        sc = _scenario(spec, trial, c)
        for eta in spec.etas:
            for rho in spec.rhos:
                res, status = _safe(solve, sc, spec.solver_config(eta, spec.epsilons[0], rho))
                if res:
                    out.append((c, eta, rho, status, res[2].papr_linear, res[1].raw_metrics.papr_linear))
                else:
                    out.append((c, eta, rho, status, None, None))
    return out


def _trial_constellation(spec, trial):
    out = []
    for c in spec.constellations:
        sc = _scenario(spec, trial, c)
        _, g = sc.target()
        for eta in spec.etas:
            for eps in spec.epsilons:
                res, status = _safe(solve, sc, spec.solver_config(eta, eps))
                if res:
                    wf, _, m = res
                    rx = (sc.H @ (g * wf.entries)) if trial == 0 else None
                    out.append((c, eta, eps, status, m.mui_energy, m.papr_linear, rx))
                else:
                    out.append((c, eta, eps, status, None, None, None))
    return out


def _trial_sum_rate(spec, trial):
    sc = _scenario(spec, trial)
    _, g = sc.target()
    out = []
    for eta in spec.etas:
        for eps in spec.epsilons:
            res, status = _safe(solve, sc, spec.solver_config(eta, eps))
            for snr in spec.snr_db:
                rate = evaluate(sc, res[0], g, noise_var=1.0 / db_to_linear(snr)).sum_rate if res else None
                out.append((eta, eps, snr, status, rate))
    return out


def _trial_pulse(spec, trial):
    sc = _scenario(spec, trial)
    out = []
    for eps in spec.epsilons:
        res, status = _safe(solve, sc, spec.solver_config(spec.etas[0], eps))
        if res:
            curve = 10 ** (pulse_compression(res[0].entries[0], sc.x0.entries[0]) / 20)
            out.append((eps, status, curve))
        else:
            out.append((eps, status, None))
    ref = 10 ** (pulse_compression(sc.x0.entries[0], sc.x0.entries[0]) / 20)
    return out, ref


def _trial_ambiguity(spec, trial):
    """Cross-ambiguity of the design against the reference (the receiver
    keeps the reference as its matched filter) versus the reference's own
    ambiguity; the auto-ambiguity comparison is reported alongside."""
    sc = _scenario(spec, trial)
    ref = frame_ambiguity(sc.x0)
    out = []
    for eps in spec.epsilons:
        res, status = _safe(solve, sc, spec.solver_config(spec.etas[0], eps))
        if res:
            cross = frame_ambiguity(res[0], reference=sc.x0)
            auto = frame_ambiguity(res[0])
            out.append((eps, status, cross.correlation(ref), auto.correlation(ref), cross if trial == 0 else None))
        else:
            out.append((eps, status, None, None, None))
    return out


def _trial_ser(spec, trial):
    """Nominal and robust designs on the estimate, detection over the
    perturbed channel with common noise for both."""
    sc = _scenario(spec, trial)
    _, g = sc.target()
    C = Constellation.of(spec.constellation)
    sent = C.nearest(sc.S)
    out = []
    base = spec.solver_config(spec.etas[0], spec.epsilons[0])
    nom, s1 = _safe(solve, sc, base)
    for si, sigma in enumerate(spec.sigma_deltas):
        delta_seed, noise_seed = np.random.SeedSequence([spec.seed, trial, si]).spawn(2)
        H_true = sc.H + draw_channel_error(sc.K, sc.N, sigma, delta_seed)
        rob, s2 = _safe(robust_solve, sc, RobustConfig(base, sigma, spec.inner_iters, spec.inner_tol))
        status = s1 if s1 != "ok" else s2
        rng = np.random.default_rng(noise_seed)
        for snr in spec.snr_db:
            nv = 1.0 / db_to_linear(snr)
            Z = np.sqrt(nv / 2) * (rng.standard_normal(sc.S.shape) + 1j * rng.standard_normal(sc.S.shape))
            if nom is None or rob is None:
                out.append((sigma, snr, status, None))
                continue
            err_n = C.nearest(H_true @ (g * nom[0].entries) + Z) != sent
            err_r = C.nearest(H_true @ (g * rob[0].entries) + Z) != sent
            out.append((sigma, snr, status, (int(err_n.sum()), int(err_r.sum()),
                                             int((err_r & ~err_n).sum()), int((err_n & ~err_r).sum()), err_n.size)))
    return out


def _trial_pareto(spec, trial):
    sc = _scenario(spec, trial)
    return pareto_sweep(sc, spec.etas)


_TRIALS = {
    ExperimentKind.COST_CONVERGENCE: _trial_cost,
    ExperimentKind.PAPR_VS_ITER: _trial_papr_iter,
    ExperimentKind.PAPR_CCDF: _trial_ccdf,
    ExperimentKind.CONSTELLATION_VS_EPSILON: _trial_constellation,
    ExperimentKind.SUM_RATE_TRADEOFF: _trial_sum_rate,
    ExperimentKind.PULSE_COMPRESSION: _trial_pulse,
    ExperimentKind.AMBIGUITY: _trial_ambiguity,
    ExperimentKind.SER_VS_SNR: _trial_ser,
    ExperimentKind.PARETO_SWEEP: _trial_pareto,
}


def _call(args):
    spec, trial = args
    return _TRIALS[spec.kind](spec, trial)


# ---------------------------------------------------------------------------
# aggregation


def _failures(statuses) -> int:
    return sum(1 for s in statuses if s != "ok")


def _agg_cost(spec, results):
    t = ResultTable(["eta_db", "epsilon", "final_objective_db", "trials_ok", "trials_failed"],
                    ["dB", "", "dB", "count", "count"])
    h = ResultTable(["eta_db", "epsilon", "iter", "objective_db"], ["dB", "", "", "dB"])
    for j, (eta, eps, _, _) in enumerate(results[0]):
        per = [r[j] for r in results]
        hists = np.array([p[3] for p in per if p[3] is not None])
        bad = _failures(p[2] for p in per)
        if hists.size:
            curve = [_mean_db(hists[:, k], spec.linear_average) for k in range(hists.shape[1])]
        else:
            curve = [float("nan")] * spec.max_iter
        t.rows.append([_db(eta), eps, curve[-1], len(per) - bad, bad])
        h.rows.extend([_db(eta), eps, k + 1, c] for k, c in enumerate(curve))
    t.extras["history"] = h
    return t


def _agg_papr_iter(spec, results):
    t = ResultTable(["constellation", "eta_db", "mean_papr_db", "mean_raw_papr_db", "trials_ok", "trials_failed"],
                    ["", "dB", "dB", "dB", "count", "count"])
    h = ResultTable(["constellation", "eta_db", "iter", "papr_db"], ["", "dB", "", "dB"])
    for j, (c, eta, *_rest) in enumerate(results[0]):
        per = [r[j] for r in results if r[j][2] == "ok"]
        bad = len(results) - len(per)
        hists = np.array([p[3] for p in per]) if per else np.zeros((0, spec.max_iter))
        t.rows.append([c, _db(eta), _mean_db([p[5] for p in per], spec.linear_average),
                       _mean_db([p[4] for p in per], spec.linear_average), len(per), bad])
        for k in range(hists.shape[1]):
            h.rows.append([c, _db(eta), k + 1, _mean_db(hists[:, k], spec.linear_average)])
    t.extras["history"] = h
    return t


def _agg_ccdf(spec, results):
    t = ResultTable(["constellation", "eta_db", "rho", "gamma_db", "ccdf", "raw_ccdf"], ["", "dB", "", "dB", "", ""])
    s = ResultTable(["constellation", "eta_db", "rho", "trial", "papr_db", "raw_papr_db", "status"],
                    ["", "dB", "", "", "dB", "dB", ""])
    thr = np.asarray(spec.ccdf_thresholds_db, dtype=np.float64)
    for j, (c, eta, rho, *_r) in enumerate(results[0]):
        per = [(i, r[j]) for i, r in enumerate(results)]
        ok = [p for _, p in per if p[3] == "ok"]
        for i, p in per:
            s.rows.append([c, _db(eta), rho, i, _db(p[4]) if p[4] else float("nan"),
                           _db(p[5]) if p[5] else float("nan"), p[3]])
        if not ok:
            continue
        g, cc = ccdf([_db(p[4]) for p in ok], thr)
        _, rc = ccdf([_db(p[5]) for p in ok], thr)
        t.rows.extend([c, _db(eta), rho, float(a), float(b), float(r)] for a, b, r in zip(g, cc, rc))
    t.extras["samples"] = s
    return t


def _agg_constellation(spec, results):
    t = ResultTable(["constellation", "eta_db", "epsilon", "mean_e_mui_db", "mean_papr_db", "trials_ok"],
                    ["", "dB", "", "dB", "dB", "count"])
    sc = ResultTable(["constellation", "eta_db", "epsilon", "user", "re", "im"], ["", "dB", "", "", "", ""])
    for j, (c, eta, eps, *_r) in enumerate(results[0]):
        ok = [r[j] for r in results if r[j][3] == "ok"]
        t.rows.append([c, _db(eta), eps, _mean_db([p[4] for p in ok], spec.linear_average),
                       _mean_db([p[5] for p in ok], spec.linear_average), len(ok)])
        rx = results[0][j][6]
        if rx is not None:
            for k in range(rx.shape[0]):
                sc.rows.extend([c, _db(eta), eps, k, float(z.real), float(z.imag)] for z in rx[k])
    t.extras["scatter"] = sc
    return t


def _agg_sum_rate(spec, results):
    t = ResultTable(["eta", "epsilon", "snr_db", "mean_sum_rate", "capacity", "trials_ok"],
                    ["", "", "dB", "bit/s/Hz", "bit/s/Hz", "count"])
    for j, (eta, eps, snr, *_r) in enumerate(results[0]):
        ok = [r[j][4] for r in results if r[j][3] == "ok"]
        t.rows.append([eta, eps, snr, float(np.mean(ok)) if ok else float("nan"),
                       float(np.log2(1 + db_to_linear(snr))), len(ok)])
    return t


def _agg_pulse(spec, results):
    t = ResultTable(["epsilon", "lag", "gain_db", "reference_gain_db"], ["", "samples", "dB", "dB"])
    ref = np.mean([r[1] for r in results], axis=0)
    for j, (eps, *_r) in enumerate(results[0][0]):
        curves = [r[0][j][2] for r in results if r[0][j][1] == "ok"]
        if not curves:
            continue
        mean = np.mean(curves, axis=0)
        with np.errstate(divide="ignore"):
            g = 20 * np.log10(mean / mean.max())
            rg = 20 * np.log10(ref / ref.max())
        t.rows.extend([eps, k, float(a), float(b)] for k, (a, b) in enumerate(zip(g, rg)))
    return t


def _agg_ambiguity(spec, results):
    t = ResultTable(["epsilon", "mean_correlation", "min_correlation", "mean_auto_correlation", "trials_ok"],
                    ["", "", "", "", "count"])
    surf = ResultTable(["epsilon", "delay", "doppler", "magnitude"], ["", "samples", "cycles/frame", ""])
    for j, (eps, *_r) in enumerate(results[0]):
        ok = [r[j] for r in results if r[j][1] == "ok"]
        cc = [p[2] for p in ok]
        t.rows.append([eps, float(np.mean(cc)) if cc else float("nan"), float(np.min(cc)) if cc else float("nan"),
                       float(np.mean([p[3] for p in ok])) if ok else float("nan"), len(ok)])
        a = results[0][j][4]
        if a is not None:
            for di, d in enumerate(a.delays):
                surf.rows.extend([eps, int(d), float(nu), float(a.magnitude[di, ni])] for ni, nu in enumerate(a.dopplers))
    t.extras["surface"] = surf
    return t


def _agg_ser(spec, results):
    t = ResultTable(["sigma_delta_db", "snr_db", "ser_nominal", "ser_robust", "robust_only_errors",
                     "nominal_only_errors", "symbols", "p_robust_worse", "trials_failed"],
                    ["dB", "dB", "", "", "count", "count", "count", "", "count"])
    for j, (sigma, snr, *_r) in enumerate(results[0]):
        ok = [r[j][3] for r in results if r[j][2] == "ok"]
        bad = len(results) - len(ok)
        en, er, ro, no, n = (sum(x[i] for x in ok) for i in range(5))
        # exact one-sided sign test on discordant symbols (robust worse?)
        p = binomtest(ro, ro + no, 0.5, alternative="greater").pvalue if ro + no else 1.0
        t.rows.append([_db(sigma), snr, en / n if n else float("nan"), er / n if n else float("nan"),
                       ro, no, n, float(p), bad])
    return t


def _agg_pareto(spec, results):
    t = ResultTable(["trial", "front", "eta", *PARETO_COLUMNS], ["", "", "", "", "dB", "", "dB"])
    for i, fronts in enumerate(results):
        for f in fronts:
            for row in f.rows():
                t.rows.append([i, f.label, f.eta if f.eta is not None else float("nan"), *row])
    return t


_AGG = {
    ExperimentKind.COST_CONVERGENCE: _agg_cost,
    ExperimentKind.PAPR_VS_ITER: _agg_papr_iter,
    ExperimentKind.PAPR_CCDF: _agg_ccdf,
    ExperimentKind.CONSTELLATION_VS_EPSILON: _agg_constellation,
    ExperimentKind.SUM_RATE_TRADEOFF: _agg_sum_rate,
    ExperimentKind.PULSE_COMPRESSION: _agg_pulse,
    ExperimentKind.AMBIGUITY: _agg_ambiguity,
    ExperimentKind.SER_VS_SNR: _agg_ser,
    ExperimentKind.PARETO_SWEEP: _agg_pareto,
}

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq}
_REDUCE = {"max": max, "min": min, "mean": lambda v: float(np.mean(v)), "all": None}


def _evaluate_checks(spec: ExperimentSpec, table: ResultTable) -> list[tuple[str, bool]]:
    """Checks are mappings ``{column, op, value, aggregate=max, where={}}``."""
    out = []
    for chk in spec.checks:
        chk = dict(chk)
        sub = table.where(**chk.get("where", {}))
        vals = [float(v) for v in sub.column(chk["column"])]
        agg = chk.get("aggregate", "max")
        op = _OPS[chk["op"]]
        if not vals:
            passed = False
        elif agg == "all":
            passed = all(op(v, chk["value"]) for v in vals)
        else:
            passed = bool(op(_REDUCE[agg](vals), chk["value"]))
        label = chk.get("name") or f"{agg}({chk['column']}) {chk['op']} {chk['value']}"
        out.append((label, passed))
    return out


def run(spec: ExperimentSpec, jobs: int = 1) -> ResultTable:
    """Execute the study. Trial ``i`` uses seed ``spec.seed + i``; results are
    merged in trial order, so the table does not depend on ``jobs``."""
    tasks = [(spec, i) for i in range(spec.trials)]
    if jobs > 1 and spec.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_call, tasks, chunksize=max(1, spec.trials // (4 * jobs))))
    else:
        results = [_call(t) for t in tasks]
    table = _AGG[spec.kind](spec, results)
    table.metadata = {
        "kind": spec.kind.value,
        "spec_hash": spec.digest(),
        "seed": spec.seed,
        "trials": spec.trials,
        "code_version": __version__,
    }
    checks = _evaluate_checks(spec, table)
    if checks:
        table.metadata["checks"] = [[label, ok] for label, ok in checks]
    return table


def emit(table: ResultTable, path, fmt: str = "csv", spec: ExperimentSpec | None = None,
         plot_data: bool = False) -> list[Path]:
    """Write ``table`` as CSV or JSON. JSON echoes ``spec``; ``plot_data``
    also writes every auxiliary table as ``<stem>_<name>.csv``."""
    path = Path(path)
    written = []
    try:
        if fmt == "csv":
            path.write_text(table.csv_text())
        elif fmt == "json":
            doc = {"table": table.to_dict(), "spec": spec.to_mapping() if spec else None}
            path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
        written.append(path)
        if plot_data:
            for name, extra in sorted(table.extras.items()):
                p = path.with_name(f"{path.stem}_{name}.csv")
                p.write_text(extra.csv_text())
                written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return written


def load_json(path) -> tuple[ResultTable, dict | None]:
    doc = json.loads(Path(path).read_text())
    return ResultTable.from_dict(doc["table"]), doc.get("spec")


__all__ = ["ExperimentKind", "ExperimentSpec", "ResultTable", "emit", "load_json", "run"]
