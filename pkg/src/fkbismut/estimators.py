"""Bismut-type estimators: semigroup, gradient, generator, Hessian, plus the
martingale-drift diagnostic for the gradient formula.

Paths are simulated in fixed-size chunks; per-chunk streaming moments are
merged in chunk order, so results do not depend on the worker count.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import oracles
from .paths import FAIL_NONE, FAIL_REASONS, PathState, SimConfig, choose_backend, simulate_batch
from .stats import RunningMoments, merge_all

log = logging.getLogger(__name__)

KINDS = ("semigroup", "gradient", "generator", "hessian")


@dataclass
class EstimatorReport:
    kind: str
    estimate: float
    std_error: float
    n_paths_used: int
    n_paths_failed: int
    term_breakdown: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    failure_reasons: dict = field(default_factory=dict)

    def interval(self, k=3.0):
        return self.estimate - k * self.std_error, self.estimate + k * self.std_error

    def to_dict(self):
        return asdict(self)


def path_samples(state: PathState, cfg: SimConfig, kinds=KINDS):
    """Per-path estimator samples and named term samples.

    Every sample is ``fk * (...)`` so that a constant potential rescales
    it by the common weight and nothing else.
    """
    f = cfg.fields.payoff(state.X)
    fk = state.fk
    out = {}
    if "semigroup" in kinds:
        out["semigroup"] = {"total": fk * f}
    if "gradient" in kinds:
        out["gradient"] = {
            "total": fk * (-f * state.acc_grad),
            "dB_term": fk * (-f * state.g_dB),
            "dV_term": fk * (-f * state.g_dV),
        }
    if "generator" in kinds:
        ab_dB = np.einsum("pa,pa->p", state.A_dB, state.Bv)
        ab_dV = np.einsum("pa,pa->p", state.A_dV, state.Bv)
        out["generator"] = {
            "total": fk * (f * (state.Zi + 0.5 * (ab_dB + ab_dV))),
            "drift_term": fk * (f * state.Zi),
            "product_dB_term": fk * (f * (0.5 * ab_dB)),
            "product_dV_term": fk * (f * (0.5 * ab_dV)),
        }
    if "hessian" in kinds:
        prod = state.acc_hess_l * state.acc_hess_k
        out["hessian"] = {
            "total": fk * (f * (-state.h_Wp - state.h_V + prod)),
            "Wprime_term": fk * (-f * state.h_Wp),
            "potential_term": fk * (-f * state.h_V),
            "product_term": fk * (f * prod),
        }
    return out


def config_echo(cfg: SimConfig, backend=None):
    m = cfg.model
    fs = cfg.fields
    echo = {
        "T": cfg.T,
        "dt": cfg.dt,
        "n_steps": cfg.n_steps,
        "n_paths": cfg.n_paths,
        "seed": cfg.seed,
        "model": {"kind": m.kind, "dim": m.dim, "curvature": float(getattr(m, "curvature", 0.0))},
        "fields": {
            "potential": {"builtin": fs.potential.name, "params": fs.potential.params},
            "drift": {"builtin": fs.drift.name, "params": fs.drift.params},
            "payoff": {"builtin": fs.payoff.name, "params": fs.payoff.params},
            "v_min": fs.v_min,
        },
        "x0": [float(a) for a in cfg.x0],
        "v": [float(a) for a in cfg.v],
        "w": [float(a) for a in cfg.w],
        "schedules": {"ids": cfg.schedules.ids(), **{r: getattr(cfg.schedules, r).to_dict() for r in ("k_grad", "k", "l")}},
        "chunk_size": cfg.chunk_size,
    }
    if backend:
        echo["backend"] = backend
    return echo


def resolve_workers(workers=None):
    if workers in (None, "auto"):
        env = os.environ.get("FKBISMUT_WORKERS")
        if env:
            return resolve_workers(env if env == "auto" else int(env))
        return os.cpu_count() or 1
    workers = int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def _chunks(cfg):
    return [(s, min(s + cfg.chunk_size, cfg.n_paths)) for s in range(0, cfg.n_paths, cfg.chunk_size)]


def _run_chunk(cfg, kinds, bounds):
    start, stop = bounds
    state = simulate_batch(cfg, start, stop)
    ok = state.fail == FAIL_NONE
    samples = path_samples(state, cfg, kinds)
    moments = {k: {name: RunningMoments.from_array(s[ok]) for name, s in terms.items()} for k, terms in samples.items()}
    reasons = {}
    for code in np.unique(state.fail[~ok]):
        reasons[FAIL_REASONS[int(code)]] = int(np.sum(state.fail == code))
    return moments, int(np.sum(~ok)), reasons


def run(cfg: SimConfig, kinds=None, workers=1) -> dict:
    """Simulate ``cfg.n_paths`` paths once and return a report per kind."""
    kinds = tuple(kinds or cfg.estimators)
    bad = set(kinds) - set(KINDS)
    if bad:
        raise ValueError(f"unknown estimator kinds {sorted(bad)}")
    need = set(kinds)
    if not set(cfg.estimators) >= need:
        cfg = cfg.with_(estimators=tuple(sorted(need | set(cfg.estimators))))
    chunks = _chunks(cfg)
    nw = min(resolve_workers(workers), len(chunks))
    if nw == 1:
        results = [_run_chunk(cfg, kinds, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(lambda c: _run_chunk(cfg, kinds, c), chunks))
    n_failed = sum(r[1] for r in results)
    reasons = {}
    for r in results:
        for k, v in r[2].items():
            reasons[k] = reasons.get(k, 0) + v
    if n_failed:
        log.warning("%d of %d paths failed: %s", n_failed, cfg.n_paths, reasons)
    echo = config_echo(cfg, choose_backend(cfg))
    reports = {}
    for kind in kinds:
        merged = {name: merge_all([(i, r[0][kind][name]) for i, r in enumerate(results)])
                  for name in results[0][0][kind]}
        tot = merged.pop("total")
        reports[kind] = EstimatorReport(
            kind=kind,
            estimate=float(tot.mean) if tot.count else float("nan"),
            std_error=float(tot.std_error),
            n_paths_used=int(tot.count),
            n_paths_failed=n_failed,
            term_breakdown={name: float(m.mean) for name, m in merged.items()},
            config=echo,
            failure_reasons=reasons,
        )
    return reports


def estimate_semigroup(cfg, workers=1):
    return run(cfg, ("semigroup",), workers)["semigroup"]


def estimate_gradient(cfg, workers=1):
    return run(cfg, ("gradient",), workers)["gradient"]


def estimate_generator(cfg, workers=1):
    return run(cfg, ("generator",), workers)["generator"]


def estimate_hessian(cfg, workers=1):
    return run(cfg, ("hessian",), workers)["hessian"]


# ---------------------------------------------------------------------------
# martingale drift


class _DriftObserver:
    """Evaluates, at grid times, the local martingale
    V_t df_t(W_t k_t v) - V_t f_t(x_t) int_0^t <W k' v, dB> - int_0^t V_s f_s(x_s) dV(W_s k_s v) ds
    with f_t = P^V_{T-t} f from the oracle."""

    def __init__(self, cfg, case, steps):
        self.cfg = cfg
        self.case = case
        self.steps = set(steps)
        self.kg = cfg.schedules.grid(cfg.n_steps + 1, cfg.dt)["k_grad"][0]
        self.values = {}
        self.integral = None

    def __call__(self, state, j):
        cfg = self.cfg
        if self.integral is None:
            self.integral = np.zeros(len(state.fk))
        s = j * cfg.dt
        accumulate = j < cfg.n_steps and not cfg.fields.potential.is_zero
        if j not in self.steps and not accumulate:
            return
        r = self.case.at(cfg.T - s, state.X)
        Wv = state.W @ cfg.v
        dphi = np.einsum("pi,pia->pa", r.grad, state.F)  # frame components of df_t
        k = self.kg[j]
        if j in self.steps:
            expr = (state.fk * np.einsum("pa,pa->p", dphi, k * Wv)
                    - state.fk * r.value * state.g_dB - self.integral)
            self.values[j] = expr
        if accumulate:
            grad_v = cfg.fields.potential.grad(cfg.T - s, state.X)
            dV = np.einsum("pi,pia->pa", grad_v, state.F)
            self.integral = self.integral + state.fk * r.value * np.einsum("pa,pa->p", dV, k * Wv) * cfg.dt


def martingale_drift_check(cfg: SimConfig, checkpoints=(0.25, 0.5, 0.75), workers=1):
    """One report per checkpoint (plus t = 0) with the sample mean of the
    gradient-formula local martingale; constant mean is the check."""
    case = oracles.lookup(cfg.model, cfg.fields)  # raises OracleMissing
    times = [0.0] + [float(t) for t in checkpoints]
    steps = []
    for t in times:
        if not 0 <= t <= cfg.T:
            raise ValueError(f"checkpoint {t} outside [0, T]")
        j = int(round(t / cfg.dt))
        if abs(j * cfg.dt - t) > 1e-9 * max(1.0, cfg.T):
            raise ValueError(f"checkpoint {t} is not on the time grid")
        steps.append(j)
    cfg = cfg.with_(estimators=("gradient",), backend="python")
    chunks = _chunks(cfg)

    def one(bounds):
        obs = _DriftObserver(cfg, case, steps)
        state = simulate_batch(cfg, bounds[0], bounds[1], observer=obs)
        ok = state.fail == FAIL_NONE
        return {j: RunningMoments.from_array(obs.values[j][ok]) for j in steps}, int(np.sum(~ok))

    nw = min(resolve_workers(workers), len(chunks))
    if nw == 1:
        results = [one(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(one, chunks))
    n_failed = sum(r[1] for r in results)
    echo = config_echo(cfg, "python")
    reports = []
    for t, j in zip(times, steps):
        m = merge_all([(i, r[0][j]) for i, r in enumerate(results)])
        reports.append(EstimatorReport(
            kind="martingale_drift",
            estimate=float(m.mean),
            std_error=float(m.std_error),
            n_paths_used=int(m.count),
            n_paths_failed=n_failed,
            term_breakdown={"t": t},
            config=dict(echo, checkpoint=t),
        ))
    return reports


def oracle_value(cfg: SimConfig, kind: str):
    """Closed-form value of ``kind`` for this configuration (raises
    :class:`oracles.OracleMissing`)."""
    case = oracles.lookup(cfg.model, cfg.fields)
    return case.quantity(kind, cfg.T, cfg.x0, cfg.frame0, cfg.v, cfg.w)


def compare(report: EstimatorReport, oracle: float):
    err = report.estimate - oracle
    ratio = abs(err) / report.std_error if report.std_error > 0 else (0.0 if abs(err) < 1e-12 else math.inf)
    return {"oracle": oracle, "abs_error": abs(err), "error_se_ratio": ratio}
