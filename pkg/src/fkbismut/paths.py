"""Path simulation: geodesic random walk with parallel frame, damped transport
W, its second-order companion W', the Feynman-Kac weight and the running
stochastic integrals the estimators consume.

Everything is stored in frame components: ``What`` is //^{-1} W, ``WhatPrime``
is //^{-1} W'(., w) for the configured direction w, and noise increments dB
are components of //^{-1} (martingale part of the antidevelopment).

Two backends produce the same scheme: a compiled kernel (``_kernel``) for
the constant-curvature models with built-in fields, and the vectorised numpy
code in this module, which handles everything else.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .fields import FieldError, FieldSpec
from .geometry import ManifoldModel
from .schedules import ScheduleSet

log = logging.getLogger(__name__)

try:  # compiled core
    from . import _kernel
except ImportError:  # pragma: no cover - exercised when the extension is absent
    _kernel = None

if os.environ.get("FKBISMUT_PURE_PYTHON", "") not in ("", "0"):
    _kernel = None

ESTIMATORS = ("semigroup", "gradient", "generator", "hessian")
MAX_KERNEL_DIM = 8

FAIL_NONE, FAIL_NONFINITE, FAIL_BOUND, FAIL_COND, FAIL_CHART = 0, 1, 2, 3, 4
FAIL_REASONS = {FAIL_NONFINITE: "non-finite state", FAIL_BOUND: "position bound exceeded",
                FAIL_COND: "|W^-1| exceeded the condition bound", FAIL_CHART: "left chart domain"}


class SimulationError(RuntimeError):
    pass


def kernel_available():
    return _kernel is not None


@dataclass
class SimConfig:
    T: float
    dt: float
    n_paths: int
    seed: int
    model: ManifoldModel
    fields: FieldSpec
    x0: np.ndarray
    v: np.ndarray | None = None
    w: np.ndarray | None = None
    schedules: ScheduleSet | None = None
    estimators: tuple = ("semigroup",)
    position_bound: float = 1e8
    cond_bound: float = 1e8
    backend: str = "auto"
    chunk_size: int = 4096
    frame0: np.ndarray | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0 < self.dt <= self.T:
            raise ValueError("need 0 < dt <= T")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError("dt must divide T")
        if int(self.n_paths) < 1:
            raise ValueError("n_paths must be >= 1")
        self.n_paths = int(self.n_paths)
        self.seed = int(self.seed)
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        self.estimators = tuple(self.estimators)
        if self.backend not in ("auto", "kernel", "python"):
            raise ValueError(f"unknown backend {self.backend!r}")
        self.x0 = self.model.project_point(np.asarray(self.x0, dtype=float))
        if self.x0.shape != (self.model.ambient_dim,):
            raise ValueError(f"x0 must have {self.model.ambient_dim} coordinates")
        if self.frame0 is None:
            self.frame0 = self.model.default_frame(self.x0)
        n_dim = self.model.dim
        e1 = np.zeros(n_dim)
        e1[0] = 1.0
        self.v = e1.copy() if self.v is None else np.asarray(self.v, dtype=float)
        self.w = self.v.copy() if self.w is None else np.asarray(self.w, dtype=float)
        for name in ("v", "w"):
            vec = getattr(self, name)
            if vec.shape != (n_dim,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"{name} must be a finite vector of length {n_dim}")
        if self.schedules is None:
            self.schedules = ScheduleSet.default(self.T)
        if abs(self.schedules.k.T - self.T) > 1e-9 * self.T:
            raise ValueError("schedules are defined on a different horizon")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def need_generator(self):
        return "generator" in self.estimators

    @property
    def need_hessian(self):
        return "hessian" in self.estimators

    def with_(self, **kw):
        cfg = replace(self, **kw)
        if "x0" in kw and "frame0" not in kw:
            cfg.frame0 = cfg.model.default_frame(cfg.x0)
        if "T" in kw and "schedules" not in kw:
            cfg.schedules = ScheduleSet.default(cfg.T)
        return cfg


@dataclass
class PathState:
    """Batched simulation state (leading axis: path)."""

    t: float
    X: np.ndarray
    F: np.ndarray
    W: np.ndarray
    Wp: np.ndarray
    fk: np.ndarray
    g_dB: np.ndarray
    g_dV: np.ndarray
    A_dB: np.ndarray
    A_dV: np.ndarray
    Bv: np.ndarray
    Zi: np.ndarray
    h_Wp: np.ndarray
    h_V: np.ndarray
    hl_dB: np.ndarray
    hl_dV: np.ndarray
    hk_dB: np.ndarray
    hk_dV: np.ndarray
    fail: np.ndarray
    fail_step: np.ndarray
    path_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    ACC = ("g_dB", "g_dV", "A_dB", "A_dV", "Bv", "Zi", "h_Wp", "h_V", "hl_dB", "hl_dV", "hk_dB", "hk_dV")

    @classmethod
    def initial(cls, cfg: SimConfig, path_index):
        P = len(path_index)
        n = cfg.model.dim
        z = lambda: np.zeros(P)
        zv = lambda: np.zeros((P, n))
        return cls(
            t=0.0,
            X=np.tile(cfg.x0, (P, 1)),
            F=np.tile(cfg.frame0, (P, 1, 1)),
            W=np.tile(np.eye(n), (P, 1, 1)),
            Wp=np.zeros((P, n, n)),
            fk=np.ones(P),
            g_dB=z(), g_dV=z(), A_dB=zv(), A_dV=zv(), Bv=zv(), Zi=z(),
            h_Wp=z(), h_V=z(), hl_dB=z(), hl_dV=z(), hk_dB=z(), hk_dV=z(),
            fail=np.zeros(P, dtype=np.int64),
            fail_step=np.full(P, -1, dtype=np.int64),
            path_index=np.asarray(path_index, dtype=np.int64),
        )

    def __len__(self):
        return len(self.fk)

    @property
    def ok(self):
        return self.fail == FAIL_NONE

    # combined accumulators
    @property
    def acc_grad(self):
        return self.g_dB + self.g_dV

    @property
    def acc_gen_A(self):
        return self.A_dB + self.A_dV

    @property
    def acc_hess_l(self):
        return self.hl_dB + self.hl_dV

    @property
    def acc_hess_k(self):
        return self.hk_dB + self.hk_dV

    def row(self, i) -> "Trajectory":
        return Trajectory(
            t=self.t, x=self.X[i].copy(), F=self.F[i].copy(), What=self.W[i].copy(),
            WhatPrime=self.Wp[i].copy(), fk_weight=float(self.fk[i]),
            **{name: np.copy(getattr(self, name)[i]) for name in self.ACC},
            fail=int(self.fail[i]), fail_step=int(self.fail_step[i]), path_index=int(self.path_index[i]),
        )

    @classmethod
    def concat(cls, parts):
        kw = {}
        for name in cls.__dataclass_fields__:
            if name == "t":
                kw[name] = parts[0].t
            else:
                kw[name] = np.concatenate([getattr(p, name) for p in parts])
        return cls(**kw)


@dataclass(frozen=True)
class Trajectory:
    """State of one path.  Accumulators are split into their noise (dB) and
    time-integral (dV) parts; the combined values are properties."""

    t: float
    x: np.ndarray
    F: np.ndarray
    What: np.ndarray
    WhatPrime: np.ndarray
    fk_weight: float
    g_dB: float
    g_dV: float
    A_dB: np.ndarray
    A_dV: np.ndarray
    Bv: np.ndarray
    Zi: float
    h_Wp: float
    h_V: float
    hl_dB: float
    hl_dV: float
    hk_dB: float
    hk_dV: float
    fail: int = FAIL_NONE
    fail_step: int = -1
    path_index: int = 0

    @property
    def acc_grad(self):
        return float(self.g_dB + self.g_dV)

    @property
    def acc_gen_A(self):
        return self.A_dB + self.A_dV

    @property
    def acc_gen_B(self):
        return self.Bv

    @property
    def acc_gen_Z(self):
        return float(self.Zi)

    @property
    def acc_hess_Wp(self):
        return float(self.h_Wp)

    @property
    def acc_hess_V(self):
        return float(self.h_V)

    @property
    def acc_hess_l(self):
        return float(self.hl_dB + self.hl_dV)

    @property
    def acc_hess_k(self):
        return float(self.hk_dB + self.hk_dV)

    def to_state(self) -> PathState:
        kw = {"t": self.t}
        for name in PathState.__dataclass_fields__:
            if name == "t":
                continue
            src = {"X": self.x, "W": self.What, "Wp": self.WhatPrime, "fk": self.fk_weight}.get(name)
            if src is None:
                src = getattr(self, name)
            kw[name] = np.asarray(src)[None].copy()
        return PathState(**kw)


# ---------------------------------------------------------------------------
# numpy backend


class _StepContext:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.sched = cfg.schedules.grid(cfg.n_steps, cfg.dt)
        self.need_gen = cfg.need_generator
        self.need_hess = cfg.need_hessian
        drift = cfg.fields.drift
        if self.need_hess and not drift.has_second_order(cfg.model):
            raise SimulationError(f"Hessian estimator needs nabla Ric_Z, unavailable for drift {drift.name!r} "
                                  f"on {cfg.model.kind}")


def _advance(state: PathState, j: int, dB: np.ndarray, ctx: _StepContext):
    """One step of the scheme, in place, from grid time j*dt."""
    cfg = ctx.cfg
    model, fields = cfg.model, cfg.fields
    dt = cfg.dt
    n = model.dim
    X, F, W, Wp = state.X, state.F, state.W, state.Wp
    P = len(X)
    t = j * dt
    tv = cfg.T - t  # time argument of V
    kg, kgd = ctx.sched["k_grad"][0][j], ctx.sched["k_grad"][1][j]
    k2, k2d = ctx.sched["k"][0][j], ctx.sched["k"][1][j]
    l2, l2d = ctx.sched["l"][0][j], ctx.sched["l"][1][j]

    pot, drift = fields.potential, fields.drift
    need_nabla = ctx.need_hess and not model.constant_curvature
    loc = model.local(X, F, need_nabla=need_nabla)
    gz = drift.frame_grad(model, X, F)
    ricz = loc.ricci - 2.0 * gz

    Vval = pot.value(tv, X)
    live = state.fail == FAIL_NONE
    if np.any(Vval[live] < pot.v_min - 1e-12 * max(1.0, abs(pot.v_min))):
        raise FieldError(f"potential {pot.name!r} fell below declared v_min={pot.v_min}")
    if pot.is_zero:
        dVh = np.zeros((P, n))
    else:
        dVh = model.covec_to_frame(F, pot.grad(tv, X))

    v, w = cfg.v, cfg.w
    Wv = W @ v
    Ww = W @ w

    # gradient (k_grad)
    state.g_dB += kgd * np.einsum("pa,pa->p", Wv, dB)
    state.g_dV += kg * np.einsum("pa,pa->p", dVh, Wv) * dt

    if ctx.need_gen:
        WT = np.swapaxes(W, 1, 2)
        state.A_dB += l2d * np.einsum("pab,pb->pa", WT, dB)
        state.A_dV += l2 * np.einsum("pab,pb->pa", WT, dVh) * dt
        if k2d != 0.0:
            Winv = np.linalg.inv(W)
            # guard on |W^-1| (Frobenius): W decays like a matrix exponential
            bad = (np.linalg.norm(Winv, axis=(1, 2)) > cfg.cond_bound) & (state.fail == FAIL_NONE)
            state.fail[bad] = FAIL_COND
            state.fail_step[bad] = j
            state.Bv += k2d * np.einsum("pab,pb->pa", Winv, dB)
            if not drift.is_zero:
                Zh = drift.frame_value(model, X, F)
                state.Zi += k2d * np.einsum("pa,pa->p", Zh, dB)

    if ctx.need_hess:
        Wpv = Wp @ v
        if pot.is_zero:
            HV = 0.0
            dV_Wp = 0.0
        else:
            Hh = model.hess_to_frame(X, F, pot.hess(tv, X), pot.grad(tv, X))
            HV = np.einsum("pa,pab,pb->p", Wv, Hh, Ww)
            dV_Wp = np.einsum("pa,pa->p", dVh, Wpv)
        state.h_Wp += k2d * np.einsum("pa,pa->p", Wpv, dB)
        state.h_V += k2 * (HV + dV_Wp) * dt
        state.hl_dB += l2d * np.einsum("pa,pa->p", Ww, dB)
        state.hl_dV += l2 * np.einsum("pa,pa->p", dVh, Ww) * dt
        state.hk_dB += k2d * np.einsum("pa,pa->p", Wv, dB)
        state.hk_dV += k2 * np.einsum("pa,pa->p", dVh, Wv) * dt

        # W' (Ito-Euler): columns j -> W'(e_j, w)
        new = Wp - 0.5 * dt * (ricz @ Wp)
        for col in range(n):
            new[:, :, col] += loc.riemann_apply(dB, W[:, :, col], Ww)
        D = loc.dstar_r()
        H2 = drift.frame_hess(model, X, F)
        Q = -2.0 * H2
        if loc.nabla_ricci is not None:
            Q = Q + loc.nabla_ricci
        if D is not None:
            Q = Q + D
        if loc.nabla_ricci is not None or D is not None or not drift.is_zero:
            new -= 0.5 * dt * np.einsum("pabc,paj,pb->pcj", Q, W, Ww)
        state.Wp = new

    state.fk = state.fk * np.exp(-Vval * dt)

    # W: implicit midpoint for dW = -1/2 Ric_Z W dt
    eye = np.eye(n)
    A = 0.25 * dt * ricz
    state.W = np.linalg.solve(eye + A, (eye - A) @ W)

    # move along the geodesic and transport the frame
    U = np.einsum("pia,pa->pi", F, dB)
    if not drift.is_zero:
        U = U + drift.value(X) * dt
    Xn, Fn, ok = model.geodesic_step(X, U, F)
    Xn, Fn = model.retract(Xn, Fn)
    state.X, state.F = Xn, Fn
    state.t = (j + 1) * dt

    fresh = state.fail == FAIL_NONE
    chart_bad = fresh & ~ok
    state.fail[chart_bad] = FAIL_CHART
    state.fail_step[chart_bad] = j
    fresh = state.fail == FAIL_NONE
    with np.errstate(invalid="ignore", over="ignore"):
        finite = (np.all(np.isfinite(Xn), axis=1) & np.all(np.isfinite(state.W), axis=(1, 2))
                  & np.all(np.isfinite(state.Wp), axis=(1, 2)) & np.isfinite(state.fk)
                  & np.isfinite(state.g_dB) & np.isfinite(state.h_Wp))
        nonfinite = fresh & ~finite
        state.fail[nonfinite] = FAIL_NONFINITE
        state.fail_step[nonfinite] = j
        far = (state.fail == FAIL_NONE) & (np.abs(Xn).max(axis=1) > cfg.position_bound)
    state.fail[far] = FAIL_BOUND
    state.fail_step[far] = j
    # failed paths stay where they last were valid so later steps remain finite
    dead = state.fail != FAIL_NONE
    if np.any(dead):
        state.X[dead], state.F[dead] = X[dead], F[dead]
        state.W[dead], state.Wp[dead] = W[dead], Wp[dead]


def _simulate_numpy(cfg: SimConfig, path_index, normals, observer=None):
    ctx = _StepContext(cfg)
    state = PathState.initial(cfg, path_index)
    sq = np.sqrt(cfg.dt)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(cfg.n_steps):
            if observer is not None:
                observer(state, j)
            _advance(state, j, normals[:, j, :] * sq, ctx)
        if observer is not None:
            observer(state, cfg.n_steps)
    return state


# ---------------------------------------------------------------------------
# dispatch


def kernel_supported(cfg: SimConfig) -> bool:
    if _kernel is None:
        return False
    if cfg.model.kind not in ("euclidean", "sphere", "hyperbolic") or cfg.model.dim > MAX_KERNEL_DIM:
        return False
    codes = cfg.fields.kernel_codes()
    if codes is None:
        return False
    (vcode, _), (zcode, _) = codes
    if zcode != 0 and cfg.model.kind != "euclidean":
        return False
    return True


def choose_backend(cfg: SimConfig, observer=None) -> str:
    if observer is not None:
        return "python"
    if cfg.backend == "python":
        return "python"
    ok = kernel_supported(cfg)
    if cfg.backend == "kernel" and not ok:
        raise SimulationError("compiled kernel unavailable for this configuration")
    return "kernel" if ok else "python"


def _simulate_kernel(cfg: SimConfig, path_index, normals):
    (vcode, vpar), (zcode, zpar) = cfg.fields.kernel_codes()
    sched = cfg.schedules.grid(cfg.n_steps, cfg.dt)
    model = cfg.model
    mcode = 0 if model.kind == "euclidean" else 1
    out = _kernel.simulate(
        np.ascontiguousarray(normals, dtype=np.float64),
        float(cfg.dt), float(cfg.T),
        np.ascontiguousarray(cfg.x0), np.ascontiguousarray(cfg.frame0),
        mcode, float(model.curvature),
        int(vcode), float(vpar), int(zcode), float(zpar), float(cfg.fields.v_min),
        sched["k_grad"][0], sched["k_grad"][1], sched["k"][0], sched["k"][1], sched["l"][0], sched["l"][1],
        np.ascontiguousarray(cfg.v), np.ascontiguousarray(cfg.w),
        int(cfg.need_generator), int(cfg.need_hessian),
        float(cfg.position_bound), float(cfg.cond_bound),
    )
    if out["v_below"]:
        raise FieldError(f"potential {cfg.fields.potential.name!r} fell below declared v_min")
    out.pop("v_below")
    return PathState(t=cfg.n_steps * cfg.dt, path_index=np.asarray(path_index, dtype=np.int64), **out)


def simulate_batch(cfg: SimConfig, start: int, stop: int, observer=None, backend=None) -> PathState:
    """Terminal states of paths ``start .. stop-1``."""
    idx = np.arange(start, stop)
    normals = rng.batch_normals(cfg.seed, start, stop, cfg.n_steps, cfg.model.dim)
    be = backend or choose_backend(cfg, observer)
    if be == "kernel":
        return _simulate_kernel(cfg, idx, normals)
    return _simulate_numpy(cfg, idx, normals, observer)


def simulate(cfg: SimConfig, path_index: int) -> Trajectory:
    """Terminal trajectory of one path; a deterministic function of
    ``(cfg.seed, path_index)``."""
    return simulate_batch(cfg, path_index, path_index + 1).row(0)


def initial_trajectory(cfg: SimConfig, path_index: int = 0) -> Trajectory:
    return PathState.initial(cfg, [path_index]).row(0)


def step(traj: Trajectory, dB, cfg: SimConfig) -> Trajectory:
    """Advance one path by one step with increment ``dB`` ~ N(0, dt I)."""
    j = int(round(traj.t / cfg.dt))
    if j >= cfg.n_steps:
        raise SimulationError("trajectory already at the horizon")
    state = traj.to_state()
    ctx = _StepContext(cfg)
    with np.errstate(over="ignore", invalid="ignore"):
        _advance(state, j, np.asarray(dB, dtype=float)[None], ctx)
    if state.fail[0] != FAIL_NONE:
        raise SimulationError(f"{FAIL_REASONS[int(state.fail[0])]} at step {j}")
    return state.row(0)
