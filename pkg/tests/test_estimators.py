import math

import numpy as np
import pytest

from conftest import make_cfg, sphere_point
from fkbismut import estimators as est
from fkbismut import fields, geometry, oracles, paths, schedules, stats

ALL = ("semigroup", "gradient", "generator", "hessian")


def test_trivial_payoff():
    cfg = make_cfg(geometry.Euclidean(1), n_paths=5000, estimators=ALL)
    reps = est.run(cfg)
    assert reps["semigroup"].estimate == 1.0 and reps["semigroup"].std_error == 0.0
    for kind in ("gradient", "generator", "hessian"):
        r = reps[kind]
        assert abs(r.estimate) <= 3 * r.std_error, kind
    assert reps["gradient"].n_paths_used + reps["gradient"].n_paths_failed == cfg.n_paths


def test_report_fields():
    cfg = make_cfg(geometry.Euclidean(1), fields.FieldSpec(payoff=fields.payoff_sin()), n_paths=300)
    r = est.estimate_gradient(cfg)
    assert r.kind == "gradient" and set(r.term_breakdown) == {"dB_term", "dV_term"}
    assert r.config["seed"] == cfg.seed and r.config["schedules"]["ids"]["k_grad"] == "linear"
    samples = est.path_samples(paths.simulate_batch(cfg, 0, 300), cfg)["gradient"]["total"]
    assert np.isclose(r.estimate, samples.mean())
    assert np.isclose(r.std_error, samples.std(ddof=1) / math.sqrt(300))
    assert np.isclose(sum(r.term_breakdown.values()), r.estimate)


@pytest.mark.parametrize("kind,model,fs,x0,v,w", [
    ("hessian", geometry.Euclidean(1), fields.FieldSpec(payoff=fields.payoff_sin()), [math.pi / 2], None, None),
    ("hessian", geometry.Euclidean(2), fields.FieldSpec(payoff=fields.payoff_linear([1.0, -2.0])), [0.3, 0.1], [1, 0], [0, 1]),
    ("generator", geometry.Euclidean(1), fields.FieldSpec(payoff=fields.payoff_sin()), [math.pi / 2], None, None),
    ("gradient", geometry.Euclidean(1), fields.FieldSpec(drift=fields.drift_ou(1.0), payoff=fields.payoff_linear([1.0])),
     [0.0], None, None),
    ("generator", geometry.sphere(2), fields.FieldSpec(payoff=fields.payoff_height()), [0, 0, 1.0], None, None),
    ("gradient", geometry.sphere(2), fields.FieldSpec(potential=fields.potential_constant(0.5),
                                                      payoff=fields.payoff_legendre(2)), sphere_point(0.9), [1, 0], None),
])
def test_small_budget_oracle_agreement(kind, model, fs, x0, v, w):
    cfg = make_cfg(model, fs, x0=x0, n_paths=20_000, dt=5e-3, estimators=(kind,),
                   v=None if v is None else np.asarray(v, float), w=None if w is None else np.asarray(w, float))
    r = est.run(cfg)[kind]
    ref = est.oracle_value(cfg, kind)
    assert abs(r.estimate - ref) <= 3.5 * r.std_error + 1e-12, (r.estimate, ref, r.std_error)


def test_chart_backend_gradient_against_sphere_oracle():
    # unit sphere in stereographic coordinates from the south pole; payoff
    # cos(theta) about the north pole, i.e. (1 - |y|^2) / (1 + |y|^2)
    C = geometry.stereographic_sphere(2, 1.0)
    pay = fields.Payoff("height_chart", lambda Y: (1 - np.sum(Y * Y, 1)) / (1 + np.sum(Y * Y, 1)))
    y0 = np.array([0.4, 0.0])
    cfg = make_cfg(C, fields.FieldSpec(payoff=pay), x0=y0, n_paths=4000, dt=0.02, estimators=("gradient",))
    r = est.estimate_gradient(cfg)
    theta = 2 * math.atan(0.4)
    # frame vector points along +y1, i.e. along +theta; d/dtheta e^{-T} cos(theta)
    ref = -math.exp(-1.0) * math.sin(theta)
    assert abs(r.estimate - ref) <= 3.5 * r.std_error


def test_constant_potential_identity_path_by_path():
    c = 0.35
    base = make_cfg(geometry.sphere(2), fields.FieldSpec(payoff=fields.payoff_height()), x0=sphere_point(1.0),
                    n_paths=500, estimators=ALL)
    s0 = est.path_samples(paths.simulate_batch(base, 0, 500), base)
    cfg = base.with_(fields=fields.FieldSpec(potential=fields.potential_constant(c), payoff=fields.payoff_height()))
    st = paths.simulate_batch(cfg, 0, 500)
    sc = est.path_samples(st, cfg)
    w = st.fk[0]
    assert abs(w - math.exp(-c * cfg.T)) < 1e-13
    for kind in ALL:
        for term in s0[kind]:
            assert np.array_equal(sc[kind][term], w * s0[kind][term]), (kind, term)


def test_worker_count_does_not_change_results():
    cfg = make_cfg(geometry.sphere(2), fields.FieldSpec(payoff=fields.payoff_height()), x0=sphere_point(0.5),
                   n_paths=3000, chunk_size=256, estimators=ALL)
    a = est.run(cfg, workers=1)
    b = est.run(cfg, workers=5)
    for k in ALL:
        assert a[k].estimate == b[k].estimate and a[k].std_error == b[k].std_error


def test_merge_independent_of_arrival_order():
    cfg = make_cfg(geometry.Euclidean(1), fields.FieldSpec(payoff=fields.payoff_sin()), n_paths=1000, chunk_size=100)
    parts = []
    for i, (a, b) in enumerate(est._chunks(cfg)):
        s = est.path_samples(paths.simulate_batch(cfg, a, b), cfg, ("gradient",))["gradient"]["total"]
        parts.append((i, stats.RunningMoments.from_array(s)))
    rng = np.random.default_rng(3)
    ref = stats.merge_all(parts)
    for _ in range(5):
        perm = [parts[i] for i in rng.permutation(len(parts))]
        assert stats.merge_all(perm) == ref


def test_martingale_check_flat_sin():
    cfg = make_cfg(geometry.Euclidean(1), fields.FieldSpec(payoff=fields.payoff_sin()), x0=[0.3], n_paths=8000,
                   dt=0.01)
    reps = est.martingale_drift_check(cfg, (0.25, 0.5, 0.75))
    ref = math.exp(-0.5) * math.cos(0.3)
    assert abs(reps[0].estimate - ref) < 1e-12
    for r in reps[1:]:
        assert abs(r.estimate - ref) <= 3.5 * r.std_error


def test_martingale_constant_potential_unit_payoff():
    # df_t = 0 and dV = 0, so only -V_t f_t int <W k' v, dB> survives: a
    # mean-zero term that is not zero path by path
    c = 0.4
    cfg = make_cfg(geometry.Euclidean(1), fields.FieldSpec(potential=fields.potential_constant(c)), n_paths=4000)
    case = oracles.lookup(cfg.model, cfg.fields)
    steps = [0, 25, 50, 75]
    obs = est._DriftObserver(cfg, case, steps)
    snap = {}

    def record(state, j):
        obs(state, j)
        if j in obs.steps:
            snap[j] = -state.fk * math.exp(-c * (cfg.T - j * cfg.dt)) * state.g_dB

    paths.simulate_batch(cfg.with_(backend="python"), 0, cfg.n_paths, observer=record)
    assert np.all(obs.values[0] == 0.0)
    for j in steps:
        assert np.allclose(obs.values[j], snap[j], rtol=1e-13, atol=1e-15)
        m = obs.values[j]
        assert abs(m.mean()) <= 3 * m.std(ddof=1) / math.sqrt(len(m)) + 1e-15
    reps = est.martingale_drift_check(cfg, (0.25, 0.5, 0.75))
    assert reps[0].estimate == 0.0 and reps[0].std_error == 0.0
    for r in reps[1:]:
        assert abs(r.estimate) <= 3 * r.std_error


def test_martingale_with_zero_schedule_vanishes():
    cfg = make_cfg(geometry.Euclidean(1), fields.FieldSpec(potential=fields.potential_quadratic(0.5),
                                                          payoff=fields.payoff_one()), x0=[0.6], n_paths=100)
    case = oracles.lookup(cfg.model, cfg.fields)
    steps = [0, 25, 50, 100]
    obs = est._DriftObserver(cfg, case, steps)
    obs.kg = np.zeros_like(obs.kg)  # k = 0: not a valid gradient schedule, so set directly

    class ZeroK:
        def __call__(self, state, j):
            state.g_dB[:] = 0.0  # the dB integral carries k' = 0 as well
            obs(state, j)

    paths.simulate_batch(cfg.with_(backend="python"), 0, 100, observer=ZeroK())
    for j in steps:
        assert np.all(obs.values[j] == 0.0)


def test_martingale_needs_oracle():
    cfg = make_cfg(geometry.hyperbolic(2), n_paths=10)
    with pytest.raises(oracles.OracleMissing):
        est.martingale_drift_check(cfg)


def test_checkpoint_must_lie_on_grid():
    cfg = make_cfg(geometry.Euclidean(1), fields.FieldSpec(payoff=fields.payoff_sin()), n_paths=10, dt=0.1)
    with pytest.raises(ValueError):
        est.martingale_drift_check(cfg, (0.25,))


def test_schedule_invariance_small():
    fs = fields.FieldSpec(payoff=fields.payoff_sin())
    cfg = make_cfg(geometry.Euclidean(1), fs, n_paths=20_000, dt=5e-3, estimators=("gradient",))
    knee = schedules.ScheduleSet(schedules.knee_k(1.0, 0.3, 0.7), cfg.schedules.k, cfg.schedules.l)
    a = est.estimate_gradient(cfg)
    b = est.estimate_gradient(cfg.with_(schedules=knee, seed=cfg.seed + 1))
    assert abs(a.estimate - b.estimate) <= 3 * math.hypot(a.std_error, b.std_error)
    assert b.config["schedules"]["ids"]["k_grad"].startswith("knee")
