import numpy as np
import pytest

import sloshfree.simulation as simulation
from sloshfree.config import ExperimentConfig, bundled_config
from sloshfree.kinematics import forward_kinematics
from sloshfree.metrics import aggregate
from sloshfree.reference import SloshFreePose, Trajectory, eval_trajectory, slosh_free_reference
from sloshfree.simulation import IKError, RunFailure, run_experiment, setup_initial_configuration


@pytest.fixture(scope="module")
def loop_runs():
    cfg = bundled_config("loop")
    return {mode: run_experiment(cfg.with_(mode=mode)) for mode in ("slosh_free", "baseline")}


def _respects_limits(model, log, tol=1e-8, dt=1e-3):
    L = model.limits
    ok = all(L.contains(log.q[k], log.qd[k], log.qdd[k], tol=tol) for k in range(len(log)))
    jerk = np.diff(log.qdd, axis=0) / dt
    return ok and np.all(jerk >= L.qddd_min - tol / dt) and np.all(jerk <= L.qddd_max + tol / dt)


def test_regulation_at_rest(panda_model):
    p0 = forward_kinematics(panda_model, panda_model.home).p
    traj = Trajectory("loop", 0.2, center=tuple(p0), params={"radius": 0.0})
    log = run_experiment(ExperimentConfig(traj, q_init=panda_model.home))
    assert len(log) == 201
    assert np.max(log.e_p) < 1e-6


def test_record_grid(loop_runs):
    log = loop_runs["slosh_free"]
    assert len(log) == 6001
    np.testing.assert_allclose(np.diff(log.t), 1e-3, atol=1e-12)


def test_slosh_free_run_stays_level(loop_runs):
    log = loop_runs["slosh_free"]
    m = aggregate(log)
    assert m.max_e_sf < np.deg2rad(1.0)
    assert not m.infeasible


def test_slosh_free_run_needs_no_slack(loop_runs):
    assert np.abs(loop_runs["slosh_free"].slack).max() < 1e-6


def test_baseline_sloshes_at_least_ten_times_more(loop_runs):
    sf, bl = aggregate(loop_runs["slosh_free"]), aggregate(loop_runs["baseline"])
    assert bl.max_e_sf >= 10 * sf.max_e_sf


def test_modes_share_reference_positions(loop_runs):
    np.testing.assert_array_equal(loop_runs["slosh_free"].p_r, loop_runs["baseline"].p_r)


def test_plant_respects_all_limits(panda_model, loop_runs):
    for log in loop_runs.values():
        assert _respects_limits(panda_model, log)


def test_limits_hold_in_the_infeasible_regime(panda_model):
    log = run_experiment(bundled_config("loop").with_(T=2.5))
    assert aggregate(log).infeasible
    assert _respects_limits(panda_model, log)


def test_rerun_is_bit_identical():
    cfg = bundled_config("lissajous").with_(T=0.5)
    a, b = run_experiment(cfg), run_experiment(cfg)
    for name in ("q", "qd", "qdd", "slack", "e_sf"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True)


def test_ik_fixpoint_at_home(panda_model):
    p0 = forward_kinematics(panda_model, panda_model.home).p
    traj = Trajectory("loop", 1.0, center=tuple(p0), params={"radius": 0.0})
    np.testing.assert_array_equal(setup_initial_configuration(panda_model, traj), panda_model.home)


def test_ik_reaches_default_start(panda_model):
    traj = bundled_config("loop").trajectory
    q = setup_initial_configuration(panda_model, traj)
    assert panda_model.limits.contains(q)
    ee = forward_kinematics(panda_model, q)
    ref = slosh_free_reference(traj, 0.0)
    assert np.linalg.norm(ee.p - ref.p_r) < 1e-4
    assert np.abs(ee.R - ref.R_r).max() < 1e-3


def test_ik_unreachable(panda_model):
    traj = Trajectory("loop", 1.0, center=(2.5, 0.0, 0.35))
    with pytest.raises(IKError):
        setup_initial_configuration(panda_model, traj)


def test_initial_configuration_outside_limits(panda_model):
    q = panda_model.home.copy()
    q[3] = 0.5
    with pytest.raises(RunFailure):
        run_experiment(ExperimentConfig(Trajectory("loop", 0.1), q_init=q))


def test_degeneracy_storm_fails_the_run(monkeypatch):
    def always_degenerate(traj, t, psi=0.0, g_comp=None, previous_R=None, sample=None):
        p = (sample or eval_trajectory(traj, t)).p
        return SloshFreePose(p, np.eye(3) if previous_R is None else previous_R, "free_fall")

    monkeypatch.setattr(simulation, "slosh_free_reference", always_degenerate)
    with pytest.raises(RunFailure, match="degenerate"):
        run_experiment(bundled_config("loop").with_(T=0.1))
