from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from legcontact.config import load_config
from legcontact.dynamics import contact_jacobian, gravity_vector, table1_model
from legcontact.sensors import VirtualFTConfig
from legcontact.simulator import (
    ControllerConfig,
    GroundModel,
    ScenarioConfig,
    SimulationError,
    SimulationTrace,
    SweepConfig,
    evaluate_trace,
    external_event_torque,
    free_motion,
    ground_force,
    initial_state,
    parametric_sweep,
    pd_torque,
    plant_model,
    run_batch,
    run_scenario,
)

MODEL = table1_model()
QUIET = VirtualFTConfig(sigma=(0.0, 0.0, 0.0))


def short(name, extra=0.1):
    """Bundled scenario cut to ``extra`` seconds of contact."""
    s = load_config(name).scenario
    return replace(s, contact_duration_s=extra, sim_duration_s=s.contact_start_s + extra)


@pytest.fixture(scope="module")
def fixed_traces():
    return {name: run_scenario(MODEL, short(name)) for name in ("scenario1_fixed", "scenario2_fixed")}


@pytest.fixture(scope="module")
def floating_traces():
    return {name: run_scenario(MODEL, short(name)) for name in ("scenario1_floating", "scenario2_floating")}


# --- controller ----------------------------------------------------------------------


def test_pd_examples():
    cfg = ControllerConfig()
    np.testing.assert_array_equal(pd_torque(cfg, [0.3, 0.2], [0, 0], [0.3, 0.2]), 0.0)
    np.testing.assert_array_equal(pd_torque(cfg, [0.0, 0.0], [0, 0], [1.0, 1.0]), 500.0)
    np.testing.assert_array_equal(pd_torque(cfg, [0.3, 0.2], [1.0, 1.0], [0.3, 0.2]), -10.0)


def test_setpoint_blend():
    cfg = ControllerConfig(waypoints=((0.1, (0.0, 0.0)), (0.3, (1.0, -2.0))))
    np.testing.assert_array_equal(cfg.setpoint(0.0), [0.0, 0.0])
    np.testing.assert_allclose(cfg.setpoint(0.2), [0.5, -1.0])
    np.testing.assert_array_equal(cfg.setpoint(0.5), [1.0, -2.0])
    ts = np.linspace(0, 0.4, 81)
    assert np.all(np.diff(cfg.setpoint(ts)[:, 0]) >= 0)


def test_controller_validated():
    with pytest.raises(ValueError):
        ControllerConfig(kp=-1.0)
    with pytest.raises(ValueError):
        ControllerConfig(waypoints=((0.3, (0, 0)), (0.1, (1, 1))))


# --- ground --------------------------------------------------------------------------


def test_ground_examples():
    gm = GroundModel()
    np.testing.assert_array_equal(ground_force(gm, [0.0, 0.01], [0.3, -1.0]), 0.0)
    np.testing.assert_allclose(ground_force(gm, [0.0, -0.002], [0.0, 0.0]), [0.0, 20.0])


@given(
    st.floats(-0.01, 0.01), st.floats(-5, 5), st.floats(-5, 5)
)
def test_friction_bounded(z, vx, vz):
    gm = GroundModel()
    F = ground_force(gm, [0.0, z], [vx, vz])
    assert F[1] >= 0
    assert abs(F[0]) <= gm.friction_mu * F[1] + 1e-12


# --- scripted contact ----------------------------------------------------------------


def test_event_torque_window():
    scen = ScenarioConfig()
    plant = plant_model(MODEL, scen)
    q = np.array([0.0, 0.0, 0.0, 1.5, 0.8])
    tau, F, _ = external_event_torque(plant, q, scen, 0.4)
    np.testing.assert_array_equal(tau, 0.0)
    np.testing.assert_array_equal(F, 0.0)
    tau, F, p = external_event_torque(plant, q, scen, 0.7)
    assert np.linalg.norm(F) == pytest.approx(5.0)
    assert np.arctan2(F[1], F[0]) == pytest.approx(-np.pi / 3)
    J = contact_jacobian(plant, q, 1, 0.5)
    np.testing.assert_allclose(tau, -J.T @ F)
    # joint 2 sits distal to link 1
    assert tau[4] == 0.0
    assert np.all(np.isfinite(p))


def test_event_ramp():
    scen = ScenarioConfig(contact_ramp_s=0.02)
    assert scen.force_scale(0.5) == 0.0
    assert scen.force_scale(0.51) == pytest.approx(0.5)
    assert scen.force_scale(1.0) == 1.0


@pytest.mark.parametrize("kwargs", [dict(alpha=1.5), dict(base_mode="hovering"), dict(step_s=3e-3),
                                    dict(step_s=3e-4), dict(sim_duration_s=0.0), dict(contact_link=-1)])
def test_scenario_validated(kwargs):
    with pytest.raises(ValueError):
        ScenarioConfig(**kwargs)


# --- runs ----------------------------------------------------------------------------


def test_no_event_baseline():
    scen = ScenarioConfig(contact_link=0, sim_duration_s=0.3, ft=QUIET)
    tr = run_scenario(MODEL, scen)
    assert not tr.detected.any()
    assert np.all(tr.link == 0)
    assert np.all(np.isnan(tr.alpha))
    assert np.abs(tr.joint_residual).max() < 1e-3


def test_trace_shape():
    scen = ScenarioConfig(contact_link=0, sim_duration_s=0.05)
    tr = run_scenario(MODEL, scen)
    assert len(tr.t) == 51
    assert np.all(np.diff(tr.t) > 0)
    assert tr.q.shape == (51, 5) and tr.ft.shape == (51, 3)


def test_deterministic():
    scen = ScenarioConfig(sim_duration_s=0.08, contact_start_s=0.03, seed=9)
    a, b = run_scenario(MODEL, scen), run_scenario(MODEL, scen)
    for name in ("q", "qdot", "ft", "residual", "force", "point", "alpha"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = run_scenario(MODEL, replace(scen, seed=10))
    assert not np.array_equal(a.ft, c.ft)


def test_batch_matches_single():
    scens = [ScenarioConfig(sim_duration_s=0.06, contact_start_s=0.02, seed=s) for s in (1, 2)]
    batch = run_batch(MODEL, scens)
    for s, tr in zip(scens, batch):
        single = run_scenario(MODEL, s)
        np.testing.assert_allclose(tr.q, single.q, atol=1e-12)
        np.testing.assert_allclose(tr.ft, single.ft, atol=1e-9)


def test_step_halving_converges():
    ctrl = ControllerConfig(waypoints=((0.0, (0.6, 0.4)), (0.15, (1.5, 0.8))))
    base = ScenarioConfig(contact_link=0, sim_duration_s=0.2, ft=QUIET, controller=ctrl)
    coarse = run_scenario(MODEL, base)
    fine = run_scenario(MODEL, replace(base, step_s=2e-5))
    assert np.abs(coarse.q[-1] - fine.q[-1]).max() < 1e-6
    assert np.abs(coarse.qdot[-1] - fine.qdot[-1]).max() < 1e-6


def test_free_swing_step_halving():
    _, q1, qd1 = free_motion(MODEL, [1.0, -0.5], [0.0, 0.0], 0.5, 1e-4)
    _, q2, qd2 = free_motion(MODEL, [1.0, -0.5], [0.0, 0.0], 0.5, 5e-5)
    assert np.abs(q1[-1] - q2[-1]).max() < 1e-6
    assert np.abs(qd1[-1] - qd2[-1]).max() < 1e-6


def test_unstable_step_aborts():
    scen = ScenarioConfig(contact_link=0, sim_duration_s=0.1, step_s=1e-3)
    with pytest.raises(SimulationError):
        run_scenario(MODEL, scen)


def test_equilibrium_start_is_static():
    scen = ScenarioConfig(contact_link=0)
    plant = plant_model(MODEL, scen)
    q, qd = initial_state(MODEL, scen)
    np.testing.assert_array_equal(qd, 0.0)
    g = gravity_vector(plant, q)
    k = np.array([5000.0, 500.0, 5000.0])
    np.testing.assert_allclose(g[:3] + k * q[:3], 0.0, atol=1e-9)
    np.testing.assert_allclose(g[3:], 500.0 * (np.array([0.6, 0.4]) - q[3:]), atol=1e-9)


@pytest.mark.parametrize("name, link", [("scenario1_fixed", 1), ("scenario2_fixed", 2)])
def test_fixed_detection(fixed_traces, name, link):
    tr = fixed_traces[name]
    rep = evaluate_trace(tr)
    assert rep.detection_latency_s < 0.05
    assert rep.modal_link == link
    pre = tr.t < tr.scenario.contact_start_s
    assert not tr.detected[pre].any()


@pytest.mark.parametrize("name, link", [("scenario1_floating", 1), ("scenario2_floating", 2)])
def test_floating_detection(floating_traces, name, link):
    tr = floating_traces[name]
    rep = evaluate_trace(tr)
    assert rep.detection_latency_s < 0.05
    assert rep.modal_link == link
    assert not tr.detected[tr.t < tr.scenario.contact_start_s].any()


@pytest.mark.parametrize("name", ["scenario1_floating", "scenario2_floating"])
def test_floating_statics(floating_traces, name):
    tr = floating_traces[name]
    G = tr.ground_force
    settled = (tr.t > 0.2) & (tr.t < tr.scenario.contact_start_s)
    weight = (0.738 + 0.351 + 0.080) * 9.81
    np.testing.assert_allclose(G[settled, 1], weight, rtol=0.01)
    assert np.all(np.abs(G[:, 0]) <= 0.3 * G[:, 1] + 1e-12)


# --- evaluation ----------------------------------------------------------------------


def synthetic_trace(bias=(0.0, 0.0)):
    T = 20
    t = np.arange(T) * 1e-3
    active = t >= 5e-3
    force = np.where(active[:, None], [2.0, -3.0], 0.0)
    point = np.where(active[:, None], [0.1, -0.2], np.nan)
    detected = t >= 7e-3
    est_force = np.where(detected[:, None], force + np.array(bias), np.nan)
    est_point = np.where(detected[:, None], point, np.nan)
    z = np.zeros((T, 5))
    return SimulationTrace(
        scenario=ScenarioConfig(contact_start_s=5e-3), n_links=2, n_base=3, t=t, q=z, qdot=z,
        tau_cmd=z[:, :2], tau_sen=z[:, :2], ft=z[:, :3], residual=z, detected=detected,
        link=np.where(detected, 1, 0), alpha=np.where(detected, 0.5, np.nan), point=est_point, force=est_force,
        valid=detected, clamped=np.zeros(T, bool), degenerate=np.zeros(T, bool), true_force=force,
        true_point=point, ground_force=np.zeros((T, 2)),
    )


def test_evaluate_exact_estimates():
    rep = evaluate_trace(synthetic_trace())
    for name in ("force_x", "force_z", "force_norm", "pos_x_mm", "pos_z_mm", "pos_norm_mm"):
        assert getattr(rep, name) == (0.0, 0.0)
    assert rep.n_samples == 13
    assert rep.detection_latency_s == pytest.approx(2e-3)
    assert rep.modal_link == 1 and rep.link_accuracy == 1.0


def test_evaluate_constant_bias():
    rep = evaluate_trace(synthetic_trace(bias=(0.1, 0.0)))
    assert rep.force_x[0] == pytest.approx(0.1)
    assert rep.force_x[1] == pytest.approx(0.0, abs=1e-15)
    assert rep.force_norm[0] == pytest.approx(0.1)


def test_evaluate_empty_window():
    tr = synthetic_trace()
    tr.detected[:] = False
    with pytest.raises(ValueError):
        evaluate_trace(tr)


# --- sweep ---------------------------------------------------------------------------


def test_single_cell_sweep_is_one_run():
    template = replace(SweepConfig().template, contact_duration_s=0.1, sim_duration_s=0.15)
    sweep = SweepConfig(q1_range=(1.2, 1.2), q2_range=(0.9, 0.9), n_q1=1, n_q2=1, alphas=(0.5,), links=(2,),
                        template=template)
    result = parametric_sweep(MODEL, sweep)
    assert len(result.rows) == 1 and len(result.cells) == 1
    scen = replace(template, contact_link=2, alpha=0.5,
                   controller=replace(template.controller, waypoints=((0.0, (1.2, 0.9)),)))
    rep = evaluate_trace(run_scenario(MODEL, scen))
    assert result.rows[0]["loc_err_mm"] == pytest.approx(rep.pos_norm_mm[0], rel=1e-9)
    assert result.rows[0]["force_err_N"] == pytest.approx(rep.force_norm[0], rel=1e-9)
    assert result.max_errors() == (result.rows[0]["loc_err_mm"], result.rows[0]["force_err_N"])


def test_sweep_config_validated():
    with pytest.raises(ValueError):
        SweepConfig(n_q1=0)
    with pytest.raises(ValueError):
        SweepConfig(alphas=())
