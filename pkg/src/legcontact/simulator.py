"""Time-domain simulation of the leg with the observer and estimator in the loop.

Two set-ups are supported:

``fixed``
    The leg hangs from a compliant base modelled by the virtual joints
    ``[x, phi_y, z]`` with the spring-damper constants of
    :class:`~legcontact.sensors.VirtualFTConfig`. The base sensor reading is
    the spring-damper wrench plus noise.
``floating``
    A torso translating in x and z (pitch locked) stands on one foot. The hip
    sensor reading is the wrench the torso transmits to the leg, obtained by
    inverse dynamics of the leg, plus noise. The stance foot force is treated
    as known to the observer and estimator.

Integration is fixed-step RK4. Setpoints, sensor samples, the observer and the
estimator run at ``sample_rate_hz``; the PD feedback itself is evaluated at
every integrator stage because the reference gains are too stiff for the knee
to survive a 1 kHz zero-order hold.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    BaseMode,
    ChainModel,
    base_position,
    coriolis_matrix,
    forward_kinematics,
    gravity_vector,
    link_levers,
    mass_and_bias,
    point_jacobian,
    point_position,
)
from .estimator import COLLINEAR_TOL, CLAMP_MARGIN, ActuationMap, estimate_arrays
from .observer import DEFAULT_GAIN, DEFAULT_THRESHOLD
from .sensors import VirtualFTConfig

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """Integration produced a non-finite state."""


@dataclass(frozen=True)
class ControllerConfig:
    """Joint PD gains and a piecewise setpoint schedule.

    ``waypoints`` is a sequence of ``(time_s, joint_config)``. The setpoint
    holds the first configuration before the first time, blends with a
    half-cosine between consecutive waypoints and holds the last one after.
    """

    kp: float = 500.0
    kd: float = 10.0
    waypoints: tuple = ((0.0, (0.6, 0.4)),)

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0:
            raise ValueError("PD gains must be non-negative")
        wps = tuple((float(t), tuple(float(v) for v in qd)) for t, qd in self.waypoints)
        if not wps:
            raise ValueError("at least one waypoint is required")
        times = [t for t, _ in wps]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be non-decreasing")
        object.__setattr__(self, "waypoints", wps)

    def setpoint(self, t):
        """Joint setpoint at time(s) ``t``; shape ``t.shape + (n,)``."""
        times, configs = self.arrays()
        return _blend(times, configs, np.asarray(t, dtype=float))

    def arrays(self, n_waypoints=None):
        """Waypoint times ``(W,)`` and configurations ``(W, n)``, padded to ``n_waypoints``."""
        times = np.array([w[0] for w in self.waypoints])
        configs = np.array([w[1] for w in self.waypoints])
        if n_waypoints is not None and n_waypoints > len(times):
            pad = n_waypoints - len(times)
            times = np.concatenate([times, np.full(pad, times[-1])])
            configs = np.concatenate([configs, np.repeat(configs[-1:], pad, axis=0)])
        return times, configs


def _blend(times, configs, t):
    """Half-cosine waypoint blend, vectorized over a leading batch axis.

    ``times`` (..., W), ``configs`` (..., W, n), ``t`` broadcastable to ``(...)``.
    """
    t = np.asarray(t, dtype=float)
    out = configs[..., 0, :] + 0.0 * t[..., None]
    for k in range(1, times.shape[-1]):
        t0, t1 = times[..., k - 1], times[..., k]
        span = np.where(t1 > t0, t1 - t0, 1.0)
        s = np.where(t1 > t0, np.clip((t - t0) / span, 0.0, 1.0), (t >= t1).astype(float))
        blend = 0.5 * (1.0 - np.cos(np.pi * s))
        out = out + blend[..., None] * (configs[..., k, :] - configs[..., k - 1, :])
    return out


def pd_torque(cfg: ControllerConfig, q, qdot, q_des):
    """``kp (q_des - q) - kd qdot``; derivative acts on the measurement."""
    return cfg.kp * (np.asarray(q_des) - np.asarray(q)) - cfg.kd * np.asarray(qdot)


@dataclass(frozen=True)
class GroundModel:
    """Penalty ground: spring-damper normal force, saturated viscous friction."""

    stiffness: float = 1.0e4
    damping: float = 100.0
    friction_mu: float = 0.3
    tangential_damping: float = 1000.0
    height: float = 0.0

    def __post_init__(self):
        if min(self.stiffness, self.damping, self.friction_mu, self.tangential_damping) < 0:
            raise ValueError("ground parameters must be non-negative")


def ground_force(gm: GroundModel, foot_pos, foot_vel):
    """World force (Fx, Fz) the ground applies to the foot."""
    foot_pos = np.asarray(foot_pos, dtype=float)
    foot_vel = np.asarray(foot_vel, dtype=float)
    depth = gm.height - foot_pos[..., 1]
    normal = np.where(depth > 0, np.maximum(gm.stiffness * depth - gm.damping * foot_vel[..., 1], 0.0), 0.0)
    limit = gm.friction_mu * normal
    tangential = np.clip(-gm.tangential_damping * foot_vel[..., 0], -limit, limit)
    return np.stack([tangential, normal], axis=-1)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulated experiment.

    The scripted contact force ``magnitude * (cos angle, sin angle)`` acts on
    the leg at ``alpha`` along ``contact_link`` (1-based; 0 disables the
    event). It ramps in and out with half-cosines of ``contact_ramp_s``.
    """

    name: str = "scenario"
    base_mode: str = "fixed"
    contact_link: int = 1
    alpha: float = 0.5
    force_magnitude_N: float = 5.0
    force_angle_rad: float = -np.pi / 3
    contact_start_s: float = 0.5
    contact_duration_s: float = 1.0
    contact_ramp_s: float = 0.0
    hip_sensor_inertia: bool = False
    sim_duration_s: float = 1.5
    step_s: float = 4e-5
    sample_rate_hz: float = 1000.0
    seed: int = 0
    torque_noise_Nm: float = 0.0
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    ground: GroundModel = field(default_factory=GroundModel)
    ft: VirtualFTConfig = field(default_factory=VirtualFTConfig)
    observer_gain_per_s: float = DEFAULT_GAIN
    epsilon_res: float = DEFAULT_THRESHOLD
    collinear_tol: float = COLLINEAR_TOL
    clamp_margin: float = CLAMP_MARGIN
    start_at_equilibrium: bool = True

    def __post_init__(self):
        if self.base_mode not in ("fixed", "floating"):
            raise ValueError(f"base_mode: expected 'fixed' or 'floating', got {self.base_mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha: must lie in [0, 1], got {self.alpha}")
        if self.contact_link < 0:
            raise ValueError(f"contact_link: must be >= 0, got {self.contact_link}")
        if self.force_magnitude_N < 0:
            raise ValueError(f"force_magnitude_N: must be >= 0, got {self.force_magnitude_N}")
        for name in ("sim_duration_s", "step_s", "sample_rate_hz", "observer_gain_per_s", "epsilon_res"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name}: must be positive, got {getattr(self, name)}")
        if self.contact_duration_s <= 0 and self.has_event:
            raise ValueError(f"contact_duration_s: must be positive, got {self.contact_duration_s}")
        if self.contact_ramp_s < 0 or 2 * self.contact_ramp_s > max(self.contact_duration_s, 0):
            if self.has_event:
                raise ValueError("contact_ramp_s: must be in [0, contact_duration_s / 2]")
        if self.step_s > self.sample_period + 1e-15:
            raise ValueError("step_s: must not exceed the sample period")
        if abs(self.substeps * self.step_s - self.sample_period) > 1e-9 * self.sample_period:
            raise ValueError("step_s: sample period must be an integer multiple of the step")

    @property
    def has_event(self) -> bool:
        return self.contact_link > 0 and self.force_magnitude_N > 0

    @property
    def sample_period(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def substeps(self) -> int:
        return max(1, int(round(self.sample_period / self.step_s)))

    @property
    def n_samples(self) -> int:
        return int(round(self.sim_duration_s * self.sample_rate_hz)) + 1

    @property
    def contact_end_s(self) -> float:
        return self.contact_start_s + self.contact_duration_s

    def force_scale(self, t):
        """Fraction of the full force active at time(s) ``t``."""
        if not self.has_event:
            return np.zeros_like(np.asarray(t, dtype=float))
        return _ramp(self.contact_start_s, self.contact_end_s, self.contact_ramp_s, t)

    def force_vector(self, t):
        direction = np.array([np.cos(self.force_angle_rad), np.sin(self.force_angle_rad)])
        return self.force_scale(t)[..., None] * self.force_magnitude_N * direction


def _ramp(start, end, ramp, t):
    """Half-cosine in/out window; arguments broadcast."""
    t = np.asarray(t, dtype=float)
    ramp = np.asarray(ramp, dtype=float)
    safe = np.where(ramp > 0, ramp, 1.0)
    up = np.where(ramp > 0, np.clip((t - start) / safe, 0.0, 1.0), 1.0)
    down = np.where(ramp > 0, np.clip((end - t) / safe, 0.0, 1.0), 1.0)
    s = 0.5 * (1.0 - np.cos(np.pi * np.minimum(up, down)))
    return np.where((t >= start) & (t <= end), s, 0.0)


def plant_model(model: ChainModel, scen: ScenarioConfig) -> ChainModel:
    """Simulated system: leg on the compliant sensor mount, or leg under a torso.

    The fixed-base sensor sits at the leg mounting point, so the base body is
    on the world side and its mass does not load the sensor.
    """
    if scen.base_mode == "fixed":
        return model.with_base(BaseMode.VIRTUAL_FT, base_mass=0.0)
    return model.with_base(BaseMode.FLOATING_XZ)


def estimator_model(model: ChainModel, scen: ScenarioConfig) -> ChainModel:
    """Model the estimator uses: the plant itself, or the leg below the hip sensor."""
    if scen.base_mode == "fixed":
        return plant_model(model, scen)
    return model.with_base(BaseMode.VIRTUAL_FT, base_mass=0.0, base_inertia=0.0)


def external_event_torque(model: ChainModel, q, scen: ScenarioConfig, t):
    """Scripted contact at time ``t``.

    Returns ``(tau_ext, force, point)`` with ``tau_ext = -J^T F`` in the
    left-hand-side convention of ``M qdd + C qd + g + tau_ext = tau``.
    """
    q = np.asarray(q, dtype=float)
    force = scen.force_vector(t)
    if not scen.has_event:
        return np.zeros_like(q), force, np.full(q.shape[:-1] + (2,), np.nan)
    levers = link_levers(model, scen.contact_link, scen.alpha)
    J = point_jacobian(model, q, levers)
    tau_ext = -np.einsum("...cn,...c->...n", J, force)
    return tau_ext, force, point_position(model, q, levers)


@dataclass
class SimulationTrace:
    """Uniformly sampled run record. Array rows are samples."""

    scenario: ScenarioConfig
    n_links: int
    n_base: int
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    tau_cmd: np.ndarray
    tau_sen: np.ndarray
    ft: np.ndarray  # (Fx, Fz, My) as reported, with noise
    residual: np.ndarray
    detected: np.ndarray
    link: np.ndarray  # 0 where nothing detected
    alpha: np.ndarray
    point: np.ndarray
    force: np.ndarray
    valid: np.ndarray
    clamped: np.ndarray
    degenerate: np.ndarray
    true_force: np.ndarray
    true_point: np.ndarray
    ground_force: np.ndarray

    @property
    def contact_active(self) -> np.ndarray:
        return np.linalg.norm(self.true_force, axis=-1) > 0

    @property
    def joint_residual(self) -> np.ndarray:
        return self.residual[:, self.n_base :]

    @property
    def joints(self) -> np.ndarray:
        return self.q[:, self.n_base :]


@dataclass(frozen=True)
class ErrorReport:
    """Estimation errors over the evaluated contact window.

    Forces in N, positions in mm. ``*_norm`` entries are norms of the error
    vector.
    """

    force_x: tuple
    force_z: tuple
    force_norm: tuple
    pos_x_mm: tuple
    pos_z_mm: tuple
    pos_norm_mm: tuple
    n_samples: int
    detection_latency_s: float
    modal_link: int
    link_accuracy: float
    n_invalid: int
    n_degenerate: int

    def as_dict(self) -> dict:
        out = {}
        for name in ("force_x", "force_z", "force_norm", "pos_x_mm", "pos_z_mm", "pos_norm_mm"):
            mean, std = getattr(self, name)
            out[f"{name}_mean"] = mean
            out[f"{name}_std"] = std
        out.update(
            n_samples=self.n_samples,
            detection_latency_s=self.detection_latency_s,
            modal_link=self.modal_link,
            link_accuracy=self.link_accuracy,
            n_invalid=self.n_invalid,
            n_degenerate=self.n_degenerate,
        )
        return out


# --- batched simulation core -------------------------------------------------


def _shared_signature(scen: ScenarioConfig):
    return (
        scen.base_mode,
        scen.sim_duration_s,
        scen.step_s,
        scen.sample_rate_hz,
        scen.controller.kp,
        scen.controller.kd,
        scen.ground,
        scen.ft.stiffness,
        scen.ft.damping,
        scen.observer_gain_per_s,
        scen.epsilon_res,
        scen.collinear_tol,
        scen.clamp_margin,
        scen.start_at_equilibrium,
    )


class _Batch:
    """Per-scenario constants stacked along a leading batch axis."""

    def __init__(self, model: ChainModel, scens: list[ScenarioConfig]):
        first = scens[0]
        sig = _shared_signature(first)
        for s in scens[1:]:
            if _shared_signature(s) != sig:
                raise ValueError(f"scenario {s.name!r} cannot share a batch with {first.name!r}")
        self.scens = scens
        self.cfg = first
        self.model = model
        self.plant = plant_model(model, first)
        self.est_model = estimator_model(model, first)
        self.fixed = first.base_mode == "fixed"
        self.B = len(scens)
        n = model.n_links
        self.t = np.arange(first.n_samples) / first.sample_rate_hz
        W = max(len(s.controller.waypoints) for s in scens)
        wp = [s.controller.arrays(W) for s in scens]
        self.wp_times = np.stack([w[0] for w in wp])
        self.wp_configs = np.stack([w[1] for w in wp])
        self.ev_start = np.array([s.contact_start_s for s in scens])
        self.ev_end = np.array([s.contact_end_s for s in scens])
        self.ev_ramp = np.array([s.contact_ramp_s for s in scens])
        self.ev_on = np.array([s.has_event for s in scens])
        self.levers = np.zeros((self.B, n))
        self.directions = np.zeros((self.B, 2))
        for b, s in enumerate(scens):
            if s.has_event:
                self.levers[b] = link_levers(model, s.contact_link, s.alpha)
                self.directions[b] = s.force_magnitude_N * np.array(
                    [np.cos(s.force_angle_rad), np.sin(s.force_angle_rad)]
                )
        self.foot_levers = model._arrays.lengths.copy()
        ft = first.ft
        # generalized order (x, phi_y, z)
        self.k_gen = np.array([ft.stiffness[0], ft.stiffness[2], ft.stiffness[1]])
        self.d_gen = np.array([ft.damping[0], ft.damping[2], ft.damping[1]])
        self.sigma = np.stack([np.asarray(s.ft.sigma) for s in scens])
        self.torque_sigma = np.array([s.torque_noise_Nm for s in scens])
        self.rngs = [np.random.default_rng(np.random.SeedSequence(s.seed)) for s in scens]

    def force_scale(self, t):
        return np.where(self.ev_on, _ramp(self.ev_start, self.ev_end, self.ev_ramp, t), 0.0)

    def setpoint(self, t):
        return _blend(self.wp_times, self.wp_configs, t)

    def accel(self, q, qd, q_des, scale):
        """Plant acceleration plus the pieces the samplers reuse."""
        plant, js = self.plant, self.plant.joint_slice
        M, h = mass_and_bias(plant, q, qd)
        tau = pd_torque(self.cfg.controller, q[:, js], qd[:, js], q_des)
        gen = -h
        gen[:, js] += tau
        force = scale[:, None] * self.directions
        J = point_jacobian(plant, q, self.levers)
        gen += (force[:, None, :] @ J)[:, 0]
        G = None
        if self.fixed:
            gen[:, :3] -= self.k_gen * q[:, :3] + self.d_gen * qd[:, :3]
        else:
            Jf = point_jacobian(plant, q, self.foot_levers)
            foot = point_position(plant, q, self.foot_levers)
            G = ground_force(self.cfg.ground, foot, (Jf @ qd[:, :, None])[..., 0])
            gen += (G[:, None, :] @ Jf)[:, 0]
        qdd = np.linalg.solve(M, gen[..., None])[..., 0]
        return qdd, tau, force, G


def _rk4_interval(batch: _Batch, t0, y, substeps, h):
    """Advance ``y = [q, qd]`` over one sample period with fixed RK4 steps."""
    N = batch.plant.dof
    # setpoints and force scales on the half-step grid of this interval
    stage_t = t0 + 0.5 * h * np.arange(2 * substeps + 1)
    q_des = batch.setpoint(stage_t[:, None])
    scale = batch.force_scale(stage_t[:, None])

    def f(j, y):
        qdd, *_ = batch.accel(y[:, :N], y[:, N:], q_des[j], scale[j])
        return np.concatenate([y[:, N:], qdd], axis=1)

    for i in range(substeps):
        j = 2 * i
        k1 = f(j, y)
        k2 = f(j + 1, y + 0.5 * h * k1)
        k3 = f(j + 1, y + 0.5 * h * k2)
        k4 = f(j + 2, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def rk4_step(f, t, y, h):
    """One classical Runge-Kutta step of ``ydot = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def free_motion(model: ChainModel, q0, qdot0, duration, step, tau=None):
    """Integrate ``M qdd + C qd + g = tau`` with fixed-step RK4.

    ``tau`` is a constant generalized force (zero by default). Returns the
    sample times and states ``(t, q, qdot)`` at every step.
    """
    q0 = np.asarray(q0, dtype=float)
    N = q0.shape[-1]
    tau = np.zeros(N) if tau is None else np.asarray(tau, dtype=float)
    steps = int(round(duration / step))

    def f(_t, y):
        q, qd = y[..., :N], y[..., N:]
        M, h = mass_and_bias(model, q, qd)
        qdd = np.linalg.solve(M, (tau - h)[..., None])[..., 0]
        return np.concatenate([qd, qdd], axis=-1)

    ys = np.empty((steps + 1,) + q0.shape[:-1] + (2 * N,))
    ys[0] = np.concatenate([q0, np.asarray(qdot0, dtype=float)], axis=-1)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            ys[k + 1] = rk4_step(f, k * step, ys[k], step)
    if not np.all(np.isfinite(ys[-1])):
        raise SimulationError("non-finite state in free motion")
    return np.arange(steps + 1) * step, ys[..., :N], ys[..., N:]


def initial_state(model: ChainModel, scen: ScenarioConfig, q_des0=None, iterations=200):
    """Static equilibrium of the plant under PD control at the first setpoint.

    Falls back to the raw setpoint pose when ``start_at_equilibrium`` is off.
    """
    plant = plant_model(model, scen)
    q_des0 = scen.controller.setpoint(0.0) if q_des0 is None else np.asarray(q_des0, dtype=float)
    js = plant.joint_slice
    q = np.zeros(q_des0.shape[:-1] + (plant.dof,))
    q[..., js] = q_des0
    kp = scen.controller.kp
    if scen.base_mode == "floating":
        _, _, foot = forward_kinematics(plant, q)
        q[..., 1] = scen.ground.height - foot[..., 1]
    if not scen.start_at_equilibrium:
        return q, np.zeros_like(q)

    ft = scen.ft
    k_gen = np.array([ft.stiffness[0], ft.stiffness[2], ft.stiffness[1]])
    weight = plant.gravity * (plant.base_mass + sum(lk.mass for lk in plant.links))
    levers = plant._arrays.lengths
    for _ in range(iterations):
        g = gravity_vector(plant, q)
        if scen.base_mode == "fixed":
            q_new = q.copy()
            q_new[..., :3] = -g[..., :3] / k_gen
            q_new[..., js] = q_des0 - g[..., js] / kp
        else:
            Jf = point_jacobian(plant, q, levers)
            support = np.einsum("...cn,c->...n", Jf, np.array([0.0, weight]))
            q_new = q.copy()
            q_new[..., js] = q_des0 - (g[..., js] - support[..., js]) / kp
            foot = point_position(plant, q_new, levers)
            q_new[..., 1] += scen.ground.height - weight / scen.ground.stiffness - foot[..., 1]
        if np.max(np.abs(q_new - q)) < 1e-14:
            q = q_new
            break
        q = q_new
    return q, np.zeros_like(q)


def _simulate(model: ChainModel, scens: list[ScenarioConfig]) -> list[SimulationTrace]:
    batch = _Batch(model, scens)
    cfg = batch.cfg
    plant, est = batch.plant, batch.est_model
    N, n, B = plant.dof, model.n_links, batch.B
    js = plant.joint_slice
    T = len(batch.t)
    amap = ActuationMap.for_model(plant)
    gain = cfg.observer_gain_per_s
    dt = cfg.sample_period

    q0, qd0 = initial_state(model, cfg, batch.setpoint(0.0))
    y = np.concatenate([q0, qd0], axis=1)

    rec = {
        "q": np.zeros((B, T, N)),
        "qdot": np.zeros((B, T, N)),
        "tau_cmd": np.zeros((B, T, n)),
        "tau_sen": np.zeros((B, T, n)),
        "ft": np.zeros((B, T, 3)),
        "residual": np.zeros((B, T, N)),
        "link": np.zeros((B, T), dtype=int),
        "alpha": np.full((B, T), np.nan),
        "point": np.full((B, T, 2), np.nan),
        "force": np.full((B, T, 2), np.nan),
        "valid": np.zeros((B, T), dtype=bool),
        "clamped": np.zeros((B, T), dtype=bool),
        "degenerate": np.zeros((B, T), dtype=bool),
        "true_force": np.zeros((B, T, 2)),
        "true_point": np.full((B, T, 2), np.nan),
        "ground_force": np.zeros((B, T, 2)),
    }

    p_int = np.zeros((B, N))
    P0 = None
    for k in range(T):
        t = batch.t[k]
        q, qd = y[:, :N], y[:, N:]
        if not np.all(np.isfinite(y)):
            raise SimulationError(f"non-finite state at t={t:.4f} s in {[s.name for s in scens]}")
        scale = batch.force_scale(t)
        qdd, tau, force, G = batch.accel(q, qd, batch.setpoint(t), scale)
        tau_sen = tau + batch.torque_sigma[:, None] * np.stack([r.normal(size=n) for r in batch.rngs])
        noise = np.stack([r.normal(size=3) for r in batch.rngs]) * batch.sigma

        # sensor reading on the virtual base coordinates (Fx, Fz, My)
        known = None
        if batch.fixed:
            q_e, qd_e = q, qd
            gen = -(batch.k_gen * q[:, :3] + batch.d_gen * qd[:, :3])
            ft = gen[:, [0, 2, 1]] + noise
            tau_meas = tau_sen @ amap.B.T
            tau_meas[:, :3] += ft[:, [0, 2, 1]]
        else:
            q_e = _leg_coords(q, n)
            qd_e = _leg_coords(qd, n)
            qdd_e = _leg_coords(qdd, n)
            M_e, h_e = mass_and_bias(est, q_e, qd_e)
            J_c = point_jacobian(est, q_e, batch.levers)
            J_f = point_jacobian(est, q_e, batch.foot_levers)
            ext_gen = np.einsum("bcn,bc->bn", J_c, force)
            ground_gen = np.einsum("bcn,bc->bn", J_f, G)
            hip = h_e - ext_gen - ground_gen
            if cfg.hip_sensor_inertia:
                hip = hip + np.einsum("bnm,bm->bn", M_e, qdd_e)
            ft = hip[:, [0, 2, 1]] + noise
            known = ground_gen[:, [0, 2, 1]]
            Jf_plant = point_jacobian(plant, q, batch.foot_levers)
            tau_meas = tau_sen @ amap.B.T + np.einsum("bcn,bc->bn", Jf_plant, G)
            rec["ground_force"][:, k] = G

        # momentum observer, explicit Euler
        M, _ = mass_and_bias(plant, q, qd)
        C = coriolis_matrix(plant, q, qd)
        P = np.einsum("bnm,bm->bn", M, qd)
        if P0 is None:
            P0 = P.copy()
        u = np.einsum("bmn,bm->bn", C, qd) - gravity_vector(plant, q) + tau_meas
        r = gain * (P - p_int - P0)
        p_int = p_int + (u + r) * dt

        out = estimate_arrays(
            est,
            q_e,
            qd_e,
            tau_sen,
            ft,
            r[:, js],
            epsilon_res=cfg.epsilon_res,
            collinear_tol=cfg.collinear_tol,
            clamp_margin=cfg.clamp_margin,
            known_wrench=known,
        )

        rec["q"][:, k] = q
        rec["qdot"][:, k] = qd
        rec["tau_cmd"][:, k] = tau
        rec["tau_sen"][:, k] = tau_sen
        rec["ft"][:, k] = ft
        rec["residual"][:, k] = r
        for key in ("link", "alpha", "point", "force", "valid", "clamped", "degenerate"):
            rec[key][:, k] = out[key]
        rec["true_force"][:, k] = force
        active = scale > 0
        rec["true_point"][active, k] = point_position(plant, q[active], batch.levers[active])

        if k + 1 < T:
            # a diverging state is reported by the finiteness check above
            with np.errstate(over="ignore", invalid="ignore"):
                y = _rk4_interval(batch, t, y, cfg.substeps, cfg.step_s)

    traces = []
    for b, s in enumerate(scens):
        fields = {key: val[b] for key, val in rec.items()}
        traces.append(
            SimulationTrace(
                scenario=s,
                n_links=n,
                n_base=plant.n_base,
                t=batch.t.copy(),
                detected=fields["link"] > 0,
                **fields,
            )
        )
    return traces


def _leg_coords(v, n):
    """Floating ``[x, z, q...]`` to hip-rooted ``[x, 0, z, q...]``."""
    out = np.zeros(v.shape[:-1] + (n + 3,))
    out[..., 0] = v[..., 0]
    out[..., 2] = v[..., 1]
    out[..., 3:] = v[..., 2:]
    return out


def run_scenario(model: ChainModel, scen: ScenarioConfig) -> SimulationTrace:
    """Simulate one scenario; deterministic for a fixed seed."""
    return _simulate(model, [scen])[0]


def run_batch(model: ChainModel, scens, chunk_size=None) -> list[SimulationTrace]:
    """Simulate scenarios that share timing, mode and gains, vectorized."""
    scens = list(scens)
    if chunk_size is None:
        return _simulate(model, scens)
    out = []
    for i in range(0, len(scens), chunk_size):
        out.extend(_simulate(model, scens[i : i + chunk_size]))
    return out


# --- evaluation ----------------------------------------------------------------


def evaluation_mask(trace: SimulationTrace) -> np.ndarray:
    """Samples with active contact once detection has latched."""
    active = trace.contact_active
    hits = np.flatnonzero(active & trace.detected)
    mask = np.zeros_like(active)
    if hits.size:
        mask[hits[0] :] = True
    return mask & active


def evaluate_trace(trace: SimulationTrace, scen: ScenarioConfig | None = None) -> ErrorReport:
    """Mean and standard deviation of estimation errors during the contact.

    Force errors use every sample of the contact phase after detection has
    latched. Position errors skip samples the estimator flagged invalid,
    since those carry no location claim; their count is reported.
    """
    scen = scen or trace.scenario
    mask = evaluation_mask(trace)
    if not mask.any():
        raise ValueError(f"empty contact window in {scen.name!r}")
    located = mask & trace.valid
    df = trace.force[mask] - trace.true_force[mask]
    dp = 1e3 * (trace.point[located] - trace.true_point[located])

    def stats(v):
        if v.size == 0:
            return float("nan"), float("nan")
        return float(np.mean(v)), float(np.std(v))

    active = trace.contact_active
    onset = trace.t[np.flatnonzero(active)[0]]
    first = np.flatnonzero(active & trace.detected)
    latency = float(trace.t[first[0]] - onset)
    links = trace.link[mask]
    return ErrorReport(
        force_x=stats(df[:, 0]),
        force_z=stats(df[:, 1]),
        force_norm=stats(np.linalg.norm(df, axis=1)),
        pos_x_mm=stats(dp[:, 0]),
        pos_z_mm=stats(dp[:, 1]),
        pos_norm_mm=stats(np.linalg.norm(dp, axis=1)),
        n_samples=int(mask.sum()),
        detection_latency_s=latency,
        modal_link=int(np.bincount(links).argmax()),
        link_accuracy=float(np.mean(links == scen.contact_link)),
        n_invalid=int(np.sum(mask & ~trace.valid)),
        n_degenerate=int(np.sum(mask & trace.degenerate)),
    )


# --- configuration sweep --------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    """Grid of held poses, each probed by contacts on every link and alpha."""

    q1_range: tuple = (0.0, np.pi)
    q2_range: tuple = (0.0, np.pi)
    n_q1: int = 10
    n_q2: int = 10
    alphas: tuple = (0.25, 0.5, 0.75, 1.0)
    links: tuple = (1, 2)
    template: ScenarioConfig = field(
        default_factory=lambda: ScenarioConfig(
            name="sweep",
            force_magnitude_N=7.0,
            contact_start_s=0.05,
            contact_duration_s=1.0,
            sim_duration_s=1.05,
            step_s=5e-5,
            ft=VirtualFTConfig(sigma=(0.0, 0.0, 0.0)),
        )
    )
    chunk_size: int = 800
    workers: int = 1

    def __post_init__(self):
        if self.n_q1 < 1 or self.n_q2 < 1:
            raise ValueError("sweep grid must have at least one point per axis")
        if not self.alphas or not self.links:
            raise ValueError("sweep needs at least one alpha and one link")

    def grid(self):
        q1 = np.linspace(*self.q1_range, self.n_q1) if self.n_q1 > 1 else np.array([self.q1_range[0]])
        q2 = np.linspace(*self.q2_range, self.n_q2) if self.n_q2 > 1 else np.array([self.q2_range[0]])
        return q1, q2


@dataclass
class SweepResult:
    rows: list  # dicts: q1, q2, link, alpha, loc_err_mm, force_err_N, degenerate, link_ok
    cells: list  # dicts: q1, q2, worst loc/force error over the probes, degenerate

    def max_errors(self, include_degenerate=False):
        cells = [c for c in self.cells if include_degenerate or not c["degenerate"]]
        return (
            max(c["loc_err_mm"] for c in cells),
            max(c["force_err_N"] for c in cells),
        )

    @property
    def degenerate_cells(self):
        return [(c["q1"], c["q2"]) for c in self.cells if c["degenerate"]]


def _sweep_chunk(args):
    model, scens = args
    rows = []
    for trace in _simulate(model, scens):
        s = trace.scenario
        mask = evaluation_mask(trace)
        degenerate = bool(np.any(trace.degenerate & trace.contact_active & trace.detected))
        if mask.any():
            rep = evaluate_trace(trace)
            loc, frc, ok = rep.pos_norm_mm[0], rep.force_norm[0], rep.modal_link == s.contact_link
        else:
            loc, frc, ok = float("nan"), float("nan"), False
            degenerate = True
        q1, q2 = s.controller.waypoints[0][1]
        rows.append(
            dict(q1=q1, q2=q2, link=s.contact_link, alpha=s.alpha, loc_err_mm=loc, force_err_N=frc,
                 degenerate=degenerate, link_ok=ok)
        )
    return rows


def parametric_sweep(model: ChainModel, sweep: SweepConfig = SweepConfig()) -> SweepResult:
    """Hold each grid pose and probe it with every (link, alpha) contact.

    The per-cell figure is the worst mean error over the probes. Cells where
    any probe hit the collinear-force guard are flagged as degenerate.
    """
    q1s, q2s = sweep.grid()
    scens = []
    for q1 in q1s:
        for q2 in q2s:
            ctrl = replace(sweep.template.controller, waypoints=((0.0, (float(q1), float(q2))),))
            for link in sweep.links:
                for a in sweep.alphas:
                    scens.append(
                        replace(sweep.template, name=f"sweep_{q1:.3f}_{q2:.3f}_{link}_{a}",
                                controller=ctrl, contact_link=link, alpha=a)
                    )
    chunks = [(model, scens[i : i + sweep.chunk_size]) for i in range(0, len(scens), sweep.chunk_size)]
    if sweep.workers > 1:
        with ProcessPoolExecutor(max_workers=sweep.workers) as pool:
            parts = list(pool.map(_sweep_chunk, chunks))
    else:
        parts = [_sweep_chunk(c) for c in chunks]
    rows = [r for part in parts for r in part]

    cells = []
    per_cell = len(sweep.links) * len(sweep.alphas)
    for i in range(0, len(rows), per_cell):
        group = rows[i : i + per_cell]
        cells.append(
            dict(
                q1=group[0]["q1"],
                q2=group[0]["q2"],
                loc_err_mm=max(r["loc_err_mm"] for r in group),
                force_err_N=max(r["force_err_N"] for r in group),
                degenerate=any(r["degenerate"] for r in group),
                link_ok=all(r["link_ok"] for r in group),
            )
        )
    log.info("sweep finished: %d probes over %d cells", len(rows), len(cells))
    return SweepResult(rows=rows, cells=cells)
