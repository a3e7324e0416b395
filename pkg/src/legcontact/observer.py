"""Generalized-momentum residual observer and collision link identification.

The observer integrates the predicted momentum rate
``u = C^T qdot - g + tau_sen`` with explicit Euler steps and compares it with
the measured momentum ``P = M qdot``. Its residual obeys the first-order law
``rdot = K (tau_app - r)`` where ``tau_app = -tau_ext`` is the generalized
force that external contacts apply to the robot (``J^T F`` for a force ``F``
on the robot).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import ChainModel, GeneralizedState, coriolis_matrix, gravity_vector, mass_matrix

DEFAULT_GAIN = 50.0
DEFAULT_THRESHOLD = 0.06


@dataclass(frozen=True)
class ObserverConfig:
    """Observer gain (1/s per coordinate), detection threshold and period (s)."""

    gain: np.ndarray
    epsilon_res: float = DEFAULT_THRESHOLD
    dt: float = 1e-3

    def __post_init__(self):
        gain = np.atleast_1d(np.asarray(self.gain, dtype=float))
        if np.any(gain <= 0):
            raise ValueError("observer gains must be positive")
        if self.epsilon_res <= 0:
            raise ValueError("epsilon_res must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "gain", gain)

    @classmethod
    def uniform(cls, dof, gain=DEFAULT_GAIN, epsilon_res=DEFAULT_THRESHOLD, dt=1e-3):
        return cls(gain=np.full(dof, float(gain)), epsilon_res=epsilon_res, dt=dt)


@dataclass(frozen=True)
class ObserverState:
    p_int: np.ndarray
    P0: np.ndarray
    r: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class DetectionResult:
    detected: bool
    link_index: int | None
    residual: np.ndarray


def observer_init(model: ChainModel, state0: GeneralizedState, config: ObserverConfig) -> ObserverState:
    if config.gain.shape[-1] not in (1, model.dof):
        raise ValueError(f"gain has {config.gain.shape[-1]} entries, model has {model.dof} coordinates")
    P0 = mass_matrix(model, state0.q) @ state0.qdot[..., None]
    P0 = P0[..., 0]
    zeros = np.zeros_like(P0)
    return ObserverState(p_int=zeros, P0=P0, r=zeros.copy(), t=0.0)


def observer_step(
    state: ObserverState,
    model: ChainModel,
    meas: GeneralizedState,
    tau_sen,
    config: ObserverConfig,
):
    """Advance the observer by one period.

    ``tau_sen`` is the measured generalized force over all ``N`` coordinates;
    unmeasured (virtual or unactuated) coordinates are zero-padded by the
    caller. Returns ``(new_state, r)``.
    """
    q, qdot = meas.q, meas.qdot
    tau_sen = np.asarray(tau_sen, dtype=float)
    if tau_sen.shape != qdot.shape or q.shape[-1] != model.dof:
        raise ValueError(f"tau_sen shape {tau_sen.shape} does not match state {qdot.shape}")
    if not np.all(np.isfinite(tau_sen)):
        raise ValueError("non-finite measured torque")

    M = mass_matrix(model, q)
    C = coriolis_matrix(model, q, qdot)
    P = (M @ qdot[..., None])[..., 0]
    u = (np.swapaxes(C, -1, -2) @ qdot[..., None])[..., 0] - gravity_vector(model, q) + tau_sen

    r = config.gain * (P - state.p_int - state.P0)
    p_int = state.p_int + (u + r) * config.dt
    return replace(state, p_int=p_int, r=r, t=state.t + config.dt), r


def detect_collision(r, epsilon_res) -> bool | np.ndarray:
    """True where the infinity norm of the residual exceeds the threshold."""
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite residual")
    return np.max(np.abs(r), axis=-1) > epsilon_res


def identify_links(r, epsilon_res, joint_offset=0) -> np.ndarray:
    """Vectorized link identification; returns 0 where nothing exceeds the threshold."""
    joints = np.abs(np.asarray(r, dtype=float)[..., joint_offset:]) > epsilon_res
    n = joints.shape[-1]
    # highest 1-based index above threshold
    ranks = np.where(joints, np.arange(1, n + 1), 0)
    return ranks.max(axis=-1)


def identify_link(r, epsilon_res, n_joints=None, joint_offset=0) -> int:
    """Contacted link: the highest real joint whose residual exceeds the threshold.

    Parameters
    ----------
    r : array_like
        Residual over all generalized coordinates.
    epsilon_res : float
        Detection threshold.
    n_joints : int, optional
        Number of real joints; defaults to ``len(r) - joint_offset``.
    joint_offset : int
        Number of leading base coordinates to skip.

    Returns
    -------
    int
        1-based link index.
    """
    r = np.asarray(r, dtype=float)
    if n_joints is not None and r.shape[-1] - joint_offset != n_joints:
        raise ValueError(f"residual has {r.shape[-1] - joint_offset} joint entries, expected {n_joints}")
    c = int(identify_links(r, epsilon_res, joint_offset))
    if c == 0:
        raise ValueError("no joint residual exceeds the threshold")
    return c


def detect(r, epsilon_res, joint_offset=0) -> DetectionResult:
    joints = np.asarray(r, dtype=float)[joint_offset:]
    if detect_collision(joints, epsilon_res):
        return DetectionResult(True, identify_link(r, epsilon_res, joint_offset=joint_offset), joints)
    return DetectionResult(False, None, joints)
