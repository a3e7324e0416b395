"""Contact force and location from a base force-torque sensor and the observer.

The base sensor sits on the virtual base coordinates ``[x, phi_y, z]`` of a
:attr:`~legcontact.dynamics.BaseMode.VIRTUAL_FT` model. Comparing its reading
with the quasi-static wrench predicted from the model leaves the wrench of the
unknown contact, ``F_u = w - F_b``. A planar moment balance about the base then
places the contact along the link picked by the observer.

``F_u`` is expressed like the applied contact: its force part is the force
acting on the leg and ``My`` is the right-handed moment about +y, which makes
``My + p_c ^ F_xz = 0`` hold for a contact at ``p_c`` relative to the base.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    BaseMode,
    ChainModel,
    GeneralizedState,
    base_position,
    coriolis_vector,
    forward_kinematics,
    gravity_vector,
    wedge,
)
from .observer import detect_collision, identify_links

COLLINEAR_TOL = 1e-3
CLAMP_MARGIN = 0.02

# generalized virtual coordinates are ordered (x, phi_y, z); wrenches (Fx, Fz, My)
_GEN_TO_WRENCH = [0, 2, 1]


class DegenerateGeometry(ValueError):
    """The contact force is (nearly) collinear with the identified link."""


@dataclass(frozen=True)
class BaseWrench:
    """Planar base wrench; fields may be scalars or equally shaped arrays."""

    Fx: float
    Fz: float
    My: float

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.Fx, self.Fz, self.My), axis=-1).astype(float)

    @classmethod
    def from_array(cls, a) -> "BaseWrench":
        a = np.asarray(a, dtype=float)
        return cls(a[..., 0], a[..., 1], a[..., 2])

    @classmethod
    def from_generalized(cls, v) -> "BaseWrench":
        """From generalized forces on ``(x, phi_y, z)``."""
        return cls.from_array(np.asarray(v, dtype=float)[..., _GEN_TO_WRENCH])

    def to_generalized(self) -> np.ndarray:
        return self.as_array()[..., _GEN_TO_WRENCH]

    def __sub__(self, other: "BaseWrench") -> "BaseWrench":
        return BaseWrench.from_array(self.as_array() - other.as_array())

    def __add__(self, other: "BaseWrench") -> "BaseWrench":
        return BaseWrench.from_array(self.as_array() + other.as_array())


@dataclass(frozen=True)
class ActuationMap:
    """``B`` (N x n) places joint torques in generalized space; ``S`` (3 x N) picks base rows."""

    B: np.ndarray
    S: np.ndarray

    @classmethod
    def for_model(cls, model: ChainModel) -> "ActuationMap":
        N, n = model.dof, model.n_links
        B = np.zeros((N, n))
        B[model.joint_slice, :] = np.eye(n)
        S = np.zeros((3, N))
        if model.base_mode is BaseMode.VIRTUAL_FT:
            S[:, :3] = np.eye(3)
        return cls(B=B, S=S)


@dataclass(frozen=True)
class ContactEstimate:
    link_index: int
    alpha: float
    point: np.ndarray
    force: np.ndarray
    valid: bool
    clamped: bool = False


@dataclass(frozen=True)
class EstimatorConfig:
    epsilon_res: float = 0.06
    collinear_tol: float = COLLINEAR_TOL
    clamp_margin: float = CLAMP_MARGIN


def _require_virtual(model):
    if model.base_mode is not BaseMode.VIRTUAL_FT:
        raise ValueError("contact estimation needs a model with virtual base joints")


def predicted_base_wrench(model: ChainModel, state: GeneralizedState, tau_sen, amap=None) -> BaseWrench:
    """Quasi-static base wrench ``w = S (C qdot + g - B tau_sen)``."""
    _require_virtual(model)
    amap = amap or ActuationMap.for_model(model)
    tau_sen = np.asarray(tau_sen, dtype=float)
    if tau_sen.shape[-1] != model.n_links:
        raise ValueError(f"expected {model.n_links} joint torques, got shape {tau_sen.shape}")
    gen = coriolis_vector(model, state.q, state.qdot) + gravity_vector(model, state.q)
    gen = gen - tau_sen @ amap.B.T
    return BaseWrench.from_generalized(gen @ amap.S.T)


def unexpected_wrench(w: BaseWrench, ft_reading: BaseWrench) -> BaseWrench:
    return w - ft_reading


def solve_alpha(model: ChainModel, q, links, F_u, collinear_tol=COLLINEAR_TOL):
    """Vectorized line-parameter solve.

    Parameters
    ----------
    q : ndarray, shape (..., N)
    links : int array, shape (...)
        1-based link indices.
    F_u : ndarray, shape (..., 3)
        Unexpected wrench as ``(Fx, Fz, My)``.

    Returns
    -------
    alpha, p1, p2, degenerate
        ``p1``/``p2`` are world endpoints of the chosen links; ``alpha`` is NaN
        where ``degenerate``.
    """
    q = np.asarray(q, dtype=float)
    F_u = np.asarray(F_u, dtype=float)
    links = np.asarray(links)
    p1_all, p2_all, _ = forward_kinematics(model, q)
    idx = (np.clip(links, 1, model.n_links) - 1)[..., None, None]
    p1 = np.take_along_axis(p1_all, idx, axis=-2)[..., 0, :]
    p2 = np.take_along_axis(p2_all, idx, axis=-2)[..., 0, :]
    base = base_position(model, q)
    force = F_u[..., :2]
    seg = p2 - p1
    den = wedge(seg, force)
    scale = np.linalg.norm(seg, axis=-1) * np.linalg.norm(force, axis=-1)
    degenerate = ~(np.abs(den) >= collinear_tol * scale) | ~(scale > 0)
    safe = np.where(degenerate, 1.0, den)
    alpha = -(F_u[..., 2] + wedge(p1 - base, force)) / safe
    return np.where(degenerate, np.nan, alpha), p1, p2, degenerate


def localize_contact(
    model: ChainModel,
    q,
    link_index: int,
    F_u: BaseWrench,
    collinear_tol=COLLINEAR_TOL,
    clamp_margin=CLAMP_MARGIN,
) -> ContactEstimate:
    """Place the contact on ``link_index`` by moment balance about the base.

    Raises
    ------
    DegenerateGeometry
        If the force is collinear with the link within ``collinear_tol``.
    """
    _require_virtual(model)
    if not 1 <= link_index <= model.n_links:
        raise IndexError(f"link index {link_index} outside 1..{model.n_links}")
    wrench = F_u.as_array()
    alpha, p1, p2, degenerate = solve_alpha(model, q, link_index, wrench, collinear_tol)
    if degenerate:
        raise DegenerateGeometry(
            f"force {wrench[:2]} is collinear with link {link_index} (tol {collinear_tol})"
        )
    alpha = float(alpha)
    valid = 0.0 <= alpha <= 1.0
    clamped = False
    if not valid and -clamp_margin <= alpha <= 1.0 + clamp_margin:
        alpha = min(max(alpha, 0.0), 1.0)
        valid = clamped = True
    return ContactEstimate(
        link_index=link_index,
        alpha=alpha,
        point=p1 + alpha * (p2 - p1),
        force=wrench[:2].copy(),
        valid=valid,
        clamped=clamped,
    )


def estimate_arrays(
    model: ChainModel,
    q,
    qdot,
    tau_sen,
    ft_reading,
    joint_residual,
    epsilon_res=0.06,
    collinear_tol=COLLINEAR_TOL,
    clamp_margin=CLAMP_MARGIN,
    known_wrench=None,
) -> dict:
    """Batched :func:`estimate_contact` on plain arrays.

    ``ft_reading`` and ``known_wrench`` are ``(..., 3)`` arrays ordered
    ``(Fx, Fz, My)``; ``joint_residual`` holds only the joint entries. Samples
    without a detection get ``link = 0`` and NaN estimates.

    Returns
    -------
    dict
        ``link, alpha, point, force, valid, clamped, degenerate`` arrays.
    """
    _require_virtual(model)
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    links = identify_links(joint_residual, epsilon_res)
    detected = links > 0
    gen = coriolis_vector(model, q, qdot) + gravity_vector(model, q)
    w = gen[..., :3][..., _GEN_TO_WRENCH]
    # joint torques have no component on the virtual coordinates
    F_u = w - np.asarray(ft_reading, dtype=float)
    if known_wrench is not None:
        F_u = F_u - np.asarray(known_wrench, dtype=float)
    alpha, p1, p2, degenerate = solve_alpha(model, q, links, F_u, collinear_tol)
    degenerate = degenerate & detected
    inside = (alpha >= 0.0) & (alpha <= 1.0)
    near = (alpha >= -clamp_margin) & (alpha <= 1.0 + clamp_margin)
    clamped = near & ~inside
    alpha = np.where(clamped, np.clip(alpha, 0.0, 1.0), alpha)
    valid = near & detected
    alpha = np.where(detected & ~degenerate, alpha, np.nan)
    point = p1 + alpha[..., None] * (p2 - p1)
    force = np.where(detected[..., None], F_u[..., :2], np.nan)
    return dict(
        link=links,
        alpha=alpha,
        point=point,
        force=force,
        valid=valid,
        clamped=clamped & detected,
        degenerate=degenerate,
    )


def estimate_contact(
    model: ChainModel,
    state: GeneralizedState,
    tau_sen,
    ft_reading: BaseWrench,
    residual,
    config: EstimatorConfig = EstimatorConfig(),
    known_wrench: BaseWrench | None = None,
) -> ContactEstimate | None:
    """Full pipeline: threshold, link pick, wrench fusion, localization.

    ``residual`` covers all coordinates of ``model``; only its joint block is
    used for detection. ``known_wrench`` removes the base wrench of external
    forces that are measured separately (e.g. a stance foot).
    """
    _require_virtual(model)
    joints = np.asarray(residual, dtype=float)[model.joint_slice]
    if not detect_collision(joints, config.epsilon_res):
        return None
    link = int(identify_links(joints, config.epsilon_res))
    F_u = unexpected_wrench(predicted_base_wrench(model, state, tau_sen), ft_reading)
    if known_wrench is not None:
        F_u = F_u - known_wrench
    return localize_contact(model, state.q, link, F_u, config.collinear_tol, config.clamp_margin)
