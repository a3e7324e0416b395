"""Planar serial-chain rigid-body dynamics.

Frame and sign conventions
--------------------------
The chain moves in the world x-z plane, gravity acts along -z.

* Joint angles are relative. ``q_i = 0`` means link ``i`` is aligned with its
  parent (the first link then hangs straight down along -z). Positive joint
  rotation turns the link from -z towards +x, i.e. counterclockwise when the
  plane is drawn with x to the right and z up. With ``q1 = pi/2`` the thigh
  points along +x.
* The planar wedge is ``a ^ b = a_x b_z - a_z b_x``; it is the generalized force
  a force ``b`` at lever ``a`` produces on a joint angle.
* The virtual base rotation of :attr:`BaseMode.VIRTUAL_FT` is a right-handed
  rotation about +y, so its generalized force is the moment ``M_y = -(r ^ F)``
  reported by a force-torque sensor.

Generalized coordinates per base mode:

=================  =============================
``FIXED``          ``[q1, ..., qn]``
``FLOATING_XZ``    ``[x, z, q1, ..., qn]``
``VIRTUAL_FT``     ``[x, phi_y, z, q1, ..., qn]``
=================  =============================

All functions broadcast over leading batch dimensions of ``q`` and ``qdot``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np

GRAVITY = 9.81


class _ChainArrays(NamedTuple):
    lengths: np.ndarray
    coms: np.ndarray
    masses: np.ndarray
    inertias: np.ndarray
    angle_map: np.ndarray  # absolute link angles = angle_map @ q
    trans_map: np.ndarray  # base translation = trans_map @ q
    com_levers: np.ndarray
    M_const: np.ndarray


class BaseMode(str, enum.Enum):
    FIXED = "fixed"
    FLOATING_XZ = "floating_xz"
    VIRTUAL_FT = "virtual_ft"


class DimensionError(ValueError):
    """Raised when an input vector does not match the model's coordinate count."""


@dataclass(frozen=True)
class LinkParams:
    """Geometry and inertia of one link.

    Parameters
    ----------
    length : float
        Joint-to-joint length (m).
    com : float
        Distance from the proximal joint to the link COM along the link (m).
    mass : float
        Link mass (kg).
    inertia : float
        Rotational inertia about the COM, out-of-plane axis (kg m^2).
    """

    length: float
    com: float
    mass: float
    inertia: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"link length must be positive, got {self.length}")
        if not 0 <= self.com <= self.length:
            raise ValueError(f"com offset {self.com} outside [0, {self.length}]")
        if not self.mass > 0:
            raise ValueError(f"link mass must be positive, got {self.mass}")
        if not self.inertia >= 0:
            raise ValueError(f"link inertia must be non-negative, got {self.inertia}")


@dataclass(frozen=True)
class ChainModel:
    """Kinematic and inertial description of a planar leg.

    The base body sits at the first joint. Its mass only matters when the
    base can translate (``FLOATING_XZ`` and ``VIRTUAL_FT``); its rotational
    inertia only with the virtual base rotation, where it must be positive
    because that rotation and ``q1`` otherwise move the links identically.
    """

    links: tuple[LinkParams, ...]
    base_mass: float = 0.0
    base_inertia: float = 0.0
    base_mode: BaseMode = BaseMode.FIXED
    gravity: float = GRAVITY

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "base_mode", BaseMode(self.base_mode))
        if not self.links:
            raise ValueError("a chain needs at least one link")
        if self.base_mass < 0:
            raise ValueError(f"base mass must be non-negative, got {self.base_mass}")
        if self.base_inertia < 0:
            raise ValueError(f"base inertia must be non-negative, got {self.base_inertia}")

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_base(self) -> int:
        return {BaseMode.FIXED: 0, BaseMode.FLOATING_XZ: 2, BaseMode.VIRTUAL_FT: 3}[
            self.base_mode
        ]

    @property
    def dof(self) -> int:
        return self.n_base + self.n_links

    @property
    def joint_slice(self) -> slice:
        return slice(self.n_base, self.dof)

    def with_base(self, base_mode, base_mass=None, base_inertia=None) -> "ChainModel":
        """Same links, different base treatment."""
        mass = self.base_mass if base_mass is None else base_mass
        inertia = self.base_inertia if base_inertia is None else base_inertia
        return replace(self, base_mode=BaseMode(base_mode), base_mass=mass, base_inertia=inertia)

    @cached_property
    def _arrays(self):
        n, N = self.n_links, self.dof
        lengths = np.array([lk.length for lk in self.links])
        coms = np.array([lk.com for lk in self.links])
        masses = np.array([lk.mass for lk in self.links])
        inertias = np.array([lk.inertia for lk in self.links])

        # absolute link angle = angle_map @ q
        angle_map = np.zeros((n, N))
        for i in range(n):
            angle_map[i, self.n_base : self.n_base + i + 1] = 1.0
        # base translation = trans_map @ q
        trans_map = np.zeros((2, N))
        if self.base_mode is BaseMode.FLOATING_XZ:
            trans_map[0, 0] = trans_map[1, 1] = 1.0
        elif self.base_mode is BaseMode.VIRTUAL_FT:
            trans_map[0, 0] = trans_map[1, 2] = 1.0
            angle_map[:, 1] = -1.0

        # lever of link j's direction vector in the COM position of link i
        com_levers = np.tril(np.broadcast_to(lengths, (n, n)), k=-1) + np.diag(coms)

        # constant part of M: link and base rotational inertia, base translation
        M_const = angle_map.T @ (inertias[:, None] * angle_map)
        M_const += self.base_mass * trans_map.T @ trans_map
        if self.base_mode is BaseMode.VIRTUAL_FT:
            M_const[1, 1] += self.base_inertia
        return _ChainArrays(lengths, coms, masses, inertias, angle_map, trans_map, com_levers, M_const)


def table1_model(base_mode=BaseMode.FIXED) -> ChainModel:
    """The 2-link leg with the physical constants of the reference robot."""
    links = (
        LinkParams(length=0.205, com=0.171, mass=0.351, inertia=0.00207),
        LinkParams(length=0.215, com=0.031, mass=0.080, inertia=0.00030),
    )
    # base inertia is not part of the reference constants; 1e-3 kg m^2 is a
    # 0.738 kg housing of roughly 0.1 m x 0.1 m
    return ChainModel(links=links, base_mass=0.738, base_inertia=1e-3, base_mode=BaseMode(base_mode))


@dataclass(frozen=True)
class GeneralizedState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qdot = np.asarray(self.qdot, dtype=float)
        if q.shape != qdot.shape:
            raise DimensionError(f"q shape {q.shape} != qdot shape {qdot.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
            raise ValueError("state contains non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)


@dataclass(frozen=True)
class DynamicsTerms:
    M: np.ndarray
    C: np.ndarray
    g: np.ndarray


def wedge(a, b):
    """Planar wedge ``a_x b_z - a_z b_x`` over the last axis."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _check(model: ChainModel, *vectors):
    for v in vectors:
        if np.shape(v)[-1:] != (model.dof,):
            raise DimensionError(
                f"expected last dimension {model.dof} for {model.base_mode.value} "
                f"model, got shape {np.shape(v)}"
            )


def _directions(model, q):
    """Unit link directions ``u`` and their angle derivatives ``du``, shape (..., n, 2)."""
    angle_map = model._arrays.angle_map
    theta = q @ angle_map.T
    s, c = np.sin(theta), np.cos(theta)
    u = np.stack([s, -c], axis=-1)
    du = np.stack([c, s], axis=-1)
    return u, du


def _com_jacobians(model, q):
    """COM Jacobians of every link, shape (..., n, 2, N), plus directions."""
    angle_map = model._arrays.angle_map
    trans_map = model._arrays.trans_map
    levers = model._arrays.com_levers
    u, du = _directions(model, q)
    # (..., n, 2, N): direction derivative of link j times its angle row
    dir_jac = du[..., :, :, None] * angle_map[:, None, :]
    shape = dir_jac.shape
    flat = dir_jac.reshape(shape[:-3] + (shape[-3], shape[-2] * shape[-1]))
    jac = trans_map + (levers @ flat).reshape(shape)
    return jac, u, du


def mass_matrix(model: ChainModel, q) -> np.ndarray:
    """Joint-space inertia matrix ``M(q)``."""
    q = np.asarray(q, dtype=float)
    _check(model, q)
    masses, M_const = model._arrays.masses, model._arrays.M_const
    jac, _, _ = _com_jacobians(model, q)
    return np.einsum("i,...ikn,...ikm->...nm", masses, jac, jac) + M_const


def mass_matrix_derivatives(model: ChainModel, q) -> np.ndarray:
    """Partial derivatives ``dM[..., a, b, k] = dM_ab / dq_k``."""
    q = np.asarray(q, dtype=float)
    _check(model, q)
    masses = model._arrays.masses
    angle_map = model._arrays.angle_map
    levers = model._arrays.com_levers
    jac, u, _ = _com_jacobians(model, q)
    # d jac_i / d q_k = -sum_j lever_ij u_j A_j (x) A_jk
    djac = -np.einsum("ij,...jc,jn,jk->...icnk", levers, u, angle_map, angle_map)
    half = np.einsum("i,...icak,...icb->...abk", masses, djac, jac)
    return half + np.swapaxes(half, -3, -2)


def coriolis_matrix(model: ChainModel, q, qdot) -> np.ndarray:
    """Coriolis matrix built from Christoffel symbols of the first kind.

    This particular factorization satisfies ``Mdot = C + C^T``, which the
    momentum observer relies on.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    _check(model, q, qdot)
    dM = mass_matrix_derivatives(model, q)
    gamma = 0.5 * (dM + np.swapaxes(dM, -1, -2) - np.moveaxis(dM, -1, -3))
    return np.einsum("...abk,...k->...ab", gamma, qdot)


def coriolis_vector(model: ChainModel, q, qdot) -> np.ndarray:
    """``C(q, qdot) @ qdot`` without forming ``C``."""
    masses = model._arrays.masses
    angle_map = model._arrays.angle_map
    levers = model._arrays.com_levers
    jac, u, _ = _com_jacobians(model, q)
    omega = qdot @ angle_map.T
    # centripetal part of each COM acceleration
    bias = -np.einsum("ij,...jc->...ic", levers, u * (omega**2)[..., None])
    return np.einsum("i,...icn,...ic->...n", masses, jac, bias)


def gravity_vector(model: ChainModel, q) -> np.ndarray:
    """Gradient of the potential energy with respect to ``q``."""
    q = np.asarray(q, dtype=float)
    _check(model, q)
    masses = model._arrays.masses
    trans_map = model._arrays.trans_map
    jac, _, _ = _com_jacobians(model, q)
    g = model.gravity * np.einsum("i,...in->...n", masses, jac[..., 1, :])
    if model.base_mass:
        g = g + model.gravity * model.base_mass * trans_map[1]
    return g


def dynamics_terms(model: ChainModel, q, qdot) -> DynamicsTerms:
    return DynamicsTerms(
        M=mass_matrix(model, q),
        C=coriolis_matrix(model, q, qdot),
        g=gravity_vector(model, q),
    )


def base_position(model: ChainModel, q) -> np.ndarray:
    trans_map = model._arrays.trans_map
    return np.asarray(q, dtype=float) @ trans_map.T


def forward_kinematics(model: ChainModel, q):
    """World endpoints of every link.

    Returns
    -------
    p1, p2 : ndarray, shape (..., n, 2)
        Proximal and distal (x, z) endpoints of each link.
    foot : ndarray, shape (..., 2)
        Distal end of the last link.
    """
    q = np.asarray(q, dtype=float)
    _check(model, q)
    lengths = model._arrays.lengths
    u, _ = _directions(model, q)
    segs = lengths[:, None] * u
    p2 = base_position(model, q)[..., None, :] + np.cumsum(segs, axis=-2)
    p1 = p2 - segs
    return p1, p2, p2[..., -1, :]


def com_positions(model: ChainModel, q) -> np.ndarray:
    coms = model._arrays.coms
    p1, _, _ = forward_kinematics(model, q)
    u, _ = _directions(model, q)
    return p1 + coms[:, None] * u


def link_levers(model: ChainModel, link: int, alpha) -> np.ndarray:
    """Per-link lever lengths locating ``p1 + alpha (p2 - p1)`` on ``link`` (1-based).

    The point is ``base + sum_j levers_j u_j``; ``alpha`` may be an array, in
    which case the result has shape ``alpha.shape + (n,)``.
    """
    if not 1 <= link <= model.n_links:
        raise IndexError(f"link index {link} outside 1..{model.n_links}")
    lengths = model._arrays.lengths
    alpha = np.asarray(alpha, dtype=float)
    proximal = np.where(np.arange(model.n_links) < link - 1, lengths, 0.0)
    on_link = np.zeros(model.n_links)
    on_link[link - 1] = lengths[link - 1]
    return proximal + alpha[..., None] * on_link


def point_position(model: ChainModel, q, levers) -> np.ndarray:
    u, _ = _directions(model, np.asarray(q, dtype=float))
    return base_position(model, q) + np.einsum("...j,...jc->...c", levers, u)


def point_jacobian(model: ChainModel, q, levers) -> np.ndarray:
    """Jacobian (..., 2, N) of the material point described by ``levers``."""
    angle_map, trans_map = model._arrays.angle_map, model._arrays.trans_map
    _, du = _directions(model, np.asarray(q, dtype=float))
    weighted = np.asarray(levers, dtype=float)[..., :, None] * du
    return trans_map + np.swapaxes(weighted, -1, -2) @ angle_map


def contact_jacobian(model: ChainModel, q, link: int, alpha) -> np.ndarray:
    """Jacobian of the material point ``p1 + alpha (p2 - p1)`` on ``link``.

    ``link`` is 1-based. Returns shape (..., 2, N). Columns of joints distal
    to ``link`` are zero.
    """
    q = np.asarray(q, dtype=float)
    _check(model, q)
    return point_jacobian(model, q, link_levers(model, link, alpha))


def kinetic_energy(model: ChainModel, q, qdot) -> np.ndarray:
    M = mass_matrix(model, q)
    return 0.5 * np.einsum("...i,...ij,...j->...", qdot, M, qdot)


def potential_energy(model: ChainModel, q) -> np.ndarray:
    masses = model._arrays.masses
    z = com_positions(model, q)[..., 1]
    U = model.gravity * (z @ masses)
    if model.base_mass:
        U = U + model.gravity * model.base_mass * base_position(model, q)[..., 1]
    return U


def mass_and_bias(model: ChainModel, q, qdot):
    """``M`` and ``C qdot + g`` sharing one Jacobian evaluation (hot path)."""
    masses = model._arrays.masses
    angle_map = model._arrays.angle_map
    trans_map = model._arrays.trans_map
    levers = model._arrays.com_levers
    M_const = model._arrays.M_const
    jac, u, _ = _com_jacobians(model, q)
    n, N = len(masses), jac.shape[-1]
    # stack the x/z rows of all links; matmul beats einsum on small batches
    rows = jac.reshape(jac.shape[:-3] + (2 * n, N))
    mj = np.repeat(masses, 2)[:, None] * rows
    M = np.swapaxes(mj, -1, -2) @ rows + M_const
    omega = qdot @ angle_map.T
    bias = -(levers @ (u * (omega**2)[..., None]))
    bias[..., 1] += model.gravity
    h = (bias.reshape(bias.shape[:-2] + (1, 2 * n)) @ mj)[..., 0, :]
    if model.base_mass:
        h = h + model.gravity * model.base_mass * trans_map[1]
    return M, h


def forward_dynamics(model: ChainModel, state: GeneralizedState, tau, tau_ext=None) -> np.ndarray:
    """Generalized acceleration from ``M qdd + C qd + g + tau_ext = tau``.

    ``tau_ext`` follows the left-hand-side convention: a force ``F`` acting on
    the robot at a point with Jacobian ``J`` enters as ``tau_ext = -J^T F``.
    """
    q, qdot = state.q, state.qdot
    _check(model, q, qdot, tau)
    rhs = np.asarray(tau, dtype=float) - coriolis_vector(model, q, qdot) - gravity_vector(model, q)
    if tau_ext is not None:
        _check(model, tau_ext)
        rhs = rhs - tau_ext
    M = mass_matrix(model, q)
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular mass matrix at q={q}") from exc
