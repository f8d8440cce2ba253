"""Rotations, cable geometry, structure matrix, and arm-chain kinematics.

All heavy functions broadcast over leading batch axes: ``q`` of shape
``(..., nq)`` produces rotation stacks of shape ``(..., 3, 3)`` and so on.
The generalized coordinates are ordered ``[p_mx, p_my, p_mz, alpha, beta,
gamma, theta_1 .. theta_m]`` with the Euler angles always stored as
(angle about X, angle about Y, angle about Z) regardless of the
convention's application order.

Angular-velocity referencing: the platform body rate ``omega_b`` satisfies
``skew(omega_b) = R^T dR/dt``; the world rate is ``R @ omega_b``.  The
structure matrix pairs cable-length rates with the world-referenced twist
``[v; R omega_b]``; both pairings are exercised by finite-difference tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, SingularityError
from .model import RobotModel

AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}

EULER_SINGULARITY_EPS = 1e-6   # rad margin on the middle angle vs +-pi/2
CABLE_LENGTH_EPS = 1e-9        # m; shorter cables are degenerate


def basic_rotation(axis: int, angle) -> np.ndarray:
    """Rotation about a coordinate axis (0=X, 1=Y, 2=Z); batched over angle."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    R = np.zeros(angle.shape + (3, 3))
    i, j = (axis + 1) % 3, (axis + 2) % 3
    R[..., axis, axis] = 1.0
    R[..., i, i] = c
    R[..., j, j] = c
    R[..., j, i] = s
    R[..., i, j] = -s
    return R


def rotation(euler, convention: str = "XYZ") -> np.ndarray:
    """Platform rotation matrix: product of axis rotations in convention order.

    ``euler`` holds (angle about X, angle about Y, angle about Z); the
    convention string gives the order in which the axis rotations are
    composed, e.g. ``"XYZ"`` -> R_x(a) @ R_y(b) @ R_z(c).
    """
    euler = np.asarray(euler, dtype=float)
    axes = [AXIS_INDEX[c] for c in convention]
    R = basic_rotation(axes[0], euler[..., axes[0]])
    for ax in axes[1:]:
        R = R @ basic_rotation(ax, euler[..., ax])
    return R


def _middle_angle(euler, convention: str):
    return np.asarray(euler, dtype=float)[..., AXIS_INDEX[convention[1]]]


def check_euler_regular(euler, convention: str = "XYZ", eps: float = EULER_SINGULARITY_EPS):
    """Raise SingularityError when the middle angle is within eps of +-pi/2."""
    mid = _middle_angle(euler, convention)
    if np.any(np.abs(np.abs(mid) - np.pi / 2) < eps):
        raise SingularityError(
            f"middle Euler angle within {eps:g} rad of +-pi/2 for convention {convention}"
        )


def euler_rate_jacobian(euler, convention: str = "XYZ") -> np.ndarray:
    """Matrix E with omega_body = E @ euler_rates (rates axis-ordered).

    Columns are the body-frame directions of the three elementary rotation
    axes; column for the first-applied axis is (R2 R3)^T e1, for the second
    R3^T e2, for the last e3.
    """
    euler = np.asarray(euler, dtype=float)
    a1, a2, a3 = (AXIS_INDEX[c] for c in convention)
    R2 = basic_rotation(a2, euler[..., a2])
    R3 = basic_rotation(a3, euler[..., a3])
    E = np.zeros(euler.shape[:-1] + (3, 3))
    e = np.eye(3)
    E[..., :, a1] = np.swapaxes(R2 @ R3, -1, -2) @ e[a1]
    E[..., :, a2] = np.swapaxes(R3, -1, -2) @ e[a2]
    E[..., :, a3] = e[a3]
    return E


def euler_rates_to_omega(euler, euler_rates, convention: str = "XYZ") -> np.ndarray:
    """Body-frame angular velocity from Euler angle rates.

    Raises SingularityError at gimbal lock, where the inverse mapping
    ceases to exist.
    """
    check_euler_regular(euler, convention)
    E = euler_rate_jacobian(euler, convention)
    return (E @ np.asarray(euler_rates, float)[..., None])[..., 0]


@dataclass(frozen=True)
class Pose:
    """Platform position and orientation (Euler angles, axis-ordered)."""

    p: np.ndarray
    euler: np.ndarray
    convention: str = "XYZ"

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(3)
        e = np.asarray(self.euler, dtype=float).reshape(3)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "euler", e)
        check_euler_regular(e, self.convention)

    @classmethod
    def from_q(cls, q, convention: str = "XYZ") -> "Pose":
        q = np.asarray(q, dtype=float)
        return cls(q[0:3], q[3:6], convention)

    def rotation(self) -> np.ndarray:
        return rotation(self.euler, self.convention)


@dataclass(frozen=True)
class CableGeometry:
    """Per-cable line vectors (anchor -> platform attachment), lengths, units."""

    vectors: np.ndarray   # (N, 3)
    lengths: np.ndarray   # (N,)
    units: np.ndarray     # (N, 3), vectors / lengths


def _cable_vectors(model: RobotModel, p, R) -> np.ndarray:
    """Batched line vectors: p + R r_i - a_i, shape (..., N, 3)."""
    r = model.platform.r_body                      # (N,3)
    a = model.platform.a_world
    attach = np.asarray(p, float)[..., None, :] + np.einsum("...ij,nj->...ni", R, r)
    return attach - a


def cable_geometry(model: RobotModel, pose: Pose) -> CableGeometry:
    """Cable line geometry at a pose.

    Vectors run from the static anchor to the platform attachment point, so
    a positive tension pulls the platform along ``-units``.  Raises
    GeometryError (naming the 1-based cable) when a length collapses.
    """
    vec = _cable_vectors(model, pose.p, pose.rotation())
    lengths = np.linalg.norm(vec, axis=-1)
    if np.any(lengths <= CABLE_LENGTH_EPS):
        bad = int(np.argmax(lengths <= CABLE_LENGTH_EPS)) + 1
        raise GeometryError(f"cable {bad} has near-zero length ({lengths[bad - 1]:.3e} m)")
    return CableGeometry(vectors=vec, lengths=lengths, units=vec / lengths[..., None])


def _structure_matrix_raw(model: RobotModel, p, R) -> tuple[np.ndarray, np.ndarray]:
    """Batched (A_m, lengths): columns [Lhat_i ; (R r_i) x Lhat_i]."""
    vec = _cable_vectors(model, p, R)
    lengths = np.linalg.norm(vec, axis=-1)
    units = vec / lengths[..., None]
    rho = np.einsum("...ij,nj->...ni", R, model.platform.r_body)
    top = np.swapaxes(units, -1, -2)               # (...,3,N)
    bottom = np.swapaxes(_cross(rho, units), -1, -2)
    return np.concatenate([top, bottom], axis=-2), lengths


def structure_matrix(model: RobotModel, pose: Pose) -> np.ndarray:
    """6xN matrix A_m with columns [Lhat_i ; (R r_i) x Lhat_i].

    Satisfies the rate identity Ldot = A_m^T [v; R omega_b].  Because the
    columns use the anchor->platform line direction, the wrench that
    positive tensions apply to the platform is ``-A_m T``; use
    :func:`tension_wrench_matrix` for the actuation map.
    """
    cable_geometry(model, pose)  # degenerate-length check
    A, _ = _structure_matrix_raw(model, pose.p, pose.rotation())
    return A


def tension_wrench_matrix(model: RobotModel, pose: Pose) -> np.ndarray:
    """6xN map from cable tensions to the platform wrench [F; M] (world).

    Columns are [u_i ; (R r_i) x u_i] with u_i the unit pull direction
    (attachment -> anchor), i.e. the negative of :func:`structure_matrix`.
    """
    return -structure_matrix(model, pose)


def cable_rates(model: RobotModel, pose: Pose, twist) -> np.ndarray:
    """Cable length rates for a world twist [v_m; R omega_b] (6-vector)."""
    A = structure_matrix(model, pose)
    return A.T @ np.asarray(twist, dtype=float)


@dataclass(frozen=True)
class LinkKinematics:
    """Positions, rotations, and velocities of every arm link.

    ``p_joint[j]`` is the arm base for j=0 and the outboard end of link j
    (the next joint, or the tip for the last link) for j >= 1.  Angular
    velocities are expressed in each link's own frame and are identical
    for the link body and its outboard joint.
    """

    p_joint: np.ndarray     # (m+1, 3) world
    p_com: np.ndarray       # (m, 3) world
    rotations: np.ndarray   # (m+1, 3, 3): R_g^{a0} .. R_g^{am}
    v_com: np.ndarray       # (m, 3) world
    omega: np.ndarray       # (m, 3) link body frame
    tip: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "tip", self.p_joint[-1])


def arm_chain(model: RobotModel, q: np.ndarray) -> dict:
    """Forward pass of the platform + arm chain; batched over leading axes.

    Returns rotations, joint/COM positions, world joint axes, and the
    Euler-rate Jacobian needed by the velocity and mass-matrix assembly.
    """
    q = np.asarray(q, dtype=float)
    batch = q.shape[:-1]
    p_m = q[..., 0:3]
    euler = q[..., 3:6]
    conv = model.euler_convention
    R_gm = rotation(euler, conv)
    E_b = euler_rate_jacobian(euler, conv)
    W_euler = R_gm @ E_b                     # world directions of euler-rate axes
    m = model.n_arm

    R_ga = np.zeros(batch + (m + 1, 3, 3))
    p_joint = np.zeros(batch + (m + 1, 3))
    p_com = np.zeros(batch + (m, 3))
    axis_world = np.zeros(batch + (m, 3))

    R_ga[..., 0, :, :] = R_gm @ model.mount_rotation
    p_joint[..., 0, :] = p_m + (R_gm @ model.mount_offset)
    for j, link in enumerate(model.arm, start=1):
        theta = q[..., 5 + j]
        ax = link.axis_index
        joint_off = np.broadcast_to(link.joint_offset, batch + (3,)).copy()
        com_off = np.broadcast_to(link.com_offset, batch + (3,)).copy()
        if link.joint_kind == "revolute":
            R_rel = basic_rotation(ax, theta)
        else:
            R_rel = np.broadcast_to(np.eye(3), batch + (3, 3))
            joint_off[..., ax] += theta
            com_off[..., ax] += theta
        R_here = R_ga[..., j - 1, :, :] @ R_rel
        R_ga[..., j, :, :] = R_here
        axis_world[..., j - 1, :] = R_here[..., :, ax]
        p_joint[..., j, :] = p_joint[..., j - 1, :] + (R_here @ joint_off[..., None])[..., 0]
        p_com[..., j - 1, :] = p_joint[..., j - 1, :] + (R_here @ com_off[..., 0:3, None])[..., 0]
    return {
        "p_m": p_m,
        "R_gm": R_gm,
        "E_b": E_b,
        "W_euler": W_euler,
        "R_ga": R_ga,
        "p_joint": p_joint,
        "p_com": p_com,
        "axis_world": axis_world,
    }


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product on trailing axes without np.cross's dispatch overhead."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _skew(v: np.ndarray) -> np.ndarray:
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1] = -v[..., 2]
    S[..., 0, 2] = v[..., 1]
    S[..., 1, 0] = v[..., 2]
    S[..., 1, 2] = -v[..., 0]
    S[..., 2, 0] = -v[..., 1]
    S[..., 2, 1] = v[..., 0]
    return S


def velocity_jacobians(model: RobotModel, q: np.ndarray, chain: dict | None = None):
    """Geometric Jacobians of every body, batched.

    Returns ``(Jv, Jw_body, chain)`` where ``Jv[..., j, :, :]`` maps qdot to
    the world COM velocity of link j+1 and ``Jw_body`` to its body-frame
    angular velocity.  The platform Jacobians are implicit: v_m = qdot[0:3],
    omega_b = E_b @ qdot[3:6].
    """
    q = np.asarray(q, dtype=float)
    batch = q.shape[:-1]
    nq = q.shape[-1]
    m = model.n_arm
    if chain is None:
        chain = arm_chain(model, q)
    Jv = np.zeros(batch + (m, 3, nq))
    Jw = np.zeros(batch + (m, 3, nq))
    W = chain["W_euler"]
    for j in range(1, m + 1):
        d = chain["p_com"][..., j - 1, :] - chain["p_m"]
        Jv[..., j - 1, :, 0:3] = np.eye(3)
        Jv[..., j - 1, :, 3:6] = -_skew(d) @ W
        Jw[..., j - 1, :, 3:6] = W
        for k in range(1, j + 1):
            link = model.arm[k - 1]
            col = 5 + k
            z = chain["axis_world"][..., k - 1, :]
            if link.joint_kind == "revolute":
                arm_vec = chain["p_com"][..., j - 1, :] - chain["p_joint"][..., k - 1, :]
                Jv[..., j - 1, :, col] = _cross(z, arm_vec)
                Jw[..., j - 1, :, col] = z
            else:
                Jv[..., j - 1, :, col] = z
        R_j = chain["R_ga"][..., j, :, :]
        Jw[..., j - 1, :, :] = np.swapaxes(R_j, -1, -2) @ Jw[..., j - 1, :, :]
    return Jv, Jw, chain


def link_kinematics(model: RobotModel, q, qdot) -> LinkKinematics:
    """Positions, rotations, COM velocities, and body angular rates.

    Velocities are analytic (geometric Jacobians), not finite differences.
    Raises SingularityError at gimbal lock.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    check_euler_regular(q[3:6], model.euler_convention)
    Jv, Jw, chain = velocity_jacobians(model, q)
    return LinkKinematics(
        p_joint=chain["p_joint"],
        p_com=chain["p_com"],
        rotations=chain["R_ga"],
        v_com=Jv @ qdot,
        omega=Jw @ qdot,
    )
