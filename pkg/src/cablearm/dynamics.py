"""Energies, equations of motion, and inverse/forward dynamics.

The generalized coordinates are ``q = [p_m, euler, theta_1..theta_m]`` with
``qdot`` their literal time derivatives (Euler-angle rates, not body
rates).  The mass matrix is assembled analytically from geometric
Jacobians; the Coriolis matrix comes from Christoffel symbols of
finite-differenced ``M``, which guarantees ``Mdot = C + C^T`` and exact
energy bookkeeping up to the differencing error.

Wrench pairing: a world wrench ``w = [F; M]`` maps to generalized forces
through ``S(q)^T w`` with ``S = blkdiag(I, R E_b)``, the Jacobian from
``qdot`` to the world twist.  At zero Euler angles ``S`` is the identity,
so the familiar form "platform force block = A_m T" holds there verbatim.
The rotational platform inertia appears here as ``E_b^T I_m E_b`` (the
energy form); the equivalent world-frame Newton-Euler form
``(R I R^T)(R omega_dot) + ...`` is recovered by the same change of
variables and both are exercised by tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ValidationError
from .kinematics import (
    Pose,
    _cable_vectors,
    check_euler_regular,
    euler_rate_jacobian,
    rotation,
    tension_wrench_matrix,
    velocity_jacobians,
)
from .model import QuadrotorParams, RobotModel

CONDITION_LIMIT = 1e12
_FD_SCALE = 1e-6


@dataclass(frozen=True)
class DynTerms:
    """Inertia matrix, Coriolis matrix, and gravity vector at one state."""

    M: np.ndarray
    C: np.ndarray
    G: np.ndarray


def mass_matrix(model: RobotModel, q) -> np.ndarray:
    """Symmetric positive-definite inertia matrix M(q); batched."""
    M, _, _ = _mass_gravity(model, np.asarray(q, dtype=float))
    return M


def gravity_vector(model: RobotModel, q) -> np.ndarray:
    """Gradient of the gravitational potential (cable elasticity excluded:
    cable forces enter the equations of motion as inputs)."""
    _, G, _ = _mass_gravity(model, np.asarray(q, dtype=float))
    return G


def _mass_gravity(model: RobotModel, q: np.ndarray):
    """Batched (M, G, chain) from one Jacobian pass."""
    batch = q.shape[:-1]
    nq = q.shape[-1]
    Jv, Jw, chain = velocity_jacobians(model, q)
    M = np.zeros(batch + (nq, nq))
    M[..., 0:3, 0:3] = model.platform.mass * np.eye(3)
    E = chain["E_b"]
    M[..., 3:6, 3:6] = np.swapaxes(E, -1, -2) @ model.platform.inertia @ E
    G = np.zeros(batch + (nq,))
    G[..., 2] = model.platform.mass * model.gravity
    for j, link in enumerate(model.arm):
        Jvj = Jv[..., j, :, :]
        Jwj = Jw[..., j, :, :]
        M += link.mass * np.swapaxes(Jvj, -1, -2) @ Jvj
        M += np.swapaxes(Jwj, -1, -2) @ link.inertia @ Jwj
        G += model.gravity * link.mass * Jvj[..., 2, :]
    return M, G, chain


def energies(model: RobotModel, q, qdot, L0) -> tuple[float, float]:
    """Total kinetic and potential energy (gravity datum at z = 0).

    Potential energy includes the elastic term 0.5 (L-L0)^T K_c (L-L0)
    with per-cable stiffness EA_i / L0_i.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    L0 = np.asarray(L0, dtype=float)
    if L0.shape != (model.n_cables,):
        raise ValidationError(f"L0 must have length {model.n_cables}")
    if model.n_cables and np.any(L0 <= 0):
        raise ValidationError("unstretched cable lengths must be positive")
    M, G, chain = _mass_gravity(model, q)
    ke = 0.5 * qdot @ M @ qdot
    ve = model.platform.mass * model.gravity * q[2]
    for j, link in enumerate(model.arm):
        ve += link.mass * model.gravity * chain["p_com"][j, 2]
    if model.n_cables:
        L = np.linalg.norm(_cable_vectors(model, q[0:3], chain["R_gm"]), axis=-1)
        kc = model.platform.axial_stiffness / L0
        ve += 0.5 * np.sum(kc * (L - L0) ** 2)
    return float(ke), float(ve)


def _dynamics_core(model: RobotModel, q: np.ndarray, qdot: np.ndarray):
    """Batched (M, G, h) with h = C qd, from one stacked chain pass.

    The Coriolis force uses h = Mdot qd - 0.5 grad_q(qd^T M qd): one
    directional difference of M along qd plus a kinetic-energy gradient,
    identical to the Christoffel construction.  All 3 + 2 nq evaluation
    points go through a single batched Jacobian pass.
    """
    batch = q.shape[:-1]
    nq = q.shape[-1]
    scale = _FD_SCALE * np.maximum(1.0, np.abs(q))            # (..., nq)
    s_dir = (_FD_SCALE * np.maximum(1.0, np.max(np.abs(q), axis=-1))
             / np.maximum(np.max(np.abs(qdot), axis=-1), 1e-30))  # (...,)
    pert_dir = s_dir[..., None] * qdot

    # Stacked points: [q, q+du, q-du, q+h_i e_i ..., q-h_i e_i ...]
    pts = np.empty(batch + (3 + 2 * nq, nq))
    pts[..., 0, :] = q
    pts[..., 1, :] = q + pert_dir
    pts[..., 2, :] = q - pert_dir
    eye = np.eye(nq)
    steps = scale[..., None, :] * eye                         # (..., nq, nq)
    pts[..., 3:3 + nq, :] = q[..., None, :] + steps
    pts[..., 3 + nq:, :] = q[..., None, :] - steps
    Mb, Gb, _ = _mass_gravity(model, pts)

    M = Mb[..., 0, :, :]
    G = Gb[..., 0, :]
    Mdot = (Mb[..., 1, :, :] - Mb[..., 2, :, :]) / (2.0 * s_dir[..., None, None])
    first = (Mdot @ qdot[..., None])[..., 0]
    quad = np.einsum("...i,...kij,...j->...k", qdot, Mb[..., 3:, :, :], qdot)
    grad = (quad[..., :nq] - quad[..., nq:]) / (2.0 * scale)
    return M, G, first - 0.5 * grad


def _coriolis_force(model: RobotModel, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    return _dynamics_core(model, q, qdot)[2]


def coriolis_force(model: RobotModel, q, qdot) -> np.ndarray:
    """C(q, qdot) @ qdot for a single state."""
    return _coriolis_force(model, np.asarray(q, float), np.asarray(qdot, float))


def dyn_terms(model: RobotModel, q, qdot) -> DynTerms:
    """Full (M, C, G) with C from Christoffel symbols of finite-differenced M.

    Satisfies M = M^T, M positive definite away from singularities, and
    Mdot = C + C^T to differencing accuracy.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    check_euler_regular(q[3:6], model.euler_convention)
    nq = q.shape[-1]
    M, G, _ = _mass_gravity(model, q)
    scale = _FD_SCALE * np.maximum(1.0, np.abs(q))
    pts = np.concatenate([q + np.diag(scale), q - np.diag(scale)], axis=0)
    Mb, _, _ = _mass_gravity(model, pts)
    dM = (Mb[:nq] - Mb[nq:]) / (2.0 * scale[:, None, None])   # dM[k] = dM/dq_k
    C = 0.5 * (
        np.einsum("kij,k->ij", dM, qdot)
        + np.einsum("jik,k->ij", dM, qdot)
        - np.einsum("ijk,k->ij", dM, qdot)
    )
    return DynTerms(M=M, C=C, G=G)


def wrench_to_generalized(model: RobotModel, euler, wrench) -> np.ndarray:
    """Map a world wrench [F; M] on the platform to generalized forces.

    Applies S^T = blkdiag(I, (R E_b)^T); arm coordinates receive zero.
    """
    wrench = np.asarray(wrench, dtype=float)
    E_w = rotation(euler, model.euler_convention) @ euler_rate_jacobian(
        euler, model.euler_convention
    )
    out = np.zeros(wrench.shape[:-1] + (model.nq,))
    out[..., 0:3] = wrench[..., 0:3]
    out[..., 3:6] = (np.swapaxes(E_w, -1, -2) @ wrench[..., 3:6, None])[..., 0]
    return out


def generalized_cable_force(model: RobotModel, q, T) -> np.ndarray:
    """Generalized force produced by cable tensions T at configuration q."""
    q = np.asarray(q, dtype=float)
    W = tension_wrench_matrix(model, Pose.from_q(q, model.euler_convention))
    return wrench_to_generalized(model, q[3:6], W @ np.asarray(T, float))


def inverse_dynamics(model: RobotModel, q, qdot, qddot, tau_d=None) -> np.ndarray:
    """Generalized forces tau = M qddot + C qdot + G + tau_d.

    The first six entries are the platform block (the cable-side wrench in
    generalized coordinates); the trailing entries are the joint torques.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    qddot = np.asarray(qddot, dtype=float)
    check_euler_regular(q[3:6], model.euler_convention)
    M, G, h = _dynamics_core(model, q, qdot)
    tau = M @ qddot + h + G
    if tau_d is not None:
        tau = tau + np.asarray(tau_d, dtype=float)
    return tau


def _solve_spd(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or np.max(cond) > CONDITION_LIMIT:
        raise ConditioningError(
            f"inertia matrix near-singular (condition number {np.max(cond):.3e})"
        )
    return np.linalg.solve(M, rhs)


def forward_dynamics(model: RobotModel, q, qdot, T, tau_a, tau_d=None) -> np.ndarray:
    """Accelerations from cable tensions and joint torques.

    Solves M qddot = [cable wrench; tau_a] - C qdot - G - tau_d, where the
    cable wrench is mapped into generalized coordinates (see module notes
    on the tension sign convention).
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    tau_a = np.asarray(tau_a, dtype=float)
    check_euler_regular(q[3:6], model.euler_convention)
    M, G, h = _dynamics_core(model, q, qdot)
    gf = generalized_cable_force(model, q, T)
    gf[6:] += tau_a
    rhs = gf - h - G
    if tau_d is not None:
        rhs = rhs - np.asarray(tau_d, dtype=float)
    return _solve_spd(M, rhs)


def cable_tensions_from_stretch(model: RobotModel, pose: Pose, L0, clamp_slack: bool = False) -> np.ndarray:
    """Elastic tensions T_i = (EA_i / L0_i) (L_i - L0_i).

    Signed by default (taut-cable assumption); ``clamp_slack`` zeroes
    negative entries.
    """
    L0 = np.asarray(L0, dtype=float)
    if model.n_cables and np.any(L0 <= 0):
        raise ValidationError("unstretched cable lengths must be positive")
    vec = _cable_vectors(model, pose.p, pose.rotation())
    L = np.linalg.norm(vec, axis=-1)
    T = model.platform.axial_stiffness / L0 * (L - L0)
    if clamp_slack:
        T = np.maximum(T, 0.0)
    return T


# ---------------------------------------------------------------------------
# Quadrotor variant: thrust columns replace cable columns.

_ROTOR_MOMENT_SIGNS = np.array([1.0, -1.0, 1.0, -1.0])


def quadrotor_structure_matrix(params: QuadrotorParams, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Reduced (6x4) and full (6x8) thrust maps of the quadrotor.

    The full map pairs [F_1..F_4, M_1..M_4] with the platform wrench, all
    thrust axes along the body +Z direction and rotor drag moments
    alternating in sign.  The reduced map folds M_i = kappa F_i into the
    thrust columns.  Both are wrench maps in the pull/thrust direction,
    matching :func:`cablearm.kinematics.tension_wrench_matrix`.
    """
    R = pose.rotation()
    u = R[:, 2]
    rho = (R @ params.rotor_positions.T).T         # (4,3) world rotor arms
    A_full = np.zeros((6, 8))
    A_full[0:3, 0:4] = u[:, None]
    A_full[3:6, 0:4] = np.cross(rho, u).T
    A_full[3:6, 4:8] = u[:, None] * _ROTOR_MOMENT_SIGNS
    d, kappa = params.arm_length, params.moment_ratio
    top = R @ np.array([[0.0, 0, 0, 0], [0, 0, 0, 0], [1, 1, 1, 1]])
    bottom = R @ np.array(
        [[0.0, d, 0, -d], [-d, 0, d, 0], [kappa, -kappa, kappa, -kappa]]
    )
    return np.vstack([top, bottom]), A_full


def hybrid_forward_dynamics_quadrotor(
    params: QuadrotorParams, model: RobotModel, q, qdot, F, tau_a, tau_d=None
) -> np.ndarray:
    """Whole-body accelerations of the quadrotor + arm under rotor thrusts F."""
    q = np.asarray(q, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.shape != (4,):
        raise ValueError("F must be the 4 rotor thrusts")
    check_euler_regular(q[3:6], model.euler_convention)
    pose = Pose.from_q(q, model.euler_convention)
    A_tilde, _ = quadrotor_structure_matrix(params, pose)
    gf = wrench_to_generalized(model, q[3:6], A_tilde @ F)
    gf[6:] += np.asarray(tau_a, dtype=float)
    M, G, h = _dynamics_core(model, q, np.asarray(qdot, float))
    rhs = gf - h - G
    if tau_d is not None:
        rhs = rhs - np.asarray(tau_d, dtype=float)
    return _solve_spd(M, rhs)
