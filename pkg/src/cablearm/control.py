"""LTV linearization, model predictive control, and joint PID.

MPC bookkeeping (velocity form): the quadratic program is posed in input
increments ``du(k) = u(k) - u(k-1)`` with state increments
``dx(k) = x(k) - x(k-1)`` propagated by the discretized linear model.
Absolute states and inputs are recovered by accumulation from the measured
``x(0)``, ``x(-1)`` and the last applied input, so tracking errors
``e_x = x_ref - x`` and ``e_u = u_ref - u`` are affine in the decision
vector.  Increments beyond the control horizon are fixed at zero.  This
accumulation gives the controller implicit integral action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InfeasibleError, IterationLimitError


@dataclass(frozen=True)
class LtvModel:
    """Continuous-time linearization dx/dt = A (x - x_r) + B (u - u_r) + f_r."""

    A: np.ndarray
    B: np.ndarray
    C_out: np.ndarray
    x_r: np.ndarray
    u_r: np.ndarray
    f_r: np.ndarray   # plant drift at the linearization point


def linearize(plant, x_r, u_r, exogenous=(), step: float = 1e-6) -> LtvModel:
    """Jacobians of a plant by central differences, step scaled per coordinate.

    ``plant(x, u, *exogenous)`` must return the state derivative and accept
    batched ``x`` / ``u`` (leading axes broadcast).  Raises on non-finite
    plant output.
    """
    x_r = np.asarray(x_r, dtype=float)
    u_r = np.asarray(u_r, dtype=float)
    s, p = x_r.size, u_r.size
    hx = step * np.maximum(1.0, np.abs(x_r))
    hu = step * np.maximum(1.0, np.abs(u_r))
    X = np.tile(x_r, (2 * s + 2 * p + 1, 1))
    U = np.tile(u_r, (2 * s + 2 * p + 1, 1))
    X[0:s] += np.diag(hx)
    X[s:2 * s] -= np.diag(hx)
    U[2 * s:2 * s + p] += np.diag(hu)
    U[2 * s + p:2 * s + 2 * p] -= np.diag(hu)
    F = np.asarray(plant(X, U, *exogenous), dtype=float)
    if not np.all(np.isfinite(F)):
        raise ArithmeticError("plant returned non-finite derivatives during linearization")
    A = (F[0:s] - F[s:2 * s]).T / (2.0 * hx)
    B = (F[2 * s:2 * s + p] - F[2 * s + p:2 * s + 2 * p]).T / (2.0 * hu)
    return LtvModel(A=A, B=B, C_out=np.eye(s), x_r=x_r, u_r=u_r, f_r=F[-1])


def zoh_discretize(A: np.ndarray, B: np.ndarray, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization via the augmented matrix exponential."""
    s, p = A.shape[0], B.shape[1]
    aug = np.zeros((s + p, s + p))
    aug[:s, :s] = A * Ts
    aug[:s, s:] = B * Ts
    E = scipy.linalg.expm(aug)
    return E[:s, :s], E[:s, s:]


@dataclass(frozen=True)
class MpcParams:
    """Horizon, weights, and increment bounds of one MPC instance."""

    Ts: float
    Np: int
    Nc: int
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    du_min: np.ndarray
    du_max: np.ndarray
    dx_min: np.ndarray | None = None
    dx_max: np.ndarray | None = None

    def __post_init__(self):
        if self.Ts <= 0:
            raise ValueError("Ts must be positive")
        if not (0 < self.Nc <= self.Np):
            raise ValueError("control horizon must satisfy 0 < Nc <= Np")
        for name in ("Q", "R", "P", "du_min", "du_max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name, mat, pd in (("Q", self.Q, False), ("R", self.R, True), ("P", self.P, False)):
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            eig = np.linalg.eigvalsh(mat)
            if pd and eig.min() <= 0:
                raise ValueError(f"{name} must be positive definite")
            if not pd and eig.min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        if np.any(self.du_min > self.du_max):
            raise ValueError("du bounds must satisfy du_min <= du_max")
        for name in ("dx_min", "dx_max"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))


def solve_qp_active_set(H, g, A_ineq=None, b_ineq=None, tol: float = 1e-9, max_iter: int = 500):
    """Minimize 0.5 z^T H z + g^T z subject to A z <= b (primal active set).

    H must be positive definite.  Starts from z = 0, which must be
    feasible; ties in blocking constraints break toward the lowest row
    index, making the iteration deterministic.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    if A_ineq is None or len(A_ineq) == 0:
        return np.linalg.solve(H, -g)
    A_ineq = np.asarray(A_ineq, dtype=float)
    b_ineq = np.asarray(b_ineq, dtype=float)
    z = np.zeros(n)
    viol = A_ineq @ z - b_ineq
    if np.any(viol > tol):
        row = int(np.argmax(viol))
        raise InfeasibleError(
            f"QP infeasible at the origin: constraint row {row} violated by {viol[row]:.3e}"
        )
    active: list[int] = []
    for _ in range(max_iter):
        Aw = A_ineq[active]
        k = len(active)
        KKT = np.zeros((n + k, n + k))
        KKT[:n, :n] = H
        if k:
            KKT[:n, n:] = Aw.T
            KKT[n:, :n] = Aw
        rhs = np.concatenate([-(g + H @ z), np.zeros(k)])
        sol = np.linalg.solve(KKT, rhs)
        d, lam = sol[:n], sol[n:]
        if np.linalg.norm(d, ord=np.inf) <= tol:
            if k == 0 or np.all(lam >= -tol):
                return z
            active.pop(int(np.argmin(lam)))
            continue
        mask = np.ones(A_ineq.shape[0], dtype=bool)
        mask[active] = False
        Ad = A_ineq[mask] @ d
        slack = b_ineq[mask] - A_ineq[mask] @ z
        blocking = Ad > tol
        alpha = 1.0
        add_row = None
        if np.any(blocking):
            ratios = slack[blocking] / Ad[blocking]
            j = int(np.argmin(ratios))
            if ratios[j] < alpha:
                alpha = max(ratios[j], 0.0)
                add_row = np.flatnonzero(mask)[np.flatnonzero(blocking)[j]]
        z = z + alpha * d
        if add_row is not None:
            active.append(int(add_row))
    raise IterationLimitError(f"active-set QP did not converge within {max_iter} iterations")


def _prediction_operators(Ad, Bd, Np, Nc, need_theta: bool = False):
    """Cumulative maps from stacked du to absolute state/input deviations.

    Returns Phi with x(j) - x(0) - S_j dx0 = Phi[j] @ z and (optionally)
    the state-increment maps Theta with dx(j) = Apow[j] dx0 + Theta[j] @ z.
    """
    s, p = Bd.shape
    Apow = np.empty((Np + 1, s, s))
    Apow[0] = np.eye(s)
    for j in range(1, Np + 1):
        Apow[j] = Ad @ Apow[j - 1]
    # markov[t] = Ad^t Bd ; cum[t] = sum_{tau<=t} Ad^tau Bd
    markov = Apow[:Np] @ Bd
    cum = np.cumsum(markov, axis=0)
    jj, ii = np.meshgrid(np.arange(Np + 1), np.arange(Nc), indexing="ij")
    off = jj - 1 - ii                     # block (j, i) holds cum[j-1-i]
    valid = off >= 0

    def fill(blocks):
        tiles = blocks[np.clip(off, 0, Np - 1)]      # (Np+1, Nc, s, p)
        tiles[~valid] = 0.0
        return np.swapaxes(tiles, 1, 2).reshape(Np + 1, s, Nc * p)

    Phi = fill(cum)
    Theta = fill(markov) if need_theta else None
    S = np.cumsum(Apow[1:], axis=0)       # S_j = sum_{l=1..j} Ad^l
    return Apow, S, Phi, Theta


def mpc_step(
    ltv: LtvModel,
    x_now,
    x_prev,
    u_prev,
    x_ref_window,
    u_ref_window,
    params: MpcParams,
) -> np.ndarray:
    """One receding-horizon solve; returns the input to apply now.

    ``x_ref_window`` has Np+1 rows, ``u_ref_window`` at least Np rows.
    Raises InfeasibleError (naming the violated bound) or
    IterationLimitError from the QP.
    """
    x_now = np.asarray(x_now, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    xr = np.asarray(x_ref_window, dtype=float)
    ur = np.asarray(u_ref_window, dtype=float)
    Np, Nc = params.Np, params.Nc
    Ad, Bd = zoh_discretize(ltv.A, ltv.B, params.Ts)
    s, p = Bd.shape
    nz = Nc * p
    dx0 = x_now - x_prev
    need_theta = params.dx_min is not None or params.dx_max is not None
    Apow, S, Phi, Theta = _prediction_operators(Ad, Bd, Np, Nc, need_theta)

    # e_x(j) = rtil[j] - Phi[j] z ; e_u(j) = stil[j] - Uacc[j] z
    drift = np.zeros((Np + 1, s))
    drift[1:] = S @ dx0                    # free response of the increments
    rtil = xr[: Np + 1] - x_now[None, :] - drift
    # u(j) accumulates du(0..min(j, Nc-1)): block-lower-triangular identity tiles
    jj, ii = np.meshgrid(np.arange(Np), np.arange(Nc), indexing="ij")
    mask = (ii <= jj).astype(float)                        # (Np, Nc)
    Uacc = (mask[:, None, :, None] * np.eye(p)[None, :, None, :]).reshape(Np, p, nz)
    stil = ur[:Np] - u_prev[None, :]

    Phi_flat = Phi[:Np].reshape(Np * s, nz)
    QPhi_flat = (params.Q @ Phi[:Np]).reshape(Np * s, nz)
    U_flat = Uacc.reshape(Np * p, nz)
    RU_flat = (params.R @ Uacc).reshape(Np * p, nz)
    H = Phi_flat.T @ QPhi_flat + U_flat.T @ RU_flat + Phi[Np].T @ params.P @ Phi[Np]
    g = -(
        QPhi_flat.T @ rtil[:Np].reshape(Np * s)
        + RU_flat.T @ stil.reshape(Np * p)
        + Phi[Np].T @ (params.P @ rtil[Np])
    )
    H = H + H.T   # 2x overall scale, symmetrized
    g = 2.0 * g

    blocks, rhs_parts = [], []
    up = np.tile(params.du_max, Nc)
    lo = np.tile(params.du_min, Nc)
    eye_nz = np.eye(nz)
    if np.any(np.isfinite(up)):
        m = np.isfinite(up)
        blocks.append(eye_nz[m])
        rhs_parts.append(up[m])
    if np.any(np.isfinite(lo)):
        m = np.isfinite(lo)
        blocks.append(-eye_nz[m])
        rhs_parts.append(-lo[m])
    if need_theta:
        dx_max = np.full(s, np.inf) if params.dx_max is None else params.dx_max
        dx_min = np.full(s, -np.inf) if params.dx_min is None else params.dx_min
        base = (Apow[1:] @ dx0).reshape(Np * s)            # dx(j) offsets
        T_flat = Theta[1:].reshape(Np * s, nz)
        hi = np.tile(dx_max, Np)
        sm = np.tile(dx_min, Np)
        m = np.isfinite(hi)
        if np.any(m):
            blocks.append(T_flat[m])
            rhs_parts.append(hi[m] - base[m])
        m = np.isfinite(sm)
        if np.any(m):
            blocks.append(-T_flat[m])
            rhs_parts.append(base[m] - sm[m])
    A_ineq = np.vstack(blocks) if blocks else None
    b_ineq = np.concatenate(rhs_parts) if blocks else None
    z = solve_qp_active_set(H, g, A_ineq, b_ineq)
    return u_prev + z[:p]


class MpcController:
    """Stateful wrapper: tracks the previous state and applied input."""

    def __init__(self, params: MpcParams):
        self.params = params
        self.x_prev = None
        self.u_prev = None

    def reset(self, x0, u0):
        self.x_prev = np.asarray(x0, dtype=float)
        self.u_prev = np.asarray(u0, dtype=float)

    def step(self, ltv: LtvModel, x_now, x_ref_window, u_ref_window) -> np.ndarray:
        if self.x_prev is None:
            self.reset(x_now, ltv.u_r)
        u = mpc_step(
            ltv, x_now, self.x_prev, self.u_prev, x_ref_window, u_ref_window, self.params
        )
        self.x_prev = np.asarray(x_now, dtype=float)
        self.u_prev = u
        return u


@dataclass(frozen=True)
class PidGains:
    """Scalar gains applied elementwise to the joint channels."""

    Kp: float
    Ki: float
    Kd: float

    def __post_init__(self):
        if min(self.Kp, self.Ki, self.Kd) < 0:
            raise ValueError("PID gains must be nonnegative")


@dataclass(frozen=True)
class PidState:
    """Integral accumulator and previous error (trapezoid quadrature)."""

    integral: np.ndarray
    prev_error: np.ndarray | None = None

    @classmethod
    def zero(cls, n: int = 2) -> "PidState":
        return cls(integral=np.zeros(n))


def pid_step(theta_ref, dtheta_ref, theta, dtheta, state: PidState, gains: PidGains,
             dt: float, limits=None) -> tuple[np.ndarray, PidState]:
    """One PID update of the joint torques.

    Integral by trapezoid rule with conditional anti-windup: a channel
    whose output saturates while the error pushes it further keeps its
    previous integral.  ``limits`` is the symmetric torque bound per
    channel (None = unbounded).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = np.asarray(theta_ref, dtype=float) - np.asarray(theta, dtype=float)
    edot = np.asarray(dtheta_ref, dtype=float) - np.asarray(dtheta, dtype=float)
    prev = e if state.prev_error is None else state.prev_error
    integral_new = state.integral + 0.5 * (e + prev) * dt
    tau = gains.Kp * e + gains.Ki * integral_new + gains.Kd * edot
    if limits is not None:
        lim = np.broadcast_to(np.asarray(limits, dtype=float), tau.shape)
        over = np.abs(tau) > lim
        windup = over & (np.sign(e) == np.sign(tau))
        integral_new = np.where(windup, state.integral, integral_new)
        tau = gains.Kp * e + gains.Ki * integral_new + gains.Kd * edot
        tau = np.clip(tau, -lim, lim)
    return tau, PidState(integral=integral_new, prev_error=e)


def select_states(x, which: str) -> np.ndarray:
    """Partition of the 10-state vector: platform (first 6) or arm (last 4)."""
    x = np.asarray(x, dtype=float)
    if which == "platform":
        return x[..., 0:6]
    if which == "arm":
        return x[..., 6:10]
    raise ValueError("which must be 'platform' or 'arm'")
