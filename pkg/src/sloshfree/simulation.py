"""Closed-loop kinematic simulation: reference -> cascaded PD -> RAC QP -> plant.

The plant is the QP's own semi-implicit Euler integrator: the (q, qd, qdd)
returned by each solve becomes the next state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .joint_control import RacSolverError, rac_step
from .kinematics import JointState, KinematicModel, jacobian, forward_kinematics, pose_jacobian_hessian, velocity_product
from .metrics import position_error, slosh_free_angle
from .qp_solver import GoldfarbIdnaniSolver
from .reference import G_COMP, Trajectory, baseline_reference, eval_trajectory, slosh_free_reference
from .task_control import cascaded_pd, orientation_error, pose_error

log = logging.getLogger(__name__)

DEGENERACY_STORM = 0.10
IK_POS_TOL = 1e-4
IK_ROT_TOL = 1e-3
IK_MAX_ITER = 500


class RunFailure(RuntimeError):
    pass


class IKError(RuntimeError):
    pass


@dataclass
class RunLog:
    """Per-step trace on a uniform grid, stored column-wise."""

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    p_e: np.ndarray
    R_e: np.ndarray
    twist: np.ndarray
    accel: np.ndarray
    p_r: np.ndarray
    R_r: np.ndarray
    u_T: np.ndarray
    slack: np.ndarray
    e_p: np.ndarray
    e_sf: np.ndarray
    degenerate: np.ndarray
    mode: str = "slosh_free"

    def __len__(self) -> int:
        return self.t.size

    @classmethod
    def allocate(cls, steps: int, n: int, mode: str) -> "RunLog":
        z = np.zeros
        return cls(
            t=z(steps), q=z((steps, n)), qd=z((steps, n)), qdd=z((steps, n)),
            p_e=z((steps, 3)), R_e=z((steps, 3, 3)), twist=z((steps, 6)), accel=z((steps, 6)),
            p_r=z((steps, 3)), R_r=z((steps, 3, 3)), u_T=z((steps, 6)), slack=z((steps, 6)),
            e_p=z(steps), e_sf=z(steps), degenerate=np.zeros(steps, dtype=bool), mode=mode,
        )


def setup_initial_configuration(model: KinematicModel, traj: Trajectory, psi: float = 0.0,
                                g_comp=G_COMP, home=None, mode: str = "slosh_free") -> np.ndarray:
    """Damped least-squares IK from the home pose onto the reference pose at t0."""
    q = np.array(model.home if home is None else home, dtype=float)
    if mode == "baseline":
        target = baseline_reference(traj, traj.t0)
    else:
        target = slosh_free_reference(traj, traj.t0, psi, g_comp)
    lo = model.limits.q_min + 0.02
    hi = model.limits.q_max - 0.02
    damping = 1e-2
    for _ in range(IK_MAX_ITER + 1):
        ee = forward_kinematics(model, q)
        e = np.concatenate([target.p_r - ee.p, orientation_error(target.R_r, ee.R)])
        if np.linalg.norm(e[:3]) < IK_POS_TOL and np.linalg.norm(e[3:]) < IK_ROT_TOL:
            return q
        J = jacobian(model, q)
        step = J.T @ np.linalg.solve(J @ J.T + damping * np.eye(6), e)
        q = np.clip(q + step, lo, hi)
    raise IKError(f"initial configuration did not converge in {IK_MAX_ITER} iterations "
                  f"(residual {np.linalg.norm(e[:3]):.3g} m, {np.linalg.norm(e[3:]):.3g} rad)")


def run_experiment(config: ExperimentConfig, model: KinematicModel | None = None) -> RunLog:
    model = model or config.load_model()
    traj = config.trajectory
    limits = model.limits
    weights = config.resolved_weights(model.n)
    dt = config.dt
    steps = int(round(traj.T / dt))
    q_init = config.q_init
    if q_init is None:
        q_init = setup_initial_configuration(model, traj, config.psi, mode=config.mode)
    q_init = np.asarray(q_init, dtype=float)
    if not limits.contains(q_init):
        raise RunFailure("initial configuration outside joint limits")
    state = JointState.at_rest(q_init)
    solver = GoldfarbIdnaniSolver()
    out = RunLog.allocate(steps + 1, model.n, config.mode)
    prev_R = None
    for k in range(steps + 1):
        t = traj.t0 + traj.T * k / steps
        ee, J, H = pose_jacobian_hessian(model, state.q)
        h = velocity_product(H, state.qd)
        nu = J @ state.qd
        alpha = J @ state.qdd + h
        sample = eval_trajectory(traj, t)
        if config.mode == "slosh_free":
            ref = slosh_free_reference(traj, t, config.psi, G_COMP, previous_R=prev_R, sample=sample)
            if ref.degenerate is None:
                prev_R = ref.R_r
        else:
            ref = baseline_reference(traj, t, sample=sample)
        e_T = pose_error(ref, ee)
        cmd_u = cascaded_pd(e_T, nu, config.gains)
        try:
            cmd = rac_step(model, state, cmd_u, limits, weights, dt, solver, JH=(J, H))
        except RacSolverError as exc:
            raise RunFailure(f"solver failure at t={t:.4f}s: {exc}") from exc

        out.t[k] = t
        out.q[k], out.qd[k], out.qdd[k] = state.q, state.qd, state.qdd
        out.p_e[k], out.R_e[k] = ee.p, ee.R
        out.twist[k], out.accel[k] = nu, alpha
        out.p_r[k], out.R_r[k] = ref.p_r, ref.R_r
        out.u_T[k] = cmd_u.u
        out.slack[k] = cmd.slack
        out.e_p[k] = position_error(ref.p_r, ee.p)
        out.e_sf[k] = slosh_free_angle(alpha[:3], ee.R)
        out.degenerate[k] = ref.degenerate is not None
        if k < steps:
            state = cmd.state()
    frac = out.degenerate.mean()
    if frac > DEGENERACY_STORM:
        raise RunFailure(f"flatness map degenerate on {100 * frac:.1f}% of steps")
    return out
