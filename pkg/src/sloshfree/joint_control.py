"""Slack-relaxed resolved-acceleration QP mapping task accelerations to joint commands.

Decision vector ``x = (q, qd, qdd, delta)`` with ``3n + 6`` entries:

- equalities: ``q = q0 + qd dt``, ``qd = qd0 + qdd dt`` and
  ``u_T + delta = J0 qdd + h0`` with ``J0``, ``h0`` frozen at the current state
- inequalities: box bounds on ``q``, ``qd``, ``qdd`` and the jerk band on
  ``(qdd - qdd0) / dt``
- cost: ``x' diag(w) x`` (no linear term)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from numba import njit

from .kinematics import JointState, KinematicModel, Limits, jacobian_and_hessian, velocity_product
from .qp_solver import GoldfarbIdnaniSolver, QpError, QpInfeasibleError, QpProblem, dump_problem

log = logging.getLogger(__name__)

DELTA_TOL = 1e-3
STATE_TOL = 1e-6


class RacSolverError(RuntimeError):
    """The RAC QP could not be solved; ``dump`` holds the serialized problem."""

    def __init__(self, message: str, dump: str):
        super().__init__(message)
        self.dump = dump


@dataclass(frozen=True)
class RacWeights:
    w_q: np.ndarray = field(default_factory=lambda: np.full(7, 1e-8))
    w_qd: np.ndarray = field(default_factory=lambda: np.full(7, 1.0))
    w_qdd: np.ndarray = field(default_factory=lambda: np.full(7, 1e-8))
    w_slack: np.ndarray = field(default_factory=lambda: np.full(6, 1e3))

    def __post_init__(self):
        for name in ("w_q", "w_qd", "w_qdd", "w_slack"):
            w = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(w > 0):
                raise ValueError(f"weights {name} must be strictly positive")
            object.__setattr__(self, name, w)
        if self.w_slack.size != 6:
            raise ValueError("slack weights must have 6 entries")
        if not self.w_q.size == self.w_qd.size == self.w_qdd.size:
            raise ValueError("joint weight vectors differ in length")

    @classmethod
    def uniform(cls, n: int, w_q=1e-8, w_qd=1.0, w_qdd=1e-8, w_slack=1e3) -> "RacWeights":
        return cls(np.full(n, w_q), np.full(n, w_qd), np.full(n, w_qdd), np.full(6, w_slack))

    def diagonal(self) -> np.ndarray:
        return np.concatenate([self.w_q, self.w_qd, self.w_qdd, self.w_slack])


@dataclass(frozen=True)
class JointCommand:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    slack: np.ndarray
    feasible_without_slack: bool
    iterations: int = 0

    def state(self) -> JointState:
        return JointState(self.q, self.qd, self.qdd)


@njit(cache=True)
def _brakes_in_time(q, v, a, q_max, v_max, a_min, jerk, dt):
    # Discrete braking from (q, v, a): ramp the acceleration down at the jerk
    # limit to a_min and hold until v <= 0 and a <= 0. Same integrator as the QP.
    for _ in range(1000000):
        if q > q_max or v > v_max:
            return False
        if v <= 0.0 and a <= 0.0:
            return True
        a = max(a - jerk * dt, a_min)
        v += a * dt
        q += v * dt
    return True


@njit(cache=True)
def _upper_viable(a, q0, v0, q_max, v_max, a_min, jerk, dt):
    v = v0 + a * dt
    return _brakes_in_time(q0 + v * dt, v, a, q_max, v_max, a_min, jerk, dt)


@njit(cache=True)
def _largest_viable(lo, hi, q0, v0, q_max, v_max, a_min, jerk, dt):
    if _upper_viable(hi, q0, v0, q_max, v_max, a_min, jerk, dt):
        return hi
    if not _upper_viable(lo, q0, v0, q_max, v_max, a_min, jerk, dt):
        return lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _upper_viable(mid, q0, v0, q_max, v_max, a_min, jerk, dt):
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def _viable_qdd_bounds(q0, v0, a0, q_min, q_max, v_min, v_max, a_min, a_max, j_min, j_max, dt, margin):
    n = q0.size
    lo_out = np.empty(n)
    hi_out = np.empty(n)
    for i in range(n):
        lo = max(a_min[i], a0[i] + j_min[i] * dt, (v_min[i] - v0[i]) / dt,
                 (q_min[i] - q0[i] - v0[i] * dt) / dt**2)
        hi = min(a_max[i], a0[i] + j_max[i] * dt, (v_max[i] - v0[i]) / dt,
                 (q_max[i] - q0[i] - v0[i] * dt) / dt**2)
        if lo > hi:
            lo_out[i], hi_out[i] = a_min[i], a_max[i]
            continue
        up = _largest_viable(lo, hi, q0[i], v0[i], q_max[i] - margin, v_max[i] - margin,
                             a_min[i], -j_min[i], dt)
        # lower side by mirroring the joint
        dn = -_largest_viable(-hi, -lo, -q0[i], -v0[i], -q_min[i] - margin, -v_min[i] - margin,
                              -a_max[i], j_max[i], dt)
        if dn > up:
            lo_out[i], hi_out[i] = a_min[i], a_max[i]
        else:
            lo_out[i], hi_out[i] = max(dn, a_min[i]), min(up, a_max[i])
    return lo_out, hi_out


def viable_acceleration_bounds(state0: JointState, limits: Limits, dt: float, margin: float = 1e-9):
    """Per-joint acceleration interval from which a jerk-limited stop keeps every limit.

    The one-step constraints alone can leave a joint moving fast towards a
    position or velocity limit it can no longer avoid (an empty QP). The
    returned band is a subset of ``[qdd_min, qdd_max]``; if no such interval
    exists the static band is returned unchanged.
    """
    L = limits
    return _viable_qdd_bounds(
        np.asarray(state0.q, dtype=float), np.asarray(state0.qd, dtype=float),
        np.asarray(state0.qdd, dtype=float), L.q_min, L.q_max, L.qd_min, L.qd_max,
        L.qdd_min, L.qdd_max, L.qddd_min, L.qddd_max, float(dt), margin,
    )


def build_rac_qp(state0: JointState, u_T, J0, h0, limits: Limits, weights: RacWeights, dt: float,
                 qdd_bounds=None) -> QpProblem:
    """Assemble the RAC QP; ``qdd_bounds`` optionally replaces the static acceleration band."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    n = limits.n
    J0 = np.asarray(J0, dtype=float)
    u = np.asarray(getattr(u_T, "u", u_T), dtype=float)
    if J0.shape != (6, n) or u.shape != (6,) or np.shape(h0) != (6,):
        raise ValueError("dimension mismatch in RAC inputs")
    if weights.w_q.size != n:
        raise ValueError("dimension mismatch between weights and joint count")
    for v in (state0.q, state0.qd, state0.qdd):
        if np.shape(v) != (n,):
            raise ValueError("dimension mismatch in joint state")
    d = 3 * n + 6
    iq, iqd, iqdd, isl = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n), slice(3 * n, d)
    eye = np.eye(n)

    A_eq = np.zeros((2 * n + 6, d))
    A_eq[:n, iq] = eye
    A_eq[:n, iqd] = -dt * eye
    A_eq[n:2 * n, iqd] = eye
    A_eq[n:2 * n, iqdd] = -dt * eye
    A_eq[2 * n:, iqdd] = J0
    A_eq[2 * n:, isl] = -np.eye(6)
    b_eq = np.concatenate([state0.q, state0.qd, u - np.asarray(h0, dtype=float)])

    # A_in x >= b_in: [x >= lo; -x >= -hi] per band, then the jerk band on qdd
    A_in = np.zeros((8 * n, d))
    b_in = np.empty(8 * n)
    bands = ((iq, limits.q_min, limits.q_max), (iqd, limits.qd_min, limits.qd_max),
             (iqdd, *(qdd_bounds if qdd_bounds is not None else (limits.qdd_min, limits.qdd_max))),
             (iqdd, state0.qdd + limits.qddd_min * dt, state0.qdd + limits.qddd_max * dt))
    for k, (sl, lo, hi) in enumerate(bands):
        r = 2 * n * k
        A_in[r:r + n, sl] = eye
        A_in[r + n:r + 2 * n, sl] = -eye
        b_in[r:r + n] = lo
        b_in[r + n:r + 2 * n] = -hi
    return QpProblem(np.diag(weights.diagonal()), None, A_eq, b_eq, A_in, b_in)


def rac_step(
    model: KinematicModel,
    state0: JointState,
    u_T,
    limits: Limits | None = None,
    weights: RacWeights | None = None,
    dt: float = 1e-3,
    solver: GoldfarbIdnaniSolver | None = None,
    JH=None,
    shape_limits: bool = True,
) -> JointCommand:
    """Solve one RAC QP from ``state0``.

    ``JH`` may pass a precomputed (J0, H0). With ``shape_limits`` the
    acceleration band is narrowed by :func:`viable_acceleration_bounds`.
    """
    limits = limits or model.limits
    weights = weights or RacWeights.uniform(model.n)
    solver = solver or GoldfarbIdnaniSolver()
    if not limits.contains(state0.q, state0.qd, state0.qdd, tol=STATE_TOL):
        raise ValueError("initial joint state violates the joint limits")
    J0, H0 = JH if JH is not None else jacobian_and_hessian(model, state0.q)
    h0 = velocity_product(H0, state0.qd)
    bounds = viable_acceleration_bounds(state0, limits, dt) if shape_limits else None
    problem = build_rac_qp(state0, u_T, J0, h0, limits, weights, dt, qdd_bounds=bounds)
    try:
        sol = solver.solve(problem)
    except QpError as exc:
        dump = dump_problem(problem)
        log.error("RAC QP failed (%s); problem dump follows\n%s", exc, dump)
        raise RacSolverError(f"RAC QP failed: {exc}", dump) from exc
    n = model.n
    x = sol.x
    slack = x[3 * n:]
    return JointCommand(
        q=x[:n].copy(),
        qd=x[n:2 * n].copy(),
        qdd=x[2 * n:3 * n].copy(),
        slack=slack.copy(),
        feasible_without_slack=bool(np.abs(slack).max() < DELTA_TOL),
        iterations=sol.iterations,
    )


def unslacked_feasible(problem: QpProblem, n: int, solver: GoldfarbIdnaniSolver | None = None) -> bool:
    """Probe whether the RAC constraints admit a point with all slacks frozen at zero."""
    d = problem.dim
    pin = np.zeros((6, d))
    pin[:, 3 * n:] = np.eye(6)
    probe = QpProblem(problem.P, problem.lin, np.vstack([problem.A_eq, pin]),
                      np.concatenate([problem.b_eq, np.zeros(6)]), problem.A_in, problem.b_in)
    try:
        (solver or GoldfarbIdnaniSolver()).solve(probe)
    except QpInfeasibleError:
        return False
    return True
