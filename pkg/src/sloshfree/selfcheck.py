"""Self-checks behind ``sloshfree validate``: kinematics against finite
differences and recorded checkpoints, and QP solutions against the KKT conditions."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .joint_control import RacWeights, build_rac_qp
from .kinematics import (
    JointState,
    KinematicModel,
    ModelError,
    ee_acceleration,
    ee_velocity,
    forward_kinematics,
    is_rotation,
    jacobian,
    jacobian_and_hessian,
    load_model,
    velocity_product,
)
from .qp_solver import GoldfarbIdnaniSolver, QpError, QpProblem, kkt_residuals
from .task_control import log_so3

FD_STEP = 1e-6
JAC_TOL = 1e-5
HESS_TOL = 1e-4
CHECKPOINT_TOL = 1e-6
KKT_TOL = 1e-7


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel(err, ref):
    return float(np.abs(err).max() / max(1.0, float(np.abs(ref).max())))


def _random_configs(model: KinematicModel, count: int, rng) -> np.ndarray:
    lo, hi = model.limits.q_min, model.limits.q_max
    return lo + (hi - lo) * rng.random((count, model.n))


def fd_jacobian(model: KinematicModel, q, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of the pose (position, rotation vector)."""
    q = np.asarray(q, dtype=float)
    J = np.empty((6, model.n))
    for i in range(model.n):
        dq = np.zeros(model.n)
        dq[i] = h
        plus, minus = forward_kinematics(model, q + dq), forward_kinematics(model, q - dq)
        J[:3, i] = (plus.p - minus.p) / (2 * h)
        J[3:, i] = log_so3(plus.R @ minus.R.T) / (2 * h)
    return J


def fd_hessian(model: KinematicModel, q, h: float = FD_STEP) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    H = np.empty((model.n, 6, model.n))
    for i in range(model.n):
        dq = np.zeros(model.n)
        dq[i] = h
        H[i] = (jacobian(model, q + dq) - jacobian(model, q - dq)) / (2 * h)
    return H


def check_checkpoints(model: KinematicModel, checkpoints) -> CheckResult:
    if not checkpoints:
        return CheckResult("fk checkpoints", True, "none recorded")
    worst = 0.0
    for cp in checkpoints:
        p = forward_kinematics(model, np.asarray(cp["q"], dtype=float)).p
        worst = max(worst, float(np.linalg.norm(p - np.asarray(cp["p"], dtype=float))))
    ok = worst < CHECKPOINT_TOL
    return CheckResult("fk checkpoints", ok, f"{len(checkpoints)} poses, max mismatch {worst:.2e} m")


def check_rotations(model: KinematicModel, qs) -> CheckResult:
    ok = all(is_rotation(forward_kinematics(model, q).R) for q in qs)
    return CheckResult("fk orientation in SO(3)", ok, f"{len(qs)} configurations")


def check_jacobian(model: KinematicModel, qs) -> CheckResult:
    worst = max(_rel(jacobian(model, q) - fd_jacobian(model, q), fd_jacobian(model, q)) for q in qs)
    return CheckResult("jacobian vs finite differences", worst < JAC_TOL, f"max rel err {worst:.2e}")


def check_hessian(model: KinematicModel, qs) -> CheckResult:
    worst = 0.0
    for q in qs:
        ref = fd_hessian(model, q)
        worst = max(worst, _rel(jacobian_and_hessian(model, q)[1] - ref, ref))
    return CheckResult("hessian vs finite differences", worst < HESS_TOL, f"max rel err {worst:.2e}")


def check_acceleration(model: KinematicModel, qs, rng, h: float = 1e-6) -> CheckResult:
    # d/dt of the twist along q(t) = q + qd t + qdd t^2 / 2
    worst = 0.0
    for q in qs:
        qd, qdd = rng.normal(size=model.n), rng.normal(size=model.n)
        fwd = ee_velocity(model, JointState(q + qd * h + qdd * h * h / 2, qd + qdd * h, qdd)).vector()
        bwd = ee_velocity(model, JointState(q - qd * h + qdd * h * h / 2, qd - qdd * h, qdd)).vector()
        ref = (fwd - bwd) / (2 * h)
        worst = max(worst, _rel(ee_acceleration(model, JointState(q, qd, qdd)).vector() - ref, ref))
    return CheckResult("spatial acceleration vs finite differences", worst < HESS_TOL, f"max rel err {worst:.2e}")


def _random_feasible_qp(rng, d: int, me: int, mi: int) -> QpProblem:
    M = rng.normal(size=(d, d))
    P = M @ M.T + 0.5 * np.eye(d)
    x0 = rng.normal(size=d)
    A_eq = rng.normal(size=(me, d))
    A_in = rng.normal(size=(mi, d))
    return QpProblem(P, rng.normal(size=d), A_eq, A_eq @ x0, A_in, A_in @ x0 - rng.random(mi))


def _kkt_ok(problem: QpProblem, solver) -> float:
    sol = solver.solve(problem)
    scale = max(1.0, float(np.abs(problem.P).max()) * float(np.abs(sol.x).max()))
    return kkt_residuals(problem, sol.x, sol).max() / scale


def check_qp_kkt(rng, count: int = 50) -> CheckResult:
    solver = GoldfarbIdnaniSolver()
    worst = 0.0
    try:
        for _ in range(count):
            d = int(rng.integers(2, 9))
            worst = max(worst, _kkt_ok(_random_feasible_qp(rng, d, int(rng.integers(0, d)), int(rng.integers(0, 12))), solver))
    except QpError as exc:
        return CheckResult("qp kkt (random problems)", False, str(exc))
    return CheckResult("qp kkt (random problems)", worst < KKT_TOL, f"{count} problems, max residual {worst:.2e}")


def check_rac_kkt(model: KinematicModel, qs, rng) -> CheckResult:
    solver = GoldfarbIdnaniSolver()
    weights = RacWeights.uniform(model.n)
    worst = 0.0
    try:
        for q in qs:
            state = JointState(q, np.zeros(model.n), np.zeros(model.n))
            J, H = jacobian_and_hessian(model, q)
            u = rng.normal(size=6)
            problem = build_rac_qp(state, u, J, velocity_product(H, state.qd), model.limits, weights, 1e-3)
            worst = max(worst, _kkt_ok(problem, solver))
    except QpError as exc:
        return CheckResult("qp kkt (control problems)", False, str(exc))
    return CheckResult("qp kkt (control problems)", worst < KKT_TOL, f"{len(qs)} problems, max residual {worst:.2e}")


def run_checks(model_source=None, samples: int = 20, seed: int = 0) -> list[CheckResult]:
    """All self-checks for a model file path (``None`` = bundled Panda)."""
    rng = np.random.default_rng(seed)
    if model_source is None:
        from importlib import resources

        text = resources.files("sloshfree.data").joinpath("panda.yaml").read_text()
        label = "bundled panda"
    else:
        path = Path(model_source)
        if not path.is_file():
            return [CheckResult("model file", False, f"model file not found: {path}")]
        text = path.read_text()
        label = str(path)
    if not text.strip():
        return [CheckResult("model parse", False, f"parse error: {label} is empty")]
    try:
        raw = yaml.safe_load(text)
        model = load_model(raw)
    except (ModelError, yaml.YAMLError) as exc:
        return [CheckResult("model parse", False, f"parse error: {exc}")]
    results = [CheckResult("model parse", True, f"{label}: {model.n} joints")]
    qs = _random_configs(model, samples, rng)
    results += [
        check_checkpoints(model, raw.get("checkpoints")),
        check_rotations(model, qs),
        check_jacobian(model, qs),
        check_hessian(model, qs[: max(1, samples // 4)]),
        check_acceleration(model, qs[: max(1, samples // 4)], rng),
        check_qp_kkt(rng),
        check_rac_kkt(model, qs[: max(1, samples // 4)], rng),
    ]
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    return "\n".join(lines)
