"""Dense strictly convex QP solver (Goldfarb-Idnani dual active set).

Solves::

    minimize    1/2 x' P x + lin' x
    subject to  A_eq x  = b_eq
                A_in x >= b_in

The algorithm starts from the unconstrained minimizer and adds violated
constraints one at a time (equalities first, then the most violated
inequality), dropping inequalities whose multipliers would turn negative.
The factorization ``J = L^-T Q`` and the triangular ``R`` are updated with
Givens rotations, so P is factored once per problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

ACTIVATION_TOL = 1e-10
PD_PIVOT_TOL = 1e-12

_OK, _INFEASIBLE, _ITER_LIMIT = 0, 1, 2


class QpError(RuntimeError):
    pass


class QpInfeasibleError(QpError):
    """The constraint set is empty (no point satisfies all constraints)."""


class QpIterationLimitError(QpError):
    pass


class QpNumericalError(QpError):
    pass


class NotPositiveDefiniteError(QpError, ValueError):
    pass


@dataclass(frozen=True)
class QpProblem:
    P: np.ndarray
    lin: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    b_in: np.ndarray

    def __post_init__(self):
        P = np.ascontiguousarray(self.P, dtype=float)
        d = P.shape[0]
        if P.ndim != 2 or P.shape != (d, d):
            raise ValueError(f"cost matrix must be square, got {P.shape}")
        lin = np.zeros(d) if self.lin is None else np.asarray(self.lin, dtype=float)
        A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, d)
        A_in = np.asarray(self.A_in, dtype=float).reshape(-1, d)
        b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        b_in = np.asarray(self.b_in, dtype=float).reshape(-1)
        if lin.shape != (d,):
            raise ValueError("linear cost has wrong dimension")
        if b_eq.size != A_eq.shape[0] or b_in.size != A_in.shape[0]:
            raise ValueError("constraint matrix and bound vector sizes differ")
        if np.abs(P - P.T).max() >= 1e-12:
            raise NotPositiveDefiniteError("cost matrix is not symmetric")
        for name, val in (("P", P), ("A_eq", A_eq), ("b_eq", b_eq), ("A_in", A_in), ("b_in", b_in), ("lin", lin)):
            if not np.all(np.isfinite(val)):
                raise ValueError(f"non-finite entry in {name}")
        for k, v in (("P", P), ("lin", lin), ("A_eq", A_eq), ("b_eq", b_eq), ("A_in", A_in), ("b_in", b_in)):
            object.__setattr__(self, k, v)

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.P @ x + self.lin @ x)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    active_set: tuple
    iterations: int
    objective: float
    multipliers_eq: np.ndarray
    multipliers_in: np.ndarray


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal_eq: float
    primal_in: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal_eq, self.primal_in, self.dual, self.complementarity)


@njit(cache=True)
def _givens_columns(J, i, k, c, s):
    for row in range(J.shape[0]):
        t = J[row, i]
        J[row, i] = c * t + s * J[row, k]
        J[row, k] = -s * t + c * J[row, k]


@njit(cache=True)
def _gi_core(L, lin, C, b, meq, max_iter, tol):
    n = L.shape[0]
    m = C.shape[0]
    # J = L^-T (upper triangular), by back substitution on L^T J = I
    J = np.zeros((n, n))
    for col in range(n):
        for i in range(col, -1, -1):
            acc = 1.0 if i == col else 0.0
            for k in range(i + 1, col + 1):
                acc -= L[k, i] * J[k, col]
            J[i, col] = acc / L[i, i]
    x = -(J @ (J.T @ lin))
    R = np.zeros((n, n))
    act = np.full(n, -1, np.int64)
    u = np.zeros(n)
    r = np.zeros(n)
    sign = np.ones(m)
    active = np.zeros(m, np.bool_)
    q = 0
    iters = 0
    next_eq = 0
    npv = np.zeros(n)
    while True:
        if next_eq < meq:
            p = next_eq
            next_eq += 1
            bp = b[p]
            for k in range(n):
                npv[k] = C[p, k]
            s = npv @ x - bp
            if s > 0.0:
                npv *= -1.0
                bp = -bp
                s = -s
                sign[p] = -1.0
        else:
            p = -1
            smin = -tol
            for i in range(meq, m):
                if active[i]:
                    continue
                si = C[i] @ x - b[i]
                if si < smin:
                    smin = si
                    p = i
            if p < 0:
                break
            bp = b[p]
            for k in range(n):
                npv[k] = C[p, k]
            s = smin
        uplus = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                return x, act, u, sign, q, iters, _ITER_LIMIT
            d = J.T @ npv
            z = np.zeros(n)
            for k in range(q, n):
                for row in range(n):
                    z[row] += J[row, k] * d[k]
            for i in range(q - 1, -1, -1):
                acc = d[i]
                for k in range(i + 1, q):
                    acc -= R[i, k] * r[k]
                r[i] = acc / R[i, i]
            t1 = np.inf
            drop = -1
            for j in range(q):
                if act[j] >= meq and r[j] > 0.0:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1 = ratio
                        drop = j
            dtail = 0.0
            for k in range(q, n):
                dtail += d[k] * d[k]
            dfull = dtail
            for k in range(q):
                dfull += d[k] * d[k]
            zn = z @ npv
            if dtail <= 1e-24 * dfull or zn <= 0.0:
                t2 = np.inf
            else:
                t2 = -s / zn
            if t2 == np.inf:
                if t1 == np.inf:
                    if p < meq and -s <= tol:
                        # redundant but consistent equality
                        break
                    return x, act, u, sign, q, iters, _INFEASIBLE
                # dual step only
                for j in range(q):
                    u[j] -= t1 * r[j]
                uplus += t1
            else:
                t = t2 if t2 <= t1 else t1
                x = x + t * z
                for j in range(q):
                    u[j] -= t * r[j]
                uplus += t
                if t2 <= t1:
                    # full step: add constraint p
                    for k in range(n - 1, q, -1):
                        if d[k] == 0.0:
                            continue
                        h = np.hypot(d[k - 1], d[k])
                        c = d[k - 1] / h
                        sn = d[k] / h
                        d[k - 1] = h
                        d[k] = 0.0
                        _givens_columns(J, k - 1, k, c, sn)
                    for k in range(q + 1):
                        R[k, q] = d[k]
                    act[q] = p
                    u[q] = uplus
                    active[p] = True
                    q += 1
                    break
                s = npv @ x - bp
            # partial step: drop the blocking inequality at position `drop`
            active[act[drop]] = False
            for k in range(drop, q - 1):
                act[k] = act[k + 1]
                u[k] = u[k + 1]
                for row in range(n):
                    R[row, k] = R[row, k + 1]
            for k in range(drop, q - 1):
                a0 = R[k, k]
                b0 = R[k + 1, k]
                if b0 == 0.0:
                    continue
                h = np.hypot(a0, b0)
                c = a0 / h
                sn = b0 / h
                for col in range(k, q - 1):
                    t = R[k, col]
                    R[k, col] = c * t + sn * R[k + 1, col]
                    R[k + 1, col] = -sn * t + c * R[k + 1, col]
                _givens_columns(J, k, k + 1, c, sn)
            for row in range(n):
                R[row, q - 1] = 0.0
            act[q - 1] = -1
            u[q - 1] = 0.0
            q -= 1
    return x, act, u, sign, q, iters, _OK


class GoldfarbIdnaniSolver:
    """Reusable solver instance; not safe to share between threads mid-solve."""

    def __init__(self, tol: float = ACTIVATION_TOL, max_iter: int | None = None):
        self.tol = tol
        self.max_iter = max_iter
        self.last_iterations = 0

    def solve(self, problem: QpProblem) -> QpSolution:
        P = problem.P
        d = problem.dim
        try:
            L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError("cost matrix is not positive definite") from None
        if np.diag(L).min() <= PD_PIVOT_TOL:
            raise NotPositiveDefiniteError("cost matrix is numerically singular")
        meq = problem.A_eq.shape[0]
        mi = problem.A_in.shape[0]
        C = np.ascontiguousarray(np.vstack([problem.A_eq, problem.A_in]))
        b = np.concatenate([problem.b_eq, problem.b_in])
        max_iter = self.max_iter if self.max_iter is not None else 10 * (d + mi) + meq
        x, act, u, sign, q, iters, status = _gi_core(
            np.ascontiguousarray(L), problem.lin, C, b, meq, max_iter, self.tol
        )
        self.last_iterations = int(iters)
        if status == _INFEASIBLE:
            raise QpInfeasibleError("constraints are inconsistent (no feasible point)")
        if status == _ITER_LIMIT:
            raise QpIterationLimitError(f"iteration limit {max_iter} reached")
        if not np.all(np.isfinite(x)):
            raise QpNumericalError("solver produced non-finite iterate")
        lam = np.zeros(meq + mi)
        for j in range(q):
            lam[act[j]] = u[j] * sign[act[j]]
        active_in = tuple(sorted(int(a) - meq for a in act[:q] if a >= meq))
        return QpSolution(
            x=x,
            active_set=active_in,
            iterations=int(iters),
            objective=problem.objective(x),
            multipliers_eq=lam[:meq],
            multipliers_in=lam[meq:],
        )


def solve(problem: QpProblem) -> QpSolution:
    return GoldfarbIdnaniSolver().solve(problem)


def kkt_residuals(problem: QpProblem, x, multipliers) -> KktReport:
    """KKT residual norms (infinity norm) for ``x`` with multipliers.

    ``multipliers`` is a QpSolution or a pair ``(lam_eq, lam_in)`` with the
    sign convention ``P x + lin = A_eq' lam_eq + A_in' lam_in``, ``lam_in >= 0``.
    """
    if isinstance(multipliers, QpSolution):
        lam_eq, lam_in = multipliers.multipliers_eq, multipliers.multipliers_in
    else:
        lam_eq, lam_in = multipliers
    x = np.asarray(x, dtype=float)
    lam_eq = np.asarray(lam_eq, dtype=float).reshape(-1)
    lam_in = np.asarray(lam_in, dtype=float).reshape(-1)
    grad = problem.P @ x + problem.lin - problem.A_eq.T @ lam_eq - problem.A_in.T @ lam_in
    slack_in = problem.A_in @ x - problem.b_in

    def _inf(v):
        return float(np.abs(v).max()) if v.size else 0.0

    return KktReport(
        stationarity=_inf(grad),
        primal_eq=_inf(problem.A_eq @ x - problem.b_eq),
        primal_in=_inf(np.minimum(slack_in, 0.0)),
        dual=_inf(np.minimum(lam_in, 0.0)),
        complementarity=_inf(lam_in * slack_in),
    )


def dump_problem(problem: QpProblem) -> str:
    """Plain-text serialization for reproducing a solve offline."""
    out = []
    for name in ("P", "lin", "A_eq", "b_eq", "A_in", "b_in"):
        arr = np.asarray(getattr(problem, name), dtype=float)
        arr = arr.reshape(-1, problem.dim) if arr.ndim == 2 else arr.reshape(1, -1)
        if arr.size == 0:
            arr = arr.reshape(0, arr.shape[1])
        out.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
        out.extend(" ".join(repr(float(v)) for v in row) for row in arr)
    return "\n".join(out) + "\n"


def parse_problem(text: str) -> QpProblem:
    lines = iter(text.splitlines())
    parts = {}
    for header in lines:
        if not header.strip():
            continue
        name, rows, cols = header.split()
        rows, cols = int(rows), int(cols)
        data = [list(map(float, next(lines).split())) for _ in range(rows)]
        arr = np.array(data, dtype=float).reshape(rows, cols)
        parts[name] = arr if name in ("P", "A_eq", "A_in") else arr.reshape(-1)
    return QpProblem(**parts)
