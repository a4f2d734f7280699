"""Pose error on SE(3) and the cascaded PD task-space law."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _default_k_T():
    return np.full(6, 10.0)


@dataclass(frozen=True)
class TaskGains:
    k_T: np.ndarray = field(default_factory=_default_k_T)
    k_nu: np.ndarray | None = None

    def __post_init__(self):
        k_T = np.asarray(self.k_T, dtype=float)
        k_nu = 10.0 * k_T if self.k_nu is None else np.asarray(self.k_nu, dtype=float)
        if k_T.shape != (6,) or k_nu.shape != (6,):
            raise ValueError("gains must be 6-vectors")
        if np.any(k_T <= 0) or np.any(k_nu <= 0):
            raise ValueError("gains must be strictly positive")
        object.__setattr__(self, "k_T", k_T)
        object.__setattr__(self, "k_nu", k_nu)


@dataclass(frozen=True)
class TaskCommand:
    u: np.ndarray

    @property
    def a_T(self) -> np.ndarray:
        return self.u[:3]

    @property
    def alpha_T(self) -> np.ndarray:
        return self.u[3:]


def skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def exp_so3(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    K = skew(w)
    if th < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + np.sin(th) / th * K + (1.0 - np.cos(th)) / th**2 * K @ K


def log_so3(R) -> np.ndarray:
    """Rotation vector of ``R``, norm in [0, pi].

    At exactly pi the axis sign is ambiguous; the lexicographically larger of
    the two candidates (first nonzero component positive) is returned.
    """
    R = np.asarray(R, dtype=float)
    vee = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = 0.5 * (np.trace(R) - 1.0)
    s = 0.5 * np.linalg.norm(vee)
    th = np.arctan2(s, c)
    if c > 0.0:
        # th < pi/2; th / sin(th) is well conditioned
        if th < 1e-8:
            return 0.5 * vee
        return (th / (2.0 * s)) * vee
    B = (0.5 * (R + R.T) - c * np.eye(3)) / (1.0 - c)
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / np.sqrt(B[k, k])
    axis /= np.linalg.norm(axis)
    d = axis @ vee
    if abs(d) > 1e-12:
        if d < 0:
            axis = -axis
    else:
        nz = axis[np.abs(axis) > 1e-12]
        if nz.size and nz[0] < 0:
            axis = -axis
    return th * axis


def orientation_error(R_r, R_e) -> np.ndarray:
    """World-frame rotation vector taking ``R_e`` onto ``R_r``.

    Equal to ``R_e @ log(R_e.T @ R_r)``, so ``exp(e) @ R_e == R_r``.
    """
    return log_so3(np.asarray(R_r) @ np.asarray(R_e).T)


def pose_error(ref, ee) -> np.ndarray:
    """6-vector (position error, orientation error) between a reference and an EE pose."""
    return np.concatenate([np.asarray(ref.p_r) - ee.p, orientation_error(ref.R_r, ee.R)])


def cascaded_pd(e_T, nu_e, gains: TaskGains) -> TaskCommand:
    """Outer loop: velocity demand ``k_T * e``; inner loop: ``k_nu * (demand - nu_e)``."""
    nu_e = nu_e.vector() if hasattr(nu_e, "vector") else np.asarray(nu_e, dtype=float)
    nu_T = gains.k_T * np.asarray(e_T, dtype=float)
    return TaskCommand(gains.k_nu * (nu_T - nu_e))
