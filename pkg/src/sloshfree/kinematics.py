"""Differential kinematics of serial manipulators described by DH rows.

All vector quantities (twists, accelerations, Jacobian columns) are expressed
in the world (base) frame, with angular velocity as a free vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

RIGID_TOL = 1e-9
CONVENTIONS = ("modified_dh", "standard_dh")


class ModelError(ValueError):
    """Raised for malformed or inconsistent robot model descriptions."""


@dataclass(frozen=True)
class DHRow:
    a: float
    d: float
    alpha: float
    theta_offset: float = 0.0


@dataclass(frozen=True)
class Limits:
    q_min: np.ndarray
    q_max: np.ndarray
    qd_min: np.ndarray
    qd_max: np.ndarray
    qdd_min: np.ndarray
    qdd_max: np.ndarray
    qddd_min: np.ndarray
    qddd_max: np.ndarray

    BANDS = ("q", "qd", "qdd", "qddd")

    def __post_init__(self):
        n = None
        for band in self.BANDS:
            lo = np.asarray(getattr(self, band + "_min"), dtype=float)
            hi = np.asarray(getattr(self, band + "_max"), dtype=float)
            object.__setattr__(self, band + "_min", lo)
            object.__setattr__(self, band + "_max", hi)
            if lo.ndim != 1 or lo.shape != hi.shape:
                raise ModelError(f"limit band {band!r} has mismatched shapes")
            if n is None:
                n = lo.size
            elif lo.size != n:
                raise ModelError(f"limit band {band!r} has {lo.size} entries, expected {n}")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ModelError(f"invalid limit band {band!r}: non-finite entry")
            if np.any(lo >= hi):
                bad = int(np.flatnonzero(lo >= hi)[0])
                raise ModelError(f"invalid limit band {band!r}: min >= max at joint {bad}")

    @property
    def n(self) -> int:
        return self.q_min.size

    def contains(self, q, qd=None, qdd=None, tol: float = 0.0) -> bool:
        checks = [(q, self.q_min, self.q_max)]
        if qd is not None:
            checks.append((qd, self.qd_min, self.qd_max))
        if qdd is not None:
            checks.append((qdd, self.qdd_min, self.qdd_max))
        return all(np.all(v >= lo - tol) and np.all(v <= hi + tol) for v, lo, hi in checks)


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    @classmethod
    def at_rest(cls, q) -> "JointState":
        q = np.asarray(q, dtype=float)
        return cls(q.copy(), np.zeros_like(q), np.zeros_like(q))


@dataclass(frozen=True)
class EePose:
    p: np.ndarray
    R: np.ndarray

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.p
        return T


@dataclass(frozen=True)
class Twist:
    v: np.ndarray
    w: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.v, self.w])


@dataclass(frozen=True)
class SpatialAccel:
    a: np.ndarray
    wd: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.wd])


def is_rotation(R, tol: float = RIGID_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.abs(R.T @ R - np.eye(3)).max() < tol and abs(np.linalg.det(R) - 1.0) < tol)


@dataclass(frozen=True)
class KinematicModel:
    dh_rows: tuple
    tool_transform: np.ndarray
    limits: Limits
    name: str = "robot"
    home: np.ndarray | None = None
    convention: str = "modified_dh"
    # constant per-joint factors around Rz(q), cached at construction
    _pre: np.ndarray = field(init=False, repr=False, compare=False)
    _post: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = tuple(self.dh_rows)
        if len(rows) < 1:
            raise ModelError("model needs at least one joint")
        object.__setattr__(self, "dh_rows", rows)
        for i, r in enumerate(rows):
            if not all(np.isfinite([r.a, r.d, r.alpha, r.theta_offset])):
                raise ModelError(f"DH row {i} has a non-finite entry")
        tool = np.asarray(self.tool_transform, dtype=float)
        if tool.shape != (4, 4) or not is_rotation(tool[:3, :3]) or not np.allclose(
            tool[3], [0, 0, 0, 1], atol=RIGID_TOL, rtol=0
        ):
            raise ModelError("invalid tool transform: not a rigid homogeneous transform")
        object.__setattr__(self, "tool_transform", tool)
        if self.limits.n != len(rows):
            raise ModelError(
                f"dimension mismatch: {len(rows)} DH rows but limits for {self.limits.n} joints"
            )
        if self.home is not None:
            home = np.asarray(self.home, dtype=float)
            if home.shape != (len(rows),):
                raise ModelError("dimension mismatch: home configuration length")
            object.__setattr__(self, "home", home)
        if self.convention not in CONVENTIONS:
            raise ModelError(f"unknown DH convention {self.convention!r}")
        pre = np.empty((len(rows), 4, 4))
        post = np.empty((len(rows), 4, 4))
        for i, r in enumerate(rows):
            ca, sa = np.cos(r.alpha), np.sin(r.alpha)
            rx_tx = np.array([[1, 0, 0, r.a], [0, ca, -sa, 0], [0, sa, ca, 0], [0, 0, 0, 1.0]])
            tz = np.eye(4)
            tz[2, 3] = r.d
            if self.convention == "modified_dh":
                pre[i], post[i] = rx_tx, tz
            else:
                pre[i], post[i] = np.eye(4), tz @ rx_tx
        object.__setattr__(self, "_pre", pre)
        object.__setattr__(self, "_post", post)

    @property
    def n(self) -> int:
        return len(self.dh_rows)

    def _check(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ValueError(f"dimension mismatch: expected {self.n} joint values, got {q.shape}")
        return q

    def frames(self, q) -> tuple[np.ndarray, np.ndarray]:
        """Return (joint axis frames, end-effector transform).

        ``frames[i]`` is a world transform whose z axis is the rotation axis of
        joint i and whose origin lies on that axis.
        """
        q = self._check(q)
        out = np.empty((self.n, 4, 4))
        T = np.eye(4)
        rz = np.eye(4)
        for i, r in enumerate(self.dh_rows):
            th = q[i] + r.theta_offset
            ct, st = np.cos(th), np.sin(th)
            rz[0, 0], rz[0, 1], rz[1, 0], rz[1, 1] = ct, -st, st, ct
            T = T @ self._pre[i]
            out[i] = T
            T = T @ rz @ self._post[i]
        return out, T @ self.tool_transform


def load_model_file(path) -> KinematicModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    return load_model(path.read_text())


def load_model(source) -> KinematicModel:
    """Build a model from YAML model-file content (or an already parsed mapping)."""
    if isinstance(source, str):
        try:
            data = yaml.safe_load(source)
        except yaml.YAMLError as exc:
            raise ModelError(f"cannot parse model description: {exc}") from exc
    else:
        data = source
    if not isinstance(data, dict):
        raise ModelError("cannot parse model description: expected a mapping")
    try:
        rows = tuple(
            DHRow(float(j["a"]), float(j["d"]), float(j["alpha"]), float(j.get("theta_offset", 0.0)))
            for j in data["joints"]
        )
        lim = data["limits"]
        limits = Limits(**{k: np.asarray(lim[k], dtype=float) for k in (
            "q_min", "q_max", "qd_min", "qd_max", "qdd_min", "qdd_max", "qddd_min", "qddd_max")})
        tool = np.asarray(data.get("tool_transform", np.eye(4)), dtype=float)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"cannot parse model description: missing or bad field {exc}") from exc
    return KinematicModel(rows, tool, limits, name=str(data.get("name", "robot")),
                          home=data.get("home"), convention=str(data.get("convention", "modified_dh")))


def panda() -> KinematicModel:
    """The bundled Franka Emika Panda model."""
    return load_model(resources.files("sloshfree.data").joinpath("panda.yaml").read_text())


def forward_kinematics(model: KinematicModel, q) -> EePose:
    _, T = model.frames(q)
    return EePose(T[:3, 3].copy(), T[:3, :3].copy())


def _cross(a, b):
    # np.cross over the last axis, without its axis-shuffling overhead
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _axes(model, q):
    frames, T = model.frames(q)
    return frames[:, :3, 2], frames[:, :3, 3], T


def jacobian(model: KinematicModel, q) -> np.ndarray:
    z, o, T = _axes(model, q)
    J = np.empty((6, model.n))
    J[:3] = _cross(z, T[:3, 3] - o).T
    J[3:] = z.T
    return J


def _jacobian_hessian(model, q, with_pose=False):
    z, o, T = _axes(model, q)
    n = model.n
    jv = _cross(z, T[:3, 3] - o)
    # cross(z_j, jv_i) for all pairs; the linear block is symmetric in (i, j)
    zxjv = _cross(z[:, None, :], jv[None, :, :])
    upper = np.triu(np.ones((n, n), dtype=bool))
    hv = np.where(upper[:, :, None], zxjv, zxjv.transpose(1, 0, 2))
    hw = _cross(z[:, None, :], z[None, :, :])
    hw[~np.triu(np.ones((n, n), dtype=bool), k=1)] = 0.0
    H = np.empty((n, 6, n))
    H[:, :3, :] = hv.transpose(0, 2, 1)
    H[:, 3:, :] = hw.transpose(0, 2, 1)
    J = np.empty((6, n))
    J[:3] = jv.T
    J[3:] = z.T
    if with_pose:
        return T, J, H
    return J, H


def hessian(model: KinematicModel, q) -> np.ndarray:
    """Kinematic Hessian, shape (n, 6, n), with ``H[i] = dJ/dq_i``."""
    return _jacobian_hessian(model, q)[1]


def jacobian_and_hessian(model: KinematicModel, q) -> tuple[np.ndarray, np.ndarray]:
    return _jacobian_hessian(model, q)


def pose_jacobian_hessian(model: KinematicModel, q) -> tuple[EePose, np.ndarray, np.ndarray]:
    """Forward kinematics, Jacobian and Hessian from a single pass over the chain."""
    T, J, H = _jacobian_hessian(model, q, with_pose=True)
    return EePose(T[:3, 3].copy(), T[:3, :3].copy()), J, H


def velocity_product(H: np.ndarray, qd) -> np.ndarray:
    """The contraction sum_ij qd_i H[i, :, j] qd_j."""
    qd = np.asarray(qd, dtype=float)
    return np.einsum("i,ikj,j->k", qd, H, qd)


def _state(model, state: JointState):
    n = model.n
    for name in ("q", "qd", "qdd"):
        v = np.asarray(getattr(state, name))
        if v.shape != (n,):
            raise ValueError(f"dimension mismatch: {name} has shape {v.shape}, expected ({n},)")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite entry in {name}")


def ee_velocity(model: KinematicModel, state: JointState) -> Twist:
    _state(model, state)
    nu = jacobian(model, state.q) @ state.qd
    return Twist(nu[:3], nu[3:])


def ee_acceleration(model: KinematicModel, state: JointState) -> SpatialAccel:
    _state(model, state)
    J, H = _jacobian_hessian(model, state.q)
    alpha = J @ state.qdd + velocity_product(H, state.qd)
    return SpatialAccel(alpha[:3], alpha[3:])
