"""Reference trajectories and the quadrotor flatness map to a slosh-free pose.

A trajectory is a geometric path ``P(u)``, ``u in [0, 1]``, traversed with a
rest-to-rest 9th-order time law ``u = s(t)``. Position derivatives up to snap
follow from the chain rule, so velocity, acceleration and jerk vanish at both
ends of the navigation window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.interpolate import make_interp_spline

G_COMP = np.array([0.0, 0.0, 9.81])
EPS_ACC = 1e-3
EPS_CROSS = 1e-6
DEFAULT_CENTER = (0.5, 0.0, 0.35)

KINDS = ("loop", "lissajous", "helix", "custom")


class DegenerateReference(ValueError):
    """The flatness map is undefined: free fall or thrust parallel to the yaw vector."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


def _time_law_coeffs():
    # s(x) = sum_k c_k x^k with s(0)=0, s(1)=1 and derivatives 1..4 zero at both ends
    # closed form: s(x) = x^5 * sum_{j=0}^{4} C(4+j, j) (1-x)^j
    poly = np.polynomial.Polynomial([0.0])
    one_minus = np.polynomial.Polynomial([1.0, -1.0])
    for j in range(5):
        poly = poly + comb(4 + j, j) * one_minus**j
    poly = poly * np.polynomial.Polynomial([0, 0, 0, 0, 0, 1.0])
    return [poly.deriv(k) for k in range(5)]


_TIME_LAW = _time_law_coeffs()
# peak of ds/dx on [0, 1]; attained at x = 1/2
TIME_LAW_PEAK_RATE = 315.0 / 128.0


def time_scaling(T: float, t: float) -> tuple[float, float, float, float, float]:
    """Rest-to-rest time law and its first four time derivatives."""
    if not T > 0:
        raise ValueError(f"navigation time must be positive, got {T}")
    if t < 0 or t > T:
        raise ValueError(f"t={t} outside [0, {T}]")
    x = t / T
    return tuple(float(_TIME_LAW[k](x)) / T**k for k in range(5))


@dataclass(frozen=True)
class ReferenceSample:
    t: float
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    j: np.ndarray
    s: np.ndarray


@dataclass(frozen=True)
class SloshFreePose:
    p_r: np.ndarray
    R_r: np.ndarray
    degenerate: str | None = None


@dataclass(frozen=True)
class Trajectory:
    """Immutable path description plus navigation window ``[t0, t0 + T]``.

    ``params`` depends on ``kind``:

    - loop: ``radius``, ``tilt`` (rad, plane inclination about the y axis)
    - lissajous: ``amplitudes`` (Ax, Ay, Az), ``frequencies`` (default 2, 3, 1),
      each axis ``A sin(f pi u)`` so the figure closes at u = 1
    - helix: ``radius``, ``turns``, ``pitch`` (rise per turn)
    - custom: ``points`` (k x 3 waypoints, k >= 6), interpolated by a quintic spline
    """

    kind: str
    T: float
    center: tuple = DEFAULT_CENTER
    params: dict = field(default_factory=dict)
    t0: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if not self.T > 0:
            raise ValueError(f"navigation time must be positive, got {self.T}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "params", {**_DEFAULTS[self.kind], **self.params})
        if self.kind == "custom":
            pts = np.asarray(self.params["points"], dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 6:
                raise ValueError("custom trajectory needs at least 6 three-dimensional points")
            u = np.linspace(0.0, 1.0, pts.shape[0])
            object.__setattr__(self, "_spline", make_interp_spline(u, pts, k=5))

    @property
    def tf(self) -> float:
        return self.t0 + self.T

    def path(self, u: float) -> np.ndarray:
        """Path point and its first four derivatives w.r.t. the phase, shape (5, 3)."""
        c = np.asarray(self.center)
        out = np.zeros((5, 3))
        p = self.params
        if self.kind == "loop":
            r, beta = float(p["radius"]), float(p["tilt"])
            e1 = np.array([0.0, 1.0, 0.0])
            e2 = np.array([np.cos(beta), 0.0, np.sin(beta)])
            w = 2.0 * np.pi
            th = w * u
            for k in range(5):
                out[k] = r * w**k * (_cos_d(th, k) * e1 + _sin_d(th, k) * e2)
        elif self.kind == "lissajous":
            amp = np.asarray(p["amplitudes"], dtype=float)
            freq = np.asarray(p["frequencies"], dtype=float) * np.pi
            for k in range(5):
                out[k] = amp * freq**k * np.array([_sin_d(f * u, k) for f in freq])
        elif self.kind == "helix":
            r, turns, pitch = float(p["radius"]), float(p["turns"]), float(p["pitch"])
            w = 2.0 * np.pi * turns
            th = w * u
            for k in range(5):
                out[k, 0] = r * w**k * _cos_d(th, k)
                out[k, 1] = r * w**k * _sin_d(th, k)
            height = pitch * turns
            out[0, 2] = height * (u - 0.5)
            out[1, 2] = height
        else:
            for k in range(5):
                out[k] = self._spline(u, nu=k) - (c if k == 0 else 0.0)
        out[0] += c
        return out


_DEFAULTS = {
    "loop": {"radius": 0.25, "tilt": np.pi / 3},
    "lissajous": {"amplitudes": (0.25, 0.2, 0.1), "frequencies": (2.0, 3.0, 1.0)},
    "helix": {"radius": 0.2, "turns": 2.0, "pitch": 0.2},
    "custom": {},
}


def _sin_d(x, k):
    return (np.sin(x), np.cos(x), -np.sin(x), -np.cos(x))[k % 4]


def _cos_d(x, k):
    return (np.cos(x), -np.sin(x), -np.cos(x), np.sin(x))[k % 4]


def eval_trajectory(traj: Trajectory, t: float) -> ReferenceSample:
    tol = 1e-12 * max(1.0, abs(traj.tf))
    if t < traj.t0 - tol or t > traj.tf + tol:
        raise ValueError(f"t={t} outside navigation window [{traj.t0}, {traj.tf}]")
    tau = min(max(t - traj.t0, 0.0), traj.T)
    s, s1, s2, s3, s4 = time_scaling(traj.T, tau)
    P = traj.path(s)
    v = P[1] * s1
    a = P[2] * s1**2 + P[1] * s2
    j = P[3] * s1**3 + 3.0 * P[2] * s1 * s2 + P[1] * s3
    snap = P[4] * s1**4 + 6.0 * P[3] * s1**2 * s2 + P[2] * (3.0 * s2**2 + 4.0 * s1 * s3) + P[1] * s4
    return ReferenceSample(t, P[0], v, a, j, snap)


def slosh_free_orientation(a_r, psi: float = 0.0, g_comp=G_COMP) -> np.ndarray:
    """Rotation whose z axis is aligned with ``a_r + g_comp``; yaw fixed by ``psi``."""
    a_g = np.asarray(a_r, dtype=float) + np.asarray(g_comp, dtype=float)
    norm = np.linalg.norm(a_g)
    if norm <= EPS_ACC:
        raise DegenerateReference("free_fall", f"resultant acceleration {norm:.3g} m/s^2 below threshold")
    z = a_g / norm
    x_aux = np.array([np.cos(psi), np.sin(psi), 0.0])
    y = np.cross(z, x_aux)
    ny = np.linalg.norm(y)
    if ny <= EPS_CROSS:
        raise DegenerateReference("gimbal", "resultant acceleration parallel to the yaw vector")
    y /= ny
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


def slosh_free_orientations(a_r, psi, g_comp=G_COMP) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`slosh_free_orientation` for ``a_r`` of shape (N, 3).

    Returns ``(R, valid)`` with ``R`` of shape (N, 3, 3); rows where the map
    is degenerate are NaN and flagged ``False`` in ``valid``.
    """
    a_g = np.atleast_2d(np.asarray(a_r, dtype=float)) + np.asarray(g_comp, dtype=float)
    psi = np.broadcast_to(np.asarray(psi, dtype=float), a_g.shape[:1])
    norm = np.linalg.norm(a_g, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = a_g / norm[:, None]
        x_aux = np.column_stack([np.cos(psi), np.sin(psi), np.zeros_like(psi)])
        y = np.cross(z, x_aux)
        ny = np.linalg.norm(y, axis=1)
        valid = (norm > EPS_ACC) & (ny > EPS_CROSS)
        y /= ny[:, None]
        x = np.cross(y, z)
    R = np.stack([x, y, z], axis=2)
    R[~valid] = np.nan
    return R, valid


def slosh_free_reference(
    traj: Trajectory,
    t: float,
    psi: float = 0.0,
    g_comp=G_COMP,
    previous_R=None,
    sample: ReferenceSample | None = None,
) -> SloshFreePose:
    """Position reference expanded to a full slosh-free pose.

    On a degenerate flatness map the orientation is held at ``previous_R``
    (identity if none is given) and ``degenerate`` names the cause.
    """
    if sample is None:
        sample = eval_trajectory(traj, t)
    try:
        R = slosh_free_orientation(sample.a, psi, g_comp)
    except DegenerateReference as exc:
        held = np.eye(3) if previous_R is None else np.array(previous_R, dtype=float)
        return SloshFreePose(sample.p, held, exc.reason)
    return SloshFreePose(sample.p, R)


def baseline_reference(traj: Trajectory, t: float, sample: ReferenceSample | None = None) -> SloshFreePose:
    """Non slosh-free reference: same position, container kept upright."""
    if sample is None:
        sample = eval_trajectory(traj, t)
    return SloshFreePose(sample.p, np.eye(3))
