"""Pointwise error functionals and aggregate benchmark metrics of a run."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .joint_control import DELTA_TOL
from .reference import EPS_ACC, G_COMP

TRANSIENT = 0.2
EPS_SF = np.deg2rad(1.0)


@dataclass(frozen=True)
class RunMetrics:
    E_p: float
    E_sf: float
    max_e_sf: float
    Sl: float
    infeasible: bool

    def as_dict(self) -> dict:
        return asdict(self)


def position_error(p_r, p_e) -> float:
    return float(np.linalg.norm(np.asarray(p_r, dtype=float) - np.asarray(p_e, dtype=float)))


def slosh_free_angle(a_e, R_e, g_comp=G_COMP) -> float:
    """Angle between the container axis ``R_e e3`` and the resultant acceleration.

    Returns NaN when the resultant acceleration vanishes (free fall); callers
    treat that sample as a gap.
    """
    a_g = np.asarray(a_e, dtype=float) + np.asarray(g_comp, dtype=float)
    if np.linalg.norm(a_g) <= EPS_ACC:
        return float("nan")
    axis = np.asarray(R_e, dtype=float)[:, 2]
    vertical = axis @ a_g
    horizontal = a_g - vertical * axis
    return float(np.arctan2(np.linalg.norm(horizontal), vertical))


def _trapezoid_with_gaps(y, t) -> float:
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y[:-1]) & np.isfinite(y[1:])
    seg = 0.5 * (y[:-1] + y[1:]) * np.diff(t)
    return float(seg[ok].sum())


def aggregate(log, transient: float = TRANSIENT, delta_tol: float = DELTA_TOL) -> RunMetrics:
    """Trapezoidal areas of e_p, e_sf and |slack| plus the post-transient peak e_sf."""
    t = np.asarray(log.t, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two log samples to aggregate")
    e_sf = np.asarray(log.e_sf, dtype=float)
    slack = np.abs(np.asarray(log.slack, dtype=float))
    late = e_sf[(t - t[0] >= transient - 1e-12) & np.isfinite(e_sf)]
    return RunMetrics(
        E_p=float(np.trapezoid(log.e_p, t)),
        E_sf=_trapezoid_with_gaps(e_sf, t),
        max_e_sf=float(late.max()) if late.size else 0.0,
        Sl=float(np.trapezoid(slack, t, axis=0).sum()),
        infeasible=bool(slack.size and slack.max() > delta_tol),
    )
