"""Experiment configuration: YAML file <-> ExperimentConfig."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .joint_control import RacWeights
from .kinematics import KinematicModel, load_model_file, panda
from .metrics import EPS_SF, TRANSIENT
from .reference import DEFAULT_CENTER, Trajectory
from .task_control import TaskGains

MODES = ("slosh_free", "baseline")
BUNDLED_MODEL = "panda"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    trajectory: Trajectory
    model_path: str = BUNDLED_MODEL
    mode: str = "slosh_free"
    dt: float = 1e-3
    psi: float = 0.0
    gains: TaskGains = field(default_factory=TaskGains)
    weights: RacWeights | None = None
    q_init: np.ndarray | None = None
    transient: float = TRANSIENT
    eps_sf: float = EPS_SF

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        steps = self.trajectory.T / self.dt
        if abs(steps - round(steps)) > 1e-6:
            raise ConfigError(f"navigation time {self.trajectory.T} is not a multiple of dt={self.dt}")

    @property
    def T(self) -> float:
        return self.trajectory.T

    def load_model(self) -> KinematicModel:
        if self.model_path == BUNDLED_MODEL:
            return panda()
        return load_model_file(self.model_path)

    def with_(self, **changes) -> "ExperimentConfig":
        """Copy with changes; ``T`` and ``kind`` are forwarded to the trajectory."""
        traj_changes = {k: changes.pop(k) for k in ("T", "kind") if k in changes}
        cfg = replace(self, **changes)
        if traj_changes:
            cfg = replace(cfg, trajectory=replace(cfg.trajectory, **traj_changes))
        return cfg

    def resolved_weights(self, n: int) -> RacWeights:
        return self.weights if self.weights is not None else RacWeights.uniform(n)

    def to_dict(self) -> dict:
        tr = self.trajectory
        w = self.resolved_weights(self.load_model().n)
        return {
            "model": self.model_path,
            "mode": self.mode,
            "dt": self.dt,
            "trajectory": {
                "kind": tr.kind,
                "T": tr.T,
                "t0": tr.t0,
                "center": list(tr.center),
                "params": _plain(tr.params),
                "psi": self.psi,
            },
            "gains": {"k_T": self.gains.k_T.tolist(), "k_nu": self.gains.k_nu.tolist()},
            "weights": {"w_q": w.w_q.tolist(), "w_qd": w.w_qd.tolist(),
                        "w_qdd": w.w_qdd.tolist(), "w_slack": w.w_slack.tolist()},
            "q_init": None if self.q_init is None else np.asarray(self.q_init).tolist(),
            "metrics": {"transient": self.transient, "eps_sf_deg": float(np.rad2deg(self.eps_sf))},
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _vector(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"{name} must be a scalar or a {n}-vector")
    return arr


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(data, dict) or "trajectory" not in data:
        raise ConfigError("config needs a 'trajectory' section")
    tr = dict(data["trajectory"])
    try:
        traj = Trajectory(
            kind=tr["kind"],
            T=float(tr["T"]),
            center=tuple(tr.get("center", DEFAULT_CENTER)),
            params=dict(tr.get("params") or {}),
            t0=float(tr.get("t0", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad trajectory section: {exc}") from exc
    model_path = str(data.get("model", BUNDLED_MODEL))
    if model_path != BUNDLED_MODEL and base_dir is not None and not Path(model_path).is_absolute():
        model_path = str((base_dir / model_path).resolve())
    gains_d = data.get("gains") or {}
    k_T = _vector(gains_d.get("k_T", 10.0), 6, "k_T")
    k_nu = _vector(gains_d["k_nu"], 6, "k_nu") if "k_nu" in gains_d else None
    weights = None
    if data.get("weights"):
        w = data["weights"]
        n = len(np.atleast_1d(w.get("w_q", np.zeros(7)))) if np.ndim(w.get("w_q", 0.0)) else 7
        weights = RacWeights(
            _vector(w.get("w_q", 1e-8), n, "w_q"), _vector(w.get("w_qd", 1.0), n, "w_qd"),
            _vector(w.get("w_qdd", 1e-8), n, "w_qdd"), _vector(w.get("w_slack", 1e3), 6, "w_slack"),
        )
    metrics = data.get("metrics") or {}
    q_init = data.get("q_init")
    return ExperimentConfig(
        trajectory=traj,
        model_path=model_path,
        mode=str(data.get("mode", "slosh_free")),
        dt=float(data.get("dt", 1e-3)),
        psi=float(tr.get("psi", 0.0)),
        gains=TaskGains(k_T, k_nu),
        weights=weights,
        q_init=None if q_init is None else np.asarray(q_init, dtype=float),
        transient=float(metrics.get("transient", TRANSIENT)),
        eps_sf=float(np.deg2rad(metrics.get("eps_sf_deg", np.rad2deg(EPS_SF)))),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(data, base_dir=path.parent)


def bundled_config(name: str) -> ExperimentConfig:
    """One of the shipped case-study configs: loop, lissajous, helix, loop_real, lissajous_real."""
    text = resources.files("sloshfree.data").joinpath(f"configs/{name}.yaml").read_text()
    return config_from_dict(yaml.safe_load(text))


def sweep_times(path_or_name) -> list[float] | None:
    """The optional ``sweep.times`` list of a config file."""
    p = Path(path_or_name)
    if p.is_file():
        data = yaml.safe_load(p.read_text())
    else:
        data = yaml.safe_load(resources.files("sloshfree.data").joinpath(f"configs/{path_or_name}.yaml").read_text())
    times = (data.get("sweep") or {}).get("times")
    return None if times is None else [float(t) for t in times]
