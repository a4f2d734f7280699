"""Command-line front end: ``sloshfree run | sweep | validate``.

Exit codes: 0 success, 1 usage error, 2 run failure, 3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .config import MODES, ConfigError, ExperimentConfig, bundled_config, load_config, sweep_times
from .metrics import aggregate
from .plots import metric_chart
from .selfcheck import format_table, run_checks
from .simulation import IKError, RunFailure, RunLog, run_experiment

log = logging.getLogger("sloshfree")

EXIT_OK, EXIT_USAGE, EXIT_RUN, EXIT_VALIDATION = 0, 1, 2, 3

RUN_COLUMNS = (
    ["t"]
    + [f"q{i}" for i in range(7)]
    + [f"qd{i}" for i in range(7)]
    + [f"qdd{i}" for i in range(7)]
    + [f"d{i}" for i in range(6)]
    + ["pex", "pey", "pez", "prx", "pry", "prz", "e_p", "e_sf"]
    + ["qe_w", "qe_x", "qe_y", "qe_z", "qr_w", "qr_x", "qr_y", "qr_z", "degenerate_flag"]
)
SWEEP_COLUMNS = ("T", "mode", "E_p", "E_sf", "max_e_sf", "Sl", "infeasible", "status", "message")
PLOTTED = (("E_p", "position error area E_p [m s]", False),
           ("E_sf", "slosh-free error area E_sf [rad s]", False),
           ("max_e_sf", "peak slosh-free error [rad]", False),
           ("Sl", "slack area Sl", True))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class SweepSpec:
    config: ExperimentConfig
    times: tuple
    modes: tuple
    out: Path

    def __post_init__(self):
        if not self.times:
            raise UsageError("sweep needs at least one navigation time")
        if any(not t > 0 for t in self.times):
            raise UsageError("navigation times must be positive")
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            raise UsageError(f"unknown mode(s) {bad}; expected {MODES}")


def resolve_config(ref: str) -> ExperimentConfig:
    """A config file path, or the name of a bundled case study."""
    path = Path(ref)
    if path.is_file():
        return load_config(path)
    bundled = resources.files("sloshfree.data").joinpath(f"configs/{ref}.yaml")
    if bundled.is_file():
        return bundled_config(ref)
    raise UsageError(f"config not found: {ref}")


def _quaternions(R: np.ndarray) -> np.ndarray:
    xyzw = Rotation.from_matrix(R).as_quat()
    wxyz = np.column_stack([xyzw[:, 3], xyzw[:, :3]])
    wxyz[wxyz[:, 0] < 0] *= -1.0
    return wxyz


def run_table(run: RunLog) -> np.ndarray:
    """RunLog as a 2-D array in ``RUN_COLUMNS`` order."""
    return np.column_stack([
        run.t, run.q, run.qd, run.qdd, run.slack, run.p_e, run.p_r, run.e_p, run.e_sf,
        _quaternions(run.R_e), _quaternions(run.R_r), run.degenerate.astype(float),
    ])


def write_run_csv(run: RunLog, path: Path) -> None:
    table = run_table(run)
    if table.shape[1] != len(RUN_COLUMNS):
        raise ValueError(f"run log has {table.shape[1]} columns, schema has {len(RUN_COLUMNS)}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for row in table:
            w.writerow([repr(float(v)) for v in row[:-1]] + [int(row[-1])])


def metrics_document(config: ExperimentConfig, run: RunLog) -> dict:
    m = aggregate(run, transient=config.transient)
    doc = m.as_dict()
    conf = config.to_dict()
    doc.update(mode=config.mode, T=config.T, trajectory=conf["trajectory"])
    doc["provenance"] = {"gains": conf["gains"], "weights": conf["weights"], "dt": config.dt,
                         "model": conf["model"]}
    return doc


def cmd_run(config: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    try:
        run = run_experiment(config)
    except (RunFailure, IKError, FileNotFoundError, ValueError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    write_run_csv(run, out / "run.csv")
    doc = metrics_document(config, run)
    (out / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"E_p={doc['E_p']:.6g} E_sf={doc['E_sf']:.6g} max_e_sf={np.rad2deg(doc['max_e_sf']):.4g} deg "
          f"Sl={doc['Sl']:.3g} infeasible={doc['infeasible']}")
    return EXIT_OK


def _sweep_job(config: ExperimentConfig) -> dict:
    row = {"T": config.T, "mode": config.mode}
    try:
        m = aggregate(run_experiment(config), transient=config.transient)
    except Exception as exc:  # one failed run must not abort the sweep
        row.update(E_p=float("nan"), E_sf=float("nan"), max_e_sf=float("nan"), Sl=float("nan"),
                   infeasible=True, status="failed", message=str(exc).splitlines()[0])
        return row
    row.update(m.as_dict(), status="ok", message="")
    return row


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[dict]:
    jobs = [spec.config.with_(T=T, mode=mode) for T in sorted(spec.times) for mode in sorted(spec.modes)]
    if workers <= 1:
        return [_sweep_job(c) for c in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_job, jobs))


def write_sweep(rows: list[dict], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r["T"])), r["mode"]]
                       + [repr(float(r[k])) for k in ("E_p", "E_sf", "max_e_sf", "Sl")]
                       + [int(bool(r["infeasible"])), r["status"], r["message"]])
    infeasible_T = [r["T"] for r in rows if r["mode"] == "slosh_free" and r["infeasible"]]
    for key, title, log_y in PLOTTED:
        series = {}
        for mode in sorted({r["mode"] for r in rows}):
            sel = [r for r in rows if r["mode"] == mode]
            series[mode] = ([r["T"] for r in sel], [r[key] for r in sel])
        (out / f"{key}.svg").write_text(metric_chart(title, series, infeasible_T, log_y=log_y))


def cmd_sweep(spec: SweepSpec, workers: int) -> int:
    rows = run_sweep(spec, workers)
    write_sweep(rows, spec.out)
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"T={r['T']} mode={r['mode']} failed: {r['message']}", file=sys.stderr)
    print(f"{len(rows)} runs, {len(failed)} failed; results in {spec.out / 'sweep.csv'}")
    return EXIT_RUN if failed else EXIT_OK


def cmd_validate(model: str | None) -> int:
    results = run_checks(model)
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def _parse_times(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"--times expects a comma-separated list of numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sloshfree", description="Slosh-free tracking simulator for serial manipulators.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="simulate one configuration")
    r.add_argument("--config", required=True, help="config file or bundled case name (loop, lissajous, helix, ...)")
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--mode", choices=MODES)
    s = sub.add_parser("sweep", help="sweep the navigation time in both modes")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--times", help="comma-separated navigation times; default: the config's sweep.times")
    s.add_argument("--mode", choices=MODES + ("both",), default="both")
    s.add_argument("--workers", type=int, default=1)
    v = sub.add_parser("validate", help="kinematics and solver self-checks")
    v.add_argument("model", nargs="?", help="model file (default: bundled Panda)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "validate":
            return cmd_validate(args.model)
        config = resolve_config(args.config)
        if args.verb == "run":
            if args.mode:
                config = config.with_(mode=args.mode)
            return cmd_run(config, args.out)
        times = _parse_times(args.times) if args.times else sweep_times(args.config)
        if not times:
            raise UsageError("no navigation times: pass --times or add sweep.times to the config")
        modes = MODES if args.mode == "both" else (args.mode,)
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        spec = SweepSpec(config, tuple(times), tuple(modes), args.out)
        return cmd_sweep(spec, args.workers)
    except (UsageError, ConfigError) as exc:
        print(f"sloshfree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
