"""Command line experiment runner.

``scfem run <config>`` executes a driver from a flat ``key = value`` file and
writes ``history.csv``, ``timing.csv``, ``meta.txt`` and optional mesh
snapshots. ``scfem summarize <history.csv>`` fits log-log decay rates.

Exit codes: 0 tolerance reached, 2 budget stop, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .adaptive import (AdaptiveConfig, CollocationState, FineMeshSampler, IterationRecord,
                       scfe_driver, sc_driver)
from .estimators import SpatialSampleSet
from .mesh import write_snapshot
from .problems import PRESETS, get_problem
from .sparse_grid import collocation_points

OUTPUT_ENV = "SCFEM_OUTPUT_DIR"
HISTORY_COLUMNS = ("phase", "outer", "sweep", "n_indices", "n_points", "dofs",
                   "zeta_sc", "eta_fe", "total", "tol", "selected")
DRIVERS = ("scfe", "sc")
MIN_FIT_ROWS = 4

log = logging.getLogger("scfem")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    problem: str
    adaptive: AdaptiveConfig
    driver: str = "scfe"
    output_dir: str = "scfem_out"
    snapshot_every: int = 0
    max_steps: int = 15
    sampler_generations: int = 3


_RUN_KEYS = {"problem": str, "driver": str, "output_dir": str, "snapshot_every": int,
             "max_steps": int, "sampler_generations": int}


def _coerce(key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate the flat config format; unknown keys are errors."""
    types = {f.name: f.type for f in dataclasses.fields(AdaptiveConfig)}
    py = {"float": float, "int": int, "str": str, "bool": bool}
    run: dict = {}
    adaptive: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in run or key in adaptive:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in _RUN_KEYS:
            run[key] = _coerce(key, raw, _RUN_KEYS[key])
        elif key in types:
            adaptive[key] = _coerce(key, raw, py[str(types[key])])
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if "problem" not in run:
        raise ConfigError("missing required key 'problem'")
    if run["problem"] not in PRESETS:
        raise ConfigError(f"unknown problem {run['problem']!r}; choose from {sorted(PRESETS)}")
    if run.get("driver", "scfe") not in DRIVERS:
        raise ConfigError(f"driver must be one of {DRIVERS}")
    for key in ("snapshot_every", "sampler_generations"):
        if run.get(key, 0) < 0:
            raise ConfigError(f"{key} must be >= 0")
    if run.get("max_steps", 1) < 1:
        raise ConfigError("max_steps must be >= 1")
    try:
        cfg = AdaptiveConfig(**adaptive)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return RunConfig(adaptive=cfg, **run)


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def history_row(rec: IterationRecord) -> list[str]:
    sel = "" if rec.selected is None else "-".join(str(v) for v in rec.selected)
    return [rec.phase, str(rec.outer), str(rec.sweep), str(rec.n_indices), str(rec.n_points),
            str(rec.dofs), _num(rec.zeta_sc), _num(rec.eta_fe), _num(rec.total),
            _num(rec.tol), sel]


class _Writer:
    """Streams history and timing rows so a crash still leaves a partial record."""

    def __init__(self, out: Path, snapshot_every: int):
        self.out = out
        self.snapshot_every = snapshot_every
        self._hist = open(out / "history.csv", "w", newline="")
        self._time = open(out / "timing.csv", "w", newline="")
        self.history = csv.writer(self._hist, lineterminator="\n")
        self.timing = csv.writer(self._time, lineterminator="\n")
        self.history.writerow(HISTORY_COLUMNS)
        self.timing.writerow(("row", "phase", "elapsed"))
        self.rows = 0
        self.t0 = time.perf_counter()

    def __call__(self, rec: IterationRecord, state: CollocationState | None = None) -> None:
        self.history.writerow(history_row(rec))
        self.timing.writerow((self.rows, rec.phase, f"{time.perf_counter() - self.t0:.6f}"))
        self.rows += 1
        self._hist.flush()
        self._time.flush()
        if (state is not None and self.snapshot_every and rec.phase == "outer"
                and rec.outer % self.snapshot_every == 0):
            for k, p in enumerate(state.grid.points):
                write_snapshot(state.records[p].mesh, self.out / f"mesh_{k}_{rec.outer}.txt")

    def close(self) -> None:
        self._hist.close()
        self._time.close()


def _versions() -> dict[str, str]:
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scfem": __version__}


def _write_meta(out: Path, cfg: RunConfig, source: str, status: str, message: str,
                final: dict) -> None:
    lines = [f"config_file = {source}", f"problem = {cfg.problem}", f"driver = {cfg.driver}",
             f"snapshot_every = {cfg.snapshot_every}"]
    if cfg.driver == "sc":
        lines += [f"max_steps = {cfg.max_steps}",
                  f"sampler_generations = {cfg.sampler_generations}"]
    lines += [f"{k} = {v}" for k, v in dataclasses.asdict(cfg.adaptive).items()]
    lines += [f"version_{k} = {v}" for k, v in _versions().items()]
    lines += [f"status = {status}", f"message = {message}"]
    lines += [f"final_{k} = {v}" for k, v in final.items()]
    (out / "meta.txt").write_text("\n".join(lines) + "\n")


def _run_sc(cfg: RunConfig, writer: _Writer) -> tuple[str, str, dict]:
    problem = get_problem(cfg.problem)
    a = cfg.adaptive
    pi = SpatialSampleSet.uniform(a.n_pi, a.pi_seed, problem.label_of)
    sampler = FineMeshSampler(problem, pi, cfg.sampler_generations)
    res = sc_driver(problem, a.eps, a.profit, cfg.max_steps, a.n_theta, a.theta_seed,
                    a.n_pi, a.pi_seed, sampler=sampler, check_rectangles=False)
    for step, (I, z) in enumerate(zip(res.index_sets, res.zeta_sc)):
        n_points = len(collocation_points(I))
        sel = res.selected[step - 1] if step else None
        writer(IterationRecord("enrich" if step else "init", step, 0, len(I), n_points,
                               n_points * sampler.mesh.n_dofs, z, 0.0, z, None, sel))
    final = {"zeta_sc": repr(res.zeta_sc[-1]), "n_indices": len(res.index_sets[-1])}
    return res.status, "", final


def _run_scfe(cfg: RunConfig, writer: _Writer) -> tuple[str, str, dict]:
    res = scfe_driver(get_problem(cfg.problem), cfg.adaptive, writer)
    last = res.history[-1]
    final = {"zeta_sc": repr(last.zeta_sc), "eta_fe": repr(last.eta_fe),
             "total": repr(last.total), "dofs": last.dofs, "n_indices": last.n_indices,
             "n_points": last.n_points}
    return res.status, res.message, final


def run(config_path: str | os.PathLike) -> int:
    path = Path(config_path)
    try:
        cfg = parse_config(path.read_text())
    except (OSError, ConfigError, UnicodeDecodeError) as err:
        print(f"scfem: config error: {err}", file=sys.stderr)
        return 1
    out = Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        writer = _Writer(out, cfg.snapshot_every)
    except OSError as err:
        print(f"scfem: cannot write output: {err}", file=sys.stderr)
        return 1
    try:
        runner = _run_sc if cfg.driver == "sc" else _run_scfe
        status, message, final = runner(cfg, writer)
    except Exception as err:  # any failure in a run maps to exit code 1
        writer.close()
        _write_meta(out, cfg, str(path), "error", f"{type(err).__name__}: {err}", {})
        print(f"scfem: run failed: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    writer.close()
    _write_meta(out, cfg, str(path), status, message, final)
    print(f"status={status} output={out}")
    return 0 if status == "converged" else 2


def fit_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def read_history(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HISTORY_COLUMNS:
            raise ValueError("not a history file: header mismatch")
        return list(reader)


def summarize_rows(rows: list[dict[str, str]]) -> dict[str, tuple[float, int]]:
    """Slopes of eta_fe over fe_sweep rows and of total over outer rows, keyed by series.

    Rows with a nonpositive value are skipped. Series with fewer than four
    usable rows are left out; if none qualifies a ``ValueError`` is raised.
    """
    result = {}
    for phase, column in (("fe_sweep", "eta_fe"), ("outer", "total")):
        pts = [(float(r["dofs"]), float(r[column])) for r in rows
               if r["phase"] == phase and r[column] and float(r[column]) > 0]
        if len(pts) >= MIN_FIT_ROWS:
            x, y = zip(*pts)
            result[phase] = (fit_slope(x, y), len(pts))
    if not result:
        raise ValueError(f"need at least {MIN_FIT_ROWS} fe_sweep or outer rows to fit a rate")
    return result


def summarize(history_path: str | os.PathLike) -> int:
    try:
        fits = summarize_rows(read_history(history_path))
    except (OSError, ValueError, KeyError) as err:
        print(f"scfem: summarize error: {err}", file=sys.stderr)
        return 1
    for phase, (slope, n) in fits.items():
        series = "eta_fe" if phase == "fe_sweep" else "total"
        print(f"{series} vs dofs over {n} {phase} rows: slope {slope:.4f}")
    for phase, (slope, n) in fits.items():
        print(f"slope_{phase}={slope!r} rows_{phase}={n}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="scfem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a config file")
    p_run.add_argument("config")
    p_sum = sub.add_parser("summarize", help="fit decay rates from a history.csv")
    p_sum.add_argument("history")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.command == "run":
        return run(args.config)
    return summarize(args.history)


if __name__ == "__main__":
    sys.exit(main())
