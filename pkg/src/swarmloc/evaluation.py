"""Bias x random-error sensitivity sweep, runtime measurement and report files."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, SchemaError, SwarmLocError
from .filtering import FilterSettings, filter_frame_history
from .solver import SolverSettings, initial_guess, refine_with_restarts, track_sequence
from .stats import (
    ErrorStats,
    TestReport,
    choose_paired_test,
    paired_t_test,
    position_errors,
    summarize_arrays,
    wilcoxon_signed_rank,
)
from .swarm import RangingFrame, SwarmConfig
from .synthesis import ErrorModel, downsample, generate_trajectory, synthesize_rangings
from .trilateration import trilaterate_frame, trilaterate_sequence

FULL_BIAS_LEVELS = (0.0, 0.005, 0.01, 0.02)
FULL_SD_LEVELS = (0.0, 0.005, 0.01, 0.02, 0.04, 0.05, 0.06, 0.08, 0.10, 0.12)
REALISTIC_BIAS = 0.005
REALISTIC_SD = 0.05
MOCAP_RATE = 100.0
WARMUP_FRAMES = 5


@dataclass(frozen=True)
class SweepGrid:
    bias_levels: tuple[float, ...] = FULL_BIAS_LEVELS
    random_sd_levels: tuple[float, ...] = FULL_SD_LEVELS
    trials_per_cell: int = 3
    frames_per_trial: int = 1200
    base_seed: int = 0
    distribution: str = "gaussian"
    init_offset: float = 0.10
    window_seconds: float = 0.5

    def __post_init__(self):
        for name in ("bias_levels", "random_sd_levels"):
            levels = tuple(float(v) for v in getattr(self, name))
            if not levels:
                raise InputError(f"{name} must not be empty")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise InputError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, levels)
        if min(self.random_sd_levels) < 0:
            raise InputError("random_sd levels must be >= 0")
        if self.trials_per_cell < 1 or self.frames_per_trial < 1:
            raise InputError("trials_per_cell and frames_per_trial must be >= 1")

    @property
    def cells(self) -> list[tuple[float, float]]:
        return [(b, s) for b in self.bias_levels for s in self.random_sd_levels]

    def to_dict(self) -> dict:
        return {
            "bias_levels": list(self.bias_levels),
            "random_sd_levels": list(self.random_sd_levels),
            "trials_per_cell": self.trials_per_cell,
            "frames_per_trial": self.frames_per_trial,
            "base_seed": self.base_seed,
            "distribution": self.distribution,
            "init_offset": self.init_offset,
            "window_seconds": self.window_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepGrid":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class RuntimeStats:
    mean: float
    sd: float
    n: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "n": self.n}


@dataclass
class CellResult:
    bias: float
    random_sd: float
    swarm: ErrorStats | None = None
    trilateration: ErrorStats | None = None
    test: TestReport | None = None
    tests: dict = field(default_factory=dict)
    mean_runtime_swarm: float = float("nan")
    mean_runtime_tri: float = float("nan")
    mean_restarts: float = float("nan")
    failed: bool = False
    error: str = ""
    swarm_errors: np.ndarray | None = None  # per-estimate 3D errors, kept on request
    tri_errors: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "bias_m": self.bias,
            "random_sd_m": self.random_sd,
            "failed": self.failed,
            "error": self.error,
            "swarm": None if self.swarm is None else self.swarm.to_dict(),
            "trilateration": None if self.trilateration is None else self.trilateration.to_dict(),
            "test": None if self.test is None else self.test.to_dict(),
            "tests": {k: v.to_dict() for k, v in self.tests.items()},
            "mean_restarts": self.mean_restarts,
            "runtime": {"mean_swarm_s": self.mean_runtime_swarm, "mean_tri_s": self.mean_runtime_tri},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellResult":
        try:
            rt = d.get("runtime", {})
            return cls(
                bias=float(d["bias_m"]),
                random_sd=float(d["random_sd_m"]),
                swarm=None if d.get("swarm") is None else ErrorStats.from_dict(d["swarm"]),
                trilateration=None if d.get("trilateration") is None else ErrorStats.from_dict(d["trilateration"]),
                test=None if d.get("test") is None else TestReport.from_dict(d["test"]),
                tests={k: TestReport.from_dict(v) for k, v in d.get("tests", {}).items()},
                mean_runtime_swarm=float(rt.get("mean_swarm_s", float("nan"))),
                mean_runtime_tri=float(rt.get("mean_tri_s", float("nan"))),
                mean_restarts=float(d.get("mean_restarts", float("nan"))),
                failed=bool(d.get("failed", False)),
                error=str(d.get("error", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed cell entry: {exc}") from None


@dataclass
class SweepResult:
    grid: SweepGrid | dict
    config_digest: str
    cells: list[CellResult]

    def cell(self, bias: float, random_sd: float) -> CellResult:
        for c in self.cells:
            if np.isclose(c.bias, bias) and np.isclose(c.random_sd, random_sd):
                return c
        raise KeyError((bias, random_sd))

    @property
    def failed_cells(self) -> list[CellResult]:
        return [c for c in self.cells if c.failed]

    def to_dict(self) -> dict:
        grid = self.grid.to_dict() if isinstance(self.grid, SweepGrid) else self.grid
        return {"grid": grid, "config_digest": self.config_digest, "cells": [c.to_dict() for c in self.cells]}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        if not isinstance(d, dict) or not {"grid", "config_digest", "cells"} <= d.keys():
            raise SchemaError("sweep JSON needs top-level keys grid, config_digest, cells")
        if not isinstance(d["cells"], list):
            raise SchemaError("cells must be a list")
        return cls(d["grid"], str(d["config_digest"]), [CellResult.from_dict(c) for c in d["cells"]])


def _seed(*parts) -> int:
    """Stable 63-bit seed from numbers (lengths are scaled to integer micrometers)."""
    words = [int(round(p * 1e6)) if isinstance(p, float) else int(p) for p in parts]
    return int(np.random.SeedSequence([w & 0xFFFFFFFF for w in words] + [len(words)]).generate_state(2, np.uint64)[0] >> 1)


def config_digest(config: SwarmConfig, settings: SolverSettings, grid: SweepGrid) -> str:
    blob = json.dumps(
        {"config": config.to_dict(), "solver": settings.to_dict(), "grid": grid.to_dict()},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def trial_trajectory(config: SwarmConfig, grid: SweepGrid, trial: int):
    """Ground truth for one trial, generated at mocap rate and decimated.

    Shared by every cell so error levels are compared on identical motion.
    """
    duration = grid.frames_per_trial / config.update_rate
    raw = generate_trajectory(config, duration, motion_seed=_seed(grid.base_seed, trial), sample_rate=MOCAP_RATE)
    return downsample(raw, config.update_rate)


def run_trial(config, settings, grid, traj, bias, random_sd, trial):
    """Both estimators on one synthesized trial; returns per-estimate arrays."""
    model = ErrorModel(bias, random_sd, grid.distribution, rng_seed=_seed(grid.base_seed, bias, random_sd, trial))
    frames = synthesize_rangings(traj, config, model, "swarm")
    frames = filter_frame_history(frames, FilterSettings(grid.window_seconds, config.update_rate))
    cell_settings = SolverSettings(**{
        **settings.to_dict(),
        "bounds": settings.bounds,
        "rmse_threshold": random_sd,
        "rng_seed": _seed(grid.base_seed, bias, random_sd, trial, 1),
    })
    init = initial_guess(traj.mobiles[0], grid.init_offset, config.bounds)
    swarm = track_sequence(frames, config, init, cell_settings)
    tri = trilaterate_sequence(frames, config)
    est_s = np.stack([r.positions for r in swarm])
    est_t = np.stack([r.positions for r in tri])
    return {
        "swarm_pos": est_s,
        "tri_pos": est_t,
        "truth": traj.mobiles,
        "swarm_time": np.array([r.elapsed for r in swarm]),
        "tri_time": np.array([r.elapsed for r in tri]),
        "restarts": np.array([r.restarts_used for r in swarm]),
    }


def run_cell(config, settings, grid, bias, random_sd, trajectories=None, keep_errors=False) -> CellResult:
    cell = CellResult(bias, random_sd)
    try:
        parts = []
        for trial in range(grid.trials_per_cell):
            traj = trajectories[trial] if trajectories else trial_trajectory(config, grid, trial)
            parts.append(run_trial(config, settings, grid, traj, bias, random_sd, trial))
        truth = np.concatenate([p["truth"].reshape(-1, 3) for p in parts])
        est_s = np.concatenate([p["swarm_pos"].reshape(-1, 3) for p in parts])
        est_t = np.concatenate([p["tri_pos"].reshape(-1, 3) for p in parts])
        ok = np.all(np.isfinite(est_t), axis=1)
        e_s, ax_s = position_errors(est_s[ok], truth[ok])
        e_t, ax_t = position_errors(est_t[ok], truth[ok])
        cell.swarm = summarize_arrays(e_s, ax_s)
        cell.trilateration = summarize_arrays(e_t, ax_t)
        cell.tests = {}
        for name, fn in (("wilcoxon_signed_rank", wilcoxon_signed_rank), ("paired_t", paired_t_test)):
            try:
                cell.tests[name] = fn(e_s, e_t)
            except SwarmLocError:
                pass
        try:
            cell.test = choose_paired_test(e_s, e_t)
        except SwarmLocError:
            cell.test = None
        cell.mean_runtime_swarm = float(np.mean(np.concatenate([p["swarm_time"] for p in parts])))
        cell.mean_runtime_tri = float(np.mean(np.concatenate([p["tri_time"] for p in parts])))
        cell.mean_restarts = float(np.mean(np.concatenate([p["restarts"] for p in parts])))
        if keep_errors:
            cell.swarm_errors, cell.tri_errors = e_s, e_t
    except SwarmLocError as exc:
        cell.failed = True
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def _run_cell_job(args):
    return run_cell(*args)


def run_sweep(
    grid: SweepGrid,
    config: SwarmConfig | None = None,
    settings: SolverSettings | None = None,
    jobs: int = 1,
    keep_errors: bool = False,
    progress=None,
) -> SweepResult:
    """Evaluate both estimators at every (bias, random SD) cell of ``grid``.

    Trial trajectories depend only on ``(base_seed, trial)`` and are shared
    across cells; noise and restart seeds are derived from
    ``(base_seed, bias, random_sd, trial)``. A failing cell is recorded with
    ``failed=True`` and the sweep carries on.
    """
    config = config or SwarmConfig()
    settings = settings or SolverSettings()
    trajectories = [trial_trajectory(config, grid, t) for t in range(grid.trials_per_cell)]
    cells = grid.cells
    if jobs > 1 and len(cells) > 1:
        args = [(config, settings, grid, b, s, trajectories, keep_errors) for b, s in cells]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = []
            for res in pool.map(_run_cell_job, args):
                results.append(res)
                if progress:
                    progress(res)
    else:
        results = []
        for b, s in cells:
            res = run_cell(config, settings, grid, b, s, trajectories, keep_errors)
            results.append(res)
            if progress:
                progress(res)
    return SweepResult(grid, config_digest(config, settings, grid), results)


def measure_runtime(
    kind: str,
    frames: list[RangingFrame],
    config: SwarmConfig,
    settings: SolverSettings | None = None,
    first_init=None,
    warmup: int = WARMUP_FRAMES,
) -> RuntimeStats:
    """Per-frame wall-clock time of one estimator, excluding warm-up frames.

    For ``kind="swarm"`` frames are solved in sequence with warm starts;
    without ``first_init`` the first frame starts from its trilateration.
    """
    settings = settings or SolverSettings()
    if len(frames) <= warmup:
        raise InputError(f"need more than {warmup} frames to time after warm-up, got {len(frames)}")
    times = []
    if kind in ("tri", "trilateration"):
        for f in frames:
            t0 = time.perf_counter()
            trilaterate_frame(f, config)
            times.append(time.perf_counter() - t0)
    elif kind == "swarm":
        init = first_init if first_init is not None else initial_from_trilateration(frames[0], config)
        init = np.asarray(init, float).reshape(-1)
        for k, f in enumerate(frames):
            t0 = time.perf_counter()
            res = refine_with_restarts(f, config, init, settings, rng=np.random.default_rng([settings.rng_seed, k]))
            times.append(time.perf_counter() - t0)
            init = res.x
    else:
        raise InputError(f"unknown estimator {kind!r}")
    t = np.asarray(times[warmup:])
    return RuntimeStats(float(t.mean()), float(t.std(ddof=1)) if t.size > 1 else 0.0, int(t.size))


def initial_from_trilateration(frame: RangingFrame, config: SwarmConfig) -> np.ndarray:
    """Starting guess from closed-form trilateration (box center for invalid nodes)."""
    res = trilaterate_frame(frame, config)
    pos = np.where(np.isfinite(res.positions), res.positions, config.bounds.center)
    return config.bounds.project(pos).reshape(-1)


# -- report files ------------------------------------------------------------

PLOT_HEADER = ["bias_cm", "random_sd_cm", "method", "mean_cm", "sd_cm", "p50_cm", "p95_cm", "mean_runtime_ms"]


def write_sweep_json(result: SweepResult, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.to_dict(), fh, indent=2)
        fh.write("\n")
    return path


def load_sweep_json(path) -> SweepResult:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return SweepResult.from_dict(data)


def _cm(v: float) -> str:
    return f"{v * 100:.4f}"


def write_plot_csv(result: SweepResult, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_HEADER)
        for c in result.cells:
            if c.failed:
                continue
            for method, st, rt in (("swarm", c.swarm, c.mean_runtime_swarm), ("trilateration", c.trilateration, c.mean_runtime_tri)):
                w.writerow([_cm(c.bias), _cm(c.random_sd), method, _cm(st.mean_3d), _cm(st.sd_3d),
                            _cm(st.p50), _cm(st.p95), f"{rt * 1000:.4f}"])
    return path


def dominance_violations(result: SweepResult, min_sd: float = 0.01) -> list[CellResult]:
    """Cells with ``random_sd >= min_sd`` where swarm error exceeds trilateration."""
    return [
        c for c in result.cells
        if not c.failed and c.random_sd >= min_sd - 1e-12 and c.swarm.mean_3d > c.trilateration.mean_3d
    ]


def monotonicity_violations(result: SweepResult, tolerance: float = 0.05) -> dict:
    """Per method and bias row, list drops of mean error between adjacent SD levels.

    A row passes with at most one drop no larger than ``tolerance`` of the
    preceding mean.
    """
    out = {}
    for method in ("swarm", "trilateration"):
        for bias in sorted({c.bias for c in result.cells}):
            row = sorted((c for c in result.cells if c.bias == bias and not c.failed), key=lambda c: c.random_sd)
            means = [getattr(c, method).mean_3d for c in row]
            drops = [(row[k + 1].random_sd, means[k] - means[k + 1], means[k])
                     for k in range(len(means) - 1) if means[k + 1] < means[k]]
            ok = len(drops) <= 1 and all(d <= tolerance * m for _, d, m in drops)
            out[(method, bias)] = {"ok": ok, "drops": drops}
    return out


def render_report(result: SweepResult) -> str:
    """Plain-text table of a sweep plus dominance and monotonicity verdicts."""
    lines = []
    if not result.cells:
        return "no cells\n"
    lines.append(f"config digest: {result.config_digest}")
    lines.append(
        f"{'bias_cm':>8} {'sd_cm':>6}  {'swarm mean±sd cm':>18}  {'tri mean±sd cm':>18}  {'diff cm':>8}  {'p':>9}  test"
    )
    for c in result.cells:
        head = f"{c.bias * 100:8.2f} {c.random_sd * 100:6.2f}"
        if c.failed:
            lines.append(f"{head}  FAILED: {c.error}")
            continue
        s, t = c.swarm, c.trilateration
        diff = s.mean_3d - t.mean_3d
        p = f"{c.test.p_value:9.3g}" if c.test else f"{'n/a':>9}"
        name = c.test.test_name if c.test else "-"
        lines.append(
            f"{head}  {s.mean_3d * 100:8.2f} ± {s.sd_3d * 100:6.2f}  {t.mean_3d * 100:8.2f} ± {t.sd_3d * 100:6.2f}"
            f"  {diff * 100:8.2f}  {p}  {name}"
        )
    dom = dominance_violations(result)
    lines.append("")
    lines.append("dominance (swarm <= trilateration where SD >= 1 cm): "
                 + ("PASS" if not dom else "FAIL at " + ", ".join(f"({c.bias * 100:g}, {c.random_sd * 100:g}) cm" for c in dom)))
    mono = monotonicity_violations(result)
    bad = [k for k, v in mono.items() if not v["ok"]]
    lines.append("monotonicity in random SD: "
                 + ("PASS" if not bad else "FAIL for " + ", ".join(f"{m} @ bias {b * 100:g} cm" for m, b in bad)))
    failed = result.failed_cells
    if failed:
        lines.append(f"failed cells: {len(failed)}")
    return "\n".join(lines) + "\n"


# -- per-frame estimate files ---------------------------------------------------

ESTIMATE_HEADER = ["t", "node", "x", "y", "z", "rmse", "flags"]


@dataclass
class EstimateTable:
    """Per-frame, per-mobile estimates: ``positions`` is ``(T, n_mobile, 3)``."""

    times: np.ndarray
    nodes: np.ndarray
    positions: np.ndarray
    rmse: np.ndarray  # (T,)
    flags: np.ndarray  # (T, n_mobile)


def write_estimates_csv(table: EstimateTable, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_HEADER)
        for k, t in enumerate(table.times):
            for n, node in enumerate(table.nodes):
                x, y, z = table.positions[k, n]
                w.writerow([repr(float(t)), int(node), repr(float(x)), repr(float(y)), repr(float(z)),
                            repr(float(table.rmse[k])), int(table.flags[k, n])])
    return path


def load_estimates_csv(path) -> EstimateTable:
    """Read an estimates CSV; every frame must list the same nodes in the same order."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ESTIMATE_HEADER:
        raise SchemaError(f"{path}: header must be {','.join(ESTIMATE_HEADER)}")
    times, nodes, pos, rmse, flags = [], [], [], [], []
    for k, row in enumerate(rows[1:]):
        line = k + 2
        if len(row) != len(ESTIMATE_HEADER):
            raise SchemaError(f"{path}: row {line}: expected {len(ESTIMATE_HEADER)} fields, got {len(row)}")
        try:
            t, x, y, z, r = (float(row[c]) for c in (0, 2, 3, 4, 5))
            node, flag = int(row[1]), int(row[6])
        except ValueError:
            raise SchemaError(f"{path}: row {line}: malformed number") from None
        if not times or t != times[-1]:
            if times and t < times[-1]:
                raise SchemaError(f"{path}: row {line}: decreasing timestamp")
            times.append(t)
            nodes.append([])
            pos.append([])
            flags.append([])
            rmse.append(r)
        nodes[-1].append(node)
        pos[-1].append((x, y, z))
        flags[-1].append(flag)
    if not times:
        raise SchemaError(f"{path}: no data rows")
    if any(n != nodes[0] for n in nodes):
        raise SchemaError(f"{path}: frames list different node sets")
    return EstimateTable(np.array(times), np.array(nodes[0]), np.array(pos), np.array(rmse), np.array(flags))
