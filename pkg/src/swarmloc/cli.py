"""Command-line entry point: ``swarmloc simulate|solve|sweep|compare|report``.

Exit status: 0 success, 1 validation error, 2 runtime or solver error,
3 sweep finished with at least one failed cell.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, dump_config, load_config, preset_grid
from .errors import ConfigurationError, InputError, SchemaError, SwarmLocError
from .evaluation import (
    EstimateTable,
    initial_from_trilateration,
    load_estimates_csv,
    load_sweep_json,
    render_report,
    run_sweep,
    write_estimates_csv,
    write_plot_csv,
    write_sweep_json,
)
from .filtering import filter_frame_history
from .solver import initial_guess, objective_rmse, track_sequence
from .stats import normality_assessment, paired_t_test, position_errors, summarize_arrays, wilcoxon_signed_rank
from .synthesis import (
    downsample,
    generate_trajectory,
    load_rangings_csv,
    load_trajectory_csv,
    synthesize_rangings,
    write_rangings_csv,
    write_trajectory_csv,
)
from .trilateration import trilaterate_frame

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3
FLAG_UNCONVERGED = 8  # swarm estimate whose RMSE stayed above the threshold

_VALIDATION_ERRORS = (InputError, ConfigurationError, SchemaError)

EPILOG = """\
configuration precedence: command-line flags override values from --config,
which override built-in defaults. The resolved configuration (every field,
defaults included) is printed and written to <out>/config.json; passing that
file back with --config reproduces the run.

exit status: 0 ok, 1 invalid input/config, 2 runtime/solver error,
3 sweep with failed cells.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _cm_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) / 100.0 for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated centimeters, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, metavar="N", help="sets every seed: motion, noise, restarts, sweep base")
    common.add_argument("--rate", type=float, metavar="HZ", help="ranging update rate")
    common.add_argument("--out", metavar="DIR", help="output directory")

    p = _Parser(prog="swarmloc", description=__doc__.splitlines()[0], epilog=EPILOG,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="write a ground-truth trajectory and noisy rangings")
    s.add_argument("--duration", type=float, metavar="S", help="trial length in seconds")
    s.add_argument("--bias", type=float, metavar="CM", help="constant ranging bias in cm")
    s.add_argument("--sd", type=float, metavar="CM", help="random ranging error SD in cm")

    s = sub.add_parser("solve", parents=[common], help="estimate positions from a ranging file")
    s.add_argument("--rangings", metavar="PATH", help="ranging CSV (t,i,j,d,valid)")
    s.add_argument("--truth", metavar="PATH", help="trajectory CSV; enables error statistics")
    s.add_argument("--method", choices=("swarm", "tri"), default="swarm")
    s.add_argument("--stats", action="store_true", help="require error statistics (needs --truth)")

    s = sub.add_parser("sweep", parents=[common], help="bias x random-error sensitivity sweep")
    s.add_argument("--grid", choices=("full", "ci", "1x1"), help="level preset; 1x1 takes --bias/--sd")
    s.add_argument("--bias", type=_cm_list, metavar="CM[,CM...]", help="bias levels in cm")
    s.add_argument("--sd", type=_cm_list, metavar="CM[,CM...]", help="random-error SD levels in cm")
    s.add_argument("--trials", type=int, metavar="N", help="trials per cell")
    s.add_argument("--duration", type=float, metavar="S", help="trial length in seconds")
    s.add_argument("--jobs", type=int, metavar="N", default=os.cpu_count() or 1, help="parallel cells")

    s = sub.add_parser("compare", help="render a sweep JSON as a text report")
    s.add_argument("sweep_json", metavar="SWEEP_JSON")

    s = sub.add_parser("report", parents=[common], help="error statistics and paired tests for estimate files")
    s.add_argument("--estimates", nargs="+", metavar="CSV", help="one or two estimate CSVs (second is the baseline)")
    s.add_argument("--truth", metavar="PATH", help="trajectory CSV")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "rate", None) is not None:
        cfg = cfg.with_rate(args.rate)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    io = cfg.io
    if getattr(args, "out", None):
        io = replace(io, out=args.out)
    for name in ("rangings", "truth"):
        if getattr(args, name, None):
            io = replace(io, **{name: getattr(args, name)})
    if getattr(args, "estimates", None):
        io = replace(io, estimates=tuple(args.estimates))
    cfg = replace(cfg, io=io)

    cmd = args.command
    if cmd == "simulate":
        if args.duration is not None:
            cfg = replace(cfg, simulation=replace(cfg.simulation, duration=args.duration))
        em = cfg.error_model
        if args.bias is not None:
            em = replace(em, bias=args.bias / 100.0)
        if args.sd is not None:
            em = replace(em, random_sd=args.sd / 100.0)
        cfg = replace(cfg, error_model=em)
    elif cmd == "sweep":
        grid = cfg.sweep
        if args.grid in ("full", "ci"):
            grid = preset_grid(args.grid, grid)
        elif args.grid == "1x1":
            if args.bias is not None and len(args.bias) != 1 or args.sd is not None and len(args.sd) != 1:
                raise InputError("--grid 1x1 takes a single --bias and --sd value")
            grid = replace(grid, bias_levels=(cfg.error_model.bias,), random_sd_levels=(cfg.error_model.random_sd,))
        if args.bias is not None:
            grid = replace(grid, bias_levels=args.bias)
        if args.sd is not None:
            grid = replace(grid, random_sd_levels=args.sd)
        if args.trials is not None:
            grid = replace(grid, trials_per_cell=args.trials)
        if args.duration is not None:
            grid = replace(grid, frames_per_trial=int(round(args.duration * cfg.swarm.update_rate)))
        cfg = replace(cfg, sweep=grid)
    # round-trip through the dict form so every section is revalidated
    return RunConfig.from_dict(cfg.to_dict())


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _announce(paths) -> None:
    for p in paths:
        print(f"sha256 {_digest(p)}  {p}")


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.io.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path


def _write_json(obj, path: Path) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
    return path


# -- subcommands -------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    sim = cfg.simulation
    raw = generate_trajectory(cfg.swarm, sim.duration, motion_seed=sim.motion_seed,
                              sample_rate=sim.mocap_rate, max_speed=sim.max_speed)
    traj = downsample(raw, cfg.swarm.update_rate)
    frames = synthesize_rangings(traj, cfg.swarm, cfg.error_model, "swarm")
    out = Path(cfg.io.out)
    written = [
        _prepare_out(cfg),
        write_trajectory_csv(traj, out / "trajectory.csv"),
        write_rangings_csv(frames, out / "rangings.csv"),
    ]
    print(f"{len(frames)} frames, {len(frames[0].pairs)} pairs per frame")
    _announce(written)
    return EXIT_OK


def _solve_frames(cfg: RunConfig, frames, method: str, truth):
    n = cfg.swarm.n_mobile
    T = len(frames)
    pos = np.empty((T, n, 3))
    rmse = np.empty(T)
    flags = np.zeros((T, n), dtype=np.int64)
    times = []
    if method == "swarm":
        if truth is not None:
            init = initial_guess(truth.mobiles[0], cfg.solve.init_offset, cfg.swarm.bounds)
        else:
            init = initial_from_trilateration(frames[0], cfg.swarm)
        for k, r in enumerate(track_sequence(frames, cfg.swarm, init, cfg.solver)):
            pos[k] = r.positions
            rmse[k] = r.rmse
            if not r.converged:
                flags[k] = FLAG_UNCONVERGED
            times.append(r.elapsed)
    else:
        for k, f in enumerate(frames):
            r = trilaterate_frame(f, cfg.swarm)
            pos[k] = r.positions
            flags[k] = r.flags
            rmse[k] = objective_rmse(r.positions.reshape(-1), f, cfg.swarm) if np.all(np.isfinite(r.positions)) else np.nan
            times.append(r.elapsed)
    return pos, rmse, flags, np.asarray(times)


def _check_truth_alignment(traj, frames, path) -> None:
    t_frames = np.array([f.timestamp for f in frames])
    if len(traj) != len(t_frames) or not np.allclose(traj.times, t_frames, rtol=0, atol=1e-9):
        raise SchemaError(
            f"{path}: {len(traj)} trajectory samples do not line up with {len(t_frames)} ranging frames"
        )


def cmd_solve(cfg: RunConfig, method: str, want_stats: bool) -> int:
    if not cfg.io.rangings:
        raise InputError("solve needs --rangings")
    if want_stats and not cfg.io.truth:
        raise InputError("--stats requested but no --truth trajectory given")
    frames = load_rangings_csv(cfg.io.rangings)
    truth = None
    if cfg.io.truth:
        truth = load_trajectory_csv(cfg.io.truth, cfg.swarm)
        _check_truth_alignment(truth, frames, cfg.io.truth)
    frames = filter_frame_history(frames, cfg.filter)
    pos, rmse, flags, elapsed = _solve_frames(cfg, frames, method, truth)

    out = Path(cfg.io.out)
    written = [_prepare_out(cfg)]
    table = EstimateTable(np.array([f.timestamp for f in frames]), np.arange(3, cfg.swarm.n_nodes), pos, rmse, flags)
    written.append(write_estimates_csv(table, out / f"estimates_{method}.csv"))
    summary = {
        "method": method,
        "frames": len(frames),
        "estimates": int(pos.shape[0] * pos.shape[1]),
        "rangings_sha256": _digest(Path(cfg.io.rangings)),
        "flag_counts": {str(v): int(c) for v, c in zip(*np.unique(flags, return_counts=True))},
        "mean_rmse": float(np.nanmean(rmse)) if np.isfinite(rmse).any() else None,
        "stats": None,
    }
    if truth is not None:
        ok = np.all(np.isfinite(pos), axis=2)
        e3d, axes = position_errors(pos[ok], truth.mobiles[ok])
        summary["stats"] = summarize_arrays(e3d, axes).to_dict()
    written.append(_write_json(summary, out / f"summary_{method}.json"))
    # wall-clock numbers live apart from the deterministic outputs
    written.append(_write_json(
        {"method": method, "mean_s": float(elapsed.mean()), "sd_s": float(elapsed.std(ddof=1)) if elapsed.size > 1 else 0.0,
         "n": int(elapsed.size)},
        out / f"timing_{method}.json",
    ))
    if summary["stats"]:
        st = summary["stats"]
        print(f"{method}: mean 3D error {st['mean_3d'] * 100:.3f} cm (SD {st['sd_3d'] * 100:.3f} cm, n={st['n']})")
    _announce(written)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, jobs: int) -> int:
    if jobs < 1:
        raise InputError("--jobs must be >= 1")
    grid = cfg.sweep
    total = len(grid.cells)

    def progress(cell):
        state = "FAILED" if cell.failed else "done"
        print(f"cell bias={cell.bias * 100:g} cm sd={cell.random_sd * 100:g} cm {state}", file=sys.stderr)

    print(f"sweep: {total} cells x {grid.trials_per_cell} trials x {grid.frames_per_trial} frames", file=sys.stderr)
    result = run_sweep(grid, cfg.swarm, cfg.solver, jobs=jobs, progress=progress)
    out = Path(cfg.io.out)
    written = [
        _prepare_out(cfg),
        write_sweep_json(result, out / "sweep.json"),
        write_plot_csv(result, out / "sweep_plot.csv"),
    ]
    sys.stdout.write(render_report(result))
    _announce(written)
    if result.failed_cells:
        for c in result.failed_cells:
            print(f"failed cell bias={c.bias} m sd={c.random_sd} m: {c.error}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_compare(path: str) -> int:
    sys.stdout.write(render_report(load_sweep_json(path)))
    return EXIT_OK


def build_report(tables: list[EstimateTable], labels: list[str], truth) -> dict:
    """Error statistics per estimate file and, for two files, both paired tests."""
    errors = []
    report = {"files": {}}
    for label, tab in zip(labels, tables):
        if tab.positions.shape != truth.mobiles.shape:
            raise SchemaError(f"{label}: estimate shape {tab.positions.shape} does not match truth {truth.mobiles.shape}")
        e3d, axes = position_errors(tab.positions, truth.mobiles)
        errors.append(e3d.reshape(-1))
        ok = np.isfinite(e3d)
        report["files"][label] = summarize_arrays(e3d[ok], axes[ok]).to_dict()
    if len(tables) == 2:
        a, b = errors
        ok = np.isfinite(a) & np.isfinite(b)
        a, b = a[ok], b[ok]
        tests = {}
        for name, fn in (("wilcoxon_signed_rank", wilcoxon_signed_rank), ("paired_t", paired_t_test)):
            try:
                tests[name] = fn(a, b).to_dict()
            except SwarmLocError as exc:
                tests[name] = {"error": str(exc)}
        report["tests"] = tests
        if a.size >= 8:
            report["normality"] = {labels[0]: normality_assessment(a).to_dict(), labels[1]: normality_assessment(b).to_dict()}
    return report


def cmd_report(cfg: RunConfig) -> int:
    paths = list(cfg.io.estimates)
    if not 1 <= len(paths) <= 2:
        raise InputError("report takes one or two --estimates files")
    if not cfg.io.truth:
        raise InputError("report needs --truth")
    truth = load_trajectory_csv(cfg.io.truth, cfg.swarm)
    tables = [load_estimates_csv(p) for p in paths]
    report = build_report(tables, paths, truth)
    out = Path(cfg.io.out)
    written = [_prepare_out(cfg), _write_json(report, out / "report.json")]
    for label, st in report["files"].items():
        ax = ", ".join(f"{v * 100:.3f}" for v in st["per_axis_abs_mean"])
        print(f"{label}: mean 3D {st['mean_3d'] * 100:.3f} cm, SD {st['sd_3d'] * 100:.3f} cm, |x|,|y|,|z| {ax} cm")
    for name, t in report.get("tests", {}).items():
        if "error" in t:
            print(f"{name}: {t['error']}")
        else:
            print(f"{name}: statistic {t['statistic']:.4g}, p {t['p_value']:.3g}, "
                  f"mean difference {t['mean_difference'] * 100:.3f} cm")
    _announce(written)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.sweep_json)
        cfg = resolve_config(args)
        print("resolved config:")
        sys.stdout.write(dump_config(cfg))
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, args.method, args.stats)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.jobs)
        return cmd_report(cfg)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_INVALID
    except (SwarmLocError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
