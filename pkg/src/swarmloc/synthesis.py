"""Ground-truth trajectories and synthetic ranging measurements.

Trajectories come either from :func:`generate_trajectory` (a smoothed random
walk standing in for motion-capture recordings) or from CSV. Synthetic
distances are the true pairwise distances plus a constant bias and a
zero-mean random error per measurement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import lfilter

from .errors import ConfigurationError, InputError, SchemaError
from .geometry import Bounds
from .swarm import N_ANCHORS, RangingFrame, SwarmConfig, Topology, enumerate_pairs, pair_array

MIN_DISTANCE = 1e-6
TIME_TOL = 1e-9
DEFAULT_MAX_SPEED = 2.0
MIN_SEPARATION = 0.2
MAX_SEPARATION = 2.0
MIN_SEPARATION_SHARE = 0.9
MAX_ATTEMPTS = 20
REFERENCE_DURATION = 300.0

# where the mobile nodes roam by default: the middle of the room, at body height
DEFAULT_ACTIVITY_REGION = Bounds(np.array([-1.25, -1.25, 0.5]), np.array([1.25, 1.25, 1.8]))


@dataclass
class Trajectory:
    """Ground-truth positions of every node (anchors included).

    ``positions`` has shape ``(T, n_nodes, 3)``; ``times`` shape ``(T,)``.
    """

    sample_rate: float
    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise InputError(f"positions must be (T, n, 3), got {self.positions.shape}")
        if self.positions.shape[0] != self.times.shape[0]:
            raise InputError("times and positions disagree on sample count")

    def __len__(self):
        return len(self.times)

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[1]

    @property
    def mobiles(self) -> np.ndarray:
        return self.positions[:, N_ANCHORS:, :]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.positions, other.positions)
        )


@dataclass(frozen=True)
class ErrorModel:
    """Constant bias plus zero-mean random error with SD ``random_sd``."""

    bias: float = 0.0
    random_sd: float = 0.0
    distribution: Literal["gaussian", "uniform"] = "gaussian"
    rng_seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.bias):
            raise InputError("bias must be finite")
        if not (np.isfinite(self.random_sd) and self.random_sd >= 0):
            raise InputError(f"random_sd must be >= 0, got {self.random_sd}")
        if self.distribution not in ("gaussian", "uniform"):
            raise InputError(f"unknown distribution {self.distribution!r}")

    @property
    def half_width(self) -> float:
        """Half-width of the uniform distribution with the configured SD."""
        return self.random_sd * np.sqrt(3.0)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.random_sd == 0:
            return np.zeros(size)
        if self.distribution == "gaussian":
            return rng.normal(0.0, self.random_sd, size)
        return rng.uniform(-self.half_width, self.half_width, size)

    def to_dict(self) -> dict:
        return {
            "bias": self.bias,
            "random_sd": self.random_sd,
            "distribution": self.distribution,
            "rng_seed": self.rng_seed,
        }


def check_trajectory(traj: Trajectory, config: SwarmConfig, max_speed: float | None = None):
    """Validate rate uniformity, node count, bounds and (optionally) speed."""
    if traj.n_nodes != config.n_nodes:
        raise InputError(f"trajectory has {traj.n_nodes} nodes, config expects {config.n_nodes}")
    if not traj.sample_rate > 0:
        raise InputError("sample_rate must be positive")
    t = traj.times
    if len(t) > 1:
        dt = np.diff(t)
        bad = np.flatnonzero(dt <= 0)
        if bad.size:
            raise InputError(f"timestamps not strictly increasing at sample {bad[0] + 1}")
        expected = t[0] + np.arange(len(t)) / traj.sample_rate
        off = np.flatnonzero(np.abs(t - expected) > TIME_TOL * max(1.0, abs(t[-1])))
        if off.size:
            raise InputError(f"sample {off[0]} deviates from the uniform {traj.sample_rate} Hz grid")
    b = config.bounds
    outside = np.flatnonzero(np.any((traj.positions < b.lo) | (traj.positions > b.hi), axis=(1, 2)))
    if outside.size:
        raise InputError(f"sample {outside[0]} has a node outside the bounds")
    if max_speed is not None and len(t) > 1:
        step = np.linalg.norm(np.diff(traj.positions, axis=0), axis=2) * traj.sample_rate
        fast = np.argwhere(step > max_speed * (1 + 1e-9))
        if fast.size:
            k, node = fast[0]
            raise InputError(f"node {node} exceeds {max_speed} m/s between samples {k} and {k + 1}")


def _region_capacity(region: Bounds, spacing: float) -> int:
    extent = region.hi - region.lo
    return int(np.prod(np.floor(extent / spacing) + 1))


def generate_trajectory(
    config: SwarmConfig,
    duration: float,
    motion_seed: int = 0,
    sample_rate: float = 100.0,
    max_speed: float = DEFAULT_MAX_SPEED,
    region: Bounds | None = None,
    smoothing: float = 1.0,
    time_constant: float = 3.0,
) -> Trajectory:
    """Smooth, bounded, speed-limited random motion of the mobile nodes.

    Each mobile coordinate is a leaky random walk (mean reversion with
    ``time_constant`` seconds), Gaussian-smoothed with a ``smoothing``
    seconds kernel SD, min-max scaled onto ``region`` and finally shrunk
    toward the region center until no node exceeds ``max_speed``. Anchors
    stay at their configured positions.

    The walk is always generated over at least 300 s and truncated, so a
    short trajectory is the prefix of a long one with the same seed. At
    least 90% of mobile-mobile distances of that walk must fall in
    [0.2, 2] m; a draw that misses this is replaced by one seeded
    ``(motion_seed, attempt)``.
    """
    n_samples = int(np.floor(duration * sample_rate + 1e-9))
    if n_samples < 1 or duration <= 0:
        raise InputError(f"duration {duration} s is shorter than one sample at {sample_rate} Hz")
    region = region if region is not None else DEFAULT_ACTIVITY_REGION
    b = config.bounds
    if np.any(region.lo < b.lo) or np.any(region.hi > b.hi):
        raise ConfigurationError("activity region must lie inside the bounds")
    if _region_capacity(region, MIN_SEPARATION) < config.n_mobile:
        raise ConfigurationError(
            f"region cannot hold {config.n_mobile} nodes {MIN_SEPARATION} m apart"
        )

    # scale against a long reference walk so that short trajectories are
    # prefixes of long ones and share their statistics
    n_reference = int(np.ceil(REFERENCE_DURATION * sample_rate))
    for attempt in range(MAX_ATTEMPTS):
        seed = motion_seed if attempt == 0 else [motion_seed, attempt]
        mobiles = _smooth_walk(
            np.random.default_rng(seed), max(n_samples, n_reference), config.n_mobile, sample_rate,
            region, max_speed, smoothing, time_constant,
        )
        if _separation_share(mobiles) >= MIN_SEPARATION_SHARE:
            mobiles = mobiles[:n_samples]
            break
    else:
        raise ConfigurationError(
            f"could not keep {MIN_SEPARATION_SHARE:.0%} of node distances within "
            f"[{MIN_SEPARATION}, {MAX_SEPARATION}] m in {MAX_ATTEMPTS} attempts"
        )

    anchors = np.broadcast_to(config.anchors.positions, (n_samples, N_ANCHORS, 3))
    positions = np.concatenate([anchors, mobiles], axis=1)
    times = np.arange(n_samples) / sample_rate
    return Trajectory(sample_rate, times, positions)


def _smooth_walk(rng, n_samples, n_mobile, sample_rate, region, max_speed, smoothing, time_constant):
    steps = rng.standard_normal((n_samples, n_mobile, 3))
    leak = np.exp(-1.0 / (time_constant * sample_rate)) if time_constant > 0 else 1.0
    walk = lfilter([1.0], [1.0, -leak], steps, axis=0)
    if n_samples > 1:
        walk = gaussian_filter1d(walk, sigma=max(smoothing * sample_rate, 1e-3), axis=0, mode="nearest")
    lo, hi = walk.min(axis=0), walk.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    unit = (walk - lo) / span
    center = region.center
    mobiles = center + (2 * unit - 1) * 0.5 * (region.hi - region.lo)
    if n_samples > 1:
        speed = np.linalg.norm(np.diff(mobiles, axis=0), axis=2).max() * sample_rate
        if speed > max_speed:
            mobiles = center + (mobiles - center) * (max_speed / speed) * (1 - 1e-6)
    return mobiles


def _separation_share(mobiles: np.ndarray, lo: float = MIN_SEPARATION, hi: float = MAX_SEPARATION) -> float:
    i, j = np.triu_indices(mobiles.shape[1], k=1)
    if i.size == 0:
        return 1.0
    d = np.linalg.norm(mobiles[:, i] - mobiles[:, j], axis=2)
    return float(np.mean((d >= lo) & (d <= hi)))


def separation_fraction(traj: Trajectory, lo: float = MIN_SEPARATION, hi: float = MAX_SEPARATION) -> float:
    """Share of mobile-mobile distances (over all samples) within ``[lo, hi]``."""
    return _separation_share(traj.mobiles, lo, hi)


def downsample(traj: Trajectory, target_rate: float) -> Trajectory:
    """Keep every ``sample_rate / target_rate``-th sample, starting at the first."""
    if not target_rate > 0:
        raise InputError("target_rate must be positive")
    ratio = traj.sample_rate / target_rate
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-9 * ratio:
        raise InputError(f"{target_rate} Hz does not evenly divide {traj.sample_rate} Hz")
    return Trajectory(target_rate, traj.times[::step].copy(), traj.positions[::step].copy())


def synthesize_rangings(
    traj: Trajectory,
    config: SwarmConfig,
    model: ErrorModel,
    topology: Topology = "swarm",
) -> list[RangingFrame]:
    """Noisy pairwise distances for every sample of ``traj``.

    The random error of pair ``(i, j)`` at frame ``k`` is the ``k``-th draw of
    a generator seeded with ``(model.rng_seed, i, j)``, so star frames are the
    exact star projection of swarm frames with the same model.
    """
    if traj.n_nodes != config.n_nodes:
        raise InputError(f"trajectory has {traj.n_nodes} nodes, config expects {config.n_nodes}")
    pairs = pair_array(enumerate_pairs(config, topology))
    p = traj.positions
    true = np.linalg.norm(p[:, pairs[:, 0]] - p[:, pairs[:, 1]], axis=2)  # (T, M)
    noise = np.empty_like(true)
    for k, (i, j) in enumerate(pairs):
        rng = np.random.default_rng([model.rng_seed, int(i), int(j)])
        noise[:, k] = model.draw(rng, len(traj))
    measured = true + model.bias + noise
    clamped = measured < MIN_DISTANCE
    measured = np.where(clamped, MIN_DISTANCE, measured)
    return [
        RangingFrame(float(t), pairs, measured[k], None, clamped[k])
        for k, t in enumerate(traj.times)
    ]


def frames_to_arrays(frames: list[RangingFrame]):
    """Stack a frame list sharing one pair layout into ``(times, pairs, d, valid)``."""
    if not frames:
        raise InputError("no frames")
    pairs = frames[0].pairs
    times = np.array([f.timestamp for f in frames])
    d = np.stack([f.distances for f in frames])
    valid = np.stack([f.valid for f in frames])
    return times, pairs, d, valid


# -- CSV ---------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def trajectory_header(n_nodes: int) -> list[str]:
    return ["t"] + [f"node_{k}_{ax}" for k in range(n_nodes) for ax in "xyz"]


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(traj.n_nodes))
        flat = traj.positions.reshape(len(traj), -1)
        for t, row in zip(traj.times, flat):
            w.writerow([_fmt(t)] + [_fmt(v) for v in row])
    return path


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise SchemaError(f"row {line}: column {column!r} is not a number: {text!r}") from None
    if not np.isfinite(v):
        raise SchemaError(f"row {line}: column {column!r} is not finite")
    return v


def load_trajectory_csv(path, config: SwarmConfig, sample_rate: float | None = None) -> Trajectory:
    """Read and validate a trajectory CSV.

    Row numbers in error messages are file line numbers (header is line 1).
    The sample rate is inferred from the first two timestamps unless given.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    if not header or header[0] != "t" or (len(header) - 1) % 3:
        raise SchemaError(f"{path}: header must be 't' followed by x,y,z columns per node")
    n_nodes = (len(header) - 1) // 3
    if header != trajectory_header(n_nodes):
        raise SchemaError(f"{path}: unexpected column names; expected node_<k>_<x|y|z> in order")
    if n_nodes != config.n_nodes:
        raise SchemaError(f"{path}: file has {n_nodes} nodes, config expects {config.n_nodes}")
    if len(rows) < 2:
        raise SchemaError(f"{path}: no data rows")

    times = np.empty(len(rows) - 1)
    pos = np.empty((len(rows) - 1, n_nodes * 3))
    for k, row in enumerate(rows[1:]):
        line = k + 2
        if len(row) != len(header):
            raise SchemaError(f"row {line}: expected {len(header)} fields, got {len(row)}")
        times[k] = _parse_float(row[0], line, "t")
        for c in range(1, len(row)):
            pos[k, c - 1] = _parse_float(row[c], line, header[c])
        if k and times[k] <= times[k - 1]:
            kind = "duplicated" if times[k] == times[k - 1] else "decreasing"
            raise SchemaError(f"row {line}: {kind} timestamp {row[0]}")

    if sample_rate is None:
        if len(times) < 2:
            raise SchemaError(f"{path}: need two rows to infer the sample rate")
        sample_rate = 1.0 / (times[1] - times[0])
        # snap to a representable rate, e.g. 1/0.01 -> 100.0
        if abs(sample_rate - round(sample_rate)) < 1e-6:
            sample_rate = float(round(sample_rate))
    traj = Trajectory(sample_rate, times, pos.reshape(len(times), n_nodes, 3))
    b = config.bounds
    outside = np.argwhere((traj.positions < b.lo) | (traj.positions > b.hi))
    if outside.size:
        k, node, ax = outside[0]
        raise SchemaError(f"row {k + 2}: node {node} {'xyz'[ax]} coordinate outside bounds")
    try:
        check_trajectory(traj, config)
    except InputError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return traj


RANGING_HEADER = ["t", "i", "j", "d", "valid"]


def write_rangings_csv(frames: list[RangingFrame], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANGING_HEADER)
        for f in frames:
            t = _fmt(f.timestamp)
            for (i, j), d, ok in zip(f.pairs, f.distances, f.valid):
                w.writerow([t, int(i), int(j), _fmt(d), int(ok)])
    return path


def load_rangings_csv(path) -> list[RangingFrame]:
    """Read a ranging CSV back into frames (one frame per distinct ``t``)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RANGING_HEADER:
            raise SchemaError(f"{path}: header must be {','.join(RANGING_HEADER)}")
        frames: list[RangingFrame] = []
        cur_t = None
        pairs, dists, oks = [], [], []

        def flush():
            if cur_t is not None:
                frames.append(RangingFrame(cur_t, pairs, dists, oks))

        for k, row in enumerate(reader):
            line = k + 2
            if len(row) != 5:
                raise SchemaError(f"row {line}: expected 5 fields, got {len(row)}")
            t = _parse_float(row[0], line, "t")
            try:
                i, j, ok = int(row[1]), int(row[2]), int(row[4])
            except ValueError:
                raise SchemaError(f"row {line}: i, j and valid must be integers") from None
            if ok not in (0, 1):
                raise SchemaError(f"row {line}: valid must be 0 or 1")
            if not 0 <= i < j:
                raise SchemaError(f"row {line}: pair must satisfy 0 <= i < j")
            if ok:
                d = _parse_float(row[3], line, "d")
                if d <= 0:
                    raise SchemaError(f"row {line}: valid distance must be positive")
            else:
                # invalid entries carry no information; keep whatever parses
                try:
                    d = float(row[3])
                except ValueError:
                    d = float("nan")
            if cur_t is None or t != cur_t:
                if cur_t is not None and t < cur_t:
                    raise SchemaError(f"row {line}: timestamps must be non-decreasing")
                flush()
                cur_t, pairs, dists, oks = t, [], [], []
            pairs.append((i, j))
            dists.append(d)
            oks.append(bool(ok))
        flush()
    return frames
