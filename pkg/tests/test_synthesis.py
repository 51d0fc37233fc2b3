import numpy as np
import pytest

from swarmloc.errors import ConfigurationError, InputError, SchemaError
from swarmloc.geometry import Bounds
from swarmloc.swarm import SwarmConfig, enumerate_pairs
from swarmloc.synthesis import (
    MIN_DISTANCE,
    ErrorModel,
    Trajectory,
    check_trajectory,
    downsample,
    frames_to_arrays,
    generate_trajectory,
    load_rangings_csv,
    load_trajectory_csv,
    separation_fraction,
    synthesize_rangings,
    write_rangings_csv,
    write_trajectory_csv,
)


@pytest.fixture(scope="module")
def cfg():
    return SwarmConfig()


@pytest.fixture(scope="module")
def traj(cfg):
    return downsample(generate_trajectory(cfg, 300.0, motion_seed=1, sample_rate=100.0), 4.0)


def true_distances(traj):
    p = traj.positions
    pairs = np.array(list(zip(*np.triu_indices(traj.n_nodes, 1))))
    return np.linalg.norm(p[:, pairs[:, 0]] - p[:, pairs[:, 1]], axis=2)


def test_generated_trajectory_invariants(cfg, traj):
    assert len(traj) == 1200 and traj.sample_rate == 4.0
    check_trajectory(traj, cfg, max_speed=2.0)
    assert separation_fraction(traj) >= 0.9
    assert np.array_equal(traj.positions[:, :3], np.broadcast_to(cfg.anchors.positions, (1200, 3, 3)))


def test_generator_speed_cap_at_mocap_rate(cfg):
    raw = generate_trajectory(cfg, 60.0, motion_seed=4, sample_rate=100.0)
    check_trajectory(raw, cfg, max_speed=2.0)
    with pytest.raises(InputError, match="exceeds"):
        check_trajectory(raw, cfg, max_speed=0.01)


def test_generator_deterministic_and_prefix(cfg):
    a = generate_trajectory(cfg, 20.0, motion_seed=3, sample_rate=4.0)
    b = generate_trajectory(cfg, 20.0, motion_seed=3, sample_rate=4.0)
    assert a == b
    long = generate_trajectory(cfg, 40.0, motion_seed=3, sample_rate=4.0)
    assert np.array_equal(long.positions[: len(a)], a.positions)
    assert generate_trajectory(cfg, 20.0, motion_seed=5, sample_rate=4.0) != a


def test_generator_guards(cfg):
    with pytest.raises(InputError):
        generate_trajectory(cfg, 0.1, sample_rate=4.0)
    with pytest.raises(InputError):
        generate_trajectory(cfg, 0.0)
    tiny = Bounds([0, 0, 0.5], [0.1, 0.1, 0.6])
    with pytest.raises(ConfigurationError):
        generate_trajectory(cfg, 10.0, region=tiny)
    outside = Bounds([-3, -3, 0], [3, 3, 2])
    with pytest.raises(ConfigurationError):
        generate_trajectory(cfg, 10.0, region=outside)


def test_downsample(cfg):
    raw = generate_trajectory(cfg, 30.0, motion_seed=2, sample_rate=100.0)
    assert len(raw) == 3000
    small = downsample(raw, 4.0)
    assert len(small) == 120
    assert np.array_equal(small.positions, raw.positions[::25])
    assert downsample(raw, 100.0) == raw
    with pytest.raises(InputError):
        downsample(raw, 3.0)
    with pytest.raises(InputError):
        downsample(raw, 0.0)


def test_exact_and_biased_rangings(cfg, traj):
    exact = synthesize_rangings(traj, cfg, ErrorModel())
    _, pairs, d, valid = frames_to_arrays(exact)
    assert valid.all() and pairs.tolist() == [list(p) for p in enumerate_pairs(cfg)]
    np.testing.assert_array_equal(d, true_distances(traj))
    biased = synthesize_rangings(traj, cfg, ErrorModel(bias=0.02))
    np.testing.assert_array_equal(frames_to_arrays(biased)[2], true_distances(traj) + 0.02)


@pytest.mark.parametrize("dist", ["gaussian", "uniform"])
def test_error_moments(cfg, traj, dist):
    frames = synthesize_rangings(traj, cfg, ErrorModel(0.005, 0.05, dist, rng_seed=9))
    err = (frames_to_arrays(frames)[2] - true_distances(traj)).ravel()
    n = err.size  # 43 200 draws
    assert abs(err.mean() - 0.005) < 3 * 0.05 / np.sqrt(n)
    assert err.std(ddof=1) == pytest.approx(0.05, rel=0.05)
    if dist == "uniform":
        assert np.abs(err - 0.005).max() <= 0.05 * np.sqrt(3)


def test_error_moments_large_sample():
    rng = np.random.default_rng(0)
    for dist in ("gaussian", "uniform"):
        x = ErrorModel(0.0, 0.05, dist).draw(rng, 100_000)
        assert abs(x.mean()) < 3 * 0.05 / np.sqrt(x.size)
        # SD of the sample SD is about sd / sqrt(2n) for gaussian, smaller for uniform
        assert abs(x.std(ddof=1) - 0.05) < 3 * 0.05 / np.sqrt(2 * x.size)


def test_seeded_and_star_projection(cfg, traj):
    model = ErrorModel(0.0, 0.05, rng_seed=4)
    a = synthesize_rangings(traj, cfg, model)
    b = synthesize_rangings(traj, cfg, model)
    assert all(x.distances.tobytes() == y.distances.tobytes() for x, y in zip(a, b))
    star = synthesize_rangings(traj, cfg, model, "star")
    for s, f in zip(star, a):
        assert s.as_dict() == {k: v for k, v in f.as_dict().items() if k in s.as_dict()}
        assert len(s) == 18


def test_clamping(cfg, traj):
    frames = synthesize_rangings(traj, cfg, ErrorModel(bias=-10.0))
    _, _, d, _ = frames_to_arrays(frames)
    assert np.all(d == MIN_DISTANCE)
    assert all(f.clamped.all() for f in frames)


def test_error_model_validation():
    with pytest.raises(InputError):
        ErrorModel(random_sd=-1)
    with pytest.raises(InputError):
        ErrorModel(distribution="laplace")
    with pytest.raises(InputError):
        ErrorModel(bias=np.inf)
    assert ErrorModel(random_sd=0.02).half_width == pytest.approx(0.02 * np.sqrt(3))


def test_node_count_mismatch(traj):
    with pytest.raises(InputError):
        synthesize_rangings(traj, SwarmConfig(n_mobile=5), ErrorModel())


def test_trajectory_csv_round_trip(cfg, traj, tmp_path):
    path = write_trajectory_csv(traj, tmp_path / "t.csv")
    text = path.read_bytes()
    assert b"\r" not in text and text.startswith(b"t,node_0_x,node_0_y,node_0_z,node_1_x")
    assert load_trajectory_csv(path, cfg) == traj


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_trajectory_csv_diagnostics(cfg, traj, tmp_path):
    path = write_trajectory_csv(traj, tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    dup = lines[:4] + [lines[3]] + lines[4:10]
    with pytest.raises(SchemaError, match="row 5: duplicated timestamp"):
        load_trajectory_csv(_write(tmp_path / "dup.csv", dup), cfg)
    header = lines[0].split(",")[: 1 + 8 * 3]
    short = [",".join(header)] + [",".join(r.split(",")[: 1 + 8 * 3]) for r in lines[1:5]]
    with pytest.raises(SchemaError, match="8 nodes, config expects 9"):
        load_trajectory_csv(_write(tmp_path / "short.csv", short), cfg)
    bad = lines[:3] + [lines[3].replace(lines[3].split(",")[1], "abc", 1)]
    with pytest.raises(SchemaError, match="row 4"):
        load_trajectory_csv(_write(tmp_path / "bad.csv", bad), cfg)
    gap = lines[:3] + lines[4:6]
    with pytest.raises(SchemaError, match="uniform"):
        load_trajectory_csv(_write(tmp_path / "gap.csv", gap), cfg)
    fields = lines[2].split(",")
    fields[-1] = "9.5"
    oob = lines[:2] + [",".join(fields)] + lines[3:5]
    with pytest.raises(SchemaError, match="row 3: node 8 z coordinate outside bounds"):
        load_trajectory_csv(_write(tmp_path / "oob.csv", oob), cfg)
    with pytest.raises(SchemaError):
        load_trajectory_csv(_write(tmp_path / "hdr.csv", ["time,a,b,c"]), cfg)


def test_rangings_csv_round_trip(cfg, traj, tmp_path):
    frames = synthesize_rangings(Trajectory(4.0, traj.times[:20], traj.positions[:20]), cfg, ErrorModel(0.005, 0.05))
    frames[3].valid[5] = False
    path = write_rangings_csv(frames, tmp_path / "r.csv")
    assert path.read_text().splitlines()[0] == "t,i,j,d,valid"
    back = load_rangings_csv(path)
    assert len(back) == 20
    for a, b in zip(frames, back):
        assert a.timestamp == b.timestamp
        assert np.array_equal(a.pairs, b.pairs)
        assert np.array_equal(a.distances, b.distances)
        assert np.array_equal(a.valid, b.valid)


def test_rangings_csv_diagnostics(tmp_path):
    with pytest.raises(SchemaError):
        load_rangings_csv(_write(tmp_path / "a.csv", ["t,i,j,dist,valid"]))
    with pytest.raises(SchemaError, match="row 2"):
        load_rangings_csv(_write(tmp_path / "b.csv", ["t,i,j,d,valid", "0.0,1,0,2.0,1"]))
    with pytest.raises(SchemaError, match="row 3"):
        load_rangings_csv(_write(tmp_path / "c.csv", ["t,i,j,d,valid", "0.0,0,1,2.0,1", "0.0,0,2,-1.0,1"]))
    with pytest.raises(SchemaError, match="row 2"):
        load_rangings_csv(_write(tmp_path / "d.csv", ["t,i,j,d,valid", "0.0,0,1,x,1"]))
    with pytest.raises(SchemaError, match="valid"):
        load_rangings_csv(_write(tmp_path / "e.csv", ["t,i,j,d,valid", "0.0,0,1,2.0,7"]))
    with pytest.raises(SchemaError, match="non-decreasing"):
        load_rangings_csv(_write(tmp_path / "f.csv", ["t,i,j,d,valid", "1.0,0,1,2.0,1", "0.5,0,1,2.0,1"]))
