import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmloc.errors import InputError
from swarmloc.filtering import (
    FilterSettings,
    cutoff_frequency,
    filter_array,
    filter_frame_history,
    filter_series,
    window_from_rate,
)
from swarmloc.swarm import RangingFrame, SwarmConfig, enumerate_pairs, reconstruct_distances


def direct_filtfilt(x, w):
    """Oracle: explicit loops over a reflection-padded series, pass by pass."""
    x = list(map(float, x))
    n, pad = len(x), w - 1

    def reflect(k):
        # mirror about the end samples without repeating them
        period = 2 * (n - 1)
        k = k % period
        return x[k] if k < n else x[period - k]

    ext = [reflect(k) for k in range(-pad, n + pad)]
    fwd = [sum(ext[k - m] for m in range(w)) / w for k in range(w - 1, len(ext))]
    rev = fwd[::-1]
    back = [sum(rev[k - m] for m in range(w)) / w for k in range(w - 1, len(rev))]
    return np.array(back[::-1])


@pytest.mark.parametrize("seconds, rate, w", [(0.5, 4, 2), (0.5, 20, 10), (0.5, 1, 1), (0.5, 100, 50), (0.5, 3, 2)])
def test_window_from_rate(seconds, rate, w):
    assert window_from_rate(FilterSettings(seconds, rate)) == w


def test_settings_validation():
    with pytest.raises(InputError):
        FilterSettings(0, 4)
    with pytest.raises(InputError):
        FilterSettings(0.5, -1)


def test_constant_and_identity():
    for w in (1, 2, 3, 5):
        assert np.array_equal(filter_array([3, 3, 3, 3, 3], w), [3, 3, 3, 3, 3])
    x = np.random.default_rng(0).normal(size=50)
    assert np.array_equal(filter_array(x, 1), x)
    assert np.array_equal(filter_series(x, FilterSettings(0.5, 1.0)), x)


def test_impulse_matches_direct_oracle():
    x = np.zeros(21)
    x[10] = 1.0
    np.testing.assert_allclose(filter_array(x, 2), direct_filtfilt(x, 2), atol=1e-12)
    # away from the edges the w=2 kernel is [1/4, 1/2, 1/4]
    np.testing.assert_allclose(filter_array(x, 2)[9:12], [0.25, 0.5, 0.25], atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=40), st.integers(1, 5))
def test_random_series_match_oracle(values, w):
    x = np.array(values)
    np.testing.assert_allclose(filter_array(x, w), direct_filtfilt(x, w), atol=1e-12)


def test_linearity():
    rng = np.random.default_rng(1)
    s1, s2 = rng.normal(size=(2, 64))
    for w in (2, 4):
        lhs = filter_array(2.5 * s1 - 0.7 * s2, w)
        rhs = 2.5 * filter_array(s1, w) - 0.7 * filter_array(s2, w)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def _peak_lag(x, y, max_lag=5):
    lags = np.arange(-max_lag, max_lag + 1)
    n = len(x)
    xc = [np.dot(x[max(0, -l): n - max(0, l)], y[max(0, l): n - max(0, -l)]) for l in lags]
    return int(lags[int(np.argmax(xc))])


@pytest.mark.parametrize("w", [2, 10])
def test_zero_phase_sinusoid(w):
    t = np.arange(1200)
    for period in (8.0, 23.0, 61.0):
        x = np.sin(2 * np.pi * t / period)
        assert _peak_lag(x, filter_array(x, w)) == 0


def test_zero_phase_interior_any_window():
    # reflection at the ends distorts up to 2(w - 1) samples; the rest of the
    # output is the input scaled by the real, non-negative squared response
    for n in (64, 400):
        t = np.arange(n)
        for period in (7.3, 17.0, 37.0):
            x = np.sin(2 * np.pi * t / period)
            for w in range(2, n // 4):
                e = 2 * (w - 1)
                y = filter_array(x, w)
                if np.abs(y[e:n - e]).max() > 1e-6:
                    assert _peak_lag(x[e:n - e], y[e:n - e], 3) == 0


def test_dc_preserved():
    rng = np.random.default_rng(2)
    for w in (2, 3, 10):
        x = 5.0 + rng.normal(size=20 * w)
        y = filter_array(x, w)
        assert abs(y.mean() - x.mean()) <= 1e-9 * abs(x.mean()) + 0.05
        assert filter_array(np.full(8 * w, 7.25), w) == pytest.approx(7.25, rel=1e-12)


def test_dc_gain_is_exactly_one():
    # the transfer function at zero frequency equals the kernel sum
    impulse = np.zeros(101)
    impulse[50] = 1.0
    for w in (2, 3, 7):
        assert filter_array(impulse, w).sum() == pytest.approx(1.0, abs=1e-9)


def test_white_noise_variance_reduced():
    x = np.random.default_rng(3).normal(0, 0.05, 5000)
    for w in (2, 3, 10):
        assert filter_array(x, w).std() < x.std()
    # w=2: kernel [1/4, 1/2, 1/4] passes 3/8 of the white-noise variance
    assert filter_array(x, 2).var() / x.var() == pytest.approx(3 / 8, rel=0.05)


def test_non_finite_rejected():
    with pytest.raises(InputError):
        filter_array([1.0, np.nan, 2.0], 2)
    with pytest.raises(InputError):
        filter_array([], 2)
    with pytest.raises(InputError):
        filter_array([1.0, 2.0], 0)


def test_half_power_frequency_at_4hz():
    # |H(f)| = cos(pi f / fs) for the 2-tap average; forward-backward squares it
    expected = 4.0 / np.pi * np.arccos(2 ** -0.25)
    assert cutoff_frequency(2, 4.0) == pytest.approx(expected, abs=1e-9)
    assert cutoff_frequency(2, 4.0) == pytest.approx(0.728, abs=1e-3)
    assert cutoff_frequency(1, 4.0) == 2.0


def _static_frames(n, sd=0.0, seed=0):
    cfg = SwarmConfig()
    mobiles = np.random.default_rng(seed).uniform([-1, -1, 0.5], [1, 1, 1.8], (6, 3))
    pairs = enumerate_pairs(cfg)
    d = np.array(list(reconstruct_distances(cfg, mobiles, pairs).values()))
    rng = np.random.default_rng(seed + 1)
    return [RangingFrame(k / 4.0, pairs, d + rng.normal(0, sd, d.size) if sd else d) for k in range(n)]


def test_frame_history_single_and_static():
    fs = FilterSettings(0.5, 4.0)
    one = _static_frames(1)
    out = filter_frame_history(one, fs)
    assert np.array_equal(out[0].distances, one[0].distances)
    frames = _static_frames(40)
    out = filter_frame_history(frames, fs)
    for a, b in zip(frames, out):
        np.testing.assert_allclose(a.distances, b.distances, atol=1e-12)
        assert a.timestamp == b.timestamp


def test_frame_history_reduces_noise():
    frames = _static_frames(1200, sd=0.05)
    out = filter_frame_history(frames, FilterSettings(0.5, 4.0))
    raw = np.stack([f.distances for f in frames])
    smooth = np.stack([f.distances for f in out])
    assert np.all(smooth.var(axis=0) < raw.var(axis=0))


def test_frame_history_masks_and_gaps():
    frames = _static_frames(10, sd=0.01)
    frames[4].valid[0] = False
    frames[4].distances[0] = np.nan
    frames[2].clamped[1] = True
    out = filter_frame_history(frames, FilterSettings(0.5, 4.0))
    assert not out[4].valid[0] and np.isnan(out[4].distances[0])
    assert out[2].clamped[1]
    assert np.all(np.isfinite(out[3].distances)) and np.all(np.isfinite(out[5].distances))


def test_frame_history_inconsistent_pairs():
    frames = _static_frames(3)
    frames[1] = frames[1].subset([tuple(p) for p in frames[1].pairs[:-1]])
    with pytest.raises(InputError):
        filter_frame_history(frames, FilterSettings(0.5, 4.0))
    assert filter_frame_history([], FilterSettings()) == []
