"""Zero-phase moving-average smoothing of distance time series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import InputError
from .swarm import RangingFrame


@dataclass(frozen=True)
class FilterSettings:
    window_seconds: float = 0.5
    sample_rate: float = 4.0

    def __post_init__(self):
        if not self.window_seconds > 0:
            raise InputError(f"window_seconds must be positive, got {self.window_seconds}")
        if not self.sample_rate > 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")


def window_from_rate(settings: FilterSettings) -> int:
    """Moving-average length in samples for the configured duration."""
    # round half away from zero, not banker's rounding
    w = int(np.floor(settings.window_seconds * settings.sample_rate + 0.5))
    return max(w, 1)


def _moving_average_valid(x: np.ndarray, w: int) -> np.ndarray:
    # cumulative-sum form of np.convolve(x, ones(w)/w, "valid") along axis 0
    c = np.cumsum(np.concatenate([np.zeros((1,) + x.shape[1:]), x]), axis=0)
    return (c[w:] - c[:-w]) / w


def filter_array(values: np.ndarray, window: int) -> np.ndarray:
    """Forward-backward moving average along axis 0.

    The series is reflection-padded by ``window - 1`` samples at both ends,
    run through a length-``window`` moving average, then through the same
    filter in reverse. The output has the input's length and no phase shift.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 0 or x.shape[0] == 0:
        raise InputError("cannot filter an empty series")
    if not np.all(np.isfinite(x)):
        raise InputError("series contains non-finite values")
    w = int(window)
    if w < 1:
        raise InputError(f"window must be >= 1, got {window}")
    if w == 1 or x.shape[0] == 1:
        return x.copy()
    pad = [(w - 1, w - 1)] + [(0, 0)] * (x.ndim - 1)
    ext = np.pad(x, pad, mode="reflect")
    # symmetric kernel: forward pass then time-reversed pass are both plain
    # "valid" moving averages on the padded series
    return _moving_average_valid(_moving_average_valid(ext, w), w)


def filter_series(values, settings: FilterSettings) -> np.ndarray:
    return filter_array(values, window_from_rate(settings))


def filter_frame_history(frames: list[RangingFrame], settings: FilterSettings) -> list[RangingFrame]:
    """Smooth every pair's distance series independently.

    Frames must share an identical pair layout. Invalid samples are filled
    by linear interpolation over that pair's valid samples before filtering
    and stay invalid in the output; a pair with no valid sample is left as is.
    """
    if not frames:
        return []
    pairs = frames[0].pairs
    for k, f in enumerate(frames[1:], start=1):
        if f.pairs.shape != pairs.shape or not np.array_equal(f.pairs, pairs):
            raise InputError(f"frame {k} has a different pair set than frame 0")
    d = np.stack([f.distances for f in frames])
    ok = np.stack([f.valid for f in frames])
    d = _fill_gaps(d, ok)
    out = filter_series(d, settings)
    return [
        RangingFrame(f.timestamp, f.pairs.copy(), np.where(f.valid, out[k], f.distances), f.valid.copy(), f.clamped.copy())
        for k, f in enumerate(frames)
    ]


def _fill_gaps(d: np.ndarray, ok: np.ndarray) -> np.ndarray:
    if ok.all():
        return d
    d = d.copy()
    t = np.arange(d.shape[0])
    for col in range(d.shape[1]):
        good = ok[:, col]
        if good.all():
            continue
        if not good.any():
            d[:, col] = 1.0
            continue
        d[~good, col] = np.interp(t[~good], t[good], d[good, col])
    return d


def cutoff_frequency(window: int, sample_rate: float) -> float:
    """Half-power (-3 dB) frequency of the forward-backward average, in Hz."""
    f_nyq = sample_rate / 2
    if window == 1:
        return f_nyq

    def gain_sq(f):
        w = 2 * np.pi * f / sample_rate
        # |H|^2 of a w-tap average is (sin(w*L/2) / (L*sin(w/2)))^2; filtfilt squares it again
        h = np.sin(w * window / 2) / (window * np.sin(w / 2))
        return h**4 - 0.5

    # first zero of the moving average sits at sample_rate / window
    return float(brentq(gain_sq, 1e-9 * sample_rate, min(f_nyq, sample_rate / window) * (1 - 1e-12)))
