"""Points, boxes, anchor triads and the closed-form three-sphere intersection.

Positions are plain ``numpy`` arrays of shape ``(3,)`` (or ``(..., 3)``) in
meters. :class:`Point3` exists for call sites that want named access.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, InputError

COLLINEAR_AREA_TOL = 1e-6


class Point3(NamedTuple):
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


def as_point(p) -> np.ndarray:
    """Coerce ``p`` to a finite float array of shape (3,)."""
    a = np.asarray(p, dtype=float)
    if a.shape != (3,):
        raise InputError(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"non-finite coordinate in {a}")
    return a


def euclidean_distance(a, b) -> float:
    """Straight-line distance between two points."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]))


@dataclass(frozen=True)
class Bounds:
    """Closed axis-aligned box ``[lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_point(self.lo)
        hi = as_point(self.hi)
        if np.any(lo > hi):
            raise ConfigurationError(f"bounds min {lo} exceeds max {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __eq__(self, other):
        if not isinstance(other, Bounds):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def project(self, p) -> np.ndarray:
        """Clip points (any leading shape, last axis 3) into the box."""
        return np.clip(p, self.lo, self.hi)

    def to_dict(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Bounds":
        return cls(np.asarray(d["min"], float), np.asarray(d["max"], float))


# measurement region of the reference setup
DEFAULT_BOUNDS = Bounds(np.array([-2.0, -2.0, 0.0]), np.array([2.0, 2.0, 2.0]))


def triangle_area(p1, p2, p3) -> float:
    return 0.5 * float(np.linalg.norm(np.cross(np.subtract(p2, p1), np.subtract(p3, p1))))


@dataclass(frozen=True)
class AnchorSet:
    """Exactly three fixed nodes at known, non-collinear positions."""

    positions: np.ndarray
    collinear_tol: float = COLLINEAR_AREA_TOL

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.shape != (3, 3):
            raise ConfigurationError(f"need exactly 3 anchors of dimension 3, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ConfigurationError("non-finite anchor coordinate")
        area = triangle_area(*pos)
        if area <= self.collinear_tol:
            raise ConfigurationError(
                f"anchors are collinear (triangle area {area:.3g} m^2 <= {self.collinear_tol:g})"
            )
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __eq__(self, other):
        if not isinstance(other, AnchorSet):
            return NotImplemented
        return np.array_equal(self.positions, other.positions) and self.collinear_tol == other.collinear_tol

    def __iter__(self):
        return iter(self.positions)

    @cached_property
    def canonical_frame(self):
        """``(ex, ey, ez, d, i, j)`` of the local trilateration frame."""
        return _canonical_frame(self.positions)

    @property
    def normal(self) -> np.ndarray:
        p1, p2, p3 = self.positions
        n = np.cross(p2 - p1, p3 - p1)
        return n / np.linalg.norm(n)

    def plane_distance(self, p) -> np.ndarray:
        """Signed distance of ``p`` from the plane through the anchors."""
        return (np.asarray(p, float) - self.positions[0]) @ self.normal


class Trilateration(NamedTuple):
    first: np.ndarray
    second: np.ndarray
    degenerate: bool


def _canonical_frame(anchors: np.ndarray):
    p1, p2, p3 = anchors
    d = np.linalg.norm(p2 - p1)
    ex = (p2 - p1) / d
    i = ex @ (p3 - p1)
    ey = p3 - p1 - i * ex
    ey = ey / np.linalg.norm(ey)
    ez = np.cross(ex, ey)
    j = ey @ (p3 - p1)
    return ex, ey, ez, d, i, j


def trilaterate(anchors: AnchorSet, ranges) -> Trilateration:
    """Intersect the three spheres ``|p - anchor_k| = ranges[k]``.

    The anchors are mapped into a local frame with anchor 1 at the origin,
    anchor 2 on the x-axis and anchor 3 in the xy-plane, where the
    intersection has a closed form. A negative squared height (spheres do
    not meet) is clamped to zero; both candidates then coincide and
    ``degenerate`` is set.

    Returns
    -------
    Trilateration
        ``first`` lies on the positive side of the anchor plane normal,
        ``second`` is its mirror image.
    """
    if not isinstance(anchors, AnchorSet):
        anchors = AnchorSet(anchors)
    r = np.asarray(ranges, dtype=float)
    if r.shape != (3,):
        raise InputError(f"need 3 ranges, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise InputError(f"non-finite range in {r}")
    if np.any(r <= 0):
        raise InputError(f"ranges must be positive, got {r}")

    p1 = anchors.positions[0]
    ex, ey, ez, d, i, j = anchors.canonical_frame
    r1, r2, r3 = r * r
    x = (r1 - r2 + d * d) / (2 * d)
    y = (r1 - r3 + i * i + j * j) / (2 * j) - (i / j) * x
    z2 = r1 - x * x - y * y
    degenerate = bool(z2 < 0)
    z = 0.0 if degenerate else np.sqrt(z2)
    base = p1 + x * ex + y * ey
    return Trilateration(base + z * ez, base - z * ez, degenerate)


def trilaterate_many(anchors: AnchorSet, ranges: np.ndarray):
    """Vectorized :func:`trilaterate` over rows of an ``(N, 3)`` range array.

    Returns ``(first, second, degenerate)`` with shapes ``(N, 3)``,
    ``(N, 3)`` and ``(N,)``. No input validation beyond shape.
    """
    rr = np.square(np.asarray(ranges, dtype=float))
    ex, ey, ez, d, i, j = anchors.canonical_frame
    x = (rr[:, 0] - rr[:, 1] + d * d) / (2 * d)
    y = (rr[:, 0] - rr[:, 2] + i * i + j * j) / (2 * j) - (i / j) * x
    z2 = rr[:, 0] - x * x - y * y
    degenerate = z2 < 0
    z = np.sqrt(np.maximum(z2, 0.0))
    local = np.stack([x, y, z], axis=1)
    basis = np.stack([ex, ey, ez])
    first = anchors.positions[0] + local @ basis
    local[:, 2] = -z
    second = anchors.positions[0] + local @ basis
    return first, second, degenerate


class Selection(NamedTuple):
    point: np.ndarray
    ambiguous: bool


def select_in_bounds(first, second, bounds: Bounds) -> Selection:
    """Pick the trilateration root that lies inside the measurement box.

    If both or neither lie inside, the root nearer the box center wins,
    then the one with larger z, then ``first``; ``ambiguous`` is set.
    Identical candidates are never ambiguous.
    """
    a = np.asarray(first, dtype=float)
    b = np.asarray(second, dtype=float)
    if np.array_equal(a, b):
        return Selection(a, False)
    in_a, in_b = bounds.contains(a), bounds.contains(b)
    if in_a != in_b:
        return Selection(a if in_a else b, False)
    c = bounds.center
    da, db = np.linalg.norm(a - c), np.linalg.norm(b - c)
    if da != db:
        return Selection(a if da < db else b, True)
    if a[2] != b[2]:
        return Selection(a if a[2] > b[2] else b, True)
    return Selection(a, True)


def select_in_bounds_many(first: np.ndarray, second: np.ndarray, bounds: Bounds):
    """Row-wise :func:`select_in_bounds`; returns ``(points, ambiguous)``."""
    first = np.asarray(first, float)
    second = np.asarray(second, float)
    lo, hi = bounds.lo, bounds.hi
    in_a = ((first >= lo) & (first <= hi)).all(axis=1)
    in_b = ((second >= lo) & (second <= hi)).all(axis=1)
    same = (first == second).all(axis=1)
    ambiguous = (in_a == in_b) & ~same
    take_a = in_a | same
    if ambiguous.any():
        c = bounds.center
        da = np.linalg.norm(first - c, axis=1)
        db = np.linalg.norm(second - c, axis=1)
        prefer_a = np.where(da != db, da < db, first[:, 2] >= second[:, 2])
        take_a = np.where(ambiguous, prefer_a, take_a)
    out = second.copy()
    out[take_a] = first[take_a]
    return out, ambiguous
