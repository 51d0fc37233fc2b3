"""Node roster, pair enumeration and ranging frames."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Literal

import numpy as np

from .errors import ConfigurationError, InputError
from .geometry import DEFAULT_BOUNDS, AnchorSet, Bounds

N_ANCHORS = 3

Topology = Literal["swarm", "star"]

# three room corners on the floor: the anchor plane is the floor of
# the bounding box, so the mirror root of trilateration falls outside it
DEFAULT_ANCHORS = np.array([
    [-2.0, -2.0, 0.0],
    [2.0, -2.0, 0.0],
    [-2.0, 2.0, 0.0],
])


def swarm_pair_count(n: int) -> int:
    """Number of distinct pairs in a fully connected network of ``n`` nodes."""
    if n < 2:
        raise InputError(f"swarm needs at least 2 nodes, got {n}")
    return n * (n - 1) // 2


def star_pair_count(n_anchor: int, n_tag: int) -> int:
    if n_anchor < 1 or n_tag < 1:
        raise InputError(f"star needs at least one anchor and one tag, got {n_anchor}, {n_tag}")
    return n_anchor * n_tag


@dataclass(frozen=True)
class SwarmConfig:
    """Three anchors followed by ``n_mobile`` mobile nodes.

    Node indices 0-2 are the anchors, ``3 .. n-1`` the mobiles.
    """

    anchors: AnchorSet = field(default_factory=lambda: AnchorSet(DEFAULT_ANCHORS))
    n_mobile: int = 6
    bounds: Bounds = DEFAULT_BOUNDS
    update_rate: float = 4.0

    def __post_init__(self):
        if not isinstance(self.anchors, AnchorSet):
            object.__setattr__(self, "anchors", AnchorSet(self.anchors))
        if int(self.n_mobile) != self.n_mobile or self.n_mobile < 1:
            raise ConfigurationError(f"n_mobile must be a positive integer, got {self.n_mobile}")
        if not self.update_rate > 0:
            raise ConfigurationError(f"update_rate must be positive, got {self.update_rate}")
        for k, a in enumerate(self.anchors.positions):
            if not self.bounds.contains(a):
                raise ConfigurationError(f"anchor {k} at {a} lies outside bounds")

    @property
    def n_nodes(self) -> int:
        return N_ANCHORS + self.n_mobile

    def is_anchor(self, node: int) -> bool:
        self.check_node(node)
        return node < N_ANCHORS

    def check_node(self, node: int) -> int:
        if not 0 <= node < self.n_nodes:
            raise InputError(f"node index {node} outside [0, {self.n_nodes})")
        return node

    def node_positions(self, mobile_positions) -> np.ndarray:
        """Stack anchors and mobiles into an ``(n, 3)`` array."""
        m = np.asarray(mobile_positions, dtype=float).reshape(-1, 3)
        if m.shape[0] != self.n_mobile:
            raise InputError(f"expected {self.n_mobile} mobile positions, got {m.shape[0]}")
        return np.vstack([self.anchors.positions, m])

    def to_dict(self) -> dict:
        return {
            "anchors": self.anchors.positions.tolist(),
            "n_mobile": self.n_mobile,
            "bounds": self.bounds.to_dict(),
            "update_rate": self.update_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwarmConfig":
        return cls(
            anchors=AnchorSet(np.asarray(d["anchors"], float)),
            n_mobile=int(d["n_mobile"]),
            bounds=Bounds.from_dict(d["bounds"]),
            update_rate=float(d["update_rate"]),
        )


def enumerate_pairs(config: SwarmConfig, topology: Topology = "swarm") -> list[tuple[int, int]]:
    """Measured node pairs ``(i, j)``, ``i < j``, in lexicographic order."""
    n = config.n_nodes
    if topology == "swarm":
        return list(combinations(range(n), 2))
    if topology == "star":
        return [(a, m) for a in range(N_ANCHORS) for m in range(N_ANCHORS, n)]
    raise InputError(f"unknown topology {topology!r}")


def pair_array(pairs) -> np.ndarray:
    p = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    if np.any(p[:, 0] >= p[:, 1]):
        raise InputError("every pair must satisfy i < j")
    return p


def reconstruct_distances(config: SwarmConfig, mobile_positions, pairs) -> dict[tuple[int, int], float]:
    """Distances implied by candidate mobile positions, keyed by pair."""
    pos = config.node_positions(mobile_positions)
    p = pair_array(pairs)
    if p.size and p.max() >= config.n_nodes:
        raise InputError(f"pair index exceeds node count {config.n_nodes}")
    d = np.linalg.norm(pos[p[:, 0]] - pos[p[:, 1]], axis=1)
    return {(int(i), int(j)): float(v) for (i, j), v in zip(p, d)}


@dataclass
class RangingFrame:
    """Distances measured during one update cycle.

    ``pairs`` is an ``(M, 2)`` index array (``i < j``), ``distances`` and
    ``valid`` are aligned length-``M`` arrays. Invalid entries are ignored
    by every consumer and may hold any value.
    """

    timestamp: float
    pairs: np.ndarray
    distances: np.ndarray
    valid: np.ndarray | None = None
    clamped: np.ndarray | None = None  # set where synthesis floored a distance

    def __post_init__(self):
        self.pairs = pair_array(self.pairs)
        self.distances = np.asarray(self.distances, dtype=float)
        m = len(self.pairs)
        self.valid = np.ones(m, dtype=bool) if self.valid is None else np.asarray(self.valid, dtype=bool)
        self.clamped = np.zeros(m, dtype=bool) if self.clamped is None else np.asarray(self.clamped, dtype=bool)
        if self.distances.shape != (m,) or self.valid.shape != (m,) or self.clamped.shape != (m,):
            raise InputError("pairs, distances, valid and clamped must have matching length")
        if len({(int(i), int(j)) for i, j in self.pairs}) != m:
            raise InputError("duplicate pair in frame")
        d = self.distances[self.valid]
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise InputError("valid distances must be finite and positive")

    def __len__(self):
        return len(self.pairs)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {
            (int(i), int(j)): float(d)
            for (i, j), d, ok in zip(self.pairs, self.distances, self.valid)
            if ok
        }

    def distance(self, i: int, j: int) -> float | None:
        """Measured distance for the unordered pair, or None if absent/invalid."""
        i, j = min(i, j), max(i, j)
        hit = np.flatnonzero((self.pairs[:, 0] == i) & (self.pairs[:, 1] == j))
        if hit.size == 0 or not self.valid[hit[0]]:
            return None
        return float(self.distances[hit[0]])

    def subset(self, pairs) -> "RangingFrame":
        """Restrict to ``pairs`` (entries missing here come back invalid)."""
        want = pair_array(pairs)
        lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(self.pairs)}
        d = np.ones(len(want))
        ok = np.zeros(len(want), dtype=bool)
        for k, (i, j) in enumerate(want):
            src = lookup.get((int(i), int(j)))
            if src is not None:
                d[k] = self.distances[src]
                ok[k] = self.valid[src]
        return RangingFrame(self.timestamp, want, d, ok)
