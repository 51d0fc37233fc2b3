"""Small fixture builders shared by the test modules."""

import numpy as np

from swarmloc.swarm import RangingFrame, enumerate_pairs, reconstruct_distances
from swarmloc.synthesis import DEFAULT_ACTIVITY_REGION


def random_mobiles(config, rng, min_separation=0.2):
    """Mobile positions inside the activity region, pairwise at least ``min_separation`` apart."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    region = DEFAULT_ACTIVITY_REGION
    while True:
        p = rng.uniform(region.lo, region.hi, (config.n_mobile, 3))
        d = np.linalg.norm(p[:, None] - p[None], axis=-1) + np.eye(len(p)) * 1e9
        if d.min() >= min_separation:
            return p


def exact_frame(config, mobiles, bias=0.0, noise_sd=0.0, rng=None, t=0.0, topology="swarm"):
    pairs = enumerate_pairs(config, topology)
    d = np.array(list(reconstruct_distances(config, mobiles, pairs).values())) + bias
    if noise_sd:
        d = d + rng.normal(0.0, noise_sd, d.size)
    return RangingFrame(t, pairs, d)


# criterion number -> (passed, detail); printed in the terminal summary
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)
    print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    return bool(passed)
