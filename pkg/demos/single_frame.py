"""
One ranging frame, two estimators
=================================

Three anchors sit on the floor corners of a 4 m x 4 m room and six mobile
nodes move above them. Every node ranges to every other node. Closed-form
trilateration uses only the 18 anchor ranges; the swarm solver fits all 36.
"""

import numpy as np

from swarmloc import SwarmConfig, enumerate_pairs
from swarmloc.swarm import RangingFrame, reconstruct_distances
from swarmloc.solver import SolverSettings, initial_guess, refine_with_restarts
from swarmloc.trilateration import trilaterate_frame

config = SwarmConfig()
rng = np.random.default_rng(1)
truth = rng.uniform([-1.2, -1.2, 0.6], [1.2, 1.2, 1.7], (config.n_mobile, 3))

# exact distances for every pair, then 5 cm of gaussian noise and 0.5 cm bias
pairs = enumerate_pairs(config, "swarm")
exact = np.array(list(reconstruct_distances(config, truth, pairs).values()))
frame = RangingFrame(0.0, pairs, exact + 0.005 + rng.normal(0, 0.05, exact.size))
print(f"{len(pairs)} pairs in the swarm topology, {len(enumerate_pairs(config, 'star'))} in the star")

# trilateration: one sphere intersection per mobile node
tri = trilaterate_frame(frame, config)
tri_err = np.linalg.norm(tri.positions - truth, axis=1)

# swarm solver: start 10 cm off the truth, refine against all pairs
settings = SolverSettings(rmse_threshold=0.05, rng_seed=1)
init = initial_guess(truth, 0.10, config.bounds)
res = refine_with_restarts(frame, config, init, settings, rng=np.random.default_rng([1, 0]))
swarm_err = np.linalg.norm(res.positions - truth, axis=1)

print(f"residual RMSE {res.rmse * 100:.2f} cm, restarts used: {res.restarts_used}")
for n, (e_t, e_s) in enumerate(zip(tri_err, swarm_err)):
    print(f"node {n + 3}: trilateration {e_t * 100:6.2f} cm   swarm {e_s * 100:6.2f} cm")
print(f"mean: trilateration {tri_err.mean() * 100:.2f} cm, swarm {swarm_err.mean() * 100:.2f} cm")
