"""UWB swarm positioning: joint least squares over all pairwise ranges.

The package estimates the 3D positions of mobile ranging nodes from the
distances measured between every pair of nodes (three of which are fixed
anchors), and compares the result with per-node three-anchor
trilateration on synthetic data with controlled bias and random error.
"""

from .errors import (
    ConfigurationError,
    DegeneratePairError,
    DegenerateTestError,
    FrameError,
    InputError,
    NumericalError,
    SchemaError,
    SwarmLocError,
    UnderdeterminedError,
)
from .evaluation import SweepGrid, SweepResult, measure_runtime, run_sweep
from .filtering import FilterSettings, filter_frame_history
from .geometry import AnchorSet, Bounds, euclidean_distance, trilaterate
from .solver import SolverSettings, objective_gradient, objective_rmse, refine_with_restarts, solve_frame, track_sequence
from .stats import paired_t_test, summarize_errors, wilcoxon_signed_rank
from .swarm import RangingFrame, SwarmConfig, enumerate_pairs
from .synthesis import ErrorModel, Trajectory, generate_trajectory, synthesize_rangings
from .trilateration import trilaterate_frame, trilaterate_sequence

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "Bounds",
    "ConfigurationError",
    "DegeneratePairError",
    "DegenerateTestError",
    "ErrorModel",
    "FilterSettings",
    "FrameError",
    "InputError",
    "NumericalError",
    "RangingFrame",
    "SchemaError",
    "SolverSettings",
    "SwarmConfig",
    "SwarmLocError",
    "SweepGrid",
    "SweepResult",
    "Trajectory",
    "UnderdeterminedError",
    "enumerate_pairs",
    "euclidean_distance",
    "filter_frame_history",
    "generate_trajectory",
    "measure_runtime",
    "objective_gradient",
    "objective_rmse",
    "paired_t_test",
    "refine_with_restarts",
    "run_sweep",
    "solve_frame",
    "summarize_errors",
    "synthesize_rangings",
    "track_sequence",
    "trilaterate",
    "trilaterate_frame",
    "trilaterate_sequence",
    "wilcoxon_signed_rank",
]
