"""Swarm position estimator: bound-constrained nonlinear least squares.

Every mobile-node coordinate is an unknown; every measured pair that
involves at least one mobile node contributes one residual
``d_ij - |p_i - p_j|``. The objective is the RMS of those residuals.
Anchor-anchor pairs are dropped: they do not depend on the unknowns.

Minimization uses projected Gauss-Newton steps: the quadratic model
``|r + J p|^2`` is minimized over the free variables (those not pinned at
a bound with the gradient pointing outward), the step is projected back
into the box and an Armijo backtracking search on the objective accepts it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegeneratePairError,
    FrameError,
    InputError,
    NumericalError,
    SwarmLocError,
    UnderdeterminedError,
)
from .geometry import Bounds
from .swarm import N_ANCHORS, RangingFrame, SwarmConfig

GUARD_DISTANCE = 1e-9
ARMIJO_C1 = 1e-4
MIN_STEP_FRACTION = 1e-10


@dataclass(frozen=True)
class SolverSettings:
    bounds: Bounds | None = None  # None: use the SwarmConfig bounds
    rmse_threshold: float = 0.05
    max_restarts: int = 10
    perturbation_magnitude: float = 0.01
    max_inner_iterations: int = 100
    convergence_tol: float = 1e-10
    step_tol: float = 1e-9
    rng_seed: int = 0
    perturb_best: bool = False

    def __post_init__(self):
        if self.max_restarts < 1:
            raise InputError(f"max_restarts must be >= 1, got {self.max_restarts}")
        if self.perturbation_magnitude < 0:
            raise InputError("perturbation_magnitude must be >= 0")
        if self.max_inner_iterations < 1:
            raise InputError("max_inner_iterations must be >= 1")
        if not (self.convergence_tol > 0 and self.step_tol > 0):
            raise InputError("tolerances must be positive")
        if self.rmse_threshold < 0:
            raise InputError("rmse_threshold must be >= 0")

    def bounds_for(self, config: SwarmConfig) -> Bounds:
        return self.bounds if self.bounds is not None else config.bounds

    def to_dict(self) -> dict:
        return {
            "bounds": None if self.bounds is None else self.bounds.to_dict(),
            "rmse_threshold": self.rmse_threshold,
            "max_restarts": self.max_restarts,
            "perturbation_magnitude": self.perturbation_magnitude,
            "max_inner_iterations": self.max_inner_iterations,
            "convergence_tol": self.convergence_tol,
            "step_tol": self.step_tol,
            "rng_seed": self.rng_seed,
            "perturb_best": self.perturb_best,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverSettings":
        d = dict(d)
        if d.get("bounds") is not None:
            d["bounds"] = Bounds.from_dict(d["bounds"])
        return cls(**d)


@dataclass
class SolveResult:
    positions: np.ndarray  # (n_mobile, 3)
    rmse: float
    inner_iterations: int
    restarts_used: int
    converged: bool
    elapsed: float
    run_rmses: list[float] = field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return self.positions.reshape(-1)


class ResidualModel:
    """Residuals and Jacobian of one frame, precomputed for fast evaluation."""

    def __init__(self, frame: RangingFrame, config: SwarmConfig):
        pairs = frame.pairs
        if pairs.size and pairs.max() >= config.n_nodes:
            raise InputError(f"frame references node {pairs.max()} but config has {config.n_nodes} nodes")
        keep = frame.valid & (pairs[:, 1] >= N_ANCHORS)
        self.pairs = pairs[keep]
        self.measured = frame.distances[keep]
        self.m = len(self.pairs)
        if self.m == 0:
            raise InputError("no residual pairs: frame holds only anchor-anchor or invalid entries")
        self.config = config
        self.n_mobile = config.n_mobile
        self.anchors = config.anchors.positions
        self._i = self.pairs[:, 0]
        self._j = self.pairs[:, 1]
        self._rows = np.arange(self.m)

    def check_determined(self):
        """Raise if masking left fewer constraints than unknowns."""
        n_unknown = 3 * self.n_mobile
        if self.m < n_unknown:
            raise UnderdeterminedError(f"{self.m} valid constraints for {n_unknown} unknowns")
        degree = np.bincount(self.pairs.ravel(), minlength=self.config.n_nodes)[N_ANCHORS:]
        short = np.flatnonzero(degree < 3)
        if short.size:
            raise UnderdeterminedError(
                f"mobile node(s) {(short + N_ANCHORS).tolist()} have fewer than 3 valid ranges"
            )

    def nodes(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (3 * self.n_mobile,):
            raise InputError(f"optimization vector must have length {3 * self.n_mobile}, got {x.shape}")
        return np.vstack([self.anchors, x.reshape(-1, 3)])

    def evaluate(self, x: np.ndarray):
        """Return ``(residuals, diff, dhat)`` where ``diff = p_i - p_j``."""
        p = self.nodes(x)
        diff = p[self._i] - p[self._j]
        dhat = np.linalg.norm(diff, axis=1)  # same rounding as the distance synthesis
        return self.measured - dhat, diff, dhat

    def residuals(self, x) -> np.ndarray:
        return self.evaluate(x)[0]

    def rmse(self, x) -> float:
        r = self.residuals(x)
        return float(np.sqrt(r @ r / self.m))

    def jacobian(self, diff: np.ndarray, dhat: np.ndarray) -> np.ndarray:
        """d(residual)/dx as an ``(M, 3 * n_mobile)`` array."""
        if np.any(dhat < GUARD_DISTANCE):
            k = int(np.argmin(dhat))
            raise DegeneratePairError(
                f"nodes {self._i[k]} and {self._j[k]} are {dhat[k]:.3g} m apart (guard {GUARD_DISTANCE:g})"
            )
        u = diff / dhat[:, None]
        full = np.zeros((self.m, self.config.n_nodes, 3))
        # r = d - |p_i - p_j|: dr/dp_i = -u, dr/dp_j = +u
        full[self._rows, self._i] = -u
        full[self._rows, self._j] = u
        return full[:, N_ANCHORS:, :].reshape(self.m, -1)


def objective_rmse(x, frame: RangingFrame, config: SwarmConfig) -> float:
    """RMS of measured minus reconstructed distances over mobile-involving pairs."""
    return ResidualModel(frame, config).rmse(x)


def objective_gradient(x, frame: RangingFrame, config: SwarmConfig) -> np.ndarray:
    """Analytic gradient of :func:`objective_rmse`.

    The objective is not differentiable at a perfect fit; the zero vector is
    returned there.
    """
    model = ResidualModel(frame, config)
    r, diff, dhat = model.evaluate(x)
    jac = model.jacobian(diff, dhat)
    s = r @ r
    if s == 0.0:
        return np.zeros(3 * model.n_mobile)
    f = np.sqrt(s / model.m)
    return (jac.T @ r) / (f * model.m)


def _nudge_coincident(model: ResidualModel, x: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Separate nodes that sit on top of each other by the guard distance along +z."""
    for _ in range(model.config.n_nodes):
        _, _, dhat = model.evaluate(x)
        bad = np.flatnonzero(dhat < GUARD_DISTANCE)
        if bad.size == 0:
            return x
        x = x.copy()
        j = model._j[bad[0]] - N_ANCHORS
        step = GUARD_DISTANCE if x[3 * j + 2] + GUARD_DISTANCE <= bounds.hi[2] else -GUARD_DISTANCE
        # 4x guard so the separation clears the strict threshold after rounding
        x[3 * j + 2] += 4 * step
    return x


def _gauss_newton_step(jac: np.ndarray, r: np.ndarray, free: np.ndarray) -> np.ndarray:
    step = np.zeros(jac.shape[1])
    if not free.any():
        return step
    jf = jac[:, free]
    sol, *_ = np.linalg.lstsq(jf, -r, rcond=None)
    step[free] = sol
    return step


def solve_frame(
    frame: RangingFrame,
    config: SwarmConfig,
    init,
    settings: SolverSettings | None = None,
) -> SolveResult:
    """One bound-constrained minimization run from ``init`` (no restarts)."""
    settings = settings or SolverSettings()
    t0 = time.perf_counter()
    bounds = settings.bounds_for(config)
    model = ResidualModel(frame, config)
    model.check_determined()
    lo = np.tile(bounds.lo, model.n_mobile)
    hi = np.tile(bounds.hi, model.n_mobile)

    x = np.clip(np.asarray(init, dtype=float).reshape(-1), lo, hi)
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite initial position")
    x = _nudge_coincident(model, x, bounds)
    r, diff, dhat = model.evaluate(x)
    s = float(r @ r)
    s_init = s

    iterations = 0
    for iterations in range(1, settings.max_inner_iterations + 1):
        if s == 0.0:
            iterations -= 1
            break
        jac = model.jacobian(diff, dhat)
        g = jac.T @ r  # half the gradient of s
        eps = 1e-12
        pinned = ((x <= lo + eps) & (g > 0)) | ((x >= hi - eps) & (g < 0))
        step = _gauss_newton_step(jac, r, ~pinned)
        if not np.all(np.isfinite(step)):
            raise NumericalError("non-finite Gauss-Newton step")

        accepted = False
        for direction in (step, -g):
            alpha = 1.0
            while alpha >= MIN_STEP_FRACTION:
                x_new = np.clip(x + alpha * direction, lo, hi)
                dx = x_new - x
                r_new, diff_new, dhat_new = model.evaluate(x_new)
                s_new = float(r_new @ r_new)
                if not np.isfinite(s_new):
                    raise NumericalError("objective became non-finite")
                if s_new <= s + 2 * ARMIJO_C1 * (g @ dx) and s_new < s:
                    accepted = True
                    break
                alpha *= 0.5
            if accepted:
                break
        if not accepted:
            break

        step_norm = float(np.linalg.norm(dx))
        f_old, f_new = np.sqrt(s / model.m), np.sqrt(s_new / model.m)
        x, r, diff, dhat, s = x_new, r_new, diff_new, dhat_new, s_new
        if np.any(dhat < GUARD_DISTANCE):
            x = _nudge_coincident(model, x, bounds)
            r, diff, dhat = model.evaluate(x)
            if float(r @ r) > s:
                raise NumericalError("guard nudge increased the objective")
            s = float(r @ r)
        if (f_old - f_new) <= settings.convergence_tol * f_old or step_norm < settings.step_tol:
            break

    assert s <= s_init, "descent violated"
    rmse = float(np.sqrt(s / model.m))
    return SolveResult(
        positions=x.reshape(-1, 3).copy(),
        rmse=rmse,
        inner_iterations=iterations,
        restarts_used=1,
        converged=rmse <= settings.rmse_threshold,
        elapsed=time.perf_counter() - t0,
        run_rmses=[rmse],
    )


def refine_with_restarts(
    frame: RangingFrame,
    config: SwarmConfig,
    init,
    settings: SolverSettings | None = None,
    rng: np.random.Generator | None = None,
) -> SolveResult:
    """Re-run :func:`solve_frame` from perturbed starts until the fit is good enough.

    Each retry starts from the previous start (or, with
    ``settings.perturb_best``, the best solution so far) plus a uniform
    per-coordinate offset in ``[-perturbation_magnitude, +perturbation_magnitude]``.
    Stops at the first run with ``rmse <= rmse_threshold`` or after
    ``max_restarts`` runs and returns the lowest-RMSE run.
    """
    settings = settings or SolverSettings()
    rng = rng if rng is not None else np.random.default_rng(settings.rng_seed)
    t0 = time.perf_counter()
    start = np.asarray(init, dtype=float).reshape(-1).copy()
    best: SolveResult | None = None
    rmses: list[float] = []
    total_iters = 0
    for run in range(settings.max_restarts):
        if run > 0:
            base = best.x if settings.perturb_best else start
            delta = rng.uniform(-settings.perturbation_magnitude, settings.perturbation_magnitude, start.size)
            start = base + delta
        res = solve_frame(frame, config, start, settings)
        rmses.append(res.rmse)
        total_iters += res.inner_iterations
        if best is None or res.rmse < best.rmse:
            best = res
        if res.rmse <= settings.rmse_threshold:
            break
    assert all(best.rmse <= v for v in rmses)
    return SolveResult(
        positions=best.positions,
        rmse=best.rmse,
        inner_iterations=total_iters,
        restarts_used=len(rmses),
        converged=best.rmse <= settings.rmse_threshold,
        elapsed=time.perf_counter() - t0,
        run_rmses=rmses,
    )


def track_sequence(
    frames: list[RangingFrame],
    config: SwarmConfig,
    first_init,
    settings: SolverSettings | None = None,
) -> list[SolveResult]:
    """Solve frames in order, warm-starting each from the previous solution.

    Frame ``k`` draws its restart perturbations from a generator seeded with
    ``(settings.rng_seed, k)``.
    """
    settings = settings or SolverSettings()
    results = []
    init = np.asarray(first_init, dtype=float).reshape(-1)
    for k, frame in enumerate(frames):
        try:
            res = refine_with_restarts(
                frame, config, init, settings, rng=np.random.default_rng([settings.rng_seed, k])
            )
        except SwarmLocError as exc:
            raise FrameError(k, exc) from exc
        results.append(res)
        init = res.x
    return results


def initial_guess(truth_mobiles, offset: float = 0.10, bounds: Bounds | None = None) -> np.ndarray:
    """Approximate starting positions: ground truth shifted by ``offset`` per axis."""
    x = np.asarray(truth_mobiles, dtype=float).reshape(-1, 3) + offset
    if bounds is not None:
        x = bounds.project(x)
    return x.reshape(-1)


def with_threshold(settings: SolverSettings, threshold: float) -> SolverSettings:
    return replace(settings, rmse_threshold=threshold)
