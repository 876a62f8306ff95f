"""Acquisition maximization backends.

``grid_argmax`` evaluates a score exactly over a finite candidate pool.
``pso_maximize`` runs a standard particle swarm over a box for continuous
domains, initialized from known-feasible positions when available. Scores
are callables mapping an (n, d) batch of positions to n values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, OptimizationError

# fraction of the box width used to clamp particle velocities
VELOCITY_CLAMP = 0.2


@dataclass(frozen=True)
class SwarmParams:
    """Swarm coefficients; defaults follow the usual simulation profile."""

    social: float = 1.0
    cognitive: float = 1.0
    inertia: float = 0.9
    iterations: int = 100
    restarts: int = 100
    particles: int = 100

    def __post_init__(self):
        if min(self.iterations, self.restarts, self.particles) < 1:
            raise ConfigurationError("iterations, restarts and particles must be >= 1")
        if not 0.0 < self.inertia <= 1.0:
            raise ConfigurationError("inertia must lie in (0, 1]")


def grid_argmax(score, points: np.ndarray, pool: np.ndarray) -> int:
    """Domain index of the pool member with maximal score (ties: lowest index).

    ``score`` is either a callable over an (n, d) position batch or an
    array of precomputed values aligned with ``points``.
    """
    pool = np.asarray(pool)
    if pool.dtype == bool:
        pool = np.flatnonzero(pool)
    else:
        pool = np.sort(pool)
    if pool.size == 0:
        raise OptimizationError("empty candidate pool")
    if callable(score):
        values = np.asarray(score(np.atleast_2d(points)[pool]), dtype=float).reshape(-1)
    else:
        values = np.asarray(score, dtype=float).reshape(-1)[pool]
    return int(pool[np.argmax(values)])


def pso_maximize(score, init_pool, box, params: SwarmParams, rng,
                 feasible=None, max_rejections: int = 1000):
    """Particle swarm ascent of ``score`` inside ``box``.

    Positions start from rows of ``init_pool`` when given; otherwise they
    are drawn uniformly from the box, rejection-filtered by ``feasible``
    over at most ``params.restarts`` attempts. The velocity update is
    v <- w v + c_p r1 (pbest - x) + c_g r2 (gbest - x) with per-coordinate
    uniform r1, r2, velocities clamped to a fraction of the box width.
    Deterministic given the generator state. Returns (position, value).
    """
    box = np.asarray(box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    width = hi - lo
    d = box.shape[0]
    n_p = params.particles

    if init_pool is not None and len(init_pool) > 0:
        pool = np.atleast_2d(np.asarray(init_pool, dtype=float))
        picks = rng.integers(0, len(pool), size=n_p)
        positions = pool[picks].copy()
    else:
        positions = None
        for _ in range(params.restarts):
            draws = lo + width * rng.random((max_rejections if feasible else n_p, d))
            if feasible is None:
                positions = draws[:n_p]
                break
            keep = np.asarray(feasible(draws), dtype=bool)
            if keep.any():
                kept = draws[keep]
                reps = int(np.ceil(n_p / len(kept)))
                positions = np.tile(kept, (reps, 1))[:n_p].copy()
                break
        if positions is None:
            raise OptimizationError(
                "no feasible swarm start found within the restart budget"
            )

    positions = np.clip(positions, lo, hi)
    velocities = np.zeros_like(positions)
    v_max = VELOCITY_CLAMP * width

    pbest = positions.copy()
    pbest_val = np.asarray(score(positions), dtype=float).reshape(-1)
    g_idx = int(np.argmax(pbest_val))
    gbest = pbest[g_idx].copy()
    gbest_val = float(pbest_val[g_idx])

    for _ in range(params.iterations):
        r1 = rng.random((n_p, d))
        r2 = rng.random((n_p, d))
        velocities = (
            params.inertia * velocities
            + params.cognitive * r1 * (pbest - positions)
            + params.social * r2 * (gbest - positions)
        )
        velocities = np.clip(velocities, -v_max, v_max)
        positions = np.clip(positions + velocities, lo, hi)
        values = np.asarray(score(positions), dtype=float).reshape(-1)
        improved = values > pbest_val
        pbest[improved] = positions[improved]
        pbest_val[improved] = values[improved]
        best = int(np.argmax(pbest_val))
        if pbest_val[best] > gbest_val:
            gbest_val = float(pbest_val[best])
            gbest = pbest[best].copy()

    return gbest, gbest_val
