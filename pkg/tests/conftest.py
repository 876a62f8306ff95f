"""Shared fixtures: the acceptance sweeps are expensive, so they run once
per session and are shared between the criteria that consume them."""

import pytest

from safetune.presets import ctx_quadratic_config, pendulum_config, two_island_config
from safetune.runner import run_single

ACCEPTANCE_SEEDS = list(range(10))


@pytest.fixture(scope="session")
def pendulum_runs():
    """10-seed disturbed-pendulum sweeps for both safe algorithms."""
    cfg = pendulum_config()
    return {
        "config": cfg,
        "gosafeopt": [run_single(cfg, "gosafeopt", s) for s in ACCEPTANCE_SEEDS],
        "safeopt": [run_single(cfg, "safeopt", s) for s in ACCEPTANCE_SEEDS],
    }


@pytest.fixture(scope="session")
def island_runs():
    """10-seed two-island sweeps for both safe algorithms."""
    cfg = two_island_config()
    return {
        "config": cfg,
        "gosafeopt": [run_single(cfg, "gosafeopt", s) for s in ACCEPTANCE_SEEDS],
        "safeopt": [run_single(cfg, "safeopt", s) for s in ACCEPTANCE_SEEDS],
    }


@pytest.fixture(scope="session")
def transfer_runs():
    """Contextual (z1 then z2) vs fresh-model z2 sweeps."""
    ctx_cfg = ctx_quadratic_config(
        context_schedule=[{"context": "z1", "episodes": 75},
                          {"context": "z2", "episodes": 30}],
        episode_cap=105,
    )
    fresh_cfg = ctx_quadratic_config(
        contexts={"z2": [0.5]},
        safe_seeds={"z2": [[0.1, 0.0]]},
        context_schedule=[{"context": "z2", "episodes": 30}],
        episode_cap=30,
    )
    return {
        "ctx_config": ctx_cfg,
        "fresh_config": fresh_cfg,
        "contextual": [run_single(ctx_cfg, "gosafeopt", s) for s in ACCEPTANCE_SEEDS],
        "fresh": [run_single(fresh_cfg, "gosafeopt", s) for s in ACCEPTANCE_SEEDS],
    }
