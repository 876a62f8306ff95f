"""Ready-made experiment configurations for the bundled benchmarks.

These are plain `ExperimentConfig` values; dump them to YAML with
`safetune.config.dump_config` or via the CLI to use as starting points.
Constants here were tuned at desk scale (small grids, 150-episode cap);
the kernel and boundary tables keep the usual simulation/hardware
profiles available for larger studies.
"""

from __future__ import annotations

from .config import ExperimentConfig

# Example per-coordinate lengthscale tables for larger gain-tuning studies
# (thirteen-dimensional simulation profile, eleven-dimensional hardware
# profile; gain coordinates first, context coordinates last).
LENGTHSCALE_PROFILES = {
    "simulation": [0.1, 0.05, 0.1, 0.05, 0.1, 0.05, 0.1, 0.05, 0.1, 0.1, 0.1, 0.1, 0.1],
    "hardware": [0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.5, 0.5, 0.5, 0.5, 0.5],
}


def pendulum_config(**overrides) -> ExperimentConfig:
    """Disturbed pendulum gain tuning on a 5x9 gain grid.

    The injected impedance pair sits on the grid; tuned gains equal to it
    replay the ideal trajectory exactly. The guard scale (sigma 0.5) was
    chosen so unstable candidates trigger well inside the recoverable
    envelope while near-ideal rollouts complete.
    """
    data = {
        "name": "pendulum",
        "domain": {
            "mode": "grid",
            "bounds": [[0.0, 4.0], [0.0, 2.0]],
            "resolution": [5, 9],
        },
        # objective jumps sharply at the exact-cancellation line, so its
        # kernel gets short lengthscales and a scale wide enough to cover
        # the full tracking-cost range; the constraint stays smoother
        "kernel": {
            "per_output": [
                {"family": "matern_nu_1_5", "lengthscales": [0.6, 0.15], "output_scale": 60.0},
                {"family": "matern_nu_1_5", "lengthscales": [1.0, 0.5], "output_scale": 30.0},
            ]
        },
        "noise_sigma": 0.5,
        "algorithm": {
            "epsilon": 2.0,
            "beta": 3.0,
            "lipschitz_theta": 80.0,
            "lipschitz_state": 6.0,
            "boundary": {
                "mode": "gaussian",
                "sigma": 0.5,
                "tau_interior": 0.2,
                "tau_marginal": 0.6,
                "eta_low": 1.0,
                "eta_high": 4.0,
            },
        },
        "environment": {
            "kind": "pendulum",
            "pendulum": {
                "dt": 0.05,
                "horizon": 80,
                "disturbance": [2.0, 1.0],
                "reference_gains": [3.0, 1.0],
                "x0": [2.1, 0.0],
                "target_angle": 2.7,
            },
            "reward": {"q_g": [1.0, 1.0], "q_q": [1.0, 1.0], "v0": None},
        },
        "contexts": {"nominal": []},
        "safe_seeds": {"nominal": [[0.0, 2.0]]},
        "context_schedule": [{"context": "nominal", "episodes": 150}],
        "episode_cap": 150,
        "seeds": list(range(10)),
    }
    data.update(overrides)
    return ExperimentConfig(**data)


def two_island_config(**overrides) -> ExperimentConfig:
    """1-D landscape with two disjoint safe islands, 200-point grid."""
    data = {
        "name": "two_island",
        "domain": {"mode": "grid", "bounds": [[0.0, 3.0]], "resolution": [200]},
        "kernel": {"family": "matern_nu_1_5", "lengthscales": [0.25], "output_scale": 1.0},
        "noise_sigma": 0.02,
        "algorithm": {
            "epsilon": 0.3,
            "beta": 3.0,
            "lipschitz_theta": 6.5,
            "lipschitz_state": 2.0,
            "boundary": {"mode": "lipschitz"},
        },
        "environment": {"kind": "synthetic", "benchmark": "two_island_1d", "horizon": 100},
        "contexts": {"nominal": []},
        "safe_seeds": {"nominal": [[0.55]]},
        "context_schedule": [{"context": "nominal", "episodes": 150}],
        "episode_cap": 150,
        "seeds": list(range(10)),
    }
    data.update(overrides)
    return ExperimentConfig(**data)


def ctx_quadratic_config(**overrides) -> ExperimentConfig:
    """2-D contextual quadratic with a context-shifted optimum."""
    data = {
        "name": "ctx_quadratic",
        "domain": {
            "mode": "grid",
            "bounds": [[-1.0, 1.0], [-1.0, 1.0]],
            "resolution": [21, 21],
        },
        "kernel": {
            "composite": {
                "mode": "product",
                "theta": {"family": "matern_nu_1_5", "lengthscales": [0.4, 0.4]},
                "context": {"family": "matern_nu_1_5", "lengthscales": [1.0]},
            }
        },
        "noise_sigma": 0.02,
        "algorithm": {
            "epsilon": 0.3,
            "beta": 6.0,
            "lipschitz_theta": 4.0,
            "lipschitz_state": 2.0,
            "boundary": {"mode": "lipschitz"},
        },
        "environment": {"kind": "synthetic", "benchmark": "ctx_quadratic_2d", "horizon": 100},
        "contexts": {"z1": [0.0], "z2": [0.5]},
        "safe_seeds": {"z1": [[0.1, 0.0]], "z2": [[0.1, 0.0]]},
        "context_schedule": [
            {"context": "z1", "episodes": 75},
            {"context": "z2", "episodes": 75},
        ],
        "episode_cap": 150,
        "seeds": list(range(10)),
    }
    data.update(overrides)
    return ExperimentConfig(**data)


def bump_config(**overrides) -> ExperimentConfig:
    """Smooth unconstrained 1-D objective (baseline smoke tests)."""
    data = {
        "name": "bump",
        "domain": {"mode": "grid", "bounds": [[0.0, 3.0]], "resolution": [200]},
        "kernel": {"family": "matern_nu_1_5", "lengthscales": [0.4], "output_scale": 1.0},
        "noise_sigma": 0.01,
        "algorithm": {
            "epsilon": 0.1,
            "beta": 3.0,
            "beta_ucb": 4.0,
            "lipschitz_theta": 2.0,
            "lipschitz_state": 2.0,
        },
        "environment": {"kind": "synthetic", "benchmark": "bump_1d", "horizon": 50},
        "contexts": {"nominal": []},
        "safe_seeds": {"nominal": [[1.7]]},
        "context_schedule": [{"context": "nominal", "episodes": 50}],
        "episode_cap": 50,
        "seeds": list(range(10)),
    }
    data.update(overrides)
    return ExperimentConfig(**data)


PRESETS = {
    "pendulum": pendulum_config,
    "two_island": two_island_config,
    "ctx_quadratic": ctx_quadratic_config,
    "bump": bump_config,
}
