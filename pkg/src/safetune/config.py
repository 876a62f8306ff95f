"""Experiment configuration schema and runtime builders.

The schema is deliberately strict about safety-relevant constants: the
Lipschitz constants and, in gaussian boundary mode, the eta thresholds
have no defaults, so a run cannot silently fake a guarantee. Everything
round-trips through YAML or JSON.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from . import envs
from .acquisition import SwarmParams
from .baselines import ALGORITHMS, UcbOptimizer, make_safeopt
from .errors import ConfigurationError
from .explore import AlgoOptions, BoundaryParams, BOUNDARY_PROFILES, SafeOptimizer
from .gp import CompositeKernel, Kernel, Surrogate
from .sets import Domain


class KernelBlock(BaseModel):
    family: Literal["matern_nu_1_5", "rbf", "linear"] = "matern_nu_1_5"
    lengthscales: List[float]
    output_scale: float = 1.0


class CompositeBlock(BaseModel):
    mode: Literal["product", "sum"]
    theta: KernelBlock
    context: KernelBlock


class KernelConfig(BaseModel):
    """Single kernel, optional theta x context composite, per-output override."""

    family: Literal["matern_nu_1_5", "rbf", "linear"] = "matern_nu_1_5"
    lengthscales: Optional[List[float]] = None
    output_scale: float = 1.0
    composite: Optional[CompositeBlock] = None
    per_output: Optional[List["KernelConfig"]] = None

    @model_validator(mode="after")
    def _has_some_shape(self):
        if self.composite is None and self.lengthscales is None and self.per_output is None:
            raise ValueError("kernel needs lengthscales, a composite, or per_output blocks")
        return self


class BoundaryBlock(BaseModel):
    mode: Literal["lipschitz", "gaussian"] = "lipschitz"
    profile: Optional[Literal["simulation", "hardware"]] = None
    sigma: float = 2.0
    tau_interior: float = 0.2
    tau_marginal: float = 0.6
    eta_low: Optional[float] = None
    eta_high: Optional[float] = None

    @model_validator(mode="after")
    def _gaussian_needs_etas(self):
        if self.mode == "gaussian" and (self.eta_low is None or self.eta_high is None):
            raise ValueError(
                "gaussian boundary mode requires explicit eta_low and eta_high"
            )
        return self

    def resolved(self) -> "BoundaryBlock":
        if self.profile is None:
            return self
        merged = self.model_dump()
        merged.update(BOUNDARY_PROFILES[self.profile])
        return BoundaryBlock(**merged)


class PhaseScheduleBlock(BaseModel):
    mode: Literal["adaptive", "fixed"] = "adaptive"
    n_l: int = 10
    n_g: int = 5
    n_d: int = 5
    discard_ratio: float = 0.5


class SwarmBlock(BaseModel):
    social: float = 1.0
    cognitive: float = 1.0
    inertia: float = 0.9
    iterations: int = 100
    restarts: int = 100
    particles: int = 100


class AcquisitionBlock(BaseModel):
    backend: Literal["grid", "swarm"] = "grid"
    swarm: SwarmBlock = Field(default_factory=SwarmBlock)


class AlgorithmBlock(BaseModel):
    epsilon: float
    lipschitz_theta: Union[float, Dict[str, float]]
    lipschitz_state: float
    beta: float = 16.0
    beta_ucb: float = 4.0
    xi: Optional[float] = None
    boundary: BoundaryBlock = Field(default_factory=BoundaryBlock)
    phase_schedule: PhaseScheduleBlock = Field(default_factory=PhaseScheduleBlock)
    record_triggered: bool = False
    acquisition: AcquisitionBlock = Field(default_factory=AcquisitionBlock)

    @field_validator("epsilon", "lipschitz_state", "beta", "beta_ucb")
    @classmethod
    def _positive(cls, v, info):
        if v <= 0:
            raise ValueError(f"{info.field_name} must be positive")
        return v


class DomainBlock(BaseModel):
    mode: Literal["grid", "points"] = "grid"
    bounds: Optional[List[List[float]]] = None
    resolution: Optional[Union[int, List[int]]] = None
    points: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _consistent(self):
        if self.mode == "grid" and (self.bounds is None or self.resolution is None):
            raise ValueError("grid mode needs bounds and resolution")
        if self.mode == "points" and not self.points:
            raise ValueError("points mode needs an explicit point list")
        return self


class PendulumBlock(BaseModel):
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 10.0
    dt: float = 0.05
    horizon: int = 120
    torque_limit: float = 2.0
    max_speed: float = 8.0
    disturbance: List[float] = Field(default_factory=lambda: [2.0, 1.0])
    reference_gains: List[float] = Field(default_factory=lambda: [3.0, 1.0])
    x0: List[float] = Field(default_factory=lambda: [2.1, 0.0])
    target_angle: float = 2.7


class RewardBlock(BaseModel):
    q_g: List[float]
    q_q: List[float]
    v0: Optional[float] = None  # derived from the seed rollout when omitted
    q_p: Optional[List[float]] = None


class EnvironmentBlock(BaseModel):
    kind: Literal["pendulum", "synthetic"]
    pendulum: Optional[PendulumBlock] = None
    reward: Optional[RewardBlock] = None
    benchmark: Optional[str] = None
    horizon: int = 100

    @model_validator(mode="after")
    def _consistent(self):
        if self.kind == "pendulum" and self.reward is None:
            raise ValueError("pendulum environment needs a reward block")
        if self.kind == "synthetic":
            if self.benchmark is None:
                raise ValueError("synthetic environment needs a benchmark id")
            if self.benchmark not in envs.BENCHMARKS:
                raise ValueError(
                    f"unknown benchmark {self.benchmark!r}; "
                    f"known: {sorted(envs.BENCHMARKS)}"
                )
        return self


class ScheduleEntry(BaseModel):
    context: str
    episodes: int

    @field_validator("episodes")
    @classmethod
    def _positive(cls, v):
        if v < 1:
            raise ValueError("episodes must be >= 1")
        return v


class ExperimentConfig(BaseModel):
    schema_version: Literal[1] = 1
    name: str
    domain: DomainBlock
    kernel: KernelConfig
    noise_sigma: float = 0.05
    algorithm: AlgorithmBlock
    environment: EnvironmentBlock
    contexts: Dict[str, List[float]]
    safe_seeds: Dict[str, List[List[float]]]
    context_schedule: List[ScheduleEntry]
    episode_cap: int = 150
    seeds: List[int] = Field(default_factory=lambda: list(range(10)))

    @model_validator(mode="after")
    def _cross_checks(self):
        for entry in self.context_schedule:
            if entry.context not in self.contexts:
                raise ValueError(f"scheduled context {entry.context!r} is not declared")
        for cid in self.contexts:
            if cid not in self.safe_seeds or not self.safe_seeds[cid]:
                raise ValueError(f"context {cid!r} has no initial safe seed")
        L = self.algorithm.lipschitz_theta
        if isinstance(L, dict):
            missing = [c for c in self.contexts if c not in L]
            if missing:
                raise ValueError(f"lipschitz_theta missing contexts: {missing}")
        dims = {len(v) for v in self.contexts.values()}
        if len(dims) > 1:
            raise ValueError("all context vectors must share one dimension")
        return self


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    elif path.suffix == ".json":
        data = json.loads(text)
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = yaml.safe_load(text)
    return ExperimentConfig(**data)


def dump_config(cfg: ExperimentConfig, path) -> None:
    path = Path(path)
    data = cfg.model_dump(mode="json")
    if path.suffix == ".json":
        path.write_text(json.dumps(data, indent=2) + "\n")
    else:
        path.write_text(yaml.safe_dump(data, sort_keys=False))


def validation_errors(data: dict) -> List[str]:
    """Field-level diagnostics for a raw config mapping; empty when valid."""
    try:
        ExperimentConfig(**data)
        return []
    except ValidationError as err:
        out = []
        for item in err.errors():
            loc = ".".join(str(p) for p in item["loc"]) or "<root>"
            out.append(f"{loc}: {item['msg']}")
        return out


# ---------------------------------------------------------------- builders


def _build_base_kernel(block: KernelBlock) -> Kernel:
    return Kernel(block.family, tuple(block.lengthscales), block.output_scale)


def _build_one_kernel(cfg: KernelConfig, theta_dim: int, ctx_dim: int):
    if cfg.composite is not None:
        left = _build_base_kernel(cfg.composite.theta)
        right = _build_base_kernel(cfg.composite.context)
        if left.dim != theta_dim or right.dim != ctx_dim:
            raise ConfigurationError(
                "composite kernel blocks must split parameter and context "
                f"coordinates exactly ({theta_dim} + {ctx_dim})"
            )
        return CompositeKernel(cfg.composite.mode, left, right)
    ls = cfg.lengthscales
    if ls is None or len(ls) != theta_dim + ctx_dim:
        raise ConfigurationError(
            f"kernel lengthscales must cover all {theta_dim + ctx_dim} input coordinates"
        )
    return Kernel(cfg.family, tuple(ls), cfg.output_scale)


def build_kernel(cfg: ExperimentConfig, theta_dim: int, ctx_dim: int):
    k = cfg.kernel
    if k.per_output is not None:
        return [_build_one_kernel(sub, theta_dim, ctx_dim) for sub in k.per_output]
    return _build_one_kernel(k, theta_dim, ctx_dim)


def build_domain(cfg: ExperimentConfig) -> Domain:
    d = cfg.domain
    if d.mode == "grid":
        return Domain.from_grid(d.bounds, d.resolution)
    return Domain(np.asarray(d.points, dtype=float))


def _first_seed_point(cfg: ExperimentConfig) -> np.ndarray:
    first_ctx = cfg.context_schedule[0].context
    return np.asarray(cfg.safe_seeds[first_ctx][0], dtype=float)


def build_env(cfg: ExperimentConfig):
    """Environment plus its output arity (objective + constraints)."""
    e = cfg.environment
    if e.kind == "synthetic":
        env = envs.SyntheticEnv(e.benchmark, horizon=e.horizon)
        return env, 1 + env.bench.n_constraints
    block = e.pendulum if e.pendulum is not None else PendulumBlock()
    pend = envs.PendulumConfig(**{
        k: tuple(v) if isinstance(v, list) else v
        for k, v in block.model_dump().items()
    })
    reward = e.reward
    v0 = reward.v0
    if v0 is None:
        # size the constraint level so the seed's worst margin is ~30% of it
        probe = envs.RewardSpec(tuple(reward.q_g), tuple(reward.q_q), v0=0.0,
                                q_p=tuple(reward.q_p) if reward.q_p else None)
        probe_env = envs.PendulumEnv(pend, probe)
        rec = probe_env.rollout(_first_seed_point(cfg))
        worst = float(-rec.margins.min())  # max weighted squared error
        v0 = worst / 0.7
    spec = envs.RewardSpec(tuple(reward.q_g), tuple(reward.q_q), v0=v0,
                           q_p=tuple(reward.q_p) if reward.q_p else None)
    return envs.PendulumEnv(pend, spec), 2


def snap_seed_indices(domain: Domain, cfg: ExperimentConfig) -> Dict[str, List[int]]:
    """Map declared safe-seed points to domain indices (must sit on the grid)."""
    tol = 0.5 * domain.min_spacing()
    out = {}
    for cid, pts in cfg.safe_seeds.items():
        idx = []
        for p in pts:
            i = domain.nearest_index(p)
            dist = float(np.linalg.norm(domain.points[i] - np.asarray(p, dtype=float)))
            if dist > tol:
                raise ConfigurationError(
                    f"safe seed {p} for context {cid!r} is {dist:.4g} away from "
                    "the nearest domain point; seeds must lie on the domain"
                )
            idx.append(i)
        out[cid] = sorted(set(idx))
    return out


def build_algo_options(cfg: ExperimentConfig) -> AlgoOptions:
    a = cfg.algorithm
    boundary = None
    if a.boundary.mode == "gaussian":
        b = a.boundary.resolved()
        boundary = BoundaryParams(
            sigma=b.sigma, tau_interior=b.tau_interior, tau_marginal=b.tau_marginal,
            eta_low=b.eta_low, eta_high=b.eta_high,
        )
    sw = a.acquisition.swarm
    return AlgoOptions(
        lipschitz_theta=(
            dict(a.lipschitz_theta) if isinstance(a.lipschitz_theta, dict)
            else float(a.lipschitz_theta)
        ),
        lipschitz_state=a.lipschitz_state,
        beta=a.beta,
        epsilon=a.epsilon,
        noise_sigma=cfg.noise_sigma,
        xi=a.xi,
        boundary_mode=a.boundary.mode,
        boundary=boundary,
        schedule_mode=a.phase_schedule.mode,
        n_l=a.phase_schedule.n_l,
        n_g=a.phase_schedule.n_g,
        n_d=a.phase_schedule.n_d,
        discard_ratio=a.phase_schedule.discard_ratio,
        record_triggered=a.record_triggered,
        acquisition_backend=a.acquisition.backend,
        swarm=SwarmParams(
            social=sw.social, cognitive=sw.cognitive, inertia=sw.inertia,
            iterations=sw.iterations, restarts=sw.restarts, particles=sw.particles,
        ),
    )


def flat_schedule(cfg: ExperimentConfig) -> List[str]:
    """Expand the context schedule to one id per episode, padded to the cap."""
    ids = []
    for entry in cfg.context_schedule:
        ids.extend([entry.context] * entry.episodes)
    if not ids:
        raise ConfigurationError("context schedule is empty")
    while len(ids) < cfg.episode_cap:
        ids.append(ids[-1])
    return ids[: cfg.episode_cap]


def build_optimizer(cfg: ExperimentConfig, algo: str, seed: int):
    """Assemble the runtime objects for one (algorithm, seed) run."""
    if algo not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algo!r}; known: {ALGORITHMS}")
    domain = build_domain(cfg)
    env, n_outputs = build_env(cfg)
    if domain.dim != getattr(env, "theta_dim", domain.dim):
        raise ConfigurationError(
            f"domain dimension {domain.dim} does not match the environment's "
            f"parameter dimension {env.theta_dim}"
        )
    ctx_dim = len(next(iter(cfg.contexts.values()))) if cfg.contexts else 0
    kernel = build_kernel(cfg, domain.dim, ctx_dim)
    model = Surrogate(kernel, cfg.noise_sigma, n_outputs)
    rng = np.random.default_rng(seed)
    contexts = {cid: np.asarray(v, dtype=float) for cid, v in cfg.contexts.items()}
    seeds_idx = snap_seed_indices(domain, cfg)
    if algo == "gp_ucb":
        return UcbOptimizer(domain, env, contexts, model,
                            cfg.algorithm.beta_ucb, cfg.noise_sigma, rng)
    opts = build_algo_options(cfg)
    if algo == "safeopt":
        return make_safeopt(domain, env, contexts, seeds_idx, model, opts, rng)
    return SafeOptimizer(domain, env, contexts, seeds_idx, model, opts, rng)
