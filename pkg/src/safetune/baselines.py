"""Baseline algorithms sharing the surrogate and environment stack.

The local-only safe baseline is the exploration machine with global steps
disabled; the unconstrained baseline proposes by upper confidence bound
over the whole domain and never consults safe sets or fail sets.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from .envs import RolloutRecord
from .errors import ConfigurationError
from .explore import AlgoOptions, EpisodeOutcome, SafeOptimizer
from .gp import Surrogate
from .sets import Domain

ALGORITHMS = ("gosafeopt", "safeopt", "gp_ucb")


def make_safeopt(domain: Domain, env, contexts, safe_seeds, model: Surrogate,
                 opts: AlgoOptions, rng: np.random.Generator) -> SafeOptimizer:
    """Local-only safe exploration: identical machinery, no global phase."""
    return SafeOptimizer(domain, env, contexts, safe_seeds, model, opts, rng,
                         enable_global=False)


class UcbOptimizer:
    """Unconstrained upper-confidence-bound loop over the full domain.

    Proposes argmax of mu + sqrt(beta_u) * sigma on the objective output,
    evaluates regardless of constraint estimates, and keeps the incumbent
    by best measured objective. Violations are logged, never prevented.
    """

    def __init__(self, domain: Domain, env, contexts: Dict[str, Sequence[float]],
                 model: Surrogate, beta_u: float, noise_sigma: float,
                 rng: np.random.Generator):
        if beta_u <= 0:
            raise ConfigurationError("beta_u must be positive")
        self.domain = domain
        self.env = env
        self.contexts = {cid: np.asarray(v, dtype=float).reshape(-1)
                         for cid, v in contexts.items()}
        self.model = model
        self.beta_u = float(beta_u)
        self.noise_sigma = float(noise_sigma)
        self.rng = rng
        self.incumbent: Dict[str, tuple] = {}  # cid -> (index, measured objective)
        self.episodes_run = 0

    def _query_inputs(self, cid: str) -> np.ndarray:
        z = self.contexts[cid]
        if z.size == 0:
            return self.domain.points
        return np.hstack([self.domain.points, np.tile(z, (len(self.domain), 1))])

    def propose(self, cid: str) -> int:
        mu, var = self.model.posterior(self._query_inputs(cid), 0)
        score = mu + math.sqrt(self.beta_u) * np.sqrt(var)
        return int(np.argmax(score))

    def episode(self, cid: str) -> EpisodeOutcome:
        if cid not in self.contexts:
            raise ConfigurationError(f"context {cid!r} was never registered")
        z = self.contexts[cid]
        idx = self.propose(cid)
        theta = self.domain.points[idx]
        record: RolloutRecord = self.env.rollout(theta, z if z.size else None)
        y = record.y + self.noise_sigma * self.rng.standard_normal(self.model.n_outputs)
        self.model = self.model.add(np.concatenate([theta, z]), y)
        best = self.incumbent.get(cid)
        if best is None or y[0] > best[1]:
            self.incumbent[cid] = (idx, float(y[0]))
        self.episodes_run += 1
        return EpisodeOutcome(
            context_id=cid,
            phase="ucb",
            evaluated=True,
            theta_index=idx,
            theta=theta,
            y_measured=y,
            record=record,
            triggered=False,
            safe_size=0,
            excluded_size=0,
            best_guess=self.incumbent[cid][0],
        )

    def best_guess_index(self, cid: str) -> int:
        if cid not in self.incumbent:
            raise ConfigurationError("no evaluations yet for this context")
        return self.incumbent[cid][0]

    def run(self, schedule: Sequence[str],
            max_episodes: Optional[int] = None) -> List[EpisodeOutcome]:
        outcomes = []
        for n, cid in enumerate(schedule):
            if max_episodes is not None and n >= max_episodes:
                break
            outcomes.append(self.episode(cid))
        return outcomes
