"""Contextual safe exploration state machine.

Alternates local safe exploration (LSE) over certified expanders and
maximizers with global exploration (GE) over unclassified parameters,
guarding GE rollouts step-by-step with backup policies. Per context it
maintains the certified safe set, expander/maximizer subsets, the backup
set of (parameter, state) pairs, the excluded set of trigger-proven
parameters, and the fail states that keep them excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from .acquisition import SwarmParams, grid_argmax, pso_maximize
from .envs import RolloutRecord
from .errors import ConfigurationError, EnvironmentFault
from .gp import ConfidenceState, Surrogate
from .sets import (
    Domain,
    best_guess_index,
    compute_expanders,
    compute_maximizers,
    connected_components,
    update_safe_set,
)


@dataclass(frozen=True)
class BoundaryParams:
    """Distance-probability trigger parameters (practical boundary mode).

    A backup covers the current state when the two-sided Gaussian tail
    probability of its distance exceeds the threshold of its class:
    interior backups (worst constraint lower bound >= eta_high) use
    tau_interior, marginal ones (in [eta_low, eta_high)) use tau_marginal.
    """

    sigma: float = 2.0
    tau_interior: float = 0.2
    tau_marginal: float = 0.6
    eta_low: float = 0.0
    eta_high: float = 0.0

    def __post_init__(self):
        if self.sigma <= 0 or self.tau_interior <= 0 or self.tau_marginal <= 0:
            raise ConfigurationError("boundary sigma and taus must be positive")
        if self.tau_marginal < self.tau_interior:
            raise ConfigurationError("tau_marginal must be >= tau_interior")
        if self.eta_high < self.eta_low:
            raise ConfigurationError("eta_high must be >= eta_low")


# Named parameter profiles for the practical boundary trigger.
BOUNDARY_PROFILES = {
    "simulation": {"sigma": 2.0, "tau_interior": 0.2, "tau_marginal": 0.6},
    "hardware": {"sigma": 2.0, "tau_interior": 0.05, "tau_marginal": 0.1},
}


def _state_distances(x, backup_states, distances=None) -> np.ndarray:
    if distances is not None:
        return np.asarray(distances, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    return np.sqrt(np.sum((backup_states - x) ** 2, axis=1))


def boundary_condition(x, backup_lower_min, backup_states, lipschitz_state,
                       xi, distances=None) -> Tuple[bool, Optional[int]]:
    """Lipschitz backup-coverage test at state ``x``.

    ``backup_lower_min`` holds, per backup, the worst constraint lower
    bound of its parameters. Triggers when no backup keeps
    l - L_x * ||x - x_s|| + xi >= 0; the returned index (when triggering)
    is the backup with the largest safety margin l - L_x * ||x - x_s||.
    ``distances`` overrides the Euclidean state metric when given.
    """
    d = _state_distances(x, backup_states, distances)
    margins = backup_lower_min - float(lipschitz_state) * d
    best = int(np.argmax(margins))
    if margins[best] + float(xi) < 0.0:
        return True, best
    return False, None


def boundary_condition_practical(x, backup_lower_min, backup_states,
                                 lipschitz_state, params: BoundaryParams,
                                 distances=None) -> Tuple[bool, Optional[int]]:
    """Probabilistic coverage test; falls back to margin-based selection.

    Coverage holds when some interior backup has two-sided tail
    probability 2(1 - Phi(d / sigma)) above tau_interior, or some marginal
    backup is above tau_marginal. Backups below eta_low provide no cover.
    """
    d = _state_distances(x, backup_states, distances)
    p = 2.0 * (1.0 - ndtr(d / params.sigma))
    interior = backup_lower_min >= params.eta_high
    marginal = (backup_lower_min >= params.eta_low) & ~interior
    covered = (interior & (p > params.tau_interior)) | (marginal & (p > params.tau_marginal))
    if covered.any():
        return False, None
    margins = backup_lower_min - float(lipschitz_state) * d
    return True, int(np.argmax(margins))


@dataclass
class ContextState:
    """All per-context exploration state."""

    cid: str
    vector: np.ndarray
    safe: np.ndarray
    prev_safe: np.ndarray
    anchors: np.ndarray
    expanders: np.ndarray
    maximizers: np.ndarray
    excluded: np.ndarray
    fail_pairs: List[Tuple[int, np.ndarray]] = field(default_factory=list)
    backup_theta: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    backup_states: Optional[np.ndarray] = None
    set_stable: bool = False
    terminated: bool = False
    # fixed-schedule bookkeeping
    phase: str = "lse"
    steps_in_phase: int = 0
    focus: Optional[np.ndarray] = None
    focus_steps: int = 0

    def backups_size(self) -> int:
        return len(self.backup_theta)


@dataclass
class EpisodeOutcome:
    """What one scheduled episode did."""

    context_id: str
    phase: str  # lse | ge | skip
    evaluated: bool
    theta_index: Optional[int] = None
    theta: Optional[np.ndarray] = None
    y_measured: Optional[np.ndarray] = None
    record: Optional[RolloutRecord] = None
    triggered: bool = False
    safe_size: int = 0
    excluded_size: int = 0
    best_guess: int = -1
    lse_converged: bool = False
    terminated: bool = False


@dataclass
class AlgoOptions:
    """Run-level algorithm constants.

    Lipschitz constants and (in gaussian boundary mode) the eta thresholds
    have no defaults on purpose: silent values here would fake a safety
    guarantee, so configuration must state them.
    """

    lipschitz_theta: Dict[str, float]
    lipschitz_state: float
    beta: float = 16.0
    epsilon: float = 0.1
    noise_sigma: float = 0.05
    xi: Optional[float] = None
    boundary_mode: str = "lipschitz"
    boundary: Optional[BoundaryParams] = None
    schedule_mode: str = "adaptive"
    n_l: int = 10
    n_g: int = 5
    n_d: int = 5
    discard_ratio: float = 0.5
    record_triggered: bool = False
    acquisition_backend: str = "grid"
    swarm: SwarmParams = field(default_factory=SwarmParams)
    strict_checks: bool = True

    def __post_init__(self):
        if self.boundary_mode not in ("lipschitz", "gaussian"):
            raise ConfigurationError("boundary_mode must be lipschitz or gaussian")
        if self.boundary_mode == "gaussian" and self.boundary is None:
            raise ConfigurationError("gaussian boundary mode requires boundary parameters")
        if self.schedule_mode not in ("adaptive", "fixed"):
            raise ConfigurationError("schedule_mode must be adaptive or fixed")
        if self.acquisition_backend not in ("grid", "swarm"):
            raise ConfigurationError("acquisition_backend must be grid or swarm")
        if not (0 < self.n_d <= self.n_l):
            raise ConfigurationError("need 0 < n_d <= n_l")


class SafeOptimizer:
    """Contextual safe exploration over a finite parameter domain.

    ``enable_global=False`` degrades to local-only safe exploration (the
    SafeOpt baseline): identical proposals until the first would-be global
    step, at which point the run simply terminates.
    """

    def __init__(self, domain: Domain, env, contexts: Dict[str, Sequence[float]],
                 safe_seeds: Dict[str, Sequence[int]], model: Surrogate,
                 opts: AlgoOptions, rng: np.random.Generator,
                 enable_global: bool = True):
        self.domain = domain
        self.env = env
        self.model = model
        self.opts = opts
        self.rng = rng
        self.enable_global = enable_global
        self.n_constraints = model.n_outputs - 1
        if self.n_constraints < 1:
            raise ConfigurationError("need at least one constraint output")
        for cid in contexts:
            if cid not in safe_seeds or len(safe_seeds[cid]) == 0:
                raise ConfigurationError(
                    f"context {cid!r} has no initial safe seed; a non-empty "
                    "initial safe set is required for every scheduled context"
                )
        self.xi = opts.xi if opts.xi is not None else getattr(env, "xi", None)
        if self.xi is None:
            raise ConfigurationError("xi not set and the environment provides none")
        self.conf = ConfidenceState(
            list(contexts), len(domain), model.n_outputs, opts.beta,
            safe_seeds={cid: np.asarray(idx, dtype=int) for cid, idx in safe_seeds.items()},
        )
        x0 = np.asarray(getattr(env, "x0"), dtype=float).reshape(-1)
        self.ctx: Dict[str, ContextState] = {}
        for cid, vec in contexts.items():
            seed_idx = np.asarray(safe_seeds[cid], dtype=int)
            safe = np.zeros(len(domain), dtype=bool)
            safe[seed_idx] = True
            state = ContextState(
                cid=cid,
                vector=np.asarray(vec, dtype=float).reshape(-1),
                safe=safe,
                prev_safe=safe.copy(),
                anchors=np.full((len(domain), self.n_constraints), -1, dtype=int),
                expanders=np.zeros(len(domain), dtype=bool),
                maximizers=safe.copy(),
                excluded=np.zeros(len(domain), dtype=bool),
                backup_theta=seed_idx.copy(),
                backup_states=np.tile(x0, (len(seed_idx), 1)),
            )
            state.anchors[seed_idx] = seed_idx[:, None]
            self.ctx[cid] = state
        # expanders from the optimistic prior: anything safe can expand
        for state in self.ctx.values():
            self._refresh_sets(state)
        # audit counters (inline invariant checks)
        self.monotonicity_violations = 0
        self.safety_ledger_violations = 0
        self.episodes_run = 0

    # ------------------------------------------------------------------ state

    def _lipschitz_theta(self, cid: str) -> float:
        L = self.opts.lipschitz_theta
        return float(L[cid]) if isinstance(L, dict) else float(L)

    def _constraint_lower(self, cid: str) -> np.ndarray:
        return self.conf.lower[cid][:, 1:]

    def _constraint_upper(self, cid: str) -> np.ndarray:
        return self.conf.upper[cid][:, 1:]

    def _refresh_sets(self, state: ContextState):
        """Recompute safe set, expanders, maximizers from current intervals."""
        state.prev_safe = state.safe
        safe, anchors = update_safe_set(
            self.domain, state.safe, self._constraint_lower(state.cid),
            self._lipschitz_theta(state.cid),
        )
        if np.any(state.prev_safe & ~safe):
            # Nested intervals make growth automatic; a raw drop can only
            # come from a band crossing (miscalibrated beta) and is
            # surfaced through the counter while the set stays monotone.
            self.monotonicity_violations += 1
            safe = safe | state.prev_safe
        state.safe = safe
        state.anchors = anchors
        lo = self.conf.lower[state.cid]
        hi = self.conf.upper[state.cid]
        state.expanders = compute_expanders(
            self.domain, safe, self._constraint_upper(state.cid),
            self._lipschitz_theta(state.cid),
        )
        state.maximizers = compute_maximizers(safe, lo[:, 0], hi[:, 0])
        state.set_stable = bool(np.array_equal(state.prev_safe, state.safe))
        # an excluded parameter later certified safe leaves the fail sets
        stale = state.excluded & state.safe
        if stale.any():
            state.excluded &= ~state.safe
            state.fail_pairs = [(ti, x) for ti, x in state.fail_pairs if not stale[ti]]

    def _refresh_all(self):
        for state in self.ctx.values():
            self.conf.update(self.model, self.domain.points, state.vector, state.cid)
            self._refresh_sets(state)

    def _boundary(self, state: ContextState, x) -> Tuple[bool, Optional[np.ndarray]]:
        """Dispatch the configured boundary test; map backup index to gains."""
        lower = self._constraint_lower(state.cid)
        l_min = lower[state.backup_theta].min(axis=1)
        metric = getattr(self.env, "state_distance", None)
        distances = metric(state.backup_states, x) if metric is not None else None
        if self.opts.boundary_mode == "lipschitz":
            trig, idx = boundary_condition(
                x, l_min, state.backup_states, self.opts.lipschitz_state, self.xi,
                distances=distances,
            )
        else:
            trig, idx = boundary_condition_practical(
                x, l_min, state.backup_states, self.opts.lipschitz_state,
                self.opts.boundary, distances=distances,
            )
        if not trig:
            return False, None
        return True, self.domain.points[state.backup_theta[idx]]

    def update_fail_sets(self, state: ContextState):
        """Drop fail entries whose state is now covered by grown backup knowledge."""
        if not state.fail_pairs:
            return
        kept = []
        for theta_idx, x in state.fail_pairs:
            trig, _ = self._boundary(state, x)
            if trig:
                kept.append((theta_idx, x))
            else:
                state.excluded[theta_idx] = False
        state.fail_pairs = kept

    # ------------------------------------------------------------ acquisition

    def _acquisition_widths(self, cid: str) -> np.ndarray:
        return self.conf.widths(cid).max(axis=1)

    def _propose(self, state: ContextState, pool: np.ndarray) -> int:
        widths = self._acquisition_widths(state.cid)
        if self.opts.acquisition_backend == "grid":
            return grid_argmax(widths, self.domain.points, pool)
        # swarm backend: maximize the instantaneous band width over the box,
        # then snap to the nearest pool member to keep set bookkeeping exact
        z = state.vector
        model = self.model

        def score(positions):
            Q = np.hstack([positions, np.tile(z, (len(positions), 1))]) if z.size else positions
            _, sds = model.posterior_all(Q)
            return 2.0 * self.opts.beta * sds.max(axis=1)

        pool_idx = np.flatnonzero(pool)
        box = np.stack([self.domain.points.min(axis=0), self.domain.points.max(axis=0)], axis=1)
        best, _ = pso_maximize(
            score, self.domain.points[pool_idx], box, self.opts.swarm, self.rng
        )
        d2 = np.sum((self.domain.points[pool_idx] - best) ** 2, axis=1)
        return int(pool_idx[np.argmin(d2)])

    def _measure(self, record: RolloutRecord) -> np.ndarray:
        noise = self.opts.noise_sigma * self.rng.standard_normal(self.model.n_outputs)
        y = record.y + noise
        if not np.all(np.isfinite(record.y)):
            raise EnvironmentFault("environment produced a non-finite measurement")
        return y

    def _extend_backups(self, state: ContextState, theta_idx: int, record: RolloutRecord):
        states = record.states
        state.backup_theta = np.concatenate(
            [state.backup_theta, np.full(len(states), theta_idx, dtype=int)]
        )
        state.backup_states = np.vstack([state.backup_states, states])

    # ------------------------------------------------------------------ steps

    def lse_converged(self, cid: str) -> bool:
        """Width below epsilon over expanders-and-maximizers, set stable."""
        state = self.ctx[cid]
        pool = state.expanders | state.maximizers
        max_w = self._acquisition_widths(cid)[pool].max() if pool.any() else -np.inf
        return bool(max_w < self.opts.epsilon) and state.set_stable

    def lse_pool(self, state: ContextState) -> np.ndarray:
        pool = state.expanders | state.maximizers
        if self.opts.schedule_mode == "fixed" and state.focus is not None:
            focused = pool & state.focus
            if focused.any():
                return focused
        return pool

    def lse_step(self, cid: str) -> EpisodeOutcome:
        state = self.ctx[cid]
        pool = self.lse_pool(state)
        idx = self._propose(state, pool)
        if not state.safe[idx]:
            self.safety_ledger_violations += 1
            if self.opts.strict_checks:
                raise RuntimeError("local step proposed an uncertified parameter")
        theta = self.domain.points[idx]
        record = self.env.rollout(theta, state.vector if state.vector.size else None)
        y = self._measure(record)
        gp_input = np.concatenate([theta, state.vector])
        self.model = self.model.add(gp_input, y)
        self._extend_backups(state, idx, record)
        self._refresh_all()
        return self._outcome(state, "lse", idx, theta, y, record)

    def ge_step(self, cid: str) -> Optional[EpisodeOutcome]:
        """One guarded global episode; None when every parameter is classified."""
        state = self.ctx[cid]
        pool = ~(state.safe | state.excluded)
        if not pool.any():
            return None
        idx = self._propose(state, pool)
        if state.excluded[idx]:
            self.safety_ledger_violations += 1
            if self.opts.strict_checks:
                raise RuntimeError("global step proposed an excluded parameter")
        theta = self.domain.points[idx]
        trigger_info = {}

        def guard(step, x):
            if trigger_info:
                return None
            trig, backup = self._boundary(state, x)
            if trig:
                trigger_info["step"] = step
                trigger_info["x"] = x
                return backup
            return None

        record = self.env.rollout(theta, state.vector if state.vector.size else None, guard=guard)
        y = self._measure(record)
        if trigger_info:
            state.excluded[idx] = True
            state.fail_pairs.append((idx, trigger_info["x"]))
            if self.opts.record_triggered:
                self.model = self.model.add(np.concatenate([theta, state.vector]), y)
                self._refresh_all()
            return self._outcome(state, "ge", idx, theta, y, record, triggered=True)
        # successful global search: the candidate joins the safe set outright
        self.model = self.model.add(np.concatenate([theta, state.vector]), y)
        state.safe = state.safe.copy()
        state.safe[idx] = True
        self.conf.clip_constraints_nonnegative(cid, idx)
        self._extend_backups(state, idx, record)
        if self.opts.schedule_mode == "fixed":
            labels = connected_components(self.domain, state.safe)
            state.focus = labels == labels[idx]
            state.focus_steps = 0
        self._refresh_all()
        return self._outcome(state, "ge", idx, theta, y, record, triggered=False)

    def _outcome(self, state: ContextState, phase: str, idx, theta, y, record,
                 triggered: bool = False) -> EpisodeOutcome:
        return EpisodeOutcome(
            context_id=state.cid,
            phase=phase,
            evaluated=True,
            theta_index=idx,
            theta=theta,
            y_measured=y,
            record=record,
            triggered=triggered,
            safe_size=int(state.safe.sum()),
            excluded_size=int(state.excluded.sum()),
            best_guess=self.best_guess_index(state.cid),
            lse_converged=self.lse_converged(state.cid),
            terminated=state.terminated,
        )

    def best_guess_index(self, cid: str) -> int:
        state = self.ctx[cid]
        return best_guess_index(state.safe, self.conf.lower[cid][:, 0])

    def best_guess(self, cid: str) -> np.ndarray:
        return self.domain.points[self.best_guess_index(cid)]

    # ------------------------------------------------------------------ loop

    def _ge_pool_empty(self, state: ContextState) -> bool:
        return bool((state.safe | state.excluded).all())

    def _check_termination(self, state: ContextState):
        if self.lse_converged(state.cid) and (
            self._ge_pool_empty(state) or not self.enable_global
        ):
            state.terminated = True

    def _fixed_phase(self, state: ContextState) -> str:
        if state.phase == "lse" and state.steps_in_phase >= self.opts.n_l:
            state.phase, state.steps_in_phase = "ge", 0
        elif state.phase == "ge" and state.steps_in_phase >= self.opts.n_g:
            state.phase, state.steps_in_phase = "lse", 0
        return state.phase

    def _maybe_discard_focus(self, state: ContextState):
        """Drop the post-discovery region focus when it looks unpromising."""
        if state.focus is None:
            return
        state.focus_steps += 1
        if state.focus_steps < self.opts.n_d:
            return
        lo = self.conf.lower[state.cid][:, 0]
        region = state.safe & state.focus
        if not region.any():
            state.focus = None
            return
        best_region = lo[region].max()
        best_global = lo[state.safe].max()
        if best_region < self.opts.discard_ratio * best_global:
            state.focus = None

    def episode(self, cid: str) -> EpisodeOutcome:
        """Run one scheduled episode for ``cid`` (a skip if it terminated)."""
        if cid not in self.ctx:
            raise ConfigurationError(f"context {cid!r} was never registered")
        state = self.ctx[cid]
        self._check_termination(state)
        if state.terminated:
            return EpisodeOutcome(
                context_id=cid, phase="skip", evaluated=False,
                safe_size=int(state.safe.sum()),
                excluded_size=int(state.excluded.sum()),
                best_guess=self.best_guess_index(cid),
                lse_converged=True, terminated=True,
            )
        self.update_fail_sets(state)
        converged = self.lse_converged(cid)
        if self.opts.schedule_mode == "fixed":
            want_ge = self._fixed_phase(state) == "ge" and self.enable_global
        else:
            want_ge = converged and self.enable_global
        outcome = None
        if want_ge:
            outcome = self.ge_step(cid)
            if outcome is None and converged:
                state.terminated = True
                return self.episode(cid)
        if outcome is None:
            if converged and not self.enable_global:
                state.terminated = True
                return self.episode(cid)
            self._maybe_discard_focus(state)
            outcome = self.lse_step(cid)
        state.steps_in_phase += 1
        self.episodes_run += 1
        self._check_termination(state)
        outcome.terminated = state.terminated
        return outcome

    def run(self, schedule: Iterable[str], max_episodes: Optional[int] = None
            ) -> List[EpisodeOutcome]:
        outcomes = []
        for n, cid in enumerate(schedule):
            if max_episodes is not None and n >= max_episodes:
                break
            outcomes.append(self.episode(cid))
        return outcomes


def run_contextual_gosafeopt(domain: Domain, env, contexts, safe_seeds, model,
                             opts: AlgoOptions, schedule: Sequence[str],
                             rng: np.random.Generator):
    """Convenience loop: run the schedule, return per-context best guesses."""
    opt = SafeOptimizer(domain, env, contexts, safe_seeds, model, opts, rng)
    outcomes = opt.run(schedule)
    best = {cid: opt.best_guess(cid) for cid in contexts}
    return best, outcomes, opt
