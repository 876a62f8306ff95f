"""Evaluation targets: a disturbed pendulum with PD tracking, and synthetic
closed-form benchmarks wrapped in a one-dimensional guarded walk so that
global-exploration rollouts have real states for backup triggering.

The pendulum follows the usual rod-on-a-pivot conventions (mass 1, length 1,
gravity 10, dt 0.05, torque clamp 2, speed clamp 8); angle zero is upright.
A torque disturbance of the joint-impedance form is injected on top of the
replayed ideal torque, and the candidate PD gains must compensate for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError

# guard(step, state) -> replacement gains or None
Guard = Callable[[int, np.ndarray], Optional[np.ndarray]]


@dataclass
class RolloutRecord:
    """Time-indexed trace of one episode.

    ``states`` has horizon+1 rows (the initial state first). ``margins``
    holds the per-step constraint margins, one column per constraint;
    ``min_margins`` is their minimum over time. ``switch_step`` is the step
    at which a guard substituted the active parameters, if any.
    """

    theta: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    margins: np.ndarray
    objective: float
    constraints: np.ndarray
    min_margins: np.ndarray
    switch_step: Optional[int] = None
    switch_theta: Optional[np.ndarray] = None
    blown: bool = False

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([[self.objective], self.constraints])

    @property
    def triggered(self) -> bool:
        return self.switch_step is not None


@dataclass(frozen=True)
class RewardSpec:
    """Diagonal weights of the tracking reward and constraint.

    objective = -sum_t ||x*(t) - x(t)||^2_{Qg} - sum_t ||x(t)||^2_{Qp},
    constraint = min_t (v0 - ||x*(t) - x(t)||^2_{Qq}).
    """

    q_g: tuple
    q_q: tuple
    v0: float
    q_p: Optional[tuple] = None

    def __post_init__(self):
        for name, w in (("q_g", self.q_g), ("q_q", self.q_q), ("q_p", self.q_p)):
            if w is None:
                continue
            if np.any(np.asarray(w, dtype=float) < 0):
                raise ConfigurationError(f"{name} weights must be non-negative")
        if not np.isfinite(self.v0):
            raise ConfigurationError("v0 must be finite")


def evaluate_rollout(states, ref_states, spec: RewardSpec, wrap_coords=()):
    """Objective and constraint of a tracked trajectory under ``spec``.

    Returns (objective, constraint, per-step margins). Coordinates listed
    in ``wrap_coords`` are differenced on the circle (angles). Non-finite
    states mark the episode blown: the constraint is the -inf sentinel.
    """
    states = np.asarray(states, dtype=float)
    ref = np.asarray(ref_states, dtype=float)
    if not np.all(np.isfinite(states)):
        margins = np.full(states.shape[0], -np.inf)
        return -np.inf, -np.inf, margins
    err = ref - states
    for c in wrap_coords:
        err[:, c] = np.mod(err[:, c] + np.pi, 2.0 * np.pi) - np.pi
    qg = np.asarray(spec.q_g, dtype=float)
    qq = np.asarray(spec.q_q, dtype=float)
    objective = -float(np.sum((err**2) @ qg))
    if spec.q_p is not None:
        objective -= float(np.sum((states**2) @ np.asarray(spec.q_p, dtype=float)))
    margins = spec.v0 - (err**2) @ qq
    return objective, float(margins.min()), margins


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class PendulumConfig:
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 10.0
    dt: float = 0.05
    horizon: int = 120
    torque_limit: float = 2.0
    max_speed: float = 8.0
    disturbance: tuple = (2.0, 1.0)
    reference_gains: tuple = (3.0, 1.0)
    x0: tuple = (2.1, 0.0)
    target_angle: float = 2.7

    def __post_init__(self):
        if self.dt <= 0 or self.horizon < 1 or self.torque_limit <= 0:
            raise ConfigurationError("dt, horizon and torque_limit must be positive")

    def max_step_displacement(self) -> float:
        """Worst-case one-step state motion under the torque limit."""
        accel = (
            1.5 * self.gravity / self.length
            + 3.0 * self.torque_limit / (self.mass * self.length**2)
        )
        return math.hypot(self.max_speed * self.dt, accel * self.dt)


def pendulum_step(state, torque: float, cfg: PendulumConfig) -> np.ndarray:
    """Semi-implicit Euler update of (angle, angular velocity)."""
    th, thdot = float(state[0]), float(state[1])
    u = min(max(float(torque), -cfg.torque_limit), cfg.torque_limit)
    accel = (
        1.5 * cfg.gravity / cfg.length * math.sin(th)
        + 3.0 / (cfg.mass * cfg.length**2) * u
    )
    thdot = thdot + accel * cfg.dt
    thdot = min(max(thdot, -cfg.max_speed), cfg.max_speed)
    th = wrap_angle(th + thdot * cfg.dt)
    return np.array([th, thdot])


def pendulum_energy(state, cfg: PendulumConfig) -> float:
    """Rod energy, zero at hanging rest (angle pi)."""
    th, thdot = float(state[0]), float(state[1])
    inertia = cfg.mass * cfg.length**2 / 3.0
    return 0.5 * inertia * thdot**2 + 0.5 * cfg.mass * cfg.gravity * cfg.length * (
        1.0 + math.cos(th)
    )


def disturbed_torque(tau_ideal: float, ref_angle: float, ref_vel: float, state,
                     gains, disturbance, torque_limit: float) -> float:
    """Applied torque: ideal feedforward + candidate PD - joint impedance.

    The candidate correction is k_p(x* - x) + k_d(xdot* - xdot); the
    injected impedance subtracts kp_d(x* - x) and adds kd_d * xdot.
    """
    th, thdot = float(state[0]), float(state[1])
    k_p, k_d = float(gains[0]), float(gains[1])
    kp_d, kd_d = float(disturbance[0]), float(disturbance[1])
    err = ref_angle - th
    tau = (
        tau_ideal
        + k_p * err
        + k_d * (ref_vel - thdot)
        - kp_d * err
        + kd_d * thdot
    )
    return min(max(tau, -torque_limit), torque_limit)


class PendulumEnv:
    """Disturbed pendulum tracking a stored ideal trajectory.

    The ideal trajectory is generated once by rolling the undisturbed
    plant under the reference PD controller; candidate gains are then
    evaluated on the disturbed plant replaying the ideal torque as a
    feedforward term. The candidate D-term damps the observed velocity
    (zero velocity reference), so gains equal to the disturbance pair
    reproduce the ideal trajectory exactly.
    """

    theta_dim = 2
    state_dim = 2

    def __init__(self, cfg: PendulumConfig, reward: RewardSpec):
        self.cfg = cfg
        self.reward = reward
        self.x0 = np.array(cfg.x0, dtype=float)
        self.ref_states, self.ref_torques = self._ideal_trajectory()
        self.xi = cfg.max_step_displacement()

    def _ideal_trajectory(self):
        cfg = self.cfg
        kp, kd = cfg.reference_gains
        states = np.empty((cfg.horizon + 1, 2))
        torques = np.empty(cfg.horizon)
        x = self.x0.copy()
        states[0] = x
        for k in range(cfg.horizon):
            tau = kp * (cfg.target_angle - x[0]) - kd * x[1]
            tau = min(max(tau, -cfg.torque_limit), cfg.torque_limit)
            torques[k] = tau
            x = pendulum_step(x, tau, cfg)
            states[k + 1] = x
        return states, torques

    def rollout(self, theta, z=None, guard: Optional[Guard] = None) -> RolloutRecord:
        cfg = self.cfg
        theta = np.asarray(theta, dtype=float)
        active = theta
        switch_step = None
        switch_theta = None
        states = np.empty((cfg.horizon + 1, 2))
        controls = np.empty(cfg.horizon)
        x = self.x0.copy()
        states[0] = x
        blown = False
        for k in range(cfg.horizon):
            if guard is not None:
                replacement = guard(k, x.copy())
                if replacement is not None and switch_step is None:
                    active = np.asarray(replacement, dtype=float)
                    switch_step = k
                    switch_theta = active
            tau = disturbed_torque(
                self.ref_torques[k], self.ref_states[k, 0], 0.0, x,
                active, cfg.disturbance, cfg.torque_limit,
            )
            controls[k] = tau
            x = pendulum_step(x, tau, cfg)
            states[k + 1] = x
            if not np.all(np.isfinite(x)):
                blown = True
                states[k + 1:] = x
                controls[k + 1:] = 0.0
                break
        objective, constraint, margins = evaluate_rollout(
            states, self.ref_states, self.reward, wrap_coords=(0,)
        )
        return RolloutRecord(
            theta=theta,
            states=states,
            controls=controls,
            margins=margins[:, None],
            objective=objective,
            constraints=np.array([constraint]),
            min_margins=np.array([margins.min()]),
            switch_step=switch_step,
            switch_theta=switch_theta,
            blown=blown,
        )

    def true_eval(self, theta, z=None):
        """Noiseless (objective, constraints) of an unguarded rollout."""
        rec = self.rollout(theta)
        return rec.objective, rec.constraints

    @staticmethod
    def state_distance(states, x) -> np.ndarray:
        """Distances from rows of ``states`` to ``x``, circular in the angle."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        x = np.asarray(x, dtype=float).reshape(-1)
        dth = np.mod(states[:, 0] - x[0] + np.pi, 2.0 * np.pi) - np.pi
        dom = states[:, 1] - x[1]
        return np.sqrt(dth**2 + dom**2)


@dataclass(frozen=True)
class Benchmark:
    """Closed-form ground truth: objective, constraints, and box bounds."""

    name: str
    theta_dim: int
    context_dim: int
    bounds: tuple
    objective: Callable
    constraints: Callable
    n_constraints: int
    constraint_cap: float


def _two_island_g(theta, z=None):
    t = np.asarray(theta, dtype=float).reshape(-1)
    return 0.6 * np.exp(-(((t - 0.55) / 0.35) ** 2)) + 1.0 * np.exp(
        -(((t - 2.45) / 0.35) ** 2)
    )


def _two_island_q(theta, z=None):
    t = np.asarray(theta, dtype=float).reshape(-1)
    return (-0.9 * t * (t - 1.2) * (t - 1.8) * (t - 3.0))[:, None]


def _ctx_quadratic_center(z):
    z0 = float(np.asarray(z, dtype=float).reshape(-1)[0]) if z is not None else 0.0
    return np.array([0.6 * z0, 0.0])


def _ctx_quadratic_g(theta, z=None):
    t = np.atleast_2d(np.asarray(theta, dtype=float))
    c = _ctx_quadratic_center(z)
    return 1.0 - np.sum((t - c) ** 2, axis=1)


def _ctx_quadratic_q(theta, z=None):
    t = np.atleast_2d(np.asarray(theta, dtype=float))
    c = _ctx_quadratic_center(z)
    return (0.6 - np.sum((t - c) ** 2, axis=1))[:, None]


def _bump_g(theta, z=None):
    t = np.asarray(theta, dtype=float).reshape(-1)
    return np.exp(-(((t - 1.7) / 0.6) ** 2))


def _bump_q(theta, z=None):
    t = np.asarray(theta, dtype=float).reshape(-1)
    return np.ones((t.size, 1))


BENCHMARKS = {
    "two_island_1d": Benchmark(
        name="two_island_1d",
        theta_dim=1,
        context_dim=0,
        bounds=((0.0, 3.0),),
        objective=_two_island_g,
        constraints=_two_island_q,
        n_constraints=1,
        constraint_cap=1.06,  # just above the constraint's true maximum
    ),
    "ctx_quadratic_2d": Benchmark(
        name="ctx_quadratic_2d",
        theta_dim=2,
        context_dim=1,
        bounds=((-1.0, 1.0), (-1.0, 1.0)),
        objective=_ctx_quadratic_g,
        constraints=_ctx_quadratic_q,
        n_constraints=1,
        constraint_cap=0.6,
    ),
    "bump_1d": Benchmark(
        name="bump_1d",
        theta_dim=1,
        context_dim=0,
        bounds=((0.0, 3.0),),
        objective=_bump_g,
        constraints=_bump_q,
        n_constraints=1,
        constraint_cap=1.0,
    ),
}


def synthetic_eval(name: str, theta, z=None):
    """Closed-form (objective, constraint vector) of a registered benchmark."""
    if name not in BENCHMARKS:
        raise ConfigurationError(f"unknown benchmark id {name!r}")
    b = BENCHMARKS[name]
    g = np.asarray(b.objective(theta, z), dtype=float).reshape(-1)
    q = np.atleast_2d(np.asarray(b.constraints(theta, z), dtype=float))
    if g.size == 1:
        return float(g[0]), q[0]
    return g, q


class SyntheticEnv:
    """Guarded scalar walk whose minimum margin equals the closed form.

    The state drifts from zero toward a danger level cap - q(theta, z) at
    a bounded rate, so the running margin cap - x(t) bottoms out exactly at
    the candidate's constraint value. A guard switching to backup gains
    redirects the walk toward the backup's (lower) danger level, which is
    what makes backup policies meaningful on closed-form benchmarks.
    """

    state_dim = 1

    def __init__(self, benchmark: str, horizon: int = 100, q_floor: Optional[float] = None):
        if benchmark not in BENCHMARKS:
            raise ConfigurationError(f"unknown benchmark id {benchmark!r}")
        self.bench = BENCHMARKS[benchmark]
        self.horizon = int(horizon)
        self.theta_dim = self.bench.theta_dim
        self.x0 = np.zeros(1)
        if q_floor is None:
            q_floor = self._scan_constraint_floor()
        self.step_limit = (self.bench.constraint_cap - q_floor) / self.horizon
        self.xi = self.step_limit

    def _scan_constraint_floor(self) -> float:
        lo = np.array([b[0] for b in self.bench.bounds])
        hi = np.array([b[1] for b in self.bench.bounds])
        rng = np.random.default_rng(0)
        probes = lo + (hi - lo) * rng.random((4096, self.bench.theta_dim))
        q = np.atleast_2d(np.asarray(self.bench.constraints(probes, None)))
        return float(q.min()) - 0.1

    def _danger(self, theta, z) -> float:
        q = np.atleast_2d(np.asarray(self.bench.constraints(theta, z), dtype=float))
        return float(self.bench.constraint_cap - q.min())

    def rollout(self, theta, z=None, guard: Optional[Guard] = None) -> RolloutRecord:
        theta = np.asarray(theta, dtype=float)
        active = theta
        target = self._danger(active, z)
        switch_step = None
        switch_theta = None
        states = np.empty((self.horizon + 1, 1))
        x = 0.0
        states[0] = x
        for k in range(self.horizon):
            if guard is not None:
                replacement = guard(k, np.array([x]))
                if replacement is not None and switch_step is None:
                    active = np.asarray(replacement, dtype=float)
                    target = self._danger(active, z)
                    switch_step = k
                    switch_theta = active
            delta = min(max(target - x, -self.step_limit), self.step_limit)
            x = x + delta
            states[k + 1] = x
        margins = self.bench.constraint_cap - states[:, 0]
        g = float(np.asarray(self.bench.objective(theta, z)).reshape(-1)[0])
        return RolloutRecord(
            theta=theta,
            states=states,
            controls=np.zeros(self.horizon),
            margins=margins[:, None],
            objective=g,
            constraints=np.array([float(margins.min())]),
            min_margins=np.array([float(margins.min())]),
            switch_step=switch_step,
            switch_theta=switch_theta,
        )

    def true_eval(self, theta, z=None):
        g, q = synthetic_eval(self.bench.name, theta, z)
        return g, np.asarray(q, dtype=float).reshape(-1)
