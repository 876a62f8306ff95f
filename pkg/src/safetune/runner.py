"""Experiment runner: seeded runs, episode logs, metric CSVs, aggregation.

One run is (config, algorithm, seed) -> a metrics CSV plus a line-delimited
episode log. A sweep runs every seed, normalizes the best-guess curves to
[0, 1] with the sweep-wide min and max, and writes an aggregate CSV with
the per-episode mean and standard error plus a JSON summary.

Outputs are deterministic: the same config and seed produce byte-identical
CSVs and logs (wall times live only in the summary).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import envs
from .config import ExperimentConfig, build_optimizer, flat_schedule
from .errors import ConfigurationError, EnvironmentFault, SafetuneError
from .explore import SafeOptimizer
from .sets import Domain, reachable_set

CSV_COLUMNS = (
    "episode", "context_id", "phase", "best_guess_objective",
    "normalized_objective", "violations_cum", "safe_set_size",
)


@dataclass
class RunMetrics:
    """Per-episode metrics of one (algorithm, seed) run."""

    algo: str
    seed: int
    episodes: List[dict] = field(default_factory=list)
    context_rows: List[dict] = field(default_factory=list)
    log_lines: List[str] = field(default_factory=list)
    best_guess_theta: Dict[str, list] = field(default_factory=dict)
    best_guess_objective: Dict[str, float] = field(default_factory=dict)
    violations_total: int = 0
    termination_episode: Optional[int] = None
    wall_time: float = 0.0
    crossings: int = 0
    monotonicity_violations: int = 0
    safety_ledger_violations: int = 0
    error: Optional[str] = None

    def objective_curve(self) -> np.ndarray:
        return np.array([row["best_guess_objective"] for row in self.episodes])


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_single(cfg: ExperimentConfig, algo: str, seed: int) -> RunMetrics:
    """Run one seeded experiment and collect metrics in memory."""
    optimizer = build_optimizer(cfg, algo, seed)
    schedule = flat_schedule(cfg)
    metrics = RunMetrics(algo=algo, seed=seed)
    env = optimizer.env
    true_cache: Dict[tuple, float] = {}

    def true_objective(cid: str, idx: int) -> float:
        key = (cid, idx)
        if key not in true_cache:
            theta = optimizer.domain.points[idx]
            z = optimizer_context_vec(optimizer, cid)
            g, _ = env.true_eval(theta, z if z is not None and z.size else None)
            true_cache[key] = float(g)
        return true_cache[key]

    start = time.perf_counter()
    violations = 0
    try:
        for n, cid in enumerate(schedule):
            try:
                outcome = optimizer.episode(cid)
            except SafetuneError as err:
                metrics.error = str(err)
                break
            if outcome.evaluated and outcome.record is not None:
                if float(outcome.record.min_margins.min()) < 0.0:
                    violations += 1
            if outcome.terminated and metrics.termination_episode is None:
                metrics.termination_episode = n
            bg_idx = outcome.best_guess if outcome.best_guess >= 0 else None
            bg_obj = true_objective(cid, bg_idx) if bg_idx is not None else float("nan")
            metrics.episodes.append({
                "episode": n,
                "context_id": cid,
                "phase": outcome.phase,
                "best_guess_objective": bg_obj,
                "violations_cum": violations,
                "safe_set_size": outcome.safe_size,
            })
            if isinstance(optimizer, SafeOptimizer):
                for ctx_id, state in optimizer.ctx.items():
                    best_l = float(
                        optimizer.conf.lower[ctx_id][
                            optimizer.best_guess_index(ctx_id), 0
                        ]
                    )
                    metrics.context_rows.append({
                        "episode": n,
                        "context_id": ctx_id,
                        "best_l_bound": best_l,
                        "violations_cum": violations,
                        "safe_set_size": int(state.safe.sum()),
                    })
            metrics.log_lines.append(json.dumps({
                "episode": n,
                "context": cid,
                "phase": outcome.phase,
                "theta": None if outcome.theta is None else [float(t) for t in outcome.theta],
                "y": None if outcome.y_measured is None else [float(v) for v in outcome.y_measured],
                "triggered": bool(outcome.triggered),
                "min_margins": (
                    None if outcome.record is None
                    else [float(m) for m in outcome.record.min_margins]
                ),
            }, separators=(",", ":")))
    finally:
        metrics.wall_time = time.perf_counter() - start
        metrics.violations_total = violations
        if isinstance(optimizer, SafeOptimizer):
            metrics.crossings = optimizer.conf.crossings
            metrics.monotonicity_violations = optimizer.monotonicity_violations
            metrics.safety_ledger_violations = optimizer.safety_ledger_violations
        for cid in cfg.contexts:
            try:
                idx = optimizer.best_guess_index(cid)
            except SafetuneError:
                continue
            metrics.best_guess_theta[cid] = [float(t) for t in optimizer.domain.points[idx]]
            metrics.best_guess_objective[cid] = true_objective(cid, idx)
    return metrics


def optimizer_context_vec(optimizer, cid: str):
    if isinstance(optimizer, SafeOptimizer):
        return optimizer.ctx[cid].vector
    return optimizer.contexts.get(cid)


def normalize_curves(curves: List[np.ndarray]):
    """Affine map of best-guess curves to [0, 1] with sweep-wide min/max.

    A flat sweep (max == min) maps everything to zero. Returns the
    normalized curves plus the (low, high) used.
    """
    if not curves:
        raise ConfigurationError("need at least one run to normalize")
    stacked = np.concatenate([np.asarray(c, dtype=float) for c in curves])
    finite = stacked[np.isfinite(stacked)]
    if finite.size == 0:
        return [np.zeros_like(np.asarray(c, dtype=float)) for c in curves], (0.0, 0.0)
    low, high = float(finite.min()), float(finite.max())
    if high == low:
        return [np.zeros_like(np.asarray(c, dtype=float)) for c in curves], (low, high)
    return [
        (np.asarray(c, dtype=float) - low) / (high - low) for c in curves
    ], (low, high)


def _write_run_csv(path: Path, metrics: RunMetrics, normalized: np.ndarray):
    lines = [",".join(CSV_COLUMNS)]
    for row, norm in zip(metrics.episodes, normalized):
        lines.append(",".join([
            _fmt(row["episode"]),
            row["context_id"],
            row["phase"],
            _fmt(row["best_guess_objective"]),
            _fmt(float(norm)),
            _fmt(row["violations_cum"]),
            _fmt(row["safe_set_size"]),
        ]))
    path.write_text("\n".join(lines) + "\n")


def _write_aggregate_csv(path: Path, runs: List[RunMetrics], normalized: List[np.ndarray]):
    n_ep = len(runs[0].episodes)
    norm = np.stack(normalized)  # (seeds, episodes)
    raw = np.stack([r.objective_curve() for r in runs])
    viol = np.stack([[row["violations_cum"] for row in r.episodes] for r in runs]).astype(float)
    sizes = np.stack([[row["safe_set_size"] for row in r.episodes] for r in runs]).astype(float)
    n = norm.shape[0]
    stderr = lambda a: (np.std(a, axis=0, ddof=1) / np.sqrt(n)) if n > 1 else np.zeros(n_ep)
    header = (
        "episode,mean_normalized_objective,stderr_normalized_objective,"
        "mean_best_guess_objective,stderr_best_guess_objective,"
        "mean_violations_cum,max_violations_cum,mean_safe_set_size"
    )
    lines = [header]
    m_norm, se_norm = norm.mean(axis=0), stderr(norm)
    m_raw, se_raw = raw.mean(axis=0), stderr(raw)
    m_viol, mx_viol = viol.mean(axis=0), viol.max(axis=0)
    m_size = sizes.mean(axis=0)
    for e in range(n_ep):
        lines.append(",".join(_fmt(v) for v in (
            e, float(m_norm[e]), float(se_norm[e]), float(m_raw[e]), float(se_raw[e]),
            float(m_viol[e]), float(mx_viol[e]), float(m_size[e]),
        )))
    path.write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, algo: str, out_dir,
                   seeds: Optional[List[int]] = None) -> dict:
    """Run a full sweep; write per-seed CSV/log, aggregate CSV, summary JSON.

    Partial logs are flushed if a run faults mid-sweep (the exception is
    re-raised after persisting what completed).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(cfg.seeds if seeds is None else seeds)
    runs: List[RunMetrics] = []
    for seed in seeds:
        metrics = run_single(cfg, algo, seed)
        (out / f"{algo}_seed{seed}.jsonl").write_text(
            "\n".join(metrics.log_lines) + ("\n" if metrics.log_lines else "")
        )
        if metrics.context_rows:
            lines = ["episode,context_id,best_l_bound,violations_cum,safe_set_size"]
            for row in metrics.context_rows:
                lines.append(",".join(_fmt(row[k]) for k in (
                    "episode", "context_id", "best_l_bound",
                    "violations_cum", "safe_set_size",
                )))
            (out / f"{algo}_seed{seed}_contexts.csv").write_text("\n".join(lines) + "\n")
        runs.append(metrics)
        if metrics.error is not None:
            break
    faulted = [r for r in runs if r.error is not None]
    if faulted:
        # persist partial logs before surfacing the fault
        for metrics in runs:
            curve = metrics.objective_curve()
            normalized = normalize_curves([curve])[0][0] if len(curve) else curve
            _write_run_csv(out / f"{algo}_seed{metrics.seed}.csv", metrics, normalized)
        raise EnvironmentFault(
            f"seed {faulted[0].seed} aborted after {len(faulted[0].episodes)} "
            f"episodes: {faulted[0].error} (partial logs in {out})"
        )
    curves = [r.objective_curve() for r in runs]
    normalized, (low, high) = normalize_curves(curves)
    for metrics, norm in zip(runs, normalized):
        _write_run_csv(out / f"{algo}_seed{metrics.seed}.csv", metrics, norm)
    _write_aggregate_csv(out / f"{algo}_aggregate.csv", runs, normalized)
    summary = {
        "algo": algo,
        "config": cfg.name,
        "seeds": seeds,
        "normalization": {"low": low, "high": high},
        "violations_total": int(sum(r.violations_total for r in runs)),
        "crossings_total": int(sum(r.crossings for r in runs)),
        "monotonicity_violations_total": int(sum(r.monotonicity_violations for r in runs)),
        "safety_ledger_violations_total": int(sum(r.safety_ledger_violations for r in runs)),
        "runs": [
            {
                "seed": r.seed,
                "violations": r.violations_total,
                "termination_episode": r.termination_episode,
                "best_guess_theta": r.best_guess_theta,
                "best_guess_objective": r.best_guess_objective,
                "wall_time": r.wall_time,
            }
            for r in runs
        ],
    }
    (out / f"{algo}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


# ------------------------------------------------------------------- oracle

ORACLE_DEFAULTS = {
    "two_island_1d": {"resolution": 200, "lipschitz": 6.5, "seed_theta": [[0.55]]},
    "ctx_quadratic_2d": {"resolution": 21, "lipschitz": 4.0, "seed_theta": [[0.15, 0.0]]},
    "bump_1d": {"resolution": 200, "lipschitz": 2.0, "seed_theta": [[1.7]]},
}


def oracle_reachable_set(benchmark: str, epsilon: float,
                         resolution: Optional[int] = None,
                         lipschitz: Optional[float] = None,
                         seed_theta: Optional[list] = None,
                         context=None) -> dict:
    """Ground-truth reachable region of a registered benchmark on a grid."""
    if benchmark not in envs.BENCHMARKS:
        raise ConfigurationError(f"unknown benchmark id {benchmark!r}")
    bench = envs.BENCHMARKS[benchmark]
    defaults = ORACLE_DEFAULTS.get(benchmark, {})
    resolution = resolution or defaults.get("resolution", 100)
    lipschitz = lipschitz if lipschitz is not None else defaults.get("lipschitz")
    if lipschitz is None:
        raise ConfigurationError("a Lipschitz constant is required for the oracle")
    seed_theta = seed_theta or defaults.get("seed_theta")
    if not seed_theta:
        raise ConfigurationError("oracle needs at least one seed point")
    domain = Domain.from_grid(bench.bounds, resolution)
    q = np.atleast_2d(np.asarray(bench.constraints(domain.points, context), dtype=float))
    if q.shape[0] != len(domain):
        q = q.T
    seed_mask = np.zeros(len(domain), dtype=bool)
    for p in seed_theta:
        seed_mask[domain.nearest_index(p)] = True
    reach, iterations = reachable_set(
        domain, q, seed_mask, epsilon, lipschitz, return_iterations=True
    )
    return {
        "benchmark": benchmark,
        "epsilon": float(epsilon),
        "lipschitz": float(lipschitz),
        "points": domain.points.tolist(),
        "reachable": reach.tolist(),
        "iterations": int(iterations),
        "count": int(reach.sum()),
    }
