"""Lipschitz-certified safe sets, expanders, and maximizers on finite domains.

All operations are pure functions over boolean masks and interval arrays;
callers own the per-context state. Certification follows the recursive
rule: a parameter is safe when, for every constraint, some anchor in the
previous safe set has a lower bound that survives the Lipschitz penalty
over the distance to the candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError


@dataclass
class Domain:
    """Finite candidate set of parameter vectors with cached pairwise metric."""

    points: np.ndarray
    _dist: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ConfigurationError("candidate domain must be a non-empty 2-D point set")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("candidate domain contains non-finite points")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ConfigurationError("candidate domain points must be pairwise distinct")
        self.points = pts

    @classmethod
    def from_grid(cls, bounds, resolution) -> "Domain":
        """Cartesian grid from per-coordinate (low, high) bounds and counts."""
        bounds = [tuple(b) for b in bounds]
        if np.isscalar(resolution):
            resolution = [int(resolution)] * len(bounds)
        axes = [np.linspace(lo, hi, int(n)) for (lo, hi), n in zip(bounds, resolution)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def pairwise(self) -> np.ndarray:
        if self._dist is None:
            diff = self.points[:, None, :] - self.points[None, :, :]
            self._dist = np.sqrt(np.sum(diff**2, axis=2))
        return self._dist

    def nearest_index(self, theta) -> int:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return int(np.argmin(np.sum((self.points - theta) ** 2, axis=1)))

    def min_spacing(self) -> float:
        D = self.pairwise().copy()
        np.fill_diagonal(D, np.inf)
        return float(D.min())


def update_safe_set(domain: Domain, prev_safe: np.ndarray,
                    lower_constraints: np.ndarray, lipschitz: float):
    """One certification pass: grow the safe set from its previous members.

    ``lower_constraints`` holds the current constraint lower bounds, one
    column per constraint. Returns the new mask plus an (n, c) array of
    certifying anchor indices, re-checkable after the fact.
    """
    prev_safe = np.asarray(prev_safe, dtype=bool)
    if not prev_safe.any():
        raise ConfigurationError(
            "safe set is empty; a non-empty initial safe seed is required"
        )
    L = float(lipschitz)
    lower = np.atleast_2d(np.asarray(lower_constraints, dtype=float))
    n, c = lower.shape
    D = domain.pairwise()[:, prev_safe]  # (n, |S|)
    anchor_ids = np.flatnonzero(prev_safe)
    anchors = np.full((n, c), -1, dtype=int)
    safe = np.ones(n, dtype=bool)
    for i in range(c):
        margins = lower[prev_safe, i][None, :] - L * D  # (n, |S|)
        best = np.argmax(margins, axis=1)
        covered = margins[np.arange(n), best] >= 0.0
        anchors[covered, i] = anchor_ids[best[covered]]
        safe &= covered
    anchors[~safe] = -1
    return safe, anchors


def compute_expanders(domain: Domain, safe: np.ndarray,
                      upper_constraints: np.ndarray, lipschitz: float) -> np.ndarray:
    """Safe points whose optimistic bound could certify some unsafe point.

    A safe point qualifies if, for at least one currently unsafe point and
    at least one constraint, the upper bound survives the Lipschitz
    penalty. Only positivity of the count matters.
    """
    safe = np.asarray(safe, dtype=bool)
    expanders = np.zeros_like(safe)
    if safe.all() or not safe.any():
        return expanders
    upper = np.atleast_2d(np.asarray(upper_constraints, dtype=float))
    # exists-a-constraint test collapses to the row maximum
    u_max = upper[safe].max(axis=1)
    d_min = domain.pairwise()[np.ix_(safe, ~safe)].min(axis=1)
    expanders[safe] = u_max - float(lipschitz) * d_min >= 0.0
    return expanders


def compute_maximizers(safe: np.ndarray, lower_obj: np.ndarray,
                       upper_obj: np.ndarray) -> np.ndarray:
    """Safe points whose optimistic objective meets the best pessimistic one."""
    safe = np.asarray(safe, dtype=bool)
    maximizers = np.zeros_like(safe)
    if not safe.any():
        return maximizers
    threshold = np.max(np.asarray(lower_obj, dtype=float)[safe])
    maximizers[safe] = np.asarray(upper_obj, dtype=float)[safe] >= threshold
    return maximizers


def best_guess_index(safe: np.ndarray, lower_obj: np.ndarray) -> int:
    """Safe member maximizing the objective lower bound; ties to lowest index."""
    safe = np.asarray(safe, dtype=bool)
    if not safe.any():
        raise ConfigurationError("cannot pick a best guess from an empty safe set")
    idx = np.flatnonzero(safe)
    return int(idx[np.argmax(np.asarray(lower_obj, dtype=float)[safe])])


def reachable_set(domain: Domain, constraint_values: np.ndarray, seed: np.ndarray,
                  epsilon: float, lipschitz: float, return_iterations: bool = False):
    """Fixed point of the slack-penalized one-step reachability operator.

    Ground-truth oracle for tests: ``constraint_values`` are the true
    constraint evaluations (one column per constraint). A point joins the
    set when some current member certifies it for every constraint with
    slack ``epsilon``. Terminates in at most ``len(domain)`` sweeps.
    """
    q = np.atleast_2d(np.asarray(constraint_values, dtype=float))
    reach = np.asarray(seed, dtype=bool).copy()
    L = float(lipschitz)
    eps = float(epsilon)
    radius_ok = np.all(q - eps >= 0.0, axis=1)  # anchors able to certify at all
    D = domain.pairwise()
    if L > 0:
        radii = np.min((q - eps) / L, axis=1)
    iterations = 0
    while True:
        iterations += 1
        anchors = reach & radius_ok
        if not anchors.any():
            break
        if L == 0:
            newly = ~reach  # zero Lipschitz constant certifies everything
        else:
            covered = (D[:, anchors] <= radii[anchors][None, :]).any(axis=1)
            newly = covered & ~reach
        if not newly.any():
            break
        reach |= newly
        if iterations > len(domain):  # pragma: no cover - defensive
            raise RuntimeError("reachability iteration exceeded the domain size")
    return (reach, iterations) if return_iterations else reach


def connected_components(domain: Domain, mask: np.ndarray,
                         radius: Optional[float] = None) -> np.ndarray:
    """Component labels (-1 outside the mask) under a distance-adjacency graph.

    Default adjacency radius is 1.5x the minimum grid spacing, which links
    axis neighbours but not points across a one-cell gap.
    """
    mask = np.asarray(mask, dtype=bool)
    labels = np.full(len(mask), -1, dtype=int)
    if not mask.any():
        return labels
    r = 1.5 * domain.min_spacing() if radius is None else float(radius)
    D = domain.pairwise()
    idx = np.flatnonzero(mask)
    adj = D[np.ix_(idx, idx)] <= r
    current = 0
    for start in range(len(idx)):
        if labels[idx[start]] != -1:
            continue
        frontier = [start]
        labels[idx[start]] = current
        while frontier:
            k = frontier.pop()
            for j in np.flatnonzero(adj[k]):
                if labels[idx[j]] == -1:
                    labels[idx[j]] = current
                    frontier.append(j)
        current += 1
    return labels
