"""Exact Gaussian process regression over joint (parameter, context) inputs.

One GP snapshot carries a shared input set and one observation column per
output index (0 = objective, 1..c = constraints). Posteriors are exact
(Cholesky with escalating jitter). Confidence intervals are intersected
across updates, so lower bounds only rise and upper bounds only fall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import (
    CandidateLookupError,
    ConfigurationError,
    MeasurementError,
    NumericalError,
)

KERNEL_FAMILIES = ("matern_nu_1_5", "rbf", "linear")

_SQRT3 = math.sqrt(3.0)

# Escalating diagonal jitter tried when the Gram factorization fails.
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class Kernel:
    """Stationary or linear covariance with per-coordinate lengthscales.

    Parameters
    ----------
    family: one of ``matern_nu_1_5``, ``rbf``, ``linear``.
    lengthscales: positive scale per input coordinate.
    output_scale: signal standard deviation s; k(x, x) = s^2 for the
        stationary families.
    """

    family: str
    lengthscales: tuple
    output_scale: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        ls = np.asarray(self.lengthscales, dtype=float)
        if ls.ndim != 1 or ls.size == 0 or np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise ConfigurationError("lengthscales must be a positive vector")
        if not (np.isfinite(self.output_scale) and self.output_scale > 0):
            raise ConfigurationError("output_scale must be positive")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def gram(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if A.shape[1] != self.dim or B.shape[1] != self.dim:
            raise ConfigurationError(
                f"kernel expects {self.dim}-dim inputs, got {A.shape[1]} and {B.shape[1]}"
            )
        ls = np.asarray(self.lengthscales, dtype=float)
        s2 = self.output_scale**2
        As, Bs = A / ls, B / ls
        if self.family == "linear":
            return s2 * (As @ Bs.T)
        d2 = np.maximum(
            np.sum(As**2, axis=1)[:, None]
            - 2.0 * (As @ Bs.T)
            + np.sum(Bs**2, axis=1)[None, :],
            0.0,
        )
        if self.family == "rbf":
            return s2 * np.exp(-0.5 * d2)
        r = np.sqrt(d2)
        return s2 * (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)


@dataclass(frozen=True)
class CompositeKernel:
    """Product or sum of two kernels over disjoint coordinate blocks.

    The left kernel sees the first ``left.dim`` coordinates (parameters),
    the right kernel the remaining ``right.dim`` (context).
    """

    mode: str
    left: "Kernel | CompositeKernel"
    right: "Kernel | CompositeKernel"

    def __post_init__(self):
        if self.mode not in ("product", "sum"):
            raise ConfigurationError(f"composite mode must be product or sum, got {self.mode!r}")

    @property
    def dim(self) -> int:
        return self.left.dim + self.right.dim

    def gram(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if A.shape[1] != self.dim or B.shape[1] != self.dim:
            raise ConfigurationError(
                f"composite kernel expects {self.dim}-dim inputs, got {A.shape[1]}"
            )
        nl = self.left.dim
        kl = self.left.gram(A[:, :nl], B[:, :nl])
        kr = self.right.gram(A[:, nl:], B[:, nl:])
        return kl * kr if self.mode == "product" else kl + kr


def kernel_eval(kernel, a, b) -> float:
    """Covariance between two single input points."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return float(kernel.gram(a[None, :], b[None, :])[0, 0])


def _factorize(kernel, X: np.ndarray, noise_sigma: float):
    """Upper Cholesky of K + sigma^2 I, retrying up the jitter ladder."""
    K = kernel.gram(X, X)
    A = K + noise_sigma**2 * np.eye(len(X))
    last_err = None
    for jitter in JITTER_LADDER:
        try:
            return cholesky(A + jitter * np.eye(len(X)), lower=False)
        except np.linalg.LinAlgError as err:  # pragma: no cover - rare path
            last_err = err
    cond = float(np.linalg.cond(A))
    raise NumericalError(
        f"Gram factorization failed for n={len(X)} after jitter up to "
        f"{JITTER_LADDER[-1]:g} (condition number {cond:.3e})"
    ) from last_err


class Surrogate:
    """Immutable GP snapshot; ``add`` returns a new snapshot.

    Parameters
    ----------
    kernel: a `Kernel`/`CompositeKernel`, or a sequence of them, one per
        output index (a single kernel is shared across outputs).
    noise_sigma: observation noise standard deviation (> 0).
    n_outputs: number of observation columns, objective plus constraints.

    Posterior evaluation is a pure function of the snapshot and may run
    concurrently from many workers; only construction mutates state.
    """

    def __init__(self, kernel, noise_sigma: float, n_outputs: int,
                 X: Optional[np.ndarray] = None, Y: Optional[np.ndarray] = None):
        if not (np.isfinite(noise_sigma) and noise_sigma > 0):
            raise ConfigurationError("noise_sigma must be positive")
        if n_outputs < 1:
            raise ConfigurationError("need at least one output column")
        if isinstance(kernel, (list, tuple)):
            if len(kernel) != n_outputs:
                raise ConfigurationError("one kernel per output index required")
            self.kernels = tuple(kernel)
        else:
            self.kernels = (kernel,) * n_outputs
        self.noise_sigma = float(noise_sigma)
        self.n_outputs = int(n_outputs)
        dim = self.kernels[0].dim
        if any(k.dim != dim for k in self.kernels):
            raise ConfigurationError("all per-output kernels must share the input dimension")
        self.dim = dim
        self.X = np.zeros((0, dim)) if X is None else np.asarray(X, dtype=float)
        self.Y = np.zeros((0, n_outputs)) if Y is None else np.asarray(Y, dtype=float)
        if self.X.shape[0] != self.Y.shape[0]:
            raise ConfigurationError("inputs and observations must have equal length")
        if self.X.shape[0] and self.X.shape[1] != dim:
            raise ConfigurationError("input dimension does not match kernel")
        self._chol = {}  # id(kernel) -> upper Cholesky of K + sigma^2 I

    def __len__(self) -> int:
        return self.X.shape[0]

    def add(self, v, y) -> "Surrogate":
        """New snapshot conditioned on one more (input, observation) pair."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if v.shape != (self.dim,):
            raise ConfigurationError(f"input must have dimension {self.dim}")
        if y.shape != (self.n_outputs,):
            raise MeasurementError(f"observation must have {self.n_outputs} entries")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(v)):
            raise MeasurementError("non-finite observation rejected")
        return Surrogate(
            list(self.kernels),
            self.noise_sigma,
            self.n_outputs,
            np.vstack([self.X, v[None, :]]),
            np.vstack([self.Y, y[None, :]]),
        )

    def _factor(self, kernel) -> np.ndarray:
        key = id(kernel)
        if key not in self._chol:
            self._chol[key] = _factorize(kernel, self.X, self.noise_sigma)
        return self._chol[key]

    def posterior(self, Q, i: int):
        """Posterior mean and variance of output ``i`` at query rows ``Q``.

        Returns arrays shaped like the query batch; variance is clamped at
        zero after the numerical floor.
        """
        if not 0 <= i < self.n_outputs:
            raise CandidateLookupError(f"output index {i} out of range")
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        kern = self.kernels[i]
        prior_var = np.diag(kern.gram(Q, Q)).copy()
        if len(self) == 0:
            return np.zeros(Q.shape[0]), prior_var
        R = self._factor(kern)
        Kq = kern.gram(self.X, Q)  # (n, m)
        alpha = cho_solve((R, False), self.Y[:, i])
        mean = Kq.T @ alpha
        V = solve_triangular(R, Kq, trans="T", lower=False)
        var = prior_var - np.sum(V**2, axis=0)
        return mean, np.maximum(var, 0.0)

    def posterior_all(self, Q):
        """Stacked posterior over every output: means (m, n_out), sds (m, n_out)."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        means = np.empty((Q.shape[0], self.n_outputs))
        sds = np.empty_like(means)
        for i in range(self.n_outputs):
            mu, var = self.posterior(Q, i)
            means[:, i] = mu
            sds[:, i] = np.sqrt(var)
        return means, sds


class ConfidenceState:
    """Running intersection of GP credible bands over a finite domain.

    Bands are tracked per (candidate index, context id, output index).
    Intervals start at [-inf, inf], except constraint entries of the
    initial safe seed which start at [0, inf]. Every update intersects
    with mu +/- beta * sigma, so intervals are nested across episodes.

    If a band crosses (lower > upper, possible only under a misspecified
    beta), the interval collapses to its midpoint and a calibration
    counter is bumped rather than hiding the event.
    """

    def __init__(self, context_ids: Sequence[str], n_points: int, n_outputs: int,
                 beta: float, safe_seeds: Optional[dict] = None):
        if beta <= 0:
            raise ConfigurationError("beta must be positive")
        self.beta = float(beta)
        self.n_points = int(n_points)
        self.n_outputs = int(n_outputs)
        self.lower = {}
        self.upper = {}
        for cid in context_ids:
            lo = np.full((n_points, n_outputs), -np.inf)
            hi = np.full((n_points, n_outputs), np.inf)
            if safe_seeds and cid in safe_seeds:
                seeds = np.asarray(safe_seeds[cid], dtype=int)
                lo[seeds, 1:] = 0.0
            self.lower[cid] = lo
            self.upper[cid] = hi
        self.crossings = 0

    def _check(self, context_id: str):
        if context_id not in self.lower:
            raise CandidateLookupError(f"context {context_id!r} is not tracked")

    def update(self, model: Surrogate, points: np.ndarray, context_vec,
               context_id: str, indices: Optional[np.ndarray] = None) -> "ConfidenceState":
        """Intersect bands for ``context_id`` with the model's current bands."""
        self._check(context_id)
        points = np.asarray(points, dtype=float)
        if indices is None:
            indices = np.arange(points.shape[0])
        z = np.asarray(context_vec, dtype=float).reshape(-1)
        Q = np.hstack([points[indices], np.broadcast_to(z, (len(indices), z.size))]) \
            if z.size else points[indices]
        means, sds = model.posterior_all(Q)
        lo, hi = self.lower[context_id], self.upper[context_id]
        band = self.beta * sds
        new_lo = np.maximum(lo[indices], means - band)
        new_hi = np.minimum(hi[indices], means + band)
        crossed = new_lo > new_hi
        if np.any(crossed):
            mid = 0.5 * (new_lo[crossed] + new_hi[crossed])
            new_lo[crossed] = mid
            new_hi[crossed] = mid
            self.crossings += int(np.count_nonzero(crossed))
        lo[indices] = new_lo
        hi[indices] = new_hi
        return self

    def bounds(self, context_id: str, index: int, i: int):
        """(lower, upper, width) of one tracked candidate interval."""
        self._check(context_id)
        if not (0 <= index < self.n_points and 0 <= i < self.n_outputs):
            raise CandidateLookupError(f"candidate ({index}, {i}) is not tracked")
        lo = self.lower[context_id][index, i]
        hi = self.upper[context_id][index, i]
        return lo, hi, hi - lo

    def widths(self, context_id: str) -> np.ndarray:
        """(n_points, n_outputs) interval widths for one context."""
        self._check(context_id)
        return self.upper[context_id] - self.lower[context_id]

    def clip_constraints_nonnegative(self, context_id: str, index: int):
        """Intersect a candidate's constraint intervals with [0, inf]."""
        self._check(context_id)
        self.lower[context_id][index, 1:] = np.maximum(
            self.lower[context_id][index, 1:], 0.0
        )

    def copy(self) -> "ConfidenceState":
        dup = ConfidenceState(list(self.lower), self.n_points, self.n_outputs, self.beta)
        for cid in self.lower:
            dup.lower[cid] = self.lower[cid].copy()
            dup.upper[cid] = self.upper[cid].copy()
        dup.crossings = self.crossings
        return dup
