"""Safe-set machinery against brute-force evaluation of the defining rules."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safetune.envs import synthetic_eval
from safetune.errors import ConfigurationError
from safetune.sets import (
    Domain,
    best_guess_index,
    compute_expanders,
    compute_maximizers,
    connected_components,
    reachable_set,
    update_safe_set,
)


# ---------------------------------------------------------------- oracles

def brute_safe_set(points, prev_safe, lower, L):
    """Literal double loop over candidates and anchors, per constraint."""
    n, c = lower.shape
    out = np.zeros(n, dtype=bool)
    anchors = np.flatnonzero(prev_safe)
    for t in range(n):
        ok = True
        for i in range(c):
            covered = False
            for a in anchors:
                if lower[a, i] - L * np.linalg.norm(points[t] - points[a]) >= 0.0:
                    covered = True
                    break
            if not covered:
                ok = False
                break
        out[t] = ok
    return out


def brute_expanders(points, safe, upper, L):
    n, c = upper.shape
    out = np.zeros(n, dtype=bool)
    unsafe = np.flatnonzero(~safe)
    for t in np.flatnonzero(safe):
        count = 0
        for u_idx in unsafe:
            d = np.linalg.norm(points[t] - points[u_idx])
            if any(upper[t, i] - L * d >= 0.0 for i in range(c)):
                count += 1
        out[t] = count > 0
    return out


def brute_maximizers(safe, lower0, upper0):
    out = np.zeros(len(safe), dtype=bool)
    if not safe.any():
        return out
    best = max(lower0[t] for t in np.flatnonzero(safe))
    for t in np.flatnonzero(safe):
        out[t] = upper0[t] >= best
    return out


def brute_reachable(points, q, seed, eps, L):
    reach = seed.copy()
    for _ in range(len(points) + 1):
        new = reach.copy()
        for t in range(len(points)):
            if reach[t]:
                continue
            for a in np.flatnonzero(reach):
                if all(q[a, i] - eps - L * np.linalg.norm(points[t] - points[a]) >= 0.0
                       for i in range(q.shape[1])):
                    new[t] = True
                    break
        if np.array_equal(new, reach):
            break
        reach = new
    return reach


def random_instance(rng, n_max=60):
    n = int(rng.integers(8, n_max))
    d = int(rng.integers(1, 3))
    points = rng.uniform(-1, 1, size=(n, d))
    points = np.unique(points, axis=0)
    n = len(points)
    c = int(rng.integers(1, 4))
    lower = rng.normal(size=(n, c))
    width = rng.uniform(0.0, 1.0, size=(n, c))
    upper = lower + width
    prev = np.zeros(n, dtype=bool)
    prev[rng.integers(0, n, size=max(1, n // 6))] = True
    L = float(rng.uniform(0.3, 3.0))
    return Domain(points), prev, lower, upper, L


# ------------------------------------------------------------------ domain

class TestDomain:
    def test_from_grid_and_spacing(self):
        dom = Domain.from_grid([(0.0, 1.0), (0.0, 2.0)], [3, 5])
        assert len(dom) == 15 and dom.dim == 2
        assert dom.min_spacing() == pytest.approx(0.5)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            Domain(np.zeros((0, 1)))
        with pytest.raises(ConfigurationError):
            Domain(np.array([[0.0], [0.0]]))
        with pytest.raises(ConfigurationError):
            Domain(np.array([[np.inf]]))

    def test_nearest_index(self):
        dom = Domain.from_grid([(0.0, 1.0)], [11])
        assert dom.nearest_index([0.32]) == 3


# ---------------------------------------------------------------- safe set

class TestSafeSet:
    def test_one_dimensional_certification_ball(self):
        # frozen via the brute-force rule on the binary-float grid: the
        # upper endpoint 0.8 sits one ulp beyond distance 0.3 and drops out
        dom = Domain(np.linspace(0, 1, 11)[:, None])
        prev = np.zeros(11, dtype=bool)
        prev[5] = True
        lower = np.full((11, 1), -np.inf)
        lower[5, 0] = 0.3
        safe, anchors = update_safe_set(dom, prev, lower, 1.0)
        assert np.flatnonzero(safe).tolist() == [2, 3, 4, 5, 6, 7]
        assert np.array_equal(safe, brute_safe_set(dom.points, prev, lower, 1.0))
        assert np.all(anchors[safe] == 5)

    def test_zero_margin_certifies_only_itself(self):
        dom = Domain(np.linspace(0, 1, 11)[:, None])
        prev = np.zeros(11, dtype=bool)
        prev[5] = True
        lower = np.full((11, 1), -np.inf)
        lower[5, 0] = 0.0
        safe, _ = update_safe_set(dom, prev, lower, 1.0)
        assert np.flatnonzero(safe).tolist() == [5]

    def test_two_constraints_need_cover_for_each(self):
        # anchors with disjoint certification balls: candidate must be
        # covered for every constraint, possibly by different anchors
        pts = np.array([[0.0], [0.5], [1.0], [1.5], [2.0]])
        dom = Domain(pts)
        prev = np.zeros(5, dtype=bool)
        prev[[0, 4]] = True
        lower = np.full((5, 2), -np.inf)
        lower[0] = [0.6, 2.5]   # left anchor: wide cover on constraint 2
        lower[4] = [2.5, 0.6]   # right anchor: wide cover on constraint 1
        safe, anchors = update_safe_set(dom, prev, lower, 1.0)
        expected = brute_safe_set(pts, prev, lower, 1.0)
        assert np.array_equal(safe, expected)
        # the middle point is covered for i=0 by the right anchor and for
        # i=1 by the left anchor
        assert safe[2]
        assert anchors[2, 0] == 4 and anchors[2, 1] == 0

    def test_empty_previous_safe_set_rejected(self):
        dom = Domain(np.array([[0.0], [1.0]]))
        with pytest.raises(ConfigurationError):
            update_safe_set(dom, np.zeros(2, dtype=bool), np.zeros((2, 1)), 1.0)

    def test_certification_anchors_recheckable(self):
        rng = np.random.default_rng(7)
        dom, prev, lower, _, L = random_instance(rng)
        safe, anchors = update_safe_set(dom, prev, lower, L)
        for t in np.flatnonzero(safe):
            for i in range(lower.shape[1]):
                a = anchors[t, i]
                assert a >= 0
                margin = lower[a, i] - L * np.linalg.norm(dom.points[t] - dom.points[a])
                assert margin >= 0.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        dom, prev, lower, upper, L = random_instance(rng)
        safe, _ = update_safe_set(dom, prev, lower, L)
        assert np.array_equal(safe, brute_safe_set(dom.points, prev, lower, L))
        expanders = compute_expanders(dom, safe, upper, L)
        assert np.array_equal(expanders, brute_expanders(dom.points, safe, upper, L))
        if safe.any():
            maximizers = compute_maximizers(safe, lower[:, 0], upper[:, 0])
            assert np.array_equal(
                maximizers, brute_maximizers(safe, lower[:, 0], upper[:, 0])
            )
            assert maximizers.any()  # incumbent always qualifies

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_growth_is_monotone_under_nested_intervals(self, seed):
        rng = np.random.default_rng(seed)
        dom, prev, lower, _, L = random_instance(rng)
        # make the previous members self-certifying, as the runtime state does
        lower[prev] = np.maximum(lower[prev], 0.0)
        safe1, _ = update_safe_set(dom, prev, lower, L)
        tightened = lower + rng.uniform(0.0, 0.5, size=lower.shape)
        safe2, _ = update_safe_set(dom, safe1, tightened, L)
        assert np.all(safe1 <= safe2)


class TestExpanders:
    def test_everything_safe_means_no_expanders(self):
        dom = Domain(np.linspace(0, 1, 5)[:, None])
        safe = np.ones(5, dtype=bool)
        upper = np.full((5, 1), 10.0)
        assert not compute_expanders(dom, safe, upper, 1.0).any()

    def test_frontier_point_with_enough_optimism_is_expander(self):
        dom = Domain(np.linspace(0, 1, 5)[:, None])  # spacing 0.25
        safe = np.array([True, True, False, False, False])
        upper = np.full((5, 1), -np.inf)
        upper[0, 0] = 0.1   # too weak to reach an unsafe point
        upper[1, 0] = 0.3   # exceeds L * 0.25
        result = compute_expanders(dom, safe, upper, 1.0)
        assert result.tolist() == [False, True, False, False, False]
        assert np.array_equal(result, brute_expanders(dom.points, safe, upper, 1.0))

    def test_interior_point_beyond_reach_is_excluded(self):
        dom = Domain(np.linspace(0, 1, 5)[:, None])
        safe = np.array([True, True, False, False, False])
        upper = np.full((5, 1), -np.inf)
        upper[0, 0] = 0.3   # nearest unsafe is 0.5 away: 0.3 < 0.5 * L
        result = compute_expanders(dom, safe, upper, 1.0)
        assert not result[0]


class TestMaximizers:
    def test_single_safe_point(self):
        safe = np.array([False, True, False])
        m = compute_maximizers(safe, np.array([-1.0, 0.2, 0.0]), np.array([0.0, 0.4, 1.0]))
        assert m.tolist() == [False, True, False]

    def test_dominated_interval_excluded(self):
        safe = np.array([True, True])
        m = compute_maximizers(safe, np.array([0.0, 2.0]), np.array([1.0, 3.0]))
        assert m.tolist() == [False, True]

    def test_identical_intervals_keep_everything(self):
        safe = np.ones(4, dtype=bool)
        m = compute_maximizers(safe, np.zeros(4), np.ones(4))
        assert m.all()


class TestBestGuess:
    def test_single_safe_point(self):
        assert best_guess_index(np.array([False, True]), np.array([0.0, -5.0])) == 1

    def test_argmax_of_lower_bound(self):
        safe = np.ones(3, dtype=bool)
        assert best_guess_index(safe, np.array([0.1, 0.5, 0.3])) == 1

    def test_tie_breaks_to_lowest_index(self):
        safe = np.ones(3, dtype=bool)
        assert best_guess_index(safe, np.array([0.5, 0.5, 0.5])) == 0

    def test_empty_safe_set_rejected(self):
        with pytest.raises(ConfigurationError):
            best_guess_index(np.zeros(2, dtype=bool), np.zeros(2))


class TestReachableSet:
    def test_large_slack_kills_expansion(self):
        dom = Domain(np.linspace(0, 1, 9)[:, None])
        q = np.full((9, 1), 0.4)
        seed = np.zeros(9, dtype=bool)
        seed[4] = True
        reach = reachable_set(dom, q, seed, epsilon=0.5, lipschitz=1.0)
        assert np.array_equal(reach, seed)

    def test_zero_lipschitz_reaches_everything(self):
        dom = Domain(np.linspace(0, 1, 9)[:, None])
        q = np.full((9, 1), 0.2)
        seed = np.zeros(9, dtype=bool)
        seed[0] = True
        reach = reachable_set(dom, q, seed, epsilon=0.0, lipschitz=0.0)
        # with zero Lipschitz constant the whole superlevel component (here
        # the full grid) is reachable, matching graph reachability
        assert reach.all()

    def test_two_islands_stay_disconnected(self):
        dom = Domain.from_grid([(0.0, 3.0)], [120])
        _, q = synthetic_eval("two_island_1d", dom.points[:, 0])
        seed = np.zeros(len(dom), dtype=bool)
        seed[dom.nearest_index([0.55])] = True
        for eps in (0.0, 0.05, 0.2):
            reach = reachable_set(dom, q, seed, eps, lipschitz=6.5)
            island_b = dom.points[:, 0] > 1.8
            assert not (reach & island_b).any()
            assert np.array_equal(reach, brute_reachable(dom.points, q, seed, eps, 6.5))

    def test_result_is_a_fixed_point(self):
        rng = np.random.default_rng(3)
        dom, prev, lower, _, L = random_instance(rng)
        q = np.abs(lower)  # arbitrary nonnegative ground truth
        reach = reachable_set(dom, q, prev, epsilon=0.1, lipschitz=L)
        again = reachable_set(dom, q, reach, epsilon=0.1, lipschitz=L)
        assert np.array_equal(reach, again)


class TestComponents:
    def test_two_separated_blocks(self):
        dom = Domain(np.array([[0.0], [0.1], [0.2], [1.0], [1.1]]))
        mask = np.ones(5, dtype=bool)
        labels = connected_components(dom, mask)
        assert labels[0] == labels[1] == labels[2]
        assert labels[3] == labels[4]
        assert labels[0] != labels[3]

    def test_outside_mask_is_unlabeled(self):
        dom = Domain(np.array([[0.0], [0.1], [0.2]]))
        mask = np.array([True, False, True])
        labels = connected_components(dom, mask, radius=0.15)
        assert labels[1] == -1
        assert labels[0] != labels[2]
