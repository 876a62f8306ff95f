"""GP surrogate: kernels, exact posteriors, intersected confidence bands."""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safetune.errors import (
    CandidateLookupError,
    ConfigurationError,
    MeasurementError,
)
from safetune.gp import CompositeKernel, ConfidenceState, Kernel, Surrogate, kernel_eval


def dense_posterior(kernel, X, Y, sigma, q, i):
    """Independent direct-solve oracle: no factorization reuse."""
    if len(X) == 0:
        return 0.0, float(kernel.gram(q[None], q[None])[0, 0])
    K = kernel.gram(X, X) + sigma**2 * np.eye(len(X))
    k_q = kernel.gram(X, q[None])[:, 0]
    alpha = np.linalg.solve(K, Y[:, i])
    mean = float(k_q @ alpha)
    var = float(kernel.gram(q[None], q[None])[0, 0] - k_q @ np.linalg.solve(K, k_q))
    return mean, var


class TestKernels:
    def test_matern_zero_distance_is_output_scale_squared(self):
        k = Kernel("matern_nu_1_5", (1.0, 1.0))
        assert kernel_eval(k, [0.3, -0.2], [0.3, -0.2]) == pytest.approx(1.0)

    def test_matern_unit_distance_closed_form(self):
        # high-precision closed form evaluated independently
        k = Kernel("matern_nu_1_5", (1.0,))
        expected = (1.0 + math.sqrt(3.0)) * math.exp(-math.sqrt(3.0))
        value = kernel_eval(k, [0.0], [1.0])
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(0.483358, abs=5e-7)

    def test_sum_composite_adds_block_values(self):
        # linear blocks chosen to produce exactly 0.3 and 0.2
        left = Kernel("linear", (1.0,))
        right = Kernel("linear", (1.0,))
        k = CompositeKernel("sum", left, right)
        assert kernel_eval(k, [0.3, 0.2], [1.0, 1.0]) == pytest.approx(0.5)

    def test_product_composite_multiplies_block_values(self):
        k = CompositeKernel("product", Kernel("linear", (1.0,)), Kernel("linear", (1.0,)))
        assert kernel_eval(k, [0.3, 0.2], [1.0, 1.0]) == pytest.approx(0.06)

    def test_rbf_matches_closed_form(self):
        k = Kernel("rbf", (2.0,), output_scale=1.5)
        d = (0.0 - 1.0) / 2.0
        assert kernel_eval(k, [0.0], [1.0]) == pytest.approx(1.5**2 * math.exp(-0.5 * d**2))

    def test_dimension_mismatch_rejected(self):
        k = Kernel("matern_nu_1_5", (1.0, 1.0))
        with pytest.raises(ConfigurationError):
            kernel_eval(k, [0.0], [1.0])

    def test_bad_hyperparameters_rejected(self):
        with pytest.raises(ConfigurationError):
            Kernel("matern_nu_1_5", (0.0,))
        with pytest.raises(ConfigurationError):
            Kernel("matern_nu_1_5", (1.0,), output_scale=-1.0)
        with pytest.raises(ConfigurationError):
            Kernel("cubic", (1.0,))
        with pytest.raises(ConfigurationError):
            CompositeKernel("mean", Kernel("rbf", (1.0,)), Kernel("rbf", (1.0,)))

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["matern_nu_1_5", "rbf", "linear"]))
    @settings(max_examples=40, deadline=None)
    def test_symmetry_and_psd(self, seed, family):
        rng = np.random.default_rng(seed)
        n, d = 20, 3
        X = rng.normal(size=(n, d))
        k = Kernel(family, tuple(rng.uniform(0.3, 2.0, d)), output_scale=rng.uniform(0.5, 2.0))
        G = k.gram(X, X)
        assert np.allclose(G, G.T, atol=1e-12)
        assert np.linalg.eigvalsh(G).min() >= -1e-9

    def test_composite_depends_only_on_its_block(self):
        left = Kernel("matern_nu_1_5", (0.7, 0.9))
        right = Kernel("rbf", (1.3,))
        k = CompositeKernel("product", left, right)
        a = np.array([0.1, 0.2, 0.5])
        b = np.array([-0.3, 0.4, 0.8])
        b_perturbed = b.copy()
        b_perturbed[2] += 1.7  # context coordinate only
        left_before = left.gram(a[None, :2], b[None, :2])[0, 0]
        left_after = left.gram(a[None, :2], b_perturbed[None, :2])[0, 0]
        assert left_before == left_after
        # and the composite change is entirely the right factor's
        ratio = kernel_eval(k, a, b_perturbed) / kernel_eval(k, a, b)
        right_ratio = (
            right.gram(a[None, 2:], b_perturbed[None, 2:])[0, 0]
            / right.gram(a[None, 2:], b[None, 2:])[0, 0]
        )
        assert ratio == pytest.approx(right_ratio)


class TestPosterior:
    def test_empty_dataset_returns_prior(self):
        k = Kernel("matern_nu_1_5", (1.0,), output_scale=1.3)
        m = Surrogate(k, noise_sigma=0.1, n_outputs=2)
        mean, var = m.posterior(np.array([[0.4]]), 0)
        assert mean[0] == 0.0
        assert var[0] == pytest.approx(1.3**2)

    def test_single_point_closed_form(self):
        k = Kernel("rbf", (1.0,))
        m = Surrogate(k, noise_sigma=0.1, n_outputs=1).add([0.0], [1.0])
        mean, var = m.posterior(np.array([[0.0]]), 0)
        assert mean[0] == pytest.approx(1.0 / 1.01, abs=1e-12)
        assert var[0] == pytest.approx(1.0 - 1.0 / 1.01, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_matches_dense_solve_oracle(self, seed):
        rng = np.random.default_rng(seed)
        family = rng.choice(["matern_nu_1_5", "rbf", "linear"])
        d = int(rng.integers(1, 4))
        k = Kernel(str(family), tuple(rng.uniform(0.3, 2.0, d)))
        m = Surrogate(k, noise_sigma=float(rng.uniform(0.05, 0.5)), n_outputs=2)
        for _ in range(5):
            m = m.add(rng.normal(size=d), rng.normal(size=2))
        q = rng.normal(size=d)
        for i in range(2):
            mean, var = m.posterior(q[None], i)
            mean_o, var_o = dense_posterior(k, m.X, m.Y, m.noise_sigma, q, i)
            assert mean[0] == pytest.approx(mean_o, rel=1e-8, abs=1e-10)
            assert max(var_o, 0.0) == pytest.approx(var[0], rel=1e-8, abs=1e-10)
            assert var_o >= -1e-8  # raw oracle variance never dips below the floor
            assert var[0] >= 0.0

    def test_interpolates_in_small_noise_limit(self):
        k = Kernel("rbf", (1.0,))
        m = Surrogate(k, noise_sigma=1e-6, n_outputs=1).add([0.7], [2.5])
        mean, _ = m.posterior(np.array([[0.7]]), 0)
        assert mean[0] == pytest.approx(2.5, abs=1e-4)

    def test_duplicate_inputs_stay_factorizable(self):
        k = Kernel("matern_nu_1_5", (1.0,))
        m = Surrogate(k, noise_sigma=0.1, n_outputs=1)
        m = m.add([0.5], [1.0]).add([0.5], [1.2])
        mean, var = m.posterior(np.array([[0.5]]), 0)
        assert np.isfinite(mean[0]) and var[0] >= 0.0

    def test_add_extends_dataset_by_one(self):
        k = Kernel("rbf", (1.0,))
        m = Surrogate(k, noise_sigma=0.1, n_outputs=1)
        m2 = m.add([0.0], [1.0])
        assert len(m) == 0 and len(m2) == 1

    def test_add_rejects_bad_observations(self):
        k = Kernel("rbf", (1.0,))
        m = Surrogate(k, noise_sigma=0.1, n_outputs=2)
        with pytest.raises(MeasurementError):
            m.add([0.0], [1.0, np.nan])
        with pytest.raises(MeasurementError):
            m.add([0.0], [1.0])  # wrong arity

    def test_out_of_range_output_index(self):
        m = Surrogate(Kernel("rbf", (1.0,)), 0.1, 1)
        with pytest.raises(CandidateLookupError):
            m.posterior(np.array([[0.0]]), 3)

    def test_per_output_kernels(self):
        ks = [Kernel("rbf", (1.0,)), Kernel("matern_nu_1_5", (0.5,))]
        m = Surrogate(ks, noise_sigma=0.1, n_outputs=2).add([0.2], [1.0, -1.0])
        q = np.array([[0.6]])
        for i, k in enumerate(ks):
            mean, var = m.posterior(q, i)
            mean_o, var_o = dense_posterior(k, m.X, m.Y, 0.1, q[0], i)
            assert mean[0] == pytest.approx(mean_o, rel=1e-10)
            assert var[0] == pytest.approx(max(var_o, 0.0), rel=1e-10)

    def test_posterior_is_threadsafe_on_snapshot(self):
        rng = np.random.default_rng(0)
        k = Kernel("rbf", (1.0, 1.0))
        m = Surrogate(k, 0.1, 1)
        for _ in range(10):
            m = m.add(rng.normal(size=2), rng.normal(size=1))
        Q = rng.normal(size=(30, 2))
        expected = m.posterior(Q, 0)
        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda _: m.posterior(Q, 0), range(16)))
        for mean, var in results:
            assert np.array_equal(mean, expected[0])
            assert np.array_equal(var, expected[1])


class TestConfidenceState:
    def _fresh(self, beta=2.0, seeds=None):
        return ConfidenceState(["z"], n_points=3, n_outputs=2, beta=beta,
                               safe_seeds=seeds)

    def test_first_band_replaces_infinite_prior(self):
        cs = self._fresh()
        model = Surrogate(Kernel("rbf", (1.0,)), noise_sigma=1e6, n_outputs=2)
        # empty model: mean 0, sd = 1 -> band = [mu - 2, mu + 2]
        cs.update(model, np.array([[0.0], [1.0], [2.0]]), [], "z")
        lo, hi, w = cs.bounds("z", 0, 0)
        assert lo == pytest.approx(-2.0) and hi == pytest.approx(2.0)
        assert w == pytest.approx(4.0)

    def test_intersection_with_superset_band_is_noop(self):
        cs = self._fresh()
        cs.lower["z"][:, :] = -1.0
        cs.upper["z"][:, :] = 1.0
        model = Surrogate(Kernel("rbf", (1.0,), output_scale=1.5), 1e6, 2)
        cs.update(model, np.array([[0.0], [1.0], [2.0]]), [], "z")  # band [-3, 3]
        assert np.all(cs.lower["z"] == -1.0)
        assert np.all(cs.upper["z"] == 1.0)

    def test_safe_seed_floor_clips_constraint_band(self):
        cs = ConfidenceState(["z"], 3, 2, beta=0.6, safe_seeds={"z": [1]})
        # constraint interval of the seed starts at [0, inf]
        assert cs.bounds("z", 1, 1)[0] == 0.0
        model = Surrogate(Kernel("rbf", (1.0,)), 1e6, 2)
        pts = np.array([[0.0], [1.0], [2.0]])
        cs.lower["z"][1, 1] = 0.0  # explicit for clarity
        # craft a band of [-0.5, 0.7] around mean 0.1 with beta*sd = 0.6
        cs.update(
            Surrogate(Kernel("rbf", (1.0,)), 1e6, 2), pts, [], "z"
        )
        # empty model gives mean 0, sd 1, band [-0.6, 0.6]; floor holds at 0
        lo, hi, _ = cs.bounds("z", 1, 1)
        assert lo == 0.0 and hi == pytest.approx(0.6)

    def test_seed_floor_intersected_with_shifted_band(self):
        # direct check of [0, inf] cut with [-0.5, 0.7]
        cs = ConfidenceState(["z"], 1, 2, beta=1.0, safe_seeds={"z": [0]})
        lo = cs.lower["z"]
        hi = cs.upper["z"]
        lo[0, 1] = max(lo[0, 1], -0.5)
        hi[0, 1] = min(hi[0, 1], 0.7)
        assert (lo[0, 1], hi[0, 1]) == (0.0, 0.7)

    def test_bounds_width_and_untouched_sentinel(self):
        cs = self._fresh()
        cs.lower["z"][0, 0] = 0.2
        cs.upper["z"][0, 0] = 0.9
        lo, hi, w = cs.bounds("z", 0, 0)
        assert w == pytest.approx(0.7)
        _, _, w_untouched = cs.bounds("z", 2, 1)
        assert w_untouched == np.inf

    def test_lookup_errors(self):
        cs = self._fresh()
        with pytest.raises(CandidateLookupError):
            cs.bounds("missing", 0, 0)
        with pytest.raises(CandidateLookupError):
            cs.bounds("z", 5, 0)

    def test_beta_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            ConfidenceState(["z"], 2, 1, beta=0.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_widths_never_increase_across_updates(self, seed):
        rng = np.random.default_rng(seed)
        pts = np.linspace(0.0, 1.0, 8)[:, None]
        k = Kernel("matern_nu_1_5", (0.5,))
        model = Surrogate(k, 0.1, 2)
        cs = ConfidenceState(["z"], 8, 2, beta=2.0, safe_seeds={"z": [0]})
        prev = cs.widths("z").copy()
        for _ in range(6):
            model = model.add(rng.uniform(0, 1, 1), rng.normal(size=2))
            cs.update(model, pts, [], "z")
            now = cs.widths("z")
            assert np.all(now <= prev + 1e-12)
            prev = now.copy()

    def test_crossing_collapses_to_midpoint_and_counts(self):
        cs = self._fresh(beta=0.5)
        cs.lower["z"][:, :] = 2.0
        cs.upper["z"][:, :] = 3.0
        model = Surrogate(Kernel("rbf", (1.0,)), 1e6, 2)  # band [-0.5, 0.5]
        cs.update(model, np.array([[0.0], [1.0], [2.0]]), [], "z")
        assert cs.crossings == 6
        lo, hi, w = cs.bounds("z", 0, 0)
        assert lo == hi == pytest.approx(1.25)  # midpoint of [2.0, 0.5]
        assert w == 0.0
