import numpy as np
import pytest

from hkrls.baselines import (COEFFICIENTS, HKRLS_SIGMAS, BaselineConfig, Method, _RegularizedInverse,
                             coefficient_config, fit_baseline, fit_fixed_budget_krls,
                             fit_full_krls, fit_nonstill_krls, fit_norma, fit_qklms,
                             fit_sliding_window_krls, fit_sparse_krls, presentation_order)
from hkrls.kernels import gaussian, gram, space_time
from hkrls.solver import krls_fit, krls_predict, krls_predict_many


def stream(n=100, seed=0, dim=2, hi=10.0):
    rng = np.random.default_rng(seed)
    P = rng.uniform(0, hi, size=(n, dim))
    return P, np.sin(P[:, 0]) * np.cos(P[:, -1] / 2)


def predict(model, Q):
    return krls_predict_many(model, Q)[:, 0]


class TestConfig:
    def test_required_fields(self):
        with pytest.raises(ValueError, match="window"):
            BaselineConfig(Method.SLIDING_WINDOW_KRLS)
        with pytest.raises(ValueError):
            BaselineConfig(Method.QKLMS, mu=0.0)
        with pytest.raises(ValueError):
            BaselineConfig(Method.NORMA, window=5, eta=1.0, lam=1.0)
        with pytest.raises(ValueError):
            BaselineConfig(Method.SPARSE_KRLS, ald_delta=-1)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="bogus"):
            BaselineConfig.from_dict({"method": "qklms", "mu": 0.1, "bogus": 1})

    def test_to_dict_only_used_fields(self):
        d = BaselineConfig(Method.SPARSE_KRLS, sigma=2.0, ald_delta=0.1).to_dict()
        assert d == {"method": "sparse_krls", "sigma": 2.0, "ald_delta": 0.1}

    def test_from_string_method(self):
        assert BaselineConfig("fb_krls", window=3).method is Method.FIXED_BUDGET_KRLS


class TestCoefficientTable:
    def test_synthetic_2d_column(self):
        assert HKRLS_SIGMAS["synth2d"] == (1.0, 0.3)
        c = coefficient_config("synth2d", "sparse_krls")
        assert (c.sigma, c.ald_delta) == (1.0, 0.01)
        c = coefficient_config("synth2d", "fb_krls")
        assert (c.sigma, c.window, c.lam, c.mu) == (1.0, 800, 0.1, 0.0)
        c = coefficient_config("synth2d", "norma")
        assert (c.window, c.eta, c.lam) == (13920, 0.02, 1e-4)
        c = coefficient_config("synth2d", "sw_krls")
        assert (c.window, c.reg_c) == (1000, 0.01)
        c = coefficient_config("synth2d", "qklms")
        assert (c.sigma, c.mu, c.epsilon_q) == (1.0, 0.15, 1e-6)

    def test_other_columns(self):
        assert HKRLS_SIGMAS["synth3d"] == (1.0, 0.3, 1.0)
        assert coefficient_config("synth3d", "sparse_krls").ald_delta == 0.99
        assert coefficient_config("intel", "norma").window == 4160
        assert coefficient_config("polyculture", "sw_krls").window == 1400
        assert coefficient_config("polyculture", "qklms").mu == 0.033

    def test_all_entries_valid(self):
        for col in COEFFICIENTS.values():
            for method, params in col.items():
                BaselineConfig(method, **params)

    def test_missing(self):
        with pytest.raises(KeyError):
            coefficient_config("synth3d", "nonstill_krls")


def test_presentation_order():
    assert np.array_equal(presentation_order(5, None), np.arange(5))
    a, b = presentation_order(50, 3), presentation_order(50, 3)
    assert np.array_equal(a, b)
    assert sorted(a) == list(range(50))
    assert not np.array_equal(a, np.arange(50))


class TestBudgetsDisabled:
    """With no budget or threshold the online fits equal the batch solve."""

    Q = np.random.default_rng(42).uniform(0, 10, size=(60, 2))

    def test_sparse(self):
        P, y = stream()
        m = fit_sparse_krls(P, y, BaselineConfig(Method.SPARSE_KRLS, ald_delta=0.0))
        ref = krls_fit(P, y, gaussian(1.0), jitter=0.0)
        assert m.size == 100
        np.testing.assert_allclose(predict(m, self.Q), predict(ref, self.Q), atol=1e-6)

    def test_sliding_window(self):
        P, y = stream()
        cfg = BaselineConfig(Method.SLIDING_WINDOW_KRLS, window=100, reg_c=0.0)
        ref = krls_fit(P, y, gaussian(1.0), jitter=0.0)
        np.testing.assert_allclose(predict(fit_sliding_window_krls(P, y, cfg), self.Q),
                                   predict(ref, self.Q), atol=1e-6)

    def test_sliding_window_with_ridge(self):
        P, y = stream(60, seed=1)
        cfg = BaselineConfig(Method.SLIDING_WINDOW_KRLS, window=200, reg_c=0.01)
        ref = krls_fit(P, y, gaussian(1.0), jitter=0.01)
        np.testing.assert_allclose(predict(fit_sliding_window_krls(P, y, cfg), self.Q),
                                   predict(ref, self.Q), atol=1e-8)

    def test_fixed_budget(self):
        P, y = stream()
        cfg = BaselineConfig(Method.FIXED_BUDGET_KRLS, window=100, lam=0.0, mu=0.0)
        ref = krls_fit(P, y, gaussian(1.0), jitter=0.0)
        np.testing.assert_allclose(predict(fit_fixed_budget_krls(P, y, cfg), self.Q),
                                   predict(ref, self.Q), atol=1e-6)

    def test_fixed_budget_with_ridge(self):
        P, y = stream(60, seed=2)
        cfg = BaselineConfig(Method.FIXED_BUDGET_KRLS, window=100, lam=0.1, mu=0.0)
        ref = krls_fit(P, y, gaussian(1.0), jitter=0.1)
        np.testing.assert_allclose(predict(fit_fixed_budget_krls(P, y, cfg), self.Q),
                                   predict(ref, self.Q), atol=1e-8)


class TestSparse:
    def test_large_delta(self):
        P, y = stream(50)
        m = fit_sparse_krls(P, y, BaselineConfig(Method.SPARSE_KRLS, ald_delta=5.0))
        assert m.size == 1


class TestSlidingWindow:
    def test_window_of_one(self):
        P, y = stream(20)
        m = fit_sliding_window_krls(P, y, BaselineConfig(Method.SLIDING_WINDOW_KRLS, window=1))
        assert m.size == 1
        np.testing.assert_array_equal(m.dictionary[0], P[-1])
        assert krls_predict(m, P[-1])[0] == pytest.approx(y[-1])

    def test_bound(self):
        P, y = stream(40)
        for D in (1, 5, 17):
            cfg = BaselineConfig(Method.SLIDING_WINDOW_KRLS, window=D, reg_c=0.01)
            assert fit_sliding_window_krls(P, y, cfg).size == D
            assert np.array_equal(fit_sliding_window_krls(P, y, cfg).dictionary, P[-D:])


class TestFixedBudget:
    def test_bound_every_step(self):
        P, y = stream(40, seed=3)
        for n in range(1, 41, 7):
            cfg = BaselineConfig(Method.FIXED_BUDGET_KRLS, window=6, lam=0.01, mu=0.03)
            assert fit_fixed_budget_krls(P[:n], y[:n], cfg).size <= 6

    def test_duplicate_omission(self):
        P, y = stream(10, seed=4)
        Pd = np.vstack([P, P[3]])
        yd = np.append(y, y[3])
        cfg = BaselineConfig(Method.FIXED_BUDGET_KRLS, window=20, lam=0.01)
        a, b = fit_fixed_budget_krls(P, y, cfg), fit_fixed_budget_krls(Pd, yd, cfg)
        assert np.abs(predict(a, P) - predict(b, P)).max() <= 1e-10

    def test_evicts_least_useful_point(self):
        # the redundant near copy of sample 0 scores lowest on leave-one-out
        P = np.array([[0.0], [3.0], [6.0], [0.001]])
        y = np.array([1.0, -1.0, 0.5, 1.0])
        cfg = BaselineConfig(Method.FIXED_BUDGET_KRLS, window=3, lam=0.01)
        m = fit_fixed_budget_krls(P, y, cfg)
        assert m.size == 3
        kept = set(m.dictionary[:, 0])
        assert {3.0, 6.0} <= kept
        assert len(kept & {0.0, 0.001}) == 1

    def test_downdate_matches_fresh_inverse(self):
        P, y = stream(8, seed=5)
        inv = _RegularizedInverse(gaussian(1.0), 0.1, 2, 9)
        for p, t in zip(P, y):
            inv.grow(p, t)
        inv.remove(2)
        K = gram(gaussian(1.0), np.delete(P, 2, axis=0)) + 0.1 * np.eye(7)
        np.testing.assert_allclose(inv.inv, np.linalg.inv(K), atol=1e-10)


class TestNorma:
    def test_single_sample(self):
        m = fit_norma([[1.0, 2.0]], [3.0], BaselineConfig(Method.NORMA, window=5, eta=1.0, lam=0.0))
        assert m.weights[0, 0] == 3.0

    def test_shrinkage_closed_form(self):
        # far-apart points: errors do not interact, so alpha_0 = eta y0 (1 - eta lam)^age
        P = np.arange(6)[:, None] * 100.0
        y = np.ones(6)
        eta, lam = 0.5, 0.2
        m = fit_norma(P, y, BaselineConfig(Method.NORMA, window=10, eta=eta, lam=lam))
        assert m.weights[0, 0] == pytest.approx(eta * (1 - eta * lam) ** 5, rel=1e-12)

    def test_truncation(self):
        P, y = stream(30)
        m = fit_norma(P, y, BaselineConfig(Method.NORMA, window=7, eta=0.1, lam=0.01))
        assert m.size == 7
        np.testing.assert_array_equal(m.dictionary, P[-7:])


class TestQklms:
    def test_no_merging(self):
        P, y = stream(30)
        m = fit_qklms(P, y, BaselineConfig(Method.QKLMS, mu=0.5, epsilon_q=0.0))
        assert m.size == 30

    def test_merge_all(self):
        P, y = stream(30)
        m = fit_qklms(P, y, BaselineConfig(Method.QKLMS, mu=0.5, epsilon_q=1e6))
        assert m.size == 1

    def test_tie_goes_to_lowest_index(self):
        P = np.array([[0.0], [2.0], [1.0]])
        y = np.array([1.0, 2.0, 5.0])
        cfg = BaselineConfig(Method.QKLMS, sigma=0.5, mu=1.0, epsilon_q=1.5)
        # sample 1 is 2 away from center 0, so it is a new center
        m = fit_qklms(P, y, cfg)
        assert m.size == 2
        # sample 2 is equidistant; it merges into center 0
        k = np.exp(-1 / (2 * 0.25))
        e2 = 5.0 - (1.0 * k + (2.0 - 1.0 * np.exp(-4 / 0.5)) * k)
        assert m.weights[0, 0] == pytest.approx(1.0 + e2)
        assert m.weights[1, 0] == pytest.approx(2.0 - np.exp(-4 / 0.5))


class TestNonstill:
    def test_gram_diagonal_and_symmetry(self):
        P, y = stream(30, hi=3.0)
        m = fit_nonstill_krls(P, y, BaselineConfig(Method.NONSTILL_KRLS, jitter=0.0))
        K = gram(space_time(1.0, 1.0), P)
        np.testing.assert_allclose(np.diag(K), 1.0)
        assert np.array_equal(K, K.T)
        np.testing.assert_allclose(predict(m, P), y, atol=1e-6)

    def test_needs_pairs(self):
        P, y = stream(10, dim=3)
        with pytest.raises(ValueError):
            fit_nonstill_krls(P, y, BaselineConfig(Method.NONSTILL_KRLS))


class TestDispatcher:
    def test_every_method_deterministic(self):
        P, y = stream(80, seed=6)
        for method, params in COEFFICIENTS["synth2d"].items():
            cfg = BaselineConfig(method, **{**params, **({"window": 30} if "window" in params else {})})
            a, b = fit_baseline(P, y, cfg), fit_baseline(P, y, cfg)
            assert np.array_equal(a.weights, b.weights), method
            if cfg.window is not None:
                assert a.size <= cfg.window

    def test_wrong_config(self):
        P, y = stream(5)
        with pytest.raises(ValueError):
            fit_full_krls(P, y, BaselineConfig(Method.SPARSE_KRLS))

    def test_bad_samples(self):
        with pytest.raises(ValueError):
            fit_baseline(np.zeros((3, 2)), np.zeros(2), BaselineConfig(Method.FULL_KRLS))
        with pytest.raises(ValueError):
            fit_baseline(np.zeros((1, 2)), [np.nan], BaselineConfig(Method.FULL_KRLS))
