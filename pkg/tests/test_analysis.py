import math

import numpy as np
import pytest
from scipy import stats

from quadcompound import analysis
from quadcompound.analysis import (
    GRAD_CASES,
    Mixture1D,
    SweepConfig,
    count_local_maxima,
    kl_divergence,
    reduce_vdm_to_1d,
    reparam_grad_estimate,
    run_gradcheck,
    run_sweep,
    summarize,
    sweep_row,
    sweep_vdm,
    tv_distance,
)
from quadcompound.distributions import MixtureWeightLaw, UnsupportedError, VectorDiffeomixture, mixture_weight_grid
from quadcompound.numerics import sigmoid
from quadcompound.rng import stream
from quadcompound.schemes import QuadratureGrid


def normal(mean):
    return Mixture1D(np.array([float(mean)]), np.array([1.0]))


class TestDivergences:
    def test_kl_closed_forms(self):
        assert kl_divergence(normal(0), normal(1)) == pytest.approx(0.5, abs=1e-6)
        wide = lambda x: stats.norm.pdf(x, scale=2.0)
        assert kl_divergence(stats.norm.pdf, wide, support=(-30, 30)) == pytest.approx(0.31815, abs=1e-5)

    def test_self_divergence_zero(self):
        p = Mixture1D(np.array([-1.0, 0.5, 2.0]), np.array([0.2, 0.5, 0.3]))
        assert kl_divergence(p, p) == 0.0
        assert tv_distance(p, p) == 0.0

    def test_tv_closed_form(self):
        assert tv_distance(normal(0), normal(3)) == pytest.approx(2 * stats.norm.cdf(1.5) - 1, abs=1e-6)

    def test_tv_symmetric(self):
        a = Mixture1D(np.array([-1.0, 2.0]), np.array([0.3, 0.7]))
        b = Mixture1D(np.array([0.0, 1.0, 3.0]), np.array([0.2, 0.2, 0.6]))
        assert tv_distance(a, b) == tv_distance(b, a)
        assert 0 <= tv_distance(a, b) <= 1

    def test_kl_infinite_when_support_missing(self):
        half = lambda x: np.where(np.asarray(x) > 0, 2 * stats.norm.pdf(x), 0.0)
        assert kl_divergence(stats.norm.pdf, half, support=(-10, 10)) == math.inf
        # the other direction is finite: log 2
        assert kl_divergence(half, stats.norm.pdf, support=(-10, 10)) == pytest.approx(math.log(2), abs=1e-5)

    def test_kl_against_scipy_quadrature(self):
        from scipy import integrate

        a = Mixture1D(np.array([-1.0, 2.0]), np.array([0.4, 0.6]))
        b = Mixture1D(np.array([0.0, 1.5]), np.array([0.5, 0.5]))
        want = integrate.quad(lambda x: a(x) * (a.log_density(x) - b.log_density(x)), -15, 15, epsabs=1e-12, limit=200)[0]
        assert kl_divergence(a, b) == pytest.approx(want, abs=1e-6)


class TestReduction:
    def test_single_component(self):
        grid = QuadratureGrid(np.array([[1.0, 0.0]]), np.array([1.0]))
        v = VectorDiffeomixture(grid, np.stack([np.full(10, 2.0), np.full(10, -2.0)]))
        r = reduce_vdm_to_1d(v)
        np.testing.assert_allclose(r.means, [2.0 * math.sqrt(10)])

    def test_symmetric_grid(self):
        grid = QuadratureGrid(np.array([0.2, 0.8]), np.array([0.5, 0.5]))
        v = VectorDiffeomixture(grid, np.stack([np.full(4, 1.0), np.full(4, -1.0)]))
        r = reduce_vdm_to_1d(v)
        np.testing.assert_allclose(np.sort(r.means), -np.sort(r.means)[::-1])
        xs = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(r(xs), r(-xs))

    def test_rejects_non_identity_scale(self):
        grid = QuadratureGrid(np.array([0.5]), np.array([1.0]))
        v = VectorDiffeomixture(grid, [[0.0, 0.0], [1.0, 1.0]], [np.eye(2), 2 * np.eye(2)])
        with pytest.raises(UnsupportedError):
            reduce_vdm_to_1d(v)

    def test_rejects_non_colinear(self):
        law = MixtureWeightLaw([0.0, 0.0], 1.0, mode="softmax")
        v = VectorDiffeomixture(mixture_weight_grid(law, 2, "cubature"), [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(UnsupportedError):
            reduce_vdm_to_1d(v)

    def test_matches_full_density_ratio(self):
        # the 1D log ratio equals the 10-d log ratio at any point
        q = sweep_vdm(1.0, 2.0, 2.0, 10, "quantile-midpoint", 10, "logit-shift")
        p = sweep_vdm(1.0, 2.0, 2.0, 150, "quantile-midpoint", 10, "logit-shift")
        rq, rp = reduce_vdm_to_1d(q), reduce_vdm_to_1d(p)
        x = stream(0, "pts").normal(0, 3, (50, 10))
        e = np.full(10, 1 / math.sqrt(10))
        np.testing.assert_allclose(q.log_density(x) - p.log_density(x), rq.log_density(x @ e) - rp.log_density(x @ e), atol=1e-9)

    @pytest.mark.slow
    def test_kl_against_monte_carlo_in_ten_dimensions(self):
        q = sweep_vdm(1.0, 2.0, 2.0, 10, "quantile-midpoint", 10, "logit-shift")
        p = sweep_vdm(1.0, 2.0, 2.0, 150, "quantile-midpoint", 10, "logit-shift")
        rng = stream(1, "mc-kl")
        terms = []
        for _ in range(50):
            x = q.sample(rng, 20_000)
            terms.append(q.log_density(x) - p.log_density(x))
        t = np.concatenate(terms)
        exact = kl_divergence(reduce_vdm_to_1d(q), reduce_vdm_to_1d(p))
        assert abs(t.mean() - exact) < 3 * t.std() / math.sqrt(len(t))


class TestSweep:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            SweepConfig(ns=(150,), reference_n=150)
        with pytest.raises(ValueError):
            SweepConfig(schemes=("gauss-jacobi",))
        with pytest.raises(ValueError):
            SweepConfig(sigmas=(0.0,))

    def test_standard_sets(self):
        cfg = SweepConfig.standard()
        assert cfg.pis == (0.0, 0.5, 1.0, 1.5, 2.5)
        assert cfg.sigmas == (2.0, 5.0) and cfg.ns == (5, 10, 20, 50) and cfg.mus == (2.0, 4.0)
        assert cfg.dim == 10 and cfg.reference_n == 150

    def test_self_comparison(self):
        cfg = SweepConfig()
        r = sweep_row(cfg, 1.0, 2.0, 150, 2.0, "quantile-midpoint")
        assert r.ok
        assert r.kl_q_p < 1e-9 and r.kl_p_q < 1e-9 and r.tv < 1e-9

    def test_order_and_determinism(self):
        cfg = SweepConfig(pis=(1.0, 0.0), sigmas=(2.0,), ns=(10, 5), mus=(2.0,), dim=3, reference_n=60)
        rows = run_sweep(cfg)
        keys = [(r.pi, r.sigma, r.n, r.mu) for r in rows]
        assert keys == sorted(keys)
        assert [r.scheme for r in rows[:3]] == list(cfg.schemes)
        assert rows == run_sweep(cfg)

    def test_row_errors_do_not_abort(self, monkeypatch):
        real = analysis.sweep_vdm

        def flaky(pi, sigma, mu, n, scheme, dim, bias):
            if scheme == "hermite-pushforward" and n == 5:
                raise RuntimeError("boom")
            return real(pi, sigma, mu, n, scheme, dim, bias)

        monkeypatch.setattr(analysis, "sweep_vdm", flaky)
        cfg = SweepConfig(ns=(5, 10), dim=2, reference_n=40)
        rows = run_sweep(cfg)
        bad = [r for r in rows if not r.ok]
        assert len(bad) == 1 and "boom" in bad[0].error and len(rows) == 6

    def test_cubature_as_fourth_scheme(self):
        cfg = SweepConfig(ns=(10,), schemes=("quantile-midpoint", "cubature"), dim=2, reference_n=60)
        rows = run_sweep(cfg)
        assert all(r.ok for r in rows)
        assert rows[1].tv < rows[0].tv + 0.05

    def test_bias_readings_differ(self):
        a = sweep_row(SweepConfig(bias="logit-shift"), 1.0, 2.0, 10, 2.0, "quantile-midpoint")
        b = sweep_row(SweepConfig(bias="scaled"), 0.5, 2.0, 10, 2.0, "quantile-midpoint")
        assert a.tv == pytest.approx(b.tv, rel=1e-9)

    def test_summary(self):
        rows = [
            analysis.DivergenceReport(0.0, 2.0, 5, 2.0, "a", 0.1, 0.2, 0.3),
            analysis.DivergenceReport(0.0, 2.0, 10, 2.0, "a", 0.3, 0.4, 0.1),
            analysis.DivergenceReport(0.0, 2.0, 10, 2.0, "a", error="x"),
        ]
        s = summarize(rows)
        assert s["scheme"]["a"] == pytest.approx({"kl_q_p": 0.2, "kl_p_q": 0.3, "tv": 0.2})
        assert s["tv_by_n"] == pytest.approx({(5, "a"): 0.3, (10, "a"): 0.1})


@pytest.fixture(scope="module")
def standard_rows():
    return run_sweep(SweepConfig.standard())


@pytest.mark.slow
def test_divergence_sanity(standard_rows):
    cfg = SweepConfig.standard()
    for r in standard_rows[:30]:
        raw = kl_divergence(
            reduce_vdm_to_1d(sweep_vdm(r.pi, r.sigma, r.mu, r.n, r.scheme, cfg.dim, cfg.bias)),
            reduce_vdm_to_1d(sweep_vdm(r.pi, r.sigma, r.mu, 150, "quantile-midpoint", cfg.dim, cfg.bias)),
            clip=False,
        )
        assert raw >= -1e-9
    assert all(0 <= r.tv <= 1 and r.kl_q_p >= 0 and r.kl_p_q >= 0 for r in standard_rows)


@pytest.mark.slow
def test_divergences_shrink_with_n(standard_rows):
    for scheme in ("sqrt-quantile", "quantile-midpoint"):
        series = {}
        for r in standard_rows:
            if r.scheme == scheme:
                series.setdefault((r.pi, r.sigma, r.mu), []).append((r.n, r.kl_q_p, r.kl_p_q, r.tv))
        good = 0
        for vals in series.values():
            vals.sort()
            cols = np.array([v[1:] for v in vals])
            good += bool(np.all(np.diff(cols, axis=0) <= 1e-12))
        assert good >= 0.9 * len(series), scheme


class TestGradients:
    def test_linear_exact(self):
        for k in (1, 10, 1000):
            est = reparam_grad_estimate(lambda x, l: l + x, lambda r, k: r.standard_normal(k), lambda y: y, 0.3, k, 5)
            assert est.grad_mean == 1.0 and est.stderr_grad == 0.0

    def test_quadratic(self):
        est = reparam_grad_estimate(lambda x, l: l + x, lambda r, k: r.standard_normal(k), lambda y: y * y, 1.0, 100_000, 1)
        assert abs(est.grad_mean - 2.0) < 3 * est.stderr_grad

    def test_same_draws_for_value_and_gradient(self):
        est = reparam_grad_estimate(lambda x, l: l * x, lambda r, k: r.standard_normal(k), lambda y: y, 1.0, 50, 2)
        # value = lambda * mean(x), grad = mean(x)
        assert est.value_mean == pytest.approx(est.grad_mean)

    def test_stderr_shrinks(self):
        small = run_gradcheck("quadratic", 1_000, 0).estimate.stderr_grad
        large = run_gradcheck("quadratic", 100_000, 0).estimate.stderr_grad
        assert 7 < small / large < 14

    @pytest.mark.filterwarnings("ignore:invalid value encountered in log")
    def test_non_finite_reports_index(self):
        from quadcompound.numerics import log

        with pytest.raises(FloatingPointError, match="sample"):
            reparam_grad_estimate(lambda x, l: l + x, lambda r, k: np.array([1.0, 2.0, -3.0]), log, 0.0, 3, 0)

    @pytest.mark.slow
    def test_smooth_case_large_k(self):
        r = run_gradcheck("sigmoid-smooth", 1_000_000, 3)
        assert abs(r.estimate.grad_mean - r.true_grad) < 4 * r.estimate.stderr_grad

    def test_smooth_truth_by_quadrature(self):
        from scipy import integrate

        exact = integrate.quad(lambda u: 2 * sigmoid(0.3 + u) ** 2 * (1 - sigmoid(0.3 + u)) * stats.norm.pdf(u), -12, 12)[0]
        assert GRAD_CASES["sigmoid-smooth"].true_grad(0.3) == pytest.approx(exact, abs=1e-7)

    def test_abs_case(self):
        r = run_gradcheck("abs", 100_000, 4)
        assert r.true_grad == pytest.approx(2 * stats.norm.cdf(0.5) - 1)
        assert r.passed

    @pytest.mark.parametrize("seed", [0, 1, 2])
    @pytest.mark.parametrize("k", [10, 10_000])
    def test_step_is_biased(self, seed, k):
        r = run_gradcheck("step", k, seed)
        assert r.estimate.grad_mean == 0.0 and r.known_biased and r.passed
        assert r.true_grad == pytest.approx(-stats.norm.pdf(0.5))

    def test_unknown_case(self):
        with pytest.raises(KeyError):
            run_gradcheck("cubic")


def test_count_local_maxima():
    assert count_local_maxima(np.sin, 0, 4 * math.pi) == 2
    assert count_local_maxima(lambda x: -(x**2), -1, 1) == 1
    assert count_local_maxima(lambda x: x, 0, 1) == 0
    assert count_local_maxima(lambda x: np.ones_like(x), 0, 1) == 0
