import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from _models import three_uniform_cdf, two_uniform_quantile
from storage_sharing.demand import (
    Empirical,
    ExtrapolationError,
    GaussianCopulaModel,
    IndependentModel,
    IrwinHall,
    LogNormal,
    Mixture,
    PairedEmpiricalModel,
    PointMass,
    SampleMatrix,
    TransformModel,
    TransformOfUniform,
    TruncatedGaussian,
    Uniform,
    alignment_check,
    conditional_mean,
    conditional_means,
    fit_empirical,
    kernel_bandwidth,
    sample,
)

PARAMETRIC = [
    Uniform(0.5, 3.0),
    TruncatedGaussian(2.0, 1.5),
    TruncatedGaussian(8.0, 2.0),
    LogNormal(0.3, 0.6),
    IrwinHall(2, 1.0),
    IrwinHall(4, 0.7),
]


def _numeric_partial(dist, c, upper):
    # E[(X - c)^+] = int_c^inf (1 - F)
    val, _ = integrate.quad(lambda x: 1.0 - float(dist.cdf(x)), max(c, 0.0), upper, limit=200)
    return val + max(0.0, -c)


@pytest.mark.parametrize("dist", PARAMETRIC, ids=repr)
def test_partial_expectation_matches_quadrature(dist):
    upper = float(dist.quantile(1.0 - 1e-12)) if not isinstance(dist, LogNormal) else 200.0
    for p in (0.0, 0.1, 0.5, 0.9):
        c = float(dist.quantile(p))
        assert float(dist.partial_expectation(c)) == pytest.approx(_numeric_partial(dist, c, upper), abs=1e-7)


@pytest.mark.parametrize("dist", PARAMETRIC, ids=repr)
def test_quantile_inverts_cdf(dist):
    p = np.linspace(0.01, 0.99, 37)
    assert np.allclose(dist.cdf(dist.quantile(p)), p, atol=1e-9)


@pytest.mark.parametrize("dist", PARAMETRIC, ids=repr)
def test_mean_matches_quadrature(dist):
    upper = 200.0 if isinstance(dist, LogNormal) else float(dist.quantile(1.0))
    val, _ = integrate.quad(lambda x: 1.0 - float(dist.cdf(x)), 0.0, upper, limit=200)
    assert dist.mean() == pytest.approx(val, abs=1e-7)


def test_quantile_rejects_bad_probability():
    with pytest.raises(ValueError):
        Uniform().quantile(1.5)
    with pytest.raises(ValueError):
        Uniform().quantile(float("nan"))


def test_truncated_gaussian_against_scipy():
    d = TruncatedGaussian(1.0, 2.0)
    ref = stats.truncnorm(-0.5, np.inf, loc=1.0, scale=2.0)
    x = np.linspace(0, 8, 9)
    assert np.allclose(d.cdf(x), ref.cdf(x))
    assert d.mean() == pytest.approx(ref.mean())


def test_irwin_hall_two_and_three():
    ih2 = IrwinHall(2)
    ih3 = IrwinHall(3)
    for g in np.linspace(0.05, 0.95, 19):
        assert float(ih2.quantile(g)) == pytest.approx(two_uniform_quantile(g), abs=1e-12)
    x = np.linspace(0.0, 3.0, 31)
    assert np.allclose(ih3.cdf(x), [three_uniform_cdf(v) for v in x], atol=1e-12)


def test_transform_of_uniform_grid():
    d = TransformOfUniform(0.0, 10.0, "identity")
    assert d.mean() == pytest.approx(5.0, abs=1e-9)
    assert float(d.quantile(0.3)) == pytest.approx(3.0, abs=1e-4)
    assert float(d.partial_expectation(4.0)) == pytest.approx(0.5 * 36 / 10, abs=1e-6)
    with pytest.raises(ValueError):
        TransformOfUniform(0.0, 1.0, "nope")


def test_sin_cos_sum_is_base_variable():
    s = sample(TransformModel(), 1000, seed=0)
    w = s.total
    assert np.all((w >= 0) & (w <= 10))
    assert np.allclose(s.column(0), w * np.sin(w) ** 2)


def test_point_mass_and_zero_demand():
    z = PointMass(0.0)
    assert z.quantile(0.7) == 0.0
    assert z.mean() == 0.0
    assert z.tail_mean(0.0) == 0.0
    assert float(z.partial_expectation(1.0)) == 0.0


def test_mixture_averages_cdfs():
    m = Mixture((Uniform(0, 1), Uniform(1, 2)))
    assert float(m.cdf(1.0)) == pytest.approx(0.5)
    assert float(m.quantile(0.75)) == pytest.approx(1.5, abs=1e-9)
    assert m.mean() == pytest.approx(1.0)
    x = m.from_uniform(np.random.default_rng(0).random(200_000))
    assert x.mean() == pytest.approx(1.0, abs=0.01)


def test_empirical_tail_and_survival():
    e = Empirical(np.array([1.0, 2.0, 3.0, 4.0]))
    assert e.survival(2.0) == 0.75
    assert e.tail_mean(2.0) == 3.0
    assert e.tail_mean(10.0) == 0.0
    assert float(e.partial_expectation(2.5)) == pytest.approx((0.5 + 1.5) / 4)


@given(
    st.lists(st.floats(0.0, 100.0, allow_nan=False), min_size=2, max_size=60),
    st.floats(0.0, 1.0),
)
def test_empirical_quantile_is_generalized_inverse(values, p):
    e = fit_empirical(values)
    q = e.quantile(p)
    assert min(values) <= q <= max(values)
    assert float(e.cdf(q)) >= p - 1e-9


def test_fit_empirical_errors():
    with pytest.raises(ValueError):
        fit_empirical([1.0])
    with pytest.raises(ValueError):
        fit_empirical([1.0, -2.0])
    with pytest.raises(ValueError):
        fit_empirical([1.0, np.inf])


def test_empirical_cdf_dkw():
    # Dvoretzky-Kiefer-Wolfowitz band at 1e-6 failure probability
    n = 20_000
    x = TruncatedGaussian(3.0, 1.0).from_uniform(np.random.default_rng(1).random(n))
    e = fit_empirical(x)
    grid = np.linspace(0, 7, 200)
    eps = math.sqrt(math.log(2 / 1e-6) / (2 * n))
    assert np.max(np.abs(e.cdf(grid) - TruncatedGaussian(3.0, 1.0).cdf(grid))) <= eps


def test_sampling_is_thread_independent():
    model = GaussianCopulaModel.one_factor([Uniform(0, 1), LogNormal(0, 0.5), TruncatedGaussian(3, 1)], [0.5, 0.6, 0.7])
    a = sample(model, 200_000, seed=9, threads=1)
    b = sample(model, 200_000, seed=9, threads=4)
    assert np.array_equal(a.values, b.values)
    c = sample(model, 200_000, seed=10)
    assert not np.array_equal(a.values, c.values)


def test_sample_prefix_stable():
    model = IndependentModel((Uniform(0, 1),))
    a = sample(model, 100_000, seed=4)
    b = sample(model, 70_000, seed=4)
    assert np.array_equal(a.values[:65536], b.values[:65536])


def test_copula_marginals_and_correlation():
    rho = 0.6
    model = GaussianCopulaModel([TruncatedGaussian(10, 1), TruncatedGaussian(10, 1)], [[1, rho], [rho, 1]])
    s = sample(model, 200_000, seed=2)
    assert np.corrcoef(s.values, rowvar=False)[0, 1] == pytest.approx(rho, abs=0.01)
    assert s.column(0).mean() == pytest.approx(10.0, abs=0.01)


@pytest.mark.parametrize(
    "corr",
    [[[1, 0.5], [0.4, 1]], [[2, 0], [0, 1]], [[1, 1.5], [1.5, 1]]],
)
def test_copula_rejects_bad_matrix(corr):
    with pytest.raises(ValueError):
        GaussianCopulaModel([Uniform(), Uniform()], corr)


def test_sample_matrix_validation():
    with pytest.raises(ValueError):
        SampleMatrix(np.array([[1.0, -1.0]]))
    with pytest.raises(ValueError):
        SampleMatrix(np.array([[1.0, np.nan]]))
    s = SampleMatrix(np.arange(6.0).reshape(3, 2))
    assert np.array_equal(s.merge([(0, 1)]).values[:, 0], s.total)
    assert s.select([1]).n == 1
    assert s.with_column(np.ones(3)).n == 3


def test_paired_empirical_resamples_rows():
    vals = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]])
    m = PairedEmpiricalModel(vals, ("a", "b"))
    s = sample(m, 1000, seed=0)
    assert np.all(s.column(1) == 10 * s.column(0))
    assert np.array_equal(m.as_samples().values, vals)


def test_conditional_mean_linear_gaussian():
    # bivariate normal: E[X1 | X1 + X2 = q] = mu1 + cov(X1, Xc) / var(Xc) (q - mu_c)
    model = GaussianCopulaModel.one_factor([TruncatedGaussian(20, 2), TruncatedGaussian(30, 1)], [0.6, 0.6])
    s = sample(model, 400_000, seed=3)
    r = 0.36
    var_c = 4 + 1 + 2 * r * 2
    cov1 = 4 + r * 2
    for q in (47.0, 50.0, 53.0):
        cm = conditional_means(s, q)
        oracle = 20 + cov1 / var_c * (q - 50)
        assert cm.estimate[0] == pytest.approx(oracle, abs=4 * cm.stderr[0] + 0.01)
        assert cm.total == pytest.approx(q, abs=0.02)


def test_conditional_mean_outside_range():
    s = sample(IndependentModel((Uniform(0, 1), Uniform(0, 1))), 1000, seed=0)
    with pytest.raises(ExtrapolationError):
        conditional_mean(s, 0, 2.5)
    with pytest.raises(IndexError):
        conditional_mean(s, 5, 1.0)


def test_bandwidth_rules():
    x = np.random.default_rng(0).standard_normal(10_000)
    h_s = kernel_bandwidth(x, "silverman")
    h_a = kernel_bandwidth(x, "auto")
    assert h_a < h_s
    assert h_a / h_s == pytest.approx(10_000 ** -0.1, rel=1e-12)
    assert kernel_bandwidth(x, 0.3) == 0.3
    with pytest.raises(ValueError):
        kernel_bandwidth(x, "wide")


def test_alignment_check_detects_transform_violation():
    s = sample(TransformModel(), 200_000, seed=5)
    rep = alignment_check(s)
    assert not rep.aligned
    assert rep.violating_firms == [0, 1]


def test_alignment_check_passes_independent():
    s = sample(IndependentModel((Uniform(0, 1), Uniform(0, 2))), 200_000, seed=6)
    rep = alignment_check(s)
    assert rep.aligned, rep.violations


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.1, 0.9))
def test_independent_uniform_aggregate_is_irwin_hall(seed, g):
    m = IndependentModel((Uniform(0, 1), Uniform(0, 1)))
    assert isinstance(m.aggregate(), IrwinHall)
    s = sample(m, 20_000, seed=seed)
    # DKW at 1e-6: quantile error bounded by eps / min density
    eps = math.sqrt(math.log(2 / 1e-6) / 40_000)
    p_hat = float(m.aggregate().cdf(np.quantile(s.total, g)))
    assert abs(p_hat - g) <= eps + 1e-4


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_sum_constraint_across_q(p):
    model = GaussianCopulaModel.one_factor(
        [TruncatedGaussian(6, 1), LogNormal(1.0, 0.3), Uniform(0, 4)], [0.5, 0.4, 0.6]
    )
    s = sample(model, 200_000, seed=11)
    q = float(np.quantile(s.total, p))
    cm = conditional_means(s, q)
    assert abs(cm.total - q) <= 3 * cm.sum_stderr


def test_same_seed_bit_identical():
    m = TransformModel()
    assert np.array_equal(sample(m, 70_000, 3).values, sample(m, 70_000, 3, threads=2).values)
