import math

import numpy as np
import pytest
from scipy import integrate, stats

from oppmodel.numerics import (
    SIGMA_MIN,
    TruncGaussParams,
    norm_cdf,
    norm_ppf,
    tg_cdf,
    tg_log_pdf,
    tg_logpdf_grad,
    tg_mle,
    tg_pdf,
    tg_quantile,
    tg_sample,
)

P = TruncGaussParams(0.5, 0.2, 0.0, 1.0)


def fd_score(x, p, h=1e-6):
    """Central differences of log f in (mu, log sigma)."""
    def lp(mu, ls):
        return float(tg_log_pdf(x, TruncGaussParams(mu, math.exp(ls), p.lower, p.upper)))
    d_mu = (lp(p.mu + h, p.log_sigma) - lp(p.mu - h, p.log_sigma)) / (2 * h)
    d_ls = (lp(p.mu, p.log_sigma + h) - lp(p.mu, p.log_sigma - h)) / (2 * h)
    return d_mu, d_ls


def test_pdf_at_centre():
    assert float(tg_pdf(0.5, P)) == pytest.approx(0.39894228 / (0.2 * 0.98758067), rel=1e-7)
    assert float(tg_pdf(0.5, P)) == pytest.approx(2.0198, abs=1e-4)


def test_pdf_zero_outside_and_cdf_bounds():
    assert float(tg_pdf(-0.1, P)) == 0.0 and float(tg_pdf(1.2, P)) == 0.0
    assert float(tg_cdf(0.0, P)) == 0.0 and float(tg_cdf(1.0, P)) == 1.0
    assert float(tg_cdf(0.5, P)) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("sigma,lo,hi", [(0.0, 0, 1), (-1.0, 0, 1), (0.1, 1, 1), (0.1, 2, 1)])
def test_invalid_params(sigma, lo, hi):
    with pytest.raises(ValueError):
        TruncGaussParams(0.5, sigma, lo, hi)


@pytest.mark.parametrize("p", [P, TruncGaussParams(0.1, 0.05, 0, 1), TruncGaussParams(3.0, 0.5, 0, 1),
                               TruncGaussParams(-2.0, 0.3, 0, 1), TruncGaussParams(0.7, 4.0, 0, 1)])
def test_pdf_integrates_to_one_and_matches_scipy(p):
    total, _ = integrate.quad(lambda x: float(tg_pdf(x, p)), p.lower, p.upper, epsabs=1e-12)
    assert total == pytest.approx(1.0, abs=1e-6)
    ref = stats.truncnorm(p.alpha, p.beta, loc=p.mu, scale=p.sigma)
    xs = np.linspace(p.lower, p.upper, 41)
    np.testing.assert_allclose(tg_pdf(xs, p), ref.pdf(xs), rtol=1e-9)
    np.testing.assert_allclose(tg_cdf(xs, p), ref.cdf(xs), rtol=1e-9, atol=1e-14)
    assert p.mean() == pytest.approx(ref.mean(), rel=1e-9)


def test_cdf_monotone_and_quantile_roundtrip():
    for p in (P, TruncGaussParams(3.0, 0.5, 0, 1), TruncGaussParams(-1.0, 0.2, 0, 1)):
        xs = np.linspace(p.lower, p.upper, 500)
        assert np.all(np.diff(tg_cdf(xs, p)) >= 0)
        u = np.linspace(0.001, 0.999, 999)
        assert np.max(np.abs(tg_cdf(tg_quantile(u, p), p) - u)) < 1e-8


def test_norm_ppf_accuracy():
    p = np.concatenate([np.logspace(-12, -1, 50), np.linspace(0.01, 0.99, 99), 1 - np.logspace(-12, -1, 50)])
    np.testing.assert_allclose(norm_ppf(p), stats.norm.ppf(p), rtol=1e-9, atol=1e-12)
    z = np.linspace(-8, 8, 101)
    np.testing.assert_allclose(norm_cdf(z), stats.norm.cdf(z), rtol=1e-12, atol=1e-300)


def test_samples_in_support_and_mean():
    rng = np.random.default_rng(11)
    xs = tg_sample(P, rng, size=100_000)
    assert xs.min() >= 0.0 and xs.max() <= 1.0
    assert xs.mean() == pytest.approx(P.mean(), abs=0.005)
    x = tg_sample(P, np.random.default_rng(3))
    assert isinstance(x, float) and x == tg_sample(P, np.random.default_rng(3))


def test_grad_matches_fd():
    rng = np.random.default_rng(5)
    for _ in range(30):
        p = TruncGaussParams(rng.uniform(-0.5, 1.5), rng.uniform(0.05, 1.0), 0.0, 1.0)
        x = rng.uniform(0.01, 0.99)
        got = [float(g) for g in tg_logpdf_grad(x, p)]
        want = fd_score(x, p)
        for g, w in zip(got, want):
            assert abs(g - w) <= 1e-6 * max(1.0, abs(w))


def test_grad_symmetric_and_untruncated_limit():
    d_mu, _ = tg_logpdf_grad(0.5, P)
    assert abs(float(d_mu)) < 1e-12
    wide = TruncGaussParams(0.3, 0.5, -1e3, 1e3)
    d_mu, d_ls = tg_logpdf_grad(0.8, wide)
    assert float(d_mu) == pytest.approx((0.8 - 0.3) / 0.25, rel=1e-12)
    assert float(d_ls) == pytest.approx(1.0 - 1.0, abs=1e-12)


def test_grad_outside_support_raises():
    with pytest.raises(ValueError):
        tg_logpdf_grad(1.5, P)


def test_mle_recovery():
    truth = TruncGaussParams(0.4, 0.1, 0, 1)
    xs = tg_sample(truth, np.random.default_rng(0), size=10_000)
    fit = tg_mle(xs, 0, 1)
    assert fit.mu == pytest.approx(0.4, abs=0.02)
    assert fit.sigma == pytest.approx(0.1, abs=0.02)


def test_mle_recovers_heavily_truncated_case():
    truth = TruncGaussParams(0.9, 0.3, 0, 1)
    xs = tg_sample(truth, np.random.default_rng(2), size=20_000)
    fit = tg_mle(xs, 0, 1)
    assert fit.mu == pytest.approx(0.9, abs=0.05)
    assert fit.sigma == pytest.approx(0.3, abs=0.05)


def test_mle_symmetric_sample():
    base = np.random.default_rng(1).uniform(0.1, 0.5, 500)
    xs = np.concatenate([base, 1.0 - base])
    assert tg_mle(xs, 0, 1).mu == pytest.approx(0.5, abs=1e-4)


def test_mle_degenerate_and_errors():
    fit = tg_mle(np.full(20, 0.3), 0, 1)
    assert fit.sigma == SIGMA_MIN and fit.mu == pytest.approx(0.3)
    with pytest.raises(ValueError):
        tg_mle(np.full(5, 0.3), 0, 1)
    with pytest.raises(ValueError):
        tg_mle(np.array([0.2] * 10 + [1.5]), 0, 1)
