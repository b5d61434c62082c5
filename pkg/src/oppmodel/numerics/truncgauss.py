"""Truncated Gaussian on [lower, upper]: density, CDF, sampling, score, MLE.

The scale is handled through log(sigma) in every gradient so that ascent
steps never leave the positive half-line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

SQRT2 = math.sqrt(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SIGMA_MIN = 1e-3

# Acklam's rational approximation to the inverse normal CDF (|rel err| < 1.15e-9);
# one Halley step against erfc brings it to double precision.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_pdf(z):
    if isinstance(z, float):
        return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


def norm_cdf(z):
    if isinstance(z, float):
        return 0.5 * math.erfc(-z / SQRT2)
    return 0.5 * erfc(-np.asarray(z, dtype=float) / SQRT2)


def _ppf_scalar(p: float) -> float:
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    if p < _P_LOW or p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log(p if p < 0.5 else 1.0 - p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
        if p > 0.5:
            x = -x
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    e = (1.0 - p) - 0.5 * math.erfc(x / SQRT2) if x > 0 else 0.5 * math.erfc(-x / SQRT2) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def norm_ppf(p):
    """Inverse standard normal CDF for p in (0, 1); 0 and 1 map to -inf/+inf."""
    if isinstance(p, float):
        return _ppf_scalar(p)
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = p[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    out[mid] = num / den

    with np.errstate(divide="ignore", invalid="ignore"):
        for mask, sign, tail in ((lo, 1.0, p[lo]), (hi, -1.0, 1.0 - p[hi])):
            q = np.sqrt(-2.0 * np.log(tail))
            num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
            den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
            out[mask] = sign * num / den

        # Halley refinement
        finite = np.isfinite(out)
        x = out[finite]
        pf = p[finite]
        # Phi(x) - p, taken through the survival function above the median
        e = np.where(x > 0, (1.0 - pf) - norm_cdf(-x), norm_cdf(x) - pf)
        u = e * math.sqrt(2.0 * math.pi) * np.exp(0.5 * x * x)
        out[finite] = x - u / (1.0 + 0.5 * x * u)
    out[p <= 0.0] = -np.inf
    out[p >= 1.0] = np.inf
    return out


@dataclass(frozen=True)
class TruncGaussParams:
    mu: float
    sigma: float
    lower: float
    upper: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def alpha(self) -> float:
        return (self.lower - self.mu) / self.sigma

    @property
    def beta(self) -> float:
        return (self.upper - self.mu) / self.sigma

    @property
    def log_sigma(self) -> float:
        return math.log(self.sigma)

    def replace(self, mu: float | None = None, sigma: float | None = None) -> "TruncGaussParams":
        return TruncGaussParams(self.mu if mu is None else mu,
                                self.sigma if sigma is None else sigma,
                                self.lower, self.upper)

    def mass(self) -> float:
        return _mass(self.alpha, self.beta)

    def mean(self) -> float:
        a, b = self.alpha, self.beta
        return self.mu + self.sigma * float((norm_pdf(a) - norm_pdf(b)) / self._mass_safe())

    def _mass_safe(self) -> float:
        return max(self.mass(), 1e-300)

    def pdf(self, x):
        return tg_pdf(x, self)

    def cdf(self, x):
        return tg_cdf(x, self)


def _mass(alpha: float, beta: float) -> float:
    """Phi(beta) - Phi(alpha), evaluated in whichever tail keeps precision."""
    if alpha > 0:
        return float(norm_cdf(-alpha) - norm_cdf(-beta))
    return float(norm_cdf(beta) - norm_cdf(alpha))


def tg_log_pdf(x, p: TruncGaussParams):
    x = np.asarray(x, dtype=float)
    z = (x - p.mu) / p.sigma
    logz = math.log(max(p.mass(), 1e-300))
    out = -0.5 * z * z - math.log(p.sigma) - LOG_SQRT_2PI - logz
    return np.where((x >= p.lower) & (x <= p.upper), out, -np.inf)


def tg_pdf(x, p: TruncGaussParams):
    return np.exp(tg_log_pdf(x, p))


def tg_cdf(x, p: TruncGaussParams):
    x = np.clip(np.asarray(x, dtype=float), p.lower, p.upper)
    a = p.alpha
    z = (x - p.mu) / p.sigma
    if a > 0:
        num = norm_cdf(-a) - norm_cdf(-z)
    else:
        num = norm_cdf(z) - norm_cdf(a)
    return np.clip(num / max(p.mass(), 1e-300), 0.0, 1.0)


def tg_quantile(u, p: TruncGaussParams):
    """Inverse CDF: mu + sigma * Phi^-1(Phi(alpha) + u * Z)."""
    if not isinstance(u, float):
        u = np.asarray(u, dtype=float)
    a, b = p.alpha, p.beta
    if a > 0:
        # upper tail: work with survival functions to avoid 1 - tiny
        sa, sb = norm_cdf(-a), norm_cdf(-b)
        z = -norm_ppf(sa - u * (sa - sb))
    else:
        fa = norm_cdf(a)
        z = norm_ppf(fa + u * p.mass())
    x = p.mu + p.sigma * z
    if isinstance(x, float):
        return min(max(x, p.lower), p.upper)
    return np.clip(x, p.lower, p.upper)


def tg_sample(p: TruncGaussParams, rng: np.random.Generator, size=None):
    if size is None:
        return float(tg_quantile(float(rng.random()), p))
    return tg_quantile(rng.random(size), p)


def _phi_terms(p: TruncGaussParams) -> tuple[float, float, float, float]:
    a, b = p.alpha, p.beta
    pa = float(norm_pdf(a)) if math.isfinite(a) else 0.0
    pb = float(norm_pdf(b)) if math.isfinite(b) else 0.0
    apa = a * pa if math.isfinite(a) else 0.0
    bpb = b * pb if math.isfinite(b) else 0.0
    return pa, pb, apa, bpb


def tg_logpdf_grad(x, p: TruncGaussParams):
    """Score of the log-density w.r.t. (mu, log sigma), normalizer included.

    Vectorized over x. Raises if any x lies outside [lower, upper].
    """
    x = np.asarray(x, dtype=float)
    if np.any((x < p.lower) | (x > p.upper)):
        raise ValueError("x outside the truncation support")
    pa, pb, apa, bpb = _phi_terms(p)
    zmass = max(p.mass(), 1e-300)
    z = (x - p.mu) / p.sigma
    d_mu = z / p.sigma - (pa - pb) / (p.sigma * zmass)
    d_logsig = z * z - 1.0 - (apa - bpb) / zmass
    return d_mu, d_logsig


def mean_loglik(samples: np.ndarray, p: TruncGaussParams) -> float:
    return float(np.mean(tg_log_pdf(samples, p)))


def _mean_score(samples: np.ndarray, p: TruncGaussParams) -> np.ndarray:
    d_mu, d_ls = tg_logpdf_grad(samples, p)
    return np.array([d_mu.mean(), d_ls.mean()])


def tg_mle(samples, lower: float, upper: float, *, tol: float = 1e-6,
           max_iter: int = 500, init: TruncGaussParams | None = None) -> TruncGaussParams:
    """Maximum-likelihood (mu, sigma) for samples truncated to [lower, upper].

    Newton ascent in (mu, log sigma) on the mean log-likelihood. The Hessian
    comes from differencing the analytic score; when it is not negative
    definite the step falls back to the gradient. Every step is backtracked
    until the likelihood does not decrease. Initialised from the sample
    moments unless `init` is given.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 10:
        raise ValueError(f"need at least 10 samples, got {x.size}")
    if np.any((x < lower) | (x > upper)):
        raise ValueError(f"samples outside [{lower}, {upper}]")

    width = upper - lower
    sd = float(x.std())
    if sd < SIGMA_MIN:
        return TruncGaussParams(float(x.mean()), SIGMA_MIN, lower, upper)

    # keep the search in a box; a near-uniform sample otherwise drifts to mu -> inf
    mu_lo, mu_hi = lower - width, upper + width
    ls_lo, ls_hi = math.log(SIGMA_MIN), math.log(10.0 * width)

    def make(theta):
        return TruncGaussParams(float(np.clip(theta[0], mu_lo, mu_hi)),
                                math.exp(float(np.clip(theta[1], ls_lo, ls_hi))), lower, upper)

    if init is not None:
        theta = np.array([init.mu, math.log(init.sigma)])
    else:
        theta = np.array([x.mean(), math.log(sd)])
    p = make(theta)
    theta = np.array([p.mu, p.log_sigma])
    ll = mean_loglik(x, p)
    h = 1e-5
    for _ in range(max_iter):
        g = _mean_score(x, p)
        hess = np.empty((2, 2))
        for j in range(2):
            step = np.zeros(2)
            step[j] = h
            hess[:, j] = (_mean_score(x, make(theta + step)) - _mean_score(x, make(theta - step))) / (2 * h)
        hess = 0.5 * (hess + hess.T)
        try:
            direction = -np.linalg.solve(hess, g)
            if direction @ g <= 0 or np.linalg.eigvalsh(hess).max() >= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            direction = g
        t = 1.0
        while True:
            cand = make(theta + t * direction)
            cand_ll = mean_loglik(x, cand)
            if cand_ll >= ll - 1e-15 or t < 1e-10:
                break
            t *= 0.5
        new_theta = np.array([cand.mu, cand.log_sigma])
        change = float(np.max(np.abs(new_theta - theta)))
        theta, p, ll = new_theta, cand, cand_ll
        if change < tol:
            break
    return p
