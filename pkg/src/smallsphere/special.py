"""Special functions used by the densities, estimators and tests.

Thin, validated wrappers around :mod:`scipy.special` with log-domain
variants, so that concentrations in the hundreds never overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy import special as sps

MAX_BESSEL_ORDER = 10.0  # orders reachable from p <= 20 (vMF on S^{p-1} and its MLE)


def _check_order(order) -> None:
    order = np.asarray(order, dtype=float)
    if np.any(order < 0) or np.any(order > MAX_BESSEL_ORDER):
        raise ValueError(f"Bessel order must be in [0, {MAX_BESSEL_ORDER}]")


def log_bessel_i(order, x):
    """log I_order(x) via the exponentially scaled Bessel function."""
    _check_order(order)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    with np.errstate(divide="ignore"):
        out = np.log(sps.ive(order, x)) + x
    return out if out.ndim else float(out)


def bessel_i(order, x):
    """Modified Bessel function of the first kind, I_order(x), for x >= 0."""
    out = np.exp(log_bessel_i(order, x))
    return out if np.ndim(out) else float(out)


def bessel_ratio(order, x):
    """I_{order+1}(x) / I_order(x), stable for large x."""
    _check_order(np.asarray(order) + 1.0)
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(x > 0, sps.ive(order + 1.0, x) / sps.ive(order, x), 0.0)
    return out if out.ndim else float(out)


def std_normal_cdf(z):
    return sps.ndtr(z)


def log_std_normal_cdf(z):
    return sps.log_ndtr(z)


def std_normal_logpdf(z):
    z = np.asarray(z, dtype=float)
    return -0.5 * z * z - 0.5 * np.log(2.0 * np.pi)


def _log_normal_interval_scalar(a: float, b: float) -> float:
    if a > 0:
        a, b = -b, -a
    lhi = float(sps.log_ndtr(b))
    d = float(sps.log_ndtr(a)) - lhi
    if d >= 0:
        return -math.inf
    return lhi + math.log1p(-math.exp(d))


def log_normal_interval(a, b):
    """log(Phi(b) - Phi(a)) for a < b without cancellation in either tail."""
    if isinstance(a, float) and isinstance(b, float):
        return _log_normal_interval_scalar(a, b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # use the upper tail when the interval sits right of zero
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    lhi = sps.log_ndtr(hi)
    llo = sps.log_ndtr(lo)
    with np.errstate(divide="ignore"):
        out = lhi + np.log1p(-np.exp(np.minimum(llo - lhi, 0.0)))
    return out if out.ndim else float(out)


def chi_square_sf(x, df: int):
    """Upper tail P(chi2_df > x) through the regularized incomplete gamma."""
    if df < 1 or int(df) != df:
        raise ValueError("df must be a positive integer")
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    out = sps.gammaincc(df / 2.0, x / 2.0)
    return out if np.ndim(out) else float(out)


def log_sphere_area(p: int) -> float:
    """log of the surface area of S^{p-1} in R^p."""
    return float(np.log(2.0) + 0.5 * p * np.log(np.pi) - sps.gammaln(0.5 * p))


def log_vmf_integral(kappa, d: int):
    """log of the integral of exp(kappa mu.y) over S^{d-1} in R^d (surface measure).

    Equals ``log((2 pi)^{d/2} kappa^{1-d/2} I_{d/2-1}(kappa))``; the kappa -> 0
    limit is the sphere area.
    """
    kappa = np.asarray(kappa, dtype=float)
    nu = 0.5 * d - 1.0
    safe = np.where(kappa > 1e-8, kappa, 1.0)
    with np.errstate(divide="ignore"):
        big = 0.5 * d * np.log(2.0 * np.pi) - nu * np.log(safe) + log_bessel_i(nu, safe)
    # series for tiny kappa: area * (1 + kappa^2 / (2 d))
    small = log_sphere_area(d) + np.log1p(kappa**2 / (2.0 * d))
    out = np.where(kappa > 1e-8, big, small)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TruncNormal:
    """Normal(mean, sd^2) truncated to [lower, upper]."""

    mean: float
    sd: float
    lower: float = -1.0
    upper: float = 1.0

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError("sd must be positive")
        if not self.lower < self.upper:
            raise ValueError("lower must be below upper")

    @property
    def alpha(self) -> float:
        return (self.lower - self.mean) / self.sd

    @property
    def beta(self) -> float:
        return (self.upper - self.mean) / self.sd

    def log_mass(self) -> float:
        """log(Phi(beta) - Phi(alpha))."""
        return log_normal_interval(self.alpha, self.beta)

    def cdf(self, s):
        s = np.clip(np.asarray(s, dtype=float), self.lower, self.upper)
        num = log_normal_interval(self.alpha, np.maximum((s - self.mean) / self.sd, self.alpha))
        return np.exp(num - self.log_mass())


def trunc_normal_logpdf(spec: TruncNormal, s):
    """Log density of the truncated normal; -inf outside [lower, upper]."""
    s = np.asarray(s, dtype=float)
    z = (s - spec.mean) / spec.sd
    out = -0.5 * z * z - np.log(spec.sd * np.sqrt(2.0 * np.pi)) - spec.log_mass()
    out = np.where((s < spec.lower) | (s > spec.upper), -np.inf, out)
    return out if out.ndim else float(out)


def trunc_normal_moments(mean, sd, lower=-1.0, upper=1.0, order: int = 2):
    """Raw moments E[s^k], k = 0..order, of a truncated normal (vectorized over mean, sd).

    Uses the standard recursion
    ``m_k = (k-1) sd^2 m_{k-2} + mean m_{k-1} - sd (u^{k-1} phi(b) - l^{k-1} phi(a)) / Z``
    with the density-to-mass ratios taken in log space.
    """
    if isinstance(mean, float) and isinstance(sd, float):
        return _trunc_normal_moments_scalar(mean, sd, float(lower), float(upper), order)
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    log_z = log_normal_interval(a, b)
    ra = np.exp(std_normal_logpdf(a) - log_z)
    rb = np.exp(std_normal_logpdf(b) - log_z)
    moments = [np.ones_like(mean)]
    prev2 = np.zeros_like(mean)
    prev1 = moments[0]
    for k in range(1, order + 1):
        mk = (k - 1) * sd**2 * prev2 + mean * prev1 - sd * (upper ** (k - 1) * rb - lower ** (k - 1) * ra)
        moments.append(mk)
        prev2, prev1 = prev1, mk
    return moments


def _trunc_normal_moments_scalar(mean: float, sd: float, lower: float, upper: float, order: int) -> list[float]:
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    log_z = _log_normal_interval_scalar(a, b)
    half_log_2pi = 0.5 * math.log(2.0 * math.pi)
    ra = math.exp(-0.5 * a * a - half_log_2pi - log_z)
    rb = math.exp(-0.5 * b * b - half_log_2pi - log_z)
    moments = [1.0]
    prev2, prev1 = 0.0, 1.0
    for k in range(1, order + 1):
        mk = (k - 1) * sd * sd * prev2 + mean * prev1 - sd * (upper ** (k - 1) * rb - lower ** (k - 1) * ra)
        moments.append(mk)
        prev2, prev1 = prev1, mk
    return moments
