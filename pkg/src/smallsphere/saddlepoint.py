"""Saddle-point approximation of the S1 normalizing constant.

For any ``h > 0`` the S1 constant is written as

    a = 2 pi^{p/2} |Psi|^{-1/2} g(1) exp(xi' Psi xi + h - kappa0 nu^2)

where ``g`` is the density of ``R = |Z|^2`` with ``Z ~ N_p(xi, Psi^{-1}/2)``,
``Psi = diag(kappa0 + h, h, ..., h)`` and ``xi`` carries the two nonzero
coordinates below.  ``g(1)`` is replaced by the second-order saddle-point
density approximation built from the cumulant generating function of ``R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq


class SaddlepointError(RuntimeError):
    pass


@dataclass(frozen=True)
class SaddleProblem:
    kappa0: float
    kappa1: float
    nu: float
    h: float = 1.0
    p: int = 3

    def __post_init__(self):
        if not self.kappa0 > 0:
            raise ValueError("kappa0 must be positive")
        if self.kappa1 < 0:
            raise ValueError("kappa1 must be non-negative")
        if not -1.0 < self.nu < 1.0:
            raise ValueError("nu must lie in (-1, 1)")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.p < 3:
            raise ValueError("p must be at least 3")

    @property
    def psi(self) -> tuple[float, float]:
        """The two distinct diagonal entries of Psi (the second has multiplicity p-1)."""
        return self.kappa0 + self.h, self.h

    @property
    def xi(self) -> tuple[float, float]:
        k0, k1, nu, h = self.kappa0, self.kappa1, self.nu, self.h
        return nu * (2 * k0 + k1) / (2 * (k0 + h)), k1 * math.sqrt(1 - nu * nu) / (2 * h)


def kg_derivative(prob: SaddleProblem, j: int, t: float) -> float:
    """j-th derivative of the cumulant generating function of R at ``t < h``.

    ``j = 0`` returns K_g itself:
    ``sum_i [-1/2 log(1 - t/psi_i) + t xi_i^2 psi_i / (psi_i - t)]``.
    """
    if t >= prob.h:
        raise SaddlepointError(f"t = {t} is at or beyond the pole h = {prob.h}")
    if j not in range(5):
        raise ValueError("j must be in 0..4")
    (psi1, psi2), (xi1, xi2) = prob.psi, prob.xi
    d1, d2 = psi1 - t, psi2 - t
    q1, q2 = (xi1 * psi1) ** 2, (xi2 * psi2) ** 2
    if j == 0:
        return (
            -0.5 * math.log1p(-t / psi1)
            - 0.5 * (prob.p - 1) * math.log1p(-t / psi2)
            + t * xi1 * xi1 * psi1 / d1
            + t * xi2 * xi2 * psi2 / d2
        )
    fj1 = math.factorial(j - 1)
    fj = math.factorial(j)
    return 0.5 * fj1 * (d1**-j + (prob.p - 1) * d2**-j) + fj * (q1 * d1 ** -(j + 1) + q2 * d2 ** -(j + 1))


def solve_saddle(prob: SaddleProblem) -> float:
    """Unique root of K_g'(t) = 1 on (-inf, h).

    K_g' increases from 0 (t -> -inf) to +inf (t -> h), so the root is
    bracketed by stepping left from just below ``h`` with doubling steps.
    """
    h = prob.h
    eps = 1e-3 * h
    hi = h - eps
    while kg_derivative(prob, 1, hi) < 1.0:
        eps /= 16.0
        hi = h - eps
        if eps < 1e-300:
            raise SaddlepointError("could not bracket from the right")
    step = max(1.0, h)
    lo = hi - step
    n = 0
    while kg_derivative(prob, 1, lo) > 1.0:
        step *= 2.0
        lo = hi - step
        n += 1
        if n > 200:
            raise SaddlepointError("bracket expansion exceeded 200 doublings")
    t = brentq(lambda u: kg_derivative(prob, 1, u) - 1.0, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    # Newton polish; K_g' is convex and increasing so this cannot overshoot past h
    for _ in range(3):
        r = kg_derivative(prob, 1, t) - 1.0
        if r == 0.0:
            break
        t_new = t - r / kg_derivative(prob, 2, t)
        if not t_new < h:
            break
        t = t_new
    return t


def log_g1(prob: SaddleProblem) -> float:
    """log of the second-order saddle-point approximation to g(1)."""
    t = solve_saddle(prob)
    k0 = kg_derivative(prob, 0, t)
    k2 = kg_derivative(prob, 2, t)
    k3 = kg_derivative(prob, 3, t)
    k4 = kg_derivative(prob, 4, t)
    corr = k4 / (8.0 * k2**2) - 5.0 * k3**2 / (24.0 * k2**3)
    return -0.5 * math.log(2.0 * math.pi * k2) + k0 - t + corr


def s1_log_norm_const(prob: SaddleProblem) -> float:
    """log a(kappa0, kappa1, nu) for S1 on S^{p-1}, surface measure."""
    return _s1_log_norm_const_cached(prob.kappa0, prob.kappa1, prob.nu, prob.h, prob.p)


@lru_cache(maxsize=65536)
def _s1_log_norm_const_cached(kappa0, kappa1, nu, h, p) -> float:
    prob = SaddleProblem(kappa0, kappa1, nu, h, p)
    (psi1, psi2), (xi1, xi2) = prob.psi, prob.xi
    log_det = math.log(psi1) + (p - 1) * math.log(psi2)
    quad = psi1 * xi1 * xi1 + psi2 * xi2 * xi2
    return (
        math.log(2.0)
        + 0.5 * p * math.log(math.pi)
        - 0.5 * log_det
        + log_g1(prob)
        + quad
        + h
        - kappa0 * nu * nu
    )


def s1_log_a(kappa0: float, kappa1: float, nu: float, p: int = 3, h: float = 1.0) -> float:
    """Convenience wrapper: saddle-point log a for the given parameters."""
    return _s1_log_norm_const_cached(float(kappa0), float(kappa1), float(nu), float(h), int(p))


def s1_log_a_exact(kappa0: float, kappa1: float, nu: float, p: int = 3) -> float:
    """Reference value of log a by 1-d quadrature over s.

    The integral over the subsphere at fixed ``s`` is a vMF integral on
    S^{p-2}, leaving a smooth 1-d integrand in the angle ``theta = arccos s``.
    Used to validate the saddle-point value, not by the estimators.
    """
    from .special import log_vmf_integral

    theta, w = _theta_nodes(kappa0, nu, p, shift=kappa1 / kappa0)
    s = np.cos(theta)
    r = np.sin(theta)
    log_f = (
        -kappa0 * (s - nu) ** 2
        + kappa1 * nu * s
        + log_vmf_integral(kappa1 * math.sqrt(1 - nu * nu) * r, p - 1)
        + (p - 2) * np.log(np.maximum(r, 1e-300))
    )
    m = np.max(log_f)
    return float(m + np.log(np.sum(w * np.exp(log_f - m))))


def _theta_nodes(kappa0: float, nu: float, p: int, n: int = 400, shift: float = 0.0):
    """Gauss-Legendre nodes in theta covering the mass of exp(-kappa0 (cos theta - nu)^2)."""
    sd = 1.0 / math.sqrt(2.0 * kappa0)
    half = 14.0 * sd + shift
    lo = max(-1.0, nu - half)
    hi = min(1.0, nu + half)
    t_lo, t_hi = math.acos(hi), math.acos(lo)
    x, w = np.polynomial.legendre.leggauss(n)
    theta = 0.5 * (t_hi - t_lo) * x + 0.5 * (t_hi + t_lo)
    return theta, 0.5 * (t_hi - t_lo) * w
