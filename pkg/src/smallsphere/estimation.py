"""Approximate maximum-likelihood estimation.

First-kind models (S1, iMS1 and their kappa1 = 0 special case, BM) use the
alternating scheme: a closed-form axis update given the latitudes,
then a three-parameter search for (mu1, kappa0, kappa1) given the axis.

Second-kind models (S2, iMS2, MS2) profile the axis: for a fixed axis the
vertical and horizontal parts separate into truncated-normal and von
Mises (or multivariate von Mises) problems, and the axis is optimized by
a simplex search in tangent coordinates.

Data are ``(n, p)`` arrays for univariate models and ``(n, K, p)``
arrays for the multivariate ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import optimize

from . import special
from .densities import (
    IMS1,
    IMS2,
    MS2,
    S1,
    S2,
    VMF,
    ModelParams,
    UnsupportedModelError,
    log_vertical_integral,
    t3_moments,
)
from .saddlepoint import _theta_nodes, s1_log_a
from .sphere import frame, project_complement, unit

KAPPA_CAP = 1e6
_NU_EDGE = 1.0 - 1e-12


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class FitOptions:
    """Estimator settings.

    ``nu_init`` of ``None`` means the data-driven start: the mean of
    ``mu0'x`` under the smallest-eigenvector axis.  ``horizontal`` selects
    the MS2 horizontal estimator: ``"moment"`` (closed-form moment
    estimates) or ``"mle"`` (exact multivariate von Mises likelihood,
    K <= 3).  ``multi_start`` adds the second-kind axis as a second start
    for the first-kind alternation.
    """

    nu_init: float | None = None
    max_outer_iters: int = 100
    tol: float = 1e-6
    simplex_step: float = 0.1
    max_evals: int = 2000
    horizontal: str = "moment"
    accelerate: bool = True
    multi_start: bool = True

    def __post_init__(self):
        if self.nu_init is not None and not -1.0 < self.nu_init < 1.0:
            raise ValueError("nu_init must lie in (-1, 1)")
        if self.horizontal not in ("moment", "mle"):
            raise ValueError("horizontal must be 'moment' or 'mle'")


@dataclass
class FitResult:
    model: str
    params: ModelParams
    neg_log_lik: float
    n_iters: int
    converged: bool
    trace: list[float] = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        p = self.params
        lam = getattr(p, "lam", None)
        if hasattr(p, "mu0"):
            mu0, mu1, nu = p.mu0, p.mu1, p.nu
            kappa0, kappa1 = p.kappa0, p.kappa1
        else:  # VMF
            mu0, mu1, nu, kappa0, kappa1 = None, p.mu, None, 0.0, p.kappa
        return {
            "model": self.model,
            "mu0": _jsonable(mu0),
            "mu1": _jsonable(mu1),
            "kappa0": _jsonable(kappa0),
            "kappa1": _jsonable(kappa1),
            "lambda": _jsonable(lam),
            "nu": _jsonable(nu),
            "negLogLik": float(self.neg_log_lik),
            "iters": int(self.n_iters),
            "converged": bool(self.converged),
        }


def _jsonable(x):
    if x is None:
        return None
    a = np.asarray(x, dtype=float)
    return a.tolist() if a.ndim else float(a)


def _as_multi(data) -> np.ndarray:
    X = np.asarray(data, dtype=float)
    if X.ndim == 2:
        return X[:, None, :]
    if X.ndim != 3:
        raise ValueError("data must have shape (n, p) or (n, K, p)")
    return X


def _check_n(X: np.ndarray, minimum: int) -> None:
    if X.shape[0] < minimum:
        raise EstimationError(f"need at least {minimum} observations, got {X.shape[0]}")


# sub-solvers -------------------------------------------------------------------


def _a_inverse_banerjee(rbar: float, d: int) -> float:
    return rbar * (d - rbar * rbar) / (1.0 - rbar * rbar)


def vmf_kappa_mle(rbar: float, d: int) -> tuple[float, bool]:
    """Solve A_d(kappa) = rbar, A_d = I_{d/2}/I_{d/2-1}.

    Starts from the Banerjee approximation and refines with at most 25
    Newton steps.  Returns ``(kappa, saturated)``; kappa is capped at 1e6.
    """
    if rbar <= 0:
        return 0.0, False
    if rbar >= 1.0 - 1e-12:
        return KAPPA_CAP, True
    order = 0.5 * d - 1.0
    kappa = _a_inverse_banerjee(rbar, d)
    for _ in range(25):
        a = special.bessel_ratio(order, kappa)
        da = 1.0 - a * a - (d - 1.0) / kappa * a
        step = (a - rbar) / da
        new = kappa - step
        if not new > 0:
            new = 0.5 * kappa
        if abs(new - kappa) <= 1e-12 * kappa:
            kappa = new
            break
        kappa = new
    if kappa >= KAPPA_CAP:
        return KAPPA_CAP, True
    return float(kappa), False


@dataclass(frozen=True)
class DirectionFit:
    mean: np.ndarray | None
    kappa: float
    saturated: bool = False

    @property
    def mean_defined(self) -> bool:
        return self.mean is not None


def fit_vmf_mle(Y) -> DirectionFit:
    """vMF maximum likelihood for unit vectors in R^d (rows of ``Y``)."""
    Y = np.asarray(Y, dtype=float)
    n, d = Y.shape
    if n < 2:
        raise EstimationError("need at least 2 observations")
    total = Y.sum(axis=0)
    r = np.linalg.norm(total)
    if r <= 1e-14 * n:
        return DirectionFit(None, 0.0)
    kappa, sat = vmf_kappa_mle(r / n, d)
    return DirectionFit(total / r, kappa, sat)


def fit_von_mises_mle(angles) -> tuple[float | None, float, dict]:
    """Von Mises MLE: circular mean and the Newton-refined Banerjee concentration.

    Returns ``(zeta, kappa, flags)``; ``zeta`` is None when the resultant
    vanishes, and ``flags["saturated"]`` marks the 1e6 cap.
    """
    a = np.asarray(angles, dtype=float)
    fit = fit_vmf_mle(np.column_stack([np.cos(a), np.sin(a)]))
    flags = {"saturated": fit.saturated, "zeta_undefined": not fit.mean_defined}
    zeta = None if fit.mean is None else float(math.atan2(fit.mean[1], fit.mean[0]))
    return zeta, fit.kappa, flags


def _vertical_moments(kappa0: float, nu: float, p: int) -> np.ndarray:
    """E[s^k], k = 0..4, under exp(-kappa0 (s - nu)^2) (1 - s^2)^{(p-3)/2} on [-1, 1]."""
    if p == 3:
        sd = 1.0 / math.sqrt(2.0 * kappa0)
        return np.array(special.trunc_normal_moments(float(nu), sd, -1.0, 1.0, order=4))
    theta, w = _theta_nodes(kappa0, nu, p)
    s = np.cos(theta)
    log_f = -kappa0 * (s - nu) ** 2 + (p - 2) * np.log(np.maximum(np.sin(theta), 1e-300))
    f = w * np.exp(log_f - log_f.max())
    f /= f.sum()
    return np.array([np.sum(f * s**k) for k in range(5)])


def _vertical_nll(s: np.ndarray, kappa0: float, nu: float, p: int) -> float:
    return float(kappa0 * np.sum((s - nu) ** 2) + s.size * log_vertical_integral(kappa0, nu, p))


def fit_trunc_normal_mle(s, p: int = 3, nu_fixed: float | None = None) -> tuple[float, float, dict]:
    """MLE of (nu, kappa0) for exp(-kappa0 (s - nu)^2) on [-1, 1] (a truncated normal for p = 3).

    For p > 3 the parameter-free weight (1 - s^2)^{(p-3)/2} enters the
    normalizer.  The log-likelihood is concave in the natural parameters
    (theta1, theta2) = (2 kappa0 nu, kappa0), so Newton's method with a
    backtracking line search converges from the untruncated moment start.
    With ``nu_fixed`` only kappa0 is estimated.
    """
    s = np.asarray(s, dtype=float)
    n = s.size
    if n < 3:
        raise EstimationError("need at least 3 values")
    var = float(np.var(s))
    # rounding leaves ~1e-33 for constant input
    if var <= 1e-26:
        raise EstimationError("zero-variance vertical component")
    t1, t2 = np.sum(s), np.sum(s * s)

    def loglik(th):
        if th[1] <= 0:
            return -math.inf
        k0 = th[1]
        nu = th[0] / (2.0 * k0)
        return th[0] * t1 - th[1] * t2 - n * (k0 * nu * nu + log_vertical_integral(k0, nu, p))

    if nu_fixed is None:
        k0 = 0.5 / var
        theta = np.array([2.0 * k0 * float(np.mean(s)), k0])
    else:
        k0 = 0.5 / max(float(np.mean((s - nu_fixed) ** 2)), 1e-300)
        theta = np.array([2.0 * k0 * nu_fixed, k0])
    start_ll = loglik(theta)
    ll = start_ll
    flags = {"saturated": False, "converged": False}
    for _ in range(100):
        k0 = theta[1]
        nu = theta[0] / (2.0 * k0)
        m = _vertical_moments(k0, nu, p)
        # sufficient statistics (s, -s^2); covariance is the negative Hessian
        if nu_fixed is None:
            grad = np.array([t1 - n * m[1], -t2 + n * m[2]])
            cov = np.array([[m[2] - m[1] ** 2, -(m[3] - m[1] * m[2])], [-(m[3] - m[1] * m[2]), m[4] - m[2] ** 2]])
            det = cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
            if det > 0:
                step = np.array([cov[1, 1] * grad[0] - cov[0, 1] * grad[1], cov[0, 0] * grad[1] - cov[0, 1] * grad[0]]) / (n * det)
            else:
                step = grad / n
        else:
            # theta = kappa0 (2 nu, 1); derivative along that ray
            u = np.array([2.0 * nu_fixed, 1.0])
            g = u @ np.array([t1 - n * m[1], -t2 + n * m[2]])
            cov = np.array([[m[2] - m[1] ** 2, -(m[3] - m[1] * m[2])], [-(m[3] - m[1] * m[2]), m[4] - m[2] ** 2]])
            h = n * (u @ cov @ u)
            step = (g / h) * u if h > 0 else 0.0 * u
        t = 1.0
        while True:
            cand = theta + t * step
            cll = loglik(cand)
            if cll >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        if not np.isfinite(cll):
            break
        done = np.max(np.abs(cand - theta) / np.maximum(np.abs(theta), 1.0)) < 1e-12
        theta, ll = cand, max(cll, ll)
        if done:
            flags["converged"] = True
            break
        if theta[1] >= KAPPA_CAP:
            theta = theta * (KAPPA_CAP / theta[1])
            flags["saturated"] = True
            break
    k0 = float(theta[1])
    nu = float(theta[0] / (2.0 * k0)) if nu_fixed is None else float(nu_fixed)
    nu = min(max(nu, -_NU_EDGE), _NU_EDGE)
    flags["improved"] = ll >= start_ll
    return nu, k0, flags


@dataclass(frozen=True)
class MvmFit:
    zeta: np.ndarray
    kappa1: np.ndarray
    lam: np.ndarray


def _circular_means(phi: np.ndarray) -> np.ndarray:
    return np.arctan2(np.mean(np.sin(phi), axis=0), np.mean(np.cos(phi), axis=0))


def fit_mvm_moment(angles) -> MvmFit:
    """Moment estimates of the sine-model multivariate von Mises.

    zeta_j are circular means and, with S the covariance-like matrix of
    sin(phi_j - zeta_j), kappa1_j = (S^{-1})_jj and lambda_jk = -(S^{-1})_jk.
    The minus sign makes diag(kappa1) - Lambda the precision matrix of the
    large-concentration normal approximation.
    """
    phi = np.asarray(angles, dtype=float)
    n, K = phi.shape
    if n <= K:
        raise EstimationError("need more observations than angles")
    zeta = _circular_means(phi)
    sn = np.sin(phi - zeta)
    S = sn.T @ sn / n
    d = np.sqrt(np.diag(S))
    corr = S / np.outer(d, d)
    off = np.abs(corr - np.eye(K))
    if np.any(d == 0) or np.linalg.cond(S) > 1e12:
        j, k = np.unravel_index(np.argmax(off), off.shape)
        raise EstimationError(f"sine covariance is singular: angles {j} and {k} are (nearly) collinear")
    P = np.linalg.inv(S)
    kappa1 = np.diag(P).copy()
    lam = -(P - np.diag(np.diag(P)))
    return MvmFit(zeta, kappa1, 0.5 * (lam + lam.T))


def _mvm_nll_terms(phi: np.ndarray):
    n, K = phi.shape

    def nll_grad(zeta, kappa1, lam):
        th = phi - zeta
        c, sn = np.cos(th), np.sin(th)
        log_t3, e_cos, e_ss = t3_moments(kappa1, lam)
        data = np.sum(c @ kappa1) + 0.5 * np.einsum("ij,jk,ik->", sn, lam, sn)
        nll = -data + n * log_t3
        g_kappa = -c.sum(axis=0) + n * e_cos
        ss = sn.T @ sn
        g_lam = -ss + n * e_ss
        coupling = sn @ lam
        g_zeta = -(kappa1 * sn.sum(axis=0) - np.sum(c * coupling, axis=0))
        return nll, g_zeta, g_kappa, g_lam

    return nll_grad


def fit_mvm_mle(angles, start: MvmFit | None = None) -> tuple[MvmFit, float]:
    """Exact maximum likelihood for the sine-model multivariate von Mises (K <= 3).

    Quasi-Newton on (zeta, log kappa1, lambda_{k<l}) with analytic
    gradients (the torus-integral moments).  Returns the fit and its NLL.
    """
    phi = np.asarray(angles, dtype=float)
    n, K = phi.shape
    if K > 3:
        raise UnsupportedModelError("exact multivariate von Mises likelihood is limited to K <= 3")
    iu = np.triu_indices(K, 1)
    if start is None:
        try:
            start = fit_mvm_moment(phi)
        except EstimationError:
            start = MvmFit(_circular_means(phi), np.ones(K), np.zeros((K, K)))
    f = _mvm_nll_terms(phi)

    def unpack(v):
        zeta = v[:K]
        kappa1 = np.exp(v[K : 2 * K])
        lam = np.zeros((K, K))
        lam[iu] = v[2 * K :]
        lam = lam + lam.T
        return zeta, kappa1, lam

    def obj(v):
        zeta, kappa1, lam = unpack(v)
        nll, gz, gk, gl = f(zeta, kappa1, lam)
        return nll, np.concatenate([gz, gk * kappa1, gl[iu]])

    v0 = np.concatenate([start.zeta, np.log(np.maximum(start.kappa1, 1e-8)), start.lam[iu]])
    res = optimize.minimize(obj, v0, jac=True, method="L-BFGS-B", options={"maxiter": 500, "gtol": 1e-9})
    v = res.x if res.fun <= obj(v0)[0] else v0
    zeta, kappa1, lam = unpack(v)
    return MvmFit(np.mod(zeta + math.pi, 2.0 * math.pi) - math.pi, kappa1, lam), float(min(res.fun, obj(v0)[0]))


# first-kind models ---------------------------------------------------------------


def update_mu0_step1(data, nu, weights=None) -> np.ndarray:
    """Axis update given the latitude cosines.

    Minimizes ``sum_k w_k / n ||X_k' mu0 - nu_k 1||^2`` over unit ``mu0``.
    Stationarity gives ``mu0 = (S - lambda I)^{-1} b`` with
    ``S = sum_k w_k X_k X_k' / n`` and ``b = sum_k w_k nu_k xbar_k``; the
    multiplier is the root below the smallest eigenvalue of
    ``b'(S - lambda I)^{-2} b = 1``, found by bisection to 1e-12.  When every
    ``nu_k`` is 0 the answer is the smallest-eigenvalue eigenvector.  The
    sign is chosen so that the weighted mean of ``mu0'x`` is non-negative.
    """
    X = _as_multi(data)
    n, K, p = X.shape
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (K,))
    w = np.ones(K) if weights is None else np.asarray(weights, dtype=float)
    S = np.einsum("k,nki,nkj->ij", w, X, X) / n
    xbar = X.mean(axis=0)  # (K, p)
    b = (w * nu) @ xbar
    evals, evecs = np.linalg.eigh(S)
    c = evecs.T @ b
    bnorm = float(np.linalg.norm(b))
    if bnorm < 1e-14:
        mu0 = evecs[:, 0]
    else:
        lam_s = evals[0]

        def f(lam):
            return float(np.sum(c * c / (evals - lam) ** 2) - 1.0)

        # f(lam_s - |b|) <= 0 always, so this lower end brackets the root
        lo = min(-float(np.sum(nu**2 * w) * (xbar * xbar).sum(axis=1).max()), lam_s - bnorm)
        hi_gap = 1e-14 * max(1.0, abs(lam_s))
        hi = lam_s - hi_gap
        if f(lo) > 0:
            raise EstimationError("axis update: no sign change in the multiplier bracket")
        if f(hi) < 0:
            # degenerate case: b has (almost) no component on the smallest eigenvector
            rest = np.where(np.arange(p) == 0, 0.0, c / np.where(np.arange(p) == 0, 1.0, evals - lam_s))
            tail = math.sqrt(max(0.0, 1.0 - float(rest @ rest)))
            mu0 = evecs @ rest + tail * evecs[:, 0]
        else:
            lam_hat = optimize.bisect(f, lo, hi, xtol=1e-12, maxiter=400)
            mu0 = evecs @ (c / (evals - lam_hat))
    mu0 = unit(mu0)
    if float(np.sum(w * (X @ mu0).mean(axis=0))) < 0:
        mu0 = -mu0
    return mu0


@dataclass(frozen=True)
class Step2Result:
    mu1: np.ndarray
    kappa0: float
    kappa1: float
    nu: float
    nll: float
    converged: bool
    x: np.ndarray  # optimizer coordinates, for warm starts


def _nelder_mead(fun: Callable, x0: np.ndarray, step: float, max_evals: int, xatol=1e-9, fatol=1e-10):
    x0 = np.asarray(x0, dtype=float)
    simplex = np.vstack([x0] + [x0 + step * np.eye(x0.size)[i] for i in range(x0.size)])
    res = optimize.minimize(
        fun,
        x0,
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "maxfev": max_evals, "xatol": xatol, "fatol": fatol},
    )
    return res


def update_rest_step2(
    data,
    mu0,
    opts: FitOptions = FitOptions(),
    init: np.ndarray | None = None,
    kappa1_zero: bool = False,
    nu_zero: bool = False,
) -> Step2Result:
    """Update (mu1, kappa0, kappa1) of one S1 marginal given the axis.

    ``mu1 = cos(phi) mu0 + sin(phi) gamma*`` with ``gamma*`` the unit
    projection of the sample mean direction onto the complement of ``mu0``.
    The objective is the saddle-point negative log-likelihood

        n log a(kappa0, kappa1, cos phi) + kappa0 sum (mu0'x - cos phi)^2
        - kappa1 sum x'mu1(phi),

    minimized by Nelder-Mead over (phi, log kappa0, log kappa1).
    ``kappa1_zero`` fixes kappa1 = 0 (the BM special case); ``nu_zero`` fixes
    phi = pi/2.
    """
    X = np.asarray(data, dtype=float)
    n, p = X.shape
    mu0 = unit(mu0)
    xbar = X.mean(axis=0)
    if np.linalg.norm(xbar) < 1e-14:
        raise EstimationError("sample mean vanishes; gamma0 is undefined")
    g = project_complement(mu0, xbar)
    # re-project: a short mean vector leaves rounding error along mu0
    gamma = unit(project_complement(mu0, unit(g))) if np.linalg.norm(g) > 1e-14 else frame(mu0)[:, 1]
    s = X @ mu0
    gcoord = X @ gamma
    sum_s, sum_s2, sum_g = float(s.sum()), float((s * s).sum()), float(gcoord.sum())

    def unpack(v):
        i = 0
        if nu_zero:
            phi = 0.5 * math.pi
        else:
            phi = v[0]
            i = 1
        k0 = math.exp(v[i])
        k1 = 0.0 if kappa1_zero else math.exp(v[i + 1])
        return phi, k0, k1

    def nll(v):
        phi, k0, k1 = unpack(v)
        if k0 > KAPPA_CAP or k1 > KAPPA_CAP or k0 < 1e-10:
            return math.inf
        c, sn = math.cos(phi), math.sin(phi)
        nu = min(max(c, -_NU_EDGE), _NU_EDGE)
        try:
            la = s1_log_a(k0, k1, nu, p)
        except (ValueError, ArithmeticError):
            return math.inf
        return n * la + k0 * (sum_s2 - 2.0 * c * sum_s + n * c * c) - k1 * (c * sum_s + sn * sum_g)

    if init is None:
        nu0 = float(np.clip(np.mean(s) if opts.nu_init is None else opts.nu_init, -0.99, 0.99))
        k0 = 0.5 / max(float(np.var(s)), 1e-8)
        r = np.linalg.norm(project_complement(mu0, X).mean(axis=0))
        k1 = max(vmf_kappa_mle(min(r, 0.999), p - 1)[0], 0.1)
        x0 = []
        if not nu_zero:
            x0.append(math.acos(nu0))
        x0.append(math.log(min(k0, 1e5)))
        if not kappa1_zero:
            x0.append(math.log(k1))
        init = np.array(x0)
    res = _nelder_mead(nll, init, opts.simplex_step, opts.max_evals)
    best = res.x if res.fun <= nll(init) else init
    phi, k0, k1 = unpack(best)
    nu = min(max(math.cos(phi), -_NU_EDGE), _NU_EDGE)
    mu1 = unit(math.cos(phi) * mu0 + math.sin(phi) * gamma)
    return Step2Result(mu1, k0, k1, float(mu0 @ mu1), float(nll(best)), bool(res.success), np.asarray(best))


def _initial_axis(X3: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest-eigenvector axis and the per-marginal mean latitude cosines."""
    mu0 = update_mu0_step1(X3, 0.0)
    nu = (X3 @ mu0).mean(axis=0)
    return mu0, np.clip(nu, -0.99, 0.99)


def _candidate_axes(X3: np.ndarray) -> list[np.ndarray]:
    """Profile starts: the smallest-eigenvector axis, the axis update at its
    mean latitudes, and the same refinement of the other eigenvectors of the
    pooled scatter matrix.

    Tight clusters from K = 2 marginals always lie near a common great
    circle, whose normal is the smallest eigenvector; the other eigenvectors
    cover the true axis in that case.
    """
    n, K, p = X3.shape
    mu0, nu = _initial_axis(X3)
    S = np.einsum("nki,nkj->ij", X3, X3) / (n * K)
    cands = [mu0, update_mu0_step1(X3, nu)]
    for e in np.linalg.eigh(S)[1].T[1:]:
        cands.append(update_mu0_step1(X3, np.clip((X3 @ e).mean(axis=0), -0.99, 0.99)))
    return cands


@dataclass
class _AltState:
    mu0: np.ndarray
    steps: list
    nll: float

    @property
    def nu(self) -> np.ndarray:
        return np.array([st.nu for st in self.steps])

    @property
    def weights(self) -> np.ndarray:
        return np.array([st.kappa0 for st in self.steps])


def _fit_first_kind(
    data,
    opts: FitOptions,
    kappa1_zero: bool = False,
    nu_zero: bool = False,
    fixed_mu0=None,
    label: str = "S1",
    start: FitResult | None = None,
) -> FitResult:
    """Alternate the axis update and the per-marginal Step 2 until the NLL settles.

    The alternation has several fixed points on concentrated data, so it is
    run from two starts (the smallest-eigenvector axis and the axis of the
    independent second-kind fit) and the run with the lower NLL is kept.
    A second-kind result already at hand can be passed as ``start``.
    """
    X3 = _as_multi(data)
    n, K, p = X3.shape
    _check_n(X3, p + 2)
    if fixed_mu0 is not None:
        mu0 = unit(fixed_mu0)
        starts = [(mu0, np.clip((X3 @ mu0).mean(axis=0), -0.99, 0.99))]
    else:
        starts = [_initial_axis(X3)]
        if start is not None or opts.multi_start:
            m2 = (start or _fit_second_kind(X3, "IMS2", opts, "free", "vmf")).params
            starts.append((m2.mu0, np.clip(np.atleast_1d(m2.nu), -0.99, 0.99)))
    best = None
    for mu0, nu in starts:
        if opts.nu_init is not None:
            nu = np.full(K, opts.nu_init)
        if nu_zero:
            nu = np.zeros(K)
        res = _alternate(X3, mu0, nu, opts, kappa1_zero, nu_zero, fixed_mu0 is not None, label)
        if best is None or res.neg_log_lik < best.neg_log_lik:
            best = res
    best.flags["starts"] = len(starts)
    return best


def _alternate(X3, mu0, nu, opts, kappa1_zero, nu_zero, axis_fixed, label) -> FitResult:
    """Alternating iterations from one start.

    One sweep maps the latitude vector nu to a new one (axis update at nu,
    then Step 2 per marginal).  Sweeps are accelerated by a safeguarded
    squared extrapolation of that map.  A candidate state is accepted only
    if it lowers the NLL; the run stops at the first sweep that would raise
    it, so the recorded trace is non-increasing.
    """
    n, K, p = X3.shape

    def sweep(nu_in, prev: _AltState | None) -> _AltState:
        nu_in = np.clip(nu_in, -0.99, 0.99)
        if axis_fixed:
            m = mu0
        else:
            w = np.ones(K) if prev is None else prev.weights
            m = update_mu0_step1(X3, nu_in, w)
            if prev is not None and float(m @ prev.mu0) < 0 and K == 1:
                m = -m
        steps = []
        for k in range(K):
            warm = None if prev is None else prev.steps[k].x
            o = replace(opts, nu_init=float(nu_in[k]))
            steps.append(update_rest_step2(X3[:, k, :], m, o, warm, kappa1_zero, nu_zero))
        return _AltState(m, steps, float(sum(st.nll for st in steps)))

    state = sweep(nu, None)
    trace = [state.nll]
    converged = axis_fixed
    stalled = False
    n_sweeps = 1
    slack = opts.tol * max(1.0, abs(state.nll))
    while not converged and n_sweeps < opts.max_outer_iters:
        s1 = sweep(state.nu, state)
        s2 = sweep(s1.nu, s1)
        n_sweeps += 2
        r = s1.nu - state.nu
        v = s2.nu - s1.nu - r
        new = min((s1, s2), key=lambda st: st.nll)
        if opts.accelerate and np.linalg.norm(v) > 0 and not nu_zero:
            alpha = min(-float(np.linalg.norm(r) / np.linalg.norm(v)), -1.0)
            # backtrack the step length toward the plain double sweep (alpha = -1)
            for _ in range(6):
                if alpha >= -1.0:
                    break
                nu_x = state.nu - 2.0 * alpha * r + alpha * alpha * v
                if np.all(np.abs(nu_x) < 0.99):
                    sx = sweep(nu_x, s2)
                    n_sweeps += 1
                    if sx.nll < new.nll:
                        new = sx
                        break
                alpha = 0.5 * (alpha - 1.0)
        if new.nll > state.nll + slack:
            # the axis update ignores kappa1, so sweeps can climb; keep the best state
            stalled = converged = True
            break
        step = float(np.max(np.abs(new.nu - state.nu)))
        prev_nll = state.nll
        state = new
        trace.append(state.nll)
        if step < 1e-9 or abs(prev_nll - state.nll) <= slack and step < 1e-4:
            converged = True
    mu1 = np.array([st.mu1 for st in state.steps])
    k0 = np.array([st.kappa0 for st in state.steps])
    k1 = np.array([st.kappa1 for st in state.steps])
    if K == 1:
        params = S1(state.mu0, mu1[0], k0[0], k1[0])
    else:
        params = IMS1(state.mu0, mu1, k0, k1)
    return FitResult(label, params, state.nll, n_sweeps, converged, trace, {"stalled": stalled})


def fit_s1(data, opts: FitOptions = FitOptions(), start: FitResult | None = None) -> FitResult:
    """Alternating approximate MLE for S1 (saddle-point normalizing constant)."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("S1 data must have shape (n, p)")
    return _fit_first_kind(X, opts, label="S1", start=start)


def fit_ims1(data, opts: FitOptions = FitOptions(), start: FitResult | None = None) -> FitResult:
    """Alternating approximate MLE for iMS1 (kappa0-weighted axis update)."""
    return _fit_first_kind(_as_multi(data), opts, label="IMS1", start=start)


def fit_bm(data, opts: FitOptions = FitOptions(), start: FitResult | None = None) -> FitResult:
    """BM estimates: the first-kind fit with kappa1 fixed at 0.

    The returned parameters are S1/iMS1 objects with zero kappa1 so that
    the likelihood uses the same saddle-point constant as the S1 fit.
    """
    return _fit_first_kind(data, opts, kappa1_zero=True, label="BM", start=start)


def fit_vmf(data) -> FitResult:
    """vMF maximum likelihood on S^{p-1} (K = 1) or independent vMFs per marginal."""
    X3 = _as_multi(data)
    n, K, p = X3.shape
    fits = [fit_vmf_mle(X3[:, k, :]) for k in range(K)]
    nll = 0.0
    for k, f in enumerate(fits):
        mean = f.mean if f.mean is not None else np.eye(p)[0]
        nll += -(f.kappa * float(np.sum(X3[:, k, :] @ mean)) - n * special.log_vmf_integral(f.kappa, p))
    f0 = fits[0]
    params = VMF(f0.mean if f0.mean is not None else np.eye(p)[0], f0.kappa)
    res = FitResult("VMF", params, float(nll), 1, True, [float(nll)])
    if K > 1:
        res.flags["marginals"] = [VMF(f.mean if f.mean is not None else np.eye(p)[0], f.kappa) for f in fits]
    return res


# second-kind models -----------------------------------------------------------------


@dataclass(frozen=True)
class InnerFit:
    params: ModelParams
    nll: float
    state: object = None


def _horizontal_coords(X3: np.ndarray, E: np.ndarray) -> np.ndarray:
    v = X3 @ E[:, 1:]
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.where(norm > 0, v / np.where(norm > 0, norm, 1.0), 0.0)


def inner_fit_second_kind(
    data,
    mu0,
    model: str = "IMS2",
    opts: FitOptions = FitOptions(),
    vertical: str = "free",
    horizontal: str | None = None,
    warm: object = None,
) -> InnerFit:
    """Maximize the second-kind likelihood over everything but the axis.

    ``vertical``: ``"free"`` (truncated-normal MLE), ``"nu_zero"`` (nu pinned
    at 0) or ``"uniform"`` (kappa0 = 0).  ``horizontal``: ``"vmf"``
    (independent vMF/von Mises MLEs), ``"uniform"`` (kappa1 = 0),
    ``"moment"`` or ``"mle"`` (MS2 only; default from ``opts``).
    """
    X3 = _as_multi(data)
    n, K, p = X3.shape
    mu0 = unit(mu0)
    E = frame(mu0)
    if model == "MS2" and horizontal is None:
        horizontal = opts.horizontal
    horizontal = horizontal or "vmf"
    s = np.clip(X3 @ mu0, -1.0, 1.0)  # (n, K)
    nu = np.zeros(K)
    k0 = np.zeros(K)
    nll = 0.0
    for k in range(K):
        if vertical == "uniform":
            nu_k, k0_k = 0.0, 0.0
        else:
            nu_k, k0_k, _ = fit_trunc_normal_mle(s[:, k], p, nu_fixed=0.0 if vertical == "nu_zero" else None)
        nu[k], k0[k] = nu_k, k0_k
        nll += _vertical_nll(s[:, k], k0_k, nu_k, p)
    Y = _horizontal_coords(X3, E)  # (n, K, p-1)
    dirs = np.zeros((K, p - 1))
    k1 = np.zeros(K)
    lam = np.zeros((K, K))
    state = None
    if horizontal in ("vmf", "uniform"):
        for k in range(K):
            if horizontal == "vmf":
                fit = fit_vmf_mle(Y[:, k, :])
                dirs[k] = fit.mean if fit.mean is not None else np.eye(p - 1)[0]
                k1[k] = fit.kappa
            else:
                dirs[k] = np.eye(p - 1)[0]
            nll += -(k1[k] * float(np.sum(Y[:, k, :] @ dirs[k]))) + n * special.log_vmf_integral(k1[k], p - 1)
    elif horizontal in ("moment", "mle"):
        if p != 3:
            raise UnsupportedModelError("MS2 requires p = 3")
        phi = np.arctan2(Y[..., 1], Y[..., 0])
        mom = fit_mvm_moment(phi) if horizontal == "moment" or warm is None else warm
        if horizontal == "mle":
            cands = [mom]
            if warm is None:
                ind = [fit_von_mises_mle(phi[:, k]) for k in range(K)]
                cands.append(MvmFit(np.array([z if z is not None else 0.0 for z, _, _ in ind]), np.array([max(kk, 1e-6) for _, kk, _ in ind]), np.zeros((K, K))))
            fits = [fit_mvm_mle(phi, c) for c in cands]
            mvm, h_nll = min(fits, key=lambda t: t[1])
        else:
            mvm = mom
            h_nll = _mvm_nll_terms(phi)(mvm.zeta, mvm.kappa1, mvm.lam)[0]
        state = mvm
        dirs = np.column_stack([np.cos(mvm.zeta), np.sin(mvm.zeta)])
        k1, lam = mvm.kappa1, mvm.lam
        nll += h_nll
    else:
        raise ValueError(f"unknown horizontal mode {horizontal!r}")
    r = np.sqrt(np.clip(1.0 - nu * nu, 0.0, None))
    mu1 = nu[:, None] * mu0[None, :] + r[:, None] * (dirs @ E[:, 1:].T)
    if model == "MS2":
        params = MS2(mu0, mu1, k0, k1, lam)
    elif K == 1 and model == "S2":
        params = S2(mu0, mu1[0], k0[0], k1[0])
    else:
        params = IMS2(mu0, mu1, k0, k1)
    return InnerFit(params, float(nll), state)


def _tangent_point(E: np.ndarray, u: np.ndarray) -> np.ndarray:
    t = float(np.linalg.norm(u))
    if t == 0:
        return E[:, 0].copy()
    return math.cos(t) * E[:, 0] + math.sin(t) * (E[:, 1:] @ (u / t))


def profile_axis(
    objective: Callable[[np.ndarray], float],
    mu0_init,
    opts: FitOptions = FitOptions(),
    rounds: int = 8,
) -> tuple[np.ndarray, float, int, bool, list[float]]:
    """Minimize ``objective(mu0)`` over the sphere.

    Each round runs Nelder-Mead in tangent coordinates at the current
    anchor, then re-anchors at the best point; the simplex step shrinks
    tenfold per round until the axis moves less than 1e-8 rad.
    """
    mu0 = unit(mu0_init)
    best = objective(mu0)
    trace = [best]
    evals = 0
    step = opts.simplex_step
    converged = False
    for _ in range(rounds):
        E = frame(mu0)
        p = mu0.shape[0]

        def f(u):
            return objective(_tangent_point(E, u))

        budget = max(opts.max_evals - evals, 50)
        res = _nelder_mead(f, np.zeros(p - 1), step, budget, xatol=1e-8, fatol=1e-10)
        evals += res.nfev
        moved = float(np.linalg.norm(res.x))
        if res.fun < best:
            mu0 = unit(_tangent_point(E, res.x))
            best = float(res.fun)
            trace.append(best)
        if moved < 1e-8 or evals >= opts.max_evals:
            converged = moved < 1e-8
            break
        step = max(min(step, 10 * moved) * 0.1, 1e-7)
    return mu0, best, evals, converged, trace


def _fit_second_kind(
    data,
    model: str,
    opts: FitOptions,
    vertical: str = "free",
    horizontal: str | None = None,
    fixed_mu0=None,
    mu0_init=None,
) -> FitResult:
    X3 = _as_multi(data)
    n, K, p = X3.shape
    _check_n(X3, p + 2)
    if model == "MS2" and p != 3:
        raise UnsupportedModelError("MS2 requires p = 3")

    def objective(mu0):
        try:
            return inner_fit_second_kind(X3, mu0, model, opts, vertical, horizontal).nll
        except (EstimationError, ValueError, np.linalg.LinAlgError):
            return math.inf

    if fixed_mu0 is not None:
        inner = inner_fit_second_kind(X3, fixed_mu0, model, opts, vertical, horizontal)
        return FitResult(model, inner.params, inner.nll, 1, True, [inner.nll])
    if mu0_init is None:
        cands = _candidate_axes(X3)
        # of the secondary eigenvector starts only the best-scoring one is searched
        starts = cands[:2] + ([min(cands[2:], key=objective)] if len(cands) > 2 else [])
    else:
        starts = [unit(mu0_init)]
    starts = [m for m in starts if math.isfinite(objective(m))]
    if not starts:
        raise EstimationError("profile likelihood is not finite at any starting axis")
    # the profile surface has local minima; keep the best of the local searches
    best = None
    for start in starts:
        run = profile_axis(objective, start, opts)
        if best is None or run[1] < best[1]:
            best = run
    mu0, nll, evals, conv, trace = best
    inner = inner_fit_second_kind(X3, mu0, model, opts, vertical, horizontal)
    return FitResult(model, inner.params, inner.nll, len(trace), conv, trace, {"evals": evals})


def fit_s2(data, opts: FitOptions = FitOptions()) -> FitResult:
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("S2 data must have shape (n, p)")
    return _fit_second_kind(X, "S2", opts)


def fit_ims2(data, opts: FitOptions = FitOptions()) -> FitResult:
    return _fit_second_kind(_as_multi(data), "IMS2", opts)


def fit_ms2(data, opts: FitOptions = FitOptions()) -> FitResult:
    """Profile-likelihood fit of MS2.

    With ``opts.horizontal == "moment"`` the horizontal parameters at each
    axis are the closed-form moment estimates.  With ``"mle"`` the axis is
    first located with the moment estimator and with the iMS2 fit; the
    exact-likelihood refinement is then profiled from the better of the
    two, so the result never falls below the iMS2 likelihood.
    """
    X3 = _as_multi(data)
    if opts.horizontal == "moment":
        return _fit_second_kind(X3, "MS2", opts)
    mom = _fit_second_kind(X3, "MS2", replace(opts, horizontal="moment"))
    ind = _fit_second_kind(X3, "IMS2", opts)
    starts = [mom.params.mu0, ind.params.mu0]
    vals = [inner_fit_second_kind(X3, m, "MS2", opts, horizontal="mle").nll for m in starts]
    start = starts[int(np.argmin(vals))]
    res = _fit_second_kind(X3, "MS2", opts, horizontal="mle", mu0_init=start)
    res.flags["start_nll"] = float(min(vals))
    return res


def fit_model(model: str, data, opts: FitOptions = FitOptions()) -> FitResult:
    """Dispatch by model name (case-insensitive)."""
    m = model.upper()
    table = {
        "S1": fit_s1,
        "IMS1": fit_ims1,
        "BM": fit_bm,
        "S2": fit_s2,
        "IMS2": fit_ims2,
        "MS2": fit_ms2,
    }
    if m == "VMF":
        return fit_vmf(data)
    if m not in table:
        raise ValueError(f"unknown model {model!r}")
    return table[m](data, opts)
