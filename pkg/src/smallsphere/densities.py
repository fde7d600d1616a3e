"""Densities of the vMF, Bingham-Mardia and small-sphere families.

All densities are with respect to surface measure on S^{p-1} (or the
product measure on (S^{p-1})^K).  Univariate models take data of shape
``(p,)`` or ``(n, p)``; the multivariate families take ``(K, p)`` or
``(n, K, p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import special
from .saddlepoint import s1_log_a, s1_log_a_exact
from .sphere import frame, project_complement, unit


class UnsupportedModelError(ValueError):
    pass


def _vec(x) -> np.ndarray:
    return unit(np.asarray(x, dtype=float))


def _check_nu(nu) -> None:
    if np.any(np.abs(nu) >= 1.0):
        raise ValueError("mu0 . mu1 must lie strictly inside (-1, 1)")


@dataclass(frozen=True, eq=False)
class VMF:
    mu: np.ndarray
    kappa: float
    kind = "VMF"

    def __post_init__(self):
        object.__setattr__(self, "mu", _vec(self.mu))
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")

    @property
    def p(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True, eq=False)
class BM:
    mu: np.ndarray
    kappa: float
    nu: float
    kind = "BM"

    def __post_init__(self):
        object.__setattr__(self, "mu", _vec(self.mu))
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        _check_nu(self.nu)

    @property
    def p(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True, eq=False)
class S1:
    """Small-sphere distribution of the first kind."""

    mu0: np.ndarray
    mu1: np.ndarray
    kappa0: float
    kappa1: float
    kind = "S1"
    # the second-kind families admit the kappa0 = 0 limit (uniform vertical part)
    _min_kappa0 = "positive"

    def __post_init__(self):
        object.__setattr__(self, "mu0", _vec(self.mu0))
        object.__setattr__(self, "mu1", _vec(self.mu1))
        if self.mu0.shape != self.mu1.shape:
            raise ValueError("mu0 and mu1 must have the same dimension")
        if self.kappa0 < 0 or (self.kappa0 == 0 and self._min_kappa0 == "positive"):
            raise ValueError("kappa0 must be positive")
        if self.kappa1 < 0:
            raise ValueError("kappa1 must be non-negative")
        _check_nu(self.nu)

    @property
    def p(self) -> int:
        return self.mu0.shape[0]

    @property
    def nu(self) -> float:
        return float(self.mu0 @ self.mu1)


@dataclass(frozen=True, eq=False)
class S2(S1):
    """Small-sphere distribution of the second kind (kappa0 = 0 allowed)."""

    kind = "S2"
    _min_kappa0 = "non-negative"


@dataclass(frozen=True, eq=False)
class IMS1:
    """K independent S1 marginals sharing the axis ``mu0``."""

    mu0: np.ndarray
    mu1: np.ndarray  # (K, p)
    kappa0: np.ndarray  # (K,)
    kappa1: np.ndarray  # (K,)
    kind = "IMS1"
    _marginal = S1
    _min_kappa0 = "positive"

    def __post_init__(self):
        object.__setattr__(self, "mu0", _vec(self.mu0))
        object.__setattr__(self, "mu1", _vec(np.atleast_2d(self.mu1)))
        object.__setattr__(self, "kappa0", np.atleast_1d(np.asarray(self.kappa0, dtype=float)))
        object.__setattr__(self, "kappa1", np.atleast_1d(np.asarray(self.kappa1, dtype=float)))
        K = self.mu1.shape[0]
        if self.mu1.shape[1] != self.mu0.shape[0]:
            raise ValueError("mu1 rows must match the dimension of mu0")
        if self.kappa0.shape != (K,) or self.kappa1.shape != (K,):
            raise ValueError("kappa0 and kappa1 need one entry per marginal")
        if np.any(self.kappa0 < 0) or np.any(self.kappa1 < 0):
            raise ValueError("need kappa0 > 0 and kappa1 >= 0")
        if self._min_kappa0 == "positive" and np.any(self.kappa0 == 0):
            raise ValueError("kappa0 must be positive")
        _check_nu(self.nu)

    @property
    def p(self) -> int:
        return self.mu0.shape[0]

    @property
    def K(self) -> int:
        return self.mu1.shape[0]

    @property
    def nu(self) -> np.ndarray:
        return self.mu1 @ self.mu0

    def marginals(self) -> list:
        return [self._marginal(self.mu0, m, k0, k1) for m, k0, k1 in zip(self.mu1, self.kappa0, self.kappa1)]


@dataclass(frozen=True, eq=False)
class IMS2(IMS1):
    kind = "IMS2"
    _marginal = S2
    _min_kappa0 = "non-negative"


@dataclass(frozen=True, eq=False)
class MS2(IMS1):
    """Multivariate S2 on (S^2)^K with sine-coupled horizontal angles."""

    lam: np.ndarray = field(default=None)  # (K, K) symmetric, zero diagonal
    kind = "MS2"
    _marginal = S2
    _min_kappa0 = "non-negative"

    def __post_init__(self):
        super().__post_init__()
        if self.p != 3:
            raise UnsupportedModelError("MS2 is defined for p = 3 only")
        lam = np.zeros((self.K, self.K)) if self.lam is None else np.asarray(self.lam, dtype=float)
        if lam.shape != (self.K, self.K):
            raise ValueError("Lambda must be K x K")
        if not np.allclose(lam, lam.T, atol=1e-12) or np.any(np.diag(lam) != 0):
            raise ValueError("Lambda must be symmetric with zero diagonal")
        object.__setattr__(self, "lam", lam)

    def independent(self) -> IMS2:
        return IMS2(self.mu0, self.mu1, self.kappa0, self.kappa1)


ModelParams = Union[VMF, BM, S1, S2, IMS1, IMS2, MS2]


# normalizing constants ----------------------------------------------------


def log_vertical_integral(kappa0: float, nu: float, p: int) -> float:
    """log of the integral over [-1, 1] of exp(-kappa0 (s - nu)^2) (1 - s^2)^{(p-3)/2} ds."""
    if kappa0 == 0:
        return special.log_sphere_area(p) - special.log_sphere_area(p - 1)
    if p == 3:
        r = math.sqrt(2.0 * kappa0)
        return 0.5 * math.log(math.pi / kappa0) + special.log_normal_interval(-(1 + nu) * r, (1 - nu) * r)
    # s = cos(theta) turns the Jacobian into the smooth weight sin(theta)^{p-2}
    from .saddlepoint import _theta_nodes

    theta, w = _theta_nodes(kappa0, nu, p)
    log_f = -kappa0 * (np.cos(theta) - nu) ** 2 + (p - 2) * np.log(np.maximum(np.sin(theta), 1e-300))
    m = np.max(log_f)
    return float(m + np.log(np.sum(w * np.exp(log_f - m))))


def _t3_grid_size(kappa1: np.ndarray, lam: np.ndarray, cap: int) -> int:
    band = float(np.max(kappa1 + np.sum(np.abs(lam), axis=1)))
    return int(min(cap, 48 + 2 * math.ceil(band + 6 * math.sqrt(band + 1))))


def log_t3(kappa1, lam) -> float:
    """log of the torus integral of exp(kappa1' cos(theta) + 1/2 sin(theta)' Lambda sin(theta)).

    The last angle is integrated in closed form (a Bessel I_0 of the
    combined resultant); the remaining K - 1 <= 2 angles use the periodic
    trapezoid rule, which converges geometrically for this integrand.
    """
    return t3_moments(kappa1, lam)[0]


def t3_moments(kappa1, lam) -> tuple[float, np.ndarray, np.ndarray]:
    """``(log T3, E[cos theta], E[sin theta sin theta'])`` under the normalized mvM.

    The expectations are the gradient of log T3 in kappa1 and (off the
    diagonal) in lambda_kl for k < l.
    """
    kappa1 = np.asarray(kappa1, dtype=float)
    lam = np.asarray(lam, dtype=float)
    K = kappa1.shape[0]
    log_2pi = math.log(2.0 * math.pi)
    if K == 1:
        a = float(special.bessel_ratio(0, kappa1[0]))
        e_sin2 = 1.0 - float(_e_cos2(kappa1, np.array([a]), np.ones(1))[0])
        return log_2pi + special.log_bessel_i(0, kappa1[0]), np.array([a]), np.array([[e_sin2]])
    if K > 3:
        raise UnsupportedModelError("normalized MS2 evaluation is limited to K <= 3")
    n = _t3_grid_size(kappa1, lam, cap=4096 if K == 2 else 768)
    grid = 2.0 * math.pi * np.arange(n) / n
    mesh = np.meshgrid(*([grid] * (K - 1)), indexing="ij")
    th = np.stack([m.ravel() for m in mesh], axis=1)  # (n^{K-1}, K-1)
    sin_t = np.sin(th)
    cos_t = np.cos(th)
    head = K - 1
    expo = cos_t @ kappa1[:head] + 0.5 * np.einsum("ij,jk,ik->i", sin_t, lam[:head, :head], sin_t)
    coupling = sin_t @ lam[:head, head]
    resultant = np.hypot(kappa1[head], coupling)
    log_f = expo + log_2pi + special.log_bessel_i(0, resultant)
    m = np.max(log_f)
    w = np.exp(log_f - m)
    total = np.sum(w)
    log_cell = head * math.log(2.0 * math.pi / n)
    log_t3_value = float(m + math.log(total) + log_cell)
    w = w / total
    # conditional moments of the last angle given the others
    a = special.bessel_ratio(0, resultant)
    safe_r = np.where(resultant > 0, resultant, 1.0)
    e_cos_last = a * kappa1[head] / safe_r
    e_sin_last = a * coupling / safe_r
    e_sin2_last = 1.0 - _e_cos2(resultant, a, kappa1[head] / safe_r)
    e_cos = np.empty(K)
    e_cos[:head] = w @ cos_t
    e_cos[head] = w @ e_cos_last
    e_ss = np.empty((K, K))
    e_ss[:head, :head] = (sin_t * w[:, None]).T @ sin_t
    e_ss[:head, head] = e_ss[head, :head] = (sin_t * w[:, None]).T @ e_sin_last
    e_ss[head, head] = w @ e_sin2_last
    return log_t3_value, e_cos, e_ss


def _e_cos2(r: np.ndarray, a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """E[cos^2 b] for b with density proportional to exp(r cos(b - beta)), cos(beta) = c.

    With A2 = I_2(r)/I_0(r) = 1 - 2 A1 / r, E[cos 2(b - beta)] = A2 and
    E[cos^2 b] = (1 + A2 cos 2 beta) / 2.
    """
    safe = np.where(r > 0, r, 1.0)
    a2 = np.where(r > 0, 1.0 - 2.0 * a / safe, 0.0)
    return 0.5 * (1.0 + a2 * (2.0 * c * c - 1.0))


def log_norm_const(params: ModelParams, method: str = "saddlepoint") -> float:
    """log of the normalizing constant of ``params`` (surface measure).

    ``method`` only affects S1/iMS1: ``"saddlepoint"`` (default, the value the
    estimators use) or ``"quadrature"``.
    """
    if isinstance(params, VMF):
        return float(special.log_vmf_integral(params.kappa, params.p))
    if isinstance(params, BM):
        return log_vertical_integral(params.kappa, params.nu, params.p) + special.log_sphere_area(params.p - 1)
    if isinstance(params, S2):
        return log_vertical_integral(params.kappa0, params.nu, params.p) + float(
            special.log_vmf_integral(params.kappa1, params.p - 1)
        )
    if isinstance(params, S1):
        if method == "saddlepoint":
            return s1_log_a(params.kappa0, params.kappa1, params.nu, params.p)
        if method == "quadrature":
            return s1_log_a_exact(params.kappa0, params.kappa1, params.nu, params.p)
        raise ValueError(f"unknown method {method!r}")
    if isinstance(params, MS2):
        vert = sum(log_vertical_integral(k0, nu, 3) for k0, nu in zip(params.kappa0, params.nu))
        return vert + log_t3(params.kappa1, params.lam)
    if isinstance(params, IMS1):
        return sum(log_norm_const(m, method) for m in params.marginals())
    raise TypeError(f"unknown parameter type {type(params).__name__}")


# log densities -------------------------------------------------------------


def _s2_horizontal(mu0: np.ndarray, mu1: np.ndarray, X: np.ndarray) -> np.ndarray:
    """mu1' P x / sqrt(mu1' P mu1 x' P x) with the 0/0 = 0 convention."""
    w = project_complement(mu0, mu1)
    u = project_complement(mu0, X)
    den = np.linalg.norm(w) * np.linalg.norm(u, axis=-1)
    num = u @ w
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def log_kernel(params: ModelParams, x) -> np.ndarray:
    """Unnormalized log density (the exponent)."""
    X = np.asarray(x, dtype=float)
    if isinstance(params, VMF):
        _check_dim(X, params.p)
        return params.kappa * (X @ params.mu)
    if isinstance(params, BM):
        _check_dim(X, params.p)
        return -params.kappa * (X @ params.mu - params.nu) ** 2
    if isinstance(params, S2):
        _check_dim(X, params.p)
        return -params.kappa0 * (X @ params.mu0 - params.nu) ** 2 + params.kappa1 * _s2_horizontal(
            params.mu0, params.mu1, X
        )
    if isinstance(params, S1):
        _check_dim(X, params.p)
        return -params.kappa0 * (X @ params.mu0 - params.nu) ** 2 + params.kappa1 * (X @ params.mu1)
    if isinstance(params, MS2):
        _check_multi(X, params)
        s = X @ params.mu0
        vert = -np.sum(params.kappa0 * (s - params.nu) ** 2, axis=-1)
        phi, zeta = horizontal_angles(params.mu0, params.mu1, X)
        th = phi - zeta
        sin_t = np.sin(th)
        horiz = np.cos(th) @ params.kappa1 + 0.5 * np.einsum("...i,ij,...j->...", sin_t, params.lam, sin_t)
        return vert + horiz
    if isinstance(params, IMS1):
        _check_multi(X, params)
        return sum(log_kernel(m, X[..., k, :]) for k, m in enumerate(params.marginals()))
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def log_density(params: ModelParams, x, method: str = "saddlepoint"):
    """Log density at ``x`` (one observation or a batch)."""
    out = log_kernel(params, x) - log_norm_const(params, method)
    return out if np.ndim(out) else float(out)


def log_likelihood(params: ModelParams, X, method: str = "saddlepoint") -> float:
    return float(np.sum(log_density(params, X, method)))


def _check_dim(X: np.ndarray, p: int) -> None:
    if X.shape[-1] != p:
        raise ValueError(f"expected points in R^{p}, got trailing dimension {X.shape[-1]}")


def _check_multi(X: np.ndarray, params: IMS1) -> None:
    if X.ndim < 2 or X.shape[-2:] != (params.K, params.p):
        raise ValueError(f"expected trailing shape ({params.K}, {params.p}), got {X.shape}")


def horizontal_angles(mu0, mu1, X) -> tuple[np.ndarray, np.ndarray]:
    """Angles of each marginal's complement direction in the common frame of ``mu0`` (p = 3).

    Returns ``(phi, zeta)`` with ``phi`` shaped like ``X`` without its last
    axis and ``zeta`` the angles of the ``mu1`` rows.  Points at the poles get
    angle 0, the 0/0 = 0 convention.
    """
    E = frame(mu0)
    if E.shape[0] != 3:
        raise UnsupportedModelError("horizontal angles are defined for p = 3")
    X = np.asarray(X, dtype=float)
    v = X @ E[:, 1:]
    phi = np.arctan2(v[..., 1], v[..., 0])
    m = np.atleast_2d(mu1) @ E[:, 1:]
    zeta = np.arctan2(m[:, 1], m[:, 0])
    return phi, zeta


# reparametrizations ---------------------------------------------------------


def to_fisher_bingham(params: S1) -> tuple[np.ndarray, np.ndarray]:
    """(gamma, A) with S1 kernel = gamma' x - x' A x + const."""
    gamma = 2.0 * params.kappa0 * params.nu * params.mu0 + params.kappa1 * params.mu1
    A = params.kappa0 * np.outer(params.mu0, params.mu0)
    return gamma, A


def fisher_bingham_log_const(params: S1, method: str = "saddlepoint") -> float:
    """log alpha(gamma, A) = log a + kappa0 nu^2."""
    return log_norm_const(params, method) + params.kappa0 * params.nu**2


@dataclass(frozen=True, eq=False)
class PrecisionApprox:
    precision: np.ndarray
    correlation: np.ndarray
    positive_definite: bool


def ms2_precision_approx(params: MS2) -> PrecisionApprox:
    """Large-concentration normal approximation of the MS2 horizontal angles.

    Precision matrix with diagonal kappa1 and off-diagonal -lambda; the
    correlation matrix comes from its inverse.  When the precision is not
    positive definite the approximation is invalid and the flag is cleared
    (the correlation entries are then NaN).
    """
    prec = np.diag(params.kappa1) - params.lam
    eig = np.linalg.eigvalsh(prec)
    pd = bool(np.all(eig > 0))
    if pd:
        cov = np.linalg.inv(prec)
        d = np.sqrt(np.diag(cov))
        corr = cov / np.outer(d, d)
    else:
        corr = np.full_like(prec, np.nan)
    return PrecisionApprox(prec, corr, pd)


def ms2_as_gms2_blocks(params: MS2) -> np.ndarray:
    """Block matrix B of the general second-kind family reproducing the MS2 kernel.

    Blocks are ``c lambda_kl mu2_k mu2_l'`` with ``mu2 = R(90 deg) mu1_tilde``
    in the common frame of ``mu0``.  ``c = 1/2`` makes
    ``vec(y)' B vec(y)`` equal the MS2 coupling ``1/2 sin' Lambda sin``.
    """
    _, zeta = horizontal_angles(params.mu0, params.mu1, params.mu1[None])
    mu2 = np.stack([-np.sin(zeta), np.cos(zeta)], axis=1)
    K = params.K
    B = np.zeros((2 * K, 2 * K))
    for k in range(K):
        for l in range(K):
            if k != l:
                B[2 * k : 2 * k + 2, 2 * l : 2 * l + 2] = 0.5 * params.lam[k, l] * np.outer(mu2[k], mu2[l])
    return B


def gms2_log_kernel(mu0, mu1, kappa0, kappa1, B, x) -> np.ndarray:
    """Unnormalized log density of the general dependent second-kind family.

    ``x`` has shape ``(..., K, p)``; ``B`` is ``((p-1)K, (p-1)K)`` with zero
    diagonal blocks.  ``y`` and ``mu1_tilde`` use the frame of ``mu0``.
    """
    mu0 = _vec(mu0)
    mu1 = _vec(np.atleast_2d(mu1))
    kappa0 = np.asarray(kappa0, dtype=float)
    kappa1 = np.asarray(kappa1, dtype=float)
    X = np.asarray(x, dtype=float)
    K, p = mu1.shape
    B = np.asarray(B, dtype=float)
    if B.shape != ((p - 1) * K, (p - 1) * K):
        raise ValueError("B has the wrong shape")
    for k in range(K):
        if np.any(B[(p - 1) * k : (p - 1) * (k + 1), (p - 1) * k : (p - 1) * (k + 1)] != 0):
            raise ValueError("diagonal blocks of B must vanish")
    E = frame(mu0)
    nu = mu1 @ mu0
    s = X @ mu0
    v = X @ E[:, 1:]
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    y = np.where(norm > 0, v / np.where(norm > 0, norm, 1.0), 0.0)
    mt = mu1 @ E[:, 1:]
    mt = mt / np.linalg.norm(mt, axis=1, keepdims=True)
    vert = -np.sum(kappa0 * (s - nu) ** 2, axis=-1)
    lin = np.sum(kappa1 * np.sum(y * mt, axis=-1), axis=-1)
    vy = y.reshape(y.shape[:-2] + (K * (p - 1),))
    quad = np.einsum("...i,ij,...j->...", vy, B, vy)
    return vert + lin + quad
