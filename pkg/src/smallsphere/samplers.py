"""Random generation for all model families.

Every sampler takes a :class:`numpy.random.Generator` (``make_rng(seed)``)
as its first argument.  Replicate ``r`` of a seeded study uses
``make_rng(seed + r)``, which keeps replicates deterministic and
independent of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sps

from .densities import BM, IMS1, IMS2, MS2, S1, S2, VMF, ModelParams, UnsupportedModelError, horizontal_angles
from .special import TruncNormal, log_normal_interval
from .sphere import frame, recompose, unit


def make_rng(seed: int | None) -> np.random.Generator:
    """PCG64 generator; the same seed reproduces the same stream bit for bit."""
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class GibbsConfig:
    """Gibbs sampler settings.

    ``n`` draws are collected from ``ceil(n / draws_per_chain)`` independent
    chains (at least ``min_chains``) advanced in lockstep, each discarding
    ``burn_in`` sweeps and then keeping every ``thin``-th sweep.
    """

    burn_in: int = 500
    thin: int = 5
    draws_per_chain: int = 100
    min_chains: int = 4

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.draws_per_chain < 1 or self.min_chains < 1:
            raise ValueError("draws_per_chain and min_chains must be positive")

    def n_chains(self, n: int) -> int:
        return max(self.min_chains, -(-n // self.draws_per_chain))


# primitives ----------------------------------------------------------------


def sample_trunc_normal(rng: np.random.Generator, spec: TruncNormal, n: int) -> np.ndarray:
    """Inverse-CDF draws from a truncated normal.

    Works with log CDF values so intervals deep in either tail keep full
    relative precision; the interval is reflected to the left half-line when
    it lies right of the mean.
    """
    a, b = spec.alpha, spec.beta
    flip = a > 0
    if flip:
        a, b = -b, -a
    log_a = sps.log_ndtr(a)
    log_mass = log_normal_interval(a, b)
    u = rng.random(n)
    log_target = np.logaddexp(log_a, np.log(u) + log_mass)
    z = sps.ndtri_exp(np.minimum(log_target, 0.0))
    z = np.clip(z, a, b)
    if flip:
        z = -z
    return np.clip(spec.mean + spec.sd * z, spec.lower, spec.upper)


def sample_von_mises(rng: np.random.Generator, mean_angle: float, kappa: float, n: int) -> np.ndarray:
    """Best-Fisher rejection sampler; angles in [0, 2 pi)."""
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    if kappa < 1e-8:
        return rng.uniform(0.0, 2.0 * math.pi, n)
    if kappa > 1e6:
        return np.mod(mean_angle + rng.standard_normal(n) / math.sqrt(kappa), 2.0 * math.pi)
    tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(16, int(1.3 * (n - filled)))
        u1, u2, u3 = rng.random((3, m))
        z = np.cos(math.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore"):
            ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        theta = np.sign(u3[ok] - 0.5) * np.arccos(np.clip(f[ok], -1.0, 1.0))
        take = min(theta.size, n - filled)
        out[filled : filled + take] = theta[:take]
        filled += take
    return np.mod(out + mean_angle, 2.0 * math.pi)


def _vmf_cosines(rng: np.random.Generator, kappa: np.ndarray, d: int) -> np.ndarray:
    """Wood's rejection sampler for w = mu'x under vMF on S^{d-1}, d >= 3 (vectorized over kappa)."""
    kappa = np.asarray(kappa, dtype=float)
    out = np.empty(kappa.shape)
    small = kappa < 1e-10
    # uniform limit: w has density proportional to (1 - w^2)^{(d-3)/2}
    if np.any(small):
        beta = rng.beta((d - 1) / 2.0, (d - 1) / 2.0, size=int(small.sum()))
        out[small] = 2.0 * beta - 1.0
    idx = np.flatnonzero(~small)
    k = kappa[idx]
    dm1 = d - 1.0
    bb = dm1 / (2.0 * k + np.sqrt(4.0 * k * k + dm1 * dm1))
    x0 = (1.0 - bb) / (1.0 + bb)
    c = k * x0 + dm1 * np.log(1.0 - x0 * x0)
    todo = np.arange(idx.size)
    while todo.size:
        z = rng.beta(dm1 / 2.0, dm1 / 2.0, size=todo.size)
        u = rng.random(todo.size)
        bt, x0t, kt, ct = bb[todo], x0[todo], k[todo], c[todo]
        w = (1.0 - (1.0 + bt) * z) / (1.0 - (1.0 - bt) * z)
        ok = kt * w + dm1 * np.log(1.0 - x0t * w) - ct >= np.log(u)
        out[idx[todo[ok]]] = w[ok]
        todo = todo[~ok]
    return out


def _uniform_sphere(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return unit(rng.standard_normal((n, d)))


def sample_vmf_e1(rng: np.random.Generator, kappa, d: int, n: int | None = None) -> np.ndarray:
    """vMF draws on S^{d-1} with mean (1, 0, ..., 0); ``kappa`` may vary per draw."""
    kappa = np.asarray(kappa, dtype=float)
    if n is not None:
        kappa = np.broadcast_to(kappa, (n,))
    m = kappa.shape[0]
    if d == 2:
        th = _von_mises_varying(rng, np.zeros(m), kappa)
        return np.column_stack([np.cos(th), np.sin(th)])
    w = _vmf_cosines(rng, kappa, d)
    v = _uniform_sphere(rng, m, d - 1)
    return np.column_stack([w, np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v])


def sample_vmf(rng: np.random.Generator, mu, kappa: float, n: int) -> np.ndarray:
    """vMF(mu, kappa) on S^{p-1}."""
    mu = unit(mu)
    E = frame(mu)
    return sample_vmf_e1(rng, kappa, mu.shape[0], n) @ E.T


def _von_mises_varying(rng: np.random.Generator, mean: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """One von Mises draw per (mean, kappa) pair, vectorized Best-Fisher."""
    mean = np.asarray(mean, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    out = np.empty(kappa.shape)
    k = np.maximum(kappa, 1e-8)
    tau = 1.0 + np.sqrt(1.0 + 4.0 * k * k)
    rho = (tau - np.sqrt(2.0 * tau)) / (2.0 * k)
    r = (1.0 + rho * rho) / (2.0 * rho)
    todo = np.arange(k.size)
    while todo.size:
        u1, u2, u3 = rng.random((3, todo.size))
        z = np.cos(math.pi * u1)
        rt, kt = r[todo], k[todo]
        f = (1.0 + rt * z) / (rt + z)
        c = kt * (rt - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        out[todo[ok]] = np.sign(u3[ok] - 0.5) * np.arccos(np.clip(f[ok], -1.0, 1.0))
        todo = todo[~ok]
    tiny = kappa < 1e-8
    if np.any(tiny):
        out[tiny] = rng.uniform(-math.pi, math.pi, int(tiny.sum()))
    return out + mean


def sample_mvm(
    rng: np.random.Generator, zeta, kappa1, lam, n: int, config: GibbsConfig = GibbsConfig()
) -> np.ndarray:
    """Multivariate (sine-model) von Mises draws by Gibbs sampling, shape (n, K).

    Writing theta = phi - zeta, the full conditional of theta_k is von Mises
    with resultant vector (kappa1_k, sum_l lambda_kl sin theta_l).
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    kappa1 = np.atleast_1d(np.asarray(kappa1, dtype=float))
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    K = kappa1.shape[0]
    if lam.shape != (K, K) or not np.allclose(lam, lam.T) or np.any(np.diag(lam) != 0):
        raise ValueError("Lambda must be symmetric K x K with zero diagonal")
    if not np.any(lam):
        th = np.column_stack([sample_von_mises(rng, 0.0, k, n) for k in kappa1])
        return np.mod(th + zeta, 2.0 * math.pi)
    chains = config.n_chains(n)
    per = -(-n // chains)
    th = np.column_stack([sample_von_mises(rng, 0.0, k, chains) for k in kappa1])
    keep = []
    for sweep in range(config.burn_in + per * config.thin):
        for k in range(K):
            c = np.sin(th) @ lam[:, k]
            th[:, k] = _von_mises_varying(rng, np.arctan2(c, kappa1[k]), np.hypot(kappa1[k], c))
        if sweep >= config.burn_in and (sweep - config.burn_in + 1) % config.thin == 0:
            keep.append(th.copy())
    out = np.concatenate(keep, axis=0)[:n]
    return np.mod(out + zeta, 2.0 * math.pi)


# S1 Gibbs sampler ------------------------------------------------------------

GRID_SIZE = 512
_COARSE = 128
_LOG_CUTOFF = 30.0


def _s_conditional_logpdf(s, kappa0, nu, kappa1, c, p):
    """log density of s given y (up to a constant); c = kappa1 sqrt(1 - nu^2) y_1."""
    r = np.sqrt(np.clip(1.0 - s * s, 0.0, None))
    out = -kappa0 * (s - nu) ** 2 + kappa1 * nu * s + c * r
    if p > 3:
        with np.errstate(divide="ignore"):
            out = out + 0.5 * (p - 3) * np.log(np.clip(1.0 - s * s, 0.0, None))
    return out


def _grid_inverse_cdf(rng, kappa0, nu, kappa1, c, p, grid_size=GRID_SIZE) -> np.ndarray:
    """One draw of s | y per chain (c has one entry per chain).

    A coarse pass over [-1, 1] locates where the log density is within
    ``_LOG_CUTOFF`` of its maximum; the fine grid spans that window and the
    inverse CDF is interpolated linearly from the trapezoid cumulative sums.
    """
    coarse = np.linspace(-1.0, 1.0, _COARSE)
    lc = _s_conditional_logpdf(coarse[None, :], kappa0, nu, kappa1, c[:, None], p)
    keep = lc >= lc.max(axis=1, keepdims=True) - _LOG_CUTOFF
    first = np.argmax(keep, axis=1)
    last = _COARSE - 1 - np.argmax(keep[:, ::-1], axis=1)
    lo = coarse[np.maximum(first - 1, 0)]
    hi = coarse[np.minimum(last + 1, _COARSE - 1)]
    t = np.linspace(0.0, 1.0, grid_size)
    g = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    lg = _s_conditional_logpdf(g, kappa0, nu, kappa1, c[:, None], p)
    dens = np.exp(lg - lg.max(axis=1, keepdims=True))
    cell = 0.5 * (dens[:, 1:] + dens[:, :-1]) * np.diff(g, axis=1)
    cdf = np.concatenate([np.zeros((g.shape[0], 1)), np.cumsum(cell, axis=1)], axis=1)
    u = rng.random(g.shape[0]) * cdf[:, -1]
    j = np.clip(np.sum(cdf < u[:, None], axis=1), 1, grid_size - 1)
    rows = np.arange(g.shape[0])
    c0, c1 = cdf[rows, j - 1], cdf[rows, j]
    frac = np.where(c1 > c0, (u - c0) / np.where(c1 > c0, c1 - c0, 1.0), 0.5)
    return g[rows, j - 1] + frac * (g[rows, j] - g[rows, j - 1])


def s1_gibbs_chains(
    rng: np.random.Generator,
    params: S1,
    n_chains: int,
    n_keep: int,
    config: GibbsConfig = GibbsConfig(),
    grid_size: int = GRID_SIZE,
) -> tuple[np.ndarray, np.ndarray]:
    """Run ``n_chains`` two-block (s, y) Gibbs chains for S1.

    Returns ``(s, y)`` traces of shape ``(n_keep, n_chains)`` and
    ``(n_keep, n_chains, p - 1)``; ``y`` is in the coordinates of
    ``frame(mu0, mu1)``, where mu1 is ``(nu, sqrt(1 - nu^2), 0, ...)``.
    """
    p, nu, k0, k1 = params.p, params.nu, params.kappa0, params.kappa1
    h = k1 * math.sqrt(1.0 - nu * nu)
    spec = TruncNormal(nu, 1.0 / math.sqrt(2.0 * k0))
    s = sample_trunc_normal(rng, spec, n_chains)
    s_keep = np.empty((n_keep, n_chains))
    y_keep = np.empty((n_keep, n_chains, p - 1))
    kept = 0
    for sweep in range(config.burn_in + n_keep * config.thin):
        y = sample_vmf_e1(rng, h * np.sqrt(np.clip(1.0 - s * s, 0.0, None)), p - 1)
        s = _grid_inverse_cdf(rng, k0, nu, k1, h * y[:, 0], p, grid_size)
        if sweep >= config.burn_in and (sweep - config.burn_in + 1) % config.thin == 0:
            s_keep[kept] = s
            y_keep[kept] = y
            kept += 1
    return s_keep, y_keep


def sample_s1(rng: np.random.Generator, params: S1, n: int, config: GibbsConfig = GibbsConfig()) -> np.ndarray:
    chains = config.n_chains(n)
    per = -(-n // chains)
    s, y = s1_gibbs_chains(rng, params, chains, per, config)
    E = frame(params.mu0, params.mu1)
    return recompose(E, s.reshape(-1)[:n], y.reshape(-1, params.p - 1)[:n])


def potential_scale_reduction(chains: np.ndarray) -> float:
    """Split-chain R-hat for traces of shape (n_draws, n_chains)."""
    x = np.asarray(chains, dtype=float)
    half = x.shape[0] // 2
    x = np.concatenate([x[:half], x[half : 2 * half]], axis=1)
    n = x.shape[0]
    means = x.mean(axis=0)
    w = x.var(axis=0, ddof=1).mean()
    b = n * means.var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


# model-level sampling ---------------------------------------------------------


def _sample_vertical(rng: np.random.Generator, kappa0: float, nu: float, p: int, n: int) -> np.ndarray:
    """s = mu0'x for the second-kind families: truncated normal, times (1 - s^2)^{(p-3)/2} for p > 3."""
    if kappa0 == 0:
        # uniform-sphere marginal of s
        return 2.0 * rng.beta((p - 1) / 2.0, (p - 1) / 2.0, size=n) - 1.0
    spec = TruncNormal(nu, 1.0 / math.sqrt(2.0 * kappa0))
    if p == 3:
        return sample_trunc_normal(rng, spec, n)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(16, 2 * (n - filled))
        s = sample_trunc_normal(rng, spec, m)
        ok = rng.random(m) < (1.0 - s * s) ** (0.5 * (p - 3))
        s = s[ok][: n - filled]
        out[filled : filled + s.size] = s
        filled += s.size
    return out


def _sample_s2(rng: np.random.Generator, params: S2, n: int) -> np.ndarray:
    s = _sample_vertical(rng, params.kappa0, params.nu, params.p, n)
    y = sample_vmf_e1(rng, params.kappa1, params.p - 1, n)
    return recompose(frame(params.mu0, params.mu1), s, y)


def sample_model(
    rng: np.random.Generator, params: ModelParams, n: int, config: GibbsConfig = GibbsConfig()
) -> np.ndarray:
    """Draw ``n`` observations; shape (n, p) for univariate models, (n, K, p) otherwise."""
    if n < 1:
        raise ValueError("n must be positive")
    if isinstance(params, VMF):
        return sample_vmf(rng, params.mu, params.kappa, n)
    if isinstance(params, BM):
        s = _sample_vertical(rng, params.kappa, params.nu, params.p, n)
        y = _uniform_sphere(rng, n, params.p - 1)
        return recompose(frame(params.mu), s, y)
    if isinstance(params, S2):
        return _sample_s2(rng, params, n)
    if isinstance(params, S1):
        return sample_s1(rng, params, n, config)
    if isinstance(params, MS2):
        if params.p != 3:
            raise UnsupportedModelError("MS2 sampling requires p = 3")
        E = frame(params.mu0)
        _, zeta = horizontal_angles(params.mu0, params.mu1, params.mu1[None])
        phi = sample_mvm(rng, zeta, params.kappa1, params.lam, n, config)
        out = np.empty((n, params.K, 3))
        for k in range(params.K):
            s = _sample_vertical(rng, params.kappa0[k], params.nu[k], 3, n)
            out[:, k] = recompose(E, s, np.column_stack([np.cos(phi[:, k]), np.sin(phi[:, k])]))
        return out
    if isinstance(params, IMS1):
        return np.stack([sample_model(rng, m, n, config) for m in params.marginals()], axis=1)
    raise TypeError(f"unknown parameter type {type(params).__name__}")
