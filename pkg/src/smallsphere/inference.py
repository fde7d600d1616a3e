"""Likelihood-ratio tests for small-sphere models.

Each hypothesis is a restriction of an alternative model.  The restricted
maximum likelihood comes from the same estimators with some parameters
pinned; ``W = -2 (L0 - L1)`` is referred to a chi-square distribution
whose degrees of freedom are the difference of the parameter-space
dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import estimation as est
from .densities import UnsupportedModelError
from .special import chi_square_sf
from .sphere import unit

KINDS = ("Association", "Axis", "GreatSphere", "VonMisesFisher", "BinghamMardia")
FIRST_KIND = ("S1", "IMS1")
SECOND_KIND = ("S2", "IMS2", "MS2")
_ALIASES = {
    "association": "Association",
    "axis": "Axis",
    "greatsphere": "GreatSphere",
    "great-sphere": "GreatSphere",
    "vmf": "VonMisesFisher",
    "vonmisesfisher": "VonMisesFisher",
    "bm": "BinghamMardia",
    "binghammardia": "BinghamMardia",
}


class IncompatibleHypothesisError(ValueError):
    """The hypothesis is not defined for the requested alternative model."""


@dataclass(frozen=True)
class Hypothesis:
    """A null hypothesis together with the alternative model it restricts.

    ``mu0_star`` is required for (and only used by) the Axis hypothesis.
    """

    kind: str
    model: str = "MS2"
    mu0_star: np.ndarray | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower().replace("_", ""), self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown hypothesis {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        model = self.model.upper()
        object.__setattr__(self, "model", model)
        if model not in FIRST_KIND + SECOND_KIND:
            raise IncompatibleHypothesisError(f"no tests are defined under the {self.model} model")
        if kind == "Association" and model != "MS2":
            raise IncompatibleHypothesisError("the association test needs the MS2 alternative")
        if kind == "Axis":
            if self.mu0_star is None:
                raise ValueError("the axis test needs mu0_star")
            object.__setattr__(self, "mu0_star", unit(self.mu0_star))


@dataclass
class TestResult:
    hypothesis: str
    W: float
    df: int
    p_value: float
    L0: float
    L1: float
    converged: bool
    null_fit: est.FitResult = field(repr=False)
    alt_fit: est.FitResult = field(repr=False)

    __test__ = False  # not a pytest class

    def to_json_dict(self) -> dict:
        return {
            "hypothesis": self.hypothesis,
            "Wn": self.W,
            "df": self.df,
            "pValue": self.p_value,
            "L0": self.L0,
            "L1": self.L1,
            "converged": self.converged,
        }


def _shape(data) -> tuple[int, int, int]:
    X = np.asarray(data, dtype=float)
    if X.ndim == 2:
        return X.shape[0], 1, X.shape[1]
    if X.ndim == 3:
        return X.shape
    raise ValueError("data must have shape (n, p) or (n, K, p)")


def degrees_of_freedom(hyp: Hypothesis, p: int, K: int = 1) -> int:
    """Dimension of the alternative minus that of the null."""
    if p < 3:
        raise ValueError("p must be at least 3")
    if hyp.model in ("S1", "S2") and K != 1:
        raise IncompatibleHypothesisError(f"{hyp.model} is univariate")
    if hyp.model == "MS2" and p != 3:
        raise UnsupportedModelError("MS2 requires p = 3")
    pairs = K * (K - 1) // 2
    if hyp.kind == "Association":
        return pairs
    if hyp.kind == "Axis":
        return p - 1
    if hyp.kind == "GreatSphere":
        return K
    if hyp.kind == "VonMisesFisher":
        if hyp.model in FIRST_KIND:
            # kappa0 = 0 drops the axis entirely; each marginal keeps its vMF mean and concentration
            return p - 1 + K
        # kappa0 = 0 leaves the subsphere latitudes and the kappa0 values unidentified
        return 2 * K
    # BinghamMardia: kappa1 = 0 removes the mode directions within each subsphere
    df = K * (p - 1)
    if hyp.model == "MS2":
        df += pairs
    return df


def restricted_fit(hyp: Hypothesis, data, opts: est.FitOptions = est.FitOptions()) -> est.FitResult:
    """Maximum likelihood under the null hypothesis."""
    X = np.asarray(data, dtype=float)
    n, K, p = _shape(X)
    degrees_of_freedom(hyp, p, K)  # validates the combination
    m = hyp.model
    if hyp.kind == "Association":
        return est.fit_ims2(X, opts)
    if hyp.kind == "Axis":
        if hyp.mu0_star.shape[0] != p:
            raise ValueError("mu0_star has the wrong dimension")
        if m in FIRST_KIND:
            return est._fit_first_kind(X, opts, fixed_mu0=hyp.mu0_star, label=m)
        return est._fit_second_kind(X, m, opts, fixed_mu0=hyp.mu0_star)
    if hyp.kind == "GreatSphere":
        if m in FIRST_KIND:
            return est._fit_first_kind(X, opts, nu_zero=True, label=m)
        return est._fit_second_kind(X, m, opts, vertical="nu_zero")
    if hyp.kind == "VonMisesFisher":
        if m in FIRST_KIND:
            return est.fit_vmf(X)
        return est._fit_second_kind(X, m, opts, vertical="uniform")
    # BinghamMardia
    if m in FIRST_KIND:
        return est.fit_bm(X, opts)
    return est._fit_second_kind(X, "IMS2" if m == "MS2" else m, opts, horizontal="uniform")


def _polish_ms2(X, alt: est.FitResult, null: est.FitResult, opts: est.FitOptions) -> est.FitResult:
    """Best of the moment fit and exact-likelihood inner fits at the alternative and null axes."""
    best = alt
    for mu0 in (alt.params.mu0, null.params.mu0):
        try:
            inner = est.inner_fit_second_kind(X, mu0, "MS2", opts, horizontal="mle")
        except (est.EstimationError, ValueError, np.linalg.LinAlgError):
            continue
        if inner.nll < best.neg_log_lik:
            best = est.FitResult("MS2", inner.params, inner.nll, alt.n_iters, alt.converged, alt.trace + [inner.nll], dict(alt.flags))
            best.flags["polished"] = "mle"
    return best


def lr_test(hyp: Hypothesis, data, opts: est.FitOptions = est.FitOptions(), alt_fit: est.FitResult | None = None) -> TestResult:
    """Likelihood-ratio test of ``hyp`` against its alternative model.

    ``alt_fit`` may carry an unrestricted fit already computed on the same
    data.  For the association test with MS2 moment estimates, the
    alternative is polished with the exact multivariate von Mises
    likelihood at the fitted axis and at the null axis, keeping the best.
    Moment estimates do not maximize the likelihood, and W built from them
    is biased low.  W is clamped at 0, since optimizer noise can put the
    restricted optimum marginally above the unrestricted one.
    """
    X = np.asarray(data, dtype=float)
    n, K, p = _shape(X)
    df = degrees_of_freedom(hyp, p, K)
    alt = alt_fit if alt_fit is not None else est.fit_model(hyp.model, X, opts)
    null = restricted_fit(hyp, X, opts)
    if hyp.kind == "Association" and opts.horizontal == "moment":
        alt = _polish_ms2(X, alt, null, opts)
    L0, L1 = -null.neg_log_lik, -alt.neg_log_lik
    W = max(0.0, -2.0 * (L0 - L1))
    return TestResult(
        hypothesis=hyp.kind,
        W=float(W),
        df=df,
        p_value=float(chi_square_sf(W, df)),
        L0=float(L0),
        L1=float(L1),
        converged=bool(null.converged and alt.converged),
        null_fit=null,
        alt_fit=alt,
    )
