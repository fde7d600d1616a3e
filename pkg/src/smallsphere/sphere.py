"""Geometry on the unit sphere S^{p-1}.

Points are plain 1-d numpy arrays of unit norm; batches are ``(n, p)``
arrays.  The (s, y) decomposition splits a direction into its cosine
``s`` to an axis and the unit direction ``y`` in the orthogonal complement,
expressed in the coordinates of an orthonormal :func:`frame`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

_POLE_TOL = 1e-12


class PoleError(ValueError):
    """Raised when y is requested for a point at +-mu0 (y is undefined there)."""


def unit(x) -> np.ndarray:
    """Return ``x`` scaled to unit Euclidean norm (last axis)."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalize a zero vector")
    return x / norm


def _check_same_dim(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape[-1]} != {v.shape[-1]}")


def geodesic_distance(u, v) -> float | np.ndarray:
    """Great-circle distance in radians, ``arccos(u.v)`` clamped to [0, pi]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_same_dim(u, v)
    return np.arccos(np.clip(np.sum(u * v, axis=-1), -1.0, 1.0))


def project_complement(mu0, x) -> np.ndarray:
    """Apply ``I - mu0 mu0^T`` to ``x`` (or to each row of ``x``)."""
    mu0 = np.asarray(mu0, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_same_dim(mu0, x)
    return x - np.multiply.outer(x @ mu0, mu0) if x.ndim > 1 else x - (x @ mu0) * mu0


def frame(mu0, mu1=None) -> np.ndarray:
    """Orthogonal ``p x p`` matrix whose first column is ``mu0``.

    When ``mu1`` is given the second column is ``P mu1 / |P mu1|`` with ``P``
    the projection onto the complement of ``mu0``.  Without ``mu1`` (or when
    it is parallel to ``mu0``) the second column comes from the coordinate
    axis least aligned with ``mu0``, so the frame is a deterministic function
    of its inputs.  The frame has determinant +1; for p = 3 the third column
    is ``mu0 x w``.
    """
    mu0 = unit(mu0)
    p = mu0.shape[0]
    if p < 2:
        raise ValueError("frame needs p >= 2")
    w = None
    if mu1 is not None:
        w = project_complement(mu0, np.asarray(mu1, dtype=float))
        if np.linalg.norm(w) < 1e-12:
            w = None
    if w is None:
        w = np.zeros(p)
        w[np.argmin(np.abs(mu0))] = 1.0
        w = project_complement(mu0, w)
    # second Gram-Schmidt pass: a nearly parallel mu1 leaves rounding error in w
    w = unit(project_complement(mu0, unit(w)))
    q, _ = np.linalg.qr(np.column_stack([mu0, w, np.eye(p)]))
    q = q[:, :p]
    # QR may flip column signs; pin the first two columns exactly
    q[:, 0] = mu0
    q[:, 1] = w
    # right-handed, so angles in the complement of mu0 have one orientation
    if p > 2 and np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


class Canonical(NamedTuple):
    s: float
    y: np.ndarray


def decompose(frame_or_mu0, x) -> Canonical:
    """Split ``x`` into ``s = mu0.x`` and the unit complement direction ``y``.

    ``y`` is given in the coordinates of columns 2..p of the frame (a frame is
    built from ``mu0`` alone if a vector is passed).  Raises :class:`PoleError`
    at ``x = +-mu0``.
    """
    E = _as_frame(frame_or_mu0)
    x = np.asarray(x, dtype=float)
    _check_same_dim(E[:, 0], x)
    s, y = decompose_many(E, x[None, :])
    return Canonical(float(s[0]), y[0])


def decompose_many(frame_or_mu0, X) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`decompose` over the rows of ``X``; returns ``(s, Y)``."""
    E = _as_frame(frame_or_mu0)
    v = np.asarray(X, dtype=float) @ E
    s = np.clip(v[:, 0], -1.0, 1.0)
    rest = v[:, 1:]
    norm = np.linalg.norm(rest, axis=1)
    bad = np.abs(s) >= 1.0 - _POLE_TOL
    if np.any(bad) or np.any(norm == 0):
        raise PoleError(f"{int(np.sum(bad | (norm == 0)))} point(s) at the axis poles")
    return s, rest / norm[:, None]


def recompose(E: np.ndarray, s, y) -> np.ndarray:
    """Inverse of :func:`decompose`: ``x = E (s, sqrt(1 - s^2) y)``.

    ``s`` may be a scalar or a length-n array (with ``y`` of shape (n, p-1)).
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(np.abs(s_arr) > 1.0):
        raise ValueError("|s| must not exceed 1")
    y = np.asarray(y, dtype=float)
    r = np.sqrt(np.clip(1.0 - s_arr**2, 0.0, None))
    if s_arr.ndim == 0:
        v = np.concatenate([[float(s_arr)], r * y])
        return E @ v
    v = np.column_stack([s_arr, r[:, None] * y])
    return v @ E.T


def _as_frame(frame_or_mu0) -> np.ndarray:
    a = np.asarray(frame_or_mu0, dtype=float)
    return frame(a) if a.ndim == 1 else a


def angles_to_circle(phi) -> np.ndarray:
    """(cos phi, sin phi) rows for an array of angles."""
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def canonical_sign(mu0: np.ndarray) -> float:
    """+1 if the first nonzero coordinate of ``mu0`` is positive, else -1."""
    nz = np.flatnonzero(np.abs(mu0) > 1e-15)
    if nz.size == 0:
        raise ValueError("zero axis")
    return 1.0 if mu0[nz[0]] > 0 else -1.0


@dataclass(frozen=True)
class SmallSphere:
    """The subsphere C(mu0, nu) = {x : mu0.x = nu}; ``nu`` may hold one value per marginal."""

    mu0: np.ndarray
    nu: tuple[float, ...]

    def __init__(self, mu0, nu: float | Sequence[float]):
        nus = tuple(float(v) for v in np.atleast_1d(nu))
        if any(not -1.0 < v < 1.0 for v in nus):
            raise ValueError("nu must lie in (-1, 1)")
        object.__setattr__(self, "mu0", unit(mu0))
        object.__setattr__(self, "nu", nus)

    def canonical(self) -> "SmallSphere":
        """Same subsphere with the axis sign rule applied: C(mu0, nu) = C(-mu0, -nu)."""
        sign = canonical_sign(self.mu0)
        if sign > 0:
            return self
        return SmallSphere(-self.mu0, [-v for v in self.nu])


def angular_product_error(truth: SmallSphere, est: SmallSphere) -> float:
    """Combined axis/latitude discrepancy between two small spheres, in degrees.

    ``sqrt(angle(mu0_hat, mu0)^2 + sum_k (deg(arccos nu_hat_k - arccos nu_k))^2)``.
    The estimate is first expressed with its axis in the hemisphere of the
    true axis (C(mu0, nu) = C(-mu0, -nu)); the sign rule of
    :meth:`SmallSphere.canonical` is discontinuous for axes with a vanishing
    leading coordinate, so it is not used here.  With several marginals the
    latitude terms are summed under the root.
    """
    t = truth.canonical()
    e = est
    if t.mu0.shape != e.mu0.shape:
        raise ValueError("dimension mismatch")
    if len(t.nu) != len(e.nu):
        raise ValueError("number of marginals differs")
    if float(t.mu0 @ e.mu0) < 0:
        e = SmallSphere(-e.mu0, [-v for v in e.nu])
    axis = np.degrees(geodesic_distance(t.mu0, e.mu0))
    lat = np.degrees(np.arccos(np.array(e.nu)) - np.arccos(np.array(t.nu)))
    return float(np.sqrt(axis**2 + np.sum(lat**2)))
