"""Metrics on the positive definite cone and the affine-invariant Exp/Log maps."""

import enum

import numpy as np

from .errors import InvalidArgumentError, InvalidShapeError
from .symcore import (
    _spd_eigh,
    as_spd,
    as_sym,
    congruence,
    spd_invsqrt,
    spd_log,
    spd_sqrt,
    sym_exp,
)


class MetricKind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    LOG_EUCLIDEAN = "log-euclidean"
    CANONICAL = "canonical"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"logeuclidean": "log-euclidean", "le": "log-euclidean", "loge": "log-euclidean",
                   "affine-invariant": "canonical", "riemannian": "canonical"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InvalidArgumentError(f"unknown metric kind {value!r}") from None


def _same_shape(A, B):
    if A.shape[-2:] != B.shape[-2:]:
        raise InvalidArgumentError(f"dimension mismatch: {A.shape[-2:]} vs {B.shape[-2:]}")


def dist(kind, P, X):
    """Geodesic distance between positive definite matrices under ``kind``.

    Parameters
    ----------
    kind : MetricKind or str
        ``euclidean`` (Frobenius), ``log-euclidean`` or ``canonical``
        (affine-invariant).
    P, X : ndarray, shape (..., p, p)
        Positive definite matrices of the same dimension.

    Returns
    -------
    d : float or ndarray, shape (...,)
    """
    kind = MetricKind.parse(kind)
    P = as_spd(P)
    X = as_spd(X)
    _same_shape(P, X)
    if kind is MetricKind.EUCLIDEAN:
        diff = X - P
    elif kind is MetricKind.LOG_EUCLIDEAN:
        diff = spd_log(X) - spd_log(P)
    else:
        # sum of squared logs of the generalized eigenvalues of (P, X)
        w, _ = _spd_eigh(congruence(spd_invsqrt(P), X))
        return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))
    return np.sqrt(np.sum(diff * diff, axis=(-2, -1)))


def riem_exp(M, Y):
    """Affine-invariant exponential map ``M^{1/2} exp(M^{-1/2} Y M^{-1/2}) M^{1/2}``."""
    M = as_spd(M)
    Y = as_sym(Y)
    _same_shape(M, Y)
    s = spd_sqrt(M)
    si = spd_invsqrt(M)
    return congruence(s, sym_exp(congruence(si, Y)))


def riem_log(M, X):
    """Affine-invariant logarithm map; inverse of :func:`riem_exp` at ``M``."""
    M = as_spd(M)
    X = as_spd(X)
    _same_shape(M, X)
    s = spd_sqrt(M)
    si = spd_invsqrt(M)
    return congruence(s, spd_log(congruence(si, X)))


def canonical_inner(M, Y, Z):
    """``tr(M^{-1} Y M^{-1} Z)``, the affine-invariant inner product at ``M``."""
    M = as_spd(M)
    Mi = np.linalg.inv(M)
    return np.trace(Mi @ as_sym(Y) @ Mi @ as_sym(Z), axis1=-2, axis2=-1)


def group_act(G, X, rcond=1e-12):
    """Linear group action ``G X G'`` of an invertible ``G``."""
    G = np.asarray(G, dtype=np.float64)
    X = as_spd(X)
    if G.shape[-2:] != X.shape[-2:]:
        raise InvalidShapeError(f"G has shape {G.shape}, expected (..., {X.shape[-1]}, {X.shape[-1]})")
    if not np.all(np.isfinite(G)):
        raise InvalidArgumentError("G contains non-finite entries")
    s = np.linalg.svd(G, compute_uv=False)
    if np.any(s[..., -1] <= rcond * s[..., 0]):
        raise InvalidArgumentError("G is singular or too ill-conditioned")
    return congruence(G, X)
