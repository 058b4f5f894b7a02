"""Symmetric-matrix normal and PD-matrix lognormal (Type I / Type II) models."""

from dataclasses import dataclass, field
from math import log, pi

import numpy as np

from .errors import InvalidShapeError, NotPositiveDefiniteError, SingularCovarianceError
from .means import as_sample, mean_log_euclidean
from .symcore import (
    _eigh,
    as_spd,
    as_sym,
    congruence,
    dim_q,
    spd_invsqrt,
    spd_log,
    spd_sqrt,
    sym_exp,
    vecd,
    vecd_inv,
)

# relative eigenvalue gap below which the divided log difference uses its Taylor form
_G_SWITCH = 1e-8


def _check_cov(sigma, q):
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (q, q):
        raise InvalidShapeError(f"covariance must be {q}x{q}, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
        raise NotPositiveDefiniteError("covariance is not symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    w = np.linalg.eigvalsh(sigma)
    if w[0] < -1e-12 * max(1.0, w[-1]):
        raise NotPositiveDefiniteError(f"covariance has negative eigenvalue {w[0]:.3e}")
    return sigma


def _cov_factor(sigma):
    # L with L L' = sigma; handles zero-variance directions
    w, v = np.linalg.eigh(sigma)
    return v * np.sqrt(np.clip(w, 0.0, None))


def _scalar_multiple(M):
    a = M[0, 0]
    if np.array_equal(M, a * np.eye(M.shape[0])):
        return a
    return None


class _Gaussian:
    """Shared Gaussian-in-vecd machinery; ``sigma`` may be singular for sampling."""

    def _init_cov(self, p):
        q = dim_q(p)
        object.__setattr__(self, "sigma", _check_cov(self.sigma, q))
        w = np.linalg.eigvalsh(self.sigma)
        object.__setattr__(self, "singular", bool(w[0] <= q * np.finfo(float).eps * max(w[-1], 0.0) or w[0] <= 0))

    @property
    def p(self):
        return self.mean_matrix.shape[-1]

    @property
    def q(self):
        return dim_q(self.p)

    def _draw_vecd(self, rng, size):
        rng = np.random.default_rng(rng)
        shape = (() if size is None else tuple(np.atleast_1d(size)))
        e = rng.standard_normal(shape + (self.q,))
        return e @ _cov_factor(self.sigma).T

    def _logpdf_vecd(self, z):
        if self.singular:
            raise SingularCovarianceError(
                "density undefined for singular covariance",
                rank=int(np.linalg.matrix_rank(self.sigma)), q=self.q,
            )
        w, v = np.linalg.eigh(self.sigma)
        u = z @ v
        maha = np.sum(u * u / w, axis=-1)
        return -0.5 * (self.q * log(2 * pi) + np.log(w).sum() + maha)


@dataclass(frozen=True, eq=False)
class SymNormalModel(_Gaussian):
    """``vecd(Y) ~ N(vecd(mean), sigma)`` on symmetric matrices."""

    mean: np.ndarray
    sigma: np.ndarray
    singular: bool = field(init=False, default=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", as_sym(self.mean))
        self._init_cov(self.mean.shape[-1])

    @property
    def mean_matrix(self):
        return self.mean


@dataclass(frozen=True, eq=False)
class LognormalTypeI(_Gaussian):
    """``log X ~ N(log M, sigma)``; ``M`` is the log-Euclidean mean."""

    M: np.ndarray
    sigma: np.ndarray
    singular: bool = field(init=False, default=False)

    def __post_init__(self):
        object.__setattr__(self, "M", as_spd(self.M))
        self._init_cov(self.M.shape[-1])

    @property
    def mean_matrix(self):
        return self.M


@dataclass(frozen=True, eq=False)
class LognormalTypeII(_Gaussian):
    """``log(M^{-1/2} X M^{-1/2}) ~ N(0, sigma)``; ``M`` is the canonical geometric mean."""

    M: np.ndarray
    sigma: np.ndarray
    singular: bool = field(init=False, default=False)

    def __post_init__(self):
        object.__setattr__(self, "M", as_spd(self.M))
        self._init_cov(self.M.shape[-1])

    @property
    def mean_matrix(self):
        return self.M


# -- samplers ---------------------------------------------------------------


def symnormal_sample(model, rng=None, size=None):
    """Draw symmetric matrices with ``vecd(Y) ~ N(vecd(mean), sigma)``."""
    z = model._draw_vecd(rng, size)
    return model.mean + vecd_inv(z)


def lnI_sample(model, rng=None, size=None):
    """Type I draw ``exp(Y)`` with ``Y ~ N(log M, sigma)``."""
    z = model._draw_vecd(rng, size)
    M = model.M
    if not np.any(model.sigma):
        return np.broadcast_to(M, z.shape[:-1] + M.shape).copy()
    a = _scalar_multiple(M)
    if a is not None:
        # log M = (log a) I commutes with everything
        return a * sym_exp(vecd_inv(z))
    return sym_exp(spd_log(M) + vecd_inv(z))


def lnII_sample(model, rng=None, size=None):
    """Type II draw ``M^{1/2} exp(Y) M^{1/2}`` with ``Y ~ N(0, sigma)``."""
    z = model._draw_vecd(rng, size)
    M = model.M
    if not np.any(model.sigma):
        return np.broadcast_to(M, z.shape[:-1] + M.shape).copy()
    a = _scalar_multiple(M)
    if a is not None:
        return a * sym_exp(vecd_inv(z))
    return congruence(spd_sqrt(M), sym_exp(vecd_inv(z)))


# -- densities --------------------------------------------------------------


def _divided_log(li, lj):
    # (log li - log lj) / (li - lj) with the equal-eigenvalue limit 1/l
    diff = li - lj
    scale = np.maximum(li, lj)
    near = np.abs(diff) < _G_SWITCH * scale
    safe = np.where(near, 1.0, diff)
    exact = (np.log(li) - np.log(lj)) / safe
    # Taylor about the midpoint m: 1/m * (1 + h^2/(3 m^2)), h = diff/2
    m = 0.5 * (li + lj)
    h = 0.5 * diff
    taylor = (1.0 + (h / m) ** 2 / 3.0) / m
    return np.where(near, taylor, exact)


def log_jacobian_logmap(X):
    """Log of the Jacobian of ``X -> log X`` (see :func:`jacobian_logmap`)."""
    X = as_spd(X)
    w, _ = _eigh(X)
    if np.any(w[..., 0] <= 0):
        raise NotPositiveDefiniteError("matrix is not positive definite")
    p = w.shape[-1]
    out = -np.log(w).sum(axis=-1)
    i, j = np.triu_indices(p, 1)
    if i.size:
        out = out + np.log(_divided_log(w[..., i], w[..., j])).sum(axis=-1)
    return out


def jacobian_logmap(X):
    """Jacobian determinant of ``vecd(X) -> vecd(log X)``.

    Equals ``prod_i 1/lambda_i * prod_{i<j} g(lambda_i, lambda_j)`` where
    ``g`` is the divided difference of ``log`` (``1/lambda`` on ties).
    """
    return np.exp(log_jacobian_logmap(X))


def lnI_logpdf(X, model):
    X = as_spd(X)
    z = vecd(spd_log(X) - spd_log(model.M))
    return log_jacobian_logmap(X) + model._logpdf_vecd(z)


def lnI_density(X, model):
    """Type I density with respect to Lebesgue measure on ``vecd(X)``.

    Raises
    ------
    SingularCovarianceError
        If the model covariance is singular.
    """
    return np.exp(lnI_logpdf(X, model))


def lnII_logpdf(X, model):
    X = as_spd(X)
    Xt = congruence(spd_invsqrt(model.M), X)
    z = vecd(spd_log(Xt))
    _, logdet_m = np.linalg.slogdet(model.M)
    # X -> M^{-1/2} X M^{-1/2} is linear on Sym(p) with Jacobian |M|^{-(p+1)/2}
    return log_jacobian_logmap(Xt) - 0.5 * (model.p + 1) * logdet_m + model._logpdf_vecd(z)


def lnII_density(X, model):
    """Type II density with respect to Lebesgue measure on ``vecd(X)``.

    The Jacobian is evaluated at the generalized eigenvalues of ``(M, X)``.
    """
    return np.exp(lnII_logpdf(X, model))


# -- estimation -------------------------------------------------------------


def lnI_mle(S):
    """Maximum likelihood Type I fit: log-Euclidean average and centered 1/n covariance.

    The returned model has ``singular=True`` when the covariance estimate
    is rank deficient (for example ``n <= q`` or identical samples); its
    densities then refuse to evaluate.
    """
    S = as_sample(S)
    if S.ndim != 3:
        raise InvalidShapeError("lnI_mle expects a single sample of shape (n, p, p)")
    L = spd_log(S)
    Lbar = L.mean(axis=0)
    M = sym_exp(Lbar)
    Z = vecd(L - spd_log(M))
    sigma = Z.T @ Z / S.shape[0]
    return LognormalTypeI(M, sigma)
