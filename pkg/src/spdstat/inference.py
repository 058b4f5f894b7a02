"""Large-sample confidence regions for the three means, p-values and BH FDR."""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import special

from .errors import (
    BoundaryViolationError,
    ConvergenceError,
    InvalidArgumentError,
    InvalidShapeError,
    SingularCovarianceError,
)
from .geometry import MetricKind
from .means import as_sample, karcher_iterate, mean_euclidean, mean_log_euclidean, riccati_solve
from .symcore import (
    as_spd,
    as_sym,
    congruence,
    dim_q,
    duplication_matrix,
    is_spd,
    kron_diff,
    spd_invsqrt,
    spd_log,
    sym_eig,
    sym_exp,
    vecd,
    vecd_inv,
)

# -- chi-square -------------------------------------------------------------


def _check_dof(dof):
    if int(dof) != dof or dof < 1:
        raise InvalidArgumentError(f"degrees of freedom must be a positive integer, got {dof!r}")
    return int(dof)


def chi2_cdf(x, dof):
    """Chi-square CDF via the regularized lower incomplete gamma function."""
    dof = _check_dof(dof)
    x = np.asarray(x, dtype=np.float64)
    return special.gammainc(0.5 * dof, 0.5 * np.clip(x, 0.0, None))


def chi2_sf(x, dof):
    """Upper tail ``1 - chi2_cdf(x, dof)``, computed without cancellation."""
    dof = _check_dof(dof)
    x = np.asarray(x, dtype=np.float64)
    return special.gammaincc(0.5 * dof, 0.5 * np.clip(x, 0.0, None))


def chi2_quantile(prob, dof):
    """Inverse of :func:`chi2_cdf`, polished with Newton steps on the CDF."""
    dof = _check_dof(dof)
    prob = float(prob)
    if not 0.0 < prob < 1.0:
        raise InvalidArgumentError(f"probability must lie in (0, 1), got {prob}")
    a = 0.5 * dof
    x = 2.0 * special.gammaincinv(a, prob)
    for _ in range(3):
        f = special.gammainc(a, 0.5 * x) - prob
        # chi-square pdf at x
        logpdf = (a - 1.0) * np.log(0.5 * x) - 0.5 * x - special.gammaln(a) - np.log(2.0)
        step = f / np.exp(logpdf)
        x = max(x - step, 0.5 * x)
        if abs(step) <= 1e-15 * x:
            break
    return float(x)


# -- estimators -------------------------------------------------------------


def _residual_stack(residuals):
    Y = as_sym(np.asarray(residuals, dtype=np.float64))
    if Y.ndim < 3 or Y.shape[-3] < 1:
        raise InvalidShapeError("residuals must have shape (..., n, p, p) with n >= 1")
    return Y


def estimate_sigma(tangent_residuals):
    """``(1/n) sum vecd(Y_i) vecd(Y_i)'`` with no mean subtraction."""
    Y = _residual_stack(tangent_residuals)
    v = vecd(Y)
    return np.swapaxes(v, -1, -2) @ v / Y.shape[-3]


def estimate_k(tangent_residuals):
    """Curvature correction ``I + D' mean[(Y-Y)^2/12 + (Y-Y)^4/720] D``.

    ``Y-Y`` is the Kronecker difference of each residual.  Only the two
    leading series terms are used.
    """
    Y = _residual_stack(tangent_residuals)
    p = Y.shape[-1]
    D = duplication_matrix(p)
    K2 = kron_diff(Y)
    K2 = K2 @ K2
    series = (K2 / 12.0 + (K2 @ K2) / 720.0).mean(axis=-3)
    out = np.eye(dim_q(p)) + D.T @ series @ D
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def centered_cov(V):
    """Covariance of the rows of ``V`` (divisor ``n``)."""
    Vc = V - V.mean(axis=-2, keepdims=True)
    return np.swapaxes(Vc, -1, -2) @ Vc / V.shape[-2]


def _singular_mask(sigma):
    w = np.linalg.eigvalsh(sigma)
    q = sigma.shape[-1]
    tol = q * np.finfo(np.float64).eps * np.maximum(w[..., -1], 0.0)
    return (w[..., 0] <= tol) | (w[..., 0] <= 0), w


# -- confidence regions -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConfidenceRegion:
    """Ellipsoidal region ``n z' K S^{-1} K z <= chi2_{q, 1-alpha}`` in a tangent space.

    Fields may carry leading batch axes (one region per batch entry).
    """

    kind: MetricKind
    center: np.ndarray
    sigma_hat: np.ndarray
    k_hat: np.ndarray
    n: int
    alpha: float

    @property
    def p(self):
        return self.center.shape[-1]

    @property
    def q(self):
        return dim_q(self.p)

    @property
    def threshold(self):
        return chi2_quantile(1.0 - self.alpha, self.q)

    def precision(self):
        """``K S^{-1} K``, the quadratic-form matrix of the statistic."""
        w, v = np.linalg.eigh(self.sigma_hat)
        inv = (v / w[..., None, :]) @ np.swapaxes(v, -1, -2)
        P = self.k_hat @ inv @ self.k_hat
        return 0.5 * (P + np.swapaxes(P, -1, -2))

    def principal_covariance(self):
        """``K^{-1} S K^{-1}``, whose leading eigenpair gives the extreme points."""
        if self.kind is not MetricKind.CANONICAL:
            return self.sigma_hat
        ki = np.linalg.inv(self.k_hat)
        W = ki @ self.sigma_hat @ ki
        return 0.5 * (W + np.swapaxes(W, -1, -2))


def _check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def fit_region_parts(kind, S, cfg=None):
    """Center, covariance and curvature estimates for each sample in a batch.

    Returns ``(center, sigma_hat, k_hat, singular, karcher)`` where
    ``singular`` flags rank-deficient covariance estimates and ``karcher``
    is the :class:`~spdstat.means.KarcherResult` (``None`` unless canonical).
    No error is raised for singular estimates.
    """
    kind = MetricKind.parse(kind)
    S = as_sample(S)
    p = S.shape[-1]
    q = dim_q(p)
    karcher = None
    if kind is MetricKind.EUCLIDEAN:
        center = mean_euclidean(S)
        sigma = centered_cov(vecd(S))
        k_hat = np.broadcast_to(np.eye(q), sigma.shape).copy()
    elif kind is MetricKind.LOG_EUCLIDEAN:
        center = mean_log_euclidean(S)
        sigma = centered_cov(vecd(spd_log(S)))
        k_hat = np.broadcast_to(np.eye(q), sigma.shape).copy()
    else:
        karcher = karcher_iterate(S, cfg)
        center = karcher.mean
        residuals = spd_log(congruence(spd_invsqrt(center)[..., None, :, :], S))
        sigma = estimate_sigma(residuals)
        k_hat = estimate_k(residuals)
    singular, _ = _singular_mask(sigma)
    return center, sigma, k_hat, singular, karcher


def build_cr(kind, S, alpha=0.05, cfg=None):
    """Confidence region of asymptotic level ``alpha`` for the mean of ``kind``.

    Parameters
    ----------
    kind : MetricKind or str
    S : ndarray, shape (n, p, p)
        Sample of positive definite matrices.
    alpha : float
        Level in (0, 1); the region has nominal coverage ``1 - alpha``.
    cfg : KarcherConfig, optional
        Used for the canonical average.

    Raises
    ------
    SingularCovarianceError
        If the covariance estimate is singular (e.g. ``n <= q``).
    ConvergenceError
        If the canonical average fails to converge.
    """
    kind = MetricKind.parse(kind)
    alpha = _check_alpha(alpha)
    S = as_sample(S)
    if S.ndim != 3:
        raise InvalidShapeError("build_cr expects a single sample of shape (n, p, p)")
    n, p = S.shape[0], S.shape[-1]
    q = dim_q(p)
    center, sigma, k_hat, singular, karcher = fit_region_parts(kind, S, cfg)
    if karcher is not None and not karcher.converged:
        raise ConvergenceError(
            "canonical average did not converge",
            last_iterate=center, residual=float(karcher.residual), iterations=int(karcher.iterations),
        )
    if singular:
        rank = int(np.linalg.matrix_rank(sigma))
        raise SingularCovarianceError(
            f"covariance estimate is singular (rank {rank} < q={q}, n={n})", rank=rank, n=n, q=q
        )
    return ConfidenceRegion(kind, center, sigma, k_hat, n, alpha)


def _tangent_offset(cr, M):
    M = as_spd(M)
    if M.shape[-1] != cr.p:
        raise InvalidArgumentError(f"dimension mismatch: region p={cr.p}, M p={M.shape[-1]}")
    if cr.kind is MetricKind.EUCLIDEAN:
        return vecd(cr.center - M)
    if cr.kind is MetricKind.LOG_EUCLIDEAN:
        return vecd(spd_log(cr.center) - spd_log(M))
    return vecd(spd_log(congruence(spd_invsqrt(M), cr.center)))


def cr_statistic(cr, M):
    """Quadratic statistic of candidate mean ``M``; region membership is ``<= cr.threshold``."""
    z = _tangent_offset(cr, M)
    P = cr.precision()
    return cr.n * np.einsum("...i,...ij,...j->...", z, P, z)


def cr_pvalue(cr, M):
    """Smallest level ``alpha`` at which ``M`` lies inside the region."""
    return chi2_sf(cr_statistic(cr, M), cr.q)


class ExtremePoints(NamedTuple):
    plus: np.ndarray
    minus: np.ndarray


def cr_extreme_points(cr):
    """The two boundary points along the first principal axis (in the tangent space).

    The offset is ``vecd^{-1}(r V1)`` with ``r = sqrt(lambda1 chi2 / n)``,
    which places both points exactly on the region boundary.

    Raises
    ------
    BoundaryViolationError
        Euclidean kind only, if a point falls outside the PD cone.
    """
    lam, V = sym_eig(cr.principal_covariance())
    r = np.sqrt(lam[..., 0] * cr.threshold / cr.n)
    delta = vecd_inv(r[..., None] * V[..., :, 0])
    if cr.kind is MetricKind.EUCLIDEAN:
        pts = (cr.center + delta, cr.center - delta)
        for P in pts:
            if not is_spd(P):
                raise BoundaryViolationError("Euclidean extreme point leaves the positive definite cone")
        return ExtremePoints(*pts)
    if cr.kind is MetricKind.LOG_EUCLIDEAN:
        L = spd_log(cr.center)
        return ExtremePoints(sym_exp(L + delta), sym_exp(L - delta))
    return ExtremePoints(
        riccati_solve(cr.center, sym_exp(delta)),
        riccati_solve(cr.center, sym_exp(-delta)),
    )


# -- multiple testing -------------------------------------------------------


class FdrResult(NamedTuple):
    q_level: float
    rejected: np.ndarray
    threshold: Optional[float]


def bh_fdr(pvalues, q_level=0.05):
    """Benjamini-Hochberg step-up procedure.

    Rejects the ``k`` smallest p-values, ``k = max{i : p_(i) <= i q / m}``.
    ``rejected`` holds the original indices in increasing order and
    ``threshold`` the largest rejected p-value (``None`` if nothing is
    rejected).
    """
    q_level = float(q_level)
    if not 0.0 < q_level < 1.0:
        raise InvalidArgumentError(f"q_level must lie in (0, 1), got {q_level}")
    p = np.asarray(pvalues, dtype=np.float64).ravel()
    if p.size and (np.any(~np.isfinite(p)) or p.min() < 0 or p.max() > 1):
        raise InvalidArgumentError("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return FdrResult(q_level, np.array([], dtype=np.intp), None)
    order = np.argsort(p, kind="stable")
    ok = p[order] <= q_level * np.arange(1, m + 1) / m
    if not ok.any():
        return FdrResult(q_level, np.array([], dtype=np.intp), None)
    k = int(np.flatnonzero(ok)[-1]) + 1
    return FdrResult(q_level, np.sort(order[:k]), float(p[order[k - 1]]))
