"""Euclidean, log-Euclidean and canonical (Karcher) averages of PD samples."""

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import ConvergenceError, InvalidArgumentError, InvalidShapeError
from .symcore import (
    _eigh,
    _reconstruct,
    as_spd,
    congruence,
    spd_invsqrt,
    spd_log,
    spd_sqrt,
    sym_exp,
)


def as_sample(S):
    """Validate a sample ``(..., n, p, p)`` of positive definite matrices."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim < 3:
        raise InvalidShapeError(f"sample must have shape (..., n, p, p), got {S.shape}")
    if S.shape[-3] < 1:
        raise InvalidShapeError("sample must contain at least one matrix")
    return as_spd(S)


def mean_euclidean(S):
    """Arithmetic average; positive definite by convexity of the cone."""
    S = as_sample(S)
    return S.sum(axis=-3) / S.shape[-3]


def mean_log_euclidean(S):
    """``exp(mean(log X_i))``."""
    S = as_sample(S)
    return sym_exp(spd_log(S).sum(axis=-3) / S.shape[-3])


@dataclass(frozen=True)
class KarcherConfig:
    """Stopping rule and starting point for the canonical fixed-point iteration.

    ``init`` is ``"euclidean"``, ``"log-euclidean"`` or an explicit
    positive definite starting matrix.
    """

    tol: float = 1e-12
    max_iter: int = 100
    init: Union[str, np.ndarray] = "log-euclidean"

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidArgumentError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidArgumentError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if isinstance(self.init, str) and self.init not in ("euclidean", "log-euclidean"):
            raise InvalidArgumentError(f"unknown init {self.init!r}")


class KarcherResult(NamedTuple):
    mean: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    converged: np.ndarray


def _tangent_mean(X, S):
    # (1/n) sum log(X^{-1/2} S_i X^{-1/2}) together with X^{1/2}
    w, v = _eigh(X)
    s = _reconstruct(np.sqrt(w), v)
    si = _reconstruct(1.0 / np.sqrt(w), v)
    Y = spd_log(congruence(si[..., None, :, :], S)).mean(axis=-3)
    return Y, s


def karcher_iterate(S, cfg=None):
    """Batched canonical averaging without raising on non-convergence.

    ``S`` has shape ``(..., n, p, p)``; each leading index is an
    independent sample.  Converged entries are frozen, so every entry
    follows exactly the iteration it would follow on its own.
    """
    cfg = cfg or KarcherConfig()
    S = as_sample(S)
    batch = S.shape[:-3]
    p = S.shape[-1]
    flat = S.reshape((-1,) + S.shape[-3:])
    m = flat.shape[0]

    if isinstance(cfg.init, str):
        if cfg.init == "euclidean":
            X = flat.mean(axis=-3)
        else:
            X = sym_exp(spd_log(flat).mean(axis=-3))
    else:
        X0 = as_spd(cfg.init)
        if X0.shape[-1] != p:
            raise InvalidShapeError(f"init has dimension {X0.shape[-1]}, sample has {p}")
        X = np.broadcast_to(X0, (m, p, p)).copy()

    iters = np.zeros(m, dtype=np.int64)
    resid = np.full(m, np.inf)
    done = np.zeros(m, dtype=bool)
    active = np.arange(m)
    for _ in range(int(cfg.max_iter)):
        Y, s = _tangent_mean(X[active], flat[active])
        r = np.sqrt(np.sum(Y * Y, axis=(-2, -1)))
        iters[active] += 1
        resid[active] = r
        hit = r < cfg.tol
        done[active[hit]] = True
        step = ~hit
        if step.any():
            X[active[step]] = congruence(s[step], sym_exp(Y[step]))
        active = active[step]
        if active.size == 0:
            break
    return KarcherResult(
        X.reshape(batch + (p, p)),
        iters.reshape(batch),
        resid.reshape(batch),
        done.reshape(batch),
    )


def mean_canonical(S, cfg=None):
    """Canonical geometric (Karcher) average by fixed-point iteration.

    Each step maps the sample to the tangent space at the current iterate,
    averages there and maps back.  The iteration stops at the first
    iterate whose mean tangent residual has Frobenius norm below
    ``cfg.tol``; that iterate is returned.

    Returns
    -------
    KarcherResult
        ``(mean, iterations, residual, converged)``; ``iterations`` counts
        residual evaluations.

    Raises
    ------
    ConvergenceError
        If any sample fails to reach ``cfg.tol`` within ``cfg.max_iter``.
    """
    res = karcher_iterate(S, cfg)
    if not np.all(res.converged):
        bad = ~np.asarray(res.converged)
        raise ConvergenceError(
            f"canonical average did not converge in {(cfg or KarcherConfig()).max_iter} iterations "
            f"(residual {np.max(np.asarray(res.residual)[bad]):.3e})",
            last_iterate=res.mean,
            residual=float(np.max(np.asarray(res.residual)[bad])),
            iterations=int(np.max(res.iterations)),
        )
    if res.mean.ndim == 2:
        return KarcherResult(res.mean, int(res.iterations), float(res.residual), True)
    return res


def canonical_residual(Xc, S):
    """Norm of ``(1/n) sum log(Xc^{-1/2} S_i Xc^{-1/2})``; zero at the canonical average."""
    Xc = as_spd(Xc)
    S = as_sample(S)
    si = spd_invsqrt(Xc)
    Y = spd_log(congruence(si[..., None, :, :], S)).mean(axis=-3)
    return np.sqrt(np.sum(Y * Y, axis=(-2, -1)))


def geo_mean_pair(A, B):
    """Two-point geometric mean ``A # B = A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}``."""
    A = as_spd(A)
    B = as_spd(B)
    if A.shape != B.shape:
        raise InvalidArgumentError(f"dimension mismatch: {A.shape} vs {B.shape}")
    s = spd_sqrt(A)
    si = spd_invsqrt(A)
    return congruence(s, spd_sqrt(congruence(si, B)))


def riccati_solve(Xr, B):
    """Solve ``M^{-1/2} Xr M^{-1/2} = B`` for positive definite ``M``.

    ``M^{1/2}`` is the geometric mean of ``B^{-1}`` and ``Xr``, i.e. the
    positive definite ``N`` with ``N B N = Xr``; then ``M = N^2``.
    """
    Xr = as_spd(Xr)
    B = as_spd(B)
    if Xr.shape != B.shape:
        raise InvalidArgumentError(f"dimension mismatch: {Xr.shape} vs {B.shape}")
    bs = spd_sqrt(B)
    bi = spd_invsqrt(B)
    N = congruence(bi, spd_sqrt(congruence(bs, Xr)))
    M = N @ N
    return 0.5 * (M + np.swapaxes(M, -1, -2))
