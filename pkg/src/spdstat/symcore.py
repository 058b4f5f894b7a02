"""Symmetric-matrix linear algebra kernels.

All functions accept a single ``(p, p)`` matrix or a stack ``(..., p, p)``
and operate on the trailing two axes.  Matrix functions are computed
spectrally from a symmetric eigendecomposition, so they never leave the
symmetric (or positive definite) class.
"""

from functools import lru_cache
from math import isqrt, sqrt
from typing import NamedTuple

import numpy as np

from .errors import (
    InvalidArgumentError,
    InvalidShapeError,
    NotPositiveDefiniteError,
    NumericFailure,
    NumericOverflowError,
)

SQRT2 = sqrt(2.0)
_EXP_MAX = np.log(np.finfo(np.float64).max)
# eigenvector components below this are treated as zero for sign normalization
_SIGN_TOL = 1e-12
# relative gap below which two eigenvalues are considered tied
_TIE_RTOL = 1e-12


class EigenDecomposition(NamedTuple):
    """Eigenvalues sorted descending and matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _square(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[-1] < 1:
        raise InvalidShapeError(f"{name} must have shape (..., p, p) with p >= 1, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericFailure(f"{name} contains non-finite entries")
    return a


def as_sym(Y):
    """Validate and symmetrize: returns ``(Y + Y') / 2`` as float64."""
    Y = _square(Y, "symmetric matrix")
    return 0.5 * (Y + np.swapaxes(Y, -1, -2))


def as_spd(X):
    """Validate a positive definite matrix (or stack).

    The input is symmetrized first; any smallest eigenvalue ``<= 0`` is
    rejected with no slack.
    """
    X = as_sym(X)
    w = _eigvalsh(X)
    if np.any(w[..., 0] <= 0):
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (smallest eigenvalue {w[..., 0].min():.3e})"
        )
    return X


def is_spd(X) -> bool:
    try:
        as_spd(X)
    except (NotPositiveDefiniteError, InvalidShapeError, NumericFailure):
        return False
    return True


def _eigvalsh(a):
    try:
        return np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"symmetric eigensolver did not converge: {exc}") from exc


def _eigh(a):
    # raw ascending LAPACK output; only for spectral functions where order is irrelevant
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"symmetric eigensolver did not converge: {exc}") from exc


def _normalize_signs(v):
    mask = np.abs(v) > _SIGN_TOL
    first = np.argmax(mask, axis=-2)[..., None, :]
    lead = np.take_along_axis(v, first, axis=-2)
    sign = np.where(lead < 0, -1.0, 1.0)
    return v * sign


def _order_ties(w, v):
    # within a block of tied eigenvalues, order eigenvectors lexicographically (descending)
    p = w.shape[-1]
    scale = np.maximum(np.abs(w).max(axis=-1, keepdims=True), np.finfo(float).tiny)
    tied = np.abs(np.diff(w, axis=-1)) <= _TIE_RTOL * scale
    if not tied.any():
        return v
    v = v.copy()
    flat_t = tied.reshape(-1, p - 1)
    flat_v = v.reshape(-1, p, p)
    for b in np.flatnonzero(flat_t.any(axis=1)):
        start = 0
        for k in range(1, p + 1):
            if k == p or not flat_t[b, k - 1]:
                if k - start > 1:
                    cols = flat_v[b, :, start:k]
                    # np.lexsort uses the last key as primary: reverse rows, negate for descending
                    order = np.lexsort(-cols[::-1])
                    flat_v[b, :, start:k] = cols[:, order]
                start = k
    return v


def sym_eig(Y) -> EigenDecomposition:
    """Deterministic symmetric eigendecomposition.

    Eigenvalues are sorted descending.  Each eigenvector is sign-normalized
    so its first nonzero component is positive; eigenvectors belonging to
    tied eigenvalues are ordered lexicographically.

    Raises
    ------
    NumericFailure
        If the eigensolver does not converge.
    """
    Y = as_sym(Y)
    w, v = _eigh(Y)
    w = w[..., ::-1].copy()
    v = v[..., ::-1]
    v = _normalize_signs(v)
    v = _order_ties(w, v)
    return EigenDecomposition(w, np.ascontiguousarray(v))


def _reconstruct(w, v):
    out = (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def _spd_eigh(X):
    X = as_sym(X)
    w, v = _eigh(X)
    if np.any(w[..., 0] <= 0):
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (smallest eigenvalue {w[..., 0].min():.3e})"
        )
    return w, v


def sym_exp(Y):
    """Matrix exponential of a symmetric matrix; the result is positive definite."""
    w, v = _eigh(as_sym(Y))
    if np.any(w > _EXP_MAX):
        raise NumericOverflowError(f"eigenvalue {w.max():.6g} overflows exp in float64")
    return _reconstruct(np.exp(w), v)


def spd_log(X):
    """Principal matrix logarithm of a positive definite matrix."""
    w, v = _spd_eigh(X)
    return _reconstruct(np.log(w), v)


def spd_sqrt(X):
    w, v = _spd_eigh(X)
    return _reconstruct(np.sqrt(w), v)


def spd_invsqrt(X):
    w, v = _spd_eigh(X)
    return _reconstruct(1.0 / np.sqrt(w), v)


def spd_inv(X):
    w, v = _spd_eigh(X)
    return _reconstruct(1.0 / w, v)


def spd_power(X, t):
    w, v = _spd_eigh(X)
    return _reconstruct(w ** t, v)


def congruence(G, X):
    """``G X G'`` on the trailing axes, symmetrized."""
    out = G @ X @ np.swapaxes(G, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def spd_logdet(X):
    w, _ = _spd_eigh(X)
    return np.log(w).sum(axis=-1)


# -- vecd -------------------------------------------------------------------


@lru_cache(maxsize=None)
def _offdiag_index(p):
    # below-diagonal entries read columnwise: (1,0), (2,0), ..., (2,1), ...
    rows, cols = [], []
    for j in range(p):
        for i in range(j + 1, p):
            rows.append(i)
            cols.append(j)
    return np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp)


def dim_q(p: int) -> int:
    return p * (p + 1) // 2


def dim_p(q: int) -> int:
    """Inverse of ``q = p(p+1)/2``; raises for non-triangular ``q``."""
    p = (isqrt(8 * q + 1) - 1) // 2
    if q < 1 or p * (p + 1) // 2 != q:
        raise InvalidShapeError(f"length {q} is not p(p+1)/2 for any integer p >= 1")
    return p


def vecd(Y):
    """Isometric vectorization: diagonal, then sqrt(2) times the columnwise lower triangle.

    >>> vecd(np.array([[1.0, 3.0], [3.0, 2.0]]))
    array([1.        , 2.        , 4.24264069])
    """
    Y = as_sym(Y)
    p = Y.shape[-1]
    r, c = _offdiag_index(p)
    diag = np.diagonal(Y, axis1=-2, axis2=-1)
    return np.concatenate([diag, SQRT2 * Y[..., r, c]], axis=-1)


def vecd_inv(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim < 1:
        raise InvalidShapeError("vecd vector must be at least 1-D")
    p = dim_p(v.shape[-1])
    r, c = _offdiag_index(p)
    Y = np.zeros(v.shape[:-1] + (p, p))
    idx = np.arange(p)
    Y[..., idx, idx] = v[..., :p]
    off = v[..., p:] / SQRT2
    Y[..., r, c] = off
    Y[..., c, r] = off
    return Y


@lru_cache(maxsize=None)
def _duplication(p):
    q = dim_q(p)
    D = np.zeros((p * p, q))
    for i in range(p):
        D[i + i * p, i] = 1.0
    r, c = _offdiag_index(p)
    h = 1.0 / SQRT2
    for k, (i, j) in enumerate(zip(r, c)):
        D[i + j * p, p + k] = h
        D[j + i * p, p + k] = h
    D.setflags(write=False)
    return D


def duplication_matrix(p: int):
    """``p**2 x q`` matrix with ``vec(Y) = D vecd(Y)`` and ``D'D = I``.

    ``vec`` is the columnwise (Fortran-order) vectorization.
    """
    if int(p) != p or p < 1:
        raise InvalidArgumentError(f"p must be a positive integer, got {p!r}")
    return _duplication(int(p)).copy()


def vec(A):
    """Columnwise vectorization of the trailing two axes."""
    A = np.asarray(A, dtype=np.float64)
    return np.swapaxes(A, -1, -2).reshape(A.shape[:-2] + (-1,))


def kron_diff(Y):
    """Kronecker difference ``Y (x) I - I (x) Y`` (shape ``p**2 x p**2``)."""
    Y = as_sym(Y)
    p = Y.shape[-1]
    eye = np.eye(p)
    left = Y[..., :, None, :, None] * eye[None, :, None, :]
    right = eye[:, None, :, None] * Y[..., None, :, None, :]
    shape = Y.shape[:-2] + (p * p, p * p)
    return (left - right).reshape(shape)


# -- Goldberg expansion -----------------------------------------------------

# (coefficient, word) pairs of the commutator-free series for log(e^Y e^Z),
# truncated after the degree-5 words.
_GOLDBERG_TERMS = (
    (1.0, "Y"), (1.0, "Z"),
    (1 / 2, "YZ"), (-1 / 2, "ZY"),
    (1 / 12, "YZZ"), (1 / 12, "YYZ"), (1 / 12, "ZYY"), (1 / 12, "ZZY"),
    (-1 / 6, "YZY"), (-1 / 6, "ZYZ"),
    (1 / 24, "YYZZ"), (-1 / 24, "ZZYY"),
    (-1 / 12, "YZYZ"), (1 / 12, "ZYZY"),
    (-1 / 720, "YZZZZ"), (-1 / 720, "YYYYZ"), (-1 / 720, "ZYYYY"), (-1 / 720, "ZZZZY"),
    (1 / 180, "YYZZZ"), (1 / 180, "YYYZZ"), (1 / 180, "ZZYYY"), (1 / 180, "ZZZYY"),
    (1 / 180, "YZYYY"), (1 / 180, "YZZZY"), (1 / 180, "YYYZY"),
    (1 / 180, "ZYZZZ"), (1 / 180, "ZYYYZ"), (1 / 180, "ZZZYZ"),
    (-1 / 120, "YZZYY"), (-1 / 120, "YYZYY"), (-1 / 120, "YYZZY"),
    (-1 / 120, "ZYYZZ"), (-1 / 120, "ZZYZZ"), (-1 / 120, "ZZYYZ"),
    (-1 / 120, "YZYZZ"), (-1 / 120, "YZYYZ"), (-1 / 120, "YZZYZ"), (-1 / 120, "YYZYZ"),
    (-1 / 120, "ZYZYY"), (-1 / 120, "ZYZZY"), (-1 / 120, "ZYYZY"), (-1 / 120, "ZZYZY"),
    (1 / 30, "YZYZY"), (1 / 30, "ZYZYZ"),
)


def bch_goldberg(Y, Z):
    """Truncated Goldberg polynomial approximating ``log(e^Y e^Z)``.

    Keeps every word up to degree 5; the truncation error is
    ``O((|Y| + |Z|)**6)``.  The result is in general not symmetric.
    """
    Y = as_sym(Y)
    Z = as_sym(Z)
    if Y.shape != Z.shape:
        raise InvalidShapeError(f"shape mismatch {Y.shape} vs {Z.shape}")
    YZ = Y @ Z
    if np.array_equal(YZ, Z @ Y):
        # every term past degree 1 is a combination of commutators
        return Y + Z
    letters = {"Y": Y, "Z": Z}
    words = {"YZ": YZ}

    def product(word):
        if word not in words:
            words[word] = letters[word] if len(word) == 1 else product(word[:-1]) @ letters[word[-1]]
        return words[word]

    out = np.zeros_like(Y)
    for coef, word in _GOLDBERG_TERMS:
        out = out + coef * product(word)
    return out
