"""Voxelwise analysis: per-voxel averages, FA/PDD summaries and cross-average p-value maps."""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .geometry import MetricKind
from .inference import ConfidenceRegion, bh_fdr, chi2_sf, cr_statistic, fit_region_parts
from .means import KarcherConfig, karcher_iterate, mean_euclidean, mean_log_euclidean
from .symcore import as_spd, dim_q, sym_eig, vecd_inv

SUPPORTED_PAIRS = (
    (MetricKind.LOG_EUCLIDEAN, MetricKind.EUCLIDEAN),
    (MetricKind.EUCLIDEAN, MetricKind.LOG_EUCLIDEAN),
    (MetricKind.CANONICAL, MetricKind.LOG_EUCLIDEAN),
    (MetricKind.LOG_EUCLIDEAN, MetricKind.CANONICAL),
)

# relative Frobenius gap under which two averages are treated as identical in
# voxels whose covariance estimate is singular
_COINCIDE_RTOL = 1e-10


# -- tensor summaries -------------------------------------------------------


def _check_p3(X):
    X = as_spd(X)
    if X.shape[-1] != 3:
        raise InvalidArgumentError(f"diffusion tensor summaries need p = 3, got p = {X.shape[-1]}")
    return X


def fa(X):
    """Fractional anisotropy ``sqrt(3/2) |lambda - mean(lambda)| / |lambda|``."""
    X = _check_p3(X)
    w = np.linalg.eigvalsh(X)
    dev = w - w.mean(axis=-1, keepdims=True)
    val = np.sqrt(1.5) * np.linalg.norm(dev, axis=-1) / np.linalg.norm(w, axis=-1)
    return np.clip(val, 0.0, 1.0)


def pdd(X):
    """Principal diffusion direction: unit eigenvector of the largest eigenvalue.

    Sign-normalized so the first nonzero component is positive; isotropic
    tensors return the first coordinate axis.
    """
    X = _check_p3(X)
    return sym_eig(X).eigenvectors[..., :, 0]


def pdd_angle(u, v):
    """Axial angle in degrees between two directions, in ``[0, 90]``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    c = np.abs(np.sum(u * v, axis=-1))
    c = c / (np.linalg.norm(u, axis=-1) * np.linalg.norm(v, axis=-1))
    return np.degrees(np.arccos(np.clip(c, 0.0, 1.0)))


class EllipsoidSpec(NamedTuple):
    """Semiaxis lengths (descending) and unit directions (columns) of ``{w : w' X^{-1} w = 1}``."""

    lengths: np.ndarray
    directions: np.ndarray

    def triplets(self):
        """``[(length, direction), ...]`` for external plotting."""
        return [(float(self.lengths[k]), self.directions[:, k].copy()) for k in range(self.lengths.size)]


def ellipsoid_axes(X):
    lam, V = sym_eig(as_spd(X))
    return EllipsoidSpec(np.sqrt(lam), V)


# -- voxelwise analysis -----------------------------------------------------


def parse_pair(text):
    """``"<avg>:<cr>"`` -> ``(MetricKind, MetricKind)``, restricted to the supported pairs."""
    if isinstance(text, tuple):
        pair = tuple(MetricKind.parse(t) for t in text)
    else:
        parts = str(text).split(":")
        if len(parts) != 2:
            raise ConfigError(f"pair must look like <avg>:<cr>, got {text!r}")
        try:
            pair = tuple(MetricKind.parse(t) for t in parts)
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from None
    if pair not in SUPPORTED_PAIRS:
        names = ", ".join(f"{a.value}:{c.value}" for a, c in SUPPORTED_PAIRS)
        raise ConfigError(f"unsupported pair {text!r}; choose from {names}")
    return pair


@dataclass
class PairResult:
    pvalue: float
    fa_diff: Optional[float]
    angle: Optional[float]


@dataclass
class VoxelReport:
    index: int
    coords: Tuple[int, int, int]
    status: str  # "ok", "karcher-failed" or "degenerate"
    means: Dict[MetricKind, np.ndarray] = field(default_factory=dict)
    fa: Dict[MetricKind, float] = field(default_factory=dict)
    pdd: Dict[MetricKind, np.ndarray] = field(default_factory=dict)
    pairs: Dict[Tuple[MetricKind, MetricKind], PairResult] = field(default_factory=dict)


@dataclass
class PairSummary:
    n_tested: int
    n_significant: int
    n_fdr_rejected: int
    fdr_threshold: Optional[float]
    min_pvalue: Optional[float]


@dataclass
class AnalysisResult:
    reports: List[VoxelReport]
    pairs: List[Tuple[MetricKind, MetricKind]]
    kinds: List[MetricKind]
    alpha: float
    fdr_q: float
    n_karcher_failed: int
    n_degenerate: int
    summary: Dict[Tuple[MetricKind, MetricKind], PairSummary]

    def pvalues(self, pair, valid_only=True):
        pair = parse_pair(pair)
        vals = [r.pairs[pair].pvalue for r in self.reports if r.status == "ok" or not valid_only]
        return np.array(vals)


def _analyze_chunk(S, kinds, pairs, alpha, cfg):
    parts = {k: fit_region_parts(k, S, cfg) for k in kinds}
    m, n = S.shape[0], S.shape[1]
    p = S.shape[-1]
    q = dim_q(p)
    failed = np.zeros(m, dtype=bool)
    if MetricKind.CANONICAL in parts:
        failed = ~np.asarray(parts[MetricKind.CANONICAL][4].converged)
    degenerate = np.zeros(m, dtype=bool)
    pvals = {}
    for avg, crk in pairs:
        center, sigma, k_hat, singular, _ = parts[crk]
        tested = parts[avg][0]
        safe_sigma = np.where(singular[:, None, None], np.eye(q), sigma)
        cr = ConfidenceRegion(crk, center, safe_sigma, k_hat, n, alpha)
        pv = chi2_sf(cr_statistic(cr, tested), q)
        if singular.any():
            gap = np.linalg.norm(tested - center, axis=(-2, -1))
            same = gap <= _COINCIDE_RTOL * np.linalg.norm(center, axis=(-2, -1))
            pv = np.where(singular, np.where(same, 1.0, np.nan), pv)
            degenerate |= singular & ~same
        pvals[(avg, crk)] = pv
    means = {k: parts[k][0] for k in kinds}
    fas, pdds = {}, {}
    if p == 3:
        for k in kinds:
            fas[k] = fa(means[k])
            pdds[k] = pdd(means[k])
    return means, fas, pdds, pvals, failed, degenerate


def voxelwise_analysis(vol, kinds=None, pairs=None, alpha=0.05, fdr_q=0.2, cfg=None,
                       workers=1, chunk_size=512):
    """Run the per-voxel averages and cross-average p-value maps.

    Parameters
    ----------
    vol : TensorVolume
    kinds : sequence of MetricKind, optional
        Averages to report; those needed by ``pairs`` are always included.
    pairs : sequence of ``"<avg>:<cr>"`` or ``(avg, cr)``
        Each pair yields, per voxel, the p-value of the ``avg`` average
        under the ``cr`` confidence region.
    alpha : float
        Cutoff for the "significant" count in the summary.
    fdr_q : float
        Benjamini-Hochberg level applied to each pair's p-value map.
    workers, chunk_size
        Voxels are processed in chunks, optionally on a thread pool.  The
        output does not depend on either setting.

    Notes
    -----
    Voxels where the canonical average fails to converge are reported
    with status ``"karcher-failed"`` and excluded from the summaries.
    Voxels with a singular covariance estimate get p-value 1 when the two
    averages coincide and status ``"degenerate"`` otherwise.
    """
    cfg = cfg or KarcherConfig()
    pairs = [parse_pair(pr) for pr in (pairs or [])]
    wanted = [MetricKind.parse(k) for k in (kinds or [])]
    for a, c in pairs:
        wanted += [a, c]
    kinds = [k for k in MetricKind if k in wanted]
    if not kinds:
        raise ConfigError("nothing to compute: give at least one average kind or pair")
    if not 0 < alpha < 1 or not 0 < fdr_q < 1:
        raise ConfigError("alpha and fdr_q must lie in (0, 1)")

    idx = vol.masked_indices()
    chunks = [idx[s:s + chunk_size] for s in range(0, idx.size, max(1, int(chunk_size)))]

    def run(chunk):
        return _analyze_chunk(vecd_inv(vol.data[chunk]), kinds, pairs, alpha, cfg)

    if workers and workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as ex:
            outputs = list(ex.map(run, chunks))
    else:
        outputs = [run(c) for c in chunks]

    reports = []
    for chunk, (means, fas, pdds, pvals, failed, degenerate) in zip(chunks, outputs):
        for j, i in enumerate(chunk):
            status = "karcher-failed" if failed[j] else ("degenerate" if degenerate[j] else "ok")
            rep = VoxelReport(int(i), tuple(int(c) for c in vol.coords(int(i))), status)
            for k in kinds:
                rep.means[k] = means[k][j]
                if fas:
                    rep.fa[k] = float(fas[k][j])
                    rep.pdd[k] = pdds[k][j]
            for a, c in pairs:
                fd = ang = None
                if fas:
                    fd = rep.fa[a] - rep.fa[c]
                    ang = float(pdd_angle(rep.pdd[a], rep.pdd[c]))
                rep.pairs[(a, c)] = PairResult(float(pvals[(a, c)][j]), fd, ang)
            reports.append(rep)

    summary = {}
    for pr in pairs:
        pv = np.array([r.pairs[pr].pvalue for r in reports if r.status == "ok"])
        fdr = bh_fdr(pv, fdr_q)
        summary[pr] = PairSummary(
            n_tested=int(pv.size),
            n_significant=int(np.sum(pv < alpha)),
            n_fdr_rejected=int(fdr.rejected.size),
            fdr_threshold=fdr.threshold,
            min_pvalue=float(pv.min()) if pv.size else None,
        )
    return AnalysisResult(
        reports, pairs, kinds, alpha, fdr_q,
        n_karcher_failed=sum(r.status == "karcher-failed" for r in reports),
        n_degenerate=sum(r.status == "degenerate" for r in reports),
        summary=summary,
    )


def compute_averages(vol, method, cfg=None, chunk_size=512):
    """Per-voxel average of one kind; returns ``(averages (nvox, p, p), ok mask)``."""
    kind = MetricKind.parse(method)
    cfg = cfg or KarcherConfig()
    out = np.zeros((vol.nvox, vol.p, vol.p))
    ok = np.zeros(vol.nvox, dtype=bool)
    idx = vol.masked_indices()
    for s in range(0, idx.size, chunk_size):
        chunk = idx[s:s + chunk_size]
        S = vecd_inv(vol.data[chunk])
        if kind is MetricKind.EUCLIDEAN:
            out[chunk] = mean_euclidean(S)
            ok[chunk] = True
        elif kind is MetricKind.LOG_EUCLIDEAN:
            out[chunk] = mean_log_euclidean(S)
            ok[chunk] = True
        else:
            res = karcher_iterate(S, cfg)
            out[chunk] = res.mean
            ok[chunk] = res.converged
    return out, ok


# -- reports ----------------------------------------------------------------


def _fmt(x):
    if x is None:
        return ""
    return repr(float(x))


def write_report(result, fh):
    """Tab-delimited per-voxel report with a header row."""
    w = csv.writer(fh, delimiter="\t", lineterminator="\n")
    header = ["index", "x", "y", "z", "status"]
    has_fa = any(r.fa for r in result.reports)
    for k in result.kinds:
        if has_fa:
            header += [f"fa_{k.value}", f"pdd_{k.value}_x", f"pdd_{k.value}_y", f"pdd_{k.value}_z"]
    for a, c in result.pairs:
        tag = f"{a.value}_vs_{c.value}_cr"
        header += [f"p_{tag}"]
        if has_fa:
            header += [f"fa_diff_{tag}", f"angle_{tag}"]
    w.writerow(header)
    for r in result.reports:
        row = [r.index, *r.coords, r.status]
        for k in result.kinds:
            if has_fa:
                row += [_fmt(r.fa[k]), *(_fmt(v) for v in r.pdd[k])]
        for pr in result.pairs:
            pres = r.pairs[pr]
            row += [_fmt(pres.pvalue)]
            if has_fa:
                row += [_fmt(pres.fa_diff), _fmt(pres.angle)]
        w.writerow(row)


def write_summary(result, fh):
    w = csv.writer(fh, delimiter="\t", lineterminator="\n")
    w.writerow(["pair", "n_tested", f"n_p_below_{result.alpha:g}", f"n_bh_rejected_q{result.fdr_q:g}",
                "bh_threshold", "min_pvalue", "n_karcher_failed", "n_degenerate"])
    for (a, c), s in result.summary.items():
        w.writerow([f"{a.value}:{c.value}", s.n_tested, s.n_significant, s.n_fdr_rejected,
                    _fmt(s.fdr_threshold), _fmt(s.min_pvalue), result.n_karcher_failed, result.n_degenerate])
