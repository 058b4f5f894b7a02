import io

import numpy as np
import pytest

from oracles import bh_bruteforce, rand_spd
from spdstat.errors import ConfigError, InvalidArgumentError
from spdstat.geometry import MetricKind, group_act
from spdstat.pipeline import (
    compute_averages,
    ellipsoid_axes,
    fa,
    parse_pair,
    pdd,
    pdd_angle,
    voxelwise_analysis,
    write_report,
    write_summary,
)
from spdstat.volume import Region, TensorVolume, synth_volume

PAIRS = ["log-euclidean:euclidean", "euclidean:log-euclidean", "canonical:log-euclidean", "log-euclidean:canonical"]


def rot(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    return Q * np.sign(np.linalg.det(Q))


def vol_ln1(seed=2, dims=(6, 5, 2), n=20):
    regions = [Region((0, dims[0], 0, dims[1], 0, dims[2]), np.diag([0.8, 0.7, 0.6]), 0.05 * np.eye(6)),
               Region((0, 3, 0, dims[1], 0, dims[2]), np.diag([1.7, 0.35, 0.3]), 0.05 * np.eye(6))]
    return synth_volume(dims, 3, n, regions, seed=seed)


class TestSummaries:
    def test_fa_values(self):
        assert fa(2 * np.eye(3)) == pytest.approx(0.0, abs=1e-15)
        assert fa(np.diag([1, 1e-9, 1e-9])) == pytest.approx(1.0, abs=1e-6)
        assert fa(np.diag([2.0, 1, 1])) == pytest.approx(1 / np.sqrt(6), rel=1e-14)
        with pytest.raises(InvalidArgumentError):
            fa(np.eye(2))

    def test_fa_invariance(self, rng):
        X = rand_spd(rng, 3)
        R = rot(rng)
        assert fa(R @ X @ R.T) == pytest.approx(fa(X), rel=1e-12)
        assert fa(7.5 * X) == pytest.approx(fa(X), rel=1e-12)

    def test_pdd(self, rng):
        np.testing.assert_array_equal(pdd(np.diag([3.0, 2, 1])), [1, 0, 0])
        np.testing.assert_array_equal(pdd(np.eye(3)), [1, 0, 0])
        for _ in range(20):
            X, R = rand_spd(rng, 3), rot(rng)
            assert pdd_angle(pdd(R @ X @ R.T), R @ pdd(X)) < 1e-6

    def test_angle(self, rng):
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        assert pdd_angle(u, u) == pytest.approx(0, abs=1e-6)
        assert pdd_angle(u, -u) == pytest.approx(0, abs=1e-6)
        v = np.cross(u, [1.0, 0, 0])
        assert pdd_angle(u, v / np.linalg.norm(v)) == pytest.approx(90.0, abs=1e-12)

    def test_ellipsoid(self, rng):
        e = ellipsoid_axes(np.diag([4.0, 1.0]))
        np.testing.assert_array_equal(e.lengths, [2, 1])
        np.testing.assert_array_equal(np.abs(e.directions), np.eye(2))
        np.testing.assert_array_equal(ellipsoid_axes(np.eye(3)).lengths, np.ones(3))
        X, R = rand_spd(rng, 3), rot(rng)
        a, b = ellipsoid_axes(X), ellipsoid_axes(group_act(R, X))
        np.testing.assert_allclose(b.lengths, a.lengths, rtol=1e-12)
        np.testing.assert_allclose(np.abs(b.directions), np.abs(R @ a.directions), atol=1e-9)
        assert len(a.triplets()) == 3


class TestPairs:
    def test_parse(self):
        assert parse_pair("logE:euclidean") == (MetricKind.LOG_EUCLIDEAN, MetricKind.EUCLIDEAN)
        with pytest.raises(ConfigError):
            parse_pair("canonical:euclidean")
        with pytest.raises(ConfigError):
            parse_pair("canonical")


class TestAnalysis:
    def test_zero_dispersion(self):
        M = np.diag([1.5, 0.6, 0.4])
        vol = synth_volume((3, 2, 1), 3, 10, [Region((0, 3, 0, 2, 0, 1), M, np.zeros((6, 6)))])
        res = voxelwise_analysis(vol, pairs=PAIRS)
        for pr in res.pairs:
            assert np.all(res.pvalues(pr) == 1.0)
            assert res.summary[pr].n_significant == 0 and res.summary[pr].n_fdr_rejected == 0
        assert res.n_degenerate == 0

    def test_fdr_matches_oracle(self):
        res = voxelwise_analysis(vol_ln1(), pairs=PAIRS, fdr_q=0.2)
        for pr in res.pairs:
            pv = res.pvalues(pr)
            assert res.summary[pr].n_fdr_rejected == len(bh_bruteforce(pv, 0.2))
            assert np.all((pv >= 0) & (pv <= 1))

    def test_reports_ranges(self):
        res = voxelwise_analysis(vol_ln1(), pairs=PAIRS)
        assert len(res.reports) == 60
        for r in res.reports:
            assert all(0 <= v <= 1 for v in r.fa.values())
            for pres in r.pairs.values():
                assert 0 <= pres.angle <= 90 and 0 <= pres.pvalue <= 1

    def test_parallel_determinism(self):
        vol = vol_ln1(dims=(9, 7, 2))
        outs = []
        for workers, chunk in ((1, 512), (4, 7), (3, 1)):
            buf = io.StringIO()
            write_report(voxelwise_analysis(vol, pairs=PAIRS, workers=workers, chunk_size=chunk), buf)
            outs.append(buf.getvalue())
        assert outs[0] == outs[1] == outs[2]

    def test_karcher_failure_flagged(self):
        from spdstat.means import KarcherConfig

        res = voxelwise_analysis(vol_ln1(), pairs=["canonical:log-euclidean"],
                                 cfg=KarcherConfig(tol=1e-15, max_iter=1, init="euclidean"))
        assert res.n_karcher_failed == 60
        assert res.summary[parse_pair("canonical:log-euclidean")].n_tested == 0

    def test_empty_mask(self):
        vol = TensorVolume((2, 2, 1), 3, 5, np.zeros((4, 5, 6)), np.zeros(4, bool))
        res = voxelwise_analysis(vol, pairs=PAIRS)
        buf = io.StringIO()
        write_report(res, buf)
        assert buf.getvalue().count("\n") == 1
        write_summary(res, io.StringIO())

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            voxelwise_analysis(vol_ln1(), pairs=[])
        with pytest.raises(ConfigError):
            voxelwise_analysis(vol_ln1(), pairs=PAIRS, alpha=0)

    def test_compute_averages(self):
        vol = vol_ln1()
        from spdstat.means import mean_canonical, mean_log_euclidean

        i = int(vol.masked_indices()[5])
        avg, ok = compute_averages(vol, "log-euclidean")
        np.testing.assert_allclose(avg[i], mean_log_euclidean(vol.matrices(i)), rtol=1e-14)
        avg, ok = compute_averages(vol, "canonical", chunk_size=13)
        assert ok[vol.mask].all()
        assert avg[i].tobytes() == mean_canonical(vol.matrices(i)).mean.tobytes()
