import math

import numpy as np
import pytest

from oracles import rand_gl, rand_spd, rand_sym
from spdstat.errors import InvalidArgumentError, InvalidShapeError
from spdstat.geometry import MetricKind, canonical_inner, dist, group_act, riem_exp, riem_log
from spdstat.symcore import as_spd, is_spd, spd_inv, spd_log, sym_exp

KINDS = list(MetricKind)


def test_parse_aliases():
    assert MetricKind.parse("logE") is MetricKind.LOG_EUCLIDEAN
    assert MetricKind.parse("Canonical") is MetricKind.CANONICAL
    assert MetricKind.parse(MetricKind.EUCLIDEAN) is MetricKind.EUCLIDEAN
    with pytest.raises(InvalidArgumentError):
        MetricKind.parse("riemann")


@pytest.mark.parametrize("kind", KINDS)
def test_self_distance_zero(rng, kind):
    X = rand_spd(rng, 3)
    assert dist(kind, X, X) == pytest.approx(0.0, abs=1e-12)


def test_printed_distances():
    assert dist("canonical", np.eye(2), math.e * np.eye(2)) == pytest.approx(math.sqrt(2), rel=1e-14)
    d = dist("log-euclidean", np.diag([0.9, 0.1]), np.diag([0.1, 0.9]))
    assert d == pytest.approx(math.sqrt(2) * math.log(9), rel=1e-14)
    assert d == pytest.approx(3.1073448, abs=1e-7)
    assert dist("euclidean", np.diag([0.9, 0.1]), np.diag([0.1, 0.9])) == pytest.approx(0.8 * math.sqrt(2))


def test_dimension_mismatch():
    with pytest.raises((InvalidArgumentError, InvalidShapeError)):
        dist("euclidean", np.eye(2), np.eye(3))


@pytest.mark.parametrize("kind", KINDS)
def test_metric_axioms(rng, kind):
    for _ in range(30):
        A, B, C = (rand_spd(rng, 3) for _ in range(3))
        ab, ba = dist(kind, A, B), dist(kind, B, A)
        assert ab > 0
        assert ab == pytest.approx(ba, rel=1e-9)
        assert dist(kind, A, C) <= ab + dist(kind, B, C) + 1e-12


def test_exp_log_roundtrip(rng):
    err = 0.0
    for _ in range(200):
        M = rand_spd(rng, 3)
        Y = rand_sym(rng, 3, 0.5)
        err = max(err, np.abs(riem_log(M, riem_exp(M, Y)) - Y).max())
    assert err < 1e-9


def test_exp_log_identity_base(rng):
    Y = rand_sym(rng, 3)
    X = rand_spd(rng, 3)
    np.testing.assert_allclose(riem_exp(np.eye(3), Y), sym_exp(Y), rtol=1e-12)
    np.testing.assert_allclose(riem_log(np.eye(3), X), spd_log(X), atol=1e-12)
    np.testing.assert_allclose(riem_exp(X, np.zeros((3, 3))), as_spd(X), rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(riem_log(X, X), 0, atol=1e-12)


def test_log_norm_is_distance(rng):
    for _ in range(30):
        M, X = rand_spd(rng, 3), rand_spd(rng, 3)
        U = riem_log(M, X)
        Mi = spd_inv(M)
        assert np.trace(Mi @ U @ Mi @ U) == pytest.approx(dist("canonical", M, X) ** 2, rel=1e-9, abs=1e-9)
        assert canonical_inner(M, U, U) == pytest.approx(dist("canonical", M, X) ** 2, rel=1e-9)


def test_inner_reduces_to_frobenius(rng):
    Y, Z = rand_sym(rng, 3), rand_sym(rng, 3)
    assert canonical_inner(np.eye(3), Y, Z) == pytest.approx(np.trace(Y @ Z), rel=1e-12)


def test_group_act():
    X = np.eye(2)
    np.testing.assert_array_equal(group_act(np.eye(2), X), X)
    np.testing.assert_array_equal(group_act(np.diag([2.0, 1.0]), X), np.diag([4.0, 1.0]))
    with pytest.raises(InvalidArgumentError):
        group_act(np.array([[1.0, 2.0], [2.0, 4.0]]), X)


def test_canonical_invariances(rng):
    for _ in range(50):
        M, X = rand_spd(rng, 3), rand_spd(rng, 3)
        G = rand_gl(rng, 3)
        d = dist("canonical", M, X)
        assert dist("canonical", group_act(G, M), group_act(G, X)) == pytest.approx(d, abs=1e-9)
        assert dist("canonical", spd_inv(M), spd_inv(X)) == pytest.approx(d, abs=1e-9)
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        # orthogonal similarity keeps symmetry
        assert dist("canonical", Q @ M @ Q.T, Q @ X @ Q.T) == pytest.approx(d, abs=1e-9)


def test_euclidean_not_complete():
    M, Y = np.eye(2), -2 * np.eye(2)
    assert not is_spd(M + Y)
    assert is_spd(riem_exp(M, Y))
