import struct

import numpy as np
import pytest

from oracles import rand_spd
from spdstat.errors import ConfigError, VolumeFormatError
from spdstat.symcore import vecd, vecd_inv
from spdstat.volume import MAGIC, Region, TensorVolume, load_volume, parse_volume, save_volume, synth_volume

SIG = 0.05 * np.eye(6)


def small_volume(seed=0, model="typeI"):
    regions = [Region((0, 4, 0, 3, 0, 2), np.diag([0.8, 0.7, 0.6]), SIG, model),
               Region((0, 2, 0, 3, 0, 1), np.diag([1.7, 0.35, 0.3]), SIG, model)]
    return synth_volume((5, 3, 2), 3, 6, regions, seed=seed)


def test_layout_and_mask():
    vol = small_volume()
    assert vol.data.shape == (30, 6, 6)
    assert vol.mask.sum() == 24  # x == 4 is not covered
    assert not vol.mask[vol.linear_index(4, 0, 0)]
    assert vol.linear_index(1, 2, 1) == 1 + 5 * (2 + 3 * 1)
    assert vol.coords(vol.linear_index(3, 1, 1)) == (3, 1, 1)
    vol.check_spd()


def test_same_seed_identical(tmp_path):
    a, b = small_volume(3), small_volume(3)
    save_volume(a, tmp_path / "a")
    save_volume(b, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert small_volume(4).data.tobytes() != a.data.tobytes()


def test_region_order_override():
    vol = small_volume()
    i = vol.linear_index(0, 0, 0)
    # later region (WM-like) wins: large leading eigenvalue
    assert np.linalg.eigvalsh(vol.matrices(i)).max() > 1.2


def test_zero_variance_is_m():
    M = rand_spd(np.random.default_rng(1), 3)
    vol = synth_volume((2, 2, 1), 3, 4, [Region((0, 2, 0, 2, 0, 1), M, np.zeros((6, 6)))], seed=9)
    for i in range(4):
        np.testing.assert_allclose(vol.matrices(i), np.broadcast_to(M, (4, 3, 3)), rtol=0, atol=1e-15)


def test_bad_config():
    with pytest.raises(ConfigError):
        synth_volume((2, 2, 1), 3, 4, [])
    with pytest.raises(ConfigError):
        synth_volume((2, 2, 1), 3, 4, [Region((0, 3, 0, 2, 0, 1), np.eye(3), SIG)])
    with pytest.raises(ConfigError):
        synth_volume((2, 2, 1), 3, 4, [Region((1, 1, 0, 2, 0, 1), np.eye(3), SIG)])
    with pytest.raises(ConfigError):
        synth_volume((2, 2, 1), 3, 4, [Region((0, 2, 0, 2, 0, 1), np.eye(3), SIG, "typeIII")])
    with pytest.raises(ConfigError):
        synth_volume((2, 2, 1), 2, 4, [Region((0, 2, 0, 2, 0, 1), np.eye(3), SIG)])


def test_roundtrip(tmp_path):
    vol = small_volume(model="typeII")
    save_volume(vol, tmp_path / "v")
    back = load_volume(tmp_path / "v")
    assert back.dims == vol.dims and back.p == 3 and back.n == 6
    assert back.data.tobytes() == vol.data.tobytes()
    np.testing.assert_array_equal(back.mask, vol.mask)


def test_header_bytes(tmp_path):
    vol = small_volume()
    save_volume(vol, tmp_path / "v")
    raw = (tmp_path / "v").read_bytes()
    assert raw[:8] == MAGIC
    assert struct.unpack("<5I", raw[8:28]) == (5, 3, 2, 3, 6)
    assert len(raw) == 28 + 30 + 8 * 30 * 6 * 6


def _raw():
    vol = small_volume()
    raw = bytearray(MAGIC + struct.pack("<5I", *vol.dims, vol.p, vol.n))
    raw += vol.mask.astype(np.uint8).tobytes() + vol.data.tobytes()
    return bytes(raw)


@pytest.mark.parametrize("cut", [4, 12, 40, 500, -1])
def test_truncated(cut):
    raw = _raw()
    with pytest.raises(VolumeFormatError) as exc:
        parse_volume(raw[:cut])
    assert exc.value.offset is not None


def test_bad_magic_and_fields():
    raw = _raw()
    with pytest.raises(VolumeFormatError) as exc:
        parse_volume(b"SPDVOL02" + raw[8:])
    assert exc.value.offset == 0
    bad = bytearray(raw)
    bad[8 + 12:8 + 16] = struct.pack("<I", 0)  # p = 0
    with pytest.raises(VolumeFormatError) as exc:
        parse_volume(bytes(bad))
    assert exc.value.offset == 20
    bad = bytearray(raw)
    bad[29] = 2
    with pytest.raises(VolumeFormatError) as exc:
        parse_volume(bytes(bad))
    assert exc.value.offset == 29
    with pytest.raises(VolumeFormatError):
        parse_volume(raw + b"\0")


def test_non_spd_voxel():
    vol = small_volume()
    data = vol.data.copy()
    data[0, 2] = vecd(-np.eye(3))
    raw = MAGIC + struct.pack("<5I", *vol.dims, 3, 6) + vol.mask.astype(np.uint8).tobytes() + data.tobytes()
    with pytest.raises(VolumeFormatError) as exc:
        parse_volume(raw)
    assert exc.value.offset == 28 + 30


def test_empty_mask(tmp_path):
    vol = TensorVolume((2, 2, 1), 2, 3, np.zeros((4, 3, 3)), np.zeros(4, bool))
    save_volume(vol, tmp_path / "e")
    back = load_volume(tmp_path / "e")
    assert back.masked_indices().size == 0
