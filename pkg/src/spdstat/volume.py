"""Tensor volumes: in-memory layout, the SPDVOL01 file format and synthetic generation.

Layout
------
Voxels are addressed by a linear index with ``x`` varying fastest:
``index = x + nx * (y + ny * z)``.  ``data`` has shape ``(nvox, n, q)``
and holds the vecd of each subject matrix (voxel-major, subject-minor).

File format (little endian)::

    8 bytes   magic  b"SPDVOL01"
    5 x u32   nx, ny, nz, p, n
    nvox u8   mask (0 or 1)
    float64   payload, nvox * n * q values in the layout above
"""

import struct
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .distributions import LognormalTypeI, LognormalTypeII, lnI_sample, lnII_sample
from .errors import ConfigError, NotPositiveDefiniteError, VolumeFormatError
from .symcore import as_spd, dim_q, vecd, vecd_inv

MAGIC = b"SPDVOL01"
_HEADER = struct.Struct("<5I")
_HEADER_END = len(MAGIC) + _HEADER.size


@dataclass(eq=False)
class TensorVolume:
    dims: Tuple[int, int, int]
    p: int
    n: int
    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigError(f"dims must be three positive integers, got {self.dims}")
        if self.p < 1 or self.n < 1:
            raise ConfigError(f"p and n must be positive, got p={self.p}, n={self.n}")
        self.data = np.ascontiguousarray(self.data, dtype="<f8").reshape(self.nvox, self.n, self.q)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(self.nvox)

    @property
    def q(self):
        return dim_q(self.p)

    @property
    def nvox(self):
        nx, ny, nz = self.dims
        return nx * ny * nz

    def linear_index(self, x, y, z):
        nx, ny, nz = self.dims
        if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
            raise ConfigError(f"voxel ({x},{y},{z}) outside volume {self.dims}")
        return x + nx * (y + ny * z)

    def coords(self, index):
        nx, ny, _ = self.dims
        return index % nx, (index // nx) % ny, index // (nx * ny)

    def matrices(self, index):
        """Subject matrices at a voxel, shape ``(n, p, p)``."""
        return vecd_inv(self.data[index])

    def masked_indices(self):
        return np.flatnonzero(self.mask)

    def check_spd(self):
        """Raise ``NotPositiveDefiniteError`` naming the first bad unmasked voxel."""
        for i in self.masked_indices():
            try:
                as_spd(self.matrices(i))
            except NotPositiveDefiniteError as exc:
                raise NotPositiveDefiniteError(f"voxel {self.coords(i)}: {exc}") from exc


def save_volume(vol, path):
    nx, ny, nz = vol.dims
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(nx, ny, nz, vol.p, vol.n))
        fh.write(vol.mask.astype(np.uint8).tobytes())
        fh.write(np.ascontiguousarray(vol.data, dtype="<f8").tobytes())


def load_volume(path):
    """Read an SPDVOL01 file; raises :class:`VolumeFormatError` on any defect."""
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_volume(raw)


def parse_volume(raw: bytes):
    if len(raw) < len(MAGIC):
        raise VolumeFormatError("file too short for magic", offset=len(raw))
    if raw[: len(MAGIC)] != MAGIC:
        raise VolumeFormatError(f"bad magic {raw[:len(MAGIC)]!r}", offset=0)
    if len(raw) < _HEADER_END:
        raise VolumeFormatError("truncated header", offset=len(raw))
    nx, ny, nz, p, n = _HEADER.unpack_from(raw, len(MAGIC))
    for k, (name, val) in enumerate(zip("nx ny nz p n".split(), (nx, ny, nz, p, n))):
        if val < 1:
            raise VolumeFormatError(f"header field {name} must be >= 1", offset=len(MAGIC) + 4 * k)
    nvox = nx * ny * nz
    q = dim_q(p)
    mask_end = _HEADER_END + nvox
    if len(raw) < mask_end:
        raise VolumeFormatError("truncated mask", offset=len(raw))
    mask = np.frombuffer(raw, dtype=np.uint8, count=nvox, offset=_HEADER_END)
    bad = np.flatnonzero(mask > 1)
    if bad.size:
        raise VolumeFormatError("mask bytes must be 0 or 1", offset=_HEADER_END + int(bad[0]))
    expected = mask_end + 8 * nvox * n * q
    if len(raw) < expected:
        raise VolumeFormatError(f"truncated payload (expected {expected} bytes)", offset=len(raw))
    if len(raw) > expected:
        raise VolumeFormatError("trailing bytes after payload", offset=expected)
    data = np.frombuffer(raw, dtype="<f8", count=nvox * n * q, offset=mask_end).copy()
    vol = TensorVolume((nx, ny, nz), p, n, data, mask.astype(bool))
    for i in vol.masked_indices():
        try:
            as_spd(vol.matrices(i))
        except Exception as exc:
            raise VolumeFormatError(
                f"voxel {vol.coords(i)} holds a non-SPD matrix: {exc}",
                offset=mask_end + 8 * int(i) * n * q,
            ) from exc
    return vol


# -- synthetic volumes ------------------------------------------------------


@dataclass
class Region:
    """Axis-aligned box ``[x0, x1) x [y0, y1) x [z0, z1)`` with its own lognormal model."""

    box: Tuple[int, int, int, int, int, int]
    M: np.ndarray
    sigma: np.ndarray
    model: str = "typeI"

    def build_model(self):
        if self.model == "typeI":
            return LognormalTypeI(self.M, self.sigma)
        if self.model == "typeII":
            return LognormalTypeII(self.M, self.sigma)
        raise ConfigError(f"unknown model {self.model!r} (expected typeI or typeII)")


def voxel_rng(seed, index):
    """Generator for one voxel; depends only on ``(seed, index)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(index),))
    return np.random.default_rng(ss)


def synth_volume(dims, p, n, regions: Sequence[Region], seed=0):
    """Draw ``n`` i.i.d. matrices per voxel from the model of the region covering it.

    Later regions override earlier ones where they overlap; voxels not
    covered by any region are masked out.  Each voxel's stream is seeded
    from ``(seed, linear index)`` so the result does not depend on the
    order in which voxels are generated.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ConfigError(f"dims must be three positive integers, got {dims}")
    if p < 1 or n < 1:
        raise ConfigError(f"p and n must be positive, got p={p}, n={n}")
    if not regions:
        raise ConfigError("at least one region is required")
    nx, ny, nz = dims
    q = dim_q(p)
    owner = np.full((nz, ny, nx), -1, dtype=np.int64)
    models = []
    for r, reg in enumerate(regions):
        x0, x1, y0, y1, z0, z1 = reg.box
        if not (0 <= x0 < x1 <= nx and 0 <= y0 < y1 <= ny and 0 <= z0 < z1 <= nz):
            raise ConfigError(f"region {r} box {reg.box} is empty or outside volume {dims}")
        try:
            model = reg.build_model()
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"region {r}: {exc}") from exc
        if model.p != p:
            raise ConfigError(f"region {r} has p={model.p}, volume has p={p}")
        models.append(model)
        owner[z0:z1, y0:y1, x0:x1] = r
    owner = owner.reshape(-1)  # (z, y, x) C-order == x-fastest linear index
    data = np.zeros((nx * ny * nz, n, q))
    for i in np.flatnonzero(owner >= 0):
        model = models[owner[i]]
        draw = lnI_sample if isinstance(model, LognormalTypeI) else lnII_sample
        data[i] = vecd(draw(model, voxel_rng(seed, i), n))
    return TensorVolume(dims, p, n, data, owner >= 0)
