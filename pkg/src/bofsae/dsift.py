"""Dense upright SIFT descriptors and seeded descriptor sampling.

Each patch of side ``s`` is split into 4x4 spatial cells and 8 orientation
bins. Every pixel votes its gradient magnitude, Gaussian-weighted
(sigma = s/2) about the patch centre, into the neighbouring cells and
orientations with linear (trilinear) weights. Pixel ``i`` of a patch sits at
``i + 0.5``; cell centres sit at ``(c + 0.5) * s / 4``. Orientation
``theta = atan2(gy, gx)`` in image coordinates (y pointing down), bin ``o``
centred at ``o * 45`` degrees. Component order is (cell row, cell column,
orientation).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import binio
from .errors import ContractError, ExtractionError, SamplingError
from .rng import SplitMix64

DESCRIPTOR_DIM = 128
NUM_CELLS = 4
NUM_ORIENTATIONS = 8
CLAMP = 0.2
ZERO_ENERGY = 1e-12

DEFAULT_STEP = 4
DEFAULT_PATCH_SIZES = (12, 16, 24)


@dataclass(frozen=True)
class DenseDescriptor:
    vector: np.ndarray
    pos_x: float
    pos_y: float
    patch_size: int


@dataclass(frozen=True)
class DescriptorSet:
    """All dense descriptors of one image, stored row-wise.

    ``vectors`` is (M, 128) float32, ``positions`` is (M, 2) holding
    (pos_x, pos_y) in [0, 1], ``patch_sizes`` is (M,).
    """

    vectors: np.ndarray
    positions: np.ndarray
    patch_sizes: np.ndarray
    image_label: int
    image_id: str = ""

    def __len__(self):
        return len(self.vectors)

    @property
    def descriptors(self):
        return [
            DenseDescriptor(v, float(p[0]), float(p[1]), int(s))
            for v, p, s in zip(self.vectors, self.positions, self.patch_sizes)
        ]

    def nonzero_mask(self):
        return np.any(self.vectors != 0, axis=1)


def image_gradients(pixels):
    """Centred differences with edge replication; returns (gx, gy)."""
    padded = np.pad(np.asarray(pixels, dtype=np.float64), 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return gx, gy


def orientation_channels(gx, gy):
    """Per-pixel magnitude split linearly between the two nearest orientation bins."""
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)
    o = theta / (2.0 * np.pi / NUM_ORIENTATIONS)
    lo = np.floor(o)
    frac = o - lo
    lo = lo.astype(np.int64) % NUM_ORIENTATIONS
    hi = (lo + 1) % NUM_ORIENTATIONS
    channels = np.zeros(gx.shape + (NUM_ORIENTATIONS,))
    rows, cols = np.indices(gx.shape)
    channels[rows, cols, lo] += mag * (1.0 - frac)
    channels[rows, cols, hi] += mag * frac
    return channels


def spatial_weights(size):
    """(size, 4) separable weights: Gaussian window times linear cell membership."""
    centre = np.arange(size) + 0.5
    sigma = size / 2.0
    gauss = np.exp(-((centre - size / 2.0) ** 2) / (2.0 * sigma * sigma))
    cell_coord = centre / (size / NUM_CELLS) - 0.5
    tent = np.maximum(0.0, 1.0 - np.abs(cell_coord[:, None] - np.arange(NUM_CELLS)[None, :]))
    return gauss[:, None] * tent


def normalize_descriptors(raw):
    """L2-normalise, clamp at 0.2, renormalise; zero-energy rows stay zero."""
    raw = np.asarray(raw, dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1)
    live = norms > ZERO_ENERGY
    out = np.zeros_like(raw)
    unit = raw[live] / norms[live, None]
    clamped = np.minimum(unit, CLAMP)
    assert clamped.max(initial=0.0) <= CLAMP + 1e-6
    out[live] = clamped / np.linalg.norm(clamped, axis=1, keepdims=True)
    return out


def grid_origins(side, size, step):
    return np.arange(0, side - size + 1, step)


def extract_dense(img, step=DEFAULT_STEP, patch_sizes=DEFAULT_PATCH_SIZES):
    """Dense descriptors on a ``step`` grid for each patch size, in size order."""
    side = img.width
    if img.height != side:
        raise ContractError(f"image {img.source_id!r} must be square, got {img.height}x{img.width}")
    if step < 1:
        raise ContractError("step must be >= 1")
    channels = orientation_channels(*image_gradients(img.pixels))
    vectors, positions, sizes = [], [], []
    for size in patch_sizes:
        if size < 8:
            raise ContractError(f"patch size must be >= 8, got {size}")
        if size > side:
            raise ExtractionError(f"patch size {size} exceeds image side {side} ({img.source_id})")
        weights = spatial_weights(size)
        windows = sliding_window_view(channels, (size, size), axis=(0, 1))[::step, ::step]
        # windows: (gy, gx, orientation, i, j)
        raw = np.einsum("yxoij,ic,jd->yxcdo", windows, weights, weights, optimize=True)
        ny, nx = raw.shape[:2]
        vectors.append(raw.reshape(ny * nx, DESCRIPTOR_DIM))
        origins = grid_origins(side, size, step)
        oy, ox = np.meshgrid(origins, origins, indexing="ij")
        positions.append(
            np.stack([(ox.ravel() + size / 2.0) / side, (oy.ravel() + size / 2.0) / side], axis=1)
        )
        sizes.append(np.full(ny * nx, size, dtype=np.int64))
    vectors = normalize_descriptors(np.concatenate(vectors)).astype(np.float32)
    return DescriptorSet(
        vectors, np.concatenate(positions), np.concatenate(sizes), img.label, img.source_id
    )


def sample_from_sets(sets, n, seed):
    """Sample ``min(n, available)`` non-zero descriptors without replacement.

    Returns ``(X, labels)`` with X of shape (128, N) in column-major order and
    the source image label of each column.
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    pool = [s.vectors[s.nonzero_mask()] for s in sets]
    labels = np.concatenate([np.full(len(p), s.image_label, dtype=np.int64) for p, s in zip(pool, sets)])
    pool = np.concatenate(pool) if pool else np.zeros((0, DESCRIPTOR_DIM), np.float32)
    if len(pool) == 0:
        raise SamplingError("no non-zero descriptors available for sampling")
    idx = np.array(SplitMix64(seed).sample_indices(len(pool), n), dtype=np.int64)
    return np.asfortranarray(pool[idx].T), labels[idx]


def sample_descriptors(ds, n, step=DEFAULT_STEP, patch_sizes=DEFAULT_PATCH_SIZES, seed=0):
    sets = [extract_dense(img, step, patch_sizes) for img in ds.images]
    return sample_from_sets(sets, n, seed)[0]


# --------------------------------------------------------------------------
# GFDS descriptor dump

GFDS_MAGIC = b"GFDS"


def save_descriptors(path, X):
    X = np.asarray(X)
    d, n = X.shape
    blob = GFDS_MAGIC + binio.u32(d) + binio.u64(n) + binio.column_major_bytes(X, np.float32)
    Path(path).write_bytes(blob)


def load_descriptors(path):
    r = binio.Reader(Path(path).read_bytes(), str(path))
    r.magic(GFDS_MAGIC)
    d = r.u32()
    n = r.u64()
    return np.asfortranarray(r.column_major(np.float32, d, n))
