"""Spatial-pyramid max pooling of per-descriptor codes into one image vector."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import binio
from .errors import ContractError, PoolingError


@dataclass(frozen=True)
class SpmConfig:
    levels: tuple = (1, 2, 4)
    normalize: bool = True

    def __post_init__(self):
        levels = tuple(int(v) for v in self.levels)
        if not levels or levels[0] < 1 or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ContractError(f"levels must be non-empty, strictly increasing, >= 1: {levels}")
        object.__setattr__(self, "levels", levels)

    @property
    def num_cells(self):
        return sum(v * v for v in self.levels)

    def dim(self, code_size):
        return code_size * self.num_cells


@dataclass(frozen=True, eq=False)
class PooledFeature:
    vector: np.ndarray
    label: int
    image_id: str = ""


def cell_index(pos, level):
    """Cell along one axis; a position of exactly 1.0 lands in the last cell."""
    return np.minimum(np.floor(np.asarray(pos) * level).astype(np.int64), level - 1)


def spm_max_pool(codes, pos_x, pos_y, cfg, label=-1, image_id=""):
    """Max-pool an (M, K) code array over every pyramid cell and concatenate.

    Cells are ordered level by level, row-major (row from ``pos_y``) within
    a level; empty cells contribute zeros.
    """
    codes = np.asarray(codes, dtype=np.float64)
    pos_x = np.asarray(pos_x, dtype=np.float64)
    pos_y = np.asarray(pos_y, dtype=np.float64)
    if codes.ndim != 2 or len(codes) == 0:
        raise PoolingError("cannot pool an empty code list")
    if pos_x.shape != (len(codes),) or pos_y.shape != (len(codes),):
        raise ContractError("one (pos_x, pos_y) pair per code is required")
    if pos_x.min() < 0 or pos_x.max() > 1 or pos_y.min() < 0 or pos_y.max() > 1:
        raise ContractError("positions must lie in [0, 1]")
    K = codes.shape[1]
    blocks = []
    for level in cfg.levels:
        cell = cell_index(pos_y, level) * level + cell_index(pos_x, level)
        order = np.argsort(cell, kind="stable")
        sorted_cells = cell[order]
        starts = np.flatnonzero(np.r_[True, sorted_cells[1:] != sorted_cells[:-1]])
        block = np.zeros((level * level, K))
        block[sorted_cells[starts]] = np.maximum.reduceat(codes[order], starts, axis=0)
        blocks.append(block.ravel())
    vector = np.concatenate(blocks)
    if cfg.normalize:
        norm = np.linalg.norm(vector)
        if norm > 0:
            vector = vector / norm
    return PooledFeature(vector, int(label), image_id)


# --------------------------------------------------------------------------
# GFPF feature dump: magic, u32 dim, u64 count, count x u32 labels,
# then count x dim float32 vectors.

GFPF_MAGIC = b"GFPF"


def save_features(path, features):
    features = list(features)
    dim = len(features[0].vector) if features else 0
    F = np.array([f.vector for f in features], dtype=np.float32).reshape(len(features), dim)
    labels = np.array([f.label for f in features], dtype=np.uint32)
    blob = GFPF_MAGIC + binio.u32(dim) + binio.u64(len(features))
    blob += binio.array_bytes(labels, np.uint32) + binio.array_bytes(F, np.float32)
    Path(path).write_bytes(blob)


def load_features(path):
    r = binio.Reader(Path(path).read_bytes(), str(path))
    r.magic(GFPF_MAGIC)
    dim = r.u32()
    count = r.u64()
    labels = r.array(np.uint32, count)
    F = r.array(np.float32, dim * count).reshape(count, dim)
    return [PooledFeature(F[i].astype(np.float64), int(labels[i]), str(i)) for i in range(count)]
