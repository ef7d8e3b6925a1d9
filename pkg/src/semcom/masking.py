"""CLS-attention patch scores and the alpha/threshold selection policy."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClsAttentionGrid:
    scores: np.ndarray  # (rows, cols)
    head_averaged: bool = True

    @property
    def rows(self):
        return self.scores.shape[0]

    @property
    def cols(self):
        return self.scores.shape[1]


@dataclass(frozen=True)
class SelectionMask:
    flat: np.ndarray  # bool (P,), 1D patch index order
    rows: int
    cols: int
    # score of the last patch admitted by the threshold stage (None if none were)
    threshold: float | None = None
    n_top: int = 0

    def __post_init__(self):
        flat = np.asarray(self.flat, dtype=bool).reshape(-1)
        if flat.size != self.rows * self.cols:
            raise ValueError(f"mask of length {flat.size} does not fit a {self.rows}x{self.cols} grid")
        object.__setattr__(self, "flat", flat)

    @property
    def grid(self):
        return self.flat.reshape(self.rows, self.cols)

    @property
    def n_selected(self):
        return int(self.flat.sum())

    @property
    def indices(self):
        return np.flatnonzero(self.flat)

    @classmethod
    def full(cls, rows, cols):
        return cls(np.ones(rows * cols, dtype=bool), rows, cols)

    def to_bitmap(self):
        return pack_bitmap(self.flat)

    @classmethod
    def from_bitmap(cls, data, rows, cols):
        return cls(unpack_bitmap(data, rows * cols), rows, cols)


def pack_bitmap(flat):
    """ceil(P/8) bytes, bit i (LSB first within each byte) = flat[i]."""
    return np.packbits(np.asarray(flat, dtype=bool), bitorder="little").tobytes()


def unpack_bitmap(data, n):
    if len(data) != math.ceil(n / 8):
        raise ValueError(f"bitmap of {len(data)} bytes cannot hold exactly {n} bits")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if bits[n:].any():
        raise ValueError("bitmap has bits set beyond the patch count")
    return bits[:n].astype(bool)


def extract_cls_attention(attn, rows, cols):
    """Head-averaged CLS row of the final-layer attention, on the patch grid.

    attn is (H, P+1, P+1). The CLS self-score (column 0) is dropped so the
    grid has exactly P = rows * cols cells.
    """
    attn = np.asarray(attn)
    n = rows * cols + 1
    if attn.ndim != 3 or attn.shape[1:] != (n, n):
        raise ValueError(f"attention stack {attn.shape} does not match a {rows}x{cols} grid")
    per_head = attn[:, 0, 1:].reshape(attn.shape[0], rows, cols)
    return ClsAttentionGrid(per_head.mean(axis=0, dtype=np.float64))


def cls_attention_grids(attn, rows, cols):
    """Batched form: (B, H, P+1, P+1) -> (B, rows, cols)."""
    attn = np.asarray(attn)
    return attn[:, :, 0, 1:].mean(axis=1, dtype=np.float64).reshape(len(attn), rows, cols)


def build_mask(grid, n_budget, alpha, seed):
    """Select exactly ``n_budget`` patches.

    The floor(alpha * n_budget) highest-scoring patches are taken first (ties
    go to the lower 1D index); the rest of the budget is drawn uniformly
    without replacement from the remaining patches using ``seed``.
    """
    scores = np.asarray(grid.scores if isinstance(grid, ClsAttentionGrid) else grid, dtype=np.float64)
    rows, cols = scores.shape
    p = rows * cols
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    if not 0 <= n_budget <= p:
        raise ValueError(f"patch budget {n_budget} outside [0, {p}]")
    flat_scores = scores.reshape(-1)
    n_top = math.floor(alpha * n_budget + 1e-9)
    order = np.argsort(-flat_scores, kind="stable")
    top = order[:n_top]
    flat = np.zeros(p, dtype=bool)
    flat[top] = True
    threshold = float(flat_scores[top[-1]]) if n_top else None
    n_fill = n_budget - n_top
    if n_fill:
        rng = np.random.default_rng(seed)
        rest = np.flatnonzero(~flat)
        flat[rng.choice(rest, size=n_fill, replace=False)] = True
    return SelectionMask(flat, rows, cols, threshold, n_top)


def expand_mask(mask, p):
    """Kronecker product of the grid with a p x p block of ones -> (h, w)."""
    return np.kron(mask.grid.astype(np.float32), np.ones((p, p), dtype=np.float32))


MASK_MAGIC = b"SEMM"


def save_mask(mask, path):
    """Sidecar file: magic, version u16, rows u16, cols u16, then the bitmap."""
    with open(path, "wb") as fh:
        fh.write(MASK_MAGIC + struct.pack("<HHH", 1, mask.rows, mask.cols) + mask.to_bitmap())


def load_mask(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MASK_MAGIC or len(buf) < 10:
        raise ValueError(f"{path}: not a mask file")
    version, rows, cols = struct.unpack_from("<HHH", buf, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported mask version {version}")
    return SelectionMask.from_bitmap(buf[10:], rows, cols)
