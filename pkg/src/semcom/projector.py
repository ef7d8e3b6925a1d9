"""Patch segmentation and linear token projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Module, Tensor, concat, normal_param, reshape, zeros_param


@dataclass(frozen=True)
class PatchGrid:
    patches: np.ndarray  # (P, 3, p, p), 1D index order
    rows: int
    cols: int

    @property
    def num_patches(self):
        return len(self.patches)

    @property
    def patch_size(self):
        return self.patches.shape[-1]


def _check_divisible(h, w, p):
    if p <= 0 or h % p or w % p:
        raise ValueError(f"image {h}x{w} is not divisible into {p}x{p} patches")


def patchify(image, p):
    """Split a (3, h, w) image into row-major p x p patches."""
    image = np.asarray(image)
    c, h, w = image.shape
    _check_divisible(h, w, p)
    rows, cols = h // p, w // p
    patches = image.reshape(c, rows, p, cols, p).transpose(1, 3, 0, 2, 4).reshape(rows * cols, c, p, p)
    return PatchGrid(patches, rows, cols)


def reassemble(grid):
    p = grid.patch_size
    c = grid.patches.shape[1]
    x = grid.patches.reshape(grid.rows, grid.cols, c, p, p).transpose(2, 0, 3, 1, 4)
    return x.reshape(c, grid.rows * p, grid.cols * p)


def index_to_grid(i, cols, rows=None):
    if cols <= 0 or i < 0 or (rows is not None and i >= rows * cols):
        raise ValueError(f"patch index {i} out of range")
    return divmod(i, cols)


def grid_to_index(row, col, cols, rows=None):
    if not 0 <= col < cols or row < 0 or (rows is not None and row >= rows):
        raise ValueError(f"grid position ({row}, {col}) out of range")
    return row * cols + col


def flatten_patches(images, p):
    """(B, 3, h, w) -> (B, 3p^2, P): one flattened patch per column.

    Flattening inside a patch is channel-major, then row-major.
    """
    images = np.asarray(images)
    b, c, h, w = images.shape
    _check_divisible(h, w, p)
    rows, cols = h // p, w // p
    x = images.reshape(b, c, rows, p, cols, p).transpose(0, 1, 3, 5, 2, 4)
    return x.reshape(b, c * p * p, rows * cols)


class Projector(Module):
    """W_proj patch embedding plus CLS token and learned positional table."""

    def __init__(self, dim, patch_size, num_patches, rng, channels=3):
        self.patch_size = patch_size
        self.num_patches = num_patches
        self.w_proj = normal_param(rng, (dim, channels * patch_size * patch_size))
        self.b = zeros_param((dim,))
        self.cls_token = normal_param(rng, (dim,))
        self.pos_embed = normal_param(rng, (dim, num_patches + 1))

    @property
    def dim(self):
        return self.w_proj.shape[0]

    def embed(self, columns):
        """Flattened patch columns (B, 3p^2, P) -> token matrix (B, D, P+1)."""
        columns = columns if isinstance(columns, Tensor) else Tensor(columns)
        if columns.ndim != 3 or columns.shape[1:] != (self.w_proj.shape[1], self.num_patches):
            raise ValueError(
                f"patch columns {columns.shape} do not match projector "
                f"({self.w_proj.shape[1]}, {self.num_patches})"
            )
        d = self.dim
        tokens = self.w_proj @ columns + reshape(self.b, (d, 1)) + self.pos_embed[:, 1:]
        cls = reshape(self.cls_token + self.pos_embed[:, 0], (1, d, 1))
        cls = cls + Tensor(np.zeros((columns.shape[0], 1, 1)))
        return concat([cls, tokens], axis=2)

    def __call__(self, images):
        return self.embed(flatten_patches(images, self.patch_size))


def project(grid, projector):
    """Single-image projection: PatchGrid -> (D, P+1) token matrix."""
    if grid.num_patches != projector.num_patches or grid.patch_size != projector.patch_size:
        raise ValueError("patch grid does not match projector geometry")
    cols = grid.patches.reshape(grid.num_patches, -1).T[None]
    return projector.embed(cols)[0]
