"""Synthetic shape dataset and the SEMD on-disk image format."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

SEMD_MAGIC = b"SEMD"
SEMD_VERSION = 1
_HEADER = struct.Struct("<4sHHIHHH")
_RECORD = struct.Struct("<IH")

BACKGROUND_AMPLITUDE = 0.2
SHAPE_INTENSITY = 0.9

# One base colour per class; shapes are drawn as SHAPE_INTENSITY * colour.
PALETTE = np.array(
    [
        [1.0, 0.15, 0.15],
        [0.15, 1.0, 0.15],
        [0.2, 0.35, 1.0],
        [1.0, 1.0, 0.15],
        [1.0, 0.2, 1.0],
        [0.15, 1.0, 1.0],
        [1.0, 0.6, 0.1],
        [0.7, 0.7, 0.7],
    ]
)
SHAPES = ("disk", "square", "cross", "triangle", "ring", "diamond", "hbar", "xcross")


class DatasetFormatError(ValueError):
    pass


class MalformedHeaderError(DatasetFormatError):
    pass


class TruncatedPayloadError(DatasetFormatError):
    pass


class PatchDivisibilityError(DatasetFormatError):
    pass


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray  # (3, h, w) float32 in [0, 1]
    label: int
    id: int


@dataclass
class Dataset:
    images: np.ndarray  # (N, 3, h, w) float32
    labels: np.ndarray  # (N,) int64
    ids: np.ndarray  # (N,) uint32
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[1] != 3:
            raise ValueError(f"images must be (N, 3, h, w), got {self.images.shape}")
        if not (len(self.images) == len(self.labels) == len(self.ids)):
            raise ValueError("images, labels and ids differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label outside [0, num_classes)")

    def __len__(self):
        return len(self.images)

    def __getitem__(self, i):
        return LabeledImage(self.images[i], int(self.labels[i]), int(self.ids[i]))

    @property
    def hw(self):
        return self.images.shape[2], self.images.shape[3]

    def subset(self, index):
        index = np.asarray(index)
        return Dataset(self.images[index], self.labels[index], self.ids[index], self.num_classes, self.split)


def shape_mask(template, size):
    """Boolean (size, size) stencil for one of SHAPES."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    c = size / 2.0
    dy, dx = yy - c, xx - c
    r = size / 2.0
    arm = max(1.0, size / 6.0)
    if template == "disk":
        return dy**2 + dx**2 <= r**2
    if template == "square":
        return (np.abs(dy) <= 0.8 * r) & (np.abs(dx) <= 0.8 * r)
    if template == "cross":
        return ((np.abs(dx) <= arm) | (np.abs(dy) <= arm)) & (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if template == "triangle":
        # apex at top, base along the bottom row
        return np.abs(dx) <= (yy / size) * r
    if template == "ring":
        d2 = dy**2 + dx**2
        return (d2 <= r**2) & (d2 >= (0.55 * r) ** 2)
    if template == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    if template == "hbar":
        return np.abs(dy) <= 1.3 * arm
    if template == "xcross":
        return (np.abs(dx - dy) <= arm) | (np.abs(dx + dy) <= arm)
    raise ValueError(f"unknown shape template {template!r}")


def shape_size(h, w):
    return max(6, (3 * min(h, w)) // 8)


def render(label, top, left, h, w, background):
    """Draw class ``label``'s shape onto a copy of ``background`` (3, h, w)."""
    size = shape_size(h, w)
    img = background.copy()
    stencil = shape_mask(SHAPES[label], size)
    colour = SHAPE_INTENSITY * PALETTE[label]
    region = img[:, top : top + size, left : left + size]
    region[:, stencil] = colour[:, None]
    return img


def generate_synthetic(num_classes, per_class, h=32, w=32, seed=0, patch_size=8, split="train"):
    """Deterministic toy dataset of coloured shapes on noise.

    Each class is one shape template in a fixed colour, placed uniformly at
    random so that it covers only a few patches of the grid.
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if num_classes > len(SHAPES):
        raise ValueError(f"only {len(SHAPES)} shape templates available, asked for {num_classes}")
    if h % patch_size or w % patch_size:
        raise PatchDivisibilityError(f"image {h}x{w} not divisible by patch size {patch_size}")
    rng = np.random.default_rng(seed)
    size = shape_size(h, w)
    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class)
    labels = labels[rng.permutation(n)]
    images = np.empty((n, 3, h, w), dtype=np.float32)
    for i, c in enumerate(labels):
        bg = rng.uniform(0.0, BACKGROUND_AMPLITUDE, size=(3, h, w))
        top = rng.integers(0, h - size + 1)
        left = rng.integers(0, w - size + 1)
        images[i] = np.clip(render(int(c), top, left, h, w, bg), 0.0, 1.0)
    return Dataset(images, labels.astype(np.int64), np.arange(n, dtype=np.uint32), num_classes, split)


def save_dataset(dataset, path):
    n, c, h, w = dataset.images.shape
    parts = [_HEADER.pack(SEMD_MAGIC, SEMD_VERSION, dataset.num_classes, n, h, w, c)]
    for img, label, ident in zip(dataset.images, dataset.labels, dataset.ids):
        parts.append(_RECORD.pack(int(ident), int(label)))
        parts.append(np.ascontiguousarray(img, dtype="<f4").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_dataset(path, patch_size=8, split="train"):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise MalformedHeaderError(f"{path}: file shorter than header")
    magic, version, num_classes, count, h, w, c = _HEADER.unpack_from(buf, 0)
    if magic != SEMD_MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if version != SEMD_VERSION:
        raise MalformedHeaderError(f"{path}: unsupported version {version}")
    if c != 3 or h == 0 or w == 0 or num_classes == 0:
        raise MalformedHeaderError(f"{path}: bad geometry channels={c} h={h} w={w} classes={num_classes}")
    if h % patch_size or w % patch_size:
        raise PatchDivisibilityError(f"{path}: image {h}x{w} not divisible by patch size {patch_size}")
    pixels = c * h * w
    record = _RECORD.size + 4 * pixels
    expected = _HEADER.size + count * record
    if len(buf) < expected:
        raise TruncatedPayloadError(f"{path}: truncated payload ({len(buf)} of {expected} bytes)")
    if len(buf) > expected:
        raise MalformedHeaderError(f"{path}: {len(buf) - expected} trailing bytes")

    images = np.empty((count, c, h, w), dtype=np.float32)
    labels = np.empty(count, dtype=np.int64)
    ids = np.empty(count, dtype=np.uint32)
    off = _HEADER.size
    for i in range(count):
        ids[i], labels[i] = _RECORD.unpack_from(buf, off)
        off += _RECORD.size
        images[i] = np.frombuffer(buf, dtype="<f4", count=pixels, offset=off).reshape(c, h, w)
        off += 4 * pixels
    if labels.size and labels.max() >= num_classes:
        raise MalformedHeaderError(f"{path}: label {labels.max()} >= num_classes {num_classes}")
    if images.size and (not np.isfinite(images).all() or images.min() < 0 or images.max() > 1):
        raise DatasetFormatError(f"{path}: pixel values outside [0, 1]")
    return Dataset(images, labels, ids, num_classes, split)
