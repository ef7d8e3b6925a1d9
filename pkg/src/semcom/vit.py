"""Multi-head transformer encoder with last-layer attention capture."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .projector import Projector
from .tensor import (
    Adam,
    Module,
    Tensor,
    cross_entropy,
    gelu,
    layer_norm,
    matmul,
    no_grad,
    normal_param,
    ones_param,
    reshape,
    softmax,
    swapaxes,
    zeros_param,
)


@dataclass(frozen=True)
class VitConfig:
    dim: int = 32
    heads: int = 4
    layers: int = 2
    mlp_hidden: int = 64
    num_classes: int = 4
    patch_size: int = 8
    image_h: int = 32
    image_w: int = 32
    # "model": divide scores by sqrt(D); "head": by sqrt(D / H)
    attn_scale: str = "model"

    def __post_init__(self):
        for name in ("dim", "heads", "layers", "mlp_hidden", "num_classes", "patch_size", "image_h", "image_w"):
            if getattr(self, name) < 1:
                raise ValueError(f"VitConfig.{name} must be positive")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.image_h % self.patch_size or self.image_w % self.patch_size:
            raise ValueError("image size not divisible by patch size")
        if self.attn_scale not in ("model", "head"):
            raise ValueError(f"attn_scale must be 'model' or 'head', got {self.attn_scale!r}")

    @property
    def rows(self):
        return self.image_h // self.patch_size

    @property
    def cols(self):
        return self.image_w // self.patch_size

    @property
    def num_patches(self):
        return self.rows * self.cols

    @property
    def head_dim(self):
        return self.dim // self.heads

    @property
    def scale(self):
        return math.sqrt(self.dim if self.attn_scale == "model" else self.head_dim)


@dataclass
class EncoderOutput:
    z: Tensor  # (B, D, P+1)
    attn: np.ndarray  # (B, H, P+1, P+1), final layer
    logits: Tensor  # (B, C)


def attention_head(x_h, w_q, w_k, w_v, scale):
    """One head (batched over leading axes).

    x_h is (..., d, N) with tokens as columns. Returns the head output
    (..., d, N), column i being sum_j A[i, j] V[:, j], and A (..., N, N).
    """
    x_h = x_h if isinstance(x_h, Tensor) else Tensor(x_h)
    d = x_h.shape[-2]
    for w in (w_q, w_k, w_v):
        if w.shape[-2:] != (d, d):
            raise ValueError(f"head weight {w.shape} does not match head input {x_h.shape}")
    q = w_q @ x_h
    k = w_k @ x_h
    v = w_v @ x_h
    scores = matmul(swapaxes(q, -1, -2), k) * (1.0 / scale)
    a = softmax(scores, axis=-1)
    return matmul(v, swapaxes(a, -1, -2)), a


class MultiHeadAttention(Module):
    def __init__(self, cfg, rng):
        h, d = cfg.heads, cfg.head_dim
        self.heads = h
        self.scale = cfg.scale
        self.w_q = normal_param(rng, (h, d, d))
        self.w_k = normal_param(rng, (h, d, d))
        self.w_v = normal_param(rng, (h, d, d))
        self.w_o = normal_param(rng, (cfg.dim, cfg.dim))
        self.b_o = zeros_param((cfg.dim,))

    def __call__(self, x):
        b, dim, n = x.shape
        # contiguous row blocks of x feed the heads
        xh = reshape(x, (b, self.heads, dim // self.heads, n))
        out, attn = attention_head(xh, self.w_q, self.w_k, self.w_v, self.scale)
        out = reshape(out, (b, dim, n))
        return self.w_o @ out + reshape(self.b_o, (dim, 1)), attn


class TransformerLayer(Module):
    """Pre-norm block: x + MHA(LN(x)), then + MLP(LN(.))."""

    def __init__(self, cfg, rng):
        dim, hid = cfg.dim, cfg.mlp_hidden
        self.ln1_g = ones_param((dim, 1))
        self.ln1_b = zeros_param((dim, 1))
        self.attn = MultiHeadAttention(cfg, rng)
        self.ln2_g = ones_param((dim, 1))
        self.ln2_b = zeros_param((dim, 1))
        self.w1 = normal_param(rng, (hid, dim))
        self.b1 = zeros_param((hid, 1))
        self.w2 = normal_param(rng, (dim, hid))
        self.b2 = zeros_param((dim, 1))

    def __call__(self, x):
        if x.ndim != 3 or x.shape[1] != self.w1.shape[1]:
            raise ValueError(f"layer input {x.shape} does not match dim {self.w1.shape[1]}")
        a, attn = self.attn(layer_norm(x, self.ln1_g, self.ln1_b, axis=1))
        x = x + a
        h = gelu(self.w1 @ layer_norm(x, self.ln2_g, self.ln2_b, axis=1) + self.b1)
        return x + (self.w2 @ h + self.b2), attn


class VisionTransformer(Module):
    def __init__(self, cfg, seed=0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.projector = Projector(cfg.dim, cfg.patch_size, cfg.num_patches, rng)
        self.layers = [TransformerLayer(cfg, rng) for _ in range(cfg.layers)]
        self.lnf_g = ones_param((cfg.dim, 1))
        self.lnf_b = zeros_param((cfg.dim, 1))
        self.w_head = normal_param(rng, (cfg.num_classes, cfg.dim))
        self.b_head = zeros_param((cfg.num_classes,))
        self.trained = False
        self.name_parameters()

    def forward_tokens(self, x):
        attn = None
        for layer in self.layers:
            x, attn = layer(x)
        z = layer_norm(x, self.lnf_g, self.lnf_b, axis=1)
        logits = z[:, :, 0] @ swapaxes(self.w_head, 0, 1) + self.b_head
        return EncoderOutput(z, attn.data, logits)

    def __call__(self, images):
        images = np.asarray(images)
        if images.ndim == 3:
            images = images[None]
        if images.shape[1:] != (3, self.cfg.image_h, self.cfg.image_w):
            raise ValueError(f"image batch {images.shape} does not match config")
        return self.forward_tokens(self.projector(images))


def encode(image, model):
    """Single image -> (z (D, P+1), attention (H, P+1, P+1), logits (C,))."""
    out = model(np.asarray(image)[None])
    return EncoderOutput(out.z[0], out.attn[0], out.logits[0])


def encode_dataset(model, images, batch_size=64):
    """Frozen forward pass: returns z (N, D, P+1), attention, logits as arrays."""
    zs, attns, logits = [], [], []
    with no_grad():
        for i in range(0, len(images), batch_size):
            out = model(images[i : i + batch_size])
            zs.append(out.z.data)
            attns.append(out.attn)
            logits.append(out.logits.data)
    return np.concatenate(zs), np.concatenate(attns), np.concatenate(logits)


def accuracy_of(logits, labels):
    if len(labels) == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def train_encoder(dataset, cfg, epochs=30, seed=0, batch_size=32, lr=5e-4, model=None, on_epoch=None):
    """Cross-entropy training of projector, transformer and head with Adam.

    Returns the model and a per-epoch log of dicts (epoch, split, loss,
    accuracy); accuracy is re-measured on the whole training set after
    each epoch.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if dataset.num_classes > cfg.num_classes:
        raise ValueError("dataset has more classes than the model head")
    model = model or VisionTransformer(cfg, seed)
    opt = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng([seed, 1])
    log = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(dataset))
        total = 0.0
        for i in range(0, len(order), batch_size):
            idx = order[i : i + batch_size]
            opt.zero_grad()
            loss = cross_entropy(model(dataset.images[idx]).logits, dataset.labels[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        _, _, logits = encode_dataset(model, dataset.images)
        row = {"epoch": epoch, "split": "train", "loss": total / len(dataset), "accuracy": accuracy_of(logits, dataset.labels)}
        log.append(row)
        if on_epoch:
            on_epoch(row)
    model.trained = True
    return model, log
