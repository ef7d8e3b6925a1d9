"""Transposed-convolution decoder and the masked reconstruction loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import transmit_batch
from .masking import cls_attention_grids, expand_mask
from .tensor import (
    Adam,
    Module,
    Parameter,
    Tensor,
    conv2d,
    conv_transpose2d,
    no_grad,
    relu,
    reshape,
    sigmoid,
    weighted_squared_error,
    zeros_param,
)
from .vit import encode_dataset


class PreconditionError(RuntimeError):
    pass


def _he(rng, shape, fan_in):
    return Parameter(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape))


class Decoder(Module):
    """(D, rows, cols) feature map -> (3, h, w) image in [0, 1].

    log2(p) stride-2 transposed convolutions (kernel 4, padding 1) double the
    resolution each time; a 1x1 convolution maps to RGB.
    """

    def __init__(self, dim, rows, cols, patch_size, widths=(64, 32, 16), seed=0):
        stages = int(round(math.log2(patch_size)))
        if 2**stages != patch_size:
            raise ValueError(f"patch size {patch_size} is not a power of two")
        if len(widths) < stages:
            raise ValueError(f"need {stages} channel widths, got {len(widths)}")
        rng = np.random.default_rng(seed)
        self.dim, self.rows, self.cols, self.patch_size = dim, rows, cols, patch_size
        self.up_w, self.up_b = [], []
        cin = dim
        for cout in widths[:stages]:
            self.up_w.append(_he(rng, (cin, cout, 4, 4), cin * 4))
            self.up_b.append(zeros_param((cout,)))
            cin = cout
        self.out_w = _he(rng, (3, cin, 1, 1), cin)
        self.out_b = zeros_param((3,))
        self.name_parameters()

    def __call__(self, zhat):
        return decode(zhat, self)


def decode(zhat, decoder):
    """z_hat (B, D, P) or (D, P) -> reconstruction (B, 3, h, w)."""
    zhat = zhat if isinstance(zhat, Tensor) else Tensor(zhat)
    if zhat.ndim == 2:
        zhat = reshape(zhat, (1,) + zhat.shape)
    b, d, p = zhat.shape
    if d != decoder.dim or p != decoder.rows * decoder.cols:
        raise ValueError(f"z_hat {zhat.shape} does not match decoder ({decoder.dim}, {decoder.rows * decoder.cols})")
    x = reshape(zhat, (b, d, decoder.rows, decoder.cols))
    for w, bias in zip(decoder.up_w, decoder.up_b):
        x = relu(conv_transpose2d(x, w, bias, stride=2, padding=1))
    return sigmoid(conv2d(x, decoder.out_w, decoder.out_b))


def per_patch_squared_errors(x, xhat, p):
    """Sum of squared error inside each patch -> (rows, cols)."""
    diff = np.asarray(x, dtype=np.float64) - np.asarray(xhat, dtype=np.float64)
    c, h, w = diff.shape
    return (diff**2).reshape(c, h // p, p, w // p, p).sum(axis=(0, 2, 4))


def masked_mse(x, xhat, mask, p):
    """Squared error over selected patches / (n_selected * p^2 * 3); 0 if none selected."""
    x = np.asarray(getattr(x, "data", x))
    xhat = np.asarray(getattr(xhat, "data", xhat))
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {xhat.shape}")
    n = mask.n_selected
    if n == 0:
        return 0.0
    errs = per_patch_squared_errors(x, xhat, p)
    return float(errs[mask.grid].sum() / (n * p * p * x.shape[0]))


@dataclass
class ReconstructionReport:
    xhat: np.ndarray
    masked_mse: float
    patch_errors: np.ndarray  # (rows, cols) per-patch squared error sums


def reconstruction_report(x, xhat, mask, p):
    xhat = np.asarray(getattr(xhat, "data", xhat))
    return ReconstructionReport(xhat, masked_mse(x, xhat, mask, p), per_patch_squared_errors(x, xhat, p))


def loss_weights(masks, p, channels=3):
    """Pixel weights turning a weighted squared error into the batch mean of per-image masked MSE."""
    b = len(masks)
    first = masks[0]
    w = np.empty((b, channels, first.rows * p, first.cols * p), dtype=np.float32)
    for i, m in enumerate(masks):
        n = m.n_selected
        w[i] = expand_mask(m, p) / (n * p * p * channels * b) if n else 0.0
    return w


def masked_mse_loss(xhat, x, masks, p):
    """Differentiable batch mean of masked_mse."""
    return weighted_squared_error(xhat, x, loss_weights(masks, p, x.shape[1]))


def train_decoder(
    dataset,
    encoder,
    rate,
    alpha,
    epochs=30,
    seed=0,
    batch_size=32,
    lr=5e-4,
    widths=(64, 32, 16),
    bypass_compressor=False,
    on_epoch=None,
):
    """Fit the decoder on masked MSE with the encoder frozen.

    Each epoch every image is encoded, masked at ``rate``/``alpha`` (fresh
    random-fill seeds per epoch), packed, unpacked and decoded. Only the
    decoder receives Adam updates.
    """
    if not getattr(encoder, "trained", False):
        raise PreconditionError("decoder training needs a trained, frozen encoder")
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    cfg = encoder.cfg
    p = cfg.patch_size
    decoder = Decoder(cfg.dim, cfg.rows, cfg.cols, p, widths, seed=seed)
    z, attn, _ = encode_dataset(encoder, dataset.images)
    grids = cls_attention_grids(attn, cfg.rows, cfg.cols)
    opt = Adam(decoder.parameters(), lr=lr)
    rng = np.random.default_rng([seed, 2])
    log = []
    for epoch in range(1, epochs + 1):
        zhat, masks = transmit_batch(z, grids, dataset.ids, rate, alpha, seed, epoch, bypass_compressor)
        order = rng.permutation(len(dataset))
        total = 0.0
        for i in range(0, len(order), batch_size):
            idx = order[i : i + batch_size]
            opt.zero_grad()
            loss = masked_mse_loss(decode(zhat[idx], decoder), dataset.images[idx], [masks[j] for j in idx], p)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        row = {"epoch": epoch, "split": "train", "masked_mse": total / len(dataset)}
        log.append(row)
        if on_epoch:
            on_epoch(row)
    decoder.trained = True
    return decoder, log


def evaluate_reconstruction(dataset, encoder, decoder, rate, alpha, seed, epoch=0, bypass_compressor=False):
    """Mean per-image masked MSE of the frozen pipeline."""
    cfg = encoder.cfg
    z, attn, _ = encode_dataset(encoder, dataset.images)
    grids = cls_attention_grids(attn, cfg.rows, cfg.cols)
    zhat, masks = transmit_batch(z, grids, dataset.ids, rate, alpha, seed, epoch, bypass_compressor)
    with no_grad():
        xhat = np.concatenate([decode(zhat[i : i + 64], decoder).data for i in range(0, len(zhat), 64)])
    errs = [masked_mse(x, xh, m, cfg.patch_size) for x, xh, m in zip(dataset.images, xhat, masks)]
    return float(np.mean(errs)), xhat, masks
