"""Receiver-side CNN classifier and its fine-tuning on reconstructions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    Adam,
    Module,
    Parameter,
    Tensor,
    conv2d,
    cross_entropy,
    mean,
    no_grad,
    relu,
    swapaxes,
    zeros_param,
)


class Classifier(Module):
    """Three stride-2 conv blocks (16/32/64), global average pool, affine head."""

    def __init__(self, num_classes, widths=(16, 32, 64), seed=0):
        rng = np.random.default_rng(seed)
        self.num_classes = num_classes
        self.conv_w, self.conv_b = [], []
        cin = 3
        for cout in widths:
            self.conv_w.append(Parameter(rng.normal(0.0, math.sqrt(2.0 / (cin * 9)), size=(cout, cin, 3, 3))))
            self.conv_b.append(zeros_param((cout,)))
            cin = cout
        self.w_head = Parameter(rng.normal(0.0, math.sqrt(1.0 / cin), size=(num_classes, cin)))
        self.b_head = zeros_param((num_classes,))
        self.name_parameters()

    def __call__(self, images):
        x = images if isinstance(images, Tensor) else Tensor(images)
        for w, b in zip(self.conv_w, self.conv_b):
            x = relu(conv2d(x, w, b, stride=2, padding=1))
        pooled = mean(x, axis=(2, 3))
        return pooled @ swapaxes(self.w_head, 0, 1) + self.b_head


def predict(classifier, images, batch_size=128):
    images = np.asarray(images)
    with no_grad():
        logits = [classifier(images[i : i + batch_size]).data for i in range(0, len(images), batch_size)]
    return np.argmax(np.concatenate(logits), axis=1)


def evaluate(classifier, images, labels):
    """Fraction of argmax-correct predictions (ties go to the lowest class index)."""
    if len(images) == 0:
        raise ValueError("cannot evaluate on an empty image set")
    return float(np.mean(predict(classifier, images) == np.asarray(labels)))


def pretrain_classifier(dataset, epochs=30, seed=0, batch_size=32, lr=5e-4, on_epoch=None):
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    clf = Classifier(dataset.num_classes, seed=seed)
    opt = Adam(clf.parameters(), lr=lr)
    rng = np.random.default_rng([seed, 3])
    log = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(dataset))
        total = 0.0
        for i in range(0, len(order), batch_size):
            idx = order[i : i + batch_size]
            opt.zero_grad()
            loss = cross_entropy(clf(dataset.images[idx]), dataset.labels[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        row = {
            "epoch": epoch,
            "split": "train",
            "condition": "original",
            "loss": total / len(dataset),
            "accuracy": evaluate(clf, dataset.images, dataset.labels),
        }
        log.append(row)
        if on_epoch:
            on_epoch(row)
    return clf, log


@dataclass(frozen=True)
class FineTuneConfig:
    beta: float = 0.3
    epochs: int = 30
    seed: int = 0
    rate: float = 0.5
    alpha: float = 1.0
    batch_size: int = 32
    lr: float = 5e-4

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta {self.beta} outside [0, 1]")
        if not 0.0 < self.rate <= 1.0:
            raise ValueError(f"rate {self.rate} outside (0, 1]")


def finetune_loss(classifier, originals, reconstructions, labels, beta):
    """beta * CE(y(X), c) + (1 - beta) * CE(y(X_hat), c); returns (total, ce_orig, ce_recon)."""
    ce_orig = cross_entropy(classifier(originals), labels)
    ce_recon = cross_entropy(classifier(reconstructions), labels)
    return ce_orig * beta + ce_recon * (1.0 - beta), ce_orig, ce_recon


def finetune(classifier, dataset, pipeline, cfg, eval_set=None, on_epoch=None):
    """Fine-tune ``classifier`` in place against the frozen pipeline's reconstructions.

    Reconstructions are regenerated every epoch with that epoch's
    random-fill seeds. Accuracy rows cover the original and compressed
    conditions on ``eval_set`` (the training set when omitted).
    """
    if len(dataset) == 0:
        raise ValueError("cannot fine-tune on an empty dataset")
    eval_set = eval_set or dataset
    opt = Adam(classifier.parameters(), lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 4])
    log = []
    for epoch in range(1, cfg.epochs + 1):
        recon, _ = pipeline.reconstruct(dataset, cfg.rate, cfg.alpha, cfg.seed, epoch)
        order = rng.permutation(len(dataset))
        total = 0.0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            opt.zero_grad()
            loss, _, _ = finetune_loss(classifier, dataset.images[idx], recon[idx], dataset.labels[idx], cfg.beta)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        eval_recon, _ = pipeline.reconstruct(eval_set, cfg.rate, cfg.alpha, cfg.seed, 0)
        for condition, images in (("original", eval_set.images), ("compressed", eval_recon)):
            row = {
                "epoch": epoch,
                "split": eval_set.split,
                "condition": condition,
                "loss": total / len(dataset),
                "accuracy": evaluate(classifier, images, eval_set.labels),
            }
            log.append(row)
            if on_epoch:
                on_epoch(row)
    return classifier, log
