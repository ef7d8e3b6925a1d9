"""Two-stage training schedule, experiment grid, metrics and example dumps."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import platform
from dataclasses import dataclass

import numpy as np

from . import __version__
from .classifier import Classifier, FineTuneConfig, evaluate, finetune, pretrain_classifier
from .data import Dataset, generate_synthetic, load_dataset, save_dataset
from .decoder import Decoder, evaluate_reconstruction, train_decoder
from .masking import save_mask
from .pipeline import SemanticPipeline
from .tensor import load_module, parameter_checksum, save_module
from .vit import VisionTransformer, encode_dataset, accuracy_of, train_encoder

log = logging.getLogger(__name__)

METRICS_HEADER = ("experiment", "stage", "rate", "alpha", "epoch", "metric", "value")


class MissingBaselineError(ValueError):
    pass


class StageIsolationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricsRow:
    experiment: str
    stage: str
    rate: float | None
    alpha: float | None
    epoch: int
    metric: str
    value: float

    def cells(self):
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        return [self.experiment, self.stage, fmt(self.rate), fmt(self.alpha), str(self.epoch), self.metric, fmt(self.value)]


class MetricsWriter:
    """Append-only CSV sink; ``fresh`` truncates and writes the header."""

    def __init__(self, path, fresh=False):
        self.path = path
        self.rows = []
        exists = os.path.exists(path) and os.path.getsize(path) > 0
        if fresh or not exists:
            with open(path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(METRICS_HEADER)

    def write(self, *args):
        row = MetricsRow(*args)
        self.rows.append(row)
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(row.cells())
        return row


def read_metrics(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected metrics header {reader.fieldnames}")
        out = []
        for r in reader:
            out.append(
                MetricsRow(
                    r["experiment"],
                    r["stage"],
                    float(r["rate"]) if r["rate"] else None,
                    float(r["alpha"]) if r["alpha"] else None,
                    int(r["epoch"]),
                    r["metric"],
                    float(r["value"]),
                )
            )
        return out


# ---------------------------------------------------------------------------
# artefact layout


def tag(rate, alpha):
    return f"r{rate:g}_a{alpha:g}"


def seed_dir(out, seed):
    return os.path.join(out, f"seed{seed}")


def encoder_path(out, seed):
    return os.path.join(seed_dir(out, seed), "encoder.semc")


def decoder_path(out, seed, rate, alpha):
    return os.path.join(seed_dir(out, seed), f"decoder_{tag(rate, alpha)}.semc")


def classifier_path(out, seed, rate=None, alpha=None):
    name = "classifier.semc" if rate is None else f"classifier_ft_{tag(rate, alpha)}.semc"
    return os.path.join(seed_dir(out, seed), name)


def file_sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def load_data(cfg):
    """(train, test) datasets: SEMD files from the config or generated."""
    if cfg.train_data:
        train = load_dataset(cfg.train_data, cfg.patch_size, "train")
    else:
        train = generate_synthetic(cfg.num_classes, cfg.per_class, cfg.image_h, cfg.image_w, cfg.data_seed, cfg.patch_size, "train")
    if cfg.test_data:
        test = load_dataset(cfg.test_data, cfg.patch_size, "test")
    else:
        test = generate_synthetic(
            cfg.num_classes, cfg.test_per_class, cfg.image_h, cfg.image_w, cfg.data_seed + 10_000, cfg.patch_size, "test"
        )
    if train.hw != (cfg.image_h, cfg.image_w) or test.hw != train.hw:
        raise ValueError(f"dataset geometry {train.hw}/{test.hw} does not match config {cfg.image_h}x{cfg.image_w}")
    return train, test


def load_encoder(cfg, path):
    model = load_module(VisionTransformer(cfg.vit_config()), path)
    model.trained = True
    return model


def load_decoder(cfg, path):
    vc = cfg.vit_config()
    return load_module(Decoder(vc.dim, vc.rows, vc.cols, vc.patch_size), path)


def load_classifier(cfg, path):
    return load_module(Classifier(cfg.num_classes), path)


# ---------------------------------------------------------------------------
# stages


def run_encoder_stage(cfg, seed, train, test, metrics, exp):
    model, hist = train_encoder(train, cfg.vit_config(), cfg.encoder_epochs, seed, cfg.batch_size, cfg.lr)
    for row in hist:
        metrics.write(exp, "encoder", None, None, row["epoch"], "train_loss", row["loss"])
        metrics.write(exp, "encoder", None, None, row["epoch"], "train_accuracy", row["accuracy"])
    _, _, logits = encode_dataset(model, test.images)
    metrics.write(exp, "encoder", None, None, cfg.encoder_epochs, "test_accuracy", accuracy_of(logits, test.labels))
    return model, hist


def run_decoder_stage(cfg, seed, encoder, train, test, rate, alpha, metrics, exp, bypass=False):
    decoder, hist = train_decoder(
        train, encoder, rate, alpha, cfg.decoder_epochs, seed, cfg.batch_size, cfg.lr, bypass_compressor=bypass
    )
    for row in hist:
        metrics.write(exp, "decoder", rate, alpha, row["epoch"], "train_masked_mse", row["masked_mse"])
    test_mse, _, _ = evaluate_reconstruction(test, encoder, decoder, rate, alpha, seed, 0, bypass)
    metrics.write(exp, "decoder", rate, alpha, cfg.decoder_epochs, "test_masked_mse", test_mse)
    return decoder, hist


def run_classifier_stage(cfg, seed, train, test, metrics, exp):
    clf, hist = pretrain_classifier(train, cfg.classifier_epochs, seed, cfg.batch_size, cfg.lr)
    for row in hist:
        metrics.write(exp, "classifier", None, None, row["epoch"], "train_accuracy", row["accuracy"])
    metrics.write(exp, "classifier", None, None, cfg.classifier_epochs, "test_accuracy", evaluate(clf, test.images, test.labels))
    return clf, hist


def run_finetune_stage(cfg, seed, clf_state, pipeline, train, test, rate, alpha, metrics, exp, beta=None):
    """Log the frozen classifier's compressed accuracy (epoch 0), then fine-tune a copy."""
    clf = Classifier(cfg.num_classes)
    clf.load_state_dict(clf_state)
    recon, _ = pipeline.reconstruct(test, rate, alpha, seed, 0)
    metrics.write(exp, "finetune", rate, alpha, 0, "accuracy_original", evaluate(clf, test.images, test.labels))
    metrics.write(exp, "finetune", rate, alpha, 0, "accuracy_compressed", evaluate(clf, recon, test.labels))
    ft = FineTuneConfig(
        beta=cfg.beta if beta is None else beta,
        epochs=cfg.finetune_epochs,
        seed=seed,
        rate=rate,
        alpha=alpha,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
    )
    clf, hist = finetune(clf, train, pipeline, ft, eval_set=test)
    for row in hist:
        metrics.write(exp, "finetune", rate, alpha, row["epoch"], f"accuracy_{row['condition']}", row["accuracy"])
    return clf, hist


def write_manifest(cfg, out, stages):
    manifest = {
        "config_sha256": cfg.digest(),
        "experiment": cfg.experiment,
        "seeds": list(cfg.seeds),
        "stages_completed": stages,
        "versions": {"semcom": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    tmp = os.path.join(out, "manifest.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(out, "manifest.json"))
    return manifest


def run_pipeline(cfg, bypass_compressor=False):
    """Full experiment grid for every seed.

    Stage 1 trains the encoder on cross-entropy; stage 2 trains one decoder
    per (rate, alpha) with that encoder frozen; stage 3 (optional) pretrains
    the receiver classifier and fine-tunes one copy per (rate, alpha).
    Checkpoints are written as each stage finishes; metrics go to
    ``<out>/metrics.csv``.
    """
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())
    train, test = load_data(cfg)
    metrics = MetricsWriter(os.path.join(cfg.out, "metrics.csv"), fresh=True)
    stages = []
    write_manifest(cfg, cfg.out, stages)
    for seed in cfg.seeds:
        exp = f"{cfg.experiment}-s{seed}"
        os.makedirs(seed_dir(cfg.out, seed), exist_ok=True)

        log.info("%s: stage 1 (encoder)", exp)
        encoder, _ = run_encoder_stage(cfg, seed, train, test, metrics, exp)
        enc_file = encoder_path(cfg.out, seed)
        save_module(encoder, enc_file)
        enc_digest = (file_sha256(enc_file), parameter_checksum(encoder))
        stages.append(f"{exp}/encoder")
        write_manifest(cfg, cfg.out, stages)

        decoders = {}
        for rate in cfg.rates:
            for alpha in cfg.alphas:
                log.info("%s: stage 2 (decoder) r=%g alpha=%g", exp, rate, alpha)
                decoder, _ = run_decoder_stage(cfg, seed, encoder, train, test, rate, alpha, metrics, exp, bypass_compressor)
                save_module(decoder, decoder_path(cfg.out, seed, rate, alpha))
                decoders[rate, alpha] = decoder
                stages.append(f"{exp}/decoder/{tag(rate, alpha)}")
                write_manifest(cfg, cfg.out, stages)
        if (file_sha256(enc_file), parameter_checksum(encoder)) != enc_digest:
            raise StageIsolationError("encoder parameters changed during decoder training")

        if not cfg.classifier:
            continue
        log.info("%s: stage 3 (classifier)", exp)
        clf, _ = run_classifier_stage(cfg, seed, train, test, metrics, exp)
        save_module(clf, classifier_path(cfg.out, seed))
        stages.append(f"{exp}/classifier")
        write_manifest(cfg, cfg.out, stages)
        if cfg.finetune_epochs == 0:
            continue
        state = clf.state_dict()
        for (rate, alpha), decoder in decoders.items():
            pipe = SemanticPipeline(encoder, decoder)
            ft, _ = run_finetune_stage(cfg, seed, state, pipe, train, test, rate, alpha, metrics, exp)
            save_module(ft, classifier_path(cfg.out, seed, rate, alpha))
            stages.append(f"{exp}/finetune/{tag(rate, alpha)}")
            write_manifest(cfg, cfg.out, stages)
    return metrics.rows


# ---------------------------------------------------------------------------
# reporting


def compare_rates(rows, metric="train_masked_mse"):
    """Final-epoch masked MSE per (experiment, alpha, rate) and its ratio to the r=1 run."""
    final = {}
    for row in rows:
        if row.stage != "decoder" or row.metric != metric:
            continue
        key = (row.experiment, row.alpha, row.rate)
        if key not in final or row.epoch >= final[key][0]:
            final[key] = (row.epoch, row.value)
    if len({k[2] for k in final}) < 2:
        raise MissingBaselineError("need decoder results for at least two rates, including r = 1")
    table = []
    for (exp, alpha, rate), (epoch, value) in sorted(final.items()):
        base = final.get((exp, alpha, 1.0))
        if base is None:
            base = next((v for (e, _, r), v in sorted(final.items()) if e == exp and r == 1.0), None)
        if base is None:
            raise MissingBaselineError(f"{exp}: no r = 1 baseline for alpha = {alpha}")
        table.append(
            {"experiment": exp, "alpha": alpha, "rate": rate, "epoch": epoch, "masked_mse": value, "ratio": value / base[1]}
        )
    return table


def format_table(table):
    lines = [f"{'experiment':<16} {'alpha':>6} {'rate':>6} {'epoch':>5} {'masked_mse':>12} {'ratio':>7}"]
    for r in table:
        lines.append(
            f"{r['experiment']:<16} {r['alpha']:>6g} {r['rate']:>6g} {r['epoch']:>5d} {r['masked_mse']:>12.6f} {r['ratio']:>7.3f}"
        )
    return "\n".join(lines)


def dump_examples(pipeline, dataset, rate, alpha, seed, out_dir, count=None):
    """Write original / reconstruction SEMD pairs and mask sidecars for ``count`` images."""
    os.makedirs(out_dir, exist_ok=True)
    subset = dataset if count is None else dataset.subset(np.arange(min(count, len(dataset))))
    recon, masks = pipeline.reconstruct(subset, rate, alpha, seed, 0)
    written = []
    for i in range(len(subset)):
        ident = int(subset.ids[i])
        one = lambda imgs: Dataset(imgs[i : i + 1], subset.labels[i : i + 1], subset.ids[i : i + 1], subset.num_classes, subset.split)  # noqa: E731
        paths = (
            os.path.join(out_dir, f"original_{ident:05d}.semd"),
            os.path.join(out_dir, f"recon_{ident:05d}.semd"),
            os.path.join(out_dir, f"mask_{ident:05d}.semm"),
        )
        save_dataset(one(subset.images), paths[0])
        save_dataset(one(recon), paths[1])
        save_mask(masks[i], paths[2])
        written.extend(paths)
    return written
