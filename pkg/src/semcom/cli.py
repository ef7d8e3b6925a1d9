"""Command-line entry point: ``semcom <verb> [options]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .channel import CorruptPacketError
from .config import ConfigError, ExperimentConfig, load_config
from .data import DatasetFormatError, save_dataset
from .decoder import PreconditionError
from .tensor import CheckpointError, save_module
from . import orchestrator as orch
from .pipeline import SemanticPipeline

EXIT_CODES = {
    "config": 2,
    "data": 3,
    "precondition": 4,
    "io": 5,
}


def _load_cfg(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.out:
        changes["out"] = args.out
    if getattr(args, "beta", None) is not None:
        changes["beta"] = args.beta
    if args.verb == "run-all":
        if args.rate is not None:
            changes["rates"] = tuple(args.rate)
        if args.alpha is not None:
            changes["alphas"] = tuple(args.alpha)
    return cfg.replace(**changes).validate()


def _single(values, default, name):
    if values is None:
        return default
    if len(values) != 1:
        raise ConfigError(f"{name} takes exactly one value for this verb")
    return values[0]


def _require(path, what):
    if not os.path.exists(path):
        raise PreconditionError(f"missing {what}: {path} (run the earlier stage first)")
    return path


def _data(cfg):
    train_file = os.path.join(cfg.out, "train.semd")
    test_file = os.path.join(cfg.out, "test.semd")
    if not cfg.train_data and os.path.exists(train_file):
        cfg = cfg.replace(train_data=train_file, test_data=test_file if os.path.exists(test_file) else cfg.test_data)
    return orch.load_data(cfg)


def cmd_gen_data(cfg, args):
    train, test = orch.load_data(cfg.replace(train_data="", test_data=""))
    os.makedirs(cfg.out, exist_ok=True)
    for ds, name in ((train, "train.semd"), (test, "test.semd")):
        save_dataset(ds, os.path.join(cfg.out, name))
        print(f"wrote {os.path.join(cfg.out, name)} ({len(ds)} images)")


def _metrics(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    return orch.MetricsWriter(os.path.join(cfg.out, "metrics.csv"))


def cmd_train_encoder(cfg, args):
    train, test = _data(cfg)
    metrics = _metrics(cfg)
    for seed in cfg.seeds:
        os.makedirs(orch.seed_dir(cfg.out, seed), exist_ok=True)
        model, hist = orch.run_encoder_stage(cfg, seed, train, test, metrics, f"{cfg.experiment}-s{seed}")
        save_module(model, orch.encoder_path(cfg.out, seed))
        print(f"seed {seed}: train accuracy {hist[-1]['accuracy']:.3f}")


def cmd_train_decoder(cfg, args):
    rate = _single(args.rate, cfg.rates[0], "--rate")
    alpha = _single(args.alpha, cfg.alphas[0], "--alpha")
    train, test = _data(cfg)
    metrics = _metrics(cfg)
    for seed in cfg.seeds:
        encoder = orch.load_encoder(cfg, _require(orch.encoder_path(cfg.out, seed), "encoder checkpoint"))
        decoder, hist = orch.run_decoder_stage(cfg, seed, encoder, train, test, rate, alpha, metrics, f"{cfg.experiment}-s{seed}")
        save_module(decoder, orch.decoder_path(cfg.out, seed, rate, alpha))
        print(f"seed {seed} r={rate:g} alpha={alpha:g}: masked mse {hist[-1]['masked_mse']:.5f}")


def cmd_train_classifier(cfg, args):
    train, test = _data(cfg)
    metrics = _metrics(cfg)
    for seed in cfg.seeds:
        os.makedirs(orch.seed_dir(cfg.out, seed), exist_ok=True)
        clf, hist = orch.run_classifier_stage(cfg, seed, train, test, metrics, f"{cfg.experiment}-s{seed}")
        save_module(clf, orch.classifier_path(cfg.out, seed))
        print(f"seed {seed}: train accuracy {hist[-1]['accuracy']:.3f}")


def cmd_finetune_classifier(cfg, args):
    rate = _single(args.rate, cfg.rates[0], "--rate")
    alpha = _single(args.alpha, cfg.alphas[0], "--alpha")
    train, test = _data(cfg)
    metrics = _metrics(cfg)
    for seed in cfg.seeds:
        encoder = orch.load_encoder(cfg, _require(orch.encoder_path(cfg.out, seed), "encoder checkpoint"))
        decoder = orch.load_decoder(cfg, _require(orch.decoder_path(cfg.out, seed, rate, alpha), "decoder checkpoint"))
        clf = orch.load_classifier(cfg, _require(orch.classifier_path(cfg.out, seed), "classifier checkpoint"))
        pipe = SemanticPipeline(encoder, decoder)
        ft, hist = orch.run_finetune_stage(
            cfg, seed, clf.state_dict(), pipe, train, test, rate, alpha, metrics, f"{cfg.experiment}-s{seed}"
        )
        save_module(ft, orch.classifier_path(cfg.out, seed, rate, alpha))
        compressed = [r for r in hist if r["condition"] == "compressed"]
        if compressed:
            print(f"seed {seed} r={rate:g} alpha={alpha:g}: compressed accuracy {compressed[-1]['accuracy']:.3f}")


def cmd_eval(cfg, args):
    path = args.metrics or os.path.join(cfg.out, "metrics.csv")
    rows = orch.read_metrics(_require(path, "metrics file"))
    print(orch.format_table(orch.compare_rates(rows, args.metric)))


def cmd_run_all(cfg, args):
    orch.run_pipeline(cfg)
    rows = orch.read_metrics(os.path.join(cfg.out, "metrics.csv"))
    if len(set(cfg.rates)) >= 2 and 1.0 in cfg.rates:
        print(orch.format_table(orch.compare_rates(rows)))
    print(f"metrics: {os.path.join(cfg.out, 'metrics.csv')}")


def cmd_dump_examples(cfg, args):
    rate = _single(args.rate, 0.5, "--rate")
    alpha = _single(args.alpha, cfg.alphas[0], "--alpha")
    _, test = _data(cfg)
    seed = cfg.seeds[0]
    encoder = orch.load_encoder(cfg, _require(orch.encoder_path(cfg.out, seed), "encoder checkpoint"))
    decoder = orch.load_decoder(cfg, _require(orch.decoder_path(cfg.out, seed, rate, alpha), "decoder checkpoint"))
    out_dir = args.dump_dir or os.path.join(cfg.out, f"examples_{orch.tag(rate, alpha)}")
    paths = orch.dump_examples(SemanticPipeline(encoder, decoder), test, rate, alpha, seed, out_dir, args.count)
    print(f"wrote {len(paths)} files to {out_dir}")


VERBS = {
    "gen-data": cmd_gen_data,
    "train-encoder": cmd_train_encoder,
    "train-decoder": cmd_train_decoder,
    "train-classifier": cmd_train_classifier,
    "finetune-classifier": cmd_finetune_classifier,
    "eval": cmd_eval,
    "run-all": cmd_run_all,
    "dump-examples": cmd_dump_examples,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="semcom", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="run a single seed")
        p.add_argument("--rate", type=float, nargs="+", help="compression rate(s) r in (0, 1]")
        p.add_argument("--alpha", type=float, nargs="+", help="threshold fraction(s) in [0, 1]")
        p.add_argument("--beta", type=float, help="fine-tuning weight on original images")
        p.add_argument("--out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if verb == "eval":
            p.add_argument("--metrics", help="metrics CSV (default <out>/metrics.csv)")
            p.add_argument("--metric", default="train_masked_mse", help="decoder metric to compare")
        if verb == "dump-examples":
            p.add_argument("--count", type=int, default=3)
            p.add_argument("--dump-dir")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load_cfg(args)
        VERBS[args.verb](cfg, args)
        return 0
    except ConfigError as exc:
        category, message = "config", str(exc)
    except (DatasetFormatError, CorruptPacketError, CheckpointError) as exc:
        category, message = "data", str(exc)
    except (PreconditionError, orch.MissingBaselineError) as exc:
        category, message = "precondition", str(exc)
    except OSError as exc:
        category, message = "io", str(exc)
    print(f"error[{category}]: {message}", file=sys.stderr)
    return EXIT_CODES[category]

if __name__ == "__main__":
    sys.exit(main())
