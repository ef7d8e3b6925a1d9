import csv
import json
import os

import numpy as np
import pytest

from semcom import orchestrator as orch
from semcom.cli import main
from semcom.config import ConfigError, ExperimentConfig, parse_config
from semcom.data import load_dataset
from semcom.masking import load_mask

TINY = """
# smallest config that still exercises every stage
experiment = tiny
per_class = 4
test_per_class = 2
rates = 0.5, 1.0
alphas = 1.0
seeds = 0
encoder_epochs = 2
decoder_epochs = 2
classifier_epochs = 2
finetune_epochs = 1
batch_size = 8
"""


def tiny(tmp_path, **changes):
    return parse_config(TINY).replace(out=str(tmp_path / "run"), **changes)


# --- config -----------------------------------------------------------------


def test_parse_config_values():
    cfg = parse_config(TINY)
    assert cfg.rates == (0.5, 1.0) and cfg.seeds == (0,) and cfg.per_class == 4
    assert cfg.beta == 0.3 and cfg.lr == 5e-4 and cfg.encoder_epochs == 2


def test_text_roundtrip():
    cfg = parse_config(TINY)
    assert parse_config(cfg.to_text()) == cfg


def test_digest_ignores_output_dir():
    cfg = parse_config(TINY)
    assert cfg.digest() == cfg.replace(out="elsewhere").digest()
    assert cfg.digest() != cfg.replace(beta=0.5).digest()


@pytest.mark.parametrize(
    "text",
    ["bogus = 1", "rates = 0.5, 1.5", "seeds =", "beta = 2", "per_class = many", "no equals sign", "patch_size = 6"],
)
def test_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_invalid_config_has_no_side_effects(tmp_path):
    cfg = tiny(tmp_path).replace(rates=(0.0,))
    with pytest.raises(ConfigError):
        orch.run_pipeline(cfg)
    assert not os.path.exists(cfg.out)


# --- metrics and comparison --------------------------------------------------


def _decoder_rows(values):
    return [orch.MetricsRow("e", "decoder", r, 1.0, 30, "train_masked_mse", v) for r, v in values.items()]


def test_compare_rates_ratio():
    table = orch.compare_rates(_decoder_rows({0.5: 0.09, 1.0: 0.1}))
    assert [row["rate"] for row in table] == [0.5, 1.0]
    assert table[0]["ratio"] == pytest.approx(0.9)
    assert table[1]["ratio"] == 1.0


def test_compare_rates_uses_final_epoch():
    rows = _decoder_rows({0.5: 0.2, 1.0: 0.1})
    rows.append(orch.MetricsRow("e", "decoder", 0.5, 1.0, 5, "train_masked_mse", 99.0))
    assert orch.compare_rates(rows)[0]["masked_mse"] == 0.2


def test_compare_rates_needs_baseline():
    with pytest.raises(orch.MissingBaselineError):
        orch.compare_rates(_decoder_rows({0.5: 0.1}))
    with pytest.raises(orch.MissingBaselineError):
        orch.compare_rates(_decoder_rows({0.5: 0.1, 0.25: 0.2}))


def test_metrics_file_roundtrip(tmp_path):
    path = tmp_path / "m.csv"
    w = orch.MetricsWriter(path, fresh=True)
    w.write("e", "encoder", None, None, 1, "train_loss", 0.5)
    w.write("e", "decoder", 0.5, 1.0, 1, "train_masked_mse", 0.25)
    with open(path) as fh:
        assert next(csv.reader(fh)) == list(orch.METRICS_HEADER)
    assert orch.read_metrics(path) == w.rows


def test_metrics_writer_appends(tmp_path):
    path = tmp_path / "m.csv"
    orch.MetricsWriter(path, fresh=True).write("e", "s", None, None, 1, "m", 1.0)
    orch.MetricsWriter(path).write("e", "s", None, None, 2, "m", 2.0)
    assert [r.epoch for r in orch.read_metrics(path)] == [1, 2]


# --- full runs ---------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    cfg = tiny(out)
    rows = orch.run_pipeline(cfg)
    return cfg, rows


def test_run_writes_all_artefacts(tiny_run):
    cfg, rows = tiny_run
    for rate in cfg.rates:
        assert os.path.exists(orch.decoder_path(cfg.out, 0, rate, 1.0))
        assert os.path.exists(orch.classifier_path(cfg.out, 0, rate, 1.0))
    assert os.path.exists(orch.encoder_path(cfg.out, 0))
    manifest = json.load(open(os.path.join(cfg.out, "manifest.json")))
    assert manifest["config_sha256"] == cfg.digest()
    assert manifest["seeds"] == [0]
    assert "tiny-s0/finetune/r1_a1" in manifest["stages_completed"]
    stages = {r.stage for r in rows}
    assert stages == {"encoder", "decoder", "classifier", "finetune"}


def test_one_row_per_key(tiny_run):
    _, rows = tiny_run
    keys = [(r.experiment, r.stage, r.rate, r.alpha, r.epoch, r.metric) for r in rows]
    assert len(keys) == len(set(keys))


def test_finetune_logs_frozen_baseline(tiny_run):
    _, rows = tiny_run
    assert any(r.stage == "finetune" and r.epoch == 0 and r.metric == "accuracy_compressed" for r in rows)


def test_checkpoints_reload(tiny_run):
    cfg, _ = tiny_run
    train, test = orch.load_data(cfg)
    enc = orch.load_encoder(cfg, orch.encoder_path(cfg.out, 0))
    dec = orch.load_decoder(cfg, orch.decoder_path(cfg.out, 0, 0.5, 1.0))
    from semcom.decoder import evaluate_reconstruction

    mse, _, _ = evaluate_reconstruction(test, enc, dec, 0.5, 1.0, 0)
    logged = [r.value for r in orch.read_metrics(os.path.join(cfg.out, "metrics.csv")) if r.metric == "test_masked_mse" and r.rate == 0.5]
    assert mse == logged[0]


def test_full_rate_only_matches_bypass(tmp_path):
    cfg = tiny(tmp_path, rates=(1.0,), classifier=False)
    a = [r.value for r in orch.run_pipeline(cfg) if r.stage == "decoder"]
    b = [r.value for r in orch.run_pipeline(cfg.replace(out=str(tmp_path / "bypass")), bypass_compressor=True) if r.stage == "decoder"]
    assert a == b


def test_dump_examples(tiny_run, tmp_path):
    cfg, _ = tiny_run
    _, test = orch.load_data(cfg)
    from semcom.pipeline import SemanticPipeline

    pipe = SemanticPipeline(
        orch.load_encoder(cfg, orch.encoder_path(cfg.out, 0)), orch.load_decoder(cfg, orch.decoder_path(cfg.out, 0, 0.5, 1.0))
    )
    paths = orch.dump_examples(pipe, test, 0.5, 1.0, 0, tmp_path / "a", count=3)
    assert sum(p.endswith(".semd") for p in paths) == 6 and sum(p.endswith(".semm") for p in paths) == 3
    raw, masks = pipe.reconstruct(test.subset(np.arange(3)), 0.5, 1.0, 0, 0)
    recon = load_dataset(paths[1])
    # unselected patches are the decoder's raw output, not blanked
    assert recon.images[0].tobytes() == raw[0].tobytes()
    assert load_mask(paths[2]).n_selected == 8
    again = orch.dump_examples(pipe, test, 0.5, 1.0, 0, tmp_path / "b", count=3)
    assert [open(p, "rb").read() for p in paths] == [open(p, "rb").read() for p in again]


# --- CLI ---------------------------------------------------------------------


def _write_cfg(tmp_path, extra=""):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY + f"out = {tmp_path / 'cli'}\n" + extra)
    return str(path)


def test_cli_stage_by_stage(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "classifier = true\n")
    assert main(["gen-data", "--config", cfg]) == 0
    assert main(["train-encoder", "--config", cfg]) == 0
    assert main(["train-decoder", "--config", cfg, "--rate", "0.5"]) == 0
    assert main(["train-decoder", "--config", cfg, "--rate", "1.0"]) == 0
    assert main(["train-classifier", "--config", cfg]) == 0
    assert main(["finetune-classifier", "--config", cfg, "--rate", "0.5", "--beta", "0.3"]) == 0
    assert main(["dump-examples", "--config", cfg, "--rate", "0.5", "--count", "2"]) == 0
    assert main(["eval", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "ratio" in out and "wrote 6 files" in out
    assert len(os.listdir(tmp_path / "cli" / "examples_r0.5_a1")) == 6


def test_cli_missing_checkpoint(tmp_path, capsys):
    assert main(["train-decoder", "--config", _write_cfg(tmp_path), "--rate", "0.5"]) == 4
    assert "error[precondition]" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("rates = 2.0\n")
    assert main(["run-all", "--config", str(path)]) == 2
    assert "error[config]" in capsys.readouterr().err


def test_cli_corrupt_dataset(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert main(["gen-data", "--config", cfg]) == 0
    train = tmp_path / "cli" / "train.semd"
    train.write_bytes(train.read_bytes()[:-7])
    assert main(["train-encoder", "--config", cfg]) == 3
    assert "error[data]" in capsys.readouterr().err


def test_cli_rate_needs_single_value(tmp_path):
    assert main(["train-decoder", "--config", _write_cfg(tmp_path), "--rate", "0.5", "1.0"]) == 2


def test_cli_eval_single_rate(tmp_path, capsys):
    metrics = tmp_path / "m.csv"
    w = orch.MetricsWriter(metrics, fresh=True)
    w.write("e", "decoder", 0.5, 1.0, 1, "train_masked_mse", 0.1)
    assert main(["eval", "--metrics", str(metrics)]) == 4


def test_default_config_is_valid():
    cfg = ExperimentConfig().validate()
    assert cfg.rates == (0.25, 0.5, 0.75, 1.0) and cfg.alphas == (1.0, 0.85)
    assert cfg.encoder_epochs == cfg.decoder_epochs == 30
