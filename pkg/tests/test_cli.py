import hashlib
import json
import re
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from portraitgan.cli import main
from portraitgan.config import load_config
from portraitgan.dataset import BehaviorClass, write_signal
from portraitgan.errors import CheckpointError
from portraitgan.pipeline import STAGES, load_cnn, load_gan, run_experiment, save_cnn
from portraitgan.adversarial import generate_portraits
from portraitgan.classifier import ClassifierConfig, build_cnn
from portraitgan.portrait import read_pgm_dir
from portraitgan.synthetic import write_synthetic_dataset

TINY_CFG = """
[experiment]
manifest = {manifest}
output_dir = out
seed = 0
portrait_kind = {kind}
target_per_class = 3

[adversarial]
iterations = 2
batch_size = 2
gen_channels = 4,2,2
disc_channels = 2,4,4
log_every = 1

[classifier]
epochs = 1
batch_size = 2
train_per_class = 1
val_per_class = 2
widths = 2,2,2
"""


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    return write_synthetic_dataset(d, seed=0, counts={c: 2 for c in BehaviorClass}, windows_per_record=3)


def _config(directory: Path, manifest: Path, kind="CMR") -> Path:
    path = directory / "tiny.cfg"
    path.write_text(TINY_CFG.format(manifest=manifest, kind=kind))
    return path


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------- run-all

def test_run_all_smoke(tmp_path, dataset, capsys):
    cfg = _config(tmp_path, dataset)
    assert main(["-q", "run-all", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert re.search(r"validation accuracy: \d\.\d{4}", capsys.readouterr().out)
    summary = json.loads((out / "summary.json").read_text())
    assert [s["stage"] for s in summary["stages"]] == list(STAGES)
    assert all(s["status"] == "done" for s in summary["stages"])
    assert summary["config"]["experiment"]["target_per_class"] == 3
    # every recorded hash matches the file on disk
    assert summary["artifacts"]
    for rel, digest in summary["artifacts"].items():
        assert _sha(out / rel) == digest
    for rel in ("ingest/class_histogram.csv", "balance/provenance.csv", "ssim/summary.csv", "cnn/history.csv",
                "eval/confusion_validation.csv", "eval/metrics_original.csv", "gan/Ball/loss.csv"):
        assert rel in summary["artifacts"]
    assert len(read_pgm_dir(out / "portraits" / "synthetic")) == 18
    assert len(read_pgm_dir(out / "portraits" / "original" / "holdout")) == 12
    hist = (out / "balance" / "class_histogram.csv").read_text().splitlines()
    assert hist[0] == "class,count" and all(line.endswith(",3") for line in hist[1:])
    assert (out / "summary.csv").read_text().startswith("section,key,value\n")


def test_run_all_is_deterministic_and_worker_independent(tmp_path, dataset):
    cfg = load_config(_config(tmp_path, dataset))
    a = run_experiment(replace(cfg, output_dir=tmp_path / "a"), workers=1)
    b = run_experiment(replace(cfg, output_dir=tmp_path / "b"), workers=2)
    for rel in ("summary.csv", "eval/metrics_validation.csv", "eval/metrics_original.csv",
                "eval/confusion_original.csv", "ssim/summary.csv", "gan/Nominal/generator.ckpt"):
        assert (a.output_dir / rel).read_bytes() == (b.output_dir / rel).read_bytes(), rel


def test_run_all_cwt_kind(tmp_path, dataset):
    cfg = _config(tmp_path, dataset, kind="CwtMorse")
    assert main(["-q", "run-all", "--config", str(cfg), "--output", str(tmp_path / "cwt")]) == 0
    assert (tmp_path / "cwt" / "summary.json").is_file()


def test_failed_stage_still_writes_summary(tmp_path, capsys):
    (tmp_path / "s").mkdir()
    sig = np.zeros(2000)
    sig[5] = np.nan
    write_signal(sig, tmp_path / "s" / "bad.f64")
    (tmp_path / "m.csv").write_text("s/bad.f64,Ball,12000,FanEnd\n")
    cfg = _config(tmp_path, tmp_path / "m.csv")
    assert main(["-q", "run-all", "--config", str(cfg)]) == 3
    assert "stage portrait" in capsys.readouterr().err
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    status = {s["stage"]: s["status"] for s in summary["stages"]}
    assert status["ingest"] == "done" and status["portrait"] == "failed" and status["evaluate"] == "not-run"


def test_exit_codes(tmp_path, capsys):
    assert main(["run-all", "--config", str(tmp_path / "missing.cfg")]) == 1
    (tmp_path / "m.csv").write_text("a.f64,Broken,12000,FanEnd\n")
    cfg = _config(tmp_path, tmp_path / "m.csv")
    assert main(["-q", "run-all", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "stage ingest" in err and "Broken" in err
    with pytest.raises(SystemExit) as exc:
        main(["run-all"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1


def test_help_documents_config_and_exit_codes(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    assert "Exit codes" in text and "target_per_class" in text and "PORTRAITGAN_WORKERS" in text
    for cmd in ("synth", "ingest", "portrait", "train-gan", "generate", "balance", "ssim-report",
                "train-cnn", "evaluate", "run-all"):
        assert cmd in text


# ---------------------------------------------------------------- individual stages

def test_stage_commands_chain(tmp_path, dataset, capsys):
    assert main(["-q", "ingest", "--manifest", str(dataset), "--out", str(tmp_path / "h.csv")]) == 0
    assert (tmp_path / "h.csv").read_text().splitlines()[1] == "Nominal,2"
    assert "Nominal: 2" in capsys.readouterr().out
    assert main(["-q", "portrait", "--manifest", str(dataset), "--kind", "Gram", "--out", str(tmp_path / "p")]) == 0
    assert len(read_pgm_dir(tmp_path / "p" / "train")) == 24
    for cls in BehaviorClass:
        assert main(["-q", "train-gan", "--portraits", str(tmp_path / "p" / "train"), "--class", cls.name,
                     "--iterations", "1", "--batch-size", "2", "--out", str(tmp_path / "g" / cls.name)]) == 0
    assert main(["-q", "generate", "--model", str(tmp_path / "g" / "Ball"), "-n", "4",
                 "--out", str(tmp_path / "gen")]) == 0
    assert len(read_pgm_dir(tmp_path / "gen")) == 4
    assert main(["-q", "balance", "--models", str(tmp_path / "g"), "--target", "5",
                 "--out", str(tmp_path / "bal")]) == 0
    assert len(read_pgm_dir(tmp_path / "bal")) == 30
    assert main(["-q", "ssim-report", "--originals", str(tmp_path / "p" / "train"),
                 "--generated", str(tmp_path / "bal"), "--out", str(tmp_path / "ssim")]) == 0
    assert capsys.readouterr().out.startswith("class,mean,std,range,pairs\n")
    assert main(["-q", "train-cnn", "--portraits", str(tmp_path / "bal"), "--epochs", "1",
                 "--train-per-class", "2", "--val-per-class", "3", "--out", str(tmp_path / "cnn")]) == 0
    assert main(["-q", "evaluate", "--model", str(tmp_path / "cnn"), "--portraits", str(tmp_path / "p" / "holdout"),
                 "--tag", "original", "--out", str(tmp_path / "eval")]) == 0
    assert (tmp_path / "eval" / "metrics_original.csv").is_file()


def test_synth_command(tmp_path):
    assert main(["-q", "synth", "--out", str(tmp_path / "d"), "--windows-per-record", "2"]) == 0
    lines = (tmp_path / "d" / "manifest.csv").read_text().splitlines()
    assert len([l for l in lines if l.strip()]) == 114


def test_missing_inputs_are_data_errors(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["-q", "train-cnn", "--portraits", str(tmp_path / "empty"), "--out", str(tmp_path / "c")]) == 2
    assert main(["-q", "balance", "--models", str(tmp_path / "empty"), "--out", str(tmp_path / "b")]) == 2


# ---------------------------------------------------------------- checkpoints

def test_gan_checkpoint_round_trip(tmp_path, dataset):
    cfg = _config(tmp_path, dataset)
    assert main(["-q", "run-all", "--config", str(cfg)]) == 0
    meta = json.loads((tmp_path / "out" / "gan" / "Ball" / "model.json").read_text())
    model, adv = load_gan(tmp_path / "out" / "gan" / "Ball")
    assert model.checkpoint_id == meta["checkpoint_id"] and model.iteration == 2
    assert adv.gen_channels == (4, 2, 2)
    a = generate_portraits(model, 3, 1)
    b = generate_portraits(load_gan(tmp_path / "out" / "gan" / "Ball")[0], 3, 1)
    assert a == b


def test_cnn_checkpoint_layout_checked(tmp_path):
    _, params = build_cnn(0, (2, 2, 2))
    save_cnn(params, ClassifierConfig(widths=(4, 4, 4)), tmp_path)
    with pytest.raises(CheckpointError):
        load_cnn(tmp_path)
    save_cnn(params, ClassifierConfig(widths=(2, 2, 2)), tmp_path)
    net, back = load_cnn(tmp_path)
    assert all(np.array_equal(a[k], b[k]) for a, b in zip(params, back) for k in a)
