"""End-to-end experiment driver and on-disk artifact layout.

Stages run in order: ingest, portrait, train-gan, balance, ssim-report,
train-cnn, evaluate. Every artifact lands under the output directory and
is inventoried with its sha256 in ``summary.json``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .adversarial import (
    AdvConfig,
    Flavor,
    GanModel,
    LossHistory,
    balance_dataset,
    build_dcgan,
    build_mlp_gan,
    provenance_csv,
    train_adversarial,
)
from .classifier import ClassifierConfig, build_cnn, cnn_spec, evaluate, split_per_class, train_cnn
from .config import WORKERS_ENV, ExperimentConfig
from .dataset import BehaviorClass, VibrationRecord, class_histogram, load_manifest, load_records, segment_record
from .errors import CheckpointError, ConfigError, DataError, PortraitGanError
from .metrics import ConfusionMatrix, SsimStats, report_all, ssim_distribution
from .nn import NetworkSpec, ParamSet, load_params, save_params
from .portrait import Portrait, PortraitKind, make_portrait, write_pgm

log = logging.getLogger(__name__)

STAGES = ("ingest", "portrait", "train-gan", "balance", "ssim-report", "train-cnn", "evaluate")


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)
    return path


def _json(path: Path, obj: Any) -> Path:
    return _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- stage building blocks --------------------------------------------------

def portraits_from_records(records: Sequence[VibrationRecord], kind: PortraitKind, stride: int,
                           max_windows: int = 0) -> tuple[list[Portrait], list[Portrait]]:
    """Split each record's portraits into (GAN training, held-out originals).

    Window 0 of every record forms the one-portrait-per-record validation
    replica; windows 1.. feed the GANs, so the replica is never trained on.
    """
    train, holdout = [], []
    for rec in records:
        windows = segment_record(rec, stride, max_windows or None)
        for w in windows:
            p = make_portrait(kind, w, rec.sample_rate)
            (holdout if w.index == 0 else train).append(p)
    return train, holdout


def by_class(portraits: Sequence[Portrait]) -> dict[BehaviorClass, list[Portrait]]:
    out: dict[BehaviorClass, list[Portrait]] = {c: [] for c in BehaviorClass}
    for p in portraits:
        out[p.label].append(p)
    return out


def build_gan(flavor: Flavor, cfg: AdvConfig, cls: BehaviorClass, kind: PortraitKind) -> GanModel:
    builder = build_dcgan if flavor is Flavor.DCGAN else build_mlp_gan
    return builder(cfg, cls, kind)


def _train_one(args: tuple) -> tuple[GanModel, LossHistory]:
    flavor, cfg, cls, kind, portraits = args
    log.info("training %s GAN for %s on %d portraits", flavor.value, cls.name, len(portraits))
    return train_adversarial(build_gan(flavor, cfg, cls, kind), portraits, cfg)


def train_all_gans(train: Sequence[Portrait], flavor: Flavor, cfg: AdvConfig, kind: PortraitKind,
                   workers: int = 1) -> dict[BehaviorClass, tuple[GanModel, LossHistory]]:
    groups = by_class(train)
    empty = [c.name for c, ps in groups.items() if not ps]
    if empty:
        raise DataError(f"no GAN training portraits for: {', '.join(empty)} "
                        "(records need at least two windows; window 0 is held out)")
    jobs = [(flavor, cfg, cls, kind, groups[cls]) for cls in BehaviorClass]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    return dict(zip(BehaviorClass, results))


# --- checkpoints --------------------------------------------------------------

def save_gan(model: GanModel, cfg: AdvConfig, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = [save_params(model.g_params, directory / "generator.ckpt"),
             save_params(model.d_params, directory / "discriminator.ckpt")]
    meta = {"flavor": model.flavor.value, "class": model.class_label.name, "kind": model.portrait_kind.value,
            "iteration": model.iteration, "seed": cfg.seed, "checkpoint_id": model.checkpoint_id,
            "config": cfg.to_dict()}
    paths.append(_json(directory / "model.json", meta))
    for p in paths[:2]:
        log.info("wrote %s", p)
    return paths


def load_gan(directory: str | Path) -> tuple[GanModel, AdvConfig]:
    directory = Path(directory)
    meta_path = directory / "model.json"
    if not meta_path.is_file():
        raise CheckpointError(f"missing GAN metadata: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    try:
        cfg = AdvConfig(**meta["config"])
        model = build_gan(Flavor(meta["flavor"]), cfg, BehaviorClass.parse(meta["class"]), PortraitKind(meta["kind"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad GAN metadata in {meta_path}: {exc}") from None
    g, d = load_params(directory / "generator.ckpt"), load_params(directory / "discriminator.ckpt")
    _check_layout(model.generator, g, directory / "generator.ckpt")
    _check_layout(model.discriminator, d, directory / "discriminator.ckpt")
    return replace(model, g_params=g, d_params=d, iteration=int(meta["iteration"])), cfg


def _check_layout(net: NetworkSpec, params: ParamSet, path: Path) -> None:
    ref = build_shapes(net)
    got = [{k: v.shape for k, v in p.items()} for p in params]
    if ref != got:
        raise CheckpointError(f"{path}: parameter shapes do not match the network")


def build_shapes(net: NetworkSpec) -> list[dict[str, tuple[int, ...]]]:
    rng = np.random.default_rng(0)
    return [{k: v.shape for k, v in layer.init(rng, s).items()} for layer, s in zip(net.layers, net.shapes)]


def save_cnn(params: ParamSet, cfg: ClassifierConfig, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    ckpt = save_params(params, directory / "classifier.ckpt")
    log.info("wrote %s", ckpt)
    return [ckpt, _json(directory / "classifier.json", {"config": cfg.to_dict()})]


def load_cnn(directory: str | Path) -> tuple[NetworkSpec, ParamSet]:
    directory = Path(directory)
    meta_path = directory / "classifier.json"
    if not meta_path.is_file():
        raise CheckpointError(f"missing classifier metadata: {meta_path}")
    cfg = ClassifierConfig(**json.loads(meta_path.read_text(encoding="utf-8"))["config"])
    net = cnn_spec(cfg.widths)
    params = load_params(directory / "classifier.ckpt")
    _check_layout(net, params, directory / "classifier.ckpt")
    return net, params


# --- reports --------------------------------------------------------------------

def ssim_summary_csv(stats: dict[BehaviorClass, SsimStats]) -> str:
    rows = ["class,mean,std,range,pairs"]
    rows += [f"{c.name},{s.mean!r},{s.std!r},{s.range!r},{len(s.pairs)}" for c, s in stats.items()]
    return "\n".join(rows) + "\n"


def write_confusion_reports(cm: ConfusionMatrix, directory: Path, tag: str) -> list[Path]:
    report = report_all(cm)
    return [_write(directory / f"confusion_{tag}.csv", cm.to_csv()),
            _write(directory / f"metrics_{tag}.csv", report.to_csv())]


@dataclass
class RunState:
    """Everything a run produced, plus per-stage status for the summary."""

    output_dir: Path
    status: dict[str, str] = field(default_factory=lambda: {s: "not-run" for s in STAGES})
    artifacts: list[Path] = field(default_factory=list)
    results: dict[str, Any] = field(default_factory=dict)

    def add(self, *paths: Path | Sequence[Path]) -> None:
        for p in paths:
            self.artifacts += list(p) if isinstance(p, (list, tuple)) else [p]


def _metrics_dict(cm: ConfusionMatrix) -> dict[str, Any]:
    rep = report_all(cm)
    return {
        "overall_accuracy": rep.overall_accuracy,
        "per_class": {c.name: {"tp": m.tp, "fp": m.fp, "fn": m.fn, "accuracy": m.accuracy,
                               "coverage": m.coverage, "harmonic_mean": m.harmonic_mean}
                      for c, m in rep.per_class.items()},
    }


def summary_csv(results: dict[str, Any]) -> str:
    """Flat, timestamp-free digest of the headline numbers."""
    rows = ["section,key,value"]
    for tag in ("validation", "original"):
        if tag in results:
            rows.append(f"{tag},overall_accuracy,{results[tag]['overall_accuracy']!r}")
            for cls, m in results[tag]["per_class"].items():
                for key in ("accuracy", "coverage", "harmonic_mean"):
                    rows.append(f"{tag},{cls}.{key},{m[key]!r}")
    for cls, s in results.get("ssim", {}).items():
        for key in ("mean", "std", "range"):
            rows.append(f"ssim,{cls}.{key},{s[key]!r}")
    for cls, ckpt in results.get("checkpoints", {}).items():
        rows.append(f"gan,{cls}.checkpoint_id,{ckpt}")
    return "\n".join(rows) + "\n"


def emit_reports(state: RunState, cfg: ExperimentConfig) -> Path:
    """Write summary.csv and summary.json (config echo, stages, metrics, hashes)."""
    out = state.output_dir
    csv_path = _write(out / "summary.csv", summary_csv(state.results))
    inventory = {}
    for p in [*state.artifacts, csv_path]:
        if not p.is_file():
            raise DataError(f"missing artifact: {p}")
        inventory[p.relative_to(out).as_posix()] = sha256_file(p)
    stages = [{"stage": s, "status": state.status[s]} for s in STAGES]
    summary = {"config": cfg.to_dict(), "stages": stages, "results": state.results,
               "artifacts": dict(sorted(inventory.items()))}
    return _json(out / "summary.json", summary)


# --- driver -----------------------------------------------------------------------

def _stage(state: RunState, name: str, fn: Callable[[], Any]) -> Any:
    log.info("stage %s", name)
    try:
        result = fn()
    except PortraitGanError as exc:
        state.status[name] = "failed"
        exc.stage = name  # type: ignore[attr-defined]
        raise
    state.status[name] = "done"
    return result


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> RunState:
    if cfg.manifest is None:
        raise ConfigError("experiment.manifest is required")
    workers = worker_count() if workers is None else workers
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = RunState(out)
    try:
        _run(cfg, state, workers)
    finally:
        try:
            emit_reports(state, cfg)
        except PortraitGanError as exc:
            log.error("could not write summary: %s", exc)
    return state


def _run(cfg: ExperimentConfig, state: RunState, workers: int) -> None:
    out = state.output_dir

    def ingest():
        manifest = load_manifest(cfg.manifest)
        hist = class_histogram(manifest)
        state.add(_write(out / "ingest" / "class_histogram.csv", hist.to_csv()))
        return load_records(manifest)

    records = _stage(state, "ingest", ingest)

    def portraits():
        train, holdout = portraits_from_records(records, cfg.portrait_kind, cfg.stride, cfg.max_windows_per_record)
        for sub, ps in (("original/train", train), ("original/holdout", holdout)):
            d = out / "portraits" / sub
            d.mkdir(parents=True, exist_ok=True)
            state.add([write_pgm(p, d) for p in ps])
        log.info("wrote %d training and %d held-out portraits under %s", len(train), len(holdout), out / "portraits")
        return train, holdout

    train, holdout = _stage(state, "portrait", portraits)

    def gans():
        trained = train_all_gans(train, cfg.flavor, cfg.adversarial, cfg.portrait_kind, workers)
        for cls, (model, hist) in trained.items():
            d = out / "gan" / cls.name
            state.add(save_gan(model, cfg.adversarial, d), _write(d / "loss.csv", hist.to_csv()))
        state.results["checkpoints"] = {c.name: m.checkpoint_id for c, (m, _) in trained.items()}
        return {c: m for c, (m, _) in trained.items()}

    models = _stage(state, "train-gan", gans)

    def balance():
        synthetic, provenance = balance_dataset(models, cfg.target_per_class, cfg.seed)
        d = out / "portraits" / "synthetic"
        d.mkdir(parents=True, exist_ok=True)
        state.add([write_pgm(p, d) for p in synthetic])
        state.add(_write(out / "balance" / "provenance.csv", provenance_csv(provenance)),
                  _write(out / "balance" / "class_histogram.csv", class_histogram(synthetic).to_csv()))
        return synthetic

    synthetic = _stage(state, "balance", balance)

    def ssim_report():
        orig, gen = by_class(train), by_class(synthetic)
        stats = {c: ssim_distribution(orig[c], gen[c]) for c in BehaviorClass}
        for c, s in stats.items():
            state.add(_write(out / "ssim" / f"pairs_{c.name}.csv", s.pairs_csv()))
        state.add(_write(out / "ssim" / "summary.csv", ssim_summary_csv(stats)))
        state.results["ssim"] = {c.name: {"mean": s.mean, "std": s.std, "range": s.range} for c, s in stats.items()}

    _stage(state, "ssim-report", ssim_report)

    def cnn():
        net, params = build_cnn(cfg.seed, cfg.classifier.widths)
        params, hist = train_cnn(net, params, synthetic, cfg.classifier)
        state.add(save_cnn(params, cfg.classifier, out / "cnn"), _write(out / "cnn" / "history.csv", hist.to_csv()))
        return net, params, hist

    net, params, hist = _stage(state, "train-cnn", cnn)

    def evaluation():
        _, val = split_per_class(synthetic, cfg.classifier)
        for tag, data in (("validation", val), ("original", holdout)):
            cm = evaluate(net, params, data)
            state.add(write_confusion_reports(cm, out / "eval", tag))
            state.results[tag] = _metrics_dict(cm)

    _stage(state, "evaluate", evaluation)


__all__ = [
    "STAGES", "RunState", "by_class", "emit_reports", "load_cnn", "load_gan",
    "portraits_from_records", "run_experiment", "save_cnn", "save_gan", "sha256_file", "train_all_gans",
    "worker_count",
]
