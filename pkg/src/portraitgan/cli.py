"""Command-line entry point: one subcommand per pipeline stage plus run-all."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .adversarial import AdvConfig, Flavor, balance_dataset, generate_portraits, provenance_csv, train_adversarial
from .classifier import ClassifierConfig, build_cnn, evaluate, train_cnn
from .config import WORKERS_ENV, config_help, load_config
from .dataset import BehaviorClass, DEFAULT_STRIDE, class_histogram, load_manifest, load_records
from .errors import ConfigError, DataError, NumericError, PortraitGanError
from .metrics import ssim_distribution
from .pipeline import (
    STAGES,
    build_gan,
    by_class,
    load_cnn,
    load_gan,
    portraits_from_records,
    run_experiment,
    save_cnn,
    save_gan,
    ssim_summary_csv,
    write_confusion_reports,
)
from .portrait import PortraitKind, read_pgm_dir, write_pgm
from .synthetic import write_synthetic_dataset

log = logging.getLogger("portraitgan")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage mistakes are configuration errors, not data errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _portraits(directory: str):
    ps = read_pgm_dir(directory)
    if not ps:
        raise DataError(f"no .pgm portraits in {directory}")
    return ps


def _adv_cfg(args) -> AdvConfig:
    cfg = load_config(args.config).adversarial if args.config else AdvConfig()
    over = {k: v for k, v in (("iterations", args.iterations), ("batch_size", args.batch_size),
                              ("learning_rate", args.lr), ("seed", args.seed)) if v is not None}
    return replace(cfg, **over)


def _cls_cfg(args) -> ClassifierConfig:
    cfg = load_config(args.config).classifier if args.config else ClassifierConfig()
    over = {k: v for k, v in (("epochs", args.epochs), ("train_per_class", args.train_per_class),
                              ("val_per_class", args.val_per_class), ("seed", args.seed)) if v is not None}
    return replace(cfg, **over)


def cmd_synth(args) -> None:
    path = write_synthetic_dataset(args.out, args.seed, windows_per_record=args.windows_per_record)
    log.info("wrote %s", path)


def cmd_ingest(args) -> None:
    hist = class_histogram(load_manifest(args.manifest))
    print(hist.report())
    if args.out:
        Path(args.out).write_text(hist.to_csv(), encoding="utf-8")
        log.info("wrote %s", args.out)


def cmd_portrait(args) -> None:
    records = load_records(load_manifest(args.manifest))
    train, holdout = portraits_from_records(records, PortraitKind(args.kind), args.stride, args.max_windows)
    for sub, ps in (("train", train), ("holdout", holdout)):
        d = Path(args.out) / sub
        d.mkdir(parents=True, exist_ok=True)
        for p in ps:
            write_pgm(p, d)
        log.info("wrote %d portraits to %s", len(ps), d)


def cmd_train_gan(args) -> None:
    cfg = _adv_cfg(args)
    cls = BehaviorClass.parse(args.cls)
    ps = [p for p in _portraits(args.portraits) if p.label is cls]
    if not ps:
        raise DataError(f"no {cls.name} portraits in {args.portraits}")
    model = build_gan(Flavor(args.flavor), cfg, cls, ps[0].kind)
    model, hist = train_adversarial(model, ps, cfg)
    out = Path(args.out)
    save_gan(model, cfg, out)
    (out / "loss.csv").write_text(hist.to_csv(), encoding="utf-8")
    log.info("wrote %s", out / "loss.csv")


def cmd_generate(args) -> None:
    model, _ = load_gan(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in generate_portraits(model, args.n, args.seed):
        write_pgm(p, out)
    log.info("wrote %d portraits to %s", args.n, out)


def cmd_balance(args) -> None:
    models = {}
    for cls in BehaviorClass:
        d = Path(args.models) / cls.name
        if not d.is_dir():
            raise DataError(f"missing model directory for {cls.name}: {d}")
        models[cls] = load_gan(d)[0]
    portraits, provenance = balance_dataset(models, args.target, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in portraits:
        write_pgm(p, out)
    (out / "provenance.csv").write_text(provenance_csv(provenance), encoding="utf-8")
    log.info("wrote %d portraits and provenance.csv to %s", len(portraits), out)


def cmd_ssim_report(args) -> None:
    orig, gen = by_class(_portraits(args.originals)), by_class(_portraits(args.generated))
    stats = {c: ssim_distribution(orig[c], gen[c]) for c in BehaviorClass if orig[c] and gen[c]}
    if not stats:
        raise DataError("no class has both original and generated portraits")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for c, s in stats.items():
        (out / f"pairs_{c.name}.csv").write_text(s.pairs_csv(), encoding="utf-8")
    (out / "summary.csv").write_text(ssim_summary_csv(stats), encoding="utf-8")
    print(ssim_summary_csv(stats), end="")


def cmd_train_cnn(args) -> None:
    cfg = _cls_cfg(args)
    net, params = build_cnn(cfg.seed, cfg.widths)
    params, hist = train_cnn(net, params, _portraits(args.portraits), cfg)
    out = Path(args.out)
    save_cnn(params, cfg, out)
    (out / "history.csv").write_text(hist.to_csv(), encoding="utf-8")
    log.info("wrote %s", out / "history.csv")


def cmd_evaluate(args) -> None:
    net, params = load_cnn(args.model)
    cm = evaluate(net, params, _portraits(args.portraits))
    write_confusion_reports(cm, Path(args.out), args.tag)
    print(cm.to_csv(), end="")


def cmd_run_all(args) -> None:
    cfg = load_config(args.config)
    over = {}
    if args.manifest:
        over["manifest"] = Path(args.manifest)
    if args.output:
        over["output_dir"] = Path(args.output)
    if args.seed is not None:
        over["seed"] = args.seed
    if over:
        cfg = replace(cfg, **over)
    state = run_experiment(cfg)
    for tag in ("validation", "original"):
        if tag in state.results:
            print(f"{tag} accuracy: {state.results[tag]['overall_accuracy']:.4f}")
    print(f"summary: {Path(cfg.output_dir) / 'summary.json'}")


def build_parser() -> argparse.ArgumentParser:
    epilog = (f"Config keys and defaults (INI sections):\n{config_help()}\n\n"
              f"Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.\n"
              f"{WORKERS_ENV}: number of per-class GAN trainings run in parallel (default 1).")
    parser = _Parser(prog="portraitgan", description=__doc__, epilog=epilog,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, "write the bundled six-family synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--windows-per-record", type=int, default=6)

    p = add("ingest", cmd_ingest, "load a manifest and report the class histogram")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="optional CSV path for the histogram")

    p = add("portrait", cmd_portrait, "convert records to PGM portraits (train/ and holdout/)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=[k.value for k in PortraitKind], default=PortraitKind.CwtMorse.value)
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.add_argument("--max-windows", type=int, default=0, help="windows per record, 0 = all (default 0)")
    p.add_argument("--out", required=True)

    p = add("train-gan", cmd_train_gan, "train one class's GAN on a directory of portraits")
    p.add_argument("--portraits", required=True)
    p.add_argument("--class", dest="cls", required=True, choices=[c.name for c in BehaviorClass])
    p.add_argument("--flavor", choices=[f.value for f in Flavor], default=Flavor.DCGAN.value)
    p.add_argument("--config", help="INI file; its [adversarial] section is used")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("generate", cmd_generate, "sample portraits from a trained GAN")
    p.add_argument("--model", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("balance", cmd_balance, "generate a flat per-class synthetic dataset from six GANs")
    p.add_argument("--models", required=True, help="directory with one subdirectory per class")
    p.add_argument("--target", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("ssim-report", cmd_ssim_report, "per-class SSIM statistics of generated vs original portraits")
    p.add_argument("--originals", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--out", required=True)

    p = add("train-cnn", cmd_train_cnn, "train the CNN classifier on a balanced portrait directory")
    p.add_argument("--portraits", required=True)
    p.add_argument("--config", help="INI file; its [classifier] section is used")
    p.add_argument("--epochs", type=int)
    p.add_argument("--train-per-class", type=int)
    p.add_argument("--val-per-class", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "confusion matrix and metrics of a trained CNN on portraits")
    p.add_argument("--model", required=True)
    p.add_argument("--portraits", required=True)
    p.add_argument("--tag", default="eval")
    p.add_argument("--out", required=True)

    p = add("run-all", cmd_run_all, "run every stage from a config file: " + ", ".join(STAGES))
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", help="override experiment.manifest")
    p.add_argument("--output", help="override experiment.output_dir")
    p.add_argument("--seed", type=int, help="override experiment.seed")
    p.epilog = epilog
    p.formatter_class = argparse.RawDescriptionHelpFormatter
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except PortraitGanError as exc:
        stage = getattr(exc, "stage", None)
        print(f"error{f' in stage {stage}' if stage else ''}: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigError):
            return EXIT_CONFIG
        if isinstance(exc, NumericError):
            return EXIT_NUMERIC
        return EXIT_DATA
    except ValueError as exc:
        # invalid values passed through to config dataclasses
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
