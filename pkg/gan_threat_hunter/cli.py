"""
Command-line front end: preprocess, augment, train, evaluate, gradcheck.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""
import logging
import sys
from argparse import SUPPRESS, ArgumentParser
from dataclasses import fields, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

from dotenv import find_dotenv, load_dotenv

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data_pipeline import load_bundle, prepare_dataset, save_bundle
from .errors import CheckpointError, InputError, ThreatHunterError
from .gan import augment_dataset, resolve_targets
from .gradcheck import assert_passed, run_gradcheck_suite
from .metrics import EvaluationReport, TrainingHistory, build_report, confusion, emit
from .settings import RunConfig, load_run_config
from .tensor import SeededRng
from .transformer import init_model, predict, train
from .utils import staged_writes

logger = logging.getLogger("gan_threat_hunter")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
PROVENANCE_FILE = "provenance.json"
GAN_HISTORY_FILE = "gan_history.csv"


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(stream=sys.stdout, level=level.upper(), format=LOG_FORMAT, force=True)


def cmd_preprocess(cfg: RunConfig) -> int:
    """load -> clean -> select -> encode -> split -> standardize, then write the bundle."""
    bundle = prepare_dataset(
        cfg.raw_csv, label_column=cfg.label_column, drop_columns=cfg.drop_columns,
        onehot_columns=cfg.onehot_columns, split=cfg.split_spec(),
        subsample_fraction=cfg.subsample_fraction,
    )
    save_bundle(cfg.bundle_dir, bundle)
    logger.info("summary: preprocess train_rows=%d test_rows=%d classes=%d width=%d",
                len(bundle.train), len(bundle.test), int((bundle.train.class_counts() > 0).sum()),
                bundle.train.width)
    return 0


def cmd_augment(cfg: RunConfig) -> int:
    """Per-class GAN augmentation of the training split; writes a new bundle plus provenance."""
    bundle = load_bundle(cfg.bundle_dir)
    targets = resolve_targets(cfg.augment_targets, bundle.train)
    result = augment_dataset(bundle.train, targets, cfg.gan_config(bundle.train.width))

    counts = result.dataset.class_counts()
    refused = set(result.refused)
    for idx, name in enumerate(bundle.codec.names):
        if targets[idx] != counts[idx] and name not in refused:
            raise ThreatHunterError(f"count audit failed for {name}: {counts[idx]} rows, target {targets[idx]}")

    augmented = replace(
        bundle, train=result.dataset,
        extra={**bundle.extra, "augmented_from": str(cfg.bundle_dir), "augment_targets": cfg.augment_targets},
    )
    save_bundle(cfg.augmented_dir, augmented, sidecars={
        PROVENANCE_FILE: result.to_dict(),
        GAN_HISTORY_FILE: result.history_frame().to_csv(index=False, lineterminator="\n"),
    })
    logger.info("summary: augment rows_added=%d refused=%s train_rows=%d",
                result.rows_added, ",".join(result.refused) or "-", len(result.dataset))
    return 0


def cmd_train(cfg: RunConfig) -> int:
    """Train the classifier; writes the checkpoint and the per-epoch history CSV."""
    source = cfg.augmented_dir if cfg.use_augmented else cfg.bundle_dir
    bundle = load_bundle(source)
    model_cfg = cfg.model_config(bundle.train.width, len(bundle.codec))
    rng = SeededRng(cfg.seed)
    model = init_model(model_cfg, rng)
    logger.info("training on %s: %d rows, %d parameters", source, len(bundle.train),
                sum(p.size for p in model.parameters()))
    history = train(model, bundle.train, model_cfg, rng.spawn(1), bundle.test)

    checkpoint = Checkpoint(
        model=model, codec=bundle.codec, seed=cfg.seed, stats=bundle.stats,
        encoders=bundle.encoders, feature_names=bundle.feature_names,
    )
    with staged_writes() as stage:
        stage.write_text(cfg.history_csv, history.to_csv())
        save_checkpoint(cfg.checkpoint, checkpoint, stage)
    if len(history):
        logger.info("summary: train epochs=%d %s", len(history), history.records[-1].describe())
    return 0


def _load_scored_checkpoint(path, bundle) -> Checkpoint:
    checkpoint = load_checkpoint(path)
    checkpoint.check_codec(bundle.codec)
    if checkpoint.model.config.input_len != bundle.test.width:
        raise CheckpointError(
            f"{path} expects {checkpoint.model.config.input_len} features, bundle has {bundle.test.width}"
        )
    return checkpoint


def _score(checkpoint: Checkpoint, bundle) -> EvaluationReport:
    preds = predict(checkpoint.model, bundle.test.X)
    return build_report(confusion(bundle.test.y, preds, len(bundle.codec)), bundle.codec)


def compare_reports(report: EvaluationReport, baseline: EvaluationReport) -> dict:
    """Accuracy and macro-F1 of a model against a baseline on the same test rows."""
    return {
        "accuracy": report.accuracy,
        "baseline_accuracy": baseline.accuracy,
        "macro_f1": report.macro["f1"],
        "baseline_macro_f1": baseline.macro["f1"],
        "macro_f1_delta": report.macro["f1"] - baseline.macro["f1"],
        "f1_delta": {m.name: m.f1 - b.f1 for m, b in zip(report.classes, baseline.classes)},
    }


def cmd_evaluate(cfg: RunConfig) -> int:
    """Score the checkpoint on the bundle's test split and emit the report files."""
    bundle = load_bundle(cfg.augmented_dir if cfg.use_augmented else cfg.bundle_dir)
    report = _score(_load_scored_checkpoint(cfg.checkpoint, bundle), bundle)
    comparison = None
    if cfg.baseline_checkpoint:
        baseline = _score(_load_scored_checkpoint(cfg.baseline_checkpoint, bundle), bundle)
        comparison = {"checkpoint": str(cfg.checkpoint), "baseline_checkpoint": str(cfg.baseline_checkpoint),
                      **compare_reports(report, baseline)}
    history_path = Path(cfg.history_csv)
    history = TrainingHistory.from_csv(history_path) if history_path.is_file() else None
    emit(report, history, cfg.report_dir, cfg.report_formats, comparison)
    logger.info("classification report\n%s", report.to_text())
    logger.info("summary: evaluate rows=%d accuracy=%.4f macro_f1=%.4f weighted_f1=%.4f",
                len(bundle.test), report.accuracy, report.macro["f1"], report.weighted["f1"])
    if comparison is not None:
        logger.info("summary: baseline macro_f1=%.4f macro_f1_delta=%+.4f",
                    comparison["baseline_macro_f1"], comparison["macro_f1_delta"])
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    """Finite-difference checks of every layer, the GAN losses and a tiny classifier."""
    results = run_gradcheck_suite(seed=cfg.seed)
    for result in results:
        print(result.describe())
    assert_passed(results)
    worst = max(r.max_rel_error for r in results)
    logger.info("summary: gradcheck %d parameters passed, worst rel err %.2e", len(results), worst)
    return 0


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "preprocess": cmd_preprocess,
    "augment": cmd_augment,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
}


def _add_setting_flags(parser: ArgumentParser) -> None:
    defaults = RunConfig()
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        if isinstance(default, tuple):
            shown = ",".join(str(v) for v in default)
        else:
            shown = str(default)
        kwargs = dict(dest=f.name.upper(), default=SUPPRESS, metavar="VALUE",
                      help=f"{f.name.upper()} (default: {shown})")
        if isinstance(default, bool):
            kwargs.update(nargs="?", const="true")
        parser.add_argument(flag, **kwargs)


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="dotenv-style KEY=VALUE config file")
    _add_setting_flags(common)

    parser = ArgumentParser(
        prog="gan-threat-hunter",
        description="GAN-augmented Transformer threat hunting on Edge-IIoT flow records",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or "").strip().splitlines()[0])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    options = vars(args)
    config_path = options.pop("config", None)
    command = options.pop("command")
    configure_logging()
    # THREAT_HUNTER_* values from a local .env; real environment variables win
    load_dotenv(find_dotenv(usecwd=True))
    try:
        cfg = load_run_config(config_path, options)
        configure_logging(cfg.log_level)
        return COMMANDS[command](cfg)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return 2
    except InputError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 2
    except ThreatHunterError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
