"""Command-line driver.

Commands: ``synth``, ``featurize``, ``train``, ``evaluate``, ``grid-search``.
Every run writes a ``run_manifest.json`` next to its outputs recording the
command, arguments, seed, timestamp and tool version, so any run can be
reproduced afterwards.

Exit codes: 0 success, 1 partial failure (some inputs failed but the run
completed), 2 invalid invocation or unusable inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import FEATURE_MODES, load_sample_set, read_segment_index, write_segment_index
from .dataset import (
    Database,
    DatasetSplit,
    Label,
    RecordingRecord,
    class_weights,
    label_records,
    make_split,
    read_manifest,
    verify_speaker_disjoint,
)
from .errors import FormatError, TrainingDiverged
from .metrics import EvaluationReport, evaluate
from .models import (
    ModelConfig,
    best_config,
    build_model,
    grid_search,
    model_from_checkpoint,
    model_to_checkpoint,
    train,
)
from .pipeline import atomic_write_bytes, run_featurize
from .synth import SynthSpec, generate, write_corpus

logger = logging.getLogger("artcoord")


def _write_run_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                        seed: int | None, inputs: list[str], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config_path": getattr(args, "config", None),
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "tool_version": __version__,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    seed = int(np.random.SeedSequence().entropy % (2**31))
    logger.info("no --seed given; drew seed %d (recorded in run_manifest.json)", seed)
    return seed


def _records_from_index(rows: list[dict]) -> tuple[list[RecordingRecord], dict[str, float]]:
    """Collapse segment rows to per-recording records plus segment counts."""
    by_id: dict[str, RecordingRecord] = {}
    counts: dict[str, float] = {}
    for row in rows:
        rid = row["recording_id"]
        counts[rid] = counts.get(rid, 0.0) + 1.0
        if rid not in by_id:
            by_id[rid] = RecordingRecord(
                recording_id=rid,
                speaker_id=row["speaker_id"],
                database=Database(row["database"]),
                path="",
                label=Label(int(row["label"])),
            )
    return list(by_id.values()), counts


def _load_or_make_split(args, rows: list[dict], seed: int) -> DatasetSplit:
    records, counts = _records_from_index(rows)
    if args.split_file:
        split = DatasetSplit.load(args.split_file)
    else:
        ratios = tuple(float(r) for r in args.ratios.split(","))
        split = make_split(records, ratios=ratios, seed=seed, weights=counts)
    # leakage guards: parts must be id-disjoint and speaker-disjoint
    parts = [set(split.part(name)) for name in DatasetSplit.PART_NAMES]
    for i in range(3):
        for j in range(i + 1, 3):
            shared = parts[i] & parts[j]
            if shared:
                raise ValueError(
                    f"refusing split: recordings {sorted(shared)[:5]} appear in both "
                    f"{DatasetSplit.PART_NAMES[i]} and {DatasetSplit.PART_NAMES[j]}"
                )
    verify_speaker_disjoint(split, records)
    return split


def _train_config(args, feature_mode: str, seed: int, data_max_delay: int) -> ModelConfig:
    """Resolve the run config: file > retained best config, CLI flags on top.

    Without an explicit config the delay count adapts to the featurized data;
    an explicit config must match it (shape errors surface before training).
    """
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        raw.setdefault("feature_mode", feature_mode)
        config = ModelConfig.from_dict(raw)
        if config.max_delay != data_max_delay:
            raise ValueError(
                f"config max_delay {config.max_delay} does not match the featurized "
                f"data (max delay {data_max_delay})"
            )
    else:
        config = best_config(feature_mode, max_delay=data_max_delay)
    overrides = {"seed": seed}
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.epochs is not None:
        overrides["max_epochs"] = args.epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.patience is not None:
        overrides["patience"] = args.patience
    return replace(config, **overrides)


def _open_train_log(out_dir: Path):
    handle = (out_dir / "train_log.jsonl").open("w", encoding="utf-8")

    def log(epoch: int, train_loss: float, val_loss: float) -> None:
        handle.write(
            json.dumps(
                {
                    "epoch": epoch,
                    "train_loss": train_loss,
                    "val_loss": val_loss,
                    "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                }
            )
            + "\n"
        )
        handle.flush()

    return handle, log


# --- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    spec = SynthSpec(
        speakers_per_class=args.speakers_per_class,
        recordings_per_speaker=args.recordings_per_speaker,
        duration_range=(args.duration_min, args.duration_max),
        n_channels=args.channels,
        delay_nondepressed=args.delay_nondep,
        delay_depressed=args.delay_dep,
        gain=args.gain,
        noise_level=args.noise,
        seed=seed,
    )
    secondary = None
    stream_names = ("tv8",)
    if args.with_secondary:
        secondary = SynthSpec(
            speakers_per_class=args.speakers_per_class,
            recordings_per_speaker=args.recordings_per_speaker,
            duration_range=(args.duration_min, args.duration_max),
            n_channels=12,
            delay_nondepressed=args.secondary_delay_nondep,
            delay_depressed=args.secondary_delay_dep,
            gain=args.secondary_gain,
            noise_level=args.noise,
            seed=seed + 1,
        )
        stream_names = ("tv8", "mfcc12")
    entries = generate(spec, secondary=secondary)
    manifest = write_corpus(entries, out_dir, stream_names=stream_names)
    logger.info("wrote %d recordings to %s", len(entries), out_dir)
    _write_run_manifest(out_dir, "synth", args, seed, [], [str(manifest)])
    return 0


def cmd_featurize(args) -> int:
    seed = _resolve_seed(args)
    manifest_path = Path(args.manifest)
    out_dir = Path(args.out)
    records = read_manifest(manifest_path)
    labeled, excluded = label_records(records, binary_agreement=args.label_agreement == "binary")
    for rec in excluded:
        logger.warning("excluded %s: clinical scores disagree", rec.recording_id)
    rows, errors = run_featurize(
        labeled, manifest_path.parent, out_dir, args.feature_mode, args.max_delay, jobs=args.jobs
    )
    index_path = out_dir / "segments.jsonl"
    write_segment_index(index_path, rows)
    logger.info("featurized %d segments from %d recordings (%d failures)",
                len(rows), len(labeled), len(errors))
    _write_run_manifest(out_dir, "featurize", args, seed,
                        [str(manifest_path)], [str(index_path)])
    return 1 if errors else 0


def cmd_train(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = read_segment_index(args.index)

    resume = None
    feature_mode = args.feature_mode
    if args.resume:
        resume = model_from_checkpoint(Path(args.resume).read_bytes())
        feature_mode = resume.config.feature_mode
        config = resume.config

    split = _load_or_make_split(args, rows, seed)
    split.save(out_dir / "split.json")
    samples = load_sample_set(args.index, feature_mode)
    data_max_delay = samples.inputs[0].shape[2] - 1
    if resume is None:
        config = _train_config(args, feature_mode, seed, data_max_delay)
    elif config.max_delay != data_max_delay:
        raise ValueError(
            f"checkpoint max_delay {config.max_delay} does not match the featurized "
            f"data (max delay {data_max_delay})"
        )
    train_set = samples.by_recording_ids(split.train)
    val_set = samples.by_recording_ids(split.validation)
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("split leaves the train or validation part empty")
    weights = class_weights(train_set.labels)

    if resume is not None:
        model = resume.model
        start_epoch = int(resume.meta.get("stopped_epoch", 0))
        if args.epochs is not None:
            config = replace(config, max_epochs=args.epochs)
        optimizer, norm_stats = resume.optimizer, resume.norm_stats
    else:
        model = build_model(config)
        start_epoch = 0
        optimizer = norm_stats = None

    handle, log = _open_train_log(out_dir)
    try:
        result = train(model, train_set, val_set, weights, config,
                       optimizer=optimizer, norm_stats=norm_stats,
                       start_epoch=start_epoch, log=log)
    finally:
        handle.close()

    train_tag = config.train_tag or "+".join(sorted(set(train_set.databases.tolist())))
    config = replace(config, train_tag=train_tag)
    meta = {
        "stopped_epoch": result.report.stopped_epoch,
        "best_epoch": result.report.best_epoch,
        "best_val_loss": result.report.best_val_loss,
    }
    ckpt_path = out_dir / "checkpoint.acfn"
    atomic_write_bytes(
        ckpt_path,
        model_to_checkpoint(model, config, optimizer=result.optimizer,
                            norm_stats=result.norm_stats, meta=meta),
    )
    (out_dir / "train_report.json").write_text(
        json.dumps(
            {
                "stopped_epoch": result.report.stopped_epoch,
                "best_epoch": result.report.best_epoch,
                "best_val_loss": result.report.best_val_loss,
                "restored_best": result.report.restored_best,
                "train_losses": result.report.train_losses,
                "val_losses": result.report.val_losses,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    logger.info("stopped at epoch %d (best %d, val loss %.5f)",
                result.report.stopped_epoch, result.report.best_epoch,
                result.report.best_val_loss)
    _write_run_manifest(out_dir, "train", args, seed, [str(args.index)],
                        [str(ckpt_path), str(out_dir / "train_report.json")])
    return 0


def cmd_evaluate(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    loaded = model_from_checkpoint(Path(args.checkpoint).read_bytes())
    if loaded.norm_stats is None:
        raise ValueError("checkpoint carries no normalization statistics; re-train to evaluate")
    samples = load_sample_set(args.index, loaded.config.feature_mode)
    data_max_delay = samples.inputs[0].shape[2] - 1
    if loaded.config.max_delay != data_max_delay:
        raise ValueError(
            f"checkpoint max_delay {loaded.config.max_delay} does not match the "
            f"featurized data (max delay {data_max_delay})"
        )

    selections: list[tuple[str, object]] = []
    if args.split_file:
        split = DatasetSplit.load(args.split_file)
        parts = [args.part] if args.part != "all" else list(DatasetSplit.PART_NAMES)
        for part in parts:
            selections.append((part, samples.by_recording_ids(split.part(part))))
    else:
        selections.append(("all", samples))
    if args.database:
        filtered = []
        for tag, subset in selections:
            mask = np.isin(subset.databases, args.database)
            filtered.append((f"{tag}[{','.join(args.database)}]", subset.subset(mask)))
        selections = filtered

    feats = loaded.config.feature_mode
    train_tag = loaded.config.train_tag or "?"
    table_lines = [EvaluationReport.table_header()]
    outputs = []
    for tag, subset in selections:
        report = evaluate(loaded.model, subset, loaded.norm_stats,
                          threshold=args.threshold, per_recording=args.per_recording)
        report_path = out_dir / f"report_{tag.replace('[', '_').rstrip(']')}.json"
        report.save(report_path)
        outputs.append(str(report_path))
        table_lines.append(report.table_row(feats, train_tag, tag))
        logger.info("%s: accuracy %.4f, AUC-ROC %.4f", tag, report.accuracy, report.auc_roc)
    table_path = out_dir / "reports.tsv"
    table_path.write_text("\n".join(table_lines) + "\n", encoding="utf-8")
    outputs.append(str(table_path))
    _write_run_manifest(out_dir, "evaluate", args, seed,
                        [str(args.checkpoint), str(args.index)], outputs)
    return 0


def cmd_grid_search(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = read_segment_index(args.index)
    split = _load_or_make_split(args, rows, seed)
    split.save(out_dir / "split.json")
    samples = load_sample_set(args.index, args.feature_mode)
    train_set = samples.by_recording_ids(split.train)
    val_set = samples.by_recording_ids(split.validation)
    weights = class_weights(train_set.labels)
    base = _train_config(args, args.feature_mode, seed, samples.inputs[0].shape[2] - 1)

    ledger_path = out_dir / "grid_ledger.jsonl"
    handle = ledger_path.open("w", encoding="utf-8")

    def log(i, entry):
        handle.write(
            json.dumps(
                {
                    "point": i,
                    "config": entry.config.to_dict(),
                    "best_val_loss": entry.best_val_loss,
                    "stopped_epoch": entry.stopped_epoch,
                    "criterion_value": entry.criterion_value,
                    "error": entry.error,
                }
            )
            + "\n"
        )
        handle.flush()

    try:
        result, blob = grid_search(train_set, val_set, weights, args.feature_mode,
                                   base=base, criterion=args.criterion, log=log)
    finally:
        handle.close()
    ckpt_path = out_dir / "best_checkpoint.acfn"
    atomic_write_bytes(ckpt_path, blob)
    (out_dir / "best_config.json").write_text(
        json.dumps(result.best_config.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    logger.info("best grid point: %s", result.best_config.to_dict())
    _write_run_manifest(out_dir, "grid-search", args, seed, [str(args.index)],
                        [str(ledger_path), str(ckpt_path)])
    return 0


# --- argument parsing --------------------------------------------------------


def _add_split_args(p):
    p.add_argument("--split-file", help="existing split JSON (overrides --ratios)")
    p.add_argument("--ratios", default="0.8,0.1,0.1",
                   help="train,validation,test ratios for a fresh speaker-disjoint split")


def _add_train_config_args(p):
    p.add_argument("--config", help="ModelConfig JSON file (defaults to the retained best config)")
    p.add_argument("--lr", type=float, help="learning rate override")
    p.add_argument("--epochs", type=int, help="max epoch override")
    p.add_argument("--batch-size", type=int, help="batch size override")
    p.add_argument("--patience", type=int, help="early-stopping patience override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artcoord",
        description="Correlation-structure features and dilated CNN classifiers for "
                    "speech-based depression screening.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--speakers-per-class", type=int, default=40)
    p.add_argument("--recordings-per-speaker", type=int, default=3)
    p.add_argument("--duration-min", type=float, default=30.0)
    p.add_argument("--duration-max", type=float, default=60.0)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--delay-nondep", type=int, default=3)
    p.add_argument("--delay-dep", type=int, default=12)
    p.add_argument("--gain", type=float, default=0.8)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--with-secondary", action="store_true",
                   help="also emit a 12-channel stream with its own weaker coupling")
    p.add_argument("--secondary-delay-nondep", type=int, default=4)
    p.add_argument("--secondary-delay-dep", type=int, default=9)
    p.add_argument("--secondary-gain", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="manifest of recordings -> per-segment features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--feature-mode", choices=FEATURE_MODES, default="tv8")
    p.add_argument("--max-delay", type=int, default=50)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--label-agreement", choices=("level", "binary"), default="level",
                   help="dual-score agreement rule: same severity level (default) or same binary class")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a classifier on featurized segments")
    p.add_argument("--index", required=True, help="segments.jsonl from featurize")
    p.add_argument("--out", required=True)
    p.add_argument("--feature-mode", choices=FEATURE_MODES, default="tv8")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", help="checkpoint to continue training from")
    _add_split_args(p)
    _add_train_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on featurized segments")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split-file")
    p.add_argument("--part", choices=("train", "validation", "test", "all"), default="all")
    p.add_argument("--database", action="append", help="restrict to a database tag (repeatable)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--per-recording", action="store_true",
                   help="average segment scores per recording before computing metrics")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid-search", help="train all 32 grid points and keep the best")
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--feature-mode", choices=FEATURE_MODES, default="tv8")
    p.add_argument("--seed", type=int)
    p.add_argument("--criterion", choices=("val_loss", "val_auc", "val_accuracy"),
                   default="val_loss")
    _add_split_args(p)
    _add_train_config_args(p)
    p.set_defaults(func=cmd_grid_search)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FormatError, FileNotFoundError, TrainingDiverged) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
