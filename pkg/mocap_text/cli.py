"""
Command-line entry point.

Every subcommand writes ``manifest.json`` into its output directory with the
resolved configuration, so a run can be repeated from its artifacts alone.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from loguru import logger
from pydantic import ValidationError

from mocap_text import __version__
from mocap_text.config import settings
from mocap_text.exceptions import (
    CheckpointVersionError,
    ConfigError,
    DatasetError,
    MetricError,
    MocapTextError,
    SegmentationError,
    UnsupportedModeError,
)
from mocap_text.logging_config import configure_logging
from mocap_text.models.caption_model import CaptionModel
from mocap_text.models.segment_model import NotAlignable, SegmentationResult
from mocap_text.schemas.data_schemas import ScenarioConfig
from mocap_text.schemas.model_schemas import (
    AttentionConfig,
    AttentionMode,
    DecoderConfig,
    EncoderConfig,
    EncoderKind,
    ModelConfig,
)
from mocap_text.schemas.report_schemas import RunConfig
from mocap_text.schemas.training_schemas import TeacherForcingMode, TrainingConfig
from mocap_text.services import (
    checkpoint_service,
    data_service,
    decoding_service,
    export_service,
    metrics_service,
    segmentation_service,
    synth_service,
    training_service,
)
from mocap_text.services.embedding_factory import EmbeddingProviderFactory
from mocap_text.services.vocabulary_service import build_vocab

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_CHECKPOINT_VERSION = 4
EXIT_INVALID_INPUT = 5
EXIT_EVALUATION = 6

ATTENTION_CHOICES = {
    "soft": AttentionMode.SOFT,
    "local": AttentionMode.LOCAL,
    "local-recurrent": AttentionMode.LOCAL_RECURRENT,
}
ENCODER_CHOICES = ["gru", "bigru", "mlp", "deep-mlp"]


# Argument parsing


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--encoder", choices=ENCODER_CHOICES, default="mlp")
    group.add_argument("--attention", choices=list(ATTENTION_CHOICES), default="local-recurrent")
    group.add_argument("--D", dest="half_width", type=int, default=5, help="window half-width")
    group.add_argument("--gaussian-width", type=float, default=None, help="r, D/2 when unset")
    group.add_argument("--overlap-alpha", type=float, default=1.0)
    group.add_argument("--mask", action=argparse.BooleanOptionalAction, default=True)
    group.add_argument("--causal", action="store_true")
    group.add_argument("--hidden", type=int, default=64, help="GRU state size n and n'")
    group.add_argument("--embedding", type=int, default=64)
    group.add_argument("--mlp-width", type=int, default=64)
    group.add_argument("--max-len", type=int, default=None)


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--lr", type=float, default=1e-3)
    group.add_argument("--teacher-forcing", type=float, default=0.5)
    group.add_argument(
        "--teacher-forcing-mode",
        choices=[m.value for m in TeacherForcingMode],
        default=TeacherForcingMode.STEP.value,
    )
    group.add_argument("--beta", type=float, default=1.0)
    group.add_argument("--batch-size", type=int, default=32)
    group.add_argument("--epochs", type=int, default=50)
    group.add_argument("--grad-clip", type=float, default=5.0)
    group.add_argument("--min-freq", type=int, default=1)
    group.add_argument("--stride", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mocap-text", description="Motion-to-language generation and evaluation"
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic annotated dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-samples", type=int, default=100)
    p.add_argument("--min-primitives", type=int, default=1)
    p.add_argument("--max-primitives", type=int, default=3)
    p.add_argument("--primitives", nargs="+", default=None)
    p.add_argument("--fps", type=float, default=20.0)
    p.add_argument("--noise", type=float, default=0.005)
    p.add_argument("--split", type=float, nargs=3, default=(0.8, 0.1, 0.1))
    p.add_argument(
        "--mirror", action="store_true", help="add left-right mirrored copies to the train split"
    )

    p = sub.add_parser("train", help="fit a model and save a checkpoint")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    _add_model_flags(p)
    _add_training_flags(p)

    p = sub.add_parser("generate", help="caption motions with greedy or beam decoding")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--keep-all", action="store_true", help="write every beam hypothesis")
    p.add_argument("--export", action="store_true", help="also export attention per sample")

    p = sub.add_parser("segment", help="segment generations against annotations")
    p.add_argument("--generations", required=True)
    p.add_argument("--data", required=True, help="dataset or annotation file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("score-seg", help="IoU, IoP and element-of scores")
    p.add_argument("--generations", nargs="+", required=True)
    p.add_argument("--data", required=True, help="dataset or annotation file")
    p.add_argument("--out", required=True)
    p.add_argument("--common", action="store_true", help="score samples alignable in every run")
    p.add_argument("--theta-steps", type=int, default=None)

    p = sub.add_parser("score-text", help="BLEU and semantic similarity")
    p.add_argument("--generations", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", default=None, help="precomputed sentence vectors")
    p.add_argument("--hashed-embeddings", action="store_true")
    p.add_argument("--smoothing", action="store_true")

    p = sub.add_parser("export-attn", help="export attention tables and traces")
    p.add_argument("--generations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", default=None, help="dataset or annotation file for segments")
    p.add_argument("--sample", default=None)
    p.add_argument("--factor", type=float, default=None, help="transparency factor F")

    p = sub.add_parser("grid", help="sequential hyperparameter sweep")
    p.add_argument("--train", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--layers", type=int, nargs="+", default=[2, 4])
    p.add_argument("--widths", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--D-values", dest="half_widths", type=int, nargs="+", default=[5])
    p.add_argument("--masks", choices=["on", "off"], nargs="+", default=["on"])
    _add_model_flags(p)
    _add_training_flags(p)
    return parser


# Config assembly


def model_config_from_args(args: argparse.Namespace, input_dim: int = 63) -> ModelConfig:
    hidden = args.hidden
    if args.encoder == "deep-mlp":
        encoder = EncoderConfig(
            kind=EncoderKind.MLP,
            input_dim=input_dim,
            mlp_layers=4,
            mlp_dims=[args.mlp_width] * 3 + [hidden],
        )
    elif args.encoder == "mlp":
        encoder = EncoderConfig(
            kind=EncoderKind.MLP,
            input_dim=input_dim,
            mlp_layers=2,
            mlp_dims=[args.mlp_width, hidden],
        )
    else:
        encoder = EncoderConfig(
            kind=EncoderKind(args.encoder), input_dim=input_dim, hidden_dim=hidden
        )
    decoder = DecoderConfig(
        hidden_dim=hidden,
        embedding_dim=args.embedding,
        **({"max_length": args.max_len} if args.max_len is not None else {}),
    )
    attention = AttentionConfig(
        mode=ATTENTION_CHOICES[args.attention],
        half_width=args.half_width,
        gaussian_width=args.gaussian_width,
        overlap=args.overlap_alpha,
        mask=args.mask,
        causal=args.causal,
    )
    return ModelConfig(encoder=encoder, attention=attention, decoder=decoder)


def training_config_from_args(args: argparse.Namespace, seed: int) -> TrainingConfig:
    return TrainingConfig(
        learning_rate=args.lr,
        teacher_forcing_ratio=args.teacher_forcing,
        teacher_forcing_mode=TeacherForcingMode(args.teacher_forcing_mode),
        beta=args.beta,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=seed,
        grad_clip=args.grad_clip,
    )


def _seed(args: argparse.Namespace) -> int:
    seed = getattr(args, "seed", None)
    return settings.seed if seed is None else seed


def write_manifest(out_dir: Path, run_config: RunConfig) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    path.write_text(
        json.dumps(run_config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_annotations(path: str) -> Dict:
    """Annotations from an annotation file, or from a dataset's embedded annotations"""
    try:
        return data_service.parse_annotations(path)
    except DatasetError:
        parsed = data_service.parse_dataset(path, expected_width=None)
        return {s.id: s.annotation for s in parsed.samples if s.annotation is not None}


# Subcommands


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    seed = _seed(args)
    scenario = ScenarioConfig(
        n_samples=args.n_samples,
        min_primitives=args.min_primitives,
        max_primitives=args.max_primitives,
        fps=args.fps,
        noise=args.noise,
        **({"primitives": args.primitives} if args.primitives else {}),
    )
    samples = synth_service.synth_generate(scenario, seed)
    split = data_service.split_dataset(samples, tuple(args.split), seed)
    if args.mirror:
        split.train = synth_service.mirror_samples(split.train)
    data_service.write_dataset(samples, out / "dataset.jsonl")
    for name in ("train", "val", "test"):
        data_service.write_dataset(getattr(split, name), out / f"{name}.jsonl")
    write_manifest(
        out,
        RunConfig(
            command="synth",
            argv=args.argv,
            output_dir=str(out),
            seed=seed,
            options={
                "scenario": scenario.model_dump(mode="json"),
                "split": list(args.split),
                "mirror": args.mirror,
            },
        ),
    )
    return EXIT_OK


def _load_training_data(path: str, stride: int):
    """Samples of one frame width; the width sets the encoder input size"""
    parsed = data_service.parse_dataset(path, stride=stride, expected_width=None)
    if not parsed.samples:
        raise DatasetError(f"no valid samples in {path}")
    widths = {s.width for s in parsed.samples}
    if len(widths) > 1:
        raise DatasetError(f"mixed frame widths in {path}: {sorted(widths)}")
    return parsed.samples, widths.pop()


def cmd_train(args: argparse.Namespace) -> int:
    out = Path(args.out)
    seed = _seed(args)
    samples, width = _load_training_data(args.train, args.stride)
    model_config = model_config_from_args(args, width)
    training = training_config_from_args(args, seed)
    vocabulary = build_vocab(samples, args.min_freq)
    normalization = data_service.compute_normalization(samples)
    model = CaptionModel.create(model_config, vocabulary, seed, normalization)
    logger.info(f"Training {model.parameter_count} parameters on {len(samples)} samples")

    result = training_service.train(data_service.training_pairs(samples), model, training)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_service.save_checkpoint(result.model, out / "checkpoint.json", training)
    _write_json(out / "losses.json", {"losses": result.losses})
    write_manifest(
        out,
        RunConfig(
            command="train",
            argv=args.argv,
            inputs={"train": args.train},
            output_dir=str(out),
            seed=seed,
            model=model_config,
            training=training,
            options={"min_freq": args.min_freq, "stride": args.stride},
        ),
    )
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    model, _ = checkpoint_service.load_checkpoint(args.checkpoint)
    samples = data_service.parse_dataset(args.data, expected_width=None).samples
    records = []
    for sample in samples:
        if args.beam > 1:
            results = decoding_service.beam_decode(model, sample.frames, args.beam, args.max_len)
        else:
            results = [decoding_service.greedy_decode(model, sample.frames, args.max_len)]
        if not args.keep_all:
            results = results[:1]
        for rank, result in enumerate(results):
            records.append(decoding_service.to_generation_record(sample.id, rank, result))
            if args.export and rank == 0:
                seg = None
                if sample.annotation is not None and result.trace.segments is not None:
                    alignment = segmentation_service.segment_generation(result, sample.annotation)
                    seg = alignment if isinstance(alignment, SegmentationResult) else None
                export_service.export(result, seg, out / "exports" / sample.id)
    decoding_service.write_generations(records, out / "generations.jsonl")
    write_manifest(
        out,
        RunConfig(
            command="generate",
            argv=args.argv,
            inputs={"checkpoint": args.checkpoint, "data": args.data},
            output_dir=str(out),
            model=model.config,
            options={"beam": args.beam, "max_len": args.max_len, "keep_all": args.keep_all},
        ),
    )
    logger.info(f"Generated {len(records)} captions for {len(samples)} samples")
    return EXIT_OK


def _segment_all(generations_path: str, annotations: Dict) -> Dict:
    alignments = {}
    positions = {}
    for record in decoding_service.read_generations(generations_path):
        if record.rank != 0 or record.sample_id not in annotations:
            continue
        result = decoding_service.from_generation_record(record)
        alignments[record.sample_id] = segmentation_service.segment_generation(
            result, annotations[record.sample_id]
        )
        positions[record.sample_id] = record.positions
    return {"alignments": alignments, "positions": positions}


def cmd_segment(args: argparse.Namespace) -> int:
    out = Path(args.out)
    annotations = load_annotations(args.data)
    segmented = _segment_all(args.generations, annotations)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "segmentation.jsonl").open("w", encoding="utf-8") as handle:
        for sample_id, alignment in sorted(segmented["alignments"].items()):
            record = segmentation_service.to_record(sample_id, alignment)
            handle.write(json.dumps(record.model_dump(mode="json")) + "\n")
    excluded = sum(isinstance(a, NotAlignable) for a in segmented["alignments"].values())
    logger.info(f"Segmented {len(segmented['alignments'])} samples, {excluded} not alignable")
    write_manifest(
        out,
        RunConfig(
            command="segment",
            argv=args.argv,
            inputs={"generations": args.generations, "data": args.data},
            output_dir=str(out),
        ),
    )
    return EXIT_OK


def cmd_score_seg(args: argparse.Namespace) -> int:
    out = Path(args.out)
    annotations = load_annotations(args.data)
    runs = [_segment_all(path, annotations) for path in args.generations]
    include = None
    if args.common:
        include = segmentation_service.common_alignable_ids(r["alignments"] for r in runs)
    reports = {}
    for path, run in zip(args.generations, runs):
        report = segmentation_service.corpus_scores(
            run["alignments"],
            annotations,
            positions=run["positions"],
            include_ids=include,
            theta_steps=args.theta_steps,
        )
        reports[path] = report.model_dump(mode="json")
        logger.info(
            f"{path}: N={report.n_samples} IoU={report.iou_continuous:.4f} "
            f"IoP={report.iop_continuous:.4f} element-of={report.element_of}"
        )
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "segmentation_report.json", reports)
    write_manifest(
        out,
        RunConfig(
            command="score-seg",
            argv=args.argv,
            inputs={"data": args.data, **{f"generations_{i}": g for i, g in enumerate(args.generations)}},
            output_dir=str(out),
            options={"common": args.common, "theta_steps": args.theta_steps},
        ),
    )
    return EXIT_OK


def cmd_score_text(args: argparse.Namespace) -> int:
    out = Path(args.out)
    samples = {s.id: s for s in data_service.parse_dataset(args.data, expected_width=None).samples}
    predictions, references = [], []
    for record in decoding_service.read_generations(args.generations):
        if record.rank != 0 or record.sample_id not in samples:
            continue
        predictions.append(" ".join(metrics_service.strip_special(record.words)))
        references.append(samples[record.sample_id].descriptions)
    provider = None
    if args.embeddings:
        provider = EmbeddingProviderFactory.create("file", path=args.embeddings)
    elif args.hashed_embeddings:
        provider = EmbeddingProviderFactory.create("hashed")
    report = metrics_service.text_report(predictions, references, provider, args.smoothing)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "text_report.json", report.model_dump(mode="json"))
    logger.info(f"BLEU@4={report.bleu['bleu4']:.4f} over {report.n_samples} samples")
    write_manifest(
        out,
        RunConfig(
            command="score-text",
            argv=args.argv,
            inputs={"generations": args.generations, "data": args.data},
            output_dir=str(out),
            options={"smoothing": args.smoothing, "embeddings": args.embeddings},
        ),
    )
    return EXIT_OK


def cmd_export_attn(args: argparse.Namespace) -> int:
    out = Path(args.out)
    annotations = load_annotations(args.data) if args.data else {}
    exported = 0
    for record in decoding_service.read_generations(args.generations):
        if record.rank != 0 or (args.sample and record.sample_id != args.sample):
            continue
        result = decoding_service.from_generation_record(record)
        seg = None
        annotation = annotations.get(record.sample_id)
        if annotation is not None and result.trace.segments is not None:
            alignment = segmentation_service.segment_generation(result, annotation)
            seg = alignment if isinstance(alignment, SegmentationResult) else None
        export_service.export(result, seg, out / record.sample_id, args.factor)
        exported += 1
    if args.sample and not exported:
        raise DatasetError(f"sample {args.sample} not found in {args.generations}")
    write_manifest(
        out,
        RunConfig(
            command="export-attn",
            argv=args.argv,
            inputs={"generations": args.generations, "data": args.data or ""},
            output_dir=str(out),
            options={"sample": args.sample, "factor": args.factor},
        ),
    )
    return EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    out = Path(args.out)
    seed = _seed(args)
    samples, width = _load_training_data(args.train, args.stride)
    base = model_config_from_args(args, width)
    training = training_config_from_args(args, seed)
    val = []
    if args.val:
        val = data_service.parse_dataset(args.val, args.stride, expected_width=width).samples
    vocabulary = build_vocab(samples, args.min_freq)
    configs = training_service.expand_grid(
        base, args.layers, args.widths, args.half_widths, [m == "on" for m in args.masks]
    )
    results = training_service.run_grid(
        data_service.training_pairs(samples),
        val,
        vocabulary,
        configs,
        training,
        data_service.compute_normalization(samples),
    )
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "grid_results.json",
        [
            {
                "label": r.label,
                "model": r.model_config.model_dump(mode="json"),
                "final_loss": r.final_loss,
                "val_bleu4": r.val_bleu4,
            }
            for r in results
        ],
    )
    write_manifest(
        out,
        RunConfig(
            command="grid",
            argv=args.argv,
            inputs={"train": args.train, "val": args.val or ""},
            output_dir=str(out),
            seed=seed,
            model=base,
            training=training,
            options={
                "layers": args.layers,
                "widths": args.widths,
                "half_widths": args.half_widths,
                "masks": args.masks,
            },
        ),
    )
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "synth": cmd_synth,
    "train": cmd_train,
    "generate": cmd_generate,
    "segment": cmd_segment,
    "score-seg": cmd_score_seg,
    "score-text": cmd_score_text,
    "export-attn": cmd_export_attn,
    "grid": cmd_grid,
}


def run(argv: Optional[List[str]] = None) -> int:
    """
    Parse ``argv`` and run one subcommand.

    Returns:
        int: 0 on success; 2 usage, 3 missing file, 4 checkpoint version,
            5 invalid data or config, 6 evaluation error, 1 other failures
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    args.argv = argv
    configure_logging(args.log_level or settings.log_level, settings.log_file)

    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as e:
        logger.error(str(e))
        return EXIT_MISSING_FILE
    except CheckpointVersionError as e:
        logger.error(str(e))
        return EXIT_CHECKPOINT_VERSION
    except (ValidationError, ConfigError, DatasetError) as e:
        logger.error(f"invalid input: {e}")
        return EXIT_INVALID_INPUT
    except (SegmentationError, MetricError, UnsupportedModeError) as e:
        logger.error(f"evaluation failed: {e}")
        return EXIT_EVALUATION
    except MocapTextError as e:
        logger.error(str(e))
        return EXIT_ERROR
