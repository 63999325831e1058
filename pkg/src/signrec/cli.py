"""Command-line front end for the whole pipeline.

Subcommands: synth, train, eval, segment, features, embed.  Settings come
from a flat key=value config file which any flag overrides; all randomness
flows from one --seed through named sub-streams.  Exit codes: 0 success,
2 usage/config error, 3 missing modality, 4 model/data mismatch,
1 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .data import Dataset, load_dataset, read_frames_json, save_dataset, split_cross_subject
from .evaluate import (
    ExperimentResult,
    VocabularyMismatchError,
    adaptation_curve,
    cross_subject_experiment,
    evaluate,
    export_embeddings,
    predictions_report,
    write_reports,
)
from .models import (
    ARCHITECTURES,
    CnnConfig,
    Hyperparams,
    TrainedModel,
    default_learning_rate,
    train,
    write_features_csv,
)
from .preprocess import MissingHandDataError, SegmentParams, segment_stream
from .synthetic import SynthConfig, generate_synthetic


class UsageError(ValueError):
    """Bad flags, bad config, unreadable inputs: exit code 2."""


def _canon_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def parse_config_file(path) -> Dict[str, str]:
    """Flat key=value lines; blank lines and # comments ignored."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    out: Dict[str, str] = {}
    for ln, line in enumerate(p.read_text().splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise UsageError(f"{p}:{ln}: expected key=value, got {s!r}")
        key, value = s.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {s!r}")


def _parse_int_pair(s: str):
    parts = [p for p in s.replace(":", ",").split(",") if p]
    if len(parts) != 2:
        raise UsageError(f"expected two comma-separated values, got {s!r}")
    return int(parts[0]), int(parts[1])


def _parse_float_pair(s: str):
    parts = [p for p in s.split(",") if p]
    if len(parts) != 2:
        raise UsageError(f"expected two comma-separated values, got {s!r}")
    return float(parts[0]), float(parts[1])


def _parse_class_pairs(s: str):
    """Class pairs like "0:1,2:3" -> ((0, 1), (2, 3)); empty string allowed."""
    s = s.strip()
    if not s:
        return ()
    pairs = []
    for item in s.split(","):
        bits = item.split(":")
        if len(bits) != 2:
            raise UsageError(f"expected a:b class pairs, got {item!r}")
        pairs.append((int(bits[0]), int(bits[1])))
    return tuple(pairs)


_SYNTH_PARSERS = {
    "num_classes": int,
    "num_subjects": int,
    "samples_per_class_per_subject": int,
    "frame_length_range": _parse_int_pair,
    "noise_sigma": float,
    "scale_range": _parse_float_pair,
    "offset_range": float,
    "speed_range": _parse_float_pair,
    "twin_class_pairs": _parse_class_pairs,
    "relation_class_pairs": _parse_class_pairs,
    "relation_offset": float,
    "with_hand_volumes": _parse_bool,
    "hand_frames": int,
    "hand_size": int,
    "fps": float,
    "rng_seed": int,
}

_HP_PARSERS = {
    "learning_rate": float,
    "epochs": int,
    "batch_size": int,
    "state_size": int,
    "num_layers": int,
    "dropout_keep": float,
    "l2_beta": float,
    "grad_clip": float,
    "frames": int,
    "seed": int,
    "early_stop_accuracy": float,
    # CNN input geometry rides in the same config file.
    "hand_frames": int,
    "patch": int,
    "patch_out": int,
}


def _load_config(args, parsers: dict) -> dict:
    raw = parse_config_file(args.config) if args.config else {}
    out = {}
    for key, value in raw.items():
        if key not in parsers:
            raise UsageError(f"unknown config key {key!r}")
        try:
            out[key] = parsers[key](value)
        except (ValueError, TypeError) as e:
            raise UsageError(f"config key {key!r}: {e}")
    return out


def _pick(flag_value, cfg: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if key in cfg:
        return cfg[key]
    return default


def _build_hp(args, cfg: dict, arch: str) -> Hyperparams:
    return Hyperparams(
        learning_rate=_pick(args.lr, cfg, "learning_rate", default_learning_rate(arch)),
        epochs=_pick(args.epochs, cfg, "epochs", 250),
        batch_size=_pick(args.batch_size, cfg, "batch_size", 64),
        state_size=_pick(args.state_size, cfg, "state_size", 50),
        num_layers=_pick(None, cfg, "num_layers", 2),
        dropout_keep=_pick(None, cfg, "dropout_keep", 0.5),
        l2_beta=_pick(None, cfg, "l2_beta", 0.008),
        grad_clip=_pick(None, cfg, "grad_clip", 0.0),
        frames=_pick(args.frames, cfg, "frames", 20),
        seed=_pick(args.seed, cfg, "seed", 0),
        early_stop_accuracy=_pick(None, cfg, "early_stop_accuracy", None),
    )


def _build_cnn_config(args, cfg: dict) -> CnnConfig:
    return CnnConfig(
        in_frames=_pick(args.hand_frames, cfg, "hand_frames", 15),
        in_size=_pick(args.patch_out, cfg, "patch_out", 32),
    )


def _load_data(path) -> Dataset:
    if path is None:
        raise UsageError("--data is required")
    try:
        return load_dataset(path)
    except (FileNotFoundError, ValueError) as e:
        raise UsageError(str(e))


def _log(args):
    return (lambda msg: print(msg, flush=True)) if args.verbose else None


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _load_config(args, _SYNTH_PARSERS)
    if args.seed is not None:
        cfg["rng_seed"] = args.seed
    if args.out is None:
        raise UsageError("--out directory is required")
    try:
        config = SynthConfig(**cfg)
        dataset = generate_synthetic(config)
    except (ValueError, TypeError) as e:
        raise UsageError(f"bad synthesis config: {e}")
    save_dataset(dataset, args.out)
    print(
        f"wrote {len(dataset.samples)} samples "
        f"({len(dataset.subjects)} subjects x {dataset.num_classes} classes) to {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args, _HP_PARSERS)
    dataset = _load_data(args.data)
    arch = args.model
    hp = _build_hp(args, cfg, arch)
    cnn_config = _build_cnn_config(args, cfg) if arch in ("cnn3d", "max-fusion") else None
    model = train(arch, dataset, hp, cnn_config, log=_log(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"{arch}.sgnm"
    model.save(ckpt)
    (out / "history.json").write_text(_canon_json(model.history))
    final = model.history[-1] if model.history else {}
    print(
        f"saved {ckpt} (final train accuracy "
        f"{final.get('train_accuracy', float('nan')):.4f})"
    )
    return 0


def _eval_single_split(args, dataset: Dataset, hp_seed: int) -> ExperimentResult:
    if not args.checkpoint:
        raise UsageError("single-split evaluation needs --checkpoint (one, or two to fuse)")
    if len(args.checkpoint) > 2:
        raise UsageError("at most two checkpoints (skeleton + hands) can be fused")
    models = [TrainedModel.load(p) for p in args.checkpoint]
    if args.model and any(m.arch != args.model for m in models):
        raise UsageError(
            f"checkpoint architecture does not match --model {args.model}"
        )
    if args.subject:
        if args.subject not in dataset.subjects:
            raise UsageError(f"unknown subject {args.subject!r}")
        _, test_d = split_cross_subject(dataset, args.subject)
    else:
        test_d = dataset
    if not test_d.samples:
        raise UsageError("no samples to evaluate")
    if len(models) == 1:
        report = evaluate(models[0], test_d)
        model_name = models[0].arch
    else:
        for m in models:
            if list(m.vocabulary) != list(test_d.vocabulary):
                raise VocabularyMismatchError(
                    "checkpoint vocabulary does not match the dataset"
                )
        probs = [m.predict_probs(m.prepare(test_d.samples)) for m in models]
        fused = np.maximum(probs[0], probs[1])
        report = predictions_report(
            test_d, fused.argmax(axis=1), len(test_d.vocabulary),
            args.subject or "all",
        )
        model_name = "+".join(m.arch for m in models) + " (max-fused)"
    return ExperimentResult.from_reports(
        "single-split", model_name, models[0].hyperparams.to_dict(), [report], hp_seed
    )


def cmd_eval(args) -> int:
    cfg = _load_config(args, _HP_PARSERS)
    dataset = _load_data(args.data)
    if args.out is None:
        raise UsageError("--out directory is required")
    out = Path(args.out)
    seed = _pick(args.seed, cfg, "seed", 0)

    if args.protocol == "cross-subject":
        if not args.model:
            raise UsageError("cross-subject evaluation trains per fold; --model is required")
        hp = _build_hp(args, cfg, args.model)
        cnn_config = (
            _build_cnn_config(args, cfg) if args.model in ("cnn3d", "max-fusion") else None
        )
        result = cross_subject_experiment(
            dataset, args.model, hp, cnn_config, jobs=args.jobs or 1,
            out_dir=out, log=_log(args),
        )
        write_reports(result, out, class_names=dataset.vocabulary)
        print(
            f"cross-subject {args.model}: mean accuracy {result.mean_accuracy:.4f} "
            f"+- {result.std_accuracy:.4f} over {len(result.reports)} subjects"
        )
        return 0

    if args.protocol == "adaptation":
        if not args.model or not args.subject:
            raise UsageError("adaptation evaluation needs --model and --subject")
        fractions = [float(f) for f in (args.fractions or "0,0.1,0.5").split(",")]
        hp = _build_hp(args, cfg, args.model)
        cnn_config = (
            _build_cnn_config(args, cfg) if args.model in ("cnn3d", "max-fusion") else None
        )
        curve = adaptation_curve(
            dataset, args.subject, fractions, args.model, hp, cnn_config, log=_log(args)
        )
        out.mkdir(parents=True, exist_ok=True)
        doc = {
            "experiment": "adaptation",
            "model": args.model,
            "subject": args.subject,
            "hyperparams": hp.to_dict(),
            "curve": [{"fraction": f, "accuracy": a} for f, a in curve],
            "seed": hp.seed,
        }
        (out / "adaptation.json").write_text(_canon_json(doc))
        for fraction, acc in curve:
            print(f"fraction {fraction:.2f}: accuracy {acc:.4f}")
        return 0

    if args.protocol == "single-split":
        result = _eval_single_split(args, dataset, seed)
        write_reports(result, out, class_names=dataset.vocabulary)
        print(f"accuracy {result.reports[0].accuracy:.4f} on {result.reports[0].n_samples} samples")
        return 0

    raise UsageError(f"unknown protocol {args.protocol!r}")


def cmd_segment(args) -> int:
    if args.data is None:
        raise UsageError("--data stream file is required")
    try:
        frames = read_frames_json(args.data)
    except (OSError, ValueError, KeyError) as e:
        raise UsageError(f"cannot read stream {args.data}: {e}")
    params = SegmentParams(
        velocity_threshold=args.velocity_threshold,
        smoothing_window=args.smoothing_window,
        min_segment_len=args.min_segment_len,
        merge_gap=args.merge_gap,
    )
    try:
        segments = segment_stream(frames, params)
    except ValueError as e:
        raise UsageError(str(e))
    doc = [{"start": a, "end": b} for a, b in segments]
    text = _canon_json(doc)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_features(args) -> int:
    dataset = _load_data(args.data)
    if args.out is None:
        raise UsageError("--out CSV path is required")
    rows = write_features_csv(dataset, args.out)
    print(f"wrote {rows} feature rows to {args.out}")
    return 0


def cmd_embed(args) -> int:
    dataset = _load_data(args.data)
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    if args.out is None:
        raise UsageError("--out CSV path is required")
    model = TrainedModel.load(args.checkpoint[0])
    if model.arch not in ("ai-lstm", "spatial-ai-lstm"):
        raise UsageError(f"embeddings are defined for the LSTM models, not {model.arch}")
    emb, _, _ = export_embeddings(model, dataset, args.out)
    print(f"wrote {emb.shape[0]} x {emb.shape[1]} embeddings to {args.out}")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _add_shared(sp, *, data=True, out=True, model=False):
    if data:
        sp.add_argument("--data", help="dataset root (or stream file for segment)")
    if out:
        sp.add_argument("--out", help="output directory or file")
    sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    sp.add_argument("--config", help="flat key=value config file; flags override it")
    sp.add_argument("-v", "--verbose", action="store_true", help="print progress")
    if model:
        sp.add_argument("--model", choices=ARCHITECTURES, help="architecture name")
        sp.add_argument("--epochs", type=int, default=None, help="training epochs (default 250)")
        sp.add_argument("--lr", type=float, default=None,
                        help="learning rate (default 5e-5 LSTM, 1e-5 CNN/fusion)")
        sp.add_argument("--batch-size", type=int, default=None, help="batch size (default 64)")
        sp.add_argument("--state-size", type=int, default=None, help="LSTM state size (default 50)")
        sp.add_argument("--frames", type=int, default=None,
                        help="resampled skeleton frames per sample (default 20)")
        sp.add_argument("--hand-frames", type=int, default=None,
                        help="frames per hand volume (default 15)")
        sp.add_argument("--patch", type=int, default=None,
                        help="hand crop size in source pixels (default 100)")
        sp.add_argument("--patch-out", type=int, default=None,
                        help="hand volume side after resize (default 32)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="signrec",
        description="Sign gesture recognition pipeline: synthesize, train, evaluate, export.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic multi-subject dataset")
    _add_shared(sp, data=False)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train one model and write a checkpoint")
    _add_shared(sp, model=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="run an evaluation protocol and write reports")
    _add_shared(sp, model=True)
    sp.add_argument("--protocol", choices=("cross-subject", "adaptation", "single-split"),
                    default="cross-subject", help="evaluation protocol (default cross-subject)")
    sp.add_argument("--checkpoint", nargs="+", default=None,
                    help="checkpoint path(s); two fuse via element-wise max")
    sp.add_argument("--subject", help="held-out subject (adaptation / single-split)")
    sp.add_argument("--fractions", help="adaptation fractions, e.g. 0,0.1,0.5")
    sp.add_argument("--jobs", type=int, default=1,
                    help="parallel fold workers (default 1, bit-reproducible)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("segment", help="split a skeleton stream into motion segments")
    _add_shared(sp)
    sp.add_argument("--velocity-threshold", type=float, default=0.01,
                    help="smoothed wrist speed threshold, m/frame (default 0.01)")
    sp.add_argument("--smoothing-window", type=int, default=5,
                    help="moving-average width in frames, odd (default 5)")
    sp.add_argument("--min-segment-len", type=int, default=10,
                    help="drop segments shorter than this (default 10)")
    sp.add_argument("--merge-gap", type=int, default=8,
                    help="merge segments closer than this (default 8)")
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("features", help="export the 126-statistic feature CSV")
    _add_shared(sp)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("embed", help="export LSTM embeddings for visualization")
    _add_shared(sp)
    sp.add_argument("--checkpoint", nargs=1, help="trained LSTM-model checkpoint")
    sp.set_defaults(func=cmd_embed)

    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except MissingHandDataError as e:
        print(f"error: {e}", file=sys.stderr)
        print(
            "hint: synthesize data with hand volumes (with_hand_volumes=true) "
            "or pick a skeleton-only model (ai-lstm, spatial-ai-lstm, baseline)",
            file=sys.stderr,
        )
        return 3
    except VocabularyMismatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except Exception as e:  # anything else is an internal failure
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
