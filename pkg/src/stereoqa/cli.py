"""Command-line interface: score, train, eval, gen, spectrogram.

Exit codes: 0 success, 1 operational error (I/O, malformed data), 2 usage
error. Diagnostics go to stderr; machine-readable output (scores, JSON)
goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import checkpoint as ckpt
from .audio_io import load_wav, read_manifest, validate_pair
from .conditioning import build_input_tensor, dual_mono
from .errors import StereoqaError
from .evaluation import evaluate
from .gammatone import FrontendConfig, compute_spectrogram, write_gtsg
from .model import ModelConfig, build_model, transfer_from_mono
from .synthetic import gen_dataset
from .training import TrainConfig, select_planes, train

USAGE_ERROR = 2
OPERATIONAL_ERROR = 1


def _cmd_score(args) -> int:
    model, info = ckpt.load_checkpoint(args.model)
    ref = load_wav(args.ref)
    cod = load_wav(args.cod)
    if ref.channels == 1 or cod.channels == 1:
        if not args.dual_mono:
            print("error: mono input requires --dual-mono", file=sys.stderr)
            return USAGE_ERROR
        ref = dual_mono(ref) if ref.channels == 1 else ref
        cod = dual_mono(cod) if cod.channels == 1 else cod
    ref, cod = validate_pair(ref, cod)
    frontend = info.frontend
    tensor = build_input_tensor(ref, cod, frontend, min_frames=model.min_input_frames)
    raw = model.score(select_planes(tensor.data, model.config.in_channels))
    score = float(min(max(raw * 100.0, 0.0), 100.0))
    if args.json:
        payload = {
            "score": round(score, 4),
            "raw_score": raw,
            "frames": -(-ref.num_samples // frontend.hop_samples),
            "model_version": info.version,
        }
        print(json.dumps(payload, sort_keys=True))
    else:
        print(f"{score:.1f}")
    return 0


def _cmd_train(args) -> int:
    rows = read_manifest(args.manifest)
    config = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    frontend = FrontendConfig()
    stereo_cfg = ModelConfig()
    if args.init_from_mono:
        mono_model, _ = ckpt.load_checkpoint(args.init_from_mono)
        mode = args.transfer_mode.replace("-", "_")
        model = transfer_from_mono(mono_model, stereo_cfg, mode, seed=config.seed)
    else:
        model = build_model(stereo_cfg, seed=config.seed)
    history = train(
        model, rows, config, frontend=frontend,
        progress=lambda line: print(line, file=sys.stderr),
    )
    metadata = {
        "epochs": config.folds * config.epochs_per_fold,
        "folds": config.folds,
        "seed": config.seed,
    }
    ckpt.save_checkpoint(model, args.out, frontend=frontend, metadata=metadata)
    history_path = args.history or str(Path(args.out).with_suffix(".history.csv"))
    history.write_csv(history_path)
    print(f"checkpoint written to {args.out}; history to {history_path}")
    return 0


def _cmd_eval(args) -> int:
    model, info = ckpt.load_checkpoint(args.model)
    rows = read_manifest(args.manifest)
    report = evaluate(
        model,
        rows,
        frontend=info.frontend,
        allow_dual_mono=args.dual_mono,
        threads=args.threads,
    )
    print(report.to_text())
    if args.json_out:
        report.write_json(args.json_out)
    if args.csv_out:
        report.write_rows_csv(args.csv_out)
    return 0


def _cmd_gen(args) -> int:
    manifest = gen_dataset(args.source_dir, args.out_dir, seed=args.seed, threads=args.threads)
    print(f"manifest written to {manifest}")
    return 0


def _cmd_spectrogram(args) -> int:
    excerpt = load_wav(args.wav)
    config = FrontendConfig()
    if excerpt.channels == 2:
        # analyze the mid signal of stereo input
        signal = 0.5 * (excerpt.samples[0] + excerpt.samples[1])
    else:
        signal = excerpt.samples[0]
    gram = compute_spectrogram(signal, config, sample_rate=excerpt.sample_rate)
    write_gtsg(args.out, gram)
    print(f"{gram.num_bands}x{gram.num_frames} spectrogram written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stereoqa",
        description="Full-reference coded stereo audio quality prediction toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score one reference/coded pair")
    p.add_argument("ref", help="reference WAV")
    p.add_argument("cod", help="coded WAV")
    p.add_argument("-m", "--model", required=True, help="model checkpoint")
    p.add_argument("--json", action="store_true", help="emit a single-line JSON result")
    p.add_argument("--dual-mono", action="store_true", help="accept mono inputs as L=R stereo")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("train", help="train a model from a manifest")
    p.add_argument("manifest", help="JSON-lines dataset manifest")
    p.add_argument("--config", help="training configuration JSON")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--history", help="history CSV path (default: alongside checkpoint)")
    p.add_argument("--init-from-mono", help="mono checkpoint for transfer initialization")
    p.add_argument(
        "--transfer-mode",
        default="mono_preserving",
        choices=["mono_preserving", "mono-preserving", "replicate_random_S", "replicate-random-S"],
        help="how to map mono input-layer weights",
    )
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a manifest and report correlations")
    p.add_argument("manifest")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--dual-mono", action="store_true")
    p.add_argument("--json-out", help="write the report as JSON")
    p.add_argument("--csv-out", help="write per-row predictions as CSV")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    p.add_argument("source_dir", help="directory of clean stereo WAVs")
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("spectrogram", help="dump a gammatone spectrogram matrix")
    p.add_argument("wav")
    p.add_argument("out", help="output .gtsg matrix file")
    p.set_defaults(func=_cmd_spectrogram)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StereoqaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OPERATIONAL_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OPERATIONAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
