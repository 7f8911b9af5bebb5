"""Command-line entry point: ``rnnmbp {synthesize,train,eval,infer,params}``.

Exit status is 0 on success, 2 for usage, configuration or input-validation
errors and 1 for failures while running.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import VARIANTS, DatasetSpec, ModelConfig, deterministic_requested, load_run_config
from .errors import ConfigurationError, ContractViolation, DatasetError, InputShapeError

log = logging.getLogger("rnnmbp")

PUBLISHED_PARAMS = {"baseline": 10.24e6, "baseline_mbp": 10.35e6, "rnn_mbp": 16.37e6}


class UsageError(Exception):
    pass


def _ints(text):
    return tuple(int(p) for p in text.replace(",", " ").split())


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--variant", choices=VARIANTS, help="network variant (default rnn_mbp)")
    g.add_argument("--channels", type=int, dest="base_channels", help="base channel count C (default 64)")
    g.add_argument("--reduction", type=int, dest="cab_reduction", help="CAB gate reduction r (default 16)")
    g.add_argument("--level-multipliers", type=_ints, help="widths of the three scale levels as multiples of C, "
                                                           "e.g. '1 2 3' (default)")
    g.add_argument("--resample-mode", choices=("strided_conv", "bilinear"), help="downsampling operator")
    g.add_argument("--eq9-literal", action="store_true", default=None,
                   help="pair forward-encoder with backward-decoder states in the half-scale fusion term")


def _model_overrides(args):
    keys = ("variant", "base_channels", "cab_reduction", "level_multipliers", "resample_mode", "eq9_literal")
    return {k: getattr(args, k, None) for k in keys}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rnnmbp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="write a blurry/sharp dataset by frame averaging")
    p.add_argument("--out", required=True, help="output dataset root")
    p.add_argument("--source", help="root of sharp high-frame-rate clips (<split>/<scene>/*.png); "
                                    "when omitted, procedural toy scenes are rendered")
    p.add_argument("--train-scenes", type=int, default=20, help="toy scenes in the train split (default 20)")
    p.add_argument("--test-scenes", type=int, default=4, help="toy scenes in the test split (default 4)")
    p.add_argument("--frames", type=int, default=8, help="blurry frames per toy scene (default 8)")
    p.add_argument("--height", type=int, default=64, help="toy frame height (default 64)")
    p.add_argument("--width", type=int, default=64, help="toy frame width (default 64)")
    p.add_argument("--motion", type=float, default=1.0, help="toy camera motion in px per sharp frame (default 1)")
    p.add_argument("--window", type=int, default=7, help="sharp frames averaged per blurry frame, odd (default 7)")
    p.add_argument("--stride", type=int, help="window start spacing (default: window)")
    p.add_argument("--gamma", type=float, default=2.2, help="decode/encode gamma, 1 disables (default 2.2)")
    p.add_argument("--seed", type=int, default=0, help="toy render seed (default 0)")
    p.add_argument("--force", action="store_true", help="write into a non-empty output directory")

    p = sub.add_parser("train", help="train a model variant")
    p.add_argument("--config", help="INI config file with [model] [train] [data] [run] sections")
    p.add_argument("--data", help="dataset root (uses its train split)")
    p.add_argument("--run-dir", help="directory for checkpoints and the training log")
    _add_model_flags(p)
    g = p.add_argument_group("training")
    g.add_argument("--total-steps", type=int, help="optimizer steps; 0 writes only the init checkpoint (default 500000)")
    g.add_argument("--batch-size", type=int, help="training windows per step (default 4)")
    g.add_argument("--seq-len", type=int, help="frames per training window (default 8)")
    g.add_argument("--patch", type=int, help="square crop size in pixels (default 256)")
    g.add_argument("--lr", type=float, dest="lr_max", help="initial learning rate (default 2e-4)")
    g.add_argument("--lr-min", type=float, help="final learning rate (default 1e-7)")
    g.add_argument("--seed", type=int, help="seed for initialization and sampling (default 0)")
    g.add_argument("--checkpoint-every", type=int, help="steps between checkpoints (default 5000)")
    g.add_argument("--max-grad-norm", type=float, help="clip gradients to this global norm")
    g.add_argument("--no-augment", dest="augment", action="store_false", default=None,
                   help="disable flip/rotation augmentation")
    p.add_argument("--resume", action="store_true", help="continue from the run's latest checkpoint")
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="single-threaded bit-reproducible mode (also MBP_DETERMINISTIC=1)")
    p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True, help="model or training checkpoint file")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--split", default="test", choices=("train", "test"), help="split to evaluate (default test)")
    p.add_argument("--out", required=True, help="run directory for report.csv and report.json")
    p.add_argument("--dump-frames", action="store_true", help="also write deblurred frames to <out>/output/")
    p.add_argument("--max-pixels", type=int, help="tile frames larger than this many pixels")
    p.add_argument("--tile", type=int, default=256, help="tile size for tiled inference (default 256)")

    p = sub.add_parser("infer", help="deblur a directory of frames")
    p.add_argument("--checkpoint", required=True, help="model or training checkpoint file")
    p.add_argument("--input", required=True, help="directory of frames (*.png, processed in name order)")
    p.add_argument("--output", required=True, help="directory for deblurred frames")
    p.add_argument("--max-pixels", type=int, help="tile frames larger than this many pixels")
    p.add_argument("--tile", type=int, default=256, help="tile size for tiled inference (default 256)")

    p = sub.add_parser("params", help="count learnable parameters of a configuration")
    p.add_argument("--config", help="INI config file")
    _add_model_flags(p)
    p.add_argument("--json", action="store_true", help="print a JSON record instead of text")
    p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    return parser


# --- subcommands ----------------------------------------------------------------------

def cmd_synthesize(args) -> int:
    from .data import synthesize_blur, write_paired_sequence, write_toy_benchmark
    from .data.dataset import read_frame
    from .data.synth import SharpHighFpsClip

    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"output directory {out} is not empty; pass --force to write into it")
    if args.window < 1 or args.window % 2 == 0:
        raise UsageError(f"--window must be a positive odd number, got {args.window}")
    if args.gamma <= 0:
        raise UsageError(f"--gamma must be positive, got {args.gamma}")
    out.mkdir(parents=True, exist_ok=True)
    if args.source is None:
        if args.height % 4 or args.width % 4:
            raise UsageError("--height and --width must be multiples of 4")
        summary = write_toy_benchmark(out, args.train_scenes, args.test_scenes, args.frames, args.height,
                                      args.width, args.motion, args.window, args.gamma, args.seed)
        print(json.dumps({"root": str(out), "train": len(summary["train"]), "test": len(summary["test"])}))
        return 0
    src = Path(args.source)
    if not src.is_dir():
        raise UsageError(f"source directory {src} does not exist")
    count = 0
    for split_dir in sorted(p for p in src.iterdir() if p.is_dir()):
        for scene in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            files = sorted(scene.glob("*.png"))
            if len(files) < args.window:
                raise DatasetError(f"scene {scene} has {len(files)} frames, fewer than the window {args.window}")
            clip = SharpHighFpsClip(np.stack([read_frame(f) for f in files]))
            pair = synthesize_blur(clip, args.window, args.stride, args.gamma, scene.name)
            write_paired_sequence(out / split_dir.name / scene.name, pair,
                                  {"source": str(scene), "exposure_frames": args.window, "gamma": args.gamma,
                                   "stride": args.stride or args.window})
            count += 1
    print(json.dumps({"root": str(out), "scenes": count}))
    return 0


def _resolve_run_config(args):
    train_keys = ("total_steps", "batch_size", "seq_len", "patch", "lr_max", "lr_min", "seed",
                  "checkpoint_every", "max_grad_norm", "augment")
    overrides = {
        "model": _model_overrides(args),
        "train": {k: getattr(args, k, None) for k in train_keys},
        "data": {"root": getattr(args, "data", None)},
        "run": {"dir": getattr(args, "run_dir", None), "deterministic": getattr(args, "deterministic", None)},
    }
    return load_run_config(args.config, overrides)


def cmd_train(args) -> int:
    from .data import load_dataset
    from .train import train_loop

    run = _resolve_run_config(args)
    if args.dump_config:
        sys.stdout.write(run.to_ini())
        return 0
    missing = [name for name, val in (("data root (--data or [data] root)", run.data_root),
                                      ("run directory (--run-dir or [run] dir)", run.run_dir)) if not val]
    if missing:
        raise UsageError("missing required settings: " + ", ".join(missing))
    dataset = load_dataset(DatasetSpec(run.data_root, "train", run.train.patch, run.train.seq_len))
    run_dir = Path(run.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(run.to_ini())
    rec = train_loop(dataset, run.model, run.train, run_dir, resume=args.resume, deterministic=run.deterministic)
    print(json.dumps({"step": rec.step, "checkpoint": str(rec.path), "last_loss": rec.loss_stats.get("last")}))
    return 0


def _load_checkpoint_model(path):
    from .model import load_model

    path = Path(path)
    if not path.is_file():
        raise UsageError(f"checkpoint {path} not found")
    try:
        return load_model(path)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"cannot read checkpoint {path}: {exc}") from exc


def cmd_eval(args) -> int:
    from .data import load_dataset
    from .metrics import evaluate, format_report, write_report

    model = _load_checkpoint_model(args.checkpoint)
    dataset = load_dataset(DatasetSpec(args.data, args.split))
    out = Path(args.out)
    report = evaluate(model, dataset, args.max_pixels, args.tile,
                      dump_dir=out / "output" if args.dump_frames else None)
    write_report(out, report)
    sys.stdout.write(format_report(report, "text"))
    return 0


def cmd_infer(args) -> int:
    from PIL import Image

    from .data import to_uint8
    from .data.dataset import read_frame
    from .metrics import restore_sequence

    model = _load_checkpoint_model(args.checkpoint)
    src = Path(args.input)
    if not src.is_dir():
        raise UsageError(f"input directory {src} not found")
    files = sorted(src.glob("*.png"))
    if not files:
        raise UsageError(f"no .png frames in {src}")
    frames = [read_frame(f) for f in files]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DatasetError(f"frames in {src} have differing sizes: {sorted(shapes)}")
    out, tiled = restore_sequence(model, np.stack(frames), args.max_pixels, args.tile)
    dst = Path(args.output)
    dst.mkdir(parents=True, exist_ok=True)
    for f, img in zip(files, to_uint8(out)):
        Image.fromarray(img, mode="RGB").save(dst / f.name)
    print(json.dumps({"frames": len(files), "output": str(dst), "tiled": tiled}))
    return 0


def cmd_params(args) -> int:
    from .model import count_parameters

    run = load_run_config(args.config, {"model": _model_overrides(args)})
    if args.dump_config:
        sys.stdout.write(run.to_ini())
        return 0
    cfg = run.model
    n = count_parameters(cfg)
    published = PUBLISHED_PARAMS[cfg.variant]
    record = {"variant": cfg.variant, "params": n, "published": int(published),
              "relative_deviation": (n - published) / published, "config": cfg.to_dict()}
    if args.json:
        print(json.dumps(record))
    else:
        print(f"{cfg.variant}: {n} parameters ({n / 1e6:.2f}M); published {published / 1e6:.2f}M, "
              f"deviation {100 * record['relative_deviation']:+.1f}%")
    return 0


COMMANDS = {"synthesize": cmd_synthesize, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer,
            "params": cmd_params}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if deterministic_requested():
        from .train import set_deterministic
        set_deterministic(True)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError, DatasetError, InputShapeError, ContractViolation) as exc:
        print(f"rnnmbp {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"rnnmbp {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
