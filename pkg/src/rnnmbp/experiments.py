"""Desk-scale experiments: single-clip overfitting and the variant ablation."""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .config import ModelConfig, TrainConfig
from .data import PairedSequence, make_toy_pair
from .metrics import dataset_baseline, evaluate
from .metrics.quality import psnr
from .train import charbonnier_loss, make_optimizer, set_deterministic, train_step

log = logging.getLogger(__name__)


def overfit_single_clip(steps: int = 2000, channels: int = 16, reduction: int = 4, lr: float = 2e-4,
                        frames: int = 8, size: int = 64, motion: float = 1.0, seed: int = 0,
                        variant: str = "rnn_mbp", max_grad_norm: Optional[float] = None,
                        progress: Optional[Callable[[int, float], None]] = None) -> dict:
    """Train on one synthetic clip and report loss and PSNR before and after.

    The whole clip (all frames, full frame) is the single training sample at
    every step, without augmentation.
    """
    from .model import build_variant

    set_deterministic(True)
    pair = make_toy_pair(seed, frames, size, size, motion)
    cfg = ModelConfig(channels, reduction, variant)
    tcfg = TrainConfig(lr_max=lr, total_steps=steps, batch_size=1, seq_len=frames, patch=size, seed=seed,
                       augment=False, max_grad_norm=max_grad_norm)
    model = build_variant(cfg, seed=seed)
    opt = make_optimizer(model)
    losses = []
    started = time.perf_counter()
    for step in range(steps):
        losses.append(train_step(model, [pair], opt, step, tcfg))
        if progress is not None and (step % 25 == 0 or step == steps - 1):
            progress(step, losses[-1])
    blurry = torch.from_numpy(pair.blurry)[None]
    sharp = torch.from_numpy(pair.sharp)[None]
    model.eval()
    with torch.no_grad():
        out = model(blurry)
        final_loss = charbonnier_loss(out, sharp, tcfg.charbonnier_eps).item()
        initial_loss = charbonnier_loss(blurry, sharp, tcfg.charbonnier_eps).item()
    out = out[0].clamp(0, 1).numpy()
    return {
        "initial_loss": initial_loss,
        "final_loss": final_loss,
        "loss_ratio": final_loss / initial_loss,
        "input_psnr": float(np.mean([psnr(b, s) for b, s in zip(pair.blurry, pair.sharp)])),
        "output_psnr": float(np.mean([psnr(o, s) for o, s in zip(out, pair.sharp)])),
        "losses": losses,
        "seconds": time.perf_counter() - started,
        "config": {"channels": channels, "reduction": reduction, "lr": lr, "steps": steps, "frames": frames,
                   "size": size, "motion": motion, "seed": seed, "variant": variant,
                   "max_grad_norm": max_grad_norm},
    }


def toy_benchmark(train_scenes: int = 20, test_scenes: int = 4, frames: int = 8, size: int = 64,
                  motion: float = 1.0, seed: int = 0) -> tuple[list[PairedSequence], list[PairedSequence]]:
    """In-memory toy benchmark with disjoint train and test scenes."""
    train = [make_toy_pair(seed * 100003 + k, frames, size, size, motion, scene_id=f"train_{k:03d}")
             for k in range(train_scenes)]
    test = [make_toy_pair(seed * 100003 + train_scenes + k, frames, size, size, motion,
                          scene_id=f"test_{k:03d}") for k in range(test_scenes)]
    return train, test


def train_and_evaluate(variant: str, train: Sequence[PairedSequence], test: Sequence[PairedSequence],
                       steps: int, seed: int, channels: int = 16, reduction: int = 4, lr: float = 2e-4,
                       batch_size: int = 4, seq_len: int = 8, patch: int = 64,
                       run_dir: Optional[Path] = None) -> dict:
    """Train one variant with in-memory sampling, then score it on ``test``."""
    from .train import train_loop
    from .model import build_variant

    cfg = ModelConfig(channels, reduction, variant)
    tcfg = TrainConfig(lr_max=lr, total_steps=steps, batch_size=batch_size, seq_len=seq_len, patch=patch,
                       seed=seed, checkpoint_every=max(1, steps // 4))
    started = time.perf_counter()
    if run_dir is not None:
        rec = train_loop(train, cfg, tcfg, run_dir, resume=True, deterministic=True)
        model = build_variant(cfg)
        model.load_state_dict(rec.params)
    else:
        from .train.engine import sample_batch
        set_deterministic(True)
        model = build_variant(cfg, seed=seed)
        opt = make_optimizer(model)
        rng = np.random.default_rng(seed)
        for step in range(steps):
            train_step(model, sample_batch(train, tcfg, rng), opt, step, tcfg)
    report = evaluate(model, test)
    return {"variant": variant, "seed": seed, "steps": steps, "psnr": report.aggregate["psnr"],
            "ssim": report.aggregate["ssim"], "params": report.params,
            "train_seconds": time.perf_counter() - started}


def ablation(steps: int = 20000, seeds: Sequence[int] = (0, 1, 2), channels: int = 16, reduction: int = 4,
             train_scenes: int = 20, test_scenes: int = 4, out_dir: Optional[Path] = None, **kwargs) -> dict:
    """Train every variant for every seed and compare seed-mean test PSNR.

    With ``out_dir`` each run checkpoints under ``out_dir/<variant>_s<seed>``
    and resumes if interrupted; finished runs are cached in
    ``out_dir/results.json``.
    """
    train, test = toy_benchmark(train_scenes, test_scenes)
    cache_path = Path(out_dir) / "results.json" if out_dir else None
    results = json.loads(cache_path.read_text()) if cache_path and cache_path.exists() else []
    done = {(r["variant"], r["seed"], r["steps"]) for r in results}
    for seed in seeds:
        for variant in ("baseline", "baseline_mbp", "rnn_mbp"):
            if (variant, seed, steps) in done:
                continue
            run_dir = Path(out_dir) / f"{variant}_s{seed}" if out_dir else None
            res = train_and_evaluate(variant, train, test, steps, seed, channels, reduction, run_dir=run_dir,
                                     **kwargs)
            log.info("%s", res)
            results.append(res)
            if cache_path:
                cache_path.write_text(json.dumps(results, indent=2))
    means = {}
    for variant in ("baseline", "baseline_mbp", "rnn_mbp"):
        vals = [r["psnr"] for r in results if r["variant"] == variant and r["steps"] == steps and r["seed"] in seeds]
        means[variant] = float(np.mean(vals))
    return {"runs": results, "mean_psnr": means, "input_psnr": dataset_baseline(test)["psnr"],
            "margin_mbp_over_baseline": means["baseline_mbp"] - means["baseline"],
            "margin_full_over_mbp": means["rnn_mbp"] - means["baseline_mbp"]}


def main(argv=None) -> int:
    """``python3 -m rnnmbp.experiments {overfit,ablation}``; prints one JSON record."""
    import argparse

    parser = argparse.ArgumentParser(prog="python3 -m rnnmbp.experiments", description=main.__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("overfit", help="train on one synthetic clip and report loss and PSNR")
    p.add_argument("--steps", type=int, default=2000, help="optimizer steps (default 2000)")
    p.add_argument("--channels", type=int, default=16, help="base channel count (default 16)")
    p.add_argument("--reduction", type=int, default=4, help="CAB reduction (default 4)")
    p.add_argument("--lr", type=float, default=2e-4, help="initial learning rate (default 2e-4)")
    p.add_argument("--max-grad-norm", type=float, help="clip gradients to this global norm")
    p.add_argument("--variant", default="rnn_mbp", help="model variant (default rnn_mbp)")
    p.add_argument("--seed", type=int, default=0, help="clip and init seed (default 0)")
    p = sub.add_parser("ablation", help="train all variants on the toy benchmark and compare test PSNR")
    p.add_argument("--steps", type=int, default=20000, help="optimizer steps per run (default 20000)")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2], help="seeds (default 0 1 2)")
    p.add_argument("--out", required=True, help="directory for resumable runs and results.json")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    if args.command == "overfit":
        res = overfit_single_clip(args.steps, args.channels, args.reduction, args.lr, variant=args.variant,
                                  seed=args.seed, max_grad_norm=args.max_grad_norm,
                                  progress=lambda s, l: log.info("step %d loss %.5f", s, l))
        res.pop("losses")
    else:
        res = ablation(args.steps, tuple(args.seeds), out_dir=Path(args.out))
    print(json.dumps(res, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
