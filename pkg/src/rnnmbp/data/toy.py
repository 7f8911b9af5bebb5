"""Desk-scale benchmark: procedurally rendered scenes blurred by averaging."""
from __future__ import annotations

import json
from pathlib import Path

from .dataset import write_paired_sequence
from .synth import PairedSequence, generate_toy_scene, synthesize_blur


def make_toy_pair(seed: int, frames: int = 8, height: int = 64, width: int = 64,
                  motion: float = 1.0, window: int = 7, gamma: float = 2.2, scene_id: str = "") -> PairedSequence:
    """A blurry/sharp pair with ``frames`` frames from one rendered clip."""
    clip = generate_toy_scene(seed, frames * window, height, width, motion)
    return synthesize_blur(clip, window, window, gamma, scene_id=scene_id or f"scene{seed:04d}")


def write_toy_benchmark(root, train_scenes: int = 20, test_scenes: int = 4, frames: int = 8,
                        height: int = 64, width: int = 64, motion: float = 1.0, window: int = 7,
                        gamma: float = 2.2, seed: int = 0) -> dict:
    """Write train and test splits under ``root`` in the standard layout.

    Scene ``k`` of the run uses render seed ``seed * 100003 + k``; test
    scenes continue the numbering after the training scenes so the splits
    never share a scene.
    """
    root = Path(root)
    summary = {"train": [], "test": []}
    k = 0
    for split, count in (("train", train_scenes), ("test", test_scenes)):
        for i in range(count):
            scene_seed = seed * 100003 + k
            k += 1
            name = f"scene_{i:03d}"
            pair = make_toy_pair(scene_seed, frames, height, width, motion, window, gamma, name)
            meta = {"source": "toy", "render_seed": scene_seed, "fps": 240.0 / window,
                    "exposure_frames": window, "motion_px_per_frame": motion, "gamma": gamma}
            write_paired_sequence(root / split / name, pair, meta)
            summary[split].append(name)
    (root / "benchmark.json").write_text(json.dumps(
        {"frames": frames, "height": height, "width": width, "motion": motion, "window": window,
         "gamma": gamma, "seed": seed, "scenes": summary}, indent=2))
    return summary
