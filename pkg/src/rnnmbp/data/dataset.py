"""On-disk paired datasets and training-window sampling.

Layout::

    root/<split>/<scene>/blur/00000000.png
    root/<split>/<scene>/gt/00000000.png
    root/<split>/<scene>/meta.json        (optional)
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from ..config import DatasetSpec
from ..errors import DatasetError
from .synth import PairedSequence

_FRAME = re.compile(r"^(\d{8})\.png$")


def frame_name(index: int) -> str:
    return f"{index:08d}.png"


def to_uint8(frames: np.ndarray) -> np.ndarray:
    """(N, 3, H, W) floats -> (N, H, W, 3) uint8, clamped to [0, 1] first."""
    return np.round(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(0, 2, 3, 1)


def write_frames(directory, frames: np.ndarray):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(to_uint8(frames)):
        Image.fromarray(img, mode="RGB").save(directory / frame_name(i))


def read_frame(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def write_paired_sequence(scene_dir, pair: PairedSequence, meta: dict | None = None):
    scene_dir = Path(scene_dir)
    write_frames(scene_dir / "blur", pair.blurry)
    write_frames(scene_dir / "gt", pair.sharp)
    if meta is not None:
        (scene_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def _indexed_frames(directory: Path, scene: str, kind: str) -> dict[int, Path]:
    if not directory.is_dir():
        raise DatasetError(f"scene {scene!r}: missing directory {kind}/")
    out = {}
    for p in directory.iterdir():
        m = _FRAME.match(p.name)
        if m:
            out[int(m.group(1))] = p
    return out


def load_scene(scene_dir) -> PairedSequence:
    scene_dir = Path(scene_dir)
    scene = scene_dir.name
    blur = _indexed_frames(scene_dir / "blur", scene, "blur")
    gt = _indexed_frames(scene_dir / "gt", scene, "gt")
    if not blur and not gt:
        raise DatasetError(f"scene {scene!r}: no frames found")
    last = max(max(blur, default=-1), max(gt, default=-1))
    for i in range(last + 1):
        for kind, table in (("blur", blur), ("gt", gt)):
            if i not in table:
                raise DatasetError(f"scene {scene!r}: missing {kind} frame {i} ({kind}/{frame_name(i)})")
    blurry, sharp = [], []
    shape = None
    for i in range(last + 1):
        b, s = read_frame(blur[i]), read_frame(gt[i])
        if b.shape != s.shape:
            raise DatasetError(
                f"scene {scene!r}: frame {i} shape mismatch, blur {b.shape[1:]} vs gt {s.shape[1:]}")
        if shape is None:
            shape = b.shape
        elif b.shape != shape:
            raise DatasetError(f"scene {scene!r}: frame {i} has size {b.shape[1:]}, expected {shape[1:]}")
        blurry.append(b)
        sharp.append(s)
    return PairedSequence(np.stack(blurry), np.stack(sharp), scene)


def load_dataset(spec: DatasetSpec) -> list[PairedSequence]:
    """Load every scene of ``spec.split`` under ``spec.root``, sorted by name."""
    split_dir = spec.root / spec.split
    if not spec.root.is_dir():
        raise DatasetError(f"dataset root {spec.root} does not exist")
    if not split_dir.is_dir():
        raise DatasetError(f"split directory {split_dir} does not exist")
    scenes = sorted(p for p in split_dir.iterdir() if p.is_dir())
    if not scenes:
        raise DatasetError(f"split {spec.split!r} under {spec.root} contains no scenes")
    return [load_scene(p) for p in scenes]


def _augment(frames: np.ndarray, flip: bool, rot: int) -> np.ndarray:
    if flip:
        frames = frames[..., ::-1]
    if rot:
        frames = np.rot90(frames, k=rot, axes=(-2, -1))
    return np.ascontiguousarray(frames)


def sample_training_window(pair: PairedSequence, seq_len: int, patch: int | None,
                           rng: np.random.Generator, augment: bool = False) -> PairedSequence:
    """Crop ``seq_len`` consecutive frames at one random patch location.

    The same temporal offset, spatial crop and (optional) flip/rotation are
    applied to the blurry and sharp frames. ``patch=None`` keeps the full
    frame.
    """
    n, _, h, w = pair.blurry.shape
    if seq_len < 1 or seq_len > n:
        raise DatasetError(f"scene {pair.scene_id!r}: seq_len {seq_len} not in [1, {n}]")
    if patch is None:
        ph, pw = h, w
    elif patch > h or patch > w or patch < 1:
        raise DatasetError(f"scene {pair.scene_id!r}: patch {patch} larger than frame {h}x{w}")
    else:
        ph = pw = patch
    t0 = int(rng.integers(0, n - seq_len + 1))
    y0 = int(rng.integers(0, h - ph + 1))
    x0 = int(rng.integers(0, w - pw + 1))
    sl = (slice(t0, t0 + seq_len), slice(None), slice(y0, y0 + ph), slice(x0, x0 + pw))
    blurry, sharp = pair.blurry[sl], pair.sharp[sl]
    if augment:
        flip = bool(rng.integers(0, 2))
        rot = int(rng.integers(0, 4))
        blurry, sharp = _augment(blurry, flip, rot), _augment(sharp, flip, rot)
    return PairedSequence(np.ascontiguousarray(blurry), np.ascontiguousarray(sharp),
                          f"{pair.scene_id}@t{t0}y{y0}x{x0}")
