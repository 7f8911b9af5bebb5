"""Synthetic blur by frame averaging, and procedural sharp test scenes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DatasetError


@dataclass
class SharpHighFpsClip:
    """Sharp frames ``(N, 3, H, W)`` in [0, 1] at a simulated high frame rate."""

    frames: np.ndarray
    fps: float = 240.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 4 or self.frames.shape[1] != 3 or len(self.frames) < 1:
            raise DatasetError(f"clip frames must be shaped (N>=1, 3, H, W), got {self.frames.shape}")

    def __len__(self):
        return len(self.frames)


@dataclass
class PairedSequence:
    """Index-aligned blurry/sharp frames, each ``(N, 3, H, W)`` float32 in [0, 1]."""

    blurry: np.ndarray
    sharp: np.ndarray
    scene_id: str = ""

    def __post_init__(self):
        if self.blurry.shape != self.sharp.shape:
            raise DatasetError(
                f"scene {self.scene_id!r}: blurry shape {self.blurry.shape} != sharp shape {self.sharp.shape}")
        if self.blurry.ndim != 4 or self.blurry.shape[1] != 3 or len(self.blurry) < 1:
            raise DatasetError(f"scene {self.scene_id!r}: frames must be (N>=1, 3, H, W), got {self.blurry.shape}")

    def __len__(self):
        return len(self.blurry)


def synthesize_blur(clip: SharpHighFpsClip, window: int = 7, stride: int | None = None,
                    gamma: float = 2.2, scene_id: str = "") -> PairedSequence:
    """Average ``window`` consecutive sharp frames into one blurry frame.

    Frames are decoded with ``x ** gamma`` before averaging and re-encoded
    with ``x ** (1 / gamma)``; ``gamma=1`` averages the stored values
    directly. The paired sharp frame is the window's centre frame. Windows
    start every ``stride`` frames (default: ``window``, non-overlapping).
    Accumulation is float64 in frame order; results are rounded to float32.
    """
    n = len(clip)
    if window < 1 or window % 2 == 0:
        raise DatasetError(f"blur window must be odd so it has a centre frame, got {window}")
    if window > n:
        raise DatasetError(f"blur window {window} exceeds clip length {n}")
    if gamma <= 0:
        raise DatasetError(f"gamma must be positive, got {gamma}")
    stride = window if stride is None else stride
    if stride < 1:
        raise DatasetError(f"stride must be >= 1, got {stride}")

    frames = clip.frames.astype(np.float64)
    linear = frames if gamma == 1 else np.power(frames, gamma)
    blurry, sharp = [], []
    for start in range(0, n - window + 1, stride):
        acc = np.zeros_like(linear[0])
        for frame in linear[start:start + window]:
            acc += frame
        mean = acc / window
        blurry.append(mean if gamma == 1 else np.power(mean, 1.0 / gamma))
        sharp.append(frames[start + window // 2])
    return PairedSequence(np.stack(blurry).astype(np.float32), np.stack(sharp).astype(np.float32), scene_id)


# --- procedural scenes ---------------------------------------------------------

_SUPERSAMPLE = 4


def _grid(h, w):
    s = _SUPERSAMPLE
    ys = (np.arange(h * s) + 0.5) / s
    xs = (np.arange(w * s) + 0.5) / s
    return np.meshgrid(ys, xs, indexing="ij")


def _box(y, x, cy, cx, hh, hw, angle):
    c, s = np.cos(angle), np.sin(angle)
    u = (x - cx) * c + (y - cy) * s
    v = -(x - cx) * s + (y - cy) * c
    return (np.abs(u) <= hw) & (np.abs(v) <= hh)


def _disc(y, x, cy, cx, r):
    return (y - cy) ** 2 + (x - cx) ** 2 <= r * r


def _random_scene(rng, h, w):
    """Return a background description and a list of shapes."""
    background = {
        "base": rng.uniform(0.15, 0.85, size=3),
        "waves": [(rng.uniform(0.05, 0.4), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi),
                   rng.uniform(-0.25, 0.25, size=3)) for _ in range(3)],
    }
    shapes = []
    area = h * w
    for _ in range(max(6, area // 160)):
        kind = rng.choice(["rect", "disc", "bars"], p=[0.4, 0.3, 0.3])
        shape = {"kind": kind, "cy": rng.uniform(0, h), "cx": rng.uniform(0, w),
                 "color": rng.uniform(0, 1, size=3), "angle": rng.uniform(0, np.pi),
                 "speed": rng.uniform(0.5, 1.5), "turn": rng.uniform(-np.pi / 6, np.pi / 6)}
        scale = min(h, w)
        if kind == "rect":
            shape["hh"], shape["hw"] = rng.uniform(0.03, 0.15, size=2) * scale
        elif kind == "disc":
            shape["r"] = rng.uniform(0.03, 0.12) * scale
        else:
            shape["count"] = int(rng.integers(3, 7))
            shape["hh"] = rng.uniform(0.04, 0.12) * scale
            shape["hw"] = rng.uniform(0.4, 1.2)
            shape["gap"] = shape["hw"] * 2 + rng.uniform(0.8, 2.5)
        shapes.append(shape)
    return background, shapes


def _render(background, shapes, h, w, offset, velocities):
    y, x = _grid(h, w)
    img = np.empty((3,) + y.shape)
    by, bx = y - offset[0], x - offset[1]
    for ch in range(3):
        img[ch] = background["base"][ch]
    for freq, theta, phase, amp in background["waves"]:
        pattern = np.sin(freq * (bx * np.cos(theta) + by * np.sin(theta)) + phase)
        img += amp[:, None, None] * pattern
    for shape, vel in zip(shapes, velocities):
        cy, cx = shape["cy"] + vel[0], shape["cx"] + vel[1]
        if shape["kind"] == "rect":
            mask = _box(y, x, cy, cx, shape["hh"], shape["hw"], shape["angle"])
        elif shape["kind"] == "disc":
            mask = _disc(y, x, cy, cx, shape["r"])
        else:
            mask = np.zeros_like(y, dtype=bool)
            c, s = np.cos(shape["angle"]), np.sin(shape["angle"])
            for k in range(shape["count"]):
                d = (k - (shape["count"] - 1) / 2) * shape["gap"]
                mask |= _box(y, x, cy + d * s, cx + d * c, shape["hh"], shape["hw"], shape["angle"])
        img[:, mask] = shape["color"][:, None]
    img = np.clip(img, 0.0, 1.0)
    s = _SUPERSAMPLE
    return img.reshape(3, h, s, w, s).mean(axis=(2, 4))


def _render_edge(h, w, shift):
    """Vertical dark-to-bright step at column ``w/2 + shift``."""
    y, x = _grid(h, w)
    img = np.where(x >= w / 2 + shift, 0.9, 0.1)
    img = np.broadcast_to(img, (3,) + img.shape)
    s = _SUPERSAMPLE
    return img.reshape(3, h, s, w, s).mean(axis=(2, 4))


def generate_toy_scene(seed: int, num_frames: int, height: int, width: int,
                       motion_px_per_frame: float, layout: str = "random", fps: float = 240.0) -> SharpHighFpsClip:
    """Render a sharp clip of moving anti-aliased shapes over a textured background.

    The background drifts with a global (camera) velocity of
    ``motion_px_per_frame`` along a seed-chosen direction; every shape moves
    with its own speed factor in [0.5, 1.5] and a direction within 30 degrees
    of the global one. ``layout="edge"`` instead renders a single vertical
    step edge translating horizontally, for blur-extent calibration.
    """
    if height % 4 or width % 4 or height < 4 or width < 4:
        raise DatasetError(f"scene size must be divisible by 4, got {height}x{width}")
    if num_frames < 1:
        raise DatasetError(f"num_frames must be >= 1, got {num_frames}")
    frames = np.empty((num_frames, 3, height, width), dtype=np.float32)
    if layout == "edge":
        for t in range(num_frames):
            frames[t] = _render_edge(height, width, motion_px_per_frame * (t - (num_frames - 1) / 2))
        return SharpHighFpsClip(frames, fps)
    if layout != "random":
        raise DatasetError(f"unknown layout {layout!r}")
    rng = np.random.default_rng(seed)
    background, shapes = _random_scene(rng, height, width)
    heading = rng.uniform(0, 2 * np.pi)
    for t in range(num_frames):
        tc = t - (num_frames - 1) / 2
        d = motion_px_per_frame * tc
        offset = (d * np.sin(heading), d * np.cos(heading))
        vels = [(d * sh["speed"] * np.sin(heading + sh["turn"]), d * sh["speed"] * np.cos(heading + sh["turn"]))
                for sh in shapes]
        frames[t] = _render(background, shapes, height, width, offset, vels)
    return SharpHighFpsClip(frames, fps)
