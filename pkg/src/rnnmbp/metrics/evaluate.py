"""Test-set evaluation and report formatting."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..data.dataset import write_frames
from ..data.synth import PairedSequence
from ..model import VideoDeblurNet
from .quality import PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW, psnr, ssim

TILE_OVERLAP = 16
AGGREGATE_ID = "__aggregate__"
METRIC_CONVENTIONS = {
    "psnr": f"per-frame, frames clamped to [0,1], peak 1, zero-MSE cap {PSNR_CAP:g} dB, averaged over frames",
    "ssim": f"gaussian window {SSIM_WINDOW}x{SSIM_WINDOW} sigma {SSIM_SIGMA}, K1=0.01 K2=0.03, "
            "valid positions, RGB channels averaged",
    "aggregate": "frame-count-weighted mean of per-scene means",
}


@dataclass
class SceneMetrics:
    scene_id: str
    psnr_mean: float
    ssim_mean: float
    frame_count: int


@dataclass
class MetricsReport:
    per_scene: list[SceneMetrics]
    aggregate: dict
    params: int
    seconds_per_frame: float
    fingerprint: dict = field(default_factory=dict)
    tiled: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["per_scene"] = [SceneMetrics(**s) for s in d["per_scene"]]
        return cls(**d)


def aggregate_scenes(per_scene: Sequence[SceneMetrics]) -> dict:
    total = sum(s.frame_count for s in per_scene)
    if total == 0:
        raise ValueError("cannot aggregate zero frames")
    return {
        "psnr": sum(s.psnr_mean * s.frame_count for s in per_scene) / total,
        "ssim": sum(s.ssim_mean * s.frame_count for s in per_scene) / total,
    }


# --- inference helpers --------------------------------------------------------------

def pad_to_multiple(seq: torch.Tensor, multiple: int = 4):
    """Reflection-pad ``(B, N, 3, H, W)`` so H and W divide ``multiple``.

    Returns the padded tensor and the original ``(H, W)``.
    """
    h, w = seq.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph == 0 and pw == 0:
        return seq, (h, w)
    b, n = seq.shape[:2]
    flat = seq.flatten(0, 1)
    mode = "reflect" if ph < h and pw < w else "replicate"
    flat = F.pad(flat, (0, pw, 0, ph), mode=mode)
    return flat.unflatten(0, (b, n)), (h, w)


def _ramp(length, overlap, at_start, at_end):
    w = torch.ones(length, dtype=torch.float64)
    ramp = (torch.arange(overlap, dtype=torch.float64) + 1) / (overlap + 1)
    if not at_start:
        w[:overlap] = ramp
    if not at_end:
        w[-overlap:] = torch.minimum(w[-overlap:], ramp.flip(0))
    return w


def _tile_starts(size, tile, overlap):
    if size <= tile:
        return [0]
    starts = list(range(0, size - tile, tile - overlap))
    starts.append(size - tile)
    return sorted(set(starts))


@torch.no_grad()
def tiled_forward(model: VideoDeblurNet, seq: torch.Tensor, tile: int = 256, overlap: int = TILE_OVERLAP):
    """Run ``model`` on overlapping spatial tiles and blend them linearly.

    Tiles overlap by ``overlap`` pixels; inside an overlap each tile's weight
    ramps down towards its border, so the blend is a partition of unity.
    """
    if tile % 4 or tile <= 2 * overlap:
        raise ValueError(f"tile {tile} must be a multiple of 4 larger than twice the overlap {overlap}")
    h, w = seq.shape[-2:]
    out = torch.zeros(seq.shape, dtype=torch.float64)
    weight = torch.zeros((h, w), dtype=torch.float64)
    ys, xs = _tile_starts(h, tile, overlap), _tile_starts(w, tile, overlap)
    for y0 in ys:
        for x0 in xs:
            th, tw = min(tile, h), min(tile, w)
            piece = model(seq[..., y0:y0 + th, x0:x0 + tw])
            wy = _ramp(th, overlap, y0 == 0, y0 + th >= h)
            wx = _ramp(tw, overlap, x0 == 0, x0 + tw >= w)
            wmap = wy[:, None] * wx[None, :]
            out[..., y0:y0 + th, x0:x0 + tw] += piece.double() * wmap
            weight[y0:y0 + th, x0:x0 + tw] += wmap
    return (out / weight).to(seq.dtype)


@torch.no_grad()
def restore_sequence(model: VideoDeblurNet, frames: np.ndarray, max_pixels: Optional[int] = None,
                     tile: int = 256) -> tuple[np.ndarray, bool]:
    """Deblur ``(N, 3, H, W)`` frames; returns unclamped output and whether tiling was used."""
    model.eval()
    dtype = next(model.parameters()).dtype
    seq = torch.from_numpy(np.ascontiguousarray(frames)).to(dtype)[None]
    padded, (h, w) = pad_to_multiple(seq)
    tiled = max_pixels is not None and padded.shape[-1] * padded.shape[-2] > max_pixels
    if not tiled:
        try:
            out = model(padded)
        except RuntimeError as exc:
            if "out of memory" not in str(exc).lower():
                raise
            tiled = True
    if tiled:
        out = tiled_forward(model, padded, tile)
    return out[0, :, :, :h, :w].numpy(), tiled


def config_fingerprint(model: VideoDeblurNet) -> dict:
    return {"model_config": model.config.to_dict(), "metrics": METRIC_CONVENTIONS}


def evaluate(model: VideoDeblurNet, dataset: Sequence[PairedSequence], max_pixels: Optional[int] = None,
             tile: int = 256, dump_dir=None) -> MetricsReport:
    """Deblur every test sequence and score every frame against ground truth.

    Timing excludes the first sequence (warm-up); with a single sequence it
    is run twice and only the second pass is timed. Frames larger than
    ``max_pixels`` (or that run out of memory) are processed tile by tile
    and the report is flagged ``tiled``.
    """
    if not dataset:
        raise ValueError("evaluation dataset is empty")
    torch.set_num_threads(1)
    per_scene = []
    timed_seconds, timed_frames = 0.0, 0
    any_tiled = False
    if len(dataset) == 1:
        restore_sequence(model, dataset[0].blurry, max_pixels, tile)
    for i, pair in enumerate(dataset):
        t0 = time.perf_counter()
        out, tiled = restore_sequence(model, pair.blurry, max_pixels, tile)
        elapsed = time.perf_counter() - t0
        if i > 0 or len(dataset) == 1:
            timed_seconds += elapsed
            timed_frames += len(pair)
        any_tiled |= tiled
        out = np.clip(out, 0.0, 1.0)
        ps = [psnr(o, s) for o, s in zip(out, pair.sharp)]
        ss = [ssim(o, s) for o, s in zip(out, pair.sharp)]
        per_scene.append(SceneMetrics(pair.scene_id, float(np.mean(ps)), float(np.mean(ss)), len(pair)))
        if dump_dir is not None:
            write_frames(Path(dump_dir) / pair.scene_id, out)
    return MetricsReport(
        per_scene=per_scene,
        aggregate=aggregate_scenes(per_scene),
        params=sum(p.numel() for p in model.parameters()),
        seconds_per_frame=timed_seconds / max(timed_frames, 1),
        fingerprint=config_fingerprint(model),
        tiled=any_tiled,
    )


def dataset_baseline(dataset: Sequence[PairedSequence]) -> dict:
    """Aggregate PSNR/SSIM of the blurry inputs themselves."""
    per_scene = [SceneMetrics(p.scene_id, float(np.mean([psnr(b, s) for b, s in zip(p.blurry, p.sharp)])),
                              float(np.mean([ssim(b, s) for b, s in zip(p.blurry, p.sharp)])), len(p))
                 for p in dataset]
    return aggregate_scenes(per_scene)


# --- formatting ------------------------------------------------------------------------

COLUMNS = ("scene_id", "psnr", "ssim", "frames")
_META = ("params", "seconds_per_frame", "tiled", "fingerprint")


def _meta_lines(report):
    return [f"# params={report.params}",
            f"# seconds_per_frame={report.seconds_per_frame!r}",
            f"# tiled={int(report.tiled)}",
            f"# fingerprint={json.dumps(report.fingerprint, sort_keys=True)}"]


def _rows(report):
    rows = [(s.scene_id, repr(s.psnr_mean), repr(s.ssim_mean), str(s.frame_count)) for s in report.per_scene]
    total = sum(s.frame_count for s in report.per_scene)
    rows.append((AGGREGATE_ID, repr(report.aggregate["psnr"]), repr(report.aggregate["ssim"]), str(total)))
    return rows


def format_report(report: MetricsReport, style: str = "text") -> str:
    """Render ``report`` as ``csv``, aligned ``text`` or ``json``.

    Both table styles start with ``# key=value`` metadata lines followed by
    one row per scene and a final aggregate row; :func:`parse_report`
    inverts them exactly.
    """
    if style == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    rows = _rows(report)
    lines = _meta_lines(report)
    if style == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)
        return "\n".join(lines) + "\n" + buf.getvalue()
    if style == "text":
        table = [COLUMNS] + rows
        widths = [max(len(r[i]) for r in table) for i in range(len(COLUMNS))]
        body = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths)))
                .rstrip() for r in table]
        return "\n".join(lines + body) + "\n"
    raise ValueError(f"unknown report style {style!r}")


def parse_report(text: str, style: str = "text") -> MetricsReport:
    if style == "json":
        return MetricsReport.from_dict(json.loads(text))
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
        elif line.strip():
            body.append(line)
    if style == "csv":
        rows = list(csv.reader(body))
    elif style == "text":
        rows = [line.split() for line in body]
    else:
        raise ValueError(f"unknown report style {style!r}")
    if tuple(rows[0]) != COLUMNS:
        raise ValueError(f"unexpected report header {rows[0]}")
    per_scene, aggregate = [], None
    for sid, p, s, n in rows[1:]:
        if sid == AGGREGATE_ID:
            aggregate = {"psnr": float(p), "ssim": float(s)}
        else:
            per_scene.append(SceneMetrics(sid, float(p), float(s), int(n)))
    return MetricsReport(per_scene=per_scene, aggregate=aggregate, params=int(meta["params"]),
                         seconds_per_frame=float(meta["seconds_per_frame"]),
                         fingerprint=json.loads(meta["fingerprint"]), tiled=bool(int(meta["tiled"])))


def format_comparison(reports: dict[str, MetricsReport], style: str = "text") -> str:
    """One row per named report, sorted by aggregate PSNR (best first)."""
    ordered = sorted(reports.items(), key=lambda kv: kv[1].aggregate["psnr"], reverse=True)
    header = ("model", "params", "psnr", "ssim", "seconds_per_frame")
    rows = [(name, str(r.params), f"{r.aggregate['psnr']:.3f}", f"{r.aggregate['ssim']:.4f}",
             f"{r.seconds_per_frame:.4f}") for name, r in ordered]
    if style == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    table = [header] + rows
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
                     .rstrip() for r in table) + "\n"


def write_report(run_dir, report: MetricsReport):
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "report.csv").write_text(format_report(report, "csv"))
    (run_dir / "report.json").write_text(format_report(report, "json"))
