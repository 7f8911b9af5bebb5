"""Image-quality metrics and benchmark evaluation."""
from .evaluate import (MetricsReport, SceneMetrics, aggregate_scenes, dataset_baseline, evaluate, format_comparison,
                       format_report, pad_to_multiple, parse_report, restore_sequence, tiled_forward, write_report)
from .quality import PSNR_CAP, psnr, ssim

__all__ = [
    "MetricsReport", "PSNR_CAP", "SceneMetrics", "aggregate_scenes", "dataset_baseline", "evaluate",
    "format_comparison", "format_report", "pad_to_multiple", "parse_report", "psnr", "restore_sequence", "ssim",
    "tiled_forward", "write_report",
]
