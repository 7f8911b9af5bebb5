"""Synthetic blur generation and paired dataset I/O."""
from .dataset import (load_dataset, load_scene, read_frame, sample_training_window, to_uint8, write_frames,
                      write_paired_sequence)
from .synth import PairedSequence, SharpHighFpsClip, generate_toy_scene, synthesize_blur
from .toy import make_toy_pair, write_toy_benchmark

__all__ = [
    "PairedSequence", "SharpHighFpsClip", "generate_toy_scene", "load_dataset", "load_scene", "make_toy_pair",
    "read_frame", "sample_training_window", "synthesize_blur", "to_uint8", "write_frames",
    "write_paired_sequence", "write_toy_benchmark",
]
