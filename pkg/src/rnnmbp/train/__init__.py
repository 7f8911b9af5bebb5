"""Training engine."""
from .engine import (CheckpointRecord, charbonnier_loss, cosine_lr, latest_checkpoint, load_checkpoint,
                     make_optimizer, sample_batch, save_checkpoint, set_deterministic, train_loop, train_step)

__all__ = [
    "CheckpointRecord", "charbonnier_loss", "cosine_lr", "latest_checkpoint", "load_checkpoint", "make_optimizer",
    "sample_batch", "save_checkpoint", "set_deterministic", "train_loop", "train_step",
]
