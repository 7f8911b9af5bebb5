"""Charbonnier-loss training with Adam, cosine learning rate and resumable checkpoints."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from ..config import ModelConfig, TrainConfig
from ..data.dataset import sample_training_window
from ..data.synth import PairedSequence
from ..errors import ContractViolation, TrainingError
from ..model import VideoDeblurNet, build_variant
from ..model.store import load_store, save_store

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def charbonnier_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = 1e-3) -> torch.Tensor:
    """Mean of sqrt((pred - target)^2 + eps^2) over all elements.

    Evaluated as ``eps + mean(d^2 / (sqrt(d^2 + eps^2) + eps))``, which is the
    same quantity but returns exactly ``eps`` when ``pred == target``.
    """
    if pred.shape != target.shape:
        raise ContractViolation(f"prediction shape {tuple(pred.shape)} != target shape {tuple(target.shape)}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    sq = (pred - target) ** 2
    return eps + (sq / (torch.sqrt(sq + eps * eps) + eps)).mean()


def cosine_lr(step: int, config: TrainConfig) -> float:
    """Single cosine annealing cycle from ``lr_max`` at step 0 to ``lr_min`` at ``total_steps``."""
    if step < 0 or step > config.total_steps:
        raise ValueError(f"step {step} outside [0, {config.total_steps}]")
    if config.total_steps == 0:
        return config.lr_max
    cos = math.cos(math.pi * step / config.total_steps)
    return config.lr_min + 0.5 * (config.lr_max - config.lr_min) * (1.0 + cos)


def set_deterministic(enabled: bool = True):
    if enabled:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def make_optimizer(model: torch.nn.Module, lr: float = 0.0) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def collate(batch: Sequence[PairedSequence], dtype=torch.float32):
    blurry = torch.from_numpy(np.stack([p.blurry for p in batch])).to(dtype)
    sharp = torch.from_numpy(np.stack([p.sharp for p in batch])).to(dtype)
    return blurry, sharp


def train_step(model: VideoDeblurNet, batch: Sequence[PairedSequence], optimizer: torch.optim.Adam,
               step: int, config: TrainConfig) -> float:
    """One Adam update on the Charbonnier loss over every frame of every window.

    The learning rate comes from :func:`cosine_lr` at ``step``. Returns the
    loss measured before the update.
    """
    dtype = next(model.parameters()).dtype
    blurry, sharp = collate(batch, dtype)
    lr = cosine_lr(step, config)
    for group in optimizer.param_groups:
        group["lr"] = lr
    model.train()
    optimizer.zero_grad(set_to_none=True)
    loss = charbonnier_loss(model(blurry), sharp, config.charbonnier_eps)
    if not torch.isfinite(loss):
        ids = ", ".join(p.scene_id for p in batch)
        raise TrainingError(f"non-finite loss {loss.item()} at step {step}; batch windows: {ids}")
    loss.backward()
    if config.max_grad_norm is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.max_grad_norm)
    optimizer.step()
    return loss.item()


def sample_batch(dataset: Sequence[PairedSequence], config: TrainConfig, rng: np.random.Generator):
    batch = []
    for _ in range(config.batch_size):
        pair = dataset[int(rng.integers(0, len(dataset)))]
        seq_len = min(config.seq_len, len(pair))
        patch = min(config.patch, pair.blurry.shape[2], pair.blurry.shape[3])
        batch.append(sample_training_window(pair, seq_len, patch, rng, augment=config.augment))
    return batch


# --- checkpoints -------------------------------------------------------------------

@dataclass
class CheckpointRecord:
    step: int
    model_config: ModelConfig
    train_config: TrainConfig
    params: dict
    optimizer_state: dict
    rng_state: dict
    loss_stats: dict = field(default_factory=dict)
    path: Optional[Path] = None


def _optimizer_tensors(model, optimizer):
    names = {id(p): n for n, p in model.named_parameters()}
    out = {}
    for group in optimizer.param_groups:
        for p in group["params"]:
            st = optimizer.state.get(p)
            if not st:
                continue
            name = names[id(p)]
            out[f"optim.{name}.exp_avg"] = st["exp_avg"]
            out[f"optim.{name}.exp_avg_sq"] = st["exp_avg_sq"]
            out[f"optim.{name}.step"] = st["step"].reshape(1)
    return out


def _restore_optimizer(model, optimizer, tensors):
    for name, p in model.named_parameters():
        key = f"optim.{name}.exp_avg"
        if key not in tensors:
            continue
        optimizer.state[p] = {
            "step": tensors[f"optim.{name}.step"].reshape(()).to(torch.float32).clone(),
            "exp_avg": tensors[key].to(p.dtype).clone(),
            "exp_avg_sq": tensors[f"optim.{name}.exp_avg_sq"].to(p.dtype).clone(),
        }


def save_checkpoint(path, model: VideoDeblurNet, optimizer, step: int, train_config: TrainConfig,
                    rng: np.random.Generator, loss_stats: dict | None = None):
    tensors = dict(model.state_dict())
    tensors.update(_optimizer_tensors(model, optimizer))
    extra = {"kind": "checkpoint", "step": step, "train_config": train_config.to_dict(),
             "rng_state": rng.bit_generator.state, "loss_stats": loss_stats or {}}
    save_store(path, tensors, model.config.to_dict(), extra)


def load_checkpoint(path) -> CheckpointRecord:
    tensors, header = load_store(path)
    extra = header.get("extra", {})
    params = {k: v for k, v in tensors.items() if not k.startswith("optim.")}
    optim = {k: v for k, v in tensors.items() if k.startswith("optim.")}
    return CheckpointRecord(
        step=int(extra.get("step", 0)),
        model_config=ModelConfig.from_dict(header["model_config"]),
        train_config=TrainConfig(**extra["train_config"]) if "train_config" in extra else TrainConfig(),
        params=params, optimizer_state=optim, rng_state=extra.get("rng_state", {}),
        loss_stats=extra.get("loss_stats", {}), path=Path(path))


def _checkpoint_name(step):
    return f"step_{step:08d}.ckpt"


def latest_checkpoint(run_dir) -> Optional[Path]:
    ckpts = sorted(Path(run_dir, "checkpoints").glob("step_*.ckpt"))
    return ckpts[-1] if ckpts else None


def train_loop(dataset: Sequence[PairedSequence], model_config: ModelConfig, train_config: TrainConfig,
               run_dir, resume: bool = False, stop_at: Optional[int] = None,
               deterministic: bool = False) -> CheckpointRecord:
    """Train from scratch (or from the run's latest checkpoint) up to ``total_steps``.

    Checkpoints go to ``run_dir/checkpoints`` every ``checkpoint_every`` steps
    and at the end; ``run_dir/train_log.jsonl`` receives one JSON record per
    step. ``stop_at`` ends the run early at that step (used to simulate
    interruption) while keeping the schedule of the full run.
    """
    if not dataset:
        raise ContractViolation("training dataset is empty")
    set_deterministic(deterministic)
    run_dir = Path(run_dir)
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    model = build_variant(model_config, seed=train_config.seed)
    optimizer = make_optimizer(model, train_config.lr_max)
    rng = np.random.default_rng(train_config.seed)
    step = 0
    stats = {"count": 0, "sum": 0.0, "first": None, "last": None}
    last_path = None
    if resume and (found := latest_checkpoint(run_dir)) is not None:
        rec = load_checkpoint(found)
        if rec.model_config != model_config:
            raise ContractViolation(f"checkpoint {found} was written for a different model configuration")
        model.load_state_dict(rec.params)
        _restore_optimizer(model, optimizer, rec.optimizer_state)
        rng.bit_generator.state = rec.rng_state
        step = rec.step
        stats.update(rec.loss_stats)
        last_path = found
        log.info("resumed from %s at step %d", found, step)

    end = train_config.total_steps if stop_at is None else min(stop_at, train_config.total_steps)
    if step == 0 and last_path is None:
        last_path = ckpt_dir / _checkpoint_name(0)
        save_checkpoint(last_path, model, optimizer, 0, train_config, rng, stats)

    started = time.perf_counter()
    with open(run_dir / "train_log.jsonl", "a") as logfh:
        while step < end:
            batch = sample_batch(dataset, train_config, rng)
            lr = cosine_lr(step, train_config)
            loss = train_step(model, batch, optimizer, step, train_config)
            step += 1
            stats["count"] += 1
            stats["sum"] += loss
            stats["last"] = loss
            if stats["first"] is None:
                stats["first"] = loss
            logfh.write(json.dumps({"step": step, "lr": lr, "loss": loss,
                                    "wall_time": time.perf_counter() - started}) + "\n")
            logfh.flush()
            if step % train_config.checkpoint_every == 0 or step == end:
                last_path = ckpt_dir / _checkpoint_name(step)
                save_checkpoint(last_path, model, optimizer, step, train_config, rng, stats)

    return CheckpointRecord(step, model_config, train_config, dict(model.state_dict()),
                            _optimizer_tensors(model, optimizer), rng.bit_generator.state, stats, last_path)
