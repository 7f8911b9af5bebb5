import numpy as np
import pytest
import torch

from rnnmbp.config import ModelConfig
from rnnmbp.model import build_variant

torch.set_num_threads(1)


def randomize(model, seed=0, scale=0.3):
    """Give every parameter (biases and the zero-initialised tail included) random values."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_((torch.rand(p.shape, generator=gen, dtype=torch.float64) * 2 - 1) * scale)
    return model


def tiny_model(channels=2, reduction=2, variant="rnn_mbp", multipliers=(1, 2, 3), seed=0, dtype=torch.float64,
               random_all=True, **kw):
    cfg = ModelConfig(channels, reduction, variant, level_multipliers=multipliers, **kw)
    model = build_variant(cfg, seed=seed).to(dtype)
    if random_all:
        randomize(model, seed)
    return model


def numpy_params(model):
    return {k: v.detach().cpu().double().numpy() for k, v in model.state_dict().items()}


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
