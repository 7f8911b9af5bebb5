"""Full video deblurring networks and their ablation variants."""
from typing import Sequence

import torch
from torch import nn

from ..config import ModelConfig
from ..errors import ConfigurationError, ContractViolation, InputShapeError
from .cell import BaselineCell, HiddenStateSet, UNetRNNCell
from .layers import ChannelAttentionBlock, conv, init_weights
from .reconstruct import PlainReconstructor, TargetFrameReconstructor


class FeatureExtractor(nn.Module):
    def __init__(self, channels, reduction=16):
        super().__init__()
        self.conv = conv(3, channels)
        self.cab = ChannelAttentionBlock(channels, reduction)

    def forward(self, frame):
        return self.cab(self.conv(frame))


def check_frames(seq):
    if seq.dim() != 5 or seq.shape[2] != 3:
        raise InputShapeError(f"expected frames shaped (B, N, 3, H, W), got {tuple(seq.shape)}")
    n, h, w = seq.shape[1], seq.shape[3], seq.shape[4]
    if n < 1:
        raise InputShapeError("sequence must contain at least one frame")
    if h < 4 or w < 4 or h % 4 or w % 4:
        pad_h, pad_w = (-h) % 4, (-w) % 4
        raise InputShapeError(
            f"frame size {h}x{w} must be at least 4 and divisible by 4; "
            f"pad by {pad_h} rows and {pad_w} columns (e.g. reflection padding to {h + pad_h}x{w + pad_w})")


class VideoDeblurNet(nn.Module):
    """Extractor, bidirectional recurrence and reconstruction.

    Input and output are ``(B, N, 3, H, W)``. The reconstruction adds a
    predicted residual to each input frame and never clamps.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c, r = config.base_channels, config.cab_reduction
        widths = config.level_widths
        self.extractor = FeatureExtractor(c, r)
        if config.variant == "baseline":
            self.forward_cell = BaselineCell(c, r, config.phi_cab_count)
            self.backward_cell = BaselineCell(c, r, config.phi_cab_count)
            self.reconstructor = PlainReconstructor(c)
        else:
            self.forward_cell = UNetRNNCell(widths, r, config.phi_cab_count, config.resample_mode)
            self.backward_cell = UNetRNNCell(widths, r, config.phi_cab_count, config.resample_mode)
            if config.variant == "baseline_mbp":
                self.reconstructor = PlainReconstructor(c)
            else:
                self.reconstructor = TargetFrameReconstructor(widths, r, config.psi_cab_count, config.eq9_literal)

    @property
    def multiscale(self):
        return self.config.variant != "baseline"

    @property
    def states_per_direction(self):
        return 6 if self.multiscale else 1

    def extract(self, seq):
        b, n = seq.shape[:2]
        feats = self.extractor(seq.flatten(0, 1))
        return list(feats.unflatten(0, (b, n)).unbind(1))

    def zero_state(self, phi):
        b, c, h, w = phi.shape
        if self.multiscale:
            return HiddenStateSet.zeros(b, self.config.level_widths, h, w, phi.dtype, phi.device)
        return torch.zeros_like(phi)

    def _propagate(self, cell, features: Sequence[torch.Tensor]):
        if len(features) == 0:
            raise ContractViolation("cannot propagate over an empty feature list")
        shape = features[0].shape
        for t, f in enumerate(features):
            if f.shape != shape:
                raise ContractViolation(f"feature {t} has shape {tuple(f.shape)}, expected {tuple(shape)}")
        state = self.zero_state(features[0])
        states = []
        for phi in features:
            state = cell(phi, state)
            states.append(state)
        return states

    def propagate_forward(self, features):
        """States F_0..F_{N-1}; F_t sees features 0..t only."""
        return self._propagate(self.forward_cell, features)

    def propagate_backward(self, features):
        """States B_0..B_{N-1}; B_t sees features t..N-1 only."""
        return self._propagate(self.backward_cell, list(features)[::-1])[::-1]

    def reconstruct(self, phi, fwd, bwd, frame):
        if self.config.variant == "baseline_mbp":
            fwd, bwd = fwd.d1, bwd.d1
        return self.reconstructor(phi, fwd, bwd, frame)

    def forward(self, seq):
        check_frames(seq)
        feats = self.extract(seq)
        fwd = self.propagate_forward(feats)
        bwd = self.propagate_backward(feats)
        out = [self.reconstruct(feats[t], fwd[t], bwd[t], seq[:, t]) for t in range(len(feats))]
        return torch.stack(out, dim=1)


def build_variant(config: ModelConfig, seed: int = 0) -> VideoDeblurNet:
    """Instantiate and initialise the network described by ``config``.

    Convs get fan-in scaled uniform weights and zero biases; the final 5x5
    conv is zeroed so a fresh model is the identity map.
    """
    if not isinstance(config, ModelConfig):
        raise ConfigurationError(f"expected a ModelConfig, got {type(config).__name__}")
    model = VideoDeblurNet(config)
    gen = torch.Generator().manual_seed(seed)
    init_weights(model, gen)
    with torch.no_grad():
        model.reconstructor.tail.weight.zero_()
        model.reconstructor.tail.bias.zero_()
    return model


def model_forward(seq, config: ModelConfig, params) -> torch.Tensor:
    """Run the full model on ``seq`` using the tensors in ``params``."""
    if config.variant != "rnn_mbp":
        raise ConfigurationError("model_forward evaluates the full rnn_mbp variant; use build_variant for ablations")
    model = VideoDeblurNet(config).to(next(iter(params.values())).dtype)
    model.load_state_dict(params)
    return model(seq)
