import math

import torch
from torch import nn
from torch.nn import functional as F

from ..errors import ConfigurationError


def conv(in_ch, out_ch, kernel_size=3, stride=1):
    return nn.Conv2d(in_ch, out_ch, kernel_size, stride=stride, padding=kernel_size // 2, bias=True)


@torch.no_grad()
def init_weights(module: nn.Module, generator: torch.Generator = None):
    """Fan-in scaled uniform weights, zero biases, for every conv in ``module``."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            bound = 1.0 / math.sqrt(fan_in)
            w = torch.rand(m.weight.shape, generator=generator, dtype=torch.float64)
            m.weight.copy_((w * 2 - 1) * bound)
            m.bias.zero_()


class ChannelAttentionBlock(nn.Module):
    """Residual conv block whose branch is reweighted per channel.

    out = x + branch(x) * sigmoid(excite(relu(squeeze(mean(branch(x))))))
    """

    def __init__(self, channels, reduction=16):
        super().__init__()
        if channels % reduction:
            raise ConfigurationError(f"channels {channels} not divisible by reduction {reduction}")
        self.channels = channels
        self.conv1 = conv(channels, channels)
        self.conv2 = conv(channels, channels)
        self.squeeze = nn.Conv2d(channels, channels // reduction, 1)
        self.excite = nn.Conv2d(channels // reduction, channels, 1)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ConfigurationError(
                f"CAB expects (B, {self.channels}, H, W) input, got {tuple(x.shape)}")
        branch = self.conv2(F.relu(self.conv1(x)))
        pooled = branch.mean(dim=(2, 3), keepdim=True)
        gate = torch.sigmoid(self.excite(F.relu(self.squeeze(pooled))))
        return x + branch * gate


class CABStack(nn.Sequential):
    def __init__(self, channels, reduction, count):
        super().__init__()
        for i in range(count):
            self.add_module(f"cab{i}", ChannelAttentionBlock(channels, reduction))


class Downsample(nn.Module):
    """Halve the spatial size, mapping ``in_ch`` to ``out_ch`` channels."""

    def __init__(self, in_ch, out_ch, mode="strided_conv"):
        super().__init__()
        self.mode = mode
        self.conv = conv(in_ch, out_ch, 3, stride=2 if mode == "strided_conv" else 1)

    def forward(self, x):
        if self.mode == "bilinear":
            x = F.interpolate(x, scale_factor=0.5, mode="bilinear", align_corners=False)
        return self.conv(x)


class UpStage(nn.Module):
    """Bilinear x2 followed by a 3x3 conv."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv = conv(in_ch, out_ch)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.conv(x)


class Upsample(nn.Sequential):
    """x2 per stage; two stages give x4."""

    def __init__(self, channels, stages=1):
        super().__init__()
        for i in range(stages):
            self.add_module(f"stage{i}", UpStage(channels, channels))
