import torch
from torch import nn
from torch.nn import functional as F

from .cell import HiddenStateSet
from .layers import CABStack, Upsample, conv


class TargetFrameReconstructor(nn.Module):
    """Fuses the target features with both directions' states, coarse levels
    upsampled to full resolution, and predicts a residual image."""

    def __init__(self, widths, reduction=16, cabs=8, eq9_literal=False):
        super().__init__()
        w1, w2, w3 = widths
        c = w1
        self.eq9_literal = eq9_literal
        self.psi1 = CABStack(c, reduction, cabs)
        self.psi2 = CABStack(c, reduction, cabs)
        self.psi3 = CABStack(c, reduction, cabs)
        self.fuse_e1 = conv(w1, c)
        self.fuse_d1 = conv(w1, c)
        self.fuse_e2 = conv(w2, c)
        self.fuse_d2 = conv(w2, c)
        self.fuse_e3 = conv(w3, c)
        self.fuse_d3 = conv(w3, c)
        self.up_e2 = Upsample(c, 1)
        self.up_d2 = Upsample(c, 1)
        self.up_e3 = Upsample(c, 2)
        self.up_d3 = Upsample(c, 2)
        self.tail = conv(c, 3, 5)

    def forward(self, phi, fwd: HiddenStateSet, bwd: HiddenStateSet, frame):
        f1 = self.psi1(phi) + self.fuse_e1(fwd.e1 + bwd.e1) + self.fuse_d1(fwd.d1 + bwd.d1)
        e2_pair = bwd.d2 if self.eq9_literal else bwd.e2
        f2 = (self.psi2(f1) + self.up_e2(self.fuse_e2(fwd.e2 + e2_pair))
              + self.up_d2(self.fuse_d2(fwd.d2 + bwd.d2)))
        f3 = (self.psi3(f2) + self.up_e3(self.fuse_e3(fwd.e3 + bwd.e3))
              + self.up_d3(self.fuse_d3(fwd.d3 + bwd.d3)))
        return self.tail(f3) + frame


class PlainReconstructor(nn.Module):
    """Conv stack over concatenated [target, forward, backward] features,
    used by the ablation variants in place of the multi-scale fusion."""

    def __init__(self, channels):
        super().__init__()
        self.fuse = conv(3 * channels, channels)
        self.body = conv(channels, channels)
        self.tail = conv(channels, 3, 5)

    def forward(self, phi, fwd, bwd, frame):
        x = F.relu(self.fuse(torch.cat([phi, fwd, bwd], dim=1)))
        x = F.relu(self.body(x))
        return self.tail(x) + frame
