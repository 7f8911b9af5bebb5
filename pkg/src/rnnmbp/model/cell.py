from typing import NamedTuple

import torch
from torch import nn

from ..errors import ContractViolation
from .layers import CABStack, Downsample, UpStage, conv


class HiddenStateSet(NamedTuple):
    """Six multi-scale states of one recurrent direction at one time step.

    ``e*`` come from the encoder, ``d*`` from the decoder; level 1 is full
    resolution, level 2 half, level 3 quarter.
    """

    e1: torch.Tensor
    e2: torch.Tensor
    e3: torch.Tensor
    d3: torch.Tensor
    d2: torch.Tensor
    d1: torch.Tensor

    @classmethod
    def zeros(cls, batch, widths, height, width, dtype=torch.float32, device=None):
        w1, w2, w3 = widths
        z = lambda c, s: torch.zeros(batch, c, height // s, width // s, dtype=dtype, device=device)
        return cls(z(w1, 1), z(w2, 2), z(w3, 4), z(w3, 4), z(w2, 2), z(w1, 1))

    def level(self, name):
        return getattr(self, name)


def check_scales(states: HiddenStateSet, height, width):
    """Raise if ``states`` do not follow the 1, 1/2, 1/4 scale layout."""
    expect = {"e1": 1, "e2": 2, "e3": 4, "d3": 4, "d2": 2, "d1": 1}
    for name, s in expect.items():
        t = states.level(name)
        if tuple(t.shape[-2:]) != (height // s, width // s):
            raise ContractViolation(
                f"hidden state {name} has spatial size {tuple(t.shape[-2:])}, "
                f"expected {(height // s, width // s)} for a {height}x{width} input")


class UNetRNNCell(nn.Module):
    """One direction of multi-scale propagation.

    Encoder levels add the previous step's encoder and decoder states of the
    same scale to the attended features; the decoder upsamples back with
    skip connections from the encoder. Every conv and CAB stack here owns its
    parameters.
    """

    def __init__(self, widths, reduction=16, cabs=2, down_mode="strided_conv"):
        super().__init__()
        w1, w2, w3 = widths
        self.widths = tuple(widths)
        self.enc1 = CABStack(w1, reduction, cabs)
        self.down1 = Downsample(w1, w2, down_mode)
        self.enc2 = CABStack(w2, reduction, cabs)
        self.down2 = Downsample(w2, w3, down_mode)
        self.enc3 = CABStack(w3, reduction, cabs)
        self.hid_e1 = conv(w1, w1)
        self.hid_d1 = conv(w1, w1)
        self.hid_e2 = conv(w2, w2)
        self.hid_d2 = conv(w2, w2)
        self.hid_e3 = conv(w3, w3)
        self.hid_d3 = conv(w3, w3)
        self.dec3 = CABStack(w3, reduction, cabs)
        self.up3 = UpStage(w3, w2)
        self.dec2 = CABStack(w2, reduction, cabs)
        self.skip2 = CABStack(w2, reduction, cabs)
        self.up2 = UpStage(w2, w1)
        self.dec1 = CABStack(w1, reduction, cabs)
        self.skip1 = CABStack(w1, reduction, cabs)

    def forward(self, phi, prev: HiddenStateSet) -> HiddenStateSet:
        check_scales(prev, phi.shape[-2], phi.shape[-1])
        e1 = self.enc1(phi) + self.hid_e1(prev.e1) + self.hid_d1(prev.d1)
        e2 = self.enc2(self.down1(e1)) + self.hid_e2(prev.e2) + self.hid_d2(prev.d2)
        e3 = self.enc3(self.down2(e2)) + self.hid_e3(prev.e3) + self.hid_d3(prev.d3)
        d3 = self.dec3(e3)
        d2 = self.dec2(self.up3(d3)) + self.skip2(e2)
        d1 = self.dec1(self.up2(d2)) + self.skip1(e1)
        return HiddenStateSet(e1, e2, e3, d3, d2, d1)


class BaselineCell(nn.Module):
    """Single-scale recurrent cell: h_t = CABs(phi_t) + Conv(h_{t-1})."""

    def __init__(self, channels, reduction=16, cabs=2):
        super().__init__()
        self.body = CABStack(channels, reduction, cabs)
        self.hid = conv(channels, channels)

    def forward(self, phi, prev):
        if prev.shape != phi.shape:
            raise ContractViolation(f"hidden state shape {tuple(prev.shape)} != feature shape {tuple(phi.shape)}")
        return self.body(phi) + self.hid(prev)
