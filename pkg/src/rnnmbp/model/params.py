"""Analytic parameter shapes, derived from a config without building tensors."""
from math import prod

from ..config import ModelConfig


def _conv(prefix, cin, cout, k=3):
    return {f"{prefix}.weight": (cout, cin, k, k), f"{prefix}.bias": (cout,)}


def _cab(prefix, c, r):
    out = {}
    out.update(_conv(f"{prefix}.conv1", c, c))
    out.update(_conv(f"{prefix}.conv2", c, c))
    out.update(_conv(f"{prefix}.squeeze", c, c // r, 1))
    out.update(_conv(f"{prefix}.excite", c // r, c, 1))
    return out


def _stack(prefix, c, r, n):
    out = {}
    for i in range(n):
        out.update(_cab(f"{prefix}.cab{i}", c, r))
    return out


def _unet_cell(prefix, widths, r, cabs):
    w1, w2, w3 = widths
    out = {}
    out.update(_stack(f"{prefix}.enc1", w1, r, cabs))
    out.update(_conv(f"{prefix}.down1.conv", w1, w2))
    out.update(_stack(f"{prefix}.enc2", w2, r, cabs))
    out.update(_conv(f"{prefix}.down2.conv", w2, w3))
    out.update(_stack(f"{prefix}.enc3", w3, r, cabs))
    for name, w in (("e1", w1), ("d1", w1), ("e2", w2), ("d2", w2), ("e3", w3), ("d3", w3)):
        out.update(_conv(f"{prefix}.hid_{name}", w, w))
    out.update(_stack(f"{prefix}.dec3", w3, r, cabs))
    out.update(_conv(f"{prefix}.up3.conv", w3, w2))
    out.update(_stack(f"{prefix}.dec2", w2, r, cabs))
    out.update(_stack(f"{prefix}.skip2", w2, r, cabs))
    out.update(_conv(f"{prefix}.up2.conv", w2, w1))
    out.update(_stack(f"{prefix}.dec1", w1, r, cabs))
    out.update(_stack(f"{prefix}.skip1", w1, r, cabs))
    return out


def _baseline_cell(prefix, c, r, cabs):
    out = _stack(f"{prefix}.body", c, r, cabs)
    out.update(_conv(f"{prefix}.hid", c, c))
    return out


def _tfr(prefix, widths, r, cabs):
    w1, w2, w3 = widths
    c = w1
    out = {}
    for i in (1, 2, 3):
        out.update(_stack(f"{prefix}.psi{i}", c, r, cabs))
    for name, w in (("e1", w1), ("d1", w1), ("e2", w2), ("d2", w2), ("e3", w3), ("d3", w3)):
        out.update(_conv(f"{prefix}.fuse_{name}", w, c))
    for name, stages in (("e2", 1), ("d2", 1), ("e3", 2), ("d3", 2)):
        for s in range(stages):
            out.update(_conv(f"{prefix}.up_{name}.stage{s}.conv", c, c))
    out.update(_conv(f"{prefix}.tail", c, 3, 5))
    return out


def _plain(prefix, c):
    out = _conv(f"{prefix}.fuse", 3 * c, c)
    out.update(_conv(f"{prefix}.body", c, c))
    out.update(_conv(f"{prefix}.tail", c, 3, 5))
    return out


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape of every learnable tensor of the network for ``config``."""
    c, r = config.base_channels, config.cab_reduction
    widths = config.level_widths
    shapes = _conv("extractor.conv", 3, c)
    shapes.update(_cab("extractor.cab", c, r))
    for direction in ("forward_cell", "backward_cell"):
        if config.variant == "baseline":
            shapes.update(_baseline_cell(direction, c, r, config.phi_cab_count))
        else:
            shapes.update(_unet_cell(direction, widths, r, config.phi_cab_count))
    if config.variant == "rnn_mbp":
        shapes.update(_tfr("reconstructor", widths, r, config.psi_cab_count))
    else:
        shapes.update(_plain("reconstructor", c))
    return shapes


def count_parameters(config: ModelConfig) -> int:
    """Number of scalar learnables implied by ``config``."""
    return sum(prod(s) for s in parameter_shapes(config).values())
