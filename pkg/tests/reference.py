"""Straight-line NumPy evaluation of the network equations, used as a test oracle.

Nothing here calls torch ops: convolutions are explicit sums over shifted,
zero-padded arrays and bilinear resampling is written from its definition.
Parameters are read from a plain ``{name: ndarray}`` mapping.
"""
import numpy as np


def conv2d(x, w, b, stride=1):
    """x: (C, H, W); w: (O, C, k, k); zero padding k//2."""
    o, c, k, _ = w.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    h, wd = x.shape[1:]
    out = np.zeros((o, h, wd))
    for dy in range(k):
        for dx in range(k):
            patch = xp[:, dy:dy + h, dx:dx + wd]
            out += np.tensordot(w[:, :, dy, dx], patch, axes=(1, 0))
    out += b[:, None, None]
    return out[:, ::stride, ::stride]


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _bilinear_axis(n_in, n_out):
    scale = n_in / n_out
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = max((i + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        lam = src - i0
        m[i, i0] += 1 - lam
        m[i, i1] += lam
    return m


def resize(x, factor):
    c, h, w = x.shape
    my = _bilinear_axis(h, int(h * factor))
    mx = _bilinear_axis(w, int(w * factor))
    return np.einsum("ij,cjk,lk->cil", my, x, mx)


def conv_p(p, name, x, stride=1):
    return conv2d(x, p[name + ".weight"], p[name + ".bias"], stride)


def cab(p, name, x):
    branch = conv_p(p, name + ".conv2", relu(conv_p(p, name + ".conv1", x)))
    pooled = branch.mean(axis=(1, 2))
    hidden = relu(p[name + ".squeeze.weight"][:, :, 0, 0] @ pooled + p[name + ".squeeze.bias"])
    gate = sigmoid(p[name + ".excite.weight"][:, :, 0, 0] @ hidden + p[name + ".excite.bias"])
    return x + branch * gate[:, None, None]


def stack(p, name, x, count):
    for i in range(count):
        x = cab(p, f"{name}.cab{i}", x)
    return x


def down(p, name, x, mode="strided_conv"):
    if mode == "strided_conv":
        return conv_p(p, name + ".conv", x, stride=2)
    return conv_p(p, name + ".conv", resize(x, 0.5))


def up_stage(p, name, x):
    return conv_p(p, name + ".conv", resize(x, 2))


def extract(p, frame):
    return cab(p, "extractor.cab", conv_p(p, "extractor.conv", frame))


def cell(p, prefix, phi, prev, mode="strided_conv"):
    """prev: dict with e1 e2 e3 d3 d2 d1. Returns the same keys."""
    phi_ = lambda name, x: stack(p, f"{prefix}.{name}", x, 2)
    conv_ = lambda name, x: conv_p(p, f"{prefix}.{name}", x)
    e1 = phi_("enc1", phi) + conv_("hid_e1", prev["e1"]) + conv_("hid_d1", prev["d1"])
    e2 = phi_("enc2", down(p, f"{prefix}.down1", e1, mode)) + conv_("hid_e2", prev["e2"]) + conv_("hid_d2", prev["d2"])
    e3 = phi_("enc3", down(p, f"{prefix}.down2", e2, mode)) + conv_("hid_e3", prev["e3"]) + conv_("hid_d3", prev["d3"])
    d3 = phi_("dec3", e3)
    d2 = phi_("dec2", up_stage(p, f"{prefix}.up3", d3)) + phi_("skip2", e2)
    d1 = phi_("dec1", up_stage(p, f"{prefix}.up2", d2)) + phi_("skip1", e1)
    return {"e1": e1, "e2": e2, "e3": e3, "d3": d3, "d2": d2, "d1": d1}


def reconstruct(p, phi, f, b, frame, eq9_literal=False):
    pre = "reconstructor"
    psi = lambda i, x: stack(p, f"{pre}.psi{i}", x, 8)
    fuse = lambda name, x: conv_p(p, f"{pre}.fuse_{name}", x)

    def up(name, x, stages):
        for s in range(stages):
            x = up_stage(p, f"{pre}.up_{name}.stage{s}", x)
        return x

    f1 = psi(1, phi) + fuse("e1", f["e1"] + b["e1"]) + fuse("d1", f["d1"] + b["d1"])
    partner = b["d2"] if eq9_literal else b["e2"]
    f2 = psi(2, f1) + up("e2", fuse("e2", f["e2"] + partner), 1) + up("d2", fuse("d2", f["d2"] + b["d2"]), 1)
    f3 = psi(3, f2) + up("e3", fuse("e3", f["e3"] + b["e3"]), 2) + up("d3", fuse("d3", f["d3"] + b["d3"]), 2)
    return conv_p(p, f"{pre}.tail", f3) + frame


def zero_states(widths, h, w):
    w1, w2, w3 = widths
    return {"e1": np.zeros((w1, h, w)), "e2": np.zeros((w2, h // 2, w // 2)), "e3": np.zeros((w3, h // 4, w // 4)),
            "d3": np.zeros((w3, h // 4, w // 4)), "d2": np.zeros((w2, h // 2, w // 2)), "d1": np.zeros((w1, h, w))}


def full_model(p, frames, widths, eq9_literal=False):
    """frames: (N, 3, H, W) -> (N, 3, H, W)."""
    n, _, h, w = frames.shape
    phis = [extract(p, fr) for fr in frames]
    fwd, state = [], zero_states(widths, h, w)
    for t in range(n):
        state = cell(p, "forward_cell", phis[t], state)
        fwd.append(state)
    bwd, state = [None] * n, zero_states(widths, h, w)
    for t in reversed(range(n)):
        state = cell(p, "backward_cell", phis[t], state)
        bwd[t] = state
    return np.stack([reconstruct(p, phis[t], fwd[t], bwd[t], frames[t], eq9_literal) for t in range(n)])
