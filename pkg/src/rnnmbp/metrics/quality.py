"""PSNR and SSIM on RGB frames in [0, 1]."""
import math

import numpy as np
from scipy.ndimage import correlate1d

from ..errors import ContractViolation

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_frame(x) -> np.ndarray:
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


def psnr(a, b, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) after clamping both frames to [0, 1].

    Identical frames give ``PSNR_CAP`` (100 dB) instead of infinity.
    """
    a, b = _as_frame(a), _as_frame(b)
    if a.shape != b.shape:
        raise ContractViolation(f"frame shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable correlation with ``g``, keeping only fully covered positions."""
    pad = len(g) // 2
    out = correlate1d(img, g, axis=-1, mode="constant")
    out = correlate1d(out, g, axis=-2, mode="constant")
    return out[..., pad:img.shape[-2] - pad, pad:img.shape[-1] - pad]


def ssim(a, b) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Computed per channel over window positions fully inside the frame, then
    averaged over channels. Inputs are ``(C, H, W)`` or ``(H, W)``.
    """
    a, b = _as_frame(a), _as_frame(b)
    if a.shape != b.shape:
        raise ContractViolation(f"frame shapes differ: {a.shape} vs {b.shape}")
    if a.shape[-1] < SSIM_WINDOW or a.shape[-2] < SSIM_WINDOW:
        raise ContractViolation(
            f"frame {a.shape[-2]}x{a.shape[-1]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window; "
            "resize or pad the frames first")
    if a.ndim == 2:
        a, b = a[None], b[None]
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    g = gaussian_window()
    per_channel = []
    for x, y in zip(a, b):
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        per_channel.append(np.mean(num / den))
    return float(np.mean(per_channel))
