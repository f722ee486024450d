from __future__ import annotations

from classes.errors import ShapeError

from scipy.ndimage import gaussian_filter
import numpy as np

PSNR_CAP = 100.0
SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5  # radius int(3.5 * 1.5 + 0.5) = 5 -> 11x11 window
K1, K2 = 0.01, 0.03

def _pair(a, b) -> (np.ndarray, np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f'metric inputs differ in shape: {a.shape} vs {b.shape}')
    return a, b

def psnr(a, b) -> float:
    """
    10 * log10(1 / MSE) for images in [0, 1], capped at 100 dB
    """
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))

def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    c1, c2 = K1 ** 2, K2 ** 2

    def window(z):
        return gaussian_filter(z, sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode='reflect')

    mu_x, mu_y = window(x), window(y)
    var_x = window(x * x) - mu_x * mu_x
    var_y = window(y * y) - mu_y * mu_y
    cov = window(x * y) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))

def ssim(a, b) -> float:
    """
    Gaussian-windowed SSIM (sigma 1.5, 11x11, dynamic range 1), mean over channels
    :param a: [C, H, W] or [H, W]
    :param b: same shape
    :return: float in [-1, 1]
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        return _ssim_channel(a, b)
    if a.ndim != 3:
        raise ShapeError(f'ssim expects [C,H,W] or [H,W] images, got {a.shape}')
    return float(np.mean([_ssim_channel(a[c], b[c]) for c in range(a.shape[0])]))
