"""
Procedural clean images and the degradations applied to them

Images are float32 arrays [3, H, W] with values in [0, 1]. Every function is a
deterministic function of its inputs and seed.
"""
from __future__ import annotations

from classes.errors import ConfigError, ShapeError
from classes.image_classes import DegradationLabel
from utils.checks import check_image_size
from utils.log import log
import config

from scipy.ndimage import convolve, gaussian_filter
import numpy as np

MASK64 = (1 << 64) - 1

# kinds are applied in this order by degrade()
APPLY_ORDER = ('haze', 'lowlight', 'blur', 'rain', 'snow', 'noise')

def splitmix64(seed: int, index: int) -> int:
    """
    Independent 64-bit seed for item `index` of a run seeded with `seed`
    """
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)

def _finish(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0).astype(np.float32)

def _smooth_field(rng: np.random.Generator, shape: tuple, sigma: float) -> np.ndarray:
    """
    Gaussian-filtered white noise rescaled to [0, 1]
    """
    field = gaussian_filter(rng.standard_normal(shape), sigma=sigma, mode='wrap')
    low, high = field.min(), field.max()
    return (field - low) / (high - low) if high > low else np.zeros(shape)

def synth_clean(seed: int, height: int, width: int) -> np.ndarray:
    """
    Composite of a colour gradient, smooth random texture and filled shapes
    :param seed: image seed
    :param height: power of two, >= 32
    :param width: power of two, >= 32
    :return: float32 [3, H, W] in [0, 1]
    """
    if not check_image_size(height, width):
        raise ShapeError(f'synthetic images need power-of-two sides >= 32, got {height}x{width}')
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] / np.array([height, width])[:, None, None]

    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    ramp = (ramp - ramp.min()) / (ramp.max() - ramp.min())
    start, end = rng.uniform(0.1, 0.9, size=(2, 3, 1, 1))
    img = start + (end - start) * ramp[None]

    texture = _smooth_field(rng, (3, height, width), sigma=(0, height / 16, width / 16))
    img = 0.75 * img + 0.25 * texture

    for _ in range(rng.integers(3, 7)):
        color = rng.uniform(0, 1, size=(3, 1, 1))
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        size = rng.uniform(0.08, 0.3)
        if rng.random() < 0.5:
            shape = (yy - cy) ** 2 + (xx - cx) ** 2 < size ** 2
        else:
            shape = (np.abs(yy - cy) < size) & (np.abs(xx - cx) < size * rng.uniform(0.4, 1.0))
        alpha = rng.uniform(0.5, 1.0)
        img = np.where(shape[None], (1 - alpha) * img + alpha * color, img)
    return _finish(img)

def add_gaussian_noise(img: np.ndarray, sigma_255: float, seed: int) -> np.ndarray:
    """
    img + N(0, (sigma/255)^2) per element, clamped
    Non-canonical sigmas are accepted with a warning.
    """
    if sigma_255 not in config.CANONICAL_SIGMAS and sigma_255 != 0:
        log('synth', f'warning: non-canonical noise sigma {sigma_255}', options=list(config.CANONICAL_SIGMAS), log_type='error')
    if sigma_255 == 0:
        return _finish(img)
    rng = np.random.default_rng(seed)
    return _finish(img + rng.standard_normal(img.shape) * (sigma_255 / 255.0))

def _streak_kernel(length: int, angle: float) -> np.ndarray:
    """
    Line segment through the kernel centre, blurred along its axis
    """
    kernel = np.zeros((length, length))
    centre = (length - 1) / 2
    for t in np.linspace(-centre, centre, 4 * length):
        row = int(round(centre + t * np.cos(angle)))
        col = int(round(centre + t * np.sin(angle)))
        kernel[row, col] = 1.0
    kernel = gaussian_filter(kernel, sigma=0.5)
    return kernel / kernel.max()

def add_rain(img: np.ndarray, density: float, seed: int) -> np.ndarray:
    """
    Additive bright streaks; the streak seeds of a lower density are a subset of those of a higher one
    :param img: [3, H, W]
    :param density: [0, 1]
    :param seed: seed of streak positions and orientation
    """
    if not 0.0 <= density <= 1.0:
        raise ConfigError(f'rain density must lie in [0, 1], got {density}')
    if density == 0:
        return _finish(img)
    rng = np.random.default_rng(seed)
    _, h, w = img.shape
    drops = (rng.random((h, w)) < 0.03 * density).astype(np.float64)
    angle = rng.uniform(-0.35, 0.35)
    streaks = convolve(drops, _streak_kernel(max(5, h // 8) | 1, angle), mode='wrap')
    return _finish(img + 0.6 * np.clip(streaks, 0.0, 1.0)[None])

def add_haze(img: np.ndarray, beta: float, airlight: float = 0.9, seed: int = 0) -> np.ndarray:
    """
    Atmospheric scattering: img * t + A * (1 - t), t = exp(-beta * depth)
    :param img: [3, H, W]
    :param beta: scattering coefficient > 0
    :param airlight: A in [0.7, 1.0]
    :param seed: seed of the depth field
    """
    if beta <= 0:
        raise ConfigError(f'haze beta must be positive, got {beta}')
    if not 0.7 <= airlight <= 1.0:
        raise ConfigError(f'airlight must lie in [0.7, 1.0], got {airlight}')
    rng = np.random.default_rng(seed)
    _, h, w = img.shape
    rows = np.linspace(1.0, 0.0, h)[:, None] * np.ones((1, w))
    depth = 0.2 + 0.8 * (0.6 * rows + 0.4 * _smooth_field(rng, (h, w), sigma=h / 4))
    transmission = np.exp(-beta * depth)[None]
    return _finish(img * transmission + airlight * (1.0 - transmission))

def add_blur(img: np.ndarray, intensity: float, seed: int = 0) -> np.ndarray:
    """
    Gaussian blur with sigma = 3 * intensity
    """
    if intensity == 0:
        return _finish(img)
    return _finish(gaussian_filter(img, sigma=(0, 3.0 * intensity, 3.0 * intensity), mode='reflect'))

def add_lowlight(img: np.ndarray, intensity: float, seed: int) -> np.ndarray:
    """
    Gamma darkening with a small read noise
    """
    if intensity == 0:
        return _finish(img)
    rng = np.random.default_rng(seed)
    dark = np.power(np.clip(img, 0.0, 1.0), 1.0 + 2.0 * intensity) * (1.0 - 0.5 * intensity)
    return _finish(dark + rng.standard_normal(img.shape) * 0.01 * intensity)

def add_snow(img: np.ndarray, intensity: float, seed: int) -> np.ndarray:
    """
    Bright blurred flakes
    """
    if intensity == 0:
        return _finish(img)
    rng = np.random.default_rng(seed)
    _, h, w = img.shape
    flakes = gaussian_filter((rng.random((h, w)) < 0.02 * intensity).astype(np.float64), sigma=0.8, mode='wrap')
    if flakes.max() > 0:
        flakes = flakes / flakes.max()
    return _finish(img + 0.9 * flakes[None])

def noise_sigma(intensity: float) -> float:
    # intensity 1 is the strongest canonical level
    return round(intensity * max(config.CANONICAL_SIGMAS), 6)

def degrade(img: np.ndarray, label: DegradationLabel, seed: int) -> np.ndarray:
    """
    Applies every kind of the label in APPLY_ORDER with its own derived seed
    :param img: clean [3, H, W]
    :param label: DegradationLabel
    :param seed: image seed
    :return: degraded [3, H, W]
    """
    out = _finish(img)
    for index, kind in enumerate(APPLY_ORDER):
        if kind not in label.intensities:
            continue
        intensity = label.intensities[kind]
        kind_seed = splitmix64(seed, index)
        if kind == 'noise':
            out = add_gaussian_noise(out, noise_sigma(intensity), kind_seed)
        elif kind == 'rain':
            out = add_rain(out, intensity, kind_seed)
        elif kind == 'haze':
            if intensity > 0:
                out = add_haze(out, 3.0 * intensity, 0.9, kind_seed)
        elif kind == 'blur':
            out = add_blur(out, intensity, kind_seed)
        elif kind == 'lowlight':
            out = add_lowlight(out, intensity, kind_seed)
        elif kind == 'snow':
            out = add_snow(out, intensity, kind_seed)
    return out

def corruption_mask(clean: np.ndarray, degraded: np.ndarray, threshold: float = 2.0 / 255.0) -> np.ndarray:
    """
    Pixels where any channel moved by more than `threshold`
    :return: bool [H, W]
    """
    if clean.shape != degraded.shape:
        raise ShapeError(f'clean {clean.shape} and degraded {degraded.shape} shapes differ')
    return np.abs(degraded.astype(np.float64) - clean).max(axis=0) > threshold
