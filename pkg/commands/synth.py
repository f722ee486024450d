from __future__ import annotations

from classes.data_classes import ReturnData
from classes.errors import ConfigError
from classes.image_classes import DegradationLabel
from imaging.manifest import MANIFEST_NAME, synthesize_dataset
from imaging.synth import noise_sigma
from utils.log import log
import config

import os

def synth_label(kinds: str = 'noise', sigma: float = 25, intensity: float = 0.5) -> DegradationLabel:
    """
    Label of a synthetic dataset; noise intensity follows sigma, other kinds use `intensity`
    :param kinds: comma separated degradation kinds
    :param sigma: Gaussian sigma on the 0-255 scale
    :param intensity: intensity of every other kind
    :return: DegradationLabel
    """
    names = [k.strip() for k in kinds.split(',') if k.strip()]
    if not names:
        raise ConfigError('at least one degradation kind is required')
    sigma_scale = max(config.CANONICAL_SIGMAS)
    intensities = {name: (sigma / sigma_scale if name == 'noise' else intensity) for name in names}
    label = DegradationLabel(intensities)
    if 'noise' in names and noise_sigma(label.intensities['noise']) != sigma:
        raise ConfigError(f'sigma {sigma} is outside 0..{sigma_scale}')
    return label

def synth_def(out: str, seed: int = config.DEFAULT_SEED, count: int = 8, size: int = 64, kinds: str = 'noise',
              sigma: float = 25, intensity: float = 0.5, threads: int = 1) -> ReturnData:
    """
    Synthesises clean/degraded pairs and their manifest
    :param out: output directory
    :param seed: manifest seed
    :param count: number of images
    :param size: image side (power of two >= 32)
    :param kinds: comma separated degradation kinds
    :param sigma: Gaussian noise sigma on the 0-255 scale
    :param intensity: intensity of non-noise kinds
    :param threads: worker threads
    :return: ReturnData with the DatasetManifest as data
    """
    log('synth', 'synth_def', [out, seed, count, size, kinds, sigma, intensity, threads], log_type='function')
    try:
        if count < 1:
            raise ConfigError(f'count must be positive, got {count}')
        label = synth_label(kinds, sigma, intensity)
        manifest = synthesize_dataset(out, count, size, label, seed, threads)
    except (ValueError, OSError) as e:
        log('synth', f'synthesis failed: {e}', [out], log_type='error')
        return ReturnData(False, str(e))

    message = f'Wrote {len(manifest)} image pairs and {os.path.join(out, MANIFEST_NAME)}'
    return ReturnData(True, message, manifest)
