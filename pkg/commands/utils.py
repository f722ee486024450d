from __future__ import annotations

from classes.data_classes import ModelConfig, TrainConfig
from classes.errors import ConfigError
from classes.image_classes import DegradationLabel
from engine.tensor_class import Tensor
from imaging.image_io import read_ppm
from imaging.manifest import load_pair, read_manifest
from network.model import RestorationNetwork, build_model
from utils.checkpoint import load_checkpoint
from utils.config_file import load_config

import numpy as np
import os

def configs_from_args(config_path: str, seed: int = None, threads: int = None) -> (ModelConfig, TrainConfig):
    """
    Loads a config file and applies the command-line overrides
    :param config_path: 'key = value' file
    :param seed: --seed override
    :param threads: --threads override
    :return: validated (ModelConfig, TrainConfig)
    """
    model_cfg, train_cfg = load_config(config_path)
    if seed is not None:
        train_cfg.seed = seed
    if threads is not None:
        train_cfg.threads = threads
    return model_cfg.validate(), train_cfg.validate()

def model_from_args(checkpoint: str = None, config_path: str = None, seed: int = None) -> RestorationNetwork:
    """
    A trained network from a checkpoint, or a freshly initialised one from a config
    """
    if checkpoint:
        model, _ = load_checkpoint(checkpoint)
        return model
    if config_path:
        model_cfg, train_cfg = configs_from_args(config_path, seed=seed)
        return build_model(model_cfg, train_cfg.seed)
    raise ConfigError('either a checkpoint or a config is required')

def pairs_from_args(image: str = None, manifest: str = None) -> list:
    """
    ImagePairs of a manifest, or a single unlabeled image (clean counterpart unknown)
    :return: list of (ImagePair or None, degraded array, label, path)
    """
    if manifest:
        data = read_manifest(manifest)
        pairs = [load_pair(data, record) for record in data]
        return [(pair, pair.degraded, pair.label, pair.path) for pair in pairs]
    if image:
        return [(None, read_ppm(image), DegradationLabel(), os.path.basename(image))]
    raise ConfigError('either an image or a manifest is required')

def resolve_manifest(path: str, config_path: str = None) -> str:
    """
    Relative manifest paths are tried as given, then next to the config file
    """
    if path and not os.path.isabs(path) and not os.path.exists(path) and config_path:
        candidate = os.path.join(os.path.dirname(os.path.abspath(config_path)), path)
        if os.path.exists(candidate):
            return candidate
    return path

def restore(model: RestorationNetwork, degraded: np.ndarray, label: DegradationLabel) -> tuple:
    """
    Full-image inference of one [3, H, W] image (call under no_grad)
    :return: (restored array [3, H, W] clipped to [0, 1], list of RoutingStats)
    """
    image = Tensor(degraded[None])
    prior = model.priors(image, [label])
    restored, stats = model(image, prior)
    return np.clip(restored.data[0], 0.0, 1.0), stats

def pair_tensor(pairs: list) -> (Tensor, Tensor, list):
    """
    Stacks ImagePairs into (degraded batch, clean batch, labels)
    """
    degraded = Tensor(np.stack([p.degraded for p in pairs]))
    clean = Tensor(np.stack([p.clean for p in pairs]))
    return degraded, clean, [p.label for p in pairs]

def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
