from __future__ import annotations

from classes.data_classes import ReturnData
from classes.errors import ConfigError
from classes.typed_dictionaries import GateExport
from commands.utils import ensure_dir, pairs_from_args
from engine.tensor_class import Tensor, no_grad
from imaging.image_io import write_pgm
from imaging.synth import corruption_mask
from network.model import RestorationNetwork
from utils.checkpoint import load_checkpoint
from utils.log import log

import numpy as np
import os

def gate_maps(model: RestorationNetwork, degraded: np.ndarray, label) -> dict:
    """
    Output-gate maps of every MST block for one image
    :return: dict block path -> array [h, w] in (0, 1)
    """
    gates = {}
    with no_grad():
        image = Tensor(degraded[None])
        model(image, model.priors(image, [label]), gates=gates)
    return {block: gate.data[0, 0] for block, gate in gates.items()}

def split_means(gate: np.ndarray, mask: np.ndarray) -> (float, float):
    """
    Mean gate over clean and over corrupted pixels (None when a side is empty)
    Only full-resolution maps are compared.
    """
    if gate.shape != mask.shape:
        return None, None
    clean = float(gate[~mask].mean()) if (~mask).any() else None
    corrupted = float(gate[mask].mean()) if mask.any() else None
    return clean, corrupted

def gates_def(checkpoint: str, out: str, image: str = None, manifest: str = None, index: int = 0) -> ReturnData:
    """
    Writes gate_<block>.pgm for every MST block of a checkpoint on one image
    :param checkpoint: checkpoint file
    :param out: output directory
    :param image: PPM image (treated as unlabeled)
    :param manifest: manifest, used with `index` (clean/corrupted split available)
    :param index: record of the manifest
    :return: ReturnData with the list of GateExport as data
    """
    log('gates', 'gates_def', [checkpoint, out, image, manifest, index], log_type='function')
    try:
        model, _ = load_checkpoint(checkpoint)
        items = pairs_from_args(image, manifest)
        if not 0 <= index < len(items):
            raise ConfigError(f'image index {index} outside 0..{len(items) - 1}')
        pair, degraded, label, _ = items[index]
        maps = gate_maps(model, degraded, label)
        if not maps:
            raise ConfigError(f'block_type {model.cfg.block_type} has no output gates')
    except (ValueError, RuntimeError, OSError) as e:
        log('gates', f'gate export failed: {e}', [checkpoint], log_type='error')
        return ReturnData(False, str(e))

    mask = corruption_mask(pair.clean, pair.degraded) if pair is not None else None
    exports = []
    ensure_dir(out)
    for block, gate in maps.items():
        path = os.path.join(out, f'gate_{block}.pgm')
        write_pgm(path, gate)
        clean_mean, corrupted_mean = split_means(gate, mask) if mask is not None else (None, None)
        exports.append(GateExport(block=block, path=path, mean=float(gate.mean()),
                                  clean_mean=clean_mean, corrupted_mean=corrupted_mean))
    return ReturnData(True, f'Wrote {len(exports)} gate maps to {out}', exports)
