from __future__ import annotations

from classes.data_classes import ReturnData, TrainConfig
from classes.errors import ConfigError, NanLossError
from classes.image_classes import ImagePair
from commands.utils import configs_from_args, ensure_dir, pair_tensor, resolve_manifest
from engine.tensor_class import backward, clear_tape
from imaging.manifest import load_pair, read_manifest
from network.losses import check_finite, total_loss
from network.model import RestorationNetwork, build_model
from network.optim import AdamW, lr_at
from network.priors import prior_cross_entropy
from utils.checkpoint import save_checkpoint
from utils.convert import convert_duration
from utils.log import log, collect_metrics

from concurrent.futures import ThreadPoolExecutor
from time import time
from tqdm import tqdm
import numpy as np
import os
import sys

METRICS_NAME = 'metrics.log'
CHECKPOINT_NAME = 'checkpoint.bin'

def crop_pair(pair: ImagePair, tc: TrainConfig, rng: np.random.Generator) -> ImagePair:
    """
    Random crop with the same flips / rotation applied to both images
    """
    _, h, w = pair.clean.shape
    if h < tc.crop or w < tc.crop:
        raise ConfigError(f'{pair.path}: image {h}x{w} is smaller than the crop {tc.crop}')
    top = rng.integers(0, h - tc.crop + 1)
    left = rng.integers(0, w - tc.crop + 1)
    flip_h, flip_v, turns = rng.random() < 0.5, rng.random() < 0.5, int(rng.integers(0, 4))

    def view(img):
        img = img[:, top:top + tc.crop, left:left + tc.crop]
        if tc.augment_flip and flip_h:
            img = img[:, :, ::-1]
        if tc.augment_flip and flip_v:
            img = img[:, ::-1, :]
        if tc.augment_rotate:
            img = np.rot90(img, k=turns, axes=(1, 2))
        return np.ascontiguousarray(img)

    return ImagePair(view(pair.clean), view(pair.degraded), pair.label, pair.path)

def train_model(model: RestorationNetwork, pairs: list, tc: TrainConfig, out_dir: str, show_progress: bool = True) -> list:
    """
    AdamW on the total loss for tc.steps steps

    Writes one metrics record per step to out_dir/metrics.log and the checkpoint
    every tc.checkpoint_every steps and at the end.

    :param model: RestorationNetwork
    :param pairs: non-empty list of ImagePair
    :param tc: validated TrainConfig
    :param out_dir: output directory
    :param show_progress: show a tqdm bar when stdout is a terminal
    :return: list of LossReport, one per step
    """
    if not pairs:
        raise ConfigError('the training set is empty')
    ensure_dir(out_dir)
    # absolute, collect_metrics re-roots relative paths under the log directory
    metrics_path = os.path.abspath(os.path.join(out_dir, METRICS_NAME))
    checkpoint_path = os.path.join(out_dir, CHECKPOINT_NAME)
    if os.path.exists(metrics_path):
        os.remove(metrics_path)

    rng = np.random.default_rng(tc.seed)
    optimizer = AdamW(model.named_parameters(), tc)
    prior_cfg = model.cfg.prior
    history = []
    start = time()

    bar = tqdm(range(tc.steps), desc='train', disable=not show_progress or not sys.stdout.isatty())
    for step in bar:
        clear_tape()
        batch = [crop_pair(pairs[i], tc, rng) for i in rng.integers(0, len(pairs), size=tc.batch)]
        degraded, clean, labels = pair_tensor(batch)

        prior = model.priors(degraded, labels)
        restored, stats = model(degraded, prior)
        prior_loss = None
        if prior_cfg.mode == 'learned' and tc.prior_aux_weight > 0:
            prior_loss = prior_cross_entropy(prior, labels, prior_cfg)
        report = total_loss(restored, clean, stats, tc.loss, prior_loss, tc.prior_aux_weight)

        try:
            check_finite(report, step)
        except NanLossError:
            clear_tape()
            raise

        backward(report.objective)
        optimizer.step(lr_at(step, tc))
        optimizer.zero_grad()

        report.objective = None
        history.append(report)
        collect_metrics(metrics_path, report.to_record(step))
        bar.set_postfix(total=f'{report.total:.4f}')

        if (step + 1) % tc.checkpoint_every == 0 and step + 1 < tc.steps:
            save_checkpoint(checkpoint_path, model, tc)

    save_checkpoint(checkpoint_path, model, tc)
    log('train', f'{tc.steps} steps in {convert_duration(time() - start)}, final total {history[-1].total:.6g}',
        log_type='text')
    return history

def train_def(config_path: str, out: str, seed: int = None, threads: int = None, manifest: str = None) -> ReturnData:
    """
    Trains a network on a manifest
    :param config_path: 'key = value' config file
    :param out: output directory (metrics.log, checkpoint.bin, log.log)
    :param seed: overrides the config seed
    :param threads: overrides the config thread count (image loading)
    :param manifest: overrides the config manifest path
    :return: ReturnData with the list of LossReport as data
    """
    log('train', 'train_def', [config_path, out, seed, threads, manifest], log_type='function')
    try:
        model_cfg, tc = configs_from_args(config_path, seed, threads)
        manifest_path = resolve_manifest(manifest or tc.manifest, config_path)
        if not manifest_path:
            raise ConfigError('no training manifest given (config key "manifest" or --manifest)')
        data = read_manifest(manifest_path)
        with ThreadPoolExecutor(max_workers=tc.threads) as pool:
            pairs = list(pool.map(lambda record: load_pair(data, record), data.records))

        model = build_model(model_cfg, tc.seed)
        log('train', f'{model.parameter_count()} parameters, {len(pairs)} images', log_type='text')
        history = train_model(model, pairs, tc, out)
    except (ValueError, RuntimeError, OSError) as e:
        log('train', f'training failed: {e}', [config_path], log_type='error')
        return ReturnData(False, str(e))

    message = f'Trained {tc.steps} steps, final total loss {history[-1].total:.6g}'
    return ReturnData(True, message, history)
