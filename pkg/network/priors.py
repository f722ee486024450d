"""
Degradation prior providers: an oracle built from the synthesis label and a
small learned encoder, both producing PriorBundle values of identical shape
"""
from __future__ import annotations

from classes.data_classes import PriorProviderConfig
from classes.errors import ConfigError, ShapeError
from classes.image_classes import DegradationLabel
from classes.routing_classes import PriorBundle
from engine.tensor_class import Tensor
from engine import ops
from network.param_group import ParamGroup

from functools import lru_cache
import numpy as np

ENCODER_WIDTH = 16
MIN_PRIOR_SIZE = 16

@lru_cache(maxsize=8)
def _embedding_table(seed: int, rows: int, width: int) -> np.ndarray:
    table = np.random.default_rng(seed).standard_normal((rows, width)) / np.sqrt(width)
    table.setflags(write=False)
    return table

def oracle_similarity(label: DegradationLabel, cfg: PriorProviderConfig) -> np.ndarray:
    """
    Intensities over cfg.kinds normalised to the simplex
    Present kinds with all-zero intensity share the mass uniformly, a clean label is uniform over all kinds.
    :return: array [d_s]
    """
    unknown = [kind for kind in label.kinds if kind not in cfg.kinds]
    if unknown:
        raise ConfigError(f'degradation kinds {unknown} are not configured for the prior ({list(cfg.kinds)})')
    if label.is_clean:
        return np.full(cfg.d_s, 1.0 / cfg.d_s)
    values = np.array([label.intensities.get(kind, 0.0) for kind in cfg.kinds], dtype=np.float64)
    if values.sum() == 0:
        values = np.array([1.0 if kind in label.intensities else 0.0 for kind in cfg.kinds])
    return values / values.sum()

def oracle_prior(label: DegradationLabel, cfg: PriorProviderConfig) -> PriorBundle:
    """
    Idealised prior of one image: descriptor similarity from the label and
    features from a seeded embedding table summed over the present kinds
    :param label: DegradationLabel of the image
    :param cfg: PriorProviderConfig
    :return: PriorBundle with one row
    """
    similarity = oracle_similarity(label, cfg)
    table = _embedding_table(cfg.seed, cfg.d_s, cfg.d_f)
    present = np.array([kind in label.intensities for kind in cfg.kinds])
    features = table[present].sum(axis=0) if present.any() else np.zeros(cfg.d_f)
    return PriorBundle(Tensor(features[None, :]), Tensor(similarity[None, :]))

def init_learned_prior(group: ParamGroup, cfg: PriorProviderConfig, width: int = ENCODER_WIDTH) -> ParamGroup:
    group.weight('conv1', (width, 3, 3, 3))
    group.zeros('bias1', (width,))
    group.weight('conv2', (width, width, 3, 3))
    group.zeros('bias2', (width,))
    group.weight('conv3', (width, width, 3, 3))
    group.zeros('bias3', (width,))
    group.weight('wf', (cfg.d_f, width))
    group.zeros('bf', (cfg.d_f,))
    group.weight('ws', (cfg.d_s, width))
    group.zeros('bs', (cfg.d_s,))
    return group

def learned_prior(image: Tensor, params: ParamGroup, cfg: PriorProviderConfig) -> PriorBundle:
    """
    Three stride-2 3x3 convolutions with gelu, global average pooling, then a
    feature head (d_f) and a softmaxed descriptor head (d_s)
    :param image: [B, 3, H, W] with H, W >= 16
    :param params: ParamGroup made by init_learned_prior
    :param cfg: PriorProviderConfig
    :return: PriorBundle with B rows
    """
    if image.ndim != 4 or image.shape[1] != 3:
        raise ShapeError(f'learned prior expects [B,3,H,W] images, got {image.shape}')
    if min(image.shape[2:]) < MIN_PRIOR_SIZE:
        raise ShapeError(f'learned prior needs H, W >= {MIN_PRIOR_SIZE}, got {image.shape}')

    x = image
    for layer in ('1', '2', '3'):
        x = ops.gelu(ops.conv2d(x, params[f'conv{layer}'], params[f'bias{layer}'], stride=2))
    pooled = ops.reduce_mean(x, axis=(2, 3))  # [B, width]

    features = ops.add(ops.matmul(pooled, ops.swap_last(params['wf'])), params['bf'])
    logits = ops.add(ops.matmul(pooled, ops.swap_last(params['ws'])), params['bs'])
    return PriorBundle(features, ops.softmax_axis(logits, axis=1))

def prior_cross_entropy(bundle: PriorBundle, labels: list, cfg: PriorProviderConfig) -> Tensor:
    """
    Auxiliary loss -mean_b sum_s t_bs log p_bs between the predicted similarity
    and the oracle similarity of each label
    :param bundle: PriorBundle from learned_prior
    :param labels: one DegradationLabel per batch row
    :param cfg: PriorProviderConfig
    :return: scalar Tensor
    """
    if len(labels) != bundle.similarity.shape[0]:
        raise ShapeError(f'{len(labels)} labels for a prior batch of {bundle.similarity.shape[0]}')
    targets = np.stack([oracle_similarity(label, cfg) for label in labels])
    log_p = ops.unary_map(ops.add(bundle.similarity, 1e-12), 'log')
    return ops.mul(ops.reduce_mean(ops.reduce_sum(ops.mul(log_p, targets), axis=1)), -1.0)

def stack_priors(bundles: list) -> PriorBundle:
    """
    Concatenates PriorBundle rows into one batch
    """
    if not bundles:
        raise ShapeError('stack_priors needs at least one bundle')
    return PriorBundle(ops.concat([b.features for b in bundles], axis=0),
                       ops.concat([b.similarity for b in bundles], axis=0))

def provide_priors(images: Tensor, labels: list, cfg: PriorProviderConfig, params: ParamGroup = None) -> PriorBundle:
    """
    Priors for a batch from whichever provider cfg.mode selects
    :param images: degraded images [B, 3, H, W] (read by the learned provider)
    :param labels: DegradationLabel per image (read by the oracle provider)
    :param cfg: PriorProviderConfig
    :param params: learned-prior ParamGroup, required in learned mode
    :return: PriorBundle with B rows
    """
    if cfg.mode == 'oracle':
        if labels is None or len(labels) != images.shape[0]:
            raise ConfigError('the oracle prior needs one degradation label per image')
        return stack_priors([oracle_prior(label, cfg) for label in labels])
    if params is None:
        raise ConfigError('the learned prior needs encoder parameters')
    return learned_prior(images, params, cfg)
