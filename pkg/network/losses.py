"""
Training objectives: Charbonnier pixel loss, expert load balance, frequency loss
"""
from __future__ import annotations
from typing import Optional, Sequence, Union

from classes.data_classes import LossWeights
from classes.errors import ConfigError, NanLossError, ShapeError
from classes.routing_classes import LossReport, RoutingStats
from engine.tensor_class import Tensor
from engine.fft import fft2
from engine import ops

import numpy as np

def _check_pair(pred: Tensor, target: Tensor, what: str):
    if pred.shape != target.shape:
        raise ShapeError(f'{what}: prediction {pred.shape} and target {target.shape} differ')

def charbonnier(pred: Tensor, target: Tensor, eps: float = 1e-3) -> Tensor:
    """
    mean(sqrt((pred - target)^2 + eps^2)) over every element
    :return: scalar Tensor, >= eps
    """
    _check_pair(pred, target, 'charbonnier')
    residual = ops.sub(pred, target)
    return ops.reduce_mean(ops.unary_map(ops.unary_map(residual, 'square'), 'sqrt_eps', eps=eps))

def _spread(totals, eps: float, squared: bool):
    """
    sigma / (mu^2 + eps) of a Tensor or array of per-expert totals (population sigma)
    """
    if isinstance(totals, Tensor):
        mu = ops.reduce_mean(totals)
        var = ops.reduce_mean(ops.unary_map(ops.sub(totals, mu), 'square'))
        numerator = var if squared else ops.unary_map(var, 'sqrt_eps', eps=0.0)
        return ops.div(numerator, ops.add(ops.unary_map(mu, 'square'), eps))
    totals = np.asarray(totals, dtype=np.float64)
    mu = totals.mean()
    numerator = totals.var() if squared else totals.std()
    return float(numerator / (mu * mu + eps))

def balance_loss(stats: RoutingStats, eps: float = 1e-8, cv_squared: bool = False) -> Tensor:
    """
    Load balance of one expert-collaboration module

    sigma_W / (mu_W^2 + eps) + sigma_S / (mu_S^2 + eps) over the per-expert
    confidence totals W_n and selection counts S_n. Only the W term carries
    gradient; S comes from hard selections.

    :param stats: RoutingStats of the module
    :param eps: denominator epsilon
    :param cv_squared: use variance instead of sigma in both numerators
    :return: scalar Tensor
    """
    if stats.experts < 1:
        raise ConfigError('balance loss needs at least one expert')
    confidence_term = _spread(stats.expert_confidence, eps, cv_squared)
    return ops.add(confidence_term, _spread(stats.expert_selection, eps, cv_squared))

def network_balance_loss(stats: Sequence[RoutingStats], eps: float = 1e-8, cv_squared: bool = False) -> Tensor:
    """
    Mean balance loss over every module of a network (0 without modules)
    """
    if not stats:
        return Tensor(0.0)
    total = None
    for item in stats:
        term = balance_loss(item, eps, cv_squared)
        total = term if total is None else ops.add(total, term)
    return ops.mul(total, 1.0 / len(stats))

def fft_loss(pred: Tensor, target: Tensor) -> Tensor:
    """
    Mean absolute difference of the concatenated [Re; Im] spectra
    :param pred: [B, C, H, W], H and W powers of two
    :param target: same shape
    :return: scalar Tensor
    """
    _check_pair(pred, target, 'fft_loss')
    pred_re, pred_im = fft2(pred)
    target_re, target_im = fft2(target)
    difference = ops.concat([ops.sub(pred_re, target_re), ops.sub(pred_im, target_im)], axis=1)
    return ops.reduce_mean(ops.unary_map(difference, 'abs'))

def total_loss(pred: Tensor, target: Tensor, stats: Union[RoutingStats, Sequence[RoutingStats]],
               weights: LossWeights, prior_loss: Optional[Tensor] = None, prior_weight: float = 0.0) -> LossReport:
    """
    charbonnier + lambda1 * balance + lambda2 * fft

    The reported total is exactly that sum; the objective that is differentiated
    additionally carries prior_weight * prior cross-entropy when a prior loss is given.

    :param pred: restored image [B, 3, H, W]
    :param target: clean image
    :param stats: RoutingStats of one module or a list (averaged)
    :param weights: LossWeights
    :param prior_loss: optional auxiliary prior loss Tensor
    :param prior_weight: its weight
    :return: LossReport whose objective is the differentiated scalar
    """
    if isinstance(stats, RoutingStats):
        stats = [stats]
    pixel = charbonnier(pred, target, weights.charb_eps)
    balance = network_balance_loss(stats, weights.balance_eps, weights.cv_squared)
    frequency = fft_loss(pred, target)

    restoration = ops.add(pixel, ops.add(ops.mul(balance, weights.lambda1), ops.mul(frequency, weights.lambda2)))
    objective, prior_value = restoration, None
    if prior_loss is not None:
        objective = ops.add(restoration, ops.mul(prior_loss, prior_weight))
        prior_value = prior_loss.item()

    return LossReport(pixel.item(), balance.item(), frequency.item(), restoration.item(),
                      prior=prior_value, objective=objective)

def check_finite(report: LossReport, step: int):
    """
    Raises NanLossError naming the first non-finite component
    """
    for component, value in report.components().items():
        if not np.isfinite(value):
            raise NanLossError(component, step)
    if not np.isfinite(report.total):
        raise NanLossError('total', step)
