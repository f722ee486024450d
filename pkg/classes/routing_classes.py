from __future__ import annotations

from engine.tensor_class import Tensor
from engine import ops

import numpy as np

class PriorBundle:
    """
    Router context: degradation features D(I) and descriptor similarity S(I, text)

    :type features: Tensor
    :type similarity: Tensor

    :param features: [B, d_f]
    :param similarity: [B, d_s], rows on the probability simplex
    """
    def __init__(self, features: Tensor, similarity: Tensor):
        self.features = features
        self.similarity = similarity

    @property
    def vector(self) -> Tensor:
        """
        P' = [D(I); S(I, text)] as [B, d_f + d_s]
        """
        return ops.concat([self.features, self.similarity], axis=1)

class RoutingDecision:
    """
    Per-pixel expert choice

    :param ids: int array [B, K+1, H, W], slot 0 holds the shared expert index N
                ([B, K, H, W] without a shared expert)
    :param weights: Tensor shaped like ids, softmax([score'; 1]) at the selected slots
                    (score' itself without a shared expert)
    :param experts: N, the number of specialized experts
    :param has_shared: whether slot 0 is the shared expert
    """
    def __init__(self, ids: np.ndarray, weights: Tensor, experts: int, has_shared: bool = True):
        self.ids = ids
        self.weights = weights
        self.experts = experts
        self.has_shared = has_shared

    @property
    def shared(self) -> int:
        return self.experts

    @property
    def top_k(self) -> int:
        return self.ids.shape[1] - 1 if self.has_shared else self.ids.shape[1]

    def selection_map(self) -> np.ndarray:
        """
        Binary [B, N, H, W] map of the selected specialized experts (shared excluded)
        """
        b, _, h, w = self.ids.shape
        selected = np.zeros((b, self.experts + 1, h, w), dtype=np.float32)
        np.put_along_axis(selected, self.ids, 1.0, axis=1)
        return selected[:, :self.experts]

def coefficient_of_variation(values: np.ndarray, squared: bool = False) -> float:
    """
    std / mean of a sequence (population std); 0 for an all-zero sequence
    """
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean()
    if mean == 0:
        return 0.0
    cv = values.std() / mean
    return float(cv * cv if squared else cv)

class RoutingStats:
    """
    Balance-loss inputs of one ADEC instance

    :param confidence_map: Tensor [B, N, H, W], the routing probabilities score' (differentiable)
    :param selection_map: array [B, N, H, W] of 0/1 hard selections
    """
    def __init__(self, confidence_map: Tensor, selection_map: np.ndarray):
        self.confidence_map = confidence_map
        self.selection_map = selection_map
        self.expert_confidence: Tensor = ops.reduce_sum(confidence_map, axis=(0, 2, 3))  # W_n
        self.expert_selection: np.ndarray = selection_map.sum(axis=(0, 2, 3), dtype=np.float64)  # S_n

    @property
    def experts(self) -> int:
        return self.selection_map.shape[1]

    def confidence_cv(self) -> float:
        return coefficient_of_variation(self.expert_confidence.data)

    def selection_cv(self) -> float:
        return coefficient_of_variation(self.expert_selection)

class LossReport:
    """
    Scalar loss components of one step

    :param charbonnier: pixel loss
    :param balance: load-balance loss (mean over ADEC instances)
    :param fft: frequency loss
    :param total: weighted sum, charbonnier + lambda1*balance + lambda2*fft
    :param prior: learned-prior cross-entropy, None when no prior loss is trained
    :param objective: the differentiated scalar Tensor (total plus the weighted prior term)
    """
    def __init__(self, charbonnier: float, balance: float, fft: float, total: float,
                 prior: float = None, objective: Tensor = None):
        self.charbonnier = charbonnier
        self.balance = balance
        self.fft = fft
        self.total = total
        self.prior = prior
        self.objective = objective

    def components(self) -> dict:
        values = {'charbonnier': self.charbonnier, 'balance': self.balance, 'fft': self.fft}
        if self.prior is not None:
            values['prior'] = self.prior
        return values

    def to_record(self, step: int) -> str:
        """
        'step charbonnier balance fft total', followed by the prior cross-entropy when it is trained
        """
        record = f'{step} {self.charbonnier:.8g} {self.balance:.8g} {self.fft:.8g} {self.total:.8g}'
        return record if self.prior is None else f'{record} {self.prior:.8g}'
