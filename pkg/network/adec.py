"""
Adaptive degradation expert collaboration

Prior fusion (DACP) turns the image-level degradation prior into a position-aware
map, a router scores the specialized experts per pixel, the top K experts plus the
always-on shared expert are mixed, and the mixture is fused back into the decoder
features by channel cross-attention.
"""
from __future__ import annotations

from classes.data_classes import AdecConfig
from classes.errors import ConfigError, ShapeError
from classes.routing_classes import PriorBundle, RoutingDecision, RoutingStats
from engine.tensor_class import Tensor
from engine import ops
from network.param_group import ParamGroup
from network.mst import init_mst, mst_forward
from network.restormer import init_mdta, channel_cross_attention

import numpy as np

# ---------------- Prior fusion ----------------

def init_dacp(group: ParamGroup, cfg: AdecConfig) -> ParamGroup:
    c, t = cfg.channels, cfg.prior_tokens
    group.weight('wp1', (t * c, cfg.prior_dim))
    group.zeros('bp1', (t * c,))
    for branch in ('q', 'k', 'v'):
        group.weight(f'w{branch}', (c, c))
        group.zeros(f'b{branch}', (c,))
    group.weight('wp2', (c, c))
    group.zeros('bp2', (c,))
    return group

def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    # x [.., in] -> [.., out] with w [out, in]
    return ops.add(ops.matmul(x, ops.swap_last(w)), b)

def dacp_forward(prior: PriorBundle, xhat: Tensor, cfg: AdecConfig, params: ParamGroup) -> Tensor:
    """
    Position-aware degradation map P

    P' = [D(I); S(I, text)] is projected to `prior_tokens` tokens of C channels.
    Every pixel of xhat queries those tokens (single head, scaled by 1/sqrt(C))
    and the attended values are projected by W_p^2.

    :param prior: PriorBundle with B rows
    :param xhat: decoder features [B, C, H, W]
    :param cfg: AdecConfig
    :param params: ParamGroup made by init_dacp
    :return: Tensor [B, C, H, W]
    """
    if xhat.ndim != 4 or xhat.shape[1] != cfg.channels:
        raise ShapeError(f'DACP expects {cfg.channels} channels, got input {xhat.shape}')
    vector = prior.vector
    b, c, h, w = xhat.shape
    if vector.shape != (b, cfg.prior_dim):
        raise ShapeError(f'prior vector {vector.shape} does not match batch {b} and prior dim {cfg.prior_dim}')

    tokens = ops.reshape(_linear(vector, params['wp1'], params['bp1']), (b, cfg.prior_tokens, c))
    keys = _linear(tokens, params['wk'], params['bk'])
    values = _linear(tokens, params['wv'], params['bv'])

    queries = ops.conv_pointwise(xhat, params['wq'], params['bq'])
    queries = ops.swap_last(ops.reshape(queries, (b, c, h * w)))  # [B, HW, C]

    scores = ops.mul(ops.matmul(queries, ops.swap_last(keys)), 1.0 / np.sqrt(c))
    attention = ops.softmax_axis(scores, axis=-1)  # [B, HW, T]

    attended = ops.reshape(ops.swap_last(ops.matmul(attention, values)), (b, c, h, w))
    return ops.conv_pointwise(attended, params['wp2'], params['bp2'])

# ---------------- Routing ----------------

def init_router(group: ParamGroup, cfg: AdecConfig) -> ParamGroup:
    c = cfg.channels
    group.full('ln_gamma', (c,), 1.0)
    group.zeros('ln_beta', (c,))
    group.weight('wr', (cfg.experts, 2 * c))
    group.zeros('br', (cfg.experts,))
    return group

def routing_scores(prior_map: Tensor, xhat: Tensor, cfg: AdecConfig, params: ParamGroup) -> Tensor:
    """
    Per-pixel routing probabilities score' = softmax(W_r [P; LN(xhat)])
    :param prior_map: P [B, C, H, W]
    :param xhat: [B, C, H, W]
    :param cfg: AdecConfig
    :param params: ParamGroup made by init_router
    :return: Tensor [B, N, H, W], each pixel on the simplex
    """
    if prior_map.shape != xhat.shape:
        raise ShapeError(f'prior map {prior_map.shape} and features {xhat.shape} differ')
    normed = ops.layernorm_channel(xhat, params['ln_gamma'], params['ln_beta'])
    logits = ops.conv_pointwise(ops.concat([prior_map, normed], axis=1), params['wr'], params['br'])
    return ops.softmax_axis(logits, axis=1)

def select_experts(score: Tensor, top_k: int, shared: bool = True) -> RoutingDecision:
    """
    Keeps the K best specialized experts and the shared expert at every pixel

    The fixed confidence 1 is appended to score' and the extended vector is
    softmaxed; the K+1 largest entries are kept. Ties go to the shared slot,
    then to the lower expert index. Only the kept weights carry gradient.
    Without the shared expert the K best entries of score' are kept as they are.

    :param score: routing probabilities [B, N, H, W]
    :param top_k: K, 1 <= K <= N
    :param shared: add the shared expert
    :return: RoutingDecision with the shared expert in slot 0
    """
    if score.ndim != 4:
        raise ShapeError(f'select_experts expects [B,N,H,W] scores, got {score.shape}')
    experts = score.shape[1]
    if not 1 <= top_k <= experts:
        raise ConfigError(f'top_k ({top_k}) must lie in 1..experts ({experts})')

    b, _, h, w = score.shape
    if not shared:
        ids = np.argsort(-score.data, axis=1, kind='stable')[:, :top_k]
        return RoutingDecision(ids, ops.take_along_axis(score, ids, axis=1), experts, has_shared=False)

    confident = Tensor(np.ones((b, 1, h, w)))
    probs = ops.softmax_axis(ops.concat([score, confident], axis=1), axis=1)

    # shared slot first so the stable sort prefers it on ties, then lower indices
    reorder = np.array([experts] + list(range(experts)))
    order = np.argsort(-probs.data[:, reorder], axis=1, kind='stable')[:, :top_k + 1]
    ids = reorder[order]

    weights = ops.take_along_axis(probs, ids, axis=1)
    return RoutingDecision(ids, weights, experts, has_shared=True)

# ---------------- Experts ----------------

def expert_key(index: int, experts: int) -> str:
    return 'shared' if index == experts else f'expert{index}'

def _expert_indices(cfg: AdecConfig) -> range:
    return range(cfg.experts + 1 if cfg.shared_expert else cfg.experts)

def init_expert_library(group: ParamGroup, cfg: AdecConfig) -> ParamGroup:
    """
    N specialized experts and (unless disabled) the shared expert, each a per-pixel C -> 2C -> C network
    """
    c = cfg.channels
    for index in _expert_indices(cfg):
        expert = group.group(expert_key(index, cfg.experts))
        expert.weight('w1', (2 * c, c))
        expert.zeros('b1', (2 * c,))
        expert.weight('w2', (c, 2 * c))
        expert.zeros('b2', (c,))
    return group

def expert_forward(rows: Tensor, params: ParamGroup) -> Tensor:
    """
    :param rows: pixel channel vectors [P, C]
    :param params: one expert's ParamGroup
    :return: Tensor [P, C]
    """
    hidden = ops.gelu(_linear(rows, params['w1'], params['b1']))
    return _linear(hidden, params['w2'], params['b2'])

def _pixel_rows(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 3, 1)), (b * h * w, c))

def _from_rows(rows: Tensor, shape: tuple) -> Tensor:
    b, c, h, w = shape
    return ops.transpose(ops.reshape(rows, (b, h, w, c)), (0, 3, 1, 2))

def _check_decision(xhat: Tensor, decision: RoutingDecision, cfg: AdecConfig) -> np.ndarray:
    b, _, h, w = xhat.shape
    ids = decision.ids
    if ids.ndim != 4 or ids.shape[0] != b or ids.shape[2:] != (h, w) or decision.weights.shape != ids.shape:
        raise ShapeError(f'routing decision {ids.shape} does not match features {xhat.shape}')
    last = cfg.experts if cfg.shared_expert else cfg.experts - 1
    if decision.experts != cfg.experts or decision.has_shared != cfg.shared_expert or ids.min() < 0 or ids.max() > last:
        raise ConfigError(f'invalid expert index in routing decision (experts={cfg.experts})')
    return np.transpose(ids, (0, 2, 3, 1)).reshape(b * h * w, ids.shape[1])

def aggregate_experts(xhat: Tensor, decision: RoutingDecision, cfg: AdecConfig, params: ParamGroup) -> Tensor:
    """
    X'_ij = sum_k weight_k * E_{id_k}(xhat_ij), evaluating each expert only on the pixels routed to it
    :param xhat: [B, C, H, W]
    :param decision: RoutingDecision from select_experts
    :param cfg: AdecConfig
    :param params: ParamGroup made by init_expert_library
    :return: Tensor [B, C, H, W]
    """
    id_rows = _check_decision(xhat, decision, cfg)
    rows = _pixel_rows(xhat)
    weight_rows = _pixel_rows(decision.weights)
    count = rows.shape[0]

    mixed = None
    for index in _expert_indices(cfg):
        hits = id_rows == index
        pixels = np.nonzero(hits.any(axis=1))[0]
        if not pixels.size:
            continue
        slots = hits[pixels].argmax(axis=1)[:, None]
        weight = ops.take_along_axis(ops.take_rows(weight_rows, pixels), slots, axis=1)
        output = expert_forward(ops.take_rows(rows, pixels), params.sub(expert_key(index, cfg.experts)))
        contribution = ops.scatter_rows(ops.mul(output, weight), pixels, count)
        mixed = contribution if mixed is None else ops.add(mixed, contribution)
    return _from_rows(mixed, xhat.shape)

def aggregate_experts_dense(xhat: Tensor, decision: RoutingDecision, cfg: AdecConfig, params: ParamGroup) -> Tensor:
    """
    Mask-and-sum reference for aggregate_experts: every expert runs on every pixel
    and unselected experts get weight zero
    """
    id_rows = _check_decision(xhat, decision, cfg)
    rows = _pixel_rows(xhat)
    weight_rows = _pixel_rows(decision.weights)

    mixed = None
    for index in _expert_indices(cfg):
        mask = (id_rows == index).astype(weight_rows.data.dtype)
        weight = ops.reduce_sum(ops.mul(weight_rows, mask), axis=1, keepdims=True)
        output = expert_forward(rows, params.sub(expert_key(index, cfg.experts)))
        contribution = ops.mul(output, weight)
        mixed = contribution if mixed is None else ops.add(mixed, contribution)
    return _from_rows(mixed, xhat.shape)

# ---------------- Module ----------------

def init_adec(group: ParamGroup, cfg: AdecConfig) -> ParamGroup:
    c = cfg.channels
    init_dacp(group.group('dacp'), cfg)
    init_router(group.group('router'), cfg)
    init_expert_library(group.group('experts'), cfg)
    group.weight('wd', (c, 3, 3))
    group.zeros('bd', (c,))
    init_mst(group.group('fusion'), cfg.mst)
    init_mdta(group.group('cross'), cfg.mst.mdta)
    return group

def adec_forward(xhat: Tensor, prior: PriorBundle, cfg: AdecConfig, params: ParamGroup) -> tuple:
    """
    Full expert-collaboration pass

    X~ = CA(xhat, MST(dconv(X'))) with X' the routed expert mixture; queries come from
    xhat, keys and values from the fused mixture. cfg.residual adds xhat back.

    :param xhat: decoder features [B, C, H, W]
    :param prior: PriorBundle with B rows
    :param cfg: AdecConfig
    :param params: ParamGroup made by init_adec
    :return: (Tensor [B, C, H, W], RoutingStats)
    """
    prior_map = dacp_forward(prior, xhat, cfg, params.sub('dacp'))
    score = routing_scores(prior_map, xhat, cfg, params.sub('router'))
    decision = select_experts(score, cfg.top_k, cfg.shared_expert)
    mixed = aggregate_experts(xhat, decision, cfg, params.sub('experts'))

    fused = mst_forward(ops.conv_depthwise3x3(mixed, params['wd'], params['bd']), cfg.mst, params.sub('fusion'))
    out = channel_cross_attention(xhat, fused, cfg.mst.mdta, params.sub('cross'))
    if cfg.residual:
        out = ops.add(xhat, out)
    return out, RoutingStats(score, decision.selection_map())
