"""
Mamba-style transformer block: sigmoid-gated channel attention followed by GDFN
"""
from __future__ import annotations

from classes.data_classes import MstConfig
from classes.errors import ShapeError
from engine.tensor_class import Tensor
from engine import ops
from network.param_group import ParamGroup
from network.restormer import init_mdta, mdta_forward, init_gdfn, gdfn_forward

def init_msa(group: ParamGroup, cfg: MstConfig) -> ParamGroup:
    c = cfg.channels
    group.weight('wl1', (c, c))
    group.zeros('bl1', (c,))
    group.weight('wd', (c, 3, 3))
    group.zeros('bd', (c,))
    init_mdta(group.group('mdta'), cfg.mdta)
    group.weight('wl2', (c, c))
    group.zeros('bl2', (c,))
    group.weight('wl3', (c, c))
    group.zeros('bl3', (c,))
    return group

def init_mst(group: ParamGroup, cfg: MstConfig) -> ParamGroup:
    c = cfg.channels
    group.full('ln_gamma', (c,), 1.0)
    group.zeros('ln_beta', (c,))
    init_msa(group.group('msa'), cfg)
    init_gdfn(group.group('gdfn'), cfg.gdfn)
    return group

def _output_gate(x: Tensor, params: ParamGroup) -> Tensor:
    return ops.sigmoid(ops.conv_pointwise(x, params['wl2'], params['bl2']))

def msa_forward(x: Tensor, cfg: MstConfig, params: ParamGroup) -> Tensor:
    """
    Selective state modulation around MDTA

    X1 = MDTA(u * sigmoid(W_d u)) with u = W_l^1 x (the mask gates the attention input),
    MSA(x) = W_l^3(X1 * sigmoid(W_l^2 x))

    :param x: layer-normalised feature map [B, C, H, W]
    :param cfg: MstConfig
    :param params: ParamGroup made by init_msa
    :return: Tensor [B, C, H, W]
    """
    if x.ndim != 4 or x.shape[1] != cfg.channels:
        raise ShapeError(f'MSA expects {cfg.channels} channels, got input {x.shape}')
    projected = ops.conv_pointwise(x, params['wl1'], params['bl1'])
    mask = ops.sigmoid(ops.conv_depthwise3x3(projected, params['wd'], params['bd']))
    attended = mdta_forward(ops.mul(projected, mask), cfg.mdta, params.sub('mdta'))
    gated = ops.mul(attended, _output_gate(x, params))
    return ops.conv_pointwise(gated, params['wl3'], params['bl3'])

def mst_forward(x: Tensor, cfg: MstConfig, params: ParamGroup) -> Tensor:
    """
    y = x + MSA(LN(x)); out = y + GDFN(y)
    :param x: [B, C, H, W]
    :param cfg: MstConfig
    :param params: ParamGroup made by init_mst
    :return: Tensor [B, C, H, W]
    """
    normed = ops.layernorm_channel(x, params['ln_gamma'], params['ln_beta'])
    y = ops.add(x, msa_forward(normed, cfg, params.sub('msa')))
    return ops.add(y, gdfn_forward(y, cfg.gdfn, params.sub('gdfn')))

def gate_map(x: Tensor, params: ParamGroup) -> Tensor:
    """
    Channel mean of the output gate sigmoid(W_l^2 x)
    :param x: layer-normalised feature map [B, C, H, W]
    :param params: ParamGroup made by init_msa
    :return: Tensor [B, 1, H, W] with values in (0, 1)
    """
    return ops.reduce_mean(_output_gate(x, params), axis=1, keepdims=True)

def mst_gate_map(x: Tensor, cfg: MstConfig, params: ParamGroup) -> Tensor:
    """
    gate_map of an MST block evaluated on the block's own input
    """
    if x.ndim != 4 or x.shape[1] != cfg.channels:
        raise ShapeError(f'MST expects {cfg.channels} channels, got input {x.shape}')
    normed = ops.layernorm_channel(x, params['ln_gamma'], params['ln_beta'])
    return gate_map(normed, params.sub('msa'))
