"""
Transposed (channel) attention and the gated-dconv feed-forward network
"""
from __future__ import annotations

from classes.data_classes import MdtaConfig, GdfnConfig, MstConfig
from classes.errors import ShapeError
from engine.tensor_class import Tensor
from engine import ops
from network.param_group import ParamGroup

def init_mdta(group: ParamGroup, cfg: MdtaConfig) -> ParamGroup:
    """
    Creates the MDTA parameters in `group`
    :param group: ParamGroup to fill
    :param cfg: MdtaConfig
    :return: the same group
    """
    c = cfg.channels
    for branch in ('q', 'k', 'v'):
        group.weight(f'w{branch}', (c, c))
        group.zeros(f'b{branch}', (c,))
        group.weight(f'd{branch}', (c, 3, 3))
    group.full('temperature', (cfg.heads,), cfg.temperature_init)
    group.weight('wo', (c, c))
    group.zeros('bo', (c,))
    return group

def _project(x: Tensor, params: ParamGroup, branch: str) -> Tensor:
    return ops.conv_depthwise3x3(ops.conv_pointwise(x, params[f'w{branch}'], params[f'b{branch}']), params[f'd{branch}'])

def channel_cross_attention(query_map: Tensor, kv_map: Tensor, cfg: MdtaConfig, params: ParamGroup,
                            return_attention: bool = False):
    """
    Multi-head transposed attention with queries from one map and keys/values from another
    :param query_map: [B, C, H, W]
    :param kv_map: [B, C, H, W]
    :param cfg: MdtaConfig
    :param params: ParamGroup made by init_mdta
    :param return_attention: also return the [B, heads, C/heads, C/heads] attention maps
    :return: Tensor [B, C, H, W] (and the attention Tensor)
    """
    if query_map.ndim != 4 or query_map.shape[1] != cfg.channels:
        raise ShapeError(f'attention expects {cfg.channels} channels, got input {query_map.shape}')
    if kv_map.shape != query_map.shape:
        raise ShapeError(f'query map {query_map.shape} and key/value map {kv_map.shape} differ')
    b, c, h, w = query_map.shape
    heads = cfg.heads
    per_head = (b, heads, c // heads, h * w)

    q = ops.l2_normalize(ops.reshape(_project(query_map, params, 'q'), per_head), axis=-1)
    k = ops.l2_normalize(ops.reshape(_project(kv_map, params, 'k'), per_head), axis=-1)
    v = ops.reshape(_project(kv_map, params, 'v'), per_head)

    temperature = ops.reshape(params['temperature'], (1, heads, 1, 1))
    attention = ops.softmax_axis(ops.mul(ops.matmul(q, ops.swap_last(k)), temperature), axis=-1)

    out = ops.reshape(ops.matmul(attention, v), (b, c, h, w))
    out = ops.conv_pointwise(out, params['wo'], params['bo'])
    if return_attention:
        return out, attention
    return out

def mdta_forward(x: Tensor, cfg: MdtaConfig, params: ParamGroup, return_attention: bool = False):
    """
    Self attention across channels (Q, K, V all from x)
    """
    return channel_cross_attention(x, x, cfg, params, return_attention=return_attention)

def init_gdfn(group: ParamGroup, cfg: GdfnConfig) -> ParamGroup:
    c, hidden = cfg.channels, cfg.hidden
    group.full('ln_gamma', (c,), 1.0)
    group.zeros('ln_beta', (c,))
    for branch in ('1', '2'):
        group.weight(f'w{branch}', (hidden, c))
        group.zeros(f'b{branch}', (hidden,))
        group.weight(f'd{branch}', (hidden, 3, 3))
    group.weight('wo', (c, hidden))
    group.zeros('bo', (c,))
    return group

def gdfn_forward(x: Tensor, cfg: GdfnConfig, params: ParamGroup) -> Tensor:
    """
    LN, two expand+dconv branches, gelu(branch1) * branch2, project back
    The caller adds the residual.
    :param x: [B, C, H, W]
    :param cfg: GdfnConfig
    :param params: ParamGroup made by init_gdfn
    :return: Tensor [B, C, H, W]
    """
    if x.ndim != 4 or x.shape[1] != cfg.channels:
        raise ShapeError(f'GDFN expects {cfg.channels} channels, got input {x.shape}')
    normed = ops.layernorm_channel(x, params['ln_gamma'], params['ln_beta'])
    branch1 = ops.conv_depthwise3x3(ops.conv_pointwise(normed, params['w1'], params['b1']), params['d1'])
    branch2 = ops.conv_depthwise3x3(ops.conv_pointwise(normed, params['w2'], params['b2']), params['d2'])
    return ops.conv_pointwise(ops.mul(ops.gelu(branch1), branch2), params['wo'], params['bo'])

def init_transformer_block(group: ParamGroup, cfg: MstConfig) -> ParamGroup:
    c = cfg.channels
    group.full('ln_gamma', (c,), 1.0)
    group.zeros('ln_beta', (c,))
    init_mdta(group.group('mdta'), cfg.mdta)
    init_gdfn(group.group('gdfn'), cfg.gdfn)
    return group

def transformer_forward(x: Tensor, cfg: MstConfig, params: ParamGroup) -> Tensor:
    """
    Plain transformer block, the MST block without its state-space style modulation:
    y = x + MDTA(LN(x)); out = y + GDFN(y)
    """
    if x.ndim != 4 or x.shape[1] != cfg.channels:
        raise ShapeError(f'transformer block expects {cfg.channels} channels, got input {x.shape}')
    normed = ops.layernorm_channel(x, params['ln_gamma'], params['ln_beta'])
    y = ops.add(x, mdta_forward(normed, cfg.mdta, params.sub('mdta')))
    return ops.add(y, gdfn_forward(y, cfg.gdfn, params.sub('gdfn')))
