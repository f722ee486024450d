"""
U-shaped restoration network: MST encoder/decoder with expert collaboration
modules between the decoder stages and a global residual
"""
from __future__ import annotations
from typing import Optional

from classes.data_classes import ModelConfig
from classes.errors import ShapeError
from classes.routing_classes import PriorBundle
from engine.tensor_class import Tensor
from engine import ops
from network.param_group import ParamGroup
from network.mst import init_mst, mst_forward, mst_gate_map
from network.adec import init_adec, adec_forward
from network.restormer import init_transformer_block, transformer_forward
from network.priors import init_learned_prior, provide_priors

import numpy as np

class RestorationNetwork:
    """
    Parameterised network built by build_model

    :param cfg: validated ModelConfig
    :param params: root ParamGroup holding every parameter
    """
    def __init__(self, cfg: ModelConfig, params: ParamGroup):
        self.cfg = cfg
        self.params = params

    @property
    def adec_stages(self) -> list:
        # between successive decoder stages, deepest first
        if not self.cfg.use_adec:
            return []
        return list(range(self.cfg.stages - 1, 0, -1))

    @property
    def prior_params(self) -> Optional[ParamGroup]:
        return self.params.groups.get('prior')

    def named_parameters(self) -> list:
        return self.params.named_parameters()

    def parameter_count(self) -> int:
        return self.params.parameter_count()

    def zero_grad(self):
        self.params.zero_grad()

    def priors(self, images: Tensor, labels: list = None) -> PriorBundle:
        """
        Prior bundle of a batch from the configured provider
        """
        return provide_priors(images, labels, self.cfg.prior, self.prior_params)

    def _blocks(self, x: Tensor, stage: int, group: ParamGroup, gates: Optional[dict]) -> Tensor:
        mst_cfg = self.cfg.stage_config(stage)
        for index in range(self.cfg.blocks_per_stage[stage]):
            block = group.sub(f'block{index}')
            if self.cfg.block_type == 'transformer':
                x = transformer_forward(x, mst_cfg, block)
                continue
            if gates is not None:
                gates[block.name] = mst_gate_map(x, mst_cfg, block)
            x = mst_forward(x, mst_cfg, block)
        return x

    def forward(self, image: Tensor, prior: PriorBundle, gates: dict = None) -> tuple:
        """
        Restores a batch of images

        :param image: degraded images [B, 3, H, W], H and W divisible by 2^(stages-1)
        :param prior: PriorBundle with B rows
        :param gates: optional dict filled with block path -> gate map [B, 1, h, w]
        :return: (restored Tensor [B, 3, H, W], [RoutingStats per ADEC, deepest first])
        """
        factor = 2 ** (self.cfg.stages - 1)
        if image.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f'the network expects [B,3,H,W] images, got {image.shape}')
        if image.shape[2] % factor or image.shape[3] % factor:
            raise ShapeError(f'image size {image.shape[2:]} is not divisible by {factor}')

        p = self.params
        x = ops.conv2d(image, p.sub('stem')['w'], p.sub('stem')['b'])

        skips = []
        for stage in range(self.cfg.stages):
            x = self._blocks(x, stage, p.sub(f'enc{stage}'), gates)
            skips.append(x)
            if stage < self.cfg.stages - 1:
                x = ops.pixel_unshuffle(ops.conv_pointwise(x, p.sub(f'down{stage}')['w']))

        stats = []
        for stage in range(self.cfg.stages - 1, -1, -1):
            if stage < self.cfg.stages - 1:
                fuse = p.sub(f'fuse{stage}')
                x = ops.conv_pointwise(ops.concat([x, skips[stage]], axis=1), fuse['w'], fuse['b'])
            x = self._blocks(x, stage, p.sub(f'dec{stage}'), gates)
            if stage > 0:
                if self.cfg.use_adec:
                    x, routing = adec_forward(x, prior, self.cfg.adec_config(stage), p.sub(f'adec{stage}'))
                    stats.append(routing)
                x = ops.pixel_shuffle(ops.conv_pointwise(x, p.sub(f'up{stage}')['w']))

        head = p.sub('head')
        return ops.add(image, ops.conv2d(x, head['w'], head['b'])), stats

    __call__ = forward

def build_model(cfg: ModelConfig, seed: int = 0) -> RestorationNetwork:
    """
    Creates every parameter of the network deterministically from `seed`
    :param cfg: ModelConfig (validated here)
    :param seed: initialisation seed
    :return: RestorationNetwork
    """
    cfg.validate()
    root = ParamGroup(rng=np.random.default_rng(seed))
    init_block = init_transformer_block if cfg.block_type == 'transformer' else init_mst

    stem = root.group('stem')
    stem.weight('w', (cfg.base_channels, 3, 3, 3))
    stem.zeros('b', (cfg.base_channels,))

    for stage in range(cfg.stages):
        c = cfg.stage_channels(stage)
        encoder = root.group(f'enc{stage}')
        for index in range(cfg.blocks_per_stage[stage]):
            init_block(encoder.group(f'block{index}'), cfg.stage_config(stage))
        if stage < cfg.stages - 1:
            root.group(f'down{stage}').weight('w', (c // 2, c))

    for stage in range(cfg.stages - 1, -1, -1):
        c = cfg.stage_channels(stage)
        if stage < cfg.stages - 1:
            fuse = root.group(f'fuse{stage}')
            fuse.weight('w', (c, 2 * c))
            fuse.zeros('b', (c,))
        decoder = root.group(f'dec{stage}')
        for index in range(cfg.blocks_per_stage[stage]):
            init_block(decoder.group(f'block{index}'), cfg.stage_config(stage))
        if stage > 0:
            if cfg.use_adec:
                init_adec(root.group(f'adec{stage}'), cfg.adec_config(stage))
            root.group(f'up{stage}').weight('w', (2 * c, c))

    head = root.group('head')
    head.weight('w', (3, cfg.base_channels, 3, 3))
    head.zeros('b', (3,))

    if cfg.prior.mode == 'learned':
        init_learned_prior(root.group('prior'), cfg.prior)
    return RestorationNetwork(cfg, root)
