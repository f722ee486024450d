from pathlib import Path

import numpy as np
import pytest

from classes.data_classes import ModelConfig, TrainConfig
from classes.errors import ConfigError, ShapeError
from classes.image_classes import DegradationLabel
from engine import ops
from engine.tensor_class import Parameter, Tensor, backward, no_grad
from network.losses import total_loss
from network.model import build_model
from network.optim import AdamW, lr_at

from conftest import TINY_MODEL


def labels(n):
    return [DegradationLabel({'noise': 0.5})] * n


class TestConfig:
    @pytest.mark.parametrize('override', [{'stages': 3}, {'blocks_per_stage': [1, 1, 1]}, {'base_channels': 3},
                                          {'heads_per_stage': [1, 1, 3, 2]}, {'top_k': 5}, {'top_k': 0},
                                          {'blocks_per_stage': [1, 0, 1, 1]}, {'prior': {'mode': 'text'}}, {'block_type': 'conv'}])
    def test_rejects(self, override):
        with pytest.raises(ConfigError):
            ModelConfig({**TINY_MODEL, **override}).validate()

    def test_stage_widths(self, tiny_cfg):
        assert [tiny_cfg.stage_channels(s) for s in range(4)] == [4, 8, 16, 32]
        assert tiny_cfg.adec_config(2).prior_dim == 4 + 6

    @pytest.mark.parametrize('override', [{'crop': 48}, {'steps': 5, 'warmup_steps': 10}, {'betas': [0.9, 1.0]},
                                          {'threads': 0}, {'batch': 0}])
    def test_train_rejects(self, override):
        with pytest.raises(ConfigError):
            TrainConfig(override).validate()


class TestNetwork:
    def test_forward_shapes(self, tiny_cfg, rng):
        model = build_model(tiny_cfg, seed=1)
        image = Tensor(rng.uniform(size=(2, 3, 32, 64)))
        gates = {}
        with no_grad():
            out, stats = model(image, model.priors(image, labels(2)), gates=gates)
        assert out.shape == (2, 3, 32, 64)
        assert len(stats) == 3
        assert [s.selection_map.shape[2:] for s in stats] == [(4, 8), (8, 16), (16, 32)]
        for s in stats:
            np.testing.assert_array_equal(s.selection_map.sum(axis=1), tiny_cfg.top_k)
        assert sorted(gates) == sorted(f'{side}{s}.block0' for side in ('enc', 'dec') for s in range(4))
        assert gates['enc0.block0'].shape == (2, 1, 32, 64)

    def test_global_residual(self, tiny_cfg, rng):
        model = build_model(tiny_cfg)
        model.params.sub('head')['w'].data[:] = 0.0
        image = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        with no_grad():
            out, _ = model(image, model.priors(image, labels(1)))
        np.testing.assert_allclose(out.data, image.data, atol=1e-7)

    @pytest.mark.parametrize('shape', [(1, 3, 36, 32), (1, 1, 32, 32), (3, 32, 32)])
    def test_rejects_bad_input(self, tiny_cfg, shape):
        model = build_model(tiny_cfg)
        image = Tensor(np.zeros(shape))
        with pytest.raises(ShapeError):
            model(image, model.priors(Tensor(np.zeros((1, 3, 32, 32))), labels(1)))

    def test_deterministic_init(self, tiny_cfg):
        first, second = build_model(tiny_cfg, seed=3), build_model(tiny_cfg, seed=3)
        assert first.parameter_count() == second.parameter_count() > 0
        for a, b in zip(first.named_parameters(), second.named_parameters()):
            assert a.name == b.name
            np.testing.assert_array_equal(a.tensor.data, b.tensor.data)
        other = build_model(tiny_cfg, seed=4)
        assert not np.array_equal(first.params.sub('stem')['w'].data, other.params.sub('stem')['w'].data)

    def test_default_parameter_count(self):
        # tests/golden/param_count.txt pins the default architecture
        golden = int((Path(__file__).parent / 'golden' / 'param_count.txt').read_text())
        assert build_model(ModelConfig()).parameter_count() == golden

    def test_parameter_groups(self, tiny_cfg):
        names = [p.name for p in build_model(tiny_cfg).named_parameters()]
        assert names[0] == 'stem.w'
        assert 'adec3.router.wr' in names and 'adec1.experts.shared.w1' in names
        assert 'fuse0.w' in names and 'fuse3.w' not in names
        assert 'adec0.router.wr' not in names
        assert not any(name.startswith('prior.') for name in names)

    def test_learned_prior_group(self):
        cfg = ModelConfig({**TINY_MODEL, 'prior': {'d_f': 4, 'mode': 'learned'}}).validate()
        model = build_model(cfg)
        assert model.prior_params is not None
        image = Tensor(np.zeros((1, 3, 32, 32)))
        with no_grad():
            out, _ = model(image, model.priors(image))
        assert out.shape == image.shape

    def test_backward_reaches_every_stage(self, tiny_cfg, rng):
        model = build_model(tiny_cfg)
        image = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        target = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        out, stats = model(image, model.priors(image, labels(1)))
        backward(total_loss(out, target, stats, TrainConfig().loss).objective)
        grads = {p.name: p.tensor.grad for p in model.named_parameters()}
        for name in ('stem.w', 'enc3.block0.msa.wl1', 'down0.w', 'adec2.router.wr', 'adec1.dacp.wp1',
                     'adec3.experts.shared.w2', 'up1.w', 'dec0.block0.gdfn.w1', 'head.b'):
            assert grads[name] is not None and np.any(grads[name] != 0), name
        model.zero_grad()
        assert all(p.tensor.grad is None for p in model.named_parameters())


class TestOptimizer:
    def test_schedule(self):
        tc = TrainConfig({'lr_init': 1e-3, 'eta_min': 1e-5, 'warmup_steps': 4, 'steps': 20})
        assert lr_at(0, tc) == pytest.approx(2.5e-4)
        assert lr_at(3, tc) == pytest.approx(1e-3)
        assert lr_at(4, tc) == pytest.approx(1e-3)
        decay = [lr_at(s, tc) for s in range(4, 20)]
        assert all(a >= b for a, b in zip(decay, decay[1:]))
        assert lr_at(20, tc) == pytest.approx(1e-5)

    def test_without_warmup(self):
        tc = TrainConfig({'lr_init': 1e-3, 'eta_min': 0.0, 'warmup_steps': 0, 'steps': 10})
        assert lr_at(0, tc) == pytest.approx(1e-3)
        assert lr_at(5, tc) == pytest.approx(5e-4)

    def test_adamw_first_step(self):
        tc = TrainConfig({'weight_decay': 0.01})
        weight = Parameter('w', Tensor(np.array([1.0, -2.0]), requires_grad=True))
        idle = Parameter('idle', Tensor(np.array([3.0]), requires_grad=True))
        optimizer = AdamW([weight, idle], tc)
        weight.tensor.grad = np.array([0.5, -4.0], dtype=np.float32)
        optimizer.step(0.1)
        # bias-corrected Adam moves by lr * sign(g) on the first step
        np.testing.assert_allclose(weight.tensor.data, [1.0 * 0.999 - 0.1, -2.0 * 0.999 + 0.1], rtol=1e-5)
        np.testing.assert_array_equal(idle.tensor.data, [3.0])
        optimizer.zero_grad()
        assert weight.tensor.grad is None

    def test_adamw_minimises_quadratic(self):
        tc = TrainConfig({'weight_decay': 0.0})
        x = Tensor(np.array([2.0, -3.0]), requires_grad=True)
        optimizer = AdamW([Parameter('x', x)], tc)
        for step in range(300):
            backward(ops.reduce_sum(ops.unary_map(x, 'square')))
            optimizer.step(0.05 * (1 - step / 300))
            optimizer.zero_grad()
        assert np.abs(x.data).max() < 0.1


class TestVariants:
    @pytest.mark.parametrize('switches', [{'block_type': 'transformer'}, {'shared_expert': False},
                                          {'use_adec': False}, {'adec_residual': True}])
    def test_builds_and_trains_one_step(self, switches, rng):
        cfg = ModelConfig({**TINY_MODEL, **switches}).validate()
        model = build_model(cfg, seed=2)
        image = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        target = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        gates = {}
        out, stats = model(image, model.priors(image, labels(1)), gates=gates)
        assert out.shape == image.shape
        report = total_loss(out, target, stats, TrainConfig().loss)
        assert np.isfinite(report.total)
        backward(report.objective)
        optimizer = AdamW(model.named_parameters(), TrainConfig())
        before = model.params.sub('stem')['w'].data.copy()
        optimizer.step(1e-3)
        assert not np.array_equal(model.params.sub('stem')['w'].data, before)
        optimizer.zero_grad()

        names = [p.name for p in model.named_parameters()]
        if cfg.block_type == 'transformer':
            assert gates == {}
            assert any(n.startswith('enc0.block0.mdta.') for n in names)
            assert not any('.msa.' in n for n in names)
        if not cfg.use_adec:
            assert stats == []
            assert report.balance == 0.0
            assert not any(n.startswith('adec') for n in names)
        else:
            assert len(stats) == 3
        if not cfg.shared_expert:
            assert not any('.experts.shared.' in n for n in names)

    def test_config_file_keys(self):
        cfg = ModelConfig({**TINY_MODEL, 'block_type': 'transformer', 'use_adec': False}).validate()
        echoed = cfg.to_dict()
        assert echoed['block_type'] == 'transformer' and echoed['use_adec'] is False
        assert echoed['shared_expert'] is True and echoed['adec_residual'] is False
