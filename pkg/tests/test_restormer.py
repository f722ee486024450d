import numpy as np
import pytest

from classes.data_classes import GdfnConfig, MdtaConfig, MstConfig
from classes.errors import ConfigError, ShapeError
from engine import ops
from engine.gradcheck import finite_diff_check
from engine.tensor_class import Tensor, no_grad
from network.param_group import ParamGroup
from network.restormer import (init_mdta, mdta_forward, channel_cross_attention, init_gdfn, gdfn_forward,
                               init_transformer_block, transformer_forward)

from conftest import scramble, weighted_sum


@pytest.fixture
def mdta(rng):
    cfg = MdtaConfig(channels=4, heads=2)
    params = init_mdta(ParamGroup('mdta', rng), cfg)
    # larger weights than the init so the attention is not uniform
    for parameter in params.named_parameters():
        if parameter.name.endswith(('wq', 'wk', 'wv', 'wo', 'dq', 'dk', 'dv')):
            parameter.tensor.data = rng.standard_normal(parameter.tensor.shape).astype(np.float32) * 0.5
    return cfg, params


class TestMdta:
    def test_heads_must_divide_channels(self):
        with pytest.raises(ConfigError):
            MdtaConfig(channels=6, heads=4)

    def test_attention_rows_sum_to_one(self, mdta, rng):
        cfg, params = mdta
        with no_grad():
            out, attention = mdta_forward(Tensor(rng.standard_normal((2, 4, 4, 4))), cfg, params, return_attention=True)
        assert out.shape == (2, 4, 4, 4)
        assert attention.shape == (2, 2, 2, 2)
        np.testing.assert_allclose(attention.data.sum(axis=-1), 1.0, atol=1e-5)

    def test_gradient_input_and_temperature(self, mdta, grad_rng):
        cfg, params = mdta
        x = Tensor(grad_rng.standard_normal((1, 4, 4, 4)))
        weights = Tensor(grad_rng.standard_normal((1, 4, 4, 4)))
        assert finite_diff_check(lambda t: weighted_sum(mdta_forward(t, cfg, params), weights), x) < 1e-3
        temperature = params['temperature']
        assert finite_diff_check(lambda t: weighted_sum(mdta_forward(x, cfg, params), weights), temperature) < 1e-3

    def test_cross_attention_shapes(self, mdta, rng):
        cfg, params = mdta
        query = Tensor(rng.standard_normal((1, 4, 4, 4)))
        with pytest.raises(ShapeError):
            channel_cross_attention(query, Tensor(np.zeros((1, 4, 2, 2))), cfg, params)
        with pytest.raises(ShapeError):
            mdta_forward(Tensor(np.zeros((1, 3, 4, 4))), cfg, params)

    def test_cross_attention_uses_both_maps(self, mdta, rng):
        cfg, params = mdta
        query = Tensor(rng.standard_normal((1, 4, 4, 4)))
        kv = Tensor(rng.standard_normal((1, 4, 4, 4)))
        with no_grad():
            self_out = channel_cross_attention(query, query, cfg, params).data
            cross_out = channel_cross_attention(query, kv, cfg, params).data
        assert not np.allclose(self_out, cross_out)


class TestGdfn:
    def test_hidden_width(self):
        assert GdfnConfig(channels=8).hidden == 21
        with pytest.raises(ConfigError):
            GdfnConfig(channels=1, expansion=0.1)

    def test_shape_and_gradient(self, grad_rng):
        cfg = GdfnConfig(channels=4, expansion=2.0)
        params = init_gdfn(ParamGroup('gdfn', grad_rng), cfg)
        x = Tensor(grad_rng.standard_normal((1, 4, 4, 4)))
        weights = Tensor(grad_rng.standard_normal((1, 4, 4, 4)))
        with no_grad():
            assert gdfn_forward(x, cfg, params).shape == x.shape
        assert finite_diff_check(lambda t: weighted_sum(gdfn_forward(t, cfg, params), weights), x) < 1e-3
        assert finite_diff_check(lambda t: weighted_sum(gdfn_forward(x, cfg, params), weights), params['w1']) < 1e-3

    def test_rejects_wrong_channels(self, rng):
        cfg = GdfnConfig(channels=4)
        params = init_gdfn(ParamGroup('gdfn', rng), cfg)
        with pytest.raises(ShapeError):
            gdfn_forward(Tensor(np.zeros((1, 2, 4, 4))), cfg, params)


class TestTransformerBlock:
    def test_shape_and_gradient(self, grad_rng):
        cfg = MstConfig(channels=4, heads=2, expansion=2.0)
        params = init_transformer_block(ParamGroup('block', grad_rng), cfg)
        scramble(params, grad_rng)
        x = Tensor(grad_rng.standard_normal((1, 4, 4, 4)))
        weights = Tensor(grad_rng.standard_normal((1, 4, 4, 4)))
        with no_grad():
            assert transformer_forward(x, cfg, params).shape == x.shape
        assert finite_diff_check(lambda t: weighted_sum(transformer_forward(t, cfg, params), weights), x) < 1e-3
        assert finite_diff_check(lambda t: weighted_sum(transformer_forward(x, cfg, params), weights),
                                 params['ln_gamma']) < 1e-3

    def test_rejects_wrong_channels(self, rng):
        cfg = MstConfig(channels=4, heads=2)
        params = init_transformer_block(ParamGroup('block', rng), cfg)
        with pytest.raises(ShapeError):
            transformer_forward(Tensor(np.zeros((1, 8, 4, 4))), cfg, params)


class TestParamGroup:
    def test_names_are_dotted_and_unique(self, rng):
        root = ParamGroup(rng=rng)
        block = root.group('enc0').group('block0')
        block.zeros('w', (2,))
        assert [p.name for p in root.named_parameters()] == ['enc0.block0.w']
        with pytest.raises(ConfigError):
            block.zeros('w', (2,))

    def test_truncated_init(self, rng):
        group = ParamGroup('g', rng)
        w = group.weight('w', (2000,), std=0.02)
        assert np.abs(w.data).max() <= 0.04 + 1e-7
        assert w.requires_grad

    def test_counts_and_zero_grad(self, rng):
        root = ParamGroup(rng=rng)
        root.group('a').zeros('x', (2, 3))
        root.group('b').full('y', (4,), 1.0)
        assert root.parameter_count() == 10
        assert root.sub('a').parameter_count() == 6
        root.sub('b')['y'].grad = np.ones(4, dtype=np.float32)
        root.zero_grad()
        assert root.sub('b')['y'].grad is None
