import struct
import zlib

import numpy as np
import pytest

from classes.data_classes import ModelConfig, TrainConfig
from classes.errors import CheckpointError, ConfigError
from classes.image_classes import DegradationLabel
from engine.tensor_class import Tensor, no_grad
from network.model import build_model
from utils.checkpoint import save_checkpoint, read_checkpoint, load_checkpoint
from utils.config_file import parse_config_text, split_config, load_config, config_echo

from conftest import TINY_CONFIG_TEXT, TINY_MODEL


@pytest.fixture
def saved(tmp_path, tiny_cfg):
    model = build_model(tiny_cfg, seed=5)
    path = str(tmp_path / 'checkpoint.bin')
    save_checkpoint(path, model, TrainConfig({'steps': 7}))
    return path, model


def rewrite(path, payload):
    with open(path, 'wb') as f:
        f.write(payload + struct.pack('<I', zlib.crc32(payload) & 0xFFFFFFFF))


class TestConfigFile:
    def test_parse(self):
        values = parse_config_text('a = 1\nb = 0.5  # comment\n\n# whole line\nc = x,y\nd = true\ne = None\n')
        assert values == {'a': 1, 'b': 0.5, 'c': ['x', 'y'], 'd': True, 'e': None}

    def test_list_keys_always_lists(self):
        assert parse_config_text('prior_kinds = noise')['prior_kinds'] == ['noise']

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match='cfg:2'):
            parse_config_text('a = 1\njust words\n', source='cfg')

    def test_split(self):
        model_cfg, train_cfg = split_config(parse_config_text(TINY_CONFIG_TEXT))
        assert model_cfg.base_channels == 4
        assert model_cfg.prior.d_f == 4
        assert model_cfg.blocks_per_stage == [1, 1, 1, 1]
        assert train_cfg.steps == 2 and train_cfg.manifest == 'data/manifest.txt'
        model_cfg.validate()
        train_cfg.validate()

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match='colour'):
            split_config({'colour': 'red'})

    def test_echo_round_trip(self, tmp_path):
        model_cfg = ModelConfig({**TINY_MODEL, 'prior': {'d_f': 4, 'mode': 'learned', 'kinds': ['noise', 'rain']}})
        train_cfg = TrainConfig({'lr_init': 3e-4, 'eta_min': 1e-6, 'cv_squared': True, 'manifest': 'm.txt'})
        path = tmp_path / 'echo.cfg'
        path.write_text(config_echo(model_cfg, train_cfg))
        model_back, train_back = load_config(str(path))
        assert model_back.to_dict() == model_cfg.to_dict()
        assert train_back.to_dict() == train_cfg.to_dict()


class TestCheckpoint:
    def test_layout(self, saved):
        path, model = saved
        with open(path, 'rb') as f:
            raw = f.read()
        assert raw[:4] == b'RXCK'
        assert struct.unpack('<I', raw[4:8])[0] == 1
        assert struct.unpack('<I', raw[-4:])[0] == zlib.crc32(raw[:-4]) & 0xFFFFFFFF

    def test_read(self, saved):
        path, model = saved
        echo, arrays = read_checkpoint(path)
        assert 'base_channels = 4' in echo.splitlines()
        assert 'steps = 7' in echo.splitlines()
        assert list(arrays) == [p.name for p in model.named_parameters()]
        for parameter in model.named_parameters():
            np.testing.assert_array_equal(arrays[parameter.name], parameter.tensor.data)

    def test_load_reproduces_outputs(self, saved, rng):
        path, model = saved
        loaded, train_cfg = load_checkpoint(path)
        assert train_cfg.steps == 7
        assert loaded.parameter_count() == model.parameter_count()
        image = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        label = [DegradationLabel({'noise': 0.5})]
        with no_grad():
            expected, _ = model(image, model.priors(image, label))
            actual, _ = loaded(image, loaded.priors(image, label))
        np.testing.assert_array_equal(actual.data, expected.data)

    def test_flipped_byte(self, saved):
        path, _ = saved
        with open(path, 'rb') as f:
            raw = bytearray(f.read())
        raw[len(raw) // 2] ^= 0xFF
        with open(path, 'wb') as f:
            f.write(bytes(raw))
        with pytest.raises(CheckpointError, match='checksum'):
            read_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / 'x.bin'
        path.write_bytes(b'NOPE' + bytes(12))
        with pytest.raises(CheckpointError, match='magic'):
            read_checkpoint(str(path))

    def test_version(self, saved):
        path, _ = saved
        with open(path, 'rb') as f:
            payload = bytearray(f.read()[:-4])
        payload[4:8] = struct.pack('<I', 2)
        rewrite(path, bytes(payload))
        with pytest.raises(CheckpointError, match='version'):
            read_checkpoint(path)

    def test_truncated_with_valid_checksum(self, saved):
        path, _ = saved
        with open(path, 'rb') as f:
            payload = f.read()[:-4]
        rewrite(path, payload[:-10])
        with pytest.raises(CheckpointError, match='truncated'):
            read_checkpoint(path)

    def test_echo_mismatch(self, saved, tmp_path):
        path, _ = saved
        with open(path, 'rb') as f:
            payload = f.read()[:-4]
        # same length so the parameter table still parses
        payload = payload.replace(b'experts = 4', b'experts = 3', 1)
        rewrite(path, payload)
        with pytest.raises(CheckpointError, match='parameter names'):
            load_checkpoint(path)
