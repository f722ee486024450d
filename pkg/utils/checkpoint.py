"""
Binary checkpoints (little endian)

magic 'RXCK' | u32 version | u32 echo length, config echo (utf-8 'key = value' text)
| u32 parameter count | per parameter: u32 name length, name, u32 rank, u32 dims..., f32 data
| u32 CRC-32 of every preceding byte
"""
from __future__ import annotations

from classes.errors import CheckpointError, ConfigError
from utils.config_file import config_echo, parse_config_text, split_config
from utils.log import log
import config

import numpy as np
import struct
import zlib

def _u32(value: int) -> bytes:
    return struct.pack('<I', value)

def save_checkpoint(path: str, model, train_cfg=None) -> int:
    """
    Writes every parameter of `model` in registry order
    :param path: output file
    :param model: RestorationNetwork
    :param train_cfg: optional TrainConfig echoed alongside the model config
    :return: number of bytes written
    """
    echo = config_echo(model.cfg, train_cfg).encode('utf-8')
    parameters = model.named_parameters()

    chunks = [config.CHECKPOINT_MAGIC, _u32(config.CHECKPOINT_VERSION), _u32(len(echo)), echo, _u32(len(parameters))]
    for parameter in parameters:
        name = parameter.name.encode('utf-8')
        data = parameter.tensor.data
        chunks.append(_u32(len(name)) + name + _u32(data.ndim) + b''.join(_u32(d) for d in data.shape))
        chunks.append(np.ascontiguousarray(data, dtype='<f4').tobytes())
    payload = b''.join(chunks)

    with open(path, 'wb') as f:
        f.write(payload)
        f.write(_u32(zlib.crc32(payload) & 0xFFFFFFFF))
    log('checkpoint', f'saved {len(parameters)} parameters to {path}', log_type='text')
    return len(payload) + 4

class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.raw):
            raise CheckpointError('checkpoint is truncated')
        chunk = self.raw[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def u32(self) -> int:
        return struct.unpack('<I', self.take(4))[0]

def read_checkpoint(path: str) -> (str, dict):
    """
    Verifies and decodes a checkpoint file
    :return: (config echo text, ordered dict name -> float32 array)
    """
    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < 8 or raw[:4] != config.CHECKPOINT_MAGIC:
        raise CheckpointError(f'{path} is not a checkpoint (bad magic)')
    payload, stored = raw[:-4], struct.unpack('<I', raw[-4:])[0]
    if zlib.crc32(payload) & 0xFFFFFFFF != stored:
        raise CheckpointError(f'{path}: checksum mismatch')

    reader = _Reader(payload)
    reader.take(4)
    version = reader.u32()
    if version != config.CHECKPOINT_VERSION:
        raise CheckpointError(f'{path}: unsupported version {version}')
    echo = reader.take(reader.u32()).decode('utf-8')

    arrays = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode('utf-8')
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(reader.take(4 * count), dtype='<f4').reshape(shape).astype(np.float32)
    if reader.pos != len(payload):
        raise CheckpointError(f'{path}: {len(payload) - reader.pos} trailing bytes')
    return echo, arrays

def load_checkpoint(path: str):
    """
    Rebuilds the network described by the checkpoint's config echo and loads its parameters
    :return: (RestorationNetwork, TrainConfig from the echo)
    """
    from network.model import build_model

    echo, arrays = read_checkpoint(path)
    try:
        model_cfg, train_cfg = split_config(parse_config_text(echo, source=path))
        model = build_model(model_cfg, seed=0)
    except ConfigError as e:
        raise CheckpointError(f'{path}: invalid config echo: {e}')

    parameters = model.named_parameters()
    names = [p.name for p in parameters]
    if names != list(arrays):
        raise CheckpointError(f'{path}: parameter names do not match the configured network')
    for parameter in parameters:
        array = arrays[parameter.name]
        if array.shape != parameter.tensor.shape:
            raise CheckpointError(f'{path}: {parameter.name} has shape {array.shape}, '
                                  f'expected {parameter.tensor.shape}')
        parameter.tensor.data = array.copy()
    log('checkpoint', f'loaded {len(parameters)} parameters from {path}', log_type='text')
    return model, train_cfg
