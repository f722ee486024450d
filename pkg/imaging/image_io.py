"""
Binary PPM (P6) and PGM (P5) files, 8 bit, maxval 255
"""
from __future__ import annotations

from classes.errors import ImageFormatError, ShapeError

import numpy as np
import os

def _tokens(raw: bytes, count: int) -> (list, int):
    """
    Reads `count` whitespace separated header tokens, skipping # comments
    :return: (tokens, offset of the single whitespace byte after the last token)
    """
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise ImageFormatError('truncated header')
        if raw[pos:pos + 1] == b'#':
            end = raw.find(b'\n', pos)
            if end < 0:
                raise ImageFormatError('unterminated header comment')
            pos = end + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode('ascii', errors='replace'))
    if pos >= len(raw):
        raise ImageFormatError('missing whitespace after header')
    return tokens, pos

def _read(path: str, magic: str, channels: int) -> np.ndarray:
    with open(path, 'rb') as f:
        raw = f.read()
    tokens, pos = _tokens(raw, 4)
    if tokens[0] != magic:
        raise ImageFormatError(f'{path}: expected {magic} file, found magic {tokens[0]!r}')
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError(f'{path}: malformed header {tokens}')
    if width < 1 or height < 1 or maxval != 255:
        raise ImageFormatError(f'{path}: unsupported size {width}x{height} or maxval {maxval}')
    payload = raw[pos + 1:]
    expected = width * height * channels
    if len(payload) < expected:
        raise ImageFormatError(f'{path}: truncated payload ({len(payload)} of {expected} bytes)')
    pixels = np.frombuffer(payload[:expected], dtype=np.uint8).reshape(height, width, channels)
    return (np.transpose(pixels, (2, 0, 1)) / 255.0).astype(np.float32)

def _write(path: str, img: np.ndarray, magic: str, channels: int):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != channels:
        raise ShapeError(f'{magic} images are [{channels},H,W], got {img.shape}')
    _, height, width = img.shape
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(f'{magic}\n{width} {height}\n255\n'.encode('ascii'))
        f.write(np.ascontiguousarray(np.transpose(pixels, (1, 2, 0))).tobytes())

def read_ppm(path: str) -> np.ndarray:
    """
    :return: float32 [3, H, W] in [0, 1]
    """
    return _read(path, 'P6', 3)

def write_ppm(path: str, img: np.ndarray) -> None:
    _write(path, img, 'P6', 3)

def read_pgm(path: str) -> np.ndarray:
    """
    :return: float32 [1, H, W] in [0, 1]
    """
    return _read(path, 'P5', 1)

def write_pgm(path: str, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[None]
    _write(path, img, 'P5', 1)
