"""
Radix-2 decimation-in-time FFT over the two trailing axes
"""
from __future__ import annotations

from engine.tensor_class import Tensor, record
from classes.errors import ShapeError
from utils.checks import is_power_of_two

from functools import lru_cache
import numpy as np

@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    index = np.arange(n)
    reversed_index = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        reversed_index |= ((index >> b) & 1) << (bits - 1 - b)
    return reversed_index

def _fft_last(z: np.ndarray, inverse: bool = False) -> np.ndarray:
    """
    Iterative radix-2 transform along the last axis (unnormalized)
    :param z: complex array, last axis a power of two
    :param inverse: use +i twiddles
    :return: complex array, same shape
    """
    n = z.shape[-1]
    lead = z.shape[:-1]
    z = z[..., _bit_reversal(n)]
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = z.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        z = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return z

def fft2_array(x: np.ndarray) -> np.ndarray:
    """
    2-D DFT over the trailing two axes of a real or complex array
    """
    z = _fft_last(np.asarray(x, dtype=np.complex128))
    z = _fft_last(np.swapaxes(z, -1, -2))
    return np.swapaxes(z, -1, -2)

def ifft2_array(z: np.ndarray) -> np.ndarray:
    """
    Inverse 2-D DFT (normalized by 1/(H*W))
    """
    h, w = z.shape[-2], z.shape[-1]
    y = _fft_last(np.asarray(z, dtype=np.complex128), inverse=True)
    y = _fft_last(np.swapaxes(y, -1, -2), inverse=True)
    return np.swapaxes(y, -1, -2) / (h * w)

def _check_dims(shape: tuple):
    if len(shape) != 4:
        raise ShapeError(f'fft2 expects a [B,C,H,W] tensor, got shape {shape}')
    h, w = shape[-2], shape[-1]
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ShapeError(f'fft2 needs power-of-two spatial dims, got {h}x{w}')

def fft2(x: Tensor) -> (Tensor, Tensor):
    """
    Differentiable 2-D DFT per channel
    :param x: real [B, C, H, W], H and W powers of two
    :return: (re, im), both [B, C, H, W]
    """
    _check_dims(x.shape)
    spectrum = fft2_array(x.data)
    re = Tensor(spectrum.real)
    im = Tensor(spectrum.imag)

    def rule(g):
        # adjoint of x -> (Re Fx, Im Fx) is Re(F^H (g_re + i g_im)) = Re(fft2(conj(g)))
        adjoint = fft2_array(g[0] - 1j * g[1])
        return (adjoint.real,)

    record('fft2', (x,), (re, im), rule)
    return re, im

def ifft2(re: Tensor, im: Tensor) -> (Tensor, Tensor):
    """
    Inverse transform of a (re, im) pair; not differentiable
    :return: (re, im) of the inverse transform
    """
    _check_dims(re.shape)
    z = ifft2_array(re.data + 1j * im.data)
    return Tensor(z.real), Tensor(z.imag)
