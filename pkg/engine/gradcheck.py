from __future__ import annotations
from typing import Callable, Literal

from engine.tensor_class import Tensor, backward, clear_tape, no_grad, precision

import numpy as np

# step multiples and weights of h * f'(x)
STENCILS = {
    'five_point': ((2.0, 1.0, -1.0, -2.0), (-1.0 / 12.0, 8.0 / 12.0, -8.0 / 12.0, 1.0 / 12.0)),
    'central': ((1.0, -1.0), (0.5, -0.5)),
}

def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-3,
                      stencil: Literal['five_point', 'central'] = 'five_point') -> float:
    """
    Compares the tape gradient of a scalar function with finite differences

    'five_point' (default) evaluates f in float64 with the five-point central
    stencil, truncation error O(h^4), so the result measures the gradient rule
    rather than float32 rounding.
    'central' is the plain (f(x+h) - f(x-h)) / 2h at x's own dtype (float32 for
    network tensors); rounding then dominates and small gradients need care.
    x's dtype, values and requires_grad flag are restored afterwards.

    :param f: function of x returning a scalar Tensor (may close over parameters)
    :param x: the tensor differentiated against, passed to f on every call
    :param h: step size
    :param stencil: 'five_point' or 'central'
    :return: max over coordinates of |analytic - numeric| / (|analytic| + 1e-8)
    """
    if stencil not in STENCILS:
        raise ValueError(f'unknown stencil: {stencil}')
    steps, weights = STENCILS[stencil]
    dtype = np.float64 if stencil == 'five_point' else x.data.dtype

    original_data = x.data
    original_flag = x.requires_grad
    original_grad = x.grad

    try:
        with precision(dtype):
            x.data = original_data.astype(dtype)
            x.requires_grad = True
            x.grad = None

            clear_tape()
            backward(f(x))
            analytic = np.zeros(x.shape, dtype=np.float64) if x.grad is None else x.grad.astype(np.float64)

            numeric = np.zeros(x.shape, dtype=np.float64)
            flat = x.data.reshape(-1)
            numeric_flat = numeric.reshape(-1)
            with no_grad():
                for i in range(flat.size):
                    saved = flat[i]
                    total = 0.0
                    for step, weight in zip(steps, weights):
                        flat[i] = saved + step * h
                        total += weight * f(x).item()
                    flat[i] = saved
                    numeric_flat[i] = total / h
    finally:
        x.data = original_data
        x.requires_grad = original_flag
        x.grad = original_grad
        clear_tape()

    return float(np.max(np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)))
