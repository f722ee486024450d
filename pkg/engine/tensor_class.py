from __future__ import annotations
from typing import Callable, Optional, Sequence, Union

from classes.errors import TapeError, ShapeError

from contextlib import contextmanager
from dataclasses import dataclass
import threading

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence]

_state = threading.local()

def _local():
    """
    Returns the thread-local engine state (tape, recording flag, dtype)
    """
    if not hasattr(_state, 'tape'):
        _state.tape = Tape()
        _state.recording = True
        _state.dtype = np.float32
    return _state

def default_dtype():
    return _local().dtype

@contextmanager
def precision(dtype):
    """
    Tensors created inside this context use `dtype`
    :param dtype: numpy float dtype (np.float32 or np.float64)
    """
    state = _local()
    previous = state.dtype
    state.dtype = dtype
    try:
        yield
    finally:
        state.dtype = previous

@contextmanager
def no_grad():
    """
    Operations inside this context are not recorded on the tape
    """
    state = _local()
    previous = state.recording
    state.recording = False
    try:
        yield
    finally:
        state.recording = previous

def is_recording() -> bool:
    return _local().recording


class Tensor:
    """
    Dense row-major tensor with an optional gradient buffer

    :param data: array-like values, converted to the current default dtype
    :param requires_grad: whether gradients are accumulated into this tensor
    :param name: optional label used in error messages
    """
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str = None):
        # 0-d stays 0-d (np.ascontiguousarray returns shape (1,))
        self.data: np.ndarray = np.require(np.asarray(data, dtype=default_dtype()), requirements='C')
        self.grad: Optional[np.ndarray] = None
        self.requires_grad: bool = requires_grad
        self.name: Optional[str] = name
        self.is_leaf: bool = True

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f'item() needs a single element tensor, got shape {self.shape}')
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def accumulate(self, grad: np.ndarray):
        if grad.shape != self.data.shape:
            raise ShapeError(f'gradient shape {grad.shape} does not match tensor shape {self.shape}')
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def __repr__(self):
        label = f' {self.name}' if self.name else ''
        return f'Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})'

    # operators delegate to engine.ops (imported lazily, ops imports this module)

    def __add__(self, other):
        from engine import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from engine import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from engine import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from engine import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from engine import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from engine import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from engine import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from engine import ops
        return ops.div(other, self)

    def __neg__(self):
        from engine import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from engine import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from engine import ops
        return ops.reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from engine import ops
        return ops.reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from engine import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from engine import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class Parameter:
    """
    Named learnable tensor
    :param name: dotted path unique within a model (e.g. enc.stage0.block1.msa.wl1)
    :param tensor: Tensor with requires_grad set
    """
    name: str
    tensor: Tensor


class Node:
    """
    One recorded operation
    :param inputs: tensors the operation read
    :param outputs: tensors the operation produced
    :param rule: maps output gradients to input gradients (None where not needed)
    :param op: operation name, for diagnostics
    """
    __slots__ = ('inputs', 'outputs', 'rule', 'op')

    def __init__(self, inputs: Sequence[Tensor], outputs: Sequence[Tensor], rule: Callable, op: str):
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        self.rule = rule
        self.op = op


class Tape:
    """
    Ordered list of recorded nodes, appended in execution (topological) order
    """
    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def append(self, node: Node):
        self.nodes.append(node)

    def clear(self):
        self.nodes = []


def current_tape() -> Tape:
    return _local().tape

def clear_tape():
    _local().tape.clear()

def record(op: str, inputs: Sequence[Tensor], outputs: Sequence[Tensor], rule: Callable) -> None:
    """
    Records a node when recording is on and any input requires grad
    :param op: operation name
    :param inputs: input tensors
    :param outputs: output tensors (marked requires_grad, non-leaf)
    :param rule: backward rule, list of output grads -> sequence of input grads
    """
    state = _local()
    if not state.recording:
        return
    if not any(t.requires_grad for t in inputs):
        return
    for out in outputs:
        out.requires_grad = True
        out.is_leaf = False
    state.tape.append(Node(inputs, outputs, rule, op))

def backward(loss: Tensor) -> None:
    """
    Replays the tape in reverse, accumulating gradients into every
    requires-grad tensor reachable from `loss`, then clears the tape
    :param loss: scalar Tensor
    :return: None
    """
    if loss.size != 1:
        raise TapeError(f'backward needs a scalar loss, got shape {loss.shape}')
    tape = current_tape()
    if not len(tape):
        raise TapeError('backward called on an empty tape')

    loss.grad = np.ones_like(loss.data)
    try:
        for node in reversed(tape.nodes):
            grads_out = [out.grad for out in node.outputs]
            if all(g is None for g in grads_out):
                continue
            grads_out = [np.zeros_like(out.data) if g is None else g for out, g in zip(node.outputs, grads_out)]
            grads_in = node.rule(grads_out)
            for tensor, grad in zip(node.inputs, grads_in):
                if grad is None or not tensor.requires_grad:
                    continue
                tensor.accumulate(np.asarray(grad, dtype=tensor.data.dtype))
            for out in node.outputs:
                out.grad = None
    finally:
        tape.clear()
