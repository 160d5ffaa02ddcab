"""
Dense tensors with reverse-mode automatic differentiation.

Operations are `Function` subclasses: `Function.apply()` runs the numpy
forward rule, wraps the results into `Tensor` and, when any input requires
gradient, records the function on its outputs. `backward()` collects the
recorded functions reachable from a scalar loss into a `Graph` and visits them
in reverse recording order.
"""
import contextlib
import itertools
import logging
import threading
import weakref

import numpy as np

from .. import settings
from ..utils import ShapeError, NonFiniteError


__all__ = ['Tensor', 'Parameter', 'Function', 'Graph', 'backward', 'no_grad',
           'set_grad_enabled', 'is_grad_enabled', 'broadcast_shape',
           'unbroadcast', 'as_tensor']

logger = logging.getLogger('segresmamba')

DTYPE = np.float64

_grad_state = threading.local()
_record_index = itertools.count()


def is_grad_enabled():
    return getattr(_grad_state, 'enabled', True)


@contextlib.contextmanager
def set_grad_enabled(enabled):
    """ Enable or disable graph recording in the current thread. """
    previous = is_grad_enabled()
    _grad_state.enabled = bool(enabled)
    try:
        yield
    finally:
        _grad_state.enabled = previous


def no_grad():
    return set_grad_enabled(False)


def check_finite(array, where):
    if settings.SRM_CHECK_FINITE and not np.all(np.isfinite(array)):
        raise NonFiniteError('non-finite value produced by {}'.format(where))


def _strip_leading_ones(shape):
    shape = tuple(shape)
    while shape and shape[0] == 1:
        shape = shape[1:]
    return shape


def broadcast_shape(a, b):
    """
    Return the broadcast of shapes `a` and `b`. Only broadcasting along
    leading axes is allowed: once stripped of its leading singleton axes, the
    smaller shape must be a suffix of the other one.
    """
    a, b = tuple(a), tuple(b)
    if a == b:
        return a
    for long, short in ((a, b), (b, a)):
        if len(short) > len(long):
            continue
        core = _strip_leading_ones(short)
        if not core or long[len(long) - len(core):] == core:
            return long
    raise ShapeError('shapes {} and {} do not broadcast along leading axes'
                     .format(a, b))


def unbroadcast(grad, shape):
    """ Sum `grad` over the leading axes it was broadcast along. """
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    core = _strip_leading_ones(shape)
    lead = grad.ndim - len(core)
    if lead:
        grad = grad.sum(axis=tuple(range(lead)))
    return grad.reshape(shape)


class Tensor:
    """
    N-dimensional value and gradient pair. Values are stored as a row-major
    64-bit float array; tensors are never mutated by operations.
    """
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, copy=True):
        data = np.array(data, dtype=DTYPE, copy=copy) if copy else \
            np.ascontiguousarray(data, dtype=DTYPE)
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.grad = None
        # recording function and output slot
        self._fn = None
        self._slot = 0

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._fn is None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.size == 1 else \
            float(self.data)

    def detach(self):
        return Tensor(self.data, copy=False)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, grad):
        if grad.shape != self.shape:
            raise ShapeError('gradient shape {} does not match {}'
                             .format(grad.shape, self.shape))
        if self.grad is None:
            self.grad = np.array(grad, dtype=DTYPE)
        else:
            self.grad += grad

    def backward(self):
        backward(self)

    def __repr__(self):
        return 'Tensor(shape={}, requires_grad={})'.format(
            self.shape, self.requires_grad)

    def __len__(self):
        return self.shape[0]

    # operators, see `ops`
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and not isinstance(shape[0], int):
            shape = shape[0]
        return ops.reshape(self, shape)

    def permute(self, *axes):
        from . import ops
        if len(axes) == 1 and not isinstance(axes[0], int):
            axes = axes[0]
        return ops.permute(self, axes)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)


class Parameter(Tensor):
    """ Trainable leaf tensor. """
    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class Function:
    """
    Differentiable operation. Subclasses implement `forward()` over numpy
    arrays (returning an array or a tuple of arrays) and `backward()` which
    receives one upstream gradient per output and returns one gradient (or
    None) per input.
    """
    def __init__(self, *inputs):
        self.inputs = inputs
        self.index = -1
        self.outputs = ()
        self.output_shapes = ()

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, *grads):
        raise NotImplementedError

    @property
    def name(self):
        return type(self).__name__

    @classmethod
    def apply(cls, *inputs, **kwargs):
        inputs = tuple(as_tensor(t) for t in inputs)
        fn = cls(*inputs)
        results = fn.forward(*(t.data for t in inputs), **kwargs)
        multiple = isinstance(results, tuple)
        results = results if multiple else (results,)
        for result in results:
            check_finite(result, fn.name)

        record = is_grad_enabled() and any(t.requires_grad for t in inputs)
        outputs = tuple(Tensor(r, requires_grad=record, copy=False)
                        for r in results)
        if record:
            fn.index = next(_record_index)
            fn.output_shapes = tuple(t.shape for t in outputs)
            fn.outputs = tuple(weakref.ref(t) for t in outputs)
            for slot, output in enumerate(outputs):
                output._fn, output._slot = fn, slot
        return outputs if multiple else outputs[0]


class Graph:
    """
    Recorded functions reachable from an output, sorted by recording index:
    every function comes after the functions producing its inputs.
    """
    def __init__(self, functions):
        self.functions = sorted(functions, key=lambda fn: fn.index)

    @classmethod
    def from_output(cls, output):
        seen, stack = {}, [output._fn] if output._fn is not None else []
        while stack:
            fn = stack.pop()
            if id(fn) in seen:
                continue
            seen[id(fn)] = fn
            stack.extend(t._fn for t in fn.inputs if t._fn is not None)
        return cls(seen.values())

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def __reversed__(self):
        return reversed(self.functions)


def backward(loss):
    """
    Populate `.grad` of every tensor requiring gradient reachable from the
    scalar `loss`. The graph is kept: calling it again accumulates gradients.
    """
    if loss.size != 1:
        raise ShapeError('backward requires a scalar loss, got shape {}'
                         .format(loss.shape))
    if not loss.requires_grad:
        raise ValueError('loss does not require gradient')

    seed = np.ones(loss.shape, dtype=DTYPE)
    loss.accumulate_grad(seed)
    if loss._fn is None:
        return

    upstream = {(id(loss._fn), loss._slot): seed}
    for fn in reversed(Graph.from_output(loss)):
        grads = [upstream.pop((id(fn), slot), None)
                 for slot in range(len(fn.output_shapes))]
        if all(g is None for g in grads):
            continue
        grads = [np.zeros(shape, dtype=DTYPE) if g is None else g
                 for g, shape in zip(grads, fn.output_shapes)]

        input_grads = fn.backward(*grads)
        if not isinstance(input_grads, tuple):
            input_grads = (input_grads,)
        for tensor, grad in zip(fn.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            grad = unbroadcast(np.asarray(grad, dtype=DTYPE), tensor.shape)
            check_finite(grad, fn.name + '.backward')
            tensor.accumulate_grad(grad)
            if tensor._fn is not None:
                key = (id(tensor._fn), tensor._slot)
                upstream[key] = grad if key not in upstream else \
                    upstream[key] + grad
