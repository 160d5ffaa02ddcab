"""
Differentiable operations over `Tensor`.
"""
import numpy as np

from ..utils import ShapeError, prod
from .profiler import record_macs
from .tensor import Function, as_tensor, broadcast_shape


__all__ = ['elementwise', 'add', 'sub', 'mul', 'div', 'neg', 'relu', 'silu',
           'softplus', 'sigmoid', 'exp', 'log', 'identity', 'sum', 'mean',
           'reshape', 'permute', 'flip', 'narrow', 'softmax', 'linear',
           'stable_sigmoid', 'reshape_permute']


def stable_sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


########################################################################
# Elementwise
########################################################################
class Binary(Function):
    def forward(self, a, b):
        broadcast_shape(a.shape, b.shape)
        self.a, self.b = a, b
        return self.compute(a, b)


class Add(Binary):
    def compute(self, a, b):
        return a + b

    def backward(self, g):
        return g, g


class Sub(Binary):
    def compute(self, a, b):
        return a - b

    def backward(self, g):
        return g, -g


class Mul(Binary):
    def compute(self, a, b):
        return a * b

    def backward(self, g):
        return g * self.b, g * self.a


class Div(Binary):
    def compute(self, a, b):
        return a / b

    def backward(self, g):
        return g / self.b, -g * self.a / (self.b * self.b)


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, g):
        return -g


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, g):
        return g * self.mask


class SiLU(Function):
    def forward(self, x):
        self.x, self.sig = x, stable_sigmoid(x)
        return x * self.sig

    def backward(self, g):
        sig = self.sig
        return g * sig * (1.0 + self.x * (1.0 - sig))


class Softplus(Function):
    def forward(self, x):
        self.x = x
        return np.logaddexp(0.0, x)

    def backward(self, g):
        return g * stable_sigmoid(self.x)


class Sigmoid(Function):
    def forward(self, x):
        self.y = stable_sigmoid(x)
        return self.y

    def backward(self, g):
        return g * self.y * (1.0 - self.y)


class Exp(Function):
    def forward(self, x):
        self.y = np.exp(x)
        return self.y

    def backward(self, g):
        return g * self.y


class Log(Function):
    def forward(self, x):
        self.x = x
        return np.log(x)

    def backward(self, g):
        return g / self.x


class Identity(Function):
    def forward(self, x):
        return x.copy()

    def backward(self, g):
        return g


def add(a, b):
    return Add.apply(a, b)


def sub(a, b):
    return Sub.apply(a, b)


def mul(a, b):
    return Mul.apply(a, b)


def div(a, b):
    return Div.apply(a, b)


def neg(x):
    return Neg.apply(x)


def relu(x):
    return ReLU.apply(x)


def silu(x):
    return SiLU.apply(x)


def softplus(x):
    return Softplus.apply(x)


def sigmoid(x):
    return Sigmoid.apply(x)


def exp(x):
    return Exp.apply(x)


def log(x):
    return Log.apply(x)


def identity(x):
    return Identity.apply(x)


unary_ops = {
    'relu': relu, 'silu': silu, 'softplus': softplus, 'sigmoid': sigmoid,
    'exp': exp, 'log': log, 'neg': neg, 'identity': identity,
}
binary_ops = {'add': add, 'sub': sub, 'mul': mul, 'div': div}


def elementwise(op_kind, a, b=None):
    """
    Apply elementwise operation `op_kind` to `a` (and `b` for binary
    operations). Binary operands broadcast along leading axes only.
    """
    if op_kind in binary_ops:
        if b is None:
            raise ValueError('{} requires two operands'.format(op_kind))
        return binary_ops[op_kind](a, b)
    if op_kind in unary_ops:
        if b is not None:
            raise ValueError('{} takes a single operand'.format(op_kind))
        return unary_ops[op_kind](a)
    raise ValueError('unknown elementwise operation: {}'.format(op_kind))


########################################################################
# Reductions
########################################################################
def _axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axis = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(sorted(a % ndim for a in axis))


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape = x.shape
        self.axes = _axes(axis, x.ndim)
        self.keepdims = keepdims
        return np.asarray(x.sum(axis=self.axes, keepdims=keepdims))

    def backward(self, g):
        if not self.keepdims:
            g = np.expand_dims(g, self.axes)
        return np.broadcast_to(g, self.shape).copy()


def sum(x, axis=None, keepdims=False):
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = prod(x.shape[a] for a in _axes(axis, x.ndim))
    return mul(sum(x, axis, keepdims), 1.0 / count)


########################################################################
# Layout
########################################################################
class Reshape(Function):
    def forward(self, x, shape):
        shape = tuple(int(s) for s in shape)
        if -1 not in shape and prod(shape) != x.size:
            raise ShapeError('cannot reshape {} into {}'.format(
                x.shape, shape))
        self.shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError as err:
            raise ShapeError(str(err)) from err

    def backward(self, g):
        return g.reshape(self.shape)


class Permute(Function):
    def forward(self, x, axes):
        axes = tuple(int(a) for a in axes)
        if sorted(axes) != list(range(x.ndim)):
            raise ShapeError('{} is not a permutation of the {} axes'
                             .format(axes, x.ndim))
        self.inverse = tuple(np.argsort(axes))
        return np.ascontiguousarray(x.transpose(axes))

    def backward(self, g):
        return np.ascontiguousarray(g.transpose(self.inverse))


class Flip(Function):
    def forward(self, x, axis):
        self.axis = axis
        return np.ascontiguousarray(np.flip(x, axis))

    def backward(self, g):
        return np.ascontiguousarray(np.flip(g, self.axis))


class Narrow(Function):
    def forward(self, x, axis, start, length):
        axis = axis % x.ndim
        if start < 0 or length < 1 or start + length > x.shape[axis]:
            raise ShapeError('cannot take [{}:{}] of axis {} (extent {})'
                             .format(start, start + length, axis,
                                     x.shape[axis]))
        self.shape = x.shape
        self.index = (slice(None),) * axis + (slice(start, start + length),)
        return np.ascontiguousarray(x[self.index])

    def backward(self, g):
        grad = np.zeros(self.shape)
        grad[self.index] = g
        return grad


def reshape(x, shape):
    return Reshape.apply(x, shape=shape)


def permute(x, axes):
    return Permute.apply(x, axes=axes)


def flip(x, axis):
    return Flip.apply(x, axis=axis)


def narrow(x, axis, start, length):
    """ Slice `length` entries of `axis` from `start`. """
    return Narrow.apply(x, axis=axis, start=start, length=length)


def reshape_permute(t, new_shape=None, axes=None):
    """ Reshape to `new_shape` and/or permute into `axes` order. """
    if new_shape is not None:
        t = reshape(t, new_shape)
    if axes is not None:
        t = permute(t, axes)
    return t


########################################################################
# Composite
########################################################################
class Softmax(Function):
    def forward(self, x, axis=1):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.y = e / e.sum(axis=axis, keepdims=True)
        return self.y

    def backward(self, g):
        y = self.y
        return y * (g - (g * y).sum(axis=self.axis, keepdims=True))


def softmax(x, axis=1):
    return Softmax.apply(x, axis=axis)


class Linear(Function):
    """ `x @ weight.T + bias` over the last axis of `x`. """
    def forward(self, x, weight, bias=None):
        if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
            raise ShapeError('linear: input {} does not match weight {}'
                             .format(x.shape, weight.shape))
        self.x, self.weight = x, weight
        tokens = prod(x.shape[:-1])
        record_macs('linear', tokens * weight.shape[0] * weight.shape[1])
        out = x @ weight.T
        return out + bias if bias is not None else out

    def backward(self, g):
        x2 = self.x.reshape(-1, self.x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        grads = (g @ self.weight, g2.T @ x2)
        if len(self.inputs) > 2:
            grads += (g2.sum(axis=0),)
        return grads


def linear(x, weight, bias=None):
    if bias is None:
        return Linear.apply(x, weight)
    return Linear.apply(x, weight, bias)
