"""
3D convolution and transposed convolution over `(N, C, D, H, W)` tensors.

The forward convolution gathers sliding windows of the padded input and
contracts them with the weights of each group. Its gradient with respect to
the input scatters the weighted windows back; that scatter is also the
forward rule of the transposed convolution.
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core import Function, Parameter
from ..core.profiler import record_macs
from ..utils import ShapeError, prod, triple
from .module import Module, uniform


__all__ = ['ConvSpec', 'conv3d', 'conv_transpose3d', 'Conv3d',
           'ConvTranspose3d']


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3, 3)
    stride: tuple = (1, 1, 1)
    padding: tuple = (0, 0, 0)
    transposed: bool = False
    output_padding: tuple = (0, 0, 0)
    groups: int = 1

    def __post_init__(self):
        for name in ('kernel', 'stride', 'padding', 'output_padding'):
            object.__setattr__(self, name, triple(getattr(self, name)))
        if min(self.in_channels, self.out_channels, self.groups) < 1 or \
                min(self.kernel + self.stride) < 1:
            raise ValueError('invalid convolution: {}'.format(self))
        if min(self.padding + self.output_padding) < 0:
            raise ValueError('negative padding: {}'.format(self))
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError('channels {}/{} not divisible by {} groups'
                             .format(self.in_channels, self.out_channels,
                                     self.groups))
        if any(self.output_padding):
            if not self.transposed:
                raise ValueError('output padding requires a transposed '
                                 'convolution')
            if any(op >= s for op, s in zip(self.output_padding,
                                            self.stride)):
                raise ValueError('output padding must be smaller than stride')

    @classmethod
    def make(cls, in_channels, out_channels, kernel, stride=1, padding=0,
             **kwargs):
        return cls(in_channels, out_channels, triple(kernel), triple(stride),
                   triple(padding), **kwargs)

    @property
    def weight_shape(self):
        if self.transposed:
            return (self.in_channels, self.out_channels // self.groups) + \
                self.kernel
        return (self.out_channels, self.in_channels // self.groups) + \
            self.kernel

    @property
    def num_parameters(self):
        return prod(self.weight_shape) + self.out_channels

    def output_extents(self, extents):
        """
        Return the output spatial extents for input `extents`. Raise
        ShapeError when an extent would be smaller than 1.
        """
        extents = triple(extents)
        if self.transposed:
            out = tuple((n - 1) * s - 2 * p + k + op for n, s, p, k, op in zip(
                extents, self.stride, self.padding, self.kernel,
                self.output_padding))
        else:
            out = tuple((n + 2 * p - k) // s + 1 if n + 2 * p >= k else 0
                        for n, s, p, k in zip(extents, self.stride,
                                              self.padding, self.kernel))
        if min(extents) < 1 or min(out) < 1:
            raise ShapeError('{} gives output extents {} on input {}'
                             .format(self, out, extents))
        return out

    def macs(self, batch, extents):
        """ Multiply-accumulates of one application on input `extents`. """
        if self.transposed:
            return batch * prod(extents) * self.in_channels * \
                (self.out_channels // self.groups) * prod(self.kernel)
        return batch * prod(self.output_extents(extents)) * \
            self.out_channels * (self.in_channels // self.groups) * \
            prod(self.kernel)


########################################################################
# numpy kernels
########################################################################
def _pad(x, padding):
    if not any(padding):
        return x
    return np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in padding))


def _windows(x, kernel, stride, padding):
    """ (N, C, Od, Oh, Ow, kd, kh, kw) strided view of the padded input. """
    win = sliding_window_view(_pad(x, padding), kernel, axis=(2, 3, 4))
    return win[:, :, ::stride[0], ::stride[1], ::stride[2]]


def _conv_forward(x, weight, stride, padding, groups, kind=None):
    """
    Grouped convolution of `x` by `weight` (O, C/groups, k...). When `kind`
    is given, the multiply-accumulates of each contraction are recorded
    under it.
    """
    win = _windows(x, weight.shape[2:], stride, padding)
    out_ch, cig = weight.shape[:2]
    og = out_ch // groups
    out = np.empty((x.shape[0], out_ch) + win.shape[2:5])
    for g in range(groups):
        cols = win[:, g * cig:(g + 1) * cig]
        res = np.tensordot(cols, weight[g * og:(g + 1) * og],
                           axes=([1, 5, 6, 7], [1, 2, 3, 4]))
        if kind:
            # one product per output element and contracted entry
            record_macs(kind, res.size * prod(weight.shape[1:]))
        out[:, g * og:(g + 1) * og] = np.moveaxis(res, -1, 1)
    return out


def _conv_input_grad(grad, weight, extents, stride, padding, groups,
                     kind=None):
    """
    Scatter `grad` (N, O, ...) through `weight` (O, C/groups, k...) into an
    input of spatial `extents`. When `kind` is given, the multiply-accumulates
    of each contraction are recorded under it.
    """
    out_ch, cig = weight.shape[:2]
    kernel = weight.shape[2:]
    og = out_ch // groups
    n, _, od, oh, ow = grad.shape
    padded = np.zeros((n, cig * groups) + tuple(
        e + 2 * p for e, p in zip(extents, padding)))
    for g in range(groups):
        # (N, Od, Oh, Ow, cig, kd, kh, kw)
        cols = np.tensordot(grad[:, g * og:(g + 1) * og],
                            weight[g * og:(g + 1) * og], axes=([1], [0]))
        if kind:
            record_macs(kind, cols.size * og)
        cols = np.moveaxis(cols, 4, 1)
        target = padded[:, g * cig:(g + 1) * cig]
        for a in range(kernel[0]):
            for b in range(kernel[1]):
                for c in range(kernel[2]):
                    target[:, :,
                           a:a + stride[0] * od:stride[0],
                           b:b + stride[1] * oh:stride[1],
                           c:c + stride[2] * ow:stride[2]] += \
                        cols[..., a, b, c]
    d, h, w = extents
    pd, ph, pw = padding
    return padded[:, :, pd:pd + d, ph:ph + h, pw:pw + w]


def _conv_weight_grad(x, grad, kernel, stride, padding, groups):
    """ Gradient of the weights given input `x` and output gradient. """
    win = _windows(x, kernel, stride, padding)
    win = win[:, :, :grad.shape[2], :grad.shape[3], :grad.shape[4]]
    out_ch = grad.shape[1]
    cig = x.shape[1] // groups
    og = out_ch // groups
    gw = np.empty((out_ch, cig) + tuple(kernel))
    for g in range(groups):
        gw[g * og:(g + 1) * og] = np.tensordot(
            grad[:, g * og:(g + 1) * og], win[:, g * cig:(g + 1) * cig],
            axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    return gw


def _bias_shape(channels):
    return (1, channels, 1, 1, 1)


########################################################################
# Functions
########################################################################
class Conv3dFunction(Function):
    def forward(self, x, weight, bias=None, spec=None):
        if x.ndim != 5 or x.shape[1] != spec.in_channels:
            raise ShapeError('conv3d: input {} does not match {}'.format(
                x.shape, spec))
        if weight.shape != spec.weight_shape:
            raise ShapeError('conv3d: weight {} does not match {}'.format(
                weight.shape, spec.weight_shape))
        spec.output_extents(x.shape[2:])
        self.x, self.weight, self.spec = x, weight, spec
        out = _conv_forward(x, weight, spec.stride, spec.padding,
                            spec.groups, kind='conv')
        if bias is not None:
            out += bias.reshape(_bias_shape(spec.out_channels))
        return out

    def backward(self, grad):
        spec = self.spec
        gx = _conv_input_grad(grad, self.weight, self.x.shape[2:],
                              spec.stride, spec.padding, spec.groups)
        gw = _conv_weight_grad(self.x, grad, spec.kernel, spec.stride,
                               spec.padding, spec.groups)
        if len(self.inputs) > 2:
            return gx, gw, grad.sum(axis=(0, 2, 3, 4))
        return gx, gw


class ConvTranspose3dFunction(Function):
    def forward(self, x, weight, bias=None, spec=None):
        if x.ndim != 5 or x.shape[1] != spec.in_channels:
            raise ShapeError('conv_transpose3d: input {} does not match {}'
                             .format(x.shape, spec))
        if weight.shape != spec.weight_shape:
            raise ShapeError('conv_transpose3d: weight {} does not match {}'
                             .format(weight.shape, spec.weight_shape))
        extents = spec.output_extents(x.shape[2:])
        self.x, self.weight, self.spec = x, weight, spec
        out = _conv_input_grad(x, weight, extents, spec.stride,
                               spec.padding, spec.groups,
                               kind='conv_transpose')
        if bias is not None:
            out += bias.reshape(_bias_shape(spec.out_channels))
        return np.ascontiguousarray(out)

    def backward(self, grad):
        spec = self.spec
        gx = _conv_forward(grad, self.weight, spec.stride, spec.padding,
                           spec.groups)
        gw = _conv_weight_grad(grad, self.x, spec.kernel, spec.stride,
                               spec.padding, spec.groups)
        if len(self.inputs) > 2:
            return gx, gw, grad.sum(axis=(0, 2, 3, 4))
        return gx, gw


def conv3d(x, spec, weight, bias=None):
    if spec.transposed:
        raise ValueError('conv3d requires a forward convolution spec')
    args = (x, weight) if bias is None else (x, weight, bias)
    return Conv3dFunction.apply(*args, spec=spec)


def conv_transpose3d(x, spec, weight, bias=None):
    if not spec.transposed:
        raise ValueError('conv_transpose3d requires a transposed spec')
    args = (x, weight) if bias is None else (x, weight, bias)
    return ConvTranspose3dFunction.apply(*args, spec=spec)


########################################################################
# Modules
########################################################################
class Conv3d(Module):
    """
    Convolution layer. Weights and bias are initialized uniformly in
    `±1/sqrt(fan_in)`.
    """
    def __init__(self, in_channels, out_channels, kernel, stride=1,
                 padding=0, groups=1, bias=True, rng=None):
        super().__init__()
        self.spec = ConvSpec.make(in_channels, out_channels, kernel, stride,
                                  padding, groups=groups)
        rng = rng or np.random.default_rng()
        bound = 1.0 / np.sqrt(prod(self.spec.weight_shape[1:]))
        self.weight = Parameter(uniform(rng, self.spec.weight_shape, bound))
        if bias:
            self.bias = Parameter(uniform(rng, (out_channels,), bound))
        else:
            self.bias = None

    def forward(self, x):
        return conv3d(x, self.spec, self.weight, self.bias)


class ConvTranspose3d(Module):
    def __init__(self, in_channels, out_channels, kernel, stride=1,
                 padding=0, output_padding=0, groups=1, bias=True, rng=None):
        super().__init__()
        self.spec = ConvSpec.make(in_channels, out_channels, kernel, stride,
                                  padding, transposed=True,
                                  output_padding=triple(output_padding),
                                  groups=groups)
        rng = rng or np.random.default_rng()
        # fan in of the equivalent forward convolution
        bound = 1.0 / np.sqrt(self.spec.weight_shape[1] *
                              prod(self.spec.kernel))
        self.weight = Parameter(uniform(rng, self.spec.weight_shape, bound))
        if bias:
            self.bias = Parameter(uniform(rng, (out_channels,), bound))
        else:
            self.bias = None

    def forward(self, x):
        return conv_transpose3d(x, self.spec, self.weight, self.bias)
