from dataclasses import dataclass
import math

import numpy as np

from .. import settings
from ..core import Function, Parameter, ops
from ..core.profiler import record_macs
from ..layers import LayerNorm, Linear, Module
from ..layers.module import uniform
from ..utils import ShapeError
from .scan import SelectiveSSM, SsmParams


__all__ = ['MambaBlockSpec', 'causal_conv1d', 'CausalConv1d', 'MambaBlock']


@dataclass(frozen=True)
class MambaBlockSpec:
    """
    Mamba block over `d_model` channels: the inner width is
    `expand * d_model`, the causal convolution is depthwise over it.
    """
    d_model: int
    expand: int = 2
    d_state: int = 16
    d_conv: int = 4
    dt_rank: int = None
    epsilon: float = 1e-5
    norm: bool = True

    def __post_init__(self):
        if min(self.d_model, self.expand, self.d_state, self.d_conv) < 1:
            raise ValueError('invalid Mamba block: {}'.format(self))
        if not self.epsilon > 0:
            raise ValueError('epsilon must be positive')

    @classmethod
    def from_defaults(cls, d_model, **kwargs):
        defaults = settings.SRM_MODEL_DEFAULTS
        kwargs.setdefault('expand', defaults['expand'])
        kwargs.setdefault('d_state', defaults['d_state'])
        kwargs.setdefault('d_conv', defaults['d_conv'])
        kwargs.setdefault('dt_rank', defaults['dt_rank'])
        kwargs.setdefault('epsilon', settings.SRM_NORM_EPSILON)
        return cls(d_model, **kwargs)

    @property
    def d_inner(self):
        return self.expand * self.d_model

    @property
    def ssm(self):
        # the step rank follows the model width, not the inner width
        rank = self.dt_rank or math.ceil(self.d_model / 16)
        return SsmParams(self.d_inner, self.d_state, rank)

    @property
    def num_parameters(self):
        d, di = self.d_model, self.d_inner
        norm = 2 * d if self.norm else 0
        # in_proj, depthwise conv (with bias), selective scan, out_proj
        return norm + d * 2 * di + di * self.d_conv + di + \
            self.ssm.num_parameters + di * d


class CausalConv1dFunction(Function):
    """
    Depthwise causal convolution of `(B, L, C)` sequences:
    `y_t = sum_k w[:, k] * x_{t - K + 1 + k} + b`.
    """
    def forward(self, x, weight, bias):
        _, length, channels = x.shape
        if weight.shape[0] != channels:
            raise ShapeError('causal conv: {} channels, weight {}'.format(
                channels, weight.shape))
        kernel = weight.shape[1]
        self.padded = np.pad(x, ((0, 0), (kernel - 1, 0), (0, 0)))
        self.weight, self.length = weight, length
        out = np.broadcast_to(bias, x.shape).copy()
        for k in range(kernel):
            term = self.padded[:, k:k + length] * weight[:, k]
            record_macs('causal_conv', term.size)
            out += term
        return out

    def backward(self, grad):
        kernel, length = self.weight.shape[1], self.length
        gpad = np.zeros_like(self.padded)
        gw = np.empty_like(self.weight)
        for k in range(kernel):
            gpad[:, k:k + length] += grad * self.weight[:, k]
            gw[:, k] = (grad * self.padded[:, k:k + length]).sum(axis=(0, 1))
        return gpad[:, kernel - 1:], gw, grad.sum(axis=(0, 1))


def causal_conv1d(x, weight, bias):
    return CausalConv1dFunction.apply(x, weight, bias)


class CausalConv1d(Module):
    def __init__(self, channels, kernel, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        bound = 1.0 / np.sqrt(kernel)
        self.weight = Parameter(uniform(rng, (channels, kernel), bound))
        self.bias = Parameter(uniform(rng, (channels,), bound))

    def forward(self, x):
        return causal_conv1d(x, self.weight, self.bias)


class MambaBlock(Module):
    """
    Mamba block over `(B, L, d_model)` tokens: optional LayerNorm, input
    projection to the `x` and gate `z` streams, causal depthwise convolution
    and SiLU on `x`, selective scan, gating by `silu(z)` and output
    projection.
    """
    def __init__(self, spec, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.spec = spec
        if spec.norm:
            self.norm = LayerNorm(spec.d_model, spec.epsilon)
        else:
            self.norm = None
        self.in_proj = Linear(spec.d_model, 2 * spec.d_inner, bias=False,
                              rng=rng)
        self.conv = CausalConv1d(spec.d_inner, spec.d_conv, rng=rng)
        self.ssm = SelectiveSSM(spec.ssm, rng=rng)
        self.out_proj = Linear(spec.d_inner, spec.d_model, bias=False,
                               rng=rng)

    def forward(self, z):
        unbatched = z.ndim == 2
        if unbatched:
            z = ops.reshape(z, (1,) + z.shape)
        if z.shape[-1] != self.spec.d_model:
            raise ShapeError('mamba block: {} channels, expected {}'.format(
                z.shape[-1], self.spec.d_model))

        di = self.spec.d_inner
        xz = self.in_proj(self.norm(z) if self.norm is not None else z)
        x = ops.silu(self.conv(ops.narrow(xz, -1, 0, di)))
        gate = ops.silu(ops.narrow(xz, -1, di, di))
        y = self.out_proj(ops.mul(self.ssm(x), gate))
        return ops.reshape(y, y.shape[1:]) if unbatched else y
