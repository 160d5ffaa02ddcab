"""
Group, instance and layer normalization. All of them normalize slices of a
`(N, C, *S)` tensor reshaped to `(N, G, C/G * prod(S))` with the population
variance.
"""
from dataclasses import dataclass

import numpy as np

from .. import settings
from ..core import Function, Parameter, ops
from ..utils import ShapeError
from .module import Module


__all__ = ['NormSpec', 'normalize', 'GroupNorm', 'InstanceNorm', 'LayerNorm']


@dataclass(frozen=True)
class NormSpec:
    kind: str
    channels: int
    num_groups: int = 1
    epsilon: float = 1e-5
    affine: bool = True

    def __post_init__(self):
        if self.kind not in ('group', 'instance', 'layer'):
            raise ValueError('unknown normalization: {}'.format(self.kind))
        if self.kind == 'instance':
            object.__setattr__(self, 'num_groups', self.channels)
        elif self.kind == 'layer':
            object.__setattr__(self, 'num_groups', 1)
        if self.channels < 1 or self.num_groups < 1 or \
                self.channels % self.num_groups:
            raise ValueError('{} channels not divisible by {} groups'.format(
                self.channels, self.num_groups))
        if not self.epsilon > 0:
            raise ValueError('epsilon must be positive')

    @property
    def num_parameters(self):
        return 2 * self.channels if self.affine else 0


class Normalize(Function):
    def forward(self, x, gamma=None, beta=None, groups=1, epsilon=1e-5):
        n, c = x.shape[:2]
        if c % groups:
            raise ShapeError('{} channels not divisible by {} groups'.format(
                c, groups))
        xg = x.reshape(n, groups, -1)
        mean = xg.mean(axis=-1, keepdims=True)
        var = xg.var(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + epsilon)
        self.xhat = ((xg - mean) * self.inv_std).reshape(x.shape)
        self.groups = groups
        if gamma is None:
            return self.xhat
        self.gamma = gamma.reshape((1, c) + (1,) * (x.ndim - 2))
        return self.xhat * self.gamma + beta.reshape(self.gamma.shape)

    def backward(self, grad):
        n, c = grad.shape[:2]
        affine = len(self.inputs) > 1
        gxhat = grad * self.gamma if affine else grad
        gg = gxhat.reshape(n, self.groups, -1)
        xg = self.xhat.reshape(n, self.groups, -1)
        gx = self.inv_std * (gg - gg.mean(axis=-1, keepdims=True) -
                             xg * (gg * xg).mean(axis=-1, keepdims=True))
        gx = gx.reshape(grad.shape)
        if not affine:
            return gx
        axes = (0,) + tuple(range(2, grad.ndim))
        return gx, (grad * self.xhat).sum(axis=axes), grad.sum(axis=axes)


def normalize(x, spec, gamma=None, beta=None):
    """
    Normalize `x` (N, C, *S) per the NormSpec, then apply the affine
    `gamma`/`beta` when given. Pre-affine slices have zero mean and unit
    variance up to epsilon.
    """
    if x.shape[1] != spec.channels:
        raise ShapeError('normalize: {} channels, expected {}'.format(
            x.shape[1], spec.channels))
    args = (x,) if gamma is None else (x, gamma, beta)
    return Normalize.apply(*args, groups=spec.num_groups,
                           epsilon=spec.epsilon)


class _Norm(Module):
    kind = None

    def __init__(self, channels, num_groups=1, epsilon=None, affine=True):
        super().__init__()
        self.spec = NormSpec(self.kind, channels, num_groups,
                             epsilon or settings.SRM_NORM_EPSILON, affine)
        if affine:
            self.weight = Parameter(np.ones(channels))
            self.bias = Parameter(np.zeros(channels))
        else:
            self.weight = self.bias = None

    def forward(self, x):
        return normalize(x, self.spec, self.weight, self.bias)


class GroupNorm(_Norm):
    kind = 'group'

    def __init__(self, num_groups, channels, epsilon=None, affine=True):
        super().__init__(channels, num_groups, epsilon, affine)


class InstanceNorm(_Norm):
    kind = 'instance'

    def __init__(self, channels, epsilon=None, affine=True):
        super().__init__(channels, channels, epsilon, affine)


class LayerNorm(_Norm):
    """ Normalization of the last (channel) axis of `(..., C)` tokens. """
    kind = 'layer'

    def __init__(self, channels, epsilon=None, affine=True):
        super().__init__(channels, 1, epsilon, affine)

    def forward(self, x):
        shape = x.shape
        tokens = ops.reshape(x, (-1, shape[-1]))
        return ops.reshape(super().forward(tokens), shape)
