import numpy as np

from ..core import Function, Parameter, ops
from ..utils import ShapeError
from .conv import Conv3d
from .module import Module, uniform
from .norm import GroupNorm, InstanceNorm


__all__ = ['Linear', 'interpolation_matrix', 'upsample_trilinear',
           'MlpSkip', 'ResidualBlock']


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        bound = 1.0 / np.sqrt(in_features)
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(uniform(rng, (out_features, in_features),
                                        bound))
        self.bias = Parameter(uniform(rng, (out_features,), bound)) \
            if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


########################################################################
# Upsampling
########################################################################
def interpolation_matrix(size_in, size_out):
    """
    Linear interpolation matrix `(size_out, size_in)` with aligned corners:
    output index `i` samples input coordinate `i * (in - 1) / (out - 1)`.
    """
    if size_in < 1 or size_out < 1:
        raise ShapeError('interpolation extents must be positive')
    matrix = np.zeros((size_out, size_in))
    if size_in == 1 or size_out == 1:
        matrix[:, 0] = 1.0
        return matrix
    pos = np.arange(size_out) * (size_in - 1) / (size_out - 1)
    low = np.minimum(np.floor(pos).astype(int), size_in - 2)
    frac = pos - low
    rows = np.arange(size_out)
    matrix[rows, low] += 1.0 - frac
    matrix[rows, low + 1] += frac
    return matrix


class UpsampleTrilinear(Function):
    def forward(self, x, scale=2):
        if x.ndim != 5 or min(x.shape[2:]) < 1:
            raise ShapeError('upsample: invalid input {}'.format(x.shape))
        self.matrices = [interpolation_matrix(n, n * scale)
                         for n in x.shape[2:]]
        return self._apply(x, self.matrices)

    def backward(self, grad):
        return self._apply(grad, [m.T for m in self.matrices])

    @staticmethod
    def _apply(x, matrices):
        for axis, matrix in zip((2, 3, 4), matrices):
            x = np.moveaxis(np.tensordot(matrix, x, axes=([1], [axis])),
                            0, axis)
        return np.ascontiguousarray(x)


def upsample_trilinear(x, scale=2):
    """ Non-trainable trilinear upsampling of `(N, C, D, H, W)` volumes. """
    if not isinstance(scale, (int, np.integer)) or scale < 1:
        raise ValueError('scale must be a positive integer')
    return UpsampleTrilinear.apply(x, scale=int(scale))


########################################################################
# Blocks
########################################################################
class MlpSkip(Module):
    """
    Token-wise MLP on skip features: two 1x1x1 convolutions with an
    activation between them, followed by an instance normalization.
    """
    activations = {'silu': ops.silu, 'relu': ops.relu,
                   'identity': lambda x: x}

    def __init__(self, channels, hidden_ratio=1, activation='silu',
                 norm=True, rng=None):
        super().__init__()
        if activation not in self.activations:
            raise ValueError('unknown activation: {}'.format(activation))
        hidden = int(channels * hidden_ratio)
        if hidden < 1:
            raise ValueError('hidden width must be positive')
        self.fc1 = Conv3d(channels, hidden, 1, rng=rng)
        self.fc2 = Conv3d(hidden, channels, 1, rng=rng)
        self.activation = activation
        self.norm = InstanceNorm(channels) if norm else None

    def forward(self, x):
        x = self.fc2(self.activations[self.activation](self.fc1(x)))
        return self.norm(x) if self.norm is not None else x


class ResidualBlock(Module):
    """
    Two units of GroupNorm, ReLU and 3x3x3 convolution with a skip
    connection. `order` is `pre` (Norm -> ReLU -> Conv) or `post`
    (Conv -> Norm -> ReLU).
    """
    def __init__(self, channels, num_groups=8, order='pre', rng=None):
        super().__init__()
        if order not in ('pre', 'post'):
            raise ValueError('unknown residual order: {}'.format(order))
        self.order = order
        self.norm1 = GroupNorm(num_groups, channels)
        self.conv1 = Conv3d(channels, channels, 3, padding=1, rng=rng)
        self.norm2 = GroupNorm(num_groups, channels)
        self.conv2 = Conv3d(channels, channels, 3, padding=1, rng=rng)

    def unit(self, x, norm, conv):
        if self.order == 'pre':
            return conv(ops.relu(norm(x)))
        return ops.relu(norm(conv(x)))

    def forward(self, x):
        y = self.unit(x, self.norm1, self.conv1)
        y = self.unit(y, self.norm2, self.conv2)
        return ops.add(x, y)
