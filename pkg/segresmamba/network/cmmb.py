import numpy as np

from ..core import ops
from ..layers import Conv3d, ConvTranspose3d, Module
from ..ssm import ToM
from ..utils import ShapeError


__all__ = ['CMMB']


class CMMB(Module):
    """
    Convolution Mamba Mixed Block, channel and shape preserving:

    ```
    F1 = Conv5 stride 2 (X)        F4 = Conv3 (F3)
    F2 = Conv3 (F1)                F5 = ConvT5 stride 2 (F4)
    F3 = ToM (F2)                  F6 = F5 + X
                 output = ToM (F6)
    ```

    Spatial extents must be even for the transposed convolution to restore
    them exactly.
    """
    def __init__(self, channels, mamba_spec, slice_order='hwd', rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.conv1 = Conv3d(channels, channels, 5, 2, 2, rng=rng)
        self.conv2 = Conv3d(channels, channels, 3, 1, 1, rng=rng)
        self.tom1 = ToM(mamba_spec, slice_order, rng=rng)
        self.conv3 = Conv3d(channels, channels, 3, 1, 1, rng=rng)
        self.conv_t = ConvTranspose3d(channels, channels, 5, 2, 2, 1,
                                      rng=rng)
        self.tom2 = ToM(mamba_spec, slice_order, rng=rng)

    def inner(self, x):
        """ Return F5, the output of the down/up convolution path. """
        return self.conv_t(self.conv3(self.tom1(self.conv2(self.conv1(x)))))

    def forward(self, x):
        if x.ndim != 5 or any(e % 2 for e in x.shape[2:]):
            raise ShapeError('CMMB requires even spatial extents, got {}'
                             .format(x.shape))
        return self.tom2(ops.add(self.inner(x), x))
