"""
Tri-oriented Mamba: three Mamba blocks over the forward, reversed and
inter-slice flattenings of a `(N, C, D, H, W)` feature volume, summed back in
volume layout.
"""
from concurrent.futures import ThreadPoolExecutor
import enum

import numpy as np

from .. import settings
from ..core import is_grad_enabled, ops, set_grad_enabled
from ..layers import Module, ModuleList
from ..utils import ShapeError
from .mamba import MambaBlock


__all__ = ['SliceOrder', 'flatten', 'unflatten', 'ToM']


class SliceOrder(enum.Enum):
    """
    Token order of the inter-slice branch, slowest axis first: the depth
    (slice) axis varies fastest.
    """
    HWD = 'hwd'
    WHD = 'whd'


# volume axes (N, C, D, H, W) -> token layout (N, *spatial, C)
ORDERS = {
    'forward': (0, 2, 3, 4, 1),
    SliceOrder.HWD: (0, 3, 4, 2, 1),
    SliceOrder.WHD: (0, 4, 3, 2, 1),
}


def flatten(x, order='forward'):
    """ Flatten volume `x` into `(N, D*H*W, C)` tokens in `order`. """
    if x.ndim != 5:
        raise ShapeError('expected a (N, C, D, H, W) volume, got {}'
                         .format(x.shape))
    n, c = x.shape[:2]
    return ops.reshape(ops.permute(x, ORDERS[order]), (n, -1, c))


def unflatten(tokens, shape, order='forward'):
    """ Inverse of `flatten()` for a volume of `shape`. """
    axes = ORDERS[order]
    permuted = tuple(shape[a] for a in axes)
    return ops.permute(ops.reshape(tokens, permuted), np.argsort(axes))


class ToM(Module):
    """
    Sum of three independent Mamba blocks: `f` over the row-major tokens,
    `r` over the reversed tokens and `s` over the inter-slice tokens. The
    branches may run in a thread pool (`parallel`, defaults to
    `SRM_TOM_PARALLEL`); the sum is always taken in `f + r + s` order.
    """
    branches = ('forward', 'reverse', 'slice')

    def __init__(self, spec, slice_order=SliceOrder.HWD, parallel=None,
                 rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.spec = spec
        self.slice_order = SliceOrder(slice_order)
        self.parallel = settings.SRM_TOM_PARALLEL if parallel is None \
            else parallel
        self.blocks = ModuleList(MambaBlock(spec, rng=rng)
                                 for _ in self.branches)

    def branch(self, index, x):
        block = self.blocks[index]
        if index == 0:
            return unflatten(block(flatten(x)), x.shape)
        if index == 1:
            tokens = ops.flip(flatten(x), 1)
            return unflatten(ops.flip(block(tokens), 1), x.shape)
        return unflatten(block(flatten(x, self.slice_order)), x.shape,
                         self.slice_order)

    def forward(self, x):
        if x.ndim != 5 or x.shape[1] != self.spec.d_model:
            raise ShapeError('ToM: input {} does not have {} channels'
                             .format(x.shape, self.spec.d_model))
        if self.parallel:
            outputs = self._run_parallel(x)
        else:
            outputs = [self.branch(i, x) for i in range(3)]
        f, r, s = outputs
        return ops.add(ops.add(f, r), s)

    def _run_parallel(self, x):
        grad_enabled = is_grad_enabled()

        def run(index):
            with set_grad_enabled(grad_enabled):
                return self.branch(index, x)

        with ThreadPoolExecutor(max_workers=3,
                                thread_name_prefix='tom') as executor:
            return list(executor.map(run, range(3)))
