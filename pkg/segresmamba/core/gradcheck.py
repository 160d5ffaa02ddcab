"""
Central finite-difference oracle of analytic gradients.
"""
import logging

import numpy as np

from ..utils import make_rng
from .tensor import Tensor, backward, no_grad


__all__ = ['gradcheck', 'numeric_grad']

logger = logging.getLogger('segresmamba')


def _objective(fn, weights):
    with no_grad():
        return float((fn().data * weights).sum())


def numeric_grad(fn, tensor, weights, h=1e-5, indices=None):
    """
    Central differences of `sum(fn() * weights)` with respect to the entries
    `indices` (flat, all by default) of `tensor`. Entries are perturbed in
    place and restored.
    """
    flat = tensor.data.reshape(-1)
    if not np.shares_memory(flat, tensor.data):
        raise ValueError('tensor data must be contiguous')
    indices = range(flat.size) if indices is None else indices
    grad = {}
    for i in indices:
        value = flat[i]
        flat[i] = value + h
        plus = _objective(fn, weights)
        flat[i] = value - h
        minus = _objective(fn, weights)
        flat[i] = value
        grad[i] = (plus - minus) / (2 * h)
    return grad


def gradcheck(fn, tensors, h=1e-5, seed=0, max_entries=None, floor=1e-3):
    """
    Return the maximum relative error between the analytic and the numeric
    gradients of `fn` with respect to `tensors`.

    `fn` takes no argument and computes an output from `tensors` (leaf
    tensors requiring gradient). The output is reduced with fixed random
    weights. Per tensor, the error is `max|analytic - numeric|` over
    `max(max|numeric|, floor)`. When `max_entries` is given, only a random
    subset of that many entries per tensor is perturbed.
    """
    rng = make_rng(seed)
    with no_grad():
        shape = fn().shape
    weights = rng.standard_normal(shape)

    for tensor in tensors:
        tensor.zero_grad()
    output = fn()
    backward((output * Tensor(weights)).sum())

    worst = 0.0
    for tensor in tensors:
        analytic = np.zeros(tensor.size) if tensor.grad is None else \
            tensor.grad.reshape(-1).copy()
        indices = None
        if max_entries is not None and tensor.size > max_entries:
            indices = rng.choice(tensor.size, max_entries, replace=False)
        numeric = numeric_grad(fn, tensor, weights, h, indices)
        keys = np.fromiter(numeric.keys(), dtype=int)
        values = np.fromiter(numeric.values(), dtype=float)
        scale = max(np.abs(values).max(), floor)
        error = np.abs(analytic[keys] - values).max() / scale
        logger.debug('gradcheck %s: relative error %.3e', tensor.shape, error)
        worst = max(worst, error)
    return worst
