from dataclasses import dataclass, field
import math

import numpy as np

from ..utils import ShapeError


__all__ = ['OptimState', 'adamw_step', 'AdamW', 'cosine_lr']


@dataclass
class OptimState:
    """ Moments and hyper-parameters of AdamW. """
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kwargs):
        state = cls(**kwargs)
        state.m = [np.zeros(np.shape(p)) for p in params]
        state.v = [np.zeros(np.shape(p)) for p in params]
        return state


def adamw_step(params, grads, state):
    """
    Update `params` (numpy arrays, in place) from `grads` with decoupled
    weight decay and bias-corrected moments; return `state`.

    ```
    p <- p - lr * wd * p
    p <- p - lr * m_hat / (sqrt(v_hat) + eps)
    ```
    """
    if not state.m:
        state.m = [np.zeros(np.shape(p)) for p in params]
        state.v = [np.zeros(np.shape(p)) for p in params]
    if not len(params) == len(grads) == len(state.m):
        raise ShapeError('parameters, gradients and moments differ in count')

    state.step += 1
    beta1, beta2 = state.betas
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if np.shape(g) != np.shape(p) or m.shape != np.shape(p):
            raise ShapeError('gradient {} does not match parameter {}'
                             .format(np.shape(g), np.shape(p)))
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= state.lr * (m / correction1) / \
            (np.sqrt(v / correction2) + state.eps)
    return state


class AdamW:
    """ AdamW over the parameters (tensors) of a module. """
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.0):
        self.params = list(params)
        self.state = OptimState.for_params(
            [p.data for p in self.params], lr=lr, betas=tuple(betas),
            eps=eps, weight_decay=weight_decay)

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = value

    def step(self):
        adamw_step([p.data for p in self.params],
                   [p.grad for p in self.params], self.state)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def cosine_lr(step, total_steps, lr_max, lr_min=0.0):
    """
    Cosine annealing from `lr_max` (step 0) to `lr_min` (step
    `total_steps`).
    """
    if step < 0 or step > total_steps:
        raise ValueError('step {} outside [0, {}]'.format(step, total_steps))
    if total_steps == 0:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * \
        (1.0 + math.cos(math.pi * step / total_steps))
