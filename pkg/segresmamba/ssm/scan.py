"""
Selective scan: input-dependent linear state space recurrence

    dA_t = delta_t * A              Abar_t = exp(dA_t)
    h_t = Abar_t * h_{t-1} + delta_t * B_t * u_t
    y_t = C_t . h_t + D * u_t

over `(batch, length, channels)` sequences with a state of width `N` per
channel. The default implementation runs the recurrence by blocks of
`SRM_SCAN_CHUNK` steps: inside a block the states are a lower triangular
decay matrix product, blocks are chained by their last state. The backward
pass runs the same recurrence in reverse on the adjoint states.
"""
from dataclasses import dataclass
import math

import numpy as np

from .. import settings
from ..core import Function, Parameter, ops
from ..core.profiler import record_macs
from ..core.tensor import check_finite
from ..layers import Linear, Module
from ..layers.module import uniform
from ..utils import ShapeError


__all__ = ['linear_recurrence', 'selective_scan', 'scan_reference',
           'SsmParams', 'SelectiveSSM']


def _recurrence_naive(log_a, x):
    h = np.empty_like(x)
    state = np.zeros(x.shape[:1] + x.shape[2:])
    for t in range(x.shape[1]):
        state = np.exp(log_a[:, t]) * state + x[:, t]
        h[:, t] = state
    return h


def _recurrence_blocked(log_a, x, chunk):
    # time on the last axis: (B, d, N, L)
    la = np.moveaxis(log_a, 1, -1)
    xs = np.moveaxis(x, 1, -1)
    length = xs.shape[-1]
    h = np.empty_like(xs)
    carry = np.zeros(xs.shape[:-1])
    for start in range(0, length, chunk):
        stop = min(start + chunk, length)
        size = stop - start
        cum = np.cumsum(la[..., start:stop], axis=-1)
        seg = cum[..., :, None] - cum[..., None, :]
        mask = np.tri(size, dtype=bool)
        decay = np.exp(np.where(mask, seg, -np.inf))
        block = np.einsum('...tj,...j->...t', decay, xs[..., start:stop])
        block += np.exp(cum) * carry[..., None]
        h[..., start:stop] = block
        carry = block[..., -1]
    return np.moveaxis(h, -1, 1)


def linear_recurrence(log_a, x, mode=None, chunk=None):
    """
    Return `h` with `h_t = exp(log_a_t) * h_{t-1} + x_t` along axis 1 of
    `(B, L, ...)` arrays, starting from a zero state.
    """
    mode = mode or settings.SRM_SCAN_MODE
    if mode == 'naive':
        return _recurrence_naive(log_a, x)
    if mode == 'blocked':
        return _recurrence_blocked(log_a, x, chunk or settings.SRM_SCAN_CHUNK)
    raise ValueError('unknown scan mode: {}'.format(mode))


class SelectiveScan(Function):
    def forward(self, u, delta, A, B, C, D, mode=None, chunk=None):
        batch, length, d = u.shape
        n = A.shape[1]
        if delta.shape != u.shape or A.shape != (d, n) or D.shape != (d,) or \
                B.shape != (batch, length, n) or C.shape != B.shape:
            raise ShapeError(
                'selective scan: inconsistent shapes u {}, delta {}, A {}, '
                'B {}, C {}, D {}'.format(u.shape, delta.shape, A.shape,
                                          B.shape, C.shape, D.shape))
        self.mode, self.chunk = mode, chunk
        self.u, self.delta, self.A, self.B, self.C, self.D = \
            u, delta, A, B, C, D

        self.dA = delta[..., None] * A
        db = delta[..., None] * B[:, :, None, :]
        bu = db * u[..., None]
        self.h = linear_recurrence(self.dA, bu, mode, chunk)
        check_finite(self.h, 'selective scan state')
        # delta*A, delta*B, B*u, then per state: exp, Abar*h and C.h
        record_macs('scan', self.dA.size + db.size + bu.size +
                    3 * self.h.size)
        return np.einsum('bldn,bln->bld', self.h, C) + D * u

    def backward(self, gy):
        u, delta, A, B, C, D, h = \
            self.u, self.delta, self.A, self.B, self.C, self.D, self.h

        # adjoint: lam_t = C_t gy_t + Abar_{t+1} lam_{t+1}
        direct = gy[..., None] * C[:, :, None, :]
        shifted = np.zeros_like(self.dA)
        shifted[:, :-1] = self.dA[:, 1:]
        lam = linear_recurrence(shifted[:, ::-1], direct[:, ::-1],
                                self.mode, self.chunk)[:, ::-1]

        h_prev = np.zeros_like(h)
        h_prev[:, 1:] = h[:, :-1]
        g_da = lam * h_prev * np.exp(self.dA)

        # x_t = delta_t * B_t * u_t
        lam_b = np.einsum('bldn,bln->bld', lam, B)
        g_delta = lam_b * u + np.einsum('bldn,dn->bld', g_da, A)
        g_u = lam_b * delta + gy * D
        g_A = np.einsum('bldn,bld->dn', g_da, delta)
        g_B = np.einsum('bldn,bld->bln', lam, delta * u)
        g_C = np.einsum('bld,bldn->bln', gy, h)
        g_D = (gy * u).sum(axis=(0, 1))
        return g_u, g_delta, g_A, g_B, g_C, g_D


def selective_scan(u, delta, A, B, C, D, mode=None, chunk=None):
    """
    Differentiable selective scan. `u`, `delta`: (batch, L, d); `A`: (d, N);
    `B`, `C`: (batch, L, N); `D`: (d,). Unbatched `(L, d)` / `(L, N)` inputs
    are accepted as well.
    """
    unbatched = u.ndim == 2
    if unbatched:
        u, delta, B, C = (ops.reshape(t, (1,) + t.shape)
                          for t in (u, delta, B, C))
    y = SelectiveScan.apply(u, delta, A, B, C, D, mode=mode, chunk=chunk)
    return ops.reshape(y, y.shape[1:]) if unbatched else y


def scan_reference(u, delta, A, B, C, D):
    """
    Step by step recurrence over numpy arrays of `(L, d)` (or batched)
    sequences, returning `(y, h)`.
    """
    unbatched = np.ndim(u) == 2
    if unbatched:
        u, delta, B, C = (np.asarray(t)[None] for t in (u, delta, B, C))
    batch, length, d = u.shape
    h = np.zeros((batch, length, d, A.shape[1]))
    y = np.zeros_like(u, dtype=float)
    state = np.zeros((batch, d, A.shape[1]))
    for t in range(length):
        d_a = delta[:, t, :, None] * A
        a_bar = np.exp(d_a)
        b_bar = delta[:, t, :, None] * B[:, t, None, :]
        drive = b_bar * u[:, t, :, None]
        decayed = a_bar * state
        state = decayed + drive
        readout = state * C[:, t, None, :]
        for term in (d_a, a_bar, b_bar, drive, decayed, readout):
            record_macs('scan', term.size)
        h[:, t] = state
        y[:, t] = readout.sum(axis=-1) + D * u[:, t]
    if unbatched:
        return y[0], h[0]
    return y, h


@dataclass(frozen=True)
class SsmParams:
    """ Widths of the selective scan parameters of `d_model` channels. """
    d_model: int
    d_state: int = 16
    dt_rank: int = None
    dt_min: float = 1e-3
    dt_max: float = 1e-1

    def __post_init__(self):
        if self.d_model < 1 or self.d_state < 1:
            raise ValueError('invalid selective scan widths')
        if self.dt_rank is None:
            object.__setattr__(self, 'dt_rank', math.ceil(self.d_model / 16))
        if self.dt_rank < 1:
            raise ValueError('dt_rank must be positive')

    @property
    def num_parameters(self):
        d, n, r = self.d_model, self.d_state, self.dt_rank
        # x_proj, dt_proj (with bias), A_log, D
        return d * (r + 2 * n) + r * d + d + d * n + d


class SelectiveSSM(Module):
    """
    Selective scan with token-dependent `delta`, `B` and `C`: `x_proj`
    projects tokens to `(dt, B, C)` and `dt_proj` expands `dt` to one step
    per channel. `A = -exp(A_log)` and `D` are per-channel parameters.
    """
    def __init__(self, params, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.params = params
        d, n, r = params.d_model, params.d_state, params.dt_rank
        self.x_proj = Linear(d, r + 2 * n, bias=False, rng=rng)
        self.dt_proj = Linear(r, d, rng=rng)
        self.dt_proj.weight.data[...] = uniform(rng, (d, r), r ** -0.5)
        dt = np.exp(rng.uniform(np.log(params.dt_min), np.log(params.dt_max),
                                size=d))
        # inverse of softplus
        self.dt_proj.bias.data[...] = dt + np.log(-np.expm1(-dt))
        self.A_log = Parameter(np.log(np.tile(np.arange(1, n + 1), (d, 1))))
        self.D = Parameter(np.ones(d))

    def forward(self, u):
        """ `u`: (batch, L, d) -> (batch, L, d). """
        d, n, r = self.params.d_model, self.params.d_state, \
            self.params.dt_rank
        proj = self.x_proj(u)
        dt = ops.narrow(proj, -1, 0, r)
        B = ops.narrow(proj, -1, r, n)
        C = ops.narrow(proj, -1, r + n, n)
        delta = ops.softplus(self.dt_proj(dt))
        A = ops.neg(ops.exp(self.A_log))
        return selective_scan(u, delta, A, B, C, self.D)
