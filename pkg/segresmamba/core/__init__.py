from .tensor import Tensor, Parameter, Function, Graph, backward, no_grad, \
    set_grad_enabled, is_grad_enabled, broadcast_shape, unbroadcast, \
    as_tensor
from .profiler import MacCounter, record_macs
from .gradcheck import gradcheck, numeric_grad
from . import ops


__all__ = ['Tensor', 'Parameter', 'Function', 'Graph', 'backward', 'no_grad',
           'set_grad_enabled', 'is_grad_enabled', 'broadcast_shape',
           'unbroadcast', 'as_tensor', 'MacCounter', 'record_macs',
           'gradcheck', 'numeric_grad', 'ops']
