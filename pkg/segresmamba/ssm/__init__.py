from .scan import linear_recurrence, selective_scan, scan_reference, \
    SsmParams, SelectiveSSM
from .mamba import MambaBlockSpec, causal_conv1d, CausalConv1d, MambaBlock
from .tom import SliceOrder, flatten, unflatten, ToM


__all__ = ['linear_recurrence', 'selective_scan', 'scan_reference',
           'SsmParams', 'SelectiveSSM', 'MambaBlockSpec', 'causal_conv1d',
           'CausalConv1d', 'MambaBlock', 'SliceOrder', 'flatten', 'unflatten',
           'ToM']
