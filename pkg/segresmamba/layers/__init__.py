from .module import Module, ModuleList
from .conv import ConvSpec, conv3d, conv_transpose3d, Conv3d, ConvTranspose3d
from .norm import NormSpec, normalize, GroupNorm, InstanceNorm, LayerNorm
from .blocks import Linear, interpolation_matrix, upsample_trilinear, \
    MlpSkip, ResidualBlock


__all__ = ['Module', 'ModuleList', 'ConvSpec', 'conv3d', 'conv_transpose3d',
           'Conv3d', 'ConvTranspose3d', 'NormSpec', 'normalize', 'GroupNorm',
           'InstanceNorm', 'LayerNorm', 'Linear', 'interpolation_matrix',
           'upsample_trilinear', 'MlpSkip', 'ResidualBlock']
