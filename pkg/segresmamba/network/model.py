from collections import namedtuple
import logging

import numpy as np

from ..core import Tensor, no_grad, ops
from ..layers import Conv3d, ConvTranspose3d, GroupNorm, MlpSkip, Module, \
    ModuleList, ResidualBlock, upsample_trilinear
from ..utils import ShapeError, make_rng
from .cmmb import CMMB
from .config import ModelConfig, check_extents


__all__ = ['EncoderOutputs', 'EncoderStage', 'Encoder', 'DecoderStage',
           'Decoder', 'SegResMamba', 'predict']

logger = logging.getLogger('segresmamba')


EncoderOutputs = namedtuple('EncoderOutputs', ['skips', 'bottleneck'])
EncoderOutputs.__doc__ = """
Features of the encoder: `skips` are the three first stage outputs after
their MLP skip, `bottleneck` the output of the fourth stage.
"""


class ConvNormReLU(Module):
    def __init__(self, in_channels, out_channels, kernel, stride, padding,
                 groups, rng=None):
        super().__init__()
        self.conv = Conv3d(in_channels, out_channels, kernel, stride, padding,
                           rng=rng)
        self.norm = GroupNorm(groups, out_channels)

    def forward(self, x):
        return ops.relu(self.norm(self.conv(x)))


class EncoderStage(Module):
    """
    Encoder stage. The first stage downsamples with a 7x7x7 convolution;
    the others refine with a channel preserving 3x3x3 convolution before
    downsampling with a 2x2x2 stride 2 convolution. CMMBs follow.
    """
    def __init__(self, config, index, in_channels, rng=None):
        super().__init__()
        channels = config.stage_channels[index]
        groups = config.norm_groups
        if index == 0:
            self.refine = None
            self.down = ConvNormReLU(in_channels, channels, 7, 2, 3, groups,
                                     rng=rng)
        else:
            self.refine = ConvNormReLU(in_channels, in_channels, 3, 1, 1,
                                       groups, rng=rng)
            self.down = ConvNormReLU(in_channels, channels, 2, 2, 0, groups,
                                     rng=rng)
        spec = config.mamba_spec(channels)
        self.blocks = ModuleList(
            CMMB(channels, spec, config.slice_order, rng=rng)
            for _ in range(config.cmmb_per_stage))

    def forward(self, x):
        if self.refine is not None:
            x = self.refine(x)
        x = self.down(x)
        for block in self.blocks:
            x = block(x)
        return x


class Encoder(Module):
    def __init__(self, config, rng=None):
        super().__init__()
        self.config = config
        channels = (config.in_channels,) + config.stage_channels
        self.stages = ModuleList(
            EncoderStage(config, k, channels[k], rng=rng) for k in range(4))
        self.skips = ModuleList(
            MlpSkip(channels[k + 1], config.mlp_hidden_ratio,
                    config.mlp_activation, config.mlp_norm, rng=rng)
            for k in range(3))

    def forward(self, x):
        check_extents(x.shape[2:], self.config.cmmb_per_stage)
        if x.shape[1] != self.config.in_channels:
            raise ShapeError('encoder: {} input channels, expected {}'.format(
                x.shape[1], self.config.in_channels))
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        skips = [mlp(f) for mlp, f in zip(self.skips, features)]
        return EncoderOutputs(skips, features[3])


class DecoderStage(Module):
    """
    1x1x1 channel reduction, trilinear upsampling, sum with the skip
    features and residual block.
    """
    def __init__(self, config, in_channels, out_channels, rng=None):
        super().__init__()
        self.reduce = Conv3d(in_channels, out_channels, 1, rng=rng)
        self.block = ResidualBlock(out_channels, config.norm_groups,
                                   config.residual_order, rng=rng)

    def forward(self, x, skip):
        x = upsample_trilinear(self.reduce(x), 2)
        if x.shape != skip.shape:
            raise ShapeError('decoder features {} do not match skip {}'
                             .format(x.shape, skip.shape))
        return self.block(ops.add(x, skip))


class Decoder(Module):
    def __init__(self, config, rng=None):
        super().__init__()
        channels = config.stage_channels
        self.stages = ModuleList(
            DecoderStage(config, channels[level + 1], channels[level],
                         rng=rng)
            for level in (2, 1, 0))
        self.head = ConvTranspose3d(channels[0], config.num_classes, 2, 2,
                                    rng=rng)

    def forward(self, enc):
        x = enc.bottleneck
        for stage, skip in zip(self.stages, reversed(enc.skips)):
            x = stage(x, skip)
        return self.head(x)


class SegResMamba(Module):
    """
    Segmentation network: CMMB encoder, MLP skips and lightweight decoder,
    built from a ModelConfig. Parameters are drawn from a generator seeded
    by `seed`.
    """
    def __init__(self, config=None, seed=0):
        super().__init__()
        self.config = config or ModelConfig()
        rng = make_rng(seed)
        self.encoder = Encoder(self.config, rng=rng)
        self.decoder = Decoder(self.config, rng=rng)
        logger.debug('SegResMamba built: %d parameters',
                     self.num_parameters())

    def forward(self, x):
        """ Return logits `(N, num_classes, D, H, W)` of input `x`. """
        if not isinstance(x, Tensor):
            x = Tensor(x)
        return self.decoder(self.encoder(x))


def predict(model, x):
    """
    Return the label volume `(N, D, H, W)` of `x`: argmax of the logits,
    lowest class index on ties. Multi-label configs return the `(N, K, D, H,
    W)` masks of positive logits instead.
    """
    with no_grad():
        logits = model(x).data
    if model.config.multi_label:
        return (logits > 0).astype(np.int32)
    return np.argmax(logits, axis=1).astype(np.int32)
