"""
Declarative description of the network: `ModelConfig` holds the architecture
choices, `layer_plan()` lists every layer it implies (with the shapes met on
a given input) in execution order. Both the executable model and the cost
analyzer are built from them; layer names are the parameter prefixes of the
model.
"""
from dataclasses import dataclass, field, asdict, fields
import logging

from .. import settings
from ..layers import ConvSpec, NormSpec
from ..ssm import MambaBlockSpec, SliceOrder
from ..utils import ShapeError, digest, prod, triple


__all__ = ['ModelConfig', 'LayerSpec', 'LinearSpec', 'CausalConvSpec',
           'layer_plan']

logger = logging.getLogger('segresmamba')


@dataclass
class ModelConfig:
    in_channels: int = 4
    num_classes: int = 3
    stage_channels: tuple = (96, 192, 384, 768)
    cmmb_per_stage: int = 1
    d_state: int = 16
    expand: int = 2
    d_conv: int = 4
    dt_rank: int = None
    norm_groups: int = 8
    residual_order: str = 'pre'
    mlp_hidden_ratio: float = 1
    mlp_activation: str = 'silu'
    mlp_norm: bool = True
    tom_pre_norm: bool = True
    slice_order: str = 'hwd'
    multi_label: bool = False
    input_extents: tuple = (128, 128, 128)
    waive_bottleneck: bool = False
    norm_epsilon: float = field(default_factory=lambda:
                                settings.SRM_NORM_EPSILON)

    def __post_init__(self):
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        self.input_extents = triple(self.input_extents)
        self.validate()

    def validate(self):
        if len(self.stage_channels) != 4 or min(self.stage_channels) < 1:
            raise ValueError('stage_channels must hold four positive widths')
        if self.stage_channels[3] != settings.SRM_BOTTLENECK_CHANNELS:
            if not self.waive_bottleneck:
                raise ValueError(
                    'the bottleneck must have {} channels, got {}'.format(
                        settings.SRM_BOTTLENECK_CHANNELS,
                        self.stage_channels[3]))
            logger.debug('bottleneck of %d channels (invariant waived)',
                         self.stage_channels[3])
        if self.in_channels < 1 or self.num_classes < 1:
            raise ValueError('in_channels and num_classes must be positive')
        if self.cmmb_per_stage < 0:
            raise ValueError('cmmb_per_stage must not be negative')
        if any(c % self.norm_groups for c in self.stage_channels):
            raise ValueError('norm_groups {} does not divide {}'.format(
                self.norm_groups, self.stage_channels))
        if self.residual_order not in ('pre', 'post'):
            raise ValueError('residual_order must be "pre" or "post"')
        if self.mlp_activation not in ('silu', 'relu', 'identity'):
            raise ValueError('unknown mlp_activation: {}'.format(
                self.mlp_activation))
        if self.mlp_hidden_ratio <= 0:
            raise ValueError('mlp_hidden_ratio must be positive')
        SliceOrder(self.slice_order)
        check_extents(self.input_extents, self.cmmb_per_stage)
        self.mamba_spec(self.stage_channels[0])

    # derived
    @property
    def decoder_channels(self):
        """ Output channels of the decoder stages, deepest first. """
        return self.stage_channels[2::-1]

    def mamba_spec(self, channels):
        return MambaBlockSpec(channels, self.expand, self.d_state,
                              self.d_conv, self.dt_rank, self.norm_epsilon,
                              self.tom_pre_norm)

    def stage_extents(self, extents=None):
        """ Spatial extents of the four encoder stage outputs. """
        extents = triple(extents or self.input_extents)
        return [tuple(e // 2 ** (k + 1) for e in extents) for k in range(4)]

    # serialization
    def to_dict(self):
        data = asdict(self)
        data['stage_channels'] = list(self.stage_channels)
        data['input_extents'] = list(self.input_extents)
        return data

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError('unknown model keys: {}'.format(sorted(unknown)))
        return cls(**data)

    @classmethod
    def from_preset(cls, name, **overrides):
        """ Config of a dataset preset: `btcv`, `brats` or `spleen`. """
        try:
            preset = dict(settings.SRM_DATASET_PRESETS[name])
        except KeyError:
            raise ValueError('unknown dataset preset: {}'.format(name))
        preset.update(overrides)
        return cls(**preset)

    @property
    def digest(self):
        return digest(self.to_dict())


def check_extents(extents, cmmb_per_stage=0):
    """
    Raise ShapeError unless `extents` survive the four stride 2 stages, and
    the CMMB of the deepest stage (which halves it once more) when
    `cmmb_per_stage` is not zero.
    """
    divisor = settings.SRM_SPATIAL_DIVISOR
    if cmmb_per_stage:
        divisor *= 2
    if any(e < 1 or e % divisor for e in extents):
        raise ShapeError('spatial extents {} must be multiples of {}'.format(
            tuple(extents), divisor))


@dataclass(frozen=True)
class LinearSpec:
    in_features: int
    out_features: int
    bias: bool = True

    @property
    def num_parameters(self):
        return self.in_features * self.out_features + \
            (self.out_features if self.bias else 0)


@dataclass(frozen=True)
class CausalConvSpec:
    channels: int
    kernel: int

    @property
    def num_parameters(self):
        return self.channels * self.kernel + self.channels


@dataclass(frozen=True)
class LayerSpec:
    """
    One executed layer: `kind` is `conv`, `conv_transpose`, `linear`,
    `causal_conv`, `scan`, `norm` or an elementwise kind (`relu`, `silu`,
    `softplus`, `mul`, `add`, `upsample`).
    """
    name: str
    kind: str
    in_shape: tuple
    out_shape: tuple
    spec: object = None

    @property
    def out_elements(self):
        return prod(self.out_shape)


class _Planner:
    def __init__(self, config):
        self.config = config
        self.rows = []

    def add(self, name, kind, in_shape, out_shape, spec=None):
        self.rows.append(LayerSpec(name, kind, tuple(in_shape),
                                   tuple(out_shape), spec))
        return tuple(out_shape)

    def conv(self, name, shape, out_channels, kernel, stride=1, padding=0,
             transposed=False, output_padding=0):
        spec = ConvSpec.make(shape[1], out_channels, kernel, stride, padding,
                             transposed=transposed,
                             output_padding=triple(output_padding))
        out = (shape[0], out_channels) + spec.output_extents(shape[2:])
        return self.add(name, 'conv_transpose' if transposed else 'conv',
                        shape, out, spec)

    def norm(self, name, shape, kind, groups=1):
        spec = NormSpec(kind, shape[-1] if kind == 'layer' else shape[1],
                        groups, self.config.norm_epsilon)
        return self.add(name, 'norm', shape, shape, spec)

    def elementwise(self, name, kind, shape, in_shape=None):
        return self.add(name, kind, in_shape or shape, shape)

    def conv_norm_relu(self, prefix, shape, out_channels, kernel, stride,
                       padding):
        shape = self.conv(prefix + '.conv', shape, out_channels, kernel,
                          stride, padding)
        shape = self.norm(prefix + '.norm', shape, 'group',
                          self.config.norm_groups)
        return self.elementwise(prefix + '.relu', 'relu', shape)

    def mamba(self, prefix, tokens):
        spec = self.config.mamba_spec(tokens[-1])
        ssm = spec.ssm
        batch, length = tokens[:2]
        inner = (batch, length, spec.d_inner)
        if spec.norm:
            self.norm(prefix + '.norm', tokens, 'layer')
        self.add(prefix + '.in_proj', 'linear', tokens,
                 (batch, length, 2 * spec.d_inner),
                 LinearSpec(spec.d_model, 2 * spec.d_inner, bias=False))
        self.add(prefix + '.conv', 'causal_conv', inner, inner,
                 CausalConvSpec(spec.d_inner, spec.d_conv))
        self.elementwise(prefix + '.conv_silu', 'silu', inner)
        self.elementwise(prefix + '.gate_silu', 'silu', inner)
        self.add(prefix + '.ssm.x_proj', 'linear', inner,
                 (batch, length, ssm.dt_rank + 2 * ssm.d_state),
                 LinearSpec(spec.d_inner, ssm.dt_rank + 2 * ssm.d_state,
                            bias=False))
        self.add(prefix + '.ssm.dt_proj', 'linear',
                 (batch, length, ssm.dt_rank), inner,
                 LinearSpec(ssm.dt_rank, spec.d_inner))
        self.elementwise(prefix + '.ssm.softplus', 'softplus', inner)
        self.add(prefix + '.ssm', 'scan', inner, inner, ssm)
        self.elementwise(prefix + '.gate', 'mul', inner)
        self.add(prefix + '.out_proj', 'linear', inner, tokens,
                 LinearSpec(spec.d_inner, spec.d_model, bias=False))

    def tom(self, prefix, shape):
        tokens = (shape[0], prod(shape[2:]), shape[1])
        for index in range(3):
            self.mamba('{}.blocks.{}'.format(prefix, index), tokens)
        self.elementwise(prefix + '.add_fr', 'add', shape)
        return self.elementwise(prefix + '.add_s', 'add', shape)

    def cmmb(self, prefix, shape):
        if any(e % 2 for e in shape[2:]):
            raise ShapeError('CMMB requires even extents, got {}'.format(
                shape[2:]))
        channels = shape[1]
        inner = self.conv(prefix + '.conv1', shape, channels, 5, 2, 2)
        inner = self.conv(prefix + '.conv2', inner, channels, 3, 1, 1)
        inner = self.tom(prefix + '.tom1', inner)
        inner = self.conv(prefix + '.conv3', inner, channels, 3, 1, 1)
        self.conv(prefix + '.conv_t', inner, channels, 5, 2, 2,
                  transposed=True, output_padding=1)
        self.elementwise(prefix + '.residual', 'add', shape)
        return self.tom(prefix + '.tom2', shape)

    def mlp_skip(self, prefix, shape):
        config = self.config
        hidden = int(shape[1] * config.mlp_hidden_ratio)
        inner = self.conv(prefix + '.fc1', shape, hidden, 1)
        if config.mlp_activation != 'identity':
            self.elementwise(prefix + '.activation', config.mlp_activation,
                             inner)
        shape = self.conv(prefix + '.fc2', inner, shape[1], 1)
        if config.mlp_norm:
            self.norm(prefix + '.norm', shape, 'instance')
        return shape

    def residual_block(self, prefix, shape):
        groups = self.config.norm_groups
        channels = shape[1]
        if self.config.residual_order == 'pre':
            for unit in ('1', '2'):
                self.norm(prefix + '.norm' + unit, shape, 'group', groups)
                self.elementwise(prefix + '.relu' + unit, 'relu', shape)
                self.conv(prefix + '.conv' + unit, shape, channels, 3, 1, 1)
        else:
            for unit in ('1', '2'):
                self.conv(prefix + '.conv' + unit, shape, channels, 3, 1, 1)
                self.norm(prefix + '.norm' + unit, shape, 'group', groups)
                self.elementwise(prefix + '.relu' + unit, 'relu', shape)
        return self.elementwise(prefix + '.add', 'add', shape)

    def encoder(self, shape):
        channels = self.config.stage_channels
        features = []
        for k in range(4):
            prefix = 'encoder.stages.{}'.format(k)
            if k == 0:
                shape = self.conv_norm_relu(prefix + '.down', shape,
                                            channels[0], 7, 2, 3)
            else:
                shape = self.conv_norm_relu(prefix + '.refine', shape,
                                            shape[1], 3, 1, 1)
                shape = self.conv_norm_relu(prefix + '.down', shape,
                                            channels[k], 2, 2, 0)
            for j in range(self.config.cmmb_per_stage):
                shape = self.cmmb('{}.blocks.{}'.format(prefix, j), shape)
            features.append(shape)
        for k in range(3):
            self.mlp_skip('encoder.skips.{}'.format(k), features[k])
        return features

    def decoder(self, features):
        shape = features[3]
        for i, level in enumerate((2, 1, 0)):
            prefix = 'decoder.stages.{}'.format(i)
            skip = features[level]
            shape = self.conv(prefix + '.reduce', shape, skip[1], 1)
            up = (shape[0], shape[1]) + tuple(2 * e for e in shape[2:])
            shape = self.elementwise(prefix + '.upsample', 'upsample', up,
                                     shape)
            if shape != skip:
                raise ShapeError('decoder stage {}: {} does not match skip {}'
                                 .format(i, shape, skip))
            shape = self.elementwise(prefix + '.skip_add', 'add', shape)
            shape = self.residual_block(prefix + '.block', shape)
        return self.conv('decoder.head', shape, self.config.num_classes, 2, 2,
                         transposed=True)


def layer_plan(config, extents=None, batch=1):
    """
    Return the list of LayerSpec executed by the model of `config` on a
    `(batch, in_channels, *extents)` input (defaults to the configured input
    extents).
    """
    extents = triple(extents or config.input_extents)
    check_extents(extents, config.cmmb_per_stage)
    planner = _Planner(config)
    features = planner.encoder((batch, config.in_channels) + extents)
    planner.decoder(features)
    return planner.rows
