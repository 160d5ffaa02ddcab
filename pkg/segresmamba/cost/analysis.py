"""
Static cost analysis of a ModelConfig: parameters, multiply-accumulates,
FLOPs and peak training memory per layer of its `layer_plan()`.

Conventions:
- FLOPs are twice the MACs for layers doing multiply-accumulates; other
  layers count `SRM_ELEMENTWISE_FLOPS[kind]` FLOPs per output element;
- the selective scan costs `SRM_SCAN_MAC_FACTOR` MACs per token, channel and
  state;
- training memory holds parameters, gradients and the two Adam moments,
  every activation kept for the backward pass and the workspace of the
  largest single layer (unrolled convolution windows, scan states).
"""
from dataclasses import dataclass, field, asdict
import logging

from .. import settings
from ..network.config import layer_plan
from ..utils import prod, triple
from .emissions import estimate_co2


__all__ = ['CostRow', 'CostReport', 'layer_params', 'layer_macs',
           'layer_flops', 'count_params', 'count_macs',
           'memory_breakdown', 'estimate_peak_memory', 'analyze',
           'reference_comparisons', 'GIB']

logger = logging.getLogger('segresmamba')

GIB = 2 ** 30

MAC_KINDS = ('conv', 'conv_transpose', 'linear', 'causal_conv', 'scan')


@dataclass(frozen=True)
class CostRow:
    name: str
    kind: str
    params: int = 0
    macs: int = 0
    flops: int = 0
    activation_bytes: int = 0

    columns = ('name', 'kind', 'params', 'macs', 'flops', 'activation_bytes')

    def as_tuple(self):
        return tuple(getattr(self, c) for c in self.columns)


@dataclass
class CostReport:
    rows: list = field(default_factory=list)
    input_extents: tuple = None
    batch: int = 1
    bytes_per_element: int = 4
    memory: dict = field(default_factory=dict)
    comparisons: list = field(default_factory=list)
    co2: dict = None

    @property
    def totals(self):
        return {c: sum(getattr(r, c) for r in self.rows)
                for c in CostRow.columns[2:]}

    @property
    def peak_memory_bytes(self):
        return sum(self.memory.values())

    def to_dict(self):
        return {
            'input_extents': list(self.input_extents or ()),
            'batch': self.batch,
            'bytes_per_element': self.bytes_per_element,
            'rows': [asdict(r) for r in self.rows],
            'totals': self.totals,
            'memory': dict(self.memory),
            'peak_memory_bytes': self.peak_memory_bytes,
            'peak_memory_gib': self.peak_memory_bytes / GIB,
            'comparisons': self.comparisons,
            'co2': self.co2,
        }


########################################################################
# Per layer
########################################################################
def layer_params(layer):
    if layer.kind == 'scan':
        # A_log and D
        return layer.spec.d_model * layer.spec.d_state + layer.spec.d_model
    if layer.spec is not None:
        return layer.spec.num_parameters
    return 0


def layer_macs(layer):
    kind, spec = layer.kind, layer.spec
    if kind in ('conv', 'conv_transpose'):
        return spec.macs(layer.in_shape[0], layer.in_shape[2:])
    if kind == 'linear':
        return prod(layer.in_shape[:-1]) * spec.in_features * \
            spec.out_features
    if kind == 'causal_conv':
        return prod(layer.in_shape) * spec.kernel
    if kind == 'scan':
        return prod(layer.in_shape) * spec.d_state * \
            settings.SRM_SCAN_MAC_FACTOR
    return 0


def layer_flops(layer):
    if layer.kind in MAC_KINDS:
        return 2 * layer_macs(layer)
    return settings.SRM_ELEMENTWISE_FLOPS[layer.kind] * layer.out_elements


def layer_workspace(layer):
    """ Elements of the transient buffers of a layer. """
    spec = layer.spec
    if layer.kind == 'conv':
        return layer.out_shape[0] * prod(layer.out_shape[2:]) * \
            spec.in_channels * prod(spec.kernel)
    if layer.kind == 'conv_transpose':
        return layer.in_shape[0] * prod(layer.in_shape[2:]) * \
            spec.out_channels * prod(spec.kernel)
    if layer.kind == 'scan' and not settings.SRM_MEMORY_SCAN_STATES:
        return prod(layer.in_shape) * spec.d_state
    return 0


def layer_activations(layer):
    """ Elements kept for the backward pass. """
    elements = layer.out_elements
    if layer.kind == 'scan' and settings.SRM_MEMORY_SCAN_STATES:
        elements += prod(layer.in_shape) * layer.spec.d_state
    return elements


def _plan(config, input_extents, batch):
    return layer_plan(config, input_extents, batch)


def _row(layer, bytes_per_element):
    return CostRow(layer.name, layer.kind, layer_params(layer),
                   layer_macs(layer), layer_flops(layer),
                   layer_activations(layer) * bytes_per_element)


########################################################################
# Analyzer
########################################################################
def count_params(config):
    """ Rows of the layers holding parameters. """
    return [CostRow(layer.name, layer.kind, layer_params(layer))
            for layer in _plan(config, None, 1) if layer_params(layer)]


def count_macs(config, input_extents=None, batch=1):
    """ Rows of MACs and FLOPs per layer on the given input. """
    return [CostRow(layer.name, layer.kind, 0, layer_macs(layer),
                    layer_flops(layer))
            for layer in _plan(config, input_extents, batch)]


def memory_breakdown(config, input_extents=None, batch=1,
                     bytes_per_element=4):
    """
    Training memory in bytes, by kind: parameters, gradients, optimizer
    moments, activations (including the input) and workspace.
    """
    plan = _plan(config, input_extents, max(batch, 1))
    params = sum(layer_params(layer) for layer in plan)
    extents = triple(input_extents or config.input_extents)
    # per sample activations, the plan is made for a single sample
    single = _plan(config, extents, 1) if batch != 1 else plan
    activations = config.in_channels * prod(extents) + \
        sum(layer_activations(layer) for layer in single)
    workspace = max([layer_workspace(layer) for layer in single] or [0])
    bpe = bytes_per_element
    return {
        'parameters': params * bpe,
        'gradients': params * bpe,
        'optimizer': 2 * params * bpe,
        'activations': batch * activations * bpe,
        'workspace': batch * workspace * bpe,
    }


def estimate_peak_memory(config, input_extents=None, batch=1,
                         bytes_per_element=4):
    """
    Peak training memory in bytes: `4 x parameter bytes + batch x
    (activations + workspace)`. A zero batch gives the parameter only
    figure.
    """
    return sum(memory_breakdown(config, input_extents, batch,
                                bytes_per_element).values())


def reference_comparisons(params, macs, flops, memory_bytes,
                          reference='btcv'):
    """
    Compare analyzer values with the published figures of `reference`
    (`btcv`, `brats` or `spleen`): value, reference, deviation (%) and ratio.
    """
    figures = settings.SRM_REFERENCE_FIGURES
    values = [
        ('params', params, figures['params']),
        ('macs', macs, figures['macs'].get(reference)),
        ('flops', flops, figures['flops'].get(reference)),
        ('memory_gib', memory_bytes / GIB,
         figures['memory_gb'].get(reference)),
    ]
    rows = []
    for metric, value, ref in values:
        if ref is None:
            continue
        rows.append({
            'metric': metric,
            'reference_set': reference,
            'value': value,
            'reference': ref,
            'deviation_pct': 100.0 * (value - ref) / ref,
            'ratio': value / ref,
        })
    return rows


def analyze(config, input_extents=None, batch=1, bytes_per_element=4,
            reference=None, emissions=None):
    """
    Full cost report of `config`: per layer rows, memory breakdown,
    comparison with the published figures of `reference` and optional CO2
    estimate (`emissions` being an EmissionsSpec).
    """
    extents = triple(input_extents or config.input_extents)
    plan = _plan(config, extents, batch)
    report = CostReport([_row(layer, bytes_per_element) for layer in plan],
                        extents, batch, bytes_per_element)
    report.memory = memory_breakdown(config, extents, batch,
                                     bytes_per_element)
    totals = report.totals
    if reference:
        report.comparisons = reference_comparisons(
            totals['params'], totals['macs'], totals['flops'],
            report.peak_memory_bytes, reference)
    if emissions is not None:
        report.co2 = {
            'hours': emissions.hours,
            'device_power_kw': emissions.device_power_kw,
            'carbon_intensity': emissions.carbon_intensity,
            'preset': emissions.preset,
            'kg_co2': estimate_co2(emissions),
        }
    logger.info('analysis: %d params, %.3e MACs, %.3e FLOPs, %.3f GiB',
                totals['params'], totals['macs'], totals['flops'],
                report.peak_memory_bytes / GIB)
    return report
