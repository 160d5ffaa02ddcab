from .config import ModelConfig, LayerSpec, LinearSpec, CausalConvSpec, \
    layer_plan
from .cmmb import CMMB
from .model import EncoderOutputs, Encoder, Decoder, SegResMamba, predict


__all__ = ['ModelConfig', 'LayerSpec', 'LinearSpec', 'CausalConvSpec',
           'layer_plan', 'CMMB', 'EncoderOutputs', 'Encoder', 'Decoder',
           'SegResMamba', 'predict']
