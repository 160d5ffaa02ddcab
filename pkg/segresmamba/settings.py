from django.conf import settings
from django.core.exceptions import ImproperlyConfigured


def ensure(key, default):
    try:
        value = getattr(settings, key, default)
    except ImproperlyConfigured:
        value = default
    globals()[key] = value


########################################################################
# Numerics
########################################################################
# Check for NaN/Inf at every op boundary (the instance enables it in debug
# mode only)
ensure('SRM_CHECK_FINITE', True)
# Epsilon of group, instance and layer normalizations
ensure('SRM_NORM_EPSILON', 1e-5)
# Time steps per block of the blocked selective scan
ensure('SRM_SCAN_CHUNK', 16)
# Selective scan implementation: 'blocked' or 'naive'
ensure('SRM_SCAN_MODE', 'blocked')
# Run the three ToM branches in a thread pool
ensure('SRM_TOM_PARALLEL', False)


########################################################################
# Model defaults
########################################################################
ensure('SRM_MODEL_DEFAULTS', {
    'in_channels': 4,
    'num_classes': 3,
    'stage_channels': [96, 192, 384, 768],
    'cmmb_per_stage': 1,
    # Mamba block
    'd_state': 16,
    'expand': 2,
    'd_conv': 4,
    'dt_rank': None,
    # GroupNorm groups of encoder convolutions and decoder residual blocks
    'norm_groups': 8,
    # 'pre': Norm -> ReLU -> Conv; 'post': Conv -> Norm -> ReLU
    'residual_order': 'pre',
    'mlp_hidden_ratio': 1,
    'mlp_activation': 'silu',
    'mlp_norm': True,
    # one LayerNorm on tokens before each ToM branch
    'tom_pre_norm': True,
    # flattening of the inter-slice branch, slowest axis first
    'slice_order': 'hwd',
    'multi_label': False,
    'input_extents': [128, 128, 128],
    # lift the 768-channel bottleneck rule (reduced test/desk configs only)
    'waive_bottleneck': False,
})
# Channels of the bottleneck feature volume
ensure('SRM_BOTTLENECK_CHANNELS', 768)
# Input extents must be multiples of this (four stride-2 downsamplings)
ensure('SRM_SPATIAL_DIVISOR', 16)

# Dataset presets of the published experiments
ensure('SRM_DATASET_PRESETS', {
    'btcv': {'in_channels': 1, 'num_classes': 14, 'multi_label': False,
             'input_extents': [128, 128, 128]},
    'brats': {'in_channels': 4, 'num_classes': 3, 'multi_label': True,
              'input_extents': [128, 128, 128]},
    'spleen': {'in_channels': 1, 'num_classes': 2, 'multi_label': False,
               'input_extents': [96, 96, 96]},
})


########################################################################
# Training
########################################################################
ensure('SRM_TRAIN_DEFAULTS', {
    'steps': 500,
    'epochs': None,
    'lr_max': 1e-4,
    'lr_min': 0.0,
    'weight_decay': 1e-5,
    'betas': [0.9, 0.999],
    'eps': 1e-8,
    'seed': 0,
    'patch_extents': None,
    'eval_every': 50,
    'smooth': 1e-5,
    'include_background': True,
    'augment': True,
    'flip_prob': 0.5,
    'scale_range': [0.9, 1.1],
    'foreground_crop': False,
    'intensity_range': None,
})
ensure('SRM_DATA_DEFAULTS', {
    'samples': 8,
    'extents': [32, 32, 32],
    'noise': 0.1,
    'max_ellipsoids': 3,
    'seed': 0,
})


########################################################################
# Cost analysis
########################################################################
# MACs per (token, channel, state) of the selective scan: delta*A, delta*B,
# B*u, A*h, C*h and the exp of delta*A
ensure('SRM_SCAN_MAC_FACTOR', 6)
# FLOPs per output element of layers without multiply-accumulates
ensure('SRM_ELEMENTWISE_FLOPS', {
    'relu': 1,
    'silu': 4,
    'softplus': 4,
    'mul': 1,
    'add': 1,
    'norm': 5,
    'upsample': 9,
})
# Keep the per-step scan states in the memory estimate (a fused scan kernel
# recomputes them instead)
ensure('SRM_MEMORY_SCAN_STATES', False)
ensure('SRM_ANALYZE_DEFAULTS', {
    'input_extents': [128, 128, 128],
    'bytes_per_element': 4,
    'batch': 1,
    'reference': 'btcv',
})

# Published figures of the architecture, used as calibration context
ensure('SRM_REFERENCE_FIGURES', {
    'params': 119.98e6,
    'flops': {'btcv': 188.42e9},
    'macs': {'btcv': 336.45e9, 'brats': 340.52e9, 'spleen': 137.84e9},
    'memory_gb': {'btcv': 5.10, 'brats': 4.78, 'spleen': 2.22},
})


########################################################################
# Emissions
########################################################################
# Carbon intensity in kgCO2eq/kWh. Amazon is quoted; Google and Azure are
# back-solved from the published emission table.
ensure('SRM_CARBON_INTENSITY', {
    'amazon': 0.61,
    'google': 0.62,
    'azure': 0.57,
})
# Device power in kW (A100 PCIe TDP)
ensure('SRM_DEVICE_POWER_KW', 0.25)
# Device power in kW used for desk runs (laptop CPU package power)
ensure('SRM_RUN_POWER_KW', 0.065)
ensure('SRM_RUN_CARBON_PRESET', 'amazon')
# Published training times: seconds per epoch, 200 epochs per fold, 5 folds
ensure('SRM_REFERENCE_TRAINING', {
    'epochs': 200,
    'folds': 5,
    'epoch_seconds': {
        'UNETR': 262.83,
        'SegMamba': 321.50,
        'UNET': 255.80,
        'SwinUNETR': 321.39,
        'SegResMamba': 267.83,
    },
})


########################################################################
# Files
########################################################################
ensure('SRM_CONFIG_VERSION', 1)
ensure('SRM_REPORT_FILES', ('report.csv', 'report.json'))
ensure('SRM_HISTORY_FILES', ('history.csv', 'history.json'))
ensure('SRM_EVAL_FILE', 'eval.csv')
ensure('SRM_CHECKPOINT_FILE', 'checkpoint.srmc')
ensure('SRM_EMISSIONS_FILE', 'emissions.json')
