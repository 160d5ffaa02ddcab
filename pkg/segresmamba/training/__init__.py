from .losses import one_hot, dice_loss, DiceScores, dice_metric
from .optim import OptimState, adamw_step, AdamW, cosine_lr
from .data import VolumeSample, synth_dataset, flip_sample, crop_sample, \
    foreground_crop, scale_intensity_range, augment
from .loop import TrainHyper, History, Trainer, train_loop, evaluate


__all__ = ['one_hot', 'dice_loss', 'DiceScores', 'dice_metric', 'OptimState',
           'adamw_step', 'AdamW', 'cosine_lr', 'VolumeSample',
           'synth_dataset', 'flip_sample', 'crop_sample', 'foreground_crop',
           'scale_intensity_range', 'augment', 'TrainHyper', 'History',
           'Trainer', 'train_loop', 'evaluate']
