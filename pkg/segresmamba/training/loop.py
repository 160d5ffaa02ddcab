"""
Training and evaluation loops.
"""
import csv
from dataclasses import dataclass, field, replace
import io
import json
import logging

import numpy as np

from .. import settings
from ..core import Tensor, backward, no_grad
from ..cost.emissions import process_hours
from ..utils import NonFiniteError, TrainingError, triple
from .data import augment, foreground_crop, scale_intensity_range, \
    VolumeSample
from .losses import DiceScores, dice_loss, dice_metric, one_hot
from .optim import AdamW, cosine_lr


__all__ = ['TrainHyper', 'History', 'Trainer', 'train_loop', 'evaluate']

logger = logging.getLogger('segresmamba')


@dataclass
class TrainHyper:
    """
    Training hyper-parameters. Training stops after `epochs` passes over the
    dataset when given, after `steps` steps otherwise.
    """
    steps: int = 500
    epochs: int = None
    lr_max: float = 1e-4
    lr_min: float = 0.0
    weight_decay: float = 1e-5
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    patch_extents: tuple = None
    eval_every: int = 50
    smooth: float = 1e-5
    include_background: bool = True
    augment: bool = True
    flip_prob: float = 0.5
    scale_range: tuple = (0.9, 1.1)
    foreground_crop: bool = False
    intensity_range: tuple = None

    @classmethod
    def from_dict(cls, data):
        values = dict(settings.SRM_TRAIN_DEFAULTS)
        values.update(data or {})
        return cls(**values)

    def __post_init__(self):
        self.betas = tuple(self.betas)
        self.scale_range = tuple(self.scale_range)
        if self.patch_extents is not None:
            self.patch_extents = triple(self.patch_extents)
        if self.intensity_range is not None:
            self.intensity_range = tuple(self.intensity_range)
        if self.steps < 0 or (self.epochs is not None and self.epochs < 0):
            raise ValueError('steps and epochs must not be negative')

    def total_steps(self, num_samples):
        if self.epochs is not None:
            return self.epochs * num_samples
        return self.steps


@dataclass
class History:
    """ Per step training records and per evaluation dice scores. """
    steps: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    cpu_seconds: float = 0.0

    step_columns = ('step', 'loss', 'lr', 'mean_dice')

    def append(self, step, loss, lr, mean_dice):
        self.steps.append({'step': step, 'loss': loss, 'lr': lr,
                           'mean_dice': mean_dice})

    def add_eval(self, step, scores):
        self.evals.append({'step': step, 'mean_dice': scores.mean,
                           'per_class': [float(s) for s in scores.per_class]})

    def __len__(self):
        return len(self.steps)

    @property
    def last(self):
        return self.steps[-1] if self.steps else None

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(self.step_columns)
        for row in self.steps:
            writer.writerow([row['step']] + [repr(float(row[c]))
                                             for c in self.step_columns[1:]])
        return out.getvalue()

    def eval_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        classes = len(self.evals[0]['per_class']) if self.evals else 0
        writer.writerow(['step', 'mean_dice'] +
                        ['dice_{}'.format(k) for k in range(classes)])
        for row in self.evals:
            writer.writerow([row['step'], repr(row['mean_dice'])] +
                            [repr(s) for s in row['per_class']])
        return out.getvalue()

    def to_json(self):
        return json.dumps({'steps': self.steps, 'evals': self.evals},
                          indent=2, sort_keys=True) + '\n'


def _prepare(sample, hyper):
    if hyper.intensity_range is not None:
        sample = VolumeSample(
            scale_intensity_range(sample.image, *hyper.intensity_range),
            sample.label)
    return sample


def _target(model, label):
    config = model.config
    if config.multi_label:
        return label[None].astype(float)
    return one_hot(label[None], config.num_classes)


def _predict(model, logits):
    if model.config.multi_label:
        return (logits[0] > 0).astype(np.int32)
    return np.argmax(logits[0], axis=0)


def sample_dice(model, sample, logits, include_background=True):
    config = model.config
    return dice_metric(_predict(model, logits), sample.label,
                       config.num_classes, include_background,
                       config.multi_label)


def evaluate(model, dataset, include_background=True):
    """
    Dice of the model on un-augmented `dataset`, per class averaged over the
    samples.
    """
    per_class = []
    with no_grad():
        for sample in dataset:
            logits = model(sample.image[None]).data
            per_class.append(sample_dice(model, sample, logits,
                                         include_background).per_class)
    per_class = np.mean(per_class, axis=0)
    config = model.config
    kept = per_class if include_background or config.multi_label \
        else per_class[1:]
    return DiceScores(per_class, float(kept.mean()))


class Trainer:
    """
    Train `model` on `dataset`: augment, forward, dice loss, backward, AdamW
    step with cosine learning rate, one history record per step and periodic
    evaluation on the un-augmented dataset.
    """
    def __init__(self, model, dataset, hyper=None):
        self.model = model
        self.hyper = hyper or TrainHyper()
        self.dataset = [_prepare(s, self.hyper) for s in dataset]
        for sample in self.dataset:
            sample.validate(model.config.num_classes)
        self.rng = np.random.default_rng(self.hyper.seed)
        self.optimizer = AdamW(model.parameters(), lr=self.hyper.lr_max,
                               betas=self.hyper.betas, eps=self.hyper.eps,
                               weight_decay=self.hyper.weight_decay)
        self.history = History()

    def order(self):
        """ Sample indices, shuffled once per pass over the dataset. """
        while True:
            yield from self.rng.permutation(len(self.dataset))

    def make_sample(self, index):
        hyper, sample = self.hyper, self.dataset[index]
        if hyper.foreground_crop and hyper.patch_extents:
            sample = foreground_crop(sample, hyper.patch_extents)
        if hyper.augment:
            return augment(sample, self.rng, hyper.patch_extents,
                           hyper.flip_prob, hyper.scale_range)
        return sample

    def step(self, sample, lr):
        model, hyper = self.model, self.hyper
        self.optimizer.lr = lr
        self.optimizer.zero_grad()
        logits = model(Tensor(sample.image[None]))
        loss = dice_loss(logits, _target(model, sample.label), hyper.smooth,
                         'sigmoid' if model.config.multi_label else 'softmax',
                         hyper.include_background)
        value = loss.item()
        if not np.isfinite(value):
            raise NonFiniteError('loss is {}'.format(value))
        backward(loss)
        self.optimizer.step()
        return value, sample_dice(model, sample, logits.data,
                                  hyper.include_background).mean

    def run(self):
        hyper, history = self.hyper, self.history
        total = hyper.total_steps(len(self.dataset))
        cpu_start = process_hours()
        logger.info('training %d parameters for %d steps on %d samples',
                    self.model.num_parameters(), total, len(self.dataset))

        order = self.order()
        last_good = None
        for step in range(total):
            sample = self.make_sample(next(order))
            lr = cosine_lr(step, total, hyper.lr_max, hyper.lr_min)
            try:
                loss, mean_dice = self.step(sample, lr)
            except NonFiniteError as err:
                logger.error('step %d: %s (last good step: %s)', step, err,
                             last_good)
                raise TrainingError(str(err), step, last_good) from err
            history.append(step, loss, lr, mean_dice)
            last_good = step
            logger.debug('step %d: loss %.6f, lr %.3e, dice %.4f', step, loss,
                         lr, mean_dice)
            if hyper.eval_every and (step + 1) % hyper.eval_every == 0 and \
                    step + 1 < total:
                self.evaluate(step)
        if total:
            self.evaluate(total - 1)
        history.cpu_seconds = (process_hours() - cpu_start) * 3600.0
        return history

    def evaluate(self, step):
        scores = evaluate(self.model, self.dataset,
                          self.hyper.include_background)
        self.history.add_eval(step, scores)
        logger.info('eval at step %d: mean dice %.4f', step, scores.mean)
        return scores


def train_loop(model, dataset, steps=None, hyper=None):
    """
    Train `model` on `dataset` for `steps` steps (or per `hyper`) and return
    the History.
    """
    hyper = hyper or TrainHyper()
    if steps is not None:
        hyper = replace(hyper, steps=steps, epochs=None)
    return Trainer(model, dataset, hyper).run()
