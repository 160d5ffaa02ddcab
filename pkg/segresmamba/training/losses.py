from collections import namedtuple

import numpy as np

from ..core import Tensor, ops
from ..utils import ShapeError


__all__ = ['one_hot', 'dice_loss', 'DiceScores', 'dice_metric']


def one_hot(labels, num_classes):
    """
    One-hot `(N, K, *S)` float array of integer `labels` `(N, *S)`.
    """
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError('labels out of [0, {})'.format(num_classes))
    out = np.eye(num_classes)[labels]
    return np.ascontiguousarray(np.moveaxis(out, -1, 1))


def dice_loss(logits, target, smooth=1e-5, activation='softmax',
              include_background=True):
    """
    Soft dice loss: `1 - mean_k (2 sum p t + smooth) / (sum p + sum t +
    smooth)`, sums taken per class over batch and space.

    :param logits: `(N, K, *S)` tensor
    :param target: `(N, K, *S)` one-hot (or multi-label) target
    :param activation: `softmax`, `sigmoid` or None (logits already are
        probabilities)
    :param include_background: keep class 0 in the mean
    """
    target = target.data if isinstance(target, Tensor) else \
        np.asarray(target, dtype=float)
    if logits.shape != target.shape:
        raise ShapeError('dice loss: logits {} and target {} differ'.format(
            logits.shape, target.shape))
    if activation == 'softmax':
        probs = ops.softmax(logits, axis=1)
    elif activation == 'sigmoid':
        probs = ops.sigmoid(logits)
    elif activation is None:
        probs = logits
    else:
        raise ValueError('unknown activation: {}'.format(activation))

    num_classes = logits.shape[1]
    if not include_background and num_classes > 1:
        probs = ops.narrow(probs, 1, 1, num_classes - 1)
        target = target[:, 1:]
    axes = (0,) + tuple(range(2, logits.ndim))
    intersection = ops.sum(ops.mul(probs, target), axes)
    denominator = ops.add(ops.sum(probs, axes), target.sum(axis=axes) +
                          smooth)
    dice = ops.div(ops.add(ops.mul(intersection, 2.0), smooth), denominator)
    return ops.sub(1.0, ops.mean(dice))


DiceScores = namedtuple('DiceScores', ['per_class', 'mean'])


def dice_metric(pred, target, num_classes=None, include_background=True,
                multi_label=False):
    """
    Hard dice per class of label volumes. Classes absent from both `pred` and
    `target` score 1.0.

    For single-label inputs, `pred` and `target` are integer label volumes
    (argmax of the logits, lowest index on ties) and `num_classes` is
    required. For multi-label inputs they are `(..., K, *S)` binary masks
    with the class axis first after the batch axis (if any).
    """
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError('dice metric: {} and {} differ'.format(
            pred.shape, target.shape))
    if multi_label:
        axis = 1 if pred.ndim == 5 else 0
        masks = [(np.take(pred, k, axis) > 0, np.take(target, k, axis) > 0)
                 for k in range(pred.shape[axis])]
    else:
        masks = [(pred == k, target == k) for k in range(num_classes)]

    scores = []
    for p, t in masks:
        total = p.sum() + t.sum()
        scores.append(1.0 if total == 0 else
                      2.0 * np.logical_and(p, t).sum() / total)
    scores = np.array(scores)
    kept = scores if include_background or multi_label or \
        len(scores) < 2 else scores[1:]
    return DiceScores(scores, float(kept.mean()))
