import hashlib
import json
import math

import numpy as np


__all__ = ['ShapeError', 'NonFiniteError', 'FormatError', 'ConfigError',
           'TrainingError', 'triple', 'prod', 'make_rng', 'digest',
           'canonical_json']


class ShapeError(ValueError):
    """ Shape, extent or broadcast violation. """


class NonFiniteError(FloatingPointError):
    """ NaN or Inf value met at an operation boundary. """


class FormatError(ValueError):
    """ Invalid or mismatching binary file. """


class ConfigError(ValueError):
    """
    Invalid configuration document. `diagnostics` is a list of
    `section.key: message` strings.
    """
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or [message]

    def __str__(self):
        return '\n'.join(self.diagnostics)


class TrainingError(RuntimeError):
    """ Numerical failure during training. """
    def __init__(self, message, step, last_good_step):
        super().__init__(message)
        self.step = step
        self.last_good_step = last_good_step


def triple(value):
    """
    Return value as a tuple of three ints (value can be an int or an
    iterable of three ints).
    """
    if isinstance(value, (int, np.integer)):
        return (int(value),) * 3
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise ValueError('expected three values, got {}'.format(value))
    return value


def prod(values):
    return math.prod(int(v) for v in values)


def make_rng(seed):
    """ Return a numpy Generator from a seed, a Generator or None. """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def canonical_json(value):
    return json.dumps(value, sort_keys=True, separators=(',', ':'))


def digest(value):
    """ Return the sha256 digest (32 bytes) of value canonical JSON form. """
    return hashlib.sha256(canonical_json(value).encode('utf-8')).digest()
