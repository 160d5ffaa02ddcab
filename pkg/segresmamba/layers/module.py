from collections import OrderedDict

import numpy as np

from ..core import Parameter
from ..utils import ShapeError


__all__ = ['Module', 'ModuleList', 'uniform']


def uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """
    Base class of layers. Parameters and sub-modules assigned as attributes
    are registered in assignment order, which gives the order (and the
    dotted names) of `named_parameters()`.
    """
    def __init__(self):
        object.__setattr__(self, '_parameters', OrderedDict())
        object.__setattr__(self, '_modules', OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_modules(self, prefix=''):
        yield prefix, self
        for name, module in self._modules.items():
            yield from module.named_modules(
                prefix + '.' + name if prefix else name)

    def named_parameters(self, prefix=''):
        for name, param in self._parameters.items():
            yield (prefix + '.' + name if prefix else name), param
        for name, module in self._modules.items():
            yield from module.named_parameters(
                prefix + '.' + name if prefix else name)

    def parameters(self):
        return [param for _, param in self.named_parameters()]

    def num_parameters(self):
        return sum(param.size for param in self.parameters())

    def zero_grad(self):
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self):
        return OrderedDict((name, param.data.copy())
                           for name, param in self.named_parameters())

    def load_state_dict(self, state):
        """ Copy values of `state` into parameters (same names, shapes). """
        params = OrderedDict(self.named_parameters())
        missing = params.keys() - state.keys()
        unexpected = state.keys() - params.keys()
        if missing or unexpected:
            raise KeyError('state mismatch: missing {}, unexpected {}'.format(
                sorted(missing), sorted(unexpected)))
        for name, param in params.items():
            value = np.asarray(state[name], dtype=param.data.dtype)
            if value.shape != param.shape:
                raise ShapeError('{}: shape {} does not match {}'.format(
                    name, value.shape, param.shape))
            param.data[...] = value


class ModuleList(Module):
    """ Ordered list of sub-modules, registered as `0`, `1`, ... """
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for module in modules:
            self.append(module)

    def append(self, module):
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]
