"""
Configuration document: a YAML (or JSON) file with the sections `model`,
`train`, `data`, `analyze` and `emissions`, and a schema `version`.

```
version: 1
model: {preset: brats, stage_channels: [16, 32, 64, 128],
        waive_bottleneck: true}
train: {steps: 500, lr_max: 1.0e-4, seed: 0}
data: {samples: 8, extents: [32, 32, 32]}
analyze: {input_extents: [128, 128, 128], batch: 1}
emissions: {preset: amazon, hours: 74.40}
```
"""
from dataclasses import dataclass, field
import logging

import yaml

from . import settings
from .cost.emissions import EmissionsSpec
from .network.config import ModelConfig
from .serializers import DocumentSerializer
from .training.loop import TrainHyper
from .utils import ConfigError


__all__ = ['ConfigDocument', 'load_document', 'parse_document',
           'flatten_errors']

logger = logging.getLogger('segresmamba')


def _invalid(diagnostics):
    return ConfigError('invalid configuration', diagnostics)


def flatten_errors(errors, prefix=''):
    """
    Flatten nested serializer errors into `section.key: message` lines.
    """
    if isinstance(errors, dict):
        lines = []
        for key, value in errors.items():
            path = prefix if key == 'non_field_errors' else \
                '{}.{}'.format(prefix, key) if prefix else str(key)
            lines.extend(flatten_errors(value, path))
        return lines
    if isinstance(errors, list):
        if all(isinstance(e, str) for e in errors):
            return ['{}: {}'.format(prefix or 'document', e) for e in errors]
        lines = []
        for value in errors:
            lines.extend(flatten_errors(value, prefix))
        return lines
    return ['{}: {}'.format(prefix or 'document', errors)]


@dataclass
class ConfigDocument:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainHyper = field(default_factory=lambda: TrainHyper.from_dict({}))
    data: dict = field(default_factory=lambda: dict(
        settings.SRM_DATA_DEFAULTS))
    analyze: dict = field(default_factory=lambda: dict(
        settings.SRM_ANALYZE_DEFAULTS))
    emissions: EmissionsSpec = None
    version: int = 1
    source: str = None

    def with_seed(self, seed):
        """ Override the training and data seeds. """
        if seed is not None:
            self.train.seed = seed
            self.data['seed'] = seed
        return self

    @classmethod
    def from_dict(cls, data, source=None):
        """
        Validate `data` and build the document. Raise ConfigError listing
        every problem found.
        """
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise _invalid(['document: expected a mapping, got {}'.format(
                type(data).__name__)])
        serializer = DocumentSerializer(data=data)
        if not serializer.is_valid():
            raise _invalid(flatten_errors(serializer.errors))
        values = serializer.validated_data

        diagnostics = []

        def build(section, func, *args):
            try:
                return func(*args)
            except (TypeError, ValueError) as err:
                diagnostics.append('{}: {}'.format(section, err))

        model = dict(values.get('model') or {})
        preset = model.pop('preset', None)
        model_values = dict(settings.SRM_MODEL_DEFAULTS)
        if preset:
            model_values.update(settings.SRM_DATASET_PRESETS[preset])
        model_values.update(model)

        doc = cls(version=values['version'], source=source)
        doc.model = build('model', ModelConfig.from_dict, model_values)
        doc.train = build('train', TrainHyper.from_dict,
                          dict(values.get('train') or {}))
        doc.data.update(values.get('data') or {})
        doc.analyze.update(values.get('analyze') or {})
        if values.get('emissions'):
            doc.emissions = build('emissions', EmissionsSpec.from_dict,
                                  values['emissions'])
        if diagnostics:
            raise _invalid(diagnostics)
        return doc


def parse_document(text, source=None):
    """ Parse the YAML (or JSON) `text` of a document. """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, 'problem_mark', None)
        where = 'line {}'.format(mark.line + 1) if mark else 'document'
        problem = getattr(err, 'problem', None) or str(err)
        raise _invalid(['{}: {}'.format(where, problem)])
    return ConfigDocument.from_dict(data, source)


def load_document(path=None):
    """
    Load the document at `path`; without path, return the default
    document.
    """
    if path is None:
        return ConfigDocument()
    try:
        with open(path, encoding='utf-8') as stream:
            text = stream.read()
    except OSError as err:
        raise _invalid(['{}: {}'.format(path, err.strerror)])
    doc = parse_document(text, str(path))
    logger.info('configuration loaded from %s', path)
    return doc
