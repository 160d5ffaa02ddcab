from argparse import RawTextHelpFormatter
import logging
import os

from django.core.management.base import BaseCommand, CommandError

from ..document import load_document
from ..utils import ConfigError


__all__ = ['ModelCommand', 'USAGE_ERROR', 'NUMERIC_ERROR']

logger = logging.getLogger('segresmamba.commands')

USAGE_ERROR = 2
NUMERIC_ERROR = 3


class ModelCommand(BaseCommand):
    """
    Base of the commands working from a configuration document: shared
    `--config`, `--out` and `--seed` options, error to exit code mapping and
    output file helpers.
    """
    help = __doc__

    def add_arguments(self, parser):
        parser.formatter_class = RawTextHelpFormatter
        parser.add_argument(
            '-c', '--config', type=str, default=None,
            help='configuration document (YAML or JSON). Default values are '
                 'used when not given'
        )
        parser.add_argument(
            '-o', '--out', type=str, default='.',
            help='output directory (created if missing). Default is the '
                 'current directory'
        )
        parser.add_argument(
            '-s', '--seed', type=int, default=None,
            help='override the seeds of the train and data sections'
        )

    def load(self, config=None, seed=None, **options):
        try:
            doc = load_document(config)
        except ConfigError as err:
            for line in err.diagnostics:
                logger.error(line)
            raise CommandError(str(err), returncode=USAGE_ERROR)
        return doc.with_seed(seed)

    def fail(self, err, returncode=USAGE_ERROR):
        logger.error('%s', err)
        raise CommandError(str(err), returncode=returncode)

    def out_path(self, out, name):
        os.makedirs(out, exist_ok=True)
        return os.path.join(out, name)

    def write(self, out, name, text):
        path = self.out_path(out, name)
        with open(path, 'w', encoding='utf-8', newline='\n') as stream:
            stream.write(text)
        logger.info('%s written', path)
        return path
