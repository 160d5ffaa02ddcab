"""
Segment a volume with the configured model and write the label volume.

The input is a `(C, D, H, W)` volume file (a `(D, H, W)` one is accepted for
single channel models). The output holds the int32 class ids `(D, H, W)`
(argmax, lowest class on ties) or, for multi-label models, the `(K, D, H,
W)` binary masks.

Example:
    ./manage.py infer --config c.yaml --checkpoint out/checkpoint.srmc \\
        image.srmv labels.srmv
"""
import logging

import numpy as np

from segresmamba.formats import CheckpointFile, VolumeFile
from segresmamba.management.base import ModelCommand
from segresmamba.network import SegResMamba, predict
from segresmamba.training import dice_metric
from segresmamba.utils import FormatError

logger = logging.getLogger('segresmamba.commands')


class Command (ModelCommand):
    help = __doc__

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            'input', metavar='INPUT', type=str,
            help='input image volume file'
        )
        parser.add_argument(
            'output', metavar='OUTPUT', type=str,
            help='output label volume file'
        )
        parser.add_argument(
            '-k', '--checkpoint', type=str, default=None,
            help='checkpoint to load; the model keeps its seeded '
                 'initialization when not given'
        )
        parser.add_argument(
            '-l', '--label', type=str, default=None,
            help='ground truth label volume: print the dice of the '
                 'prediction'
        )

    def handle(self, *args, input, output, checkpoint=None, label=None,
               **options):
        doc = self.load(**options)
        config = doc.model
        model = SegResMamba(config, seed=doc.train.seed)
        try:
            if checkpoint:
                CheckpointFile.load(checkpoint).restore(model)
            image = VolumeFile.load(input).array.astype(np.float64)
            if image.ndim == 3 and config.in_channels == 1:
                image = image[None]
            if image.ndim != 4 or image.shape[0] != config.in_channels:
                raise FormatError(
                    'volume {} does not match a {} channel model'.format(
                        image.shape, config.in_channels))
            labels = predict(model, image[None])[0]
        except (OSError, ValueError) as err:
            self.fail(err)

        VolumeFile(labels, np.int32).save(output)
        logger.info('labels %s written to %s', labels.shape, output)

        if label:
            try:
                truth = VolumeFile.load(label).array
                scores = dice_metric(labels, truth, config.num_classes,
                                     multi_label=config.multi_label)
            except (OSError, ValueError) as err:
                self.fail(err)
            self.stdout.write('mean dice: {!r}'.format(scores.mean))
