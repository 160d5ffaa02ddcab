"""
Write the synthetic dataset of the data section to the output directory:
`sample_NNN_image.srmv` (float64, `(C, D, H, W)`) and
`sample_NNN_label.srmv` (int32) per sample.
"""
import logging

import numpy as np

from segresmamba.formats import VolumeFile
from segresmamba.management.base import ModelCommand
from segresmamba.training import synth_dataset

logger = logging.getLogger('segresmamba.commands')


class Command (ModelCommand):
    help = __doc__

    def handle(self, *args, out, **options):
        doc = self.load(**options)
        config, data = doc.model, doc.data
        try:
            dataset = synth_dataset(
                data['samples'], data['extents'], config.num_classes,
                data['seed'], config.in_channels, data['noise'],
                data['max_ellipsoids'], config.multi_label)
        except ValueError as err:
            self.fail(err)

        for index, sample in enumerate(dataset):
            name = 'sample_{:03d}_{{}}.srmv'.format(index)
            VolumeFile(sample.image).save(
                self.out_path(out, name.format('image')))
            VolumeFile(sample.label, np.int32).save(
                self.out_path(out, name.format('label')))
        logger.info('%d samples written to %s', len(dataset), out)
