"""
Train the configured model on a synthetic dataset.

Writes into the output directory:
    - history.csv, history.json: per step loss, learning rate and dice;
    - eval.csv: per class dice of the periodic evaluations;
    - checkpoint.srmc: final parameters;
    - emissions.json: CO2 estimate of the run from its CPU time.

Exit code 3 is returned when training meets a non-finite value; the history
up to the last good step is written anyway.
"""
import json
import logging

from segresmamba import settings
from segresmamba.cost import run_emissions
from segresmamba.formats import CheckpointFile
from segresmamba.management.base import ModelCommand, NUMERIC_ERROR
from segresmamba.network import SegResMamba
from segresmamba.training import Trainer, synth_dataset
from segresmamba.utils import TrainingError

logger = logging.getLogger('segresmamba.commands')


class Command (ModelCommand):
    help = __doc__

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--steps', type=int, default=None,
            help='override the number of training steps (disables epochs)'
        )
        parser.add_argument(
            '--power', type=float, default=None,
            help='device power in kW of the emission estimate. Default is '
                 'settings.SRM_RUN_POWER_KW'
        )

    def handle(self, *args, out, steps=None, power=None, **options):
        doc = self.load(**options)
        hyper, data = doc.train, doc.data
        if steps is not None:
            hyper.steps, hyper.epochs = steps, None

        config = doc.model
        try:
            dataset = synth_dataset(
                data['samples'], data['extents'], config.num_classes,
                data['seed'], config.in_channels, data['noise'],
                data['max_ellipsoids'], config.multi_label)
            model = SegResMamba(config, seed=hyper.seed)
            trainer = Trainer(model, dataset, hyper)
        except ValueError as err:
            self.fail(err)

        error = None
        try:
            trainer.run()
        except TrainingError as err:
            error = err
        history = trainer.history

        csv_name, json_name = settings.SRM_HISTORY_FILES
        self.write(out, csv_name, history.to_csv())
        self.write(out, json_name, history.to_json())
        self.write(out, settings.SRM_EVAL_FILE, history.eval_csv())
        if error is not None:
            self.fail('training aborted at step {}: {} (last good step: {})'
                      .format(error.step, error, error.last_good_step),
                      NUMERIC_ERROR)

        CheckpointFile.from_model(model).save(
            self.out_path(out, settings.SRM_CHECKPOINT_FILE))
        emissions = run_emissions(history.cpu_seconds, power)
        self.write(out, settings.SRM_EMISSIONS_FILE,
                   json.dumps(emissions, indent=2, sort_keys=True) + '\n')

        if history.evals:
            logger.info('final mean dice: %.4f',
                        history.evals[-1]['mean_dice'])
        logger.info('run estimate: %.3g kgCO2eq', emissions['kg_co2'])
