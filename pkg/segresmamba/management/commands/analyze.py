"""
Static cost analysis of the configured model: parameters, MACs, FLOPs and
peak training memory per layer, compared with the published figures, and
an optional CO2 estimate.

Writes report.csv (one row per layer) and report.json (full report) into
the output directory and prints the tables.

Example:
    ./manage.py analyze --config brats.yaml --reference brats \\
        --emissions preset=amazon hours=74.40
"""
import logging

from segresmamba import settings
from segresmamba.cost import EmissionsSpec, analyze, emissions_table, \
    golden_tables, reference_emissions, report_json
from segresmamba.management.base import ModelCommand

logger = logging.getLogger('segresmamba.commands')


def parse_pairs(pairs):
    """ Parse `key=value` arguments, values as floats when possible. """
    values = {}
    for pair in pairs:
        key, sep, value = pair.partition('=')
        if not sep or not key:
            raise ValueError('expected key=value, got "{}"'.format(pair))
        try:
            value = float(value)
        except ValueError:
            pass
        values[key.strip()] = value
    return values


class Command (ModelCommand):
    help = __doc__

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '-e', '--emissions', type=str, nargs='+', metavar='KEY=VALUE',
            help='CO2 estimate parameters: hours, power_kw and either preset '
                 '({}) or intensity. Overrides the emissions section'
                 .format(', '.join(settings.SRM_CARBON_INTENSITY))
        )
        parser.add_argument(
            '-r', '--reference', type=str,
            choices=sorted(settings.SRM_REFERENCE_FIGURES['macs']),
            help='published figures to compare with. Default is the '
                 'analyze section value'
        )
        parser.add_argument(
            '--published', action='store_true',
            help='also print the emissions of the published trainings'
        )

    def handle(self, *args, out, emissions=None, reference=None,
               published=False, **options):
        doc = self.load(**options)
        section = doc.analyze
        spec = doc.emissions
        try:
            if emissions:
                spec = EmissionsSpec.from_dict(parse_pairs(emissions))
            report = analyze(doc.model, section['input_extents'],
                             section['batch'], section['bytes_per_element'],
                             reference or section.get('reference'), spec)
        except ValueError as err:
            self.fail(err)

        tables = golden_tables(report)
        csv_name, json_name = settings.SRM_REPORT_FILES
        self.write(out, csv_name, tables.csv)
        self.write(out, json_name, report_json(report))
        # the per layer table is in report.csv
        for table in tables.tables[1:]:
            self.stdout.write(table.to_text())
        if published:
            self.stdout.write(emissions_table(reference_emissions())
                              .to_text())
