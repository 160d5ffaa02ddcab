from .analysis import CostRow, CostReport, count_params, count_macs, \
    memory_breakdown, estimate_peak_memory, analyze, reference_comparisons, \
    GIB
from .emissions import EmissionsSpec, estimate_co2, training_hours, \
    reference_emissions, process_hours, run_emissions
from .tables import Table, TableDocument, golden_tables, emissions_table, \
    parse_csv, report_json


__all__ = ['CostRow', 'CostReport', 'count_params', 'count_macs',
           'memory_breakdown', 'estimate_peak_memory', 'analyze',
           'reference_comparisons', 'GIB', 'EmissionsSpec', 'estimate_co2',
           'training_hours', 'reference_emissions', 'process_hours',
           'run_emissions', 'Table', 'TableDocument', 'golden_tables',
           'emissions_table', 'parse_csv', 'report_json']
