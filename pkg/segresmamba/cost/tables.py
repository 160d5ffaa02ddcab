"""
Tabular rendering of cost reports, as CSV and aligned text (UTF-8, LF line
endings, fixed column order).
"""
import csv
import io
import json

from .analysis import CostRow


__all__ = ['Table', 'TableDocument', 'golden_tables', 'emissions_table',
           'parse_csv', 'report_json']


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return '' if value is None else str(value)


def parse_csv(text):
    """ Return `(header, rows)` of a CSV text, cells as strings. """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return [], []
    return rows[0], rows[1:]


class Table:
    """
    Titled table. `formats` maps a column to the format string used for its
    text rendering (CSV always holds full precision).
    """
    def __init__(self, title, columns, rows=None, formats=None):
        self.title = title
        self.columns = tuple(columns)
        self.rows = [tuple(row) for row in rows or []]
        self.formats = formats or {}

    def __len__(self):
        return len(self.rows)

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell(v) for v in row])
        return out.getvalue()

    def _text_cell(self, column, value):
        fmt = self.formats.get(column)
        if fmt and value is not None:
            return fmt.format(value)
        if isinstance(value, float):
            return '{:.6g}'.format(value)
        return _cell(value)

    def to_text(self):
        cells = [[self._text_cell(c, v) for c, v in zip(self.columns, row)]
                 for row in self.rows]
        widths = [max([len(c)] + [len(row[i]) for row in cells])
                  for i, c in enumerate(self.columns)]

        def line(values):
            # names left, numbers right
            return '  '.join(
                v.ljust(w) if i == 0 else v.rjust(w)
                for i, (v, w) in enumerate(zip(values, widths))).rstrip()

        lines = [self.title, line(self.columns),
                 line(['-' * w for w in widths])]
        lines.extend(line(row) for row in cells)
        return '\n'.join(lines) + '\n'


class TableDocument:
    """ Ordered tables of a report. """
    def __init__(self, tables):
        self.tables = list(tables)

    def __getitem__(self, title):
        for table in self.tables:
            if table.title == title:
                return table
        raise KeyError(title)

    @property
    def csv(self):
        """ CSV of the per layer table. """
        return self.tables[0].to_csv()

    @property
    def text(self):
        return '\n'.join(t.to_text() for t in self.tables if t.rows
                         or t is self.tables[0])


def golden_tables(report):
    """
    Tables of a CostReport: per layer rows, totals, memory breakdown,
    reference comparisons and CO2 (the last three when present).
    """
    tables = [Table('layers', CostRow.columns,
                    [row.as_tuple() for row in report.rows])]
    totals = report.totals
    tables.append(Table('totals', ('metric', 'value'), [
        (key, totals[key]) for key in CostRow.columns[2:]
    ] + [('peak_memory_bytes', report.peak_memory_bytes)]))
    if report.memory:
        tables.append(Table('memory', ('kind', 'bytes'),
                            list(report.memory.items())))
    if report.comparisons:
        columns = ('metric', 'reference_set', 'value', 'reference',
                   'deviation_pct', 'ratio')
        tables.append(Table(
            'reference', columns,
            [tuple(c[k] for k in columns) for c in report.comparisons],
            {'deviation_pct': '{:+.2f}', 'ratio': '{:.4f}'}))
    if report.co2:
        columns = ('preset', 'device_power_kw', 'hours', 'carbon_intensity',
                   'kg_co2')
        tables.append(Table('co2', columns,
                            [tuple(report.co2[k] for k in columns)],
                            {'hours': '{:.2f}', 'kg_co2': '{:.2f}'}))
    return TableDocument(tables)


def emissions_table(rows):
    """ Table of `reference_emissions()` rows. """
    return Table('emissions', ('model', 'preset', 'hours', 'kg_co2'), rows,
                 {'hours': '{:.2f}', 'kg_co2': '{:.2f}'})


def report_json(report):
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n'
