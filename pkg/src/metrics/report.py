from typing import Dict, Optional, Sequence, Union

from metrics.aggregate import METRICS, Aggregate, Drop, MetricSummary

MISSING = '—'
HEADERS = {
    'success_rate': 'Success Rate',
    'driving_score': 'Driving Score',
    'efficiency': 'Efficiency',
    'comfort': 'Comfortness',
    'skill_score': 'Skill Score',
}


def format_cell(summary: Optional[MetricSummary],
                drop: Optional[Drop] = None) -> str:
    if summary is None:
        return MISSING
    cell = f'{summary.mean:.2f}±{summary.std:.2f}'
    if drop is not None:
        cell += f' ({drop.mean:+.2f})'
    return cell


def render_report(aggregates: Union[Aggregate, Sequence[Aggregate]],
                  drops: Sequence[Optional[Dict[str, Optional[Drop]]]] = None
                  ) -> str:
    """
    Plain-text table, one row per configuration and one `mean±std` column
    per metric. Rows keep the given order; a missing metric renders as "—".
    Optional drops (from compare_aggregates) are printed next to each cell.
    """
    if isinstance(aggregates, Aggregate):
        aggregates = [aggregates]
        if isinstance(drops, dict):
            drops = [drops]
    drops = drops or [None] * len(aggregates)
    header = ['Configuration'] + [HEADERS[metric] for metric in METRICS]
    rows = []
    for index, (result, row_drops) in enumerate(zip(aggregates, drops)):
        row_drops = row_drops or {}
        rows.append([result.label or f'run {index + 1}'] +
                    [format_cell(result.metrics.get(metric),
                                 row_drops.get(metric))
                     for metric in METRICS])
    widths = [max(len(row[column]) for row in [header] + rows)
              for column in range(len(header))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [cell.rjust(width) for cell, width in zip(cells[1:], widths[1:])]
        return ' | '.join([first] + rest).rstrip()

    separator = '-+-'.join('-' * width for width in widths)
    return '\n'.join([line(header), separator] + [line(row) for row in rows]) + '\n'
