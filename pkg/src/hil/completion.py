"""
Route-completion scoring of physical-style runs: a run succeeds when it
traverses the whole planned route without a boundary crossing or collision.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from hil.client import ClientRunLog
from hil.exceptions import EmptyRouteGroup

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RouteCompletion:
    route_id: str
    successes: int
    n_runs: int
    mean_fraction: float

    @property
    def rate(self) -> float:
        return self.successes / self.n_runs


@dataclass(frozen=True)
class CompletionReport:
    routes: Tuple[RouteCompletion, ...]

    @property
    def average(self) -> float:
        """
        Mean per-route success rate, in percent.
        """
        return 100.0 * float(np.mean([route.rate for route in self.routes]))

    def as_dict(self) -> Dict[str, object]:
        return {
            'routes': {route.route_id: {'successes': route.successes,
                                        'n_runs': route.n_runs,
                                        'mean_fraction': route.mean_fraction}
                       for route in self.routes},
            'average': self.average,
        }


def completion_rate(groups: Mapping[str, Sequence[ClientRunLog]],
                    n_runs: int) -> CompletionReport:
    """
    Scores runs grouped by route. Each route is out of n_runs attempts;
    attempts without a log count as failures.
    """
    if n_runs < 1:
        raise EmptyRouteGroup(f'n_runs must be >= 1, got {n_runs}')
    if not groups:
        raise EmptyRouteGroup('no routes to score')
    routes = []
    for route_id, logs in groups.items():
        if not logs:
            raise EmptyRouteGroup(f'route {route_id!r} has no runs')
        if len(logs) > n_runs:
            raise EmptyRouteGroup(f'route {route_id!r} has {len(logs)} runs, '
                                  f'more than the {n_runs} attempted')
        successes = sum(1 for log in logs if log.success)
        fractions = [log.completed_fraction for log in logs]
        fractions += [0.0] * (n_runs - len(logs))
        routes.append(RouteCompletion(route_id, successes, n_runs,
                                      float(np.mean(fractions))))
    report = CompletionReport(tuple(routes))
    logger.info('completion over %d route(s): %.0f%%', len(routes),
                report.average)
    return report


def render_completion_table(report: CompletionReport) -> str:
    header = ['route'] + [route.route_id for route in report.routes] + \
             ['Average']
    cells = ['runs'] + [f'{route.successes}/{route.n_runs}'
                        for route in report.routes] + \
            [f'{report.average:.0f}%']
    widths = [max(len(a), len(b)) for a, b in zip(header, cells)]
    lines = [' | '.join(text.ljust(width)
                        for text, width in zip(row, widths))
             for row in (header, cells)]
    lines.insert(1, '-+-'.join('-' * width for width in widths))
    return '\n'.join(lines) + '\n'
