"""
Aggregation over repeated runs: per-metric mean and sample standard
deviation, with missing values (None) left out.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from metrics.exceptions import EmptyAggregate
from metrics.scoring import MetricsReport, skill_score

METRICS = ('success_rate', 'driving_score', 'efficiency', 'comfort',
           'skill_score')


@dataclass(frozen=True)
class RunSummary:
    """
    One repetition over a route set: every metric already reduced over the
    routes of that repetition.
    """
    success_rate: float
    driving_score: float
    efficiency: float
    comfort: Optional[float] = None
    skill_score: Optional[float] = None
    episodes: int = 0


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class Aggregate:
    metrics: Dict[str, Optional[MetricSummary]]
    n: int
    label: str = ''
    extra: Dict[str, int] = field(default_factory=dict)

    def __getitem__(self, metric: str) -> Optional[MetricSummary]:
        return self.metrics[metric]


def _values(item: Union[MetricsReport, RunSummary]) -> Dict[str, Optional[float]]:
    if isinstance(item, MetricsReport):
        tags = tuple(item.skill_success)
        return {
            'success_rate': item.success_rate,
            'driving_score': item.driving_score,
            'efficiency': item.efficiency,
            'comfort': item.comfort,
            'skill_score': skill_score({'': (tags, item.success)}),
        }
    return {metric: getattr(item, metric) for metric in METRICS}


def summarize(values: Sequence[float]) -> MetricSummary:
    data = np.asarray(values, dtype=float)
    mean = float(np.mean(data))
    # rounding may push the mean just outside the sample range
    mean = min(max(mean, float(data.min())), float(data.max()))
    std = float(np.std(data, ddof=1)) if len(data) > 1 else 0.0
    return MetricSummary(mean=mean, std=std, n=len(data))


def aggregate(items: Sequence[Union[MetricsReport, RunSummary]],
              label: str = '') -> Aggregate:
    """
    Mean and sample standard deviation (n - 1 denominator, 0 for a single
    run) of every metric. Success is aggregated as a success-rate percentage.
    A metric missing from every item stays missing.
    """
    if not items:
        raise EmptyAggregate('nothing to aggregate')
    columns = {metric: [] for metric in METRICS}
    for item in items:
        for metric, value in _values(item).items():
            if value is not None:
                columns[metric].append(value)
    return Aggregate(
        metrics={metric: summarize(values) if values else None
                 for metric, values in columns.items()},
        n=len(items),
        label=label,
    )


def summarize_run(results: Sequence[Tuple[str, MetricsReport]]) -> RunSummary:
    """
    Reduces the (route_id, report) pairs of one repetition to a RunSummary.
    """
    if not results:
        raise EmptyAggregate('repetition without episodes')
    reports = [report for _, report in results]
    comforts = [report.comfort for report in reports
                if report.comfort is not None]
    skills = {}
    for route_id, report in results:
        tags, succeeded = skills.get(route_id, ((), True))
        skills[route_id] = (tuple(report.skill_success) or tags,
                            succeeded and report.success)
    return RunSummary(
        success_rate=float(np.mean([report.success_rate for report in reports])),
        driving_score=float(np.mean([report.driving_score
                                     for report in reports])),
        efficiency=float(np.mean([report.efficiency for report in reports])),
        comfort=float(np.mean(comforts)) if comforts else None,
        skill_score=skill_score(skills),
        episodes=len(reports),
    )


@dataclass(frozen=True)
class Drop:
    mean: float
    std: float


def compare_aggregates(baseline: Aggregate,
                       threat: Aggregate) -> Dict[str, Optional[Drop]]:
    """
    Per metric: threat mean minus baseline mean, and the change in std.
    Negative means the threat run scored lower.
    """
    drops = {}
    for metric in METRICS:
        before, after = baseline.metrics.get(metric), threat.metrics.get(metric)
        if before is None or after is None:
            drops[metric] = None
        else:
            drops[metric] = Drop(mean=after.mean - before.mean,
                                 std=after.std - before.std)
    return drops


def aggregate_to_dict(result: Aggregate) -> Dict:
    return {
        'label': result.label,
        'n': result.n,
        'extra': dict(sorted(result.extra.items())),
        'metrics': {
            metric: None if summary is None else
            {'mean': summary.mean, 'std': summary.std, 'n': summary.n}
            for metric, summary in result.metrics.items()
        },
    }


def aggregate_from_dict(data: Mapping) -> Aggregate:
    return Aggregate(
        metrics={metric: None if data['metrics'].get(metric) is None else
                 MetricSummary(**data['metrics'][metric])
                 for metric in METRICS},
        n=data['n'],
        label=data.get('label', ''),
        extra=dict(data.get('extra', {})),
    )
