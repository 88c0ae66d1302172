"""
Per-episode metrics: success, driving score, efficiency, comfort and the
per-skill success map.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

from django.conf import settings

from core.types import EpisodeTrace, FrameRecord, InfractionKind
from metrics.exceptions import InvalidPenaltyTable, InvalidThresholds
from sim.routes import ActorKind, RouteSpec, Skill

CHECKPOINTS = 20
COMFORT_WINDOW = 20
REFERENCE_RADIUS = 30.0


@dataclass(frozen=True)
class PenaltyTable:
    multipliers: Dict[str, float]

    def __post_init__(self):
        multipliers = {str(kind): float(value)
                       for kind, value in self.multipliers.items()}
        missing = set(InfractionKind.values) - set(multipliers)
        if missing:
            raise InvalidPenaltyTable(f'no multiplier for {sorted(missing)}')
        unknown = set(multipliers) - set(InfractionKind.values)
        if unknown:
            raise InvalidPenaltyTable(f'unknown infraction kinds '
                                      f'{sorted(unknown)}')
        for kind, value in multipliers.items():
            if not (math.isfinite(value) and 0.0 < value <= 1.0):
                raise InvalidPenaltyTable(f'{kind}: multiplier {value!r} '
                                          f'outside (0, 1]')
        object.__setattr__(self, 'multipliers', multipliers)

    def __getitem__(self, kind: str) -> float:
        return self.multipliers[kind]

    @classmethod
    def from_settings(cls, **overrides) -> 'PenaltyTable':
        multipliers = dict(settings.DRIVEBENCH['PENALTIES'])
        multipliers.update(overrides)
        return cls(multipliers)


@dataclass(frozen=True)
class ComfortThresholds:
    max_steer_delta: float = 0.1
    max_accel: float = 3.0
    max_jerk: float = 10.0

    def __post_init__(self):
        for name in ('max_steer_delta', 'max_accel', 'max_jerk'):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidThresholds(f'{name} must be > 0, got {value!r}')
            object.__setattr__(self, name, value)

    @classmethod
    def from_settings(cls, **overrides) -> 'ComfortThresholds':
        configured = {key.lower(): value for key, value
                      in settings.DRIVEBENCH.get('COMFORT', {}).items()}
        configured.update(overrides)
        return cls(**configured)


@dataclass(frozen=True)
class MetricsReport:
    success: bool
    driving_score: float
    efficiency: float
    comfort: Optional[float]
    skill_success: Dict[str, bool] = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return 100.0 if self.success else 0.0


def driving_score(trace: EpisodeTrace, penalties: PenaltyTable) -> float:
    """
    100 * completed_fraction * product of the penalty multipliers of every
    infraction.
    """
    factor = 1.0
    for kind in sorted(trace.infraction_kinds()):
        factor *= penalties[kind]
    return 100.0 * trace.completed_fraction * factor


def success(trace: EpisodeTrace) -> bool:
    return trace.completed_fraction == 1.0 and not trace.infractions


def reference_speed(frame: FrameRecord, speed_limit: float) -> float:
    """
    Mean speed of the road users within 30 m, else the speed limit. Traffic
    lights are not road users. A crowd that is entirely at rest gives no
    reference either.
    """
    speeds = [actor.speed for actor in frame.actors
              if actor.kind != ActorKind.TRAFFIC_LIGHT
              and actor.range_m <= REFERENCE_RADIUS]
    if not speeds or max(speeds) <= 0.0:
        return speed_limit
    return sum(speeds) / len(speeds)


def checkpoint_frames(frames: Sequence[FrameRecord]) -> Iterable[FrameRecord]:
    """
    For each 5% progress checkpoint, the first frame that reached it.
    """
    position = 0
    for index in range(1, CHECKPOINTS + 1):
        checkpoint = index / CHECKPOINTS
        while (position < len(frames)
               and frames[position].route_progress < checkpoint):
            position += 1
        if position == len(frames):
            return
        yield frames[position]


def efficiency(trace: EpisodeTrace, route: RouteSpec) -> float:
    samples = [100.0 * frame.ego.speed
               / reference_speed(frame, route.speed_limit)
               for frame in checkpoint_frames(trace.frames)]
    if not samples:
        return 0.0
    return sum(samples) / len(samples)


def window_is_smooth(frames: Sequence[FrameRecord],
                     thresholds: ComfortThresholds) -> bool:
    accels = []
    for previous, current in zip(frames, frames[1:]):
        if abs(current.control.steer - previous.control.steer) \
                > thresholds.max_steer_delta:
            return False
        accel = (current.ego.speed - previous.ego.speed) / previous.dt
        if abs(accel) > thresholds.max_accel:
            return False
        accels.append((accel, previous.dt))
    for (previous, dt), (current, _) in zip(accels, accels[1:]):
        if abs((current - previous) / dt) > thresholds.max_jerk:
            return False
    return True


def comfort(trace: EpisodeTrace,
            thresholds: ComfortThresholds) -> Optional[float]:
    """
    Percentage of disjoint 20-frame windows whose steering changes,
    accelerations and jerks all stay within thresholds. None when the trace
    holds fewer than 20 frames.
    """
    frames = trace.frames
    windows = len(frames) // COMFORT_WINDOW
    if windows == 0:
        return None
    smooth = sum(
        window_is_smooth(frames[start:start + COMFORT_WINDOW], thresholds)
        for start in range(0, windows * COMFORT_WINDOW, COMFORT_WINDOW))
    return 100.0 * smooth / windows


def skill_score(results: Mapping[str, Tuple[Iterable[str], bool]]
                ) -> Optional[float]:
    """
    Unweighted mean of the per-skill success rates. A route tagged with two
    skills counts for both; skills without routes are left out. None when no
    route carries a known skill.
    """
    attempts = {skill: 0 for skill in Skill.values}
    successes = {skill: 0 for skill in Skill.values}
    for route_id in sorted(results):
        tags, succeeded = results[route_id]
        for tag in set(tags):
            if tag in attempts:
                attempts[tag] += 1
                successes[tag] += bool(succeeded)
    rates = [100.0 * successes[skill] / attempts[skill]
             for skill in Skill.values if attempts[skill]]
    if not rates:
        return None
    return sum(rates) / len(rates)


def evaluate(trace: EpisodeTrace, route: RouteSpec,
             penalties: PenaltyTable = None,
             thresholds: ComfortThresholds = None) -> MetricsReport:
    penalties = penalties or PenaltyTable.from_settings()
    thresholds = thresholds or ComfortThresholds.from_settings()
    succeeded = success(trace)
    return MetricsReport(
        success=succeeded,
        driving_score=driving_score(trace, penalties),
        efficiency=efficiency(trace, route),
        comfort=comfort(trace, thresholds),
        skill_success={tag: succeeded for tag in route.skill_tags},
    )
