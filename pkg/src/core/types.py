import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

from django.db import models

from core.exceptions import (InvalidControl,
                             InvalidState,
                             InvalidTaskSet)

TWO_PI = 2.0 * math.pi

# name, lower bound, upper bound
CONTROL_RANGES = (
    ('steer', -1.0, 1.0),
    ('throttle', 0.0, 1.0),
    ('brake', 0.0, 1.0),
)


def normalize_angle(angle: float) -> float:
    """
    Wraps an angle into (-pi, pi]. In-range values are returned untouched so
    that serialized states decode to the same bits.
    """
    if -math.pi < angle <= math.pi:
        return angle
    angle = math.fmod(angle + math.pi, TWO_PI)
    if angle <= 0.0:
        angle += TWO_PI
    return angle - math.pi


@dataclass(frozen=True)
class ControlVector:
    """
    Mid-level control triple. Steering is negative to the left, positive to
    the right; throttle and brake are intensities.
    """
    steer: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0

    def __post_init__(self):
        for name, low, high in CONTROL_RANGES:
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidControl(f'{name} is not finite: {value!r}')
            if not low <= value <= high:
                raise InvalidControl(
                    f'{name}={value!r} outside [{low}, {high}]')
            object.__setattr__(self, name, value)

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.steer, self.throttle, self.brake


def clamp_control(raw: Sequence[float]) -> ControlVector:
    """
    Clamps a raw (steer, throttle, brake) triple into the control ranges.
    Non-finite components are rejected; the caller substitutes the fallback.
    """
    if len(raw) != 3:
        raise InvalidControl(f'expected 3 components, got {len(raw)}')
    clamped = []
    for (name, low, high), value in zip(CONTROL_RANGES, raw):
        try:
            value = float(value)
        except (TypeError, ValueError) as exc:
            raise InvalidControl(f'{name} is not a number: {value!r}') from exc
        if not math.isfinite(value):
            raise InvalidControl(f'{name} is not finite: {value!r}')
        clamped.append(min(high, max(low, value)))
    return ControlVector(*clamped)


@dataclass(frozen=True)
class EgoState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    speed: float = 0.0

    def __post_init__(self):
        for name in ('x', 'y', 'heading', 'speed'):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidState(f'{name} is not finite: {value!r}')
            object.__setattr__(self, name, value)
        if self.speed < 0.0:
            raise InvalidState(f'negative speed {self.speed!r}')
        object.__setattr__(self, 'heading', normalize_angle(self.heading))


class SceneMode(models.TextChoices):
    TEXT = 'text', 'text'
    RASTER = 'raster', 'raster'


@dataclass(frozen=True)
class ScenePayload:
    """
    Observation payload: a structured scene description or image bytes with
    a declared encoding.
    """
    mode: str = SceneMode.TEXT
    text: str = ''
    image: bytes = b''
    encoding: str = ''

    def __post_init__(self):
        if self.mode == SceneMode.RASTER and not self.encoding:
            raise InvalidState('image payload needs an encoding')


@dataclass(frozen=True)
class ActorSnapshot:
    """
    What an observation reports about one actor. Ranges and gaps are in
    meters, lateral offsets are relative to the route centerline.
    """
    actor_id: str
    kind: str
    range_m: float
    bearing: float
    gap: float
    lateral: float
    speed: float
    in_lane: bool = False
    state: str = ''


@dataclass(frozen=True)
class Observation:
    frame_index: int
    timestamp: float
    ego: EgoState
    scene: ScenePayload
    route_progress: float
    caption: str = ''
    actors: Tuple[ActorSnapshot, ...] = ()

    def __post_init__(self):
        if self.frame_index < 0:
            raise InvalidState(f'negative frame index {self.frame_index}')
        if not 0.0 <= self.route_progress <= 1.0:
            raise InvalidState(
                f'route progress {self.route_progress!r} outside [0, 1]')

    @property
    def scene_text(self) -> str:
        if self.scene.mode == SceneMode.TEXT:
            return self.scene.text
        return self.caption


class Task(models.TextChoices):
    ACTION_PREDICTION = 'action_prediction', 'action prediction'
    TRAJECTORY_FORECASTING = 'trajectory_forecasting', 'trajectory forecasting'
    SEMANTIC_REASONING = 'semantic_reasoning', 'semantic reasoning'


@dataclass(frozen=True)
class TaskSet:
    tasks: Tuple[str, ...]
    prompts: Dict[str, str]

    def __post_init__(self):
        object.__setattr__(self, 'tasks', tuple(self.tasks))
        object.__setattr__(self, 'prompts', dict(self.prompts))
        if not self.tasks:
            raise InvalidTaskSet('task set is empty')
        if len(set(self.tasks)) != len(self.tasks):
            raise InvalidTaskSet('duplicate task in task set')
        for task in self.tasks:
            if task not in Task.values:
                raise InvalidTaskSet(f'unknown task {task!r}')
            if not self.prompts.get(task):
                raise InvalidTaskSet(f'task {task!r} has no prompt')
        extra = set(self.prompts) - set(self.tasks)
        if extra:
            raise InvalidTaskSet(f'prompts for tasks not in the set: '
                                 f'{sorted(extra)}')


@dataclass(frozen=True)
class CommandSet:
    """
    Task-conditioned outputs of the fast system for one frame, plus the
    tasks that failed and why.
    """
    per_task_text: Dict[str, str] = field(default_factory=dict)
    failures: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'per_task_text', dict(self.per_task_text))
        object.__setattr__(self, 'failures', dict(self.failures))

    def check_against(self, tasks: TaskSet) -> None:
        unknown = set(self.per_task_text) - set(tasks.tasks)
        if unknown:
            raise InvalidTaskSet(f'commands for unknown tasks {sorted(unknown)}')


class InfractionKind(models.TextChoices):
    COLLISION_PEDESTRIAN = 'collision_pedestrian', 'collision with pedestrian'
    COLLISION_VEHICLE = 'collision_vehicle', 'collision with vehicle'
    COLLISION_STATIC = 'collision_static', 'collision with static object'
    RED_LIGHT = 'red_light', 'red light'
    BOUNDARY_CROSSING = 'boundary_crossing', 'boundary crossing'
    ROUTE_DEVIATION = 'route_deviation', 'route deviation'
    TIMEOUT = 'timeout', 'timeout'


@dataclass(frozen=True)
class Infraction:
    kind: str
    frame_index: int
    detail: str = ''

    def __post_init__(self):
        if self.kind not in InfractionKind.values:
            raise InvalidState(f'unknown infraction kind {self.kind!r}')
        if self.frame_index < 0:
            raise InvalidState(f'negative frame index {self.frame_index}')


class Termination(models.TextChoices):
    FINISHED = 'finished', 'finished'
    BLOCKED = 'blocked', 'blocked'
    INFRACTION_FATAL = 'infraction_fatal', 'fatal infraction'
    TIMEOUT = 'timeout', 'timeout'


@dataclass(frozen=True)
class FrameRecord:
    """
    One closed-loop step: what was observed, what the fast system said,
    which control was applied and for how long.
    """
    frame_index: int
    timestamp: float
    dt: float
    ego: EgoState
    route_progress: float
    control: ControlVector
    commands: CommandSet = field(default_factory=CommandSet)
    fallback: bool = False
    failures: Tuple[str, ...] = ()
    actors: Tuple[ActorSnapshot, ...] = ()
    slow_adapter: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'failures', tuple(self.failures))
        object.__setattr__(self, 'actors', tuple(self.actors))
        if self.frame_index < 0:
            raise InvalidState(f'negative frame index {self.frame_index}')
        if not self.dt > 0.0:
            raise InvalidState(f'frame dt must be positive, got {self.dt!r}')
        if not isinstance(self.control, ControlVector):
            raise InvalidControl('frame control is not a ControlVector')


@dataclass(frozen=True)
class EpisodeTrace:
    route_id: str
    scenario_id: Optional[str] = None
    frames: Tuple[FrameRecord, ...] = ()
    infractions: Tuple[Infraction, ...] = ()
    completed_fraction: float = 0.0
    terminated_by: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'frames', tuple(self.frames))
        object.__setattr__(self, 'infractions', tuple(self.infractions))
        if not 0.0 <= self.completed_fraction <= 1.0:
            raise InvalidState(f'completed fraction {self.completed_fraction!r}'
                               f' outside [0, 1]')
        if (self.terminated_by is not None
                and self.terminated_by not in Termination.values):
            raise InvalidState(f'unknown termination {self.terminated_by!r}')

    @property
    def last_frame_index(self) -> int:
        return self.frames[-1].frame_index if self.frames else -1

    def infraction_kinds(self) -> Iterable[str]:
        return (infraction.kind for infraction in self.infractions)
