import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from django.conf import settings
from django.db import models

from sim.exceptions import InvalidActor, InvalidRoute


class Skill(models.TextChoices):
    MERGING = 'merging', 'lane merging'
    OVERTAKING = 'overtaking', 'overtaking'
    EMERGENCY_BRAKE = 'emergency_brake', 'emergency braking'
    GIVE_WAY = 'give_way', 'yielding'
    TRAFFIC_SIGN = 'traffic_sign', 'traffic sign recognition'


class ActorKind(models.TextChoices):
    VEHICLE = 'vehicle', 'vehicle'
    PEDESTRIAN = 'pedestrian', 'pedestrian'
    STATIC_OBSTACLE = 'static_obstacle', 'static obstacle'
    TRAFFIC_LIGHT = 'traffic_light', 'traffic light'


class Behavior(models.TextChoices):
    STATIONARY = 'stationary', 'stationary'
    CONSTANT_VELOCITY = 'constant_velocity', 'constant velocity'
    CUT_IN = 'cut_in', 'cut in'
    SUDDEN_BRAKE = 'sudden_brake', 'sudden brake'
    CROSSING = 'crossing', 'crossing'


ALLOWED_BEHAVIORS = {
    ActorKind.VEHICLE: {Behavior.STATIONARY, Behavior.CONSTANT_VELOCITY,
                        Behavior.CUT_IN, Behavior.SUDDEN_BRAKE},
    ActorKind.PEDESTRIAN: {Behavior.STATIONARY, Behavior.CONSTANT_VELOCITY,
                           Behavior.CROSSING},
    ActorKind.STATIC_OBSTACLE: {Behavior.STATIONARY},
    ActorKind.TRAFFIC_LIGHT: {Behavior.STATIONARY},
}

# name -> (low, high, low inclusive, default)
PARAM_BOUNDS = {
    'lateral_speed': (0.0, 5.0, False, 1.0),
    'brake_after': (0.0, 30.0, True, 1.0),
    'decel': (0.0, 12.0, False, 6.0),
    'green': (0.0, 120.0, False, 6.0),
    'red': (0.0, 120.0, False, 4.0),
    'phase': (0.0, 240.0, True, 0.0),
}

BEHAVIOR_PARAMS = {
    Behavior.STATIONARY: (),
    Behavior.CONSTANT_VELOCITY: (),
    Behavior.CUT_IN: ('lateral_speed',),
    Behavior.SUDDEN_BRAKE: ('brake_after', 'decel'),
    Behavior.CROSSING: (),
}

LIGHT_PARAMS = ('green', 'red', 'phase')

MAX_OFFSET = 10.0
MAX_SPEED = 30.0
MAX_TRIGGER = 200.0


def _finite(field_name: str, value: Any) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidActor(field_name, f'not a number: {value!r}')
    if not math.isfinite(value):
        raise InvalidActor(field_name, f'not finite: {value!r}')
    return value


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0


@dataclass(frozen=True)
class ActorSpec:
    """
    One scenario actor. The spawn is either route-relative (progress along
    the route plus lateral offset, positive to the right) or an absolute
    pose. An actor stays armed until the ego gets within trigger_distance
    meters of its spawn station.
    """
    actor_id: str
    kind: str
    behavior: str = Behavior.STATIONARY
    progress: Optional[float] = None
    offset: float = 0.0
    pose: Optional[Pose] = None
    speed: float = 0.0
    trigger_distance: float = 30.0
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.actor_id:
            raise InvalidActor('actor_id', 'empty')
        if self.kind not in ActorKind.values:
            raise InvalidActor('kind', f'unknown actor kind {self.kind!r}')
        if self.behavior not in Behavior.values:
            raise InvalidActor('behavior',
                               f'unknown behavior {self.behavior!r}')
        if self.behavior not in ALLOWED_BEHAVIORS[ActorKind(self.kind)]:
            raise InvalidActor('behavior', f'{self.kind} cannot {self.behavior}')
        if (self.progress is None) == (self.pose is None):
            raise InvalidActor('progress', 'give either progress or pose')
        if self.progress is not None:
            progress = _finite('progress', self.progress)
            if not 0.0 < progress < 1.0:
                raise InvalidActor('progress', f'{progress!r} outside (0, 1)')
            object.__setattr__(self, 'progress', progress)
        offset = _finite('offset', self.offset)
        if abs(offset) > MAX_OFFSET:
            raise InvalidActor('offset', f'{offset!r} beyond +-{MAX_OFFSET} m')
        speed = _finite('speed', self.speed)
        if not 0.0 <= speed <= MAX_SPEED:
            raise InvalidActor('speed', f'{speed!r} outside [0, {MAX_SPEED}]')
        trigger = _finite('trigger', self.trigger_distance)
        if not 0.0 < trigger <= MAX_TRIGGER:
            raise InvalidActor('trigger',
                               f'{trigger!r} outside (0, {MAX_TRIGGER}]')
        object.__setattr__(self, 'offset', offset)
        object.__setattr__(self, 'speed', speed)
        object.__setattr__(self, 'trigger_distance', trigger)
        object.__setattr__(self, 'params', self._checked_params())

    def _checked_params(self) -> Dict[str, float]:
        if self.kind == ActorKind.TRAFFIC_LIGHT:
            allowed = LIGHT_PARAMS
        else:
            allowed = BEHAVIOR_PARAMS[Behavior(self.behavior)]
        checked = {}
        for name, value in self.params.items():
            if name not in allowed:
                raise InvalidActor(name, f'not a parameter of {self.behavior}')
            low, high, inclusive, _ = PARAM_BOUNDS[name]
            value = _finite(name, value)
            if value > high or value < low or (value == low and not inclusive):
                raise InvalidActor(name, f'{value!r} out of bounds')
            checked[name] = value
        return checked

    def param(self, name: str) -> float:
        return self.params.get(name, PARAM_BOUNDS[name][3])

    @property
    def has_footprint(self) -> bool:
        return self.kind != ActorKind.TRAFFIC_LIGHT


@dataclass(frozen=True)
class ScenarioTrigger:
    trigger_progress: float
    scenario_ref: str


@dataclass(frozen=True)
class RouteSpec:
    route_id: str
    waypoints: Tuple[Tuple[float, float], ...]
    lane_half_width: float = 1.75
    speed_limit: float = 8.0
    skill_tags: Tuple[str, ...] = ()
    scenario_triggers: Tuple[ScenarioTrigger, ...] = ()

    def __post_init__(self):
        waypoints = tuple((float(x), float(y)) for x, y in self.waypoints)
        object.__setattr__(self, 'waypoints', waypoints)
        object.__setattr__(self, 'skill_tags', tuple(self.skill_tags))
        object.__setattr__(self, 'scenario_triggers',
                           tuple(self.scenario_triggers))
        if not self.route_id:
            raise InvalidRoute('route without route_id')
        if len(waypoints) < 2:
            raise InvalidRoute(f'{self.route_id}: needs at least 2 waypoints, '
                               f'got {len(waypoints)}')
        for point in waypoints:
            if not all(math.isfinite(value) for value in point):
                raise InvalidRoute(f'{self.route_id}: non-finite waypoint')
        for first, second in zip(waypoints, waypoints[1:]):
            if first == second:
                raise InvalidRoute(f'{self.route_id}: repeated waypoint {first}')
        if not self.lane_half_width > 0.0:
            raise InvalidRoute(f'{self.route_id}: lane_half_width must be > 0')
        if not self.speed_limit > 0.0:
            raise InvalidRoute(f'{self.route_id}: speed_limit must be > 0')
        for tag in self.skill_tags:
            if tag not in Skill.values:
                raise InvalidRoute(f'{self.route_id}: unknown skill {tag!r}')
        for trigger in self.scenario_triggers:
            if not 0.0 < trigger.trigger_progress < 1.0:
                raise InvalidRoute(f'{self.route_id}: trigger progress '
                                   f'{trigger.trigger_progress!r} outside (0, 1)')


def actor_from_dict(data: Dict[str, Any]) -> ActorSpec:
    data = dict(data)
    pose = data.pop('pose', None)
    if pose is not None:
        pose = Pose(**pose)
    try:
        return ActorSpec(pose=pose, **data)
    except TypeError as exc:
        raise InvalidActor('actor', str(exc)) from exc


def actor_to_dict(actor: ActorSpec) -> Dict[str, Any]:
    return asdict(actor)


def route_from_dict(data: Dict[str, Any]) -> RouteSpec:
    try:
        return RouteSpec(
            route_id=data['route_id'],
            waypoints=tuple(tuple(point) for point in data['waypoints']),
            lane_half_width=data.get('lane_half_width', 1.75),
            speed_limit=data.get('speed_limit', 8.0),
            skill_tags=tuple(data.get('skill_tags', ())),
            scenario_triggers=tuple(
                ScenarioTrigger(**trigger)
                for trigger in data.get('scenario_triggers', ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRoute(f'malformed route document: {exc}') from exc


def route_to_dict(route: RouteSpec) -> Dict[str, Any]:
    data = asdict(route)
    data['waypoints'] = [list(point) for point in route.waypoints]
    return data


def load_route_file(path: Union[str, Path]) -> RouteSpec:
    with open(path, encoding='utf-8') as handle:
        return route_from_dict(json.load(handle))


def load_route_library(directory: Union[str, Path] = None) -> List[RouteSpec]:
    """
    Loads every *.json route under a directory, ordered by route_id. A file
    may hold one route object or a list of them.
    """
    directory = Path(directory or settings.DRIVEBENCH['ROUTE_LIBRARY'])
    if directory.is_file():
        paths = [directory]
    else:
        paths = sorted(directory.glob('*.json'))
    routes = []
    for path in paths:
        with open(path, encoding='utf-8') as handle:
            document = json.load(handle)
        documents = document if isinstance(document, list) else [document]
        routes.extend(route_from_dict(item) for item in documents)
    seen = set()
    for route in routes:
        if route.route_id in seen:
            raise InvalidRoute(f'duplicate route_id {route.route_id!r}')
        seen.add(route.route_id)
    return sorted(routes, key=lambda route: route.route_id)
