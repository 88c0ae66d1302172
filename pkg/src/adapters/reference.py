"""
Deterministic rule-following stand-in for the fast and slow systems.

It reads the structured scene text the simulator renders (the last
`frame N t=...` block of the prompt) and answers like a cautious driver:
stop for blocking road users and red lights, keep the lane center, hold the
speed limit. Prompts carrying a `Command:` line are treated as slow-system
translation requests and answered with controls, or with a candidate label
when a `Candidates:` list is present.
"""
import math
import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

from adapters.base import (Adapter,
                           Modality,
                           ModelRequest,
                           ModelResponse,
                           ResponseStatus)

FRAME_HEADER = re.compile(r'^frame \d+ t=', re.MULTILINE)
EGO = re.compile(r'^ego: speed=(?P<speed>[-+\d.]+) m/s', re.MULTILINE)
LANE = re.compile(r'^lane: offset=(?P<offset>[-+\d.]+) m '
                  r'half_width=(?P<half_width>[\d.]+) m '
                  r'heading_error=(?P<heading_error>[-+\d.]+) rad', re.MULTILINE)
ROUTE = re.compile(r'speed_limit=(?P<speed_limit>[\d.]+) m/s')
LIGHT = re.compile(r'^traffic_light: (?P<state>red|green) gap=(?P<gap>[-+\d.]+) m',
                   re.MULTILINE)
ACTOR = re.compile(r'^- actor (?P<actor_id>\S+) kind=(?P<kind>\S+) '
                   r'range=(?P<range>[\d.]+) m bearing=\S+ rad '
                   r'gap=(?P<gap>[-+\d.]+) m lateral=(?P<lateral>[-+\d.]+) m '
                   r'speed=(?P<speed>[\d.]+) m/s', re.MULTILINE)
TASK = re.compile(r'^Task: (?P<task>\w+)', re.MULTILINE)
COMMAND = re.compile(r'^Command: (?P<command>.+)$', re.MULTILINE)
CANDIDATE = re.compile(r'^- (?P<label>[^:\n]+): steer=(?P<steer>[-+\d.]+) '
                       r'throttle=(?P<throttle>[-+\d.]+) '
                       r'brake=(?P<brake>[-+\d.]+)', re.MULTILINE)
SPEED_SUFFIX = re.compile(r'with speed\s*=\s*(?P<throttle>[\d.]+)')

EGO_HALF_LENGTH = 2.25
PATH_HALF_WIDTH = {'vehicle': 2.5, 'pedestrian': 3.0, 'static_obstacle': 2.5}
STANDSTILL_GAP = 4.0
STEER_THRESHOLD = 0.25
HEADING_WEIGHT = 2.0

# command prefix -> (steer, throttle, brake), longest prefixes first
COMMAND_CONTROLS = (
    ('keep going straight', (0.0, 0.45, 0.0)),
    ('go straight', (0.0, 0.45, 0.0)),
    ('steer right', (0.15, 0.3, 0.0)),
    ('turn right', (0.15, 0.3, 0.0)),
    ('steer left', (-0.15, 0.3, 0.0)),
    ('turn left', (-0.15, 0.3, 0.0)),
    ('slow down', (0.0, 0.0, 0.3)),
    ('speed up', (0.0, 0.7, 0.0)),
    ('stop', (0.0, 0.0, 1.0)),
)


@dataclass(frozen=True)
class ActorReading:
    actor_id: str
    kind: str
    range_m: float
    gap: float
    lateral: float
    speed: float


@dataclass(frozen=True)
class SceneReading:
    speed: float
    offset: float
    heading_error: float
    speed_limit: float
    light_state: Optional[str]
    light_gap: float
    actors: Tuple[ActorReading, ...]

    @property
    def stopping_distance(self) -> float:
        return self.speed ** 2 / 8.0 + 8.0


def last_scene(prompt: str) -> Optional[str]:
    headers = list(FRAME_HEADER.finditer(prompt))
    if not headers:
        return None
    return prompt[headers[-1].start():]


def read_scene(text: str) -> Optional[SceneReading]:
    ego, lane, route = EGO.search(text), LANE.search(text), ROUTE.search(text)
    if not (ego and lane and route):
        return None
    light = LIGHT.search(text)
    actors = tuple(
        ActorReading(actor_id=match['actor_id'], kind=match['kind'],
                     range_m=float(match['range']), gap=float(match['gap']),
                     lateral=float(match['lateral']),
                     speed=float(match['speed']))
        for match in ACTOR.finditer(text))
    return SceneReading(
        speed=float(ego['speed']),
        offset=float(lane['offset']),
        heading_error=float(lane['heading_error']),
        speed_limit=float(route['speed_limit']),
        light_state=light['state'] if light else None,
        light_gap=float(light['gap']) if light else math.inf,
        actors=actors,
    )


def blocking_actors(scene: SceneReading,
                    horizon: float = None) -> List[ActorReading]:
    horizon = scene.stopping_distance if horizon is None else horizon
    blocking = []
    for actor in scene.actors:
        half_width = PATH_HALF_WIDTH.get(actor.kind, 2.5)
        if actor.gap <= 0.0 or abs(actor.lateral - scene.offset) >= half_width:
            continue
        clearance = actor.gap - 2.0 * EGO_HALF_LENGTH
        if clearance >= horizon:
            continue
        if actor.speed >= scene.speed and clearance > STANDSTILL_GAP:
            continue
        blocking.append(actor)
    return blocking


def red_light_ahead(scene: SceneReading, horizon: float = None) -> bool:
    horizon = scene.stopping_distance if horizon is None else horizon
    return scene.light_state == 'red' and scene.light_gap < horizon


def driving_command(scene: SceneReading) -> str:
    if blocking_actors(scene) or red_light_ahead(scene):
        return 'Stop'
    error = scene.offset + HEADING_WEIGHT * scene.heading_error
    if error > STEER_THRESHOLD:
        return 'Steer left'
    if error < -STEER_THRESHOLD:
        return 'Steer right'
    if scene.speed > scene.speed_limit:
        return 'Slow down'
    return 'Keep going straight'


def command_control(command: str) -> Optional[Tuple[float, float, float]]:
    lowered = command.strip().lower()
    for prefix, control in COMMAND_CONTROLS:
        if lowered.startswith(prefix):
            suffix = SPEED_SUFFIX.search(lowered)
            if suffix and control[2] == 0.0:
                return control[0], min(1.0, float(suffix['throttle'])), 0.0
            return control
    return None


class RuleFollowingAdapter(Adapter):
    name = 'rule_following'
    modality = Modality.TEXT

    def __init__(self, name: str = None):
        if name:
            self.name = name

    def complete(self, request: ModelRequest) -> ModelResponse:
        command = COMMAND.search(request.prompt)
        if command:
            return self._translate(command['command'], request.prompt)
        text = last_scene(request.prompt)
        scene = read_scene(text) if text else None
        if scene is None:
            return ModelResponse.failure(ResponseStatus.REMOTE_ERROR,
                                         'no readable scene in prompt')
        if 'security threat' in request.prompt:
            return ModelResponse(text=self._threat_answer(scene))
        task = TASK.search(request.prompt)
        task = task['task'] if task else 'action_prediction'
        if task == 'trajectory_forecasting':
            return ModelResponse(text=self._trajectory(scene))
        if task == 'semantic_reasoning':
            return ModelResponse(text=self._reasoning(scene))
        return ModelResponse(text=driving_command(scene))

    def _translate(self, command: str, prompt: str) -> ModelResponse:
        control = command_control(command)
        if control is None:
            return ModelResponse(text=f'I cannot act on "{command}".')
        candidates = list(CANDIDATE.finditer(prompt))
        if candidates:
            best = min(candidates, key=lambda match: (
                math.dist(control, (float(match['steer']),
                                    float(match['throttle']),
                                    float(match['brake']))),
                match.start()))
            return ModelResponse(text=best['label'].strip())
        steer, throttle, brake = control
        return ModelResponse(
            text=f'steer: {steer}, throttle: {throttle}, brake: {brake}')

    def _threat_answer(self, scene: SceneReading) -> str:
        horizon = 2.0 * scene.stopping_distance
        blocking = blocking_actors(scene, horizon)
        if blocking:
            actor = blocking[0]
            return (f'Yes, {actor.kind} {actor.actor_id} is in the path '
                    f'{actor.gap:.1f} m ahead.')
        if red_light_ahead(scene, horizon):
            return f'Yes, red light {scene.light_gap:.1f} m ahead.'
        return 'No, the path ahead is clear.'

    def _trajectory(self, scene: SceneReading) -> str:
        points = ', '.join(f'(0.0, {scene.speed * second:.1f})'
                           for second in (1, 2, 3))
        return f'Trajectory: {points}'

    def _reasoning(self, scene: SceneReading) -> str:
        if not scene.actors:
            return 'No road users nearby; keep the lane and the speed limit.'
        nearest = min(scene.actors, key=lambda actor: actor.range_m)
        return (f'{len(scene.actors)} road users nearby; the nearest is '
                f'{nearest.kind} {nearest.actor_id} at {nearest.range_m:.1f} m.')
