import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, FrozenSet, List, Optional, Tuple

import numpy as np

from core.types import (ControlVector,
                        EgoState,
                        Infraction,
                        InfractionKind,
                        Observation,
                        SceneMode)
from sim.conf import SimConfig
from sim.dynamics import bicycle_step
from sim.exceptions import InvalidScenario
from sim.geometry import Polyline, rectangle_corners, rectangles_overlap
from sim.routes import ActorKind, ActorSpec, Behavior, RouteSpec

if TYPE_CHECKING:
    from scengen.scenario import ScenarioSpec

logger = logging.getLogger(__name__)

# length, width in meters
FOOTPRINTS = {
    ActorKind.VEHICLE: (4.5, 2.0),
    ActorKind.PEDESTRIAN: (0.6, 0.6),
    ActorKind.STATIC_OBSTACLE: (1.5, 1.5),
}

COLLISION_KINDS = {
    ActorKind.VEHICLE: InfractionKind.COLLISION_VEHICLE,
    ActorKind.PEDESTRIAN: InfractionKind.COLLISION_PEDESTRIAN,
    ActorKind.STATIC_OBSTACLE: InfractionKind.COLLISION_STATIC,
}

# pedestrians finish crossing this far beyond the lane edge
CROSSING_CLEARANCE = 2.0


@dataclass(frozen=True)
class ActorState:
    """
    Runtime state of an actor in route coordinates (station, lateral).
    """
    spec: ActorSpec
    station: float
    lateral: float
    speed: float
    spawned: bool = False
    active_time: float = 0.0
    heading_offset: float = 0.0

    @property
    def actor_id(self) -> str:
        return self.spec.actor_id

    @property
    def kind(self) -> str:
        return self.spec.kind


@dataclass(frozen=True)
class WorldState:
    tick: int
    time: float
    ego: EgoState
    actors: Tuple[ActorState, ...]
    route: RouteSpec
    rng_seed: int
    progress: float = 0.0
    ego_station: float = 0.0
    ego_lateral: float = 0.0
    contacts: FrozenSet[str] = frozenset()
    outside_lane: bool = False
    deviated: bool = False
    scenario_id: Optional[str] = None
    render_mode: str = SceneMode.TEXT
    config: SimConfig = field(default_factory=SimConfig, compare=False,
                              repr=False)
    geometry: Polyline = field(default=None, compare=False, repr=False)


def light_is_red(spec: ActorSpec, time: float) -> bool:
    green = spec.param('green')
    red = spec.param('red')
    phase = math.fmod(time + spec.param('phase'), green + red)
    return phase >= green


def _progress(geometry: Polyline, station: float,
              config: SimConfig) -> float:
    if geometry.length - station <= config.finish_tolerance:
        return 1.0
    return min(1.0, max(0.0, station / geometry.length))


def _spawn_actor(spec: ActorSpec, geometry: Polyline,
                 rng: np.random.Generator, config: SimConfig) -> ActorState:
    if spec.pose is not None:
        station, lateral = geometry.project(spec.pose.x, spec.pose.y)
        heading_offset = spec.pose.heading - geometry.heading_at(station)
    else:
        station = spec.progress * geometry.length
        lateral = spec.offset
        heading_offset = 0.0
    speed = spec.speed
    if spec.kind != ActorKind.TRAFFIC_LIGHT and config.actor_speed_jitter:
        jitter = config.actor_speed_jitter
        speed = speed * (1.0 + float(rng.uniform(-jitter, jitter)))
    spawned = spec.kind == ActorKind.TRAFFIC_LIGHT
    return ActorState(spec=spec, station=station, lateral=lateral,
                      speed=speed, spawned=spawned,
                      heading_offset=heading_offset)


def load_route(route: RouteSpec,
               scenario: Optional['ScenarioSpec'] = None,
               seed: int = 0,
               mode: str = SceneMode.TEXT,
               config: SimConfig = None) -> WorldState:
    """
    Places the ego on the first waypoint heading toward the second and arms
    the scenario actors.
    """
    config = config or SimConfig.from_settings()
    geometry = Polyline(route.waypoints)
    if scenario is not None and scenario.base_route_id != route.route_id:
        raise InvalidScenario(f'scenario {scenario.scenario_id} is built for '
                              f'route {scenario.base_route_id}, not '
                              f'{route.route_id}')
    rng = np.random.default_rng(seed)
    actors = ()
    if scenario is not None:
        ids = [actor.actor_id for actor in scenario.actors]
        if len(set(ids)) != len(ids):
            raise InvalidScenario(f'duplicate actor ids in {scenario.scenario_id}')
        actors = tuple(_spawn_actor(spec, geometry, rng, config)
                       for spec in scenario.actors)
    x, y = route.waypoints[0]
    ego = EgoState(x=x, y=y, heading=geometry.heading_at(0.0), speed=0.0)
    return WorldState(
        tick=0,
        time=0.0,
        ego=ego,
        actors=actors,
        route=route,
        rng_seed=seed,
        scenario_id=scenario.scenario_id if scenario is not None else None,
        render_mode=mode,
        config=config,
        geometry=geometry,
    )


def route_progress(world: WorldState) -> float:
    """
    Arc-length fraction covered by the ego's closest-point projection, never
    decreasing within an episode.
    """
    return world.progress


def actor_pose(world: WorldState, actor: ActorState) -> Tuple[float, float, float]:
    x, y = world.geometry.to_world(actor.station, actor.lateral)
    heading = world.geometry.heading_at(actor.station) + actor.heading_offset
    return x, y, heading


def _advance_actor(actor: ActorState, dt: float,
                   lane_half_width: float) -> ActorState:
    spec = actor.spec
    behavior = spec.behavior
    station, lateral, speed = actor.station, actor.lateral, actor.speed
    if behavior == Behavior.CONSTANT_VELOCITY:
        station += speed * dt
    elif behavior == Behavior.CUT_IN:
        station += speed * dt
        step = spec.param('lateral_speed') * dt
        lateral = math.copysign(max(0.0, abs(lateral) - step), lateral)
    elif behavior == Behavior.SUDDEN_BRAKE:
        if actor.active_time >= spec.param('brake_after'):
            speed = max(0.0, speed - spec.param('decel') * dt)
        station += speed * dt
    elif behavior == Behavior.CROSSING:
        direction = -1.0 if spec.offset > 0.0 else 1.0
        target = direction * (lane_half_width + CROSSING_CLEARANCE)
        step = speed * dt
        if abs(target - lateral) <= step:
            lateral = target
        else:
            lateral += direction * step
    return replace(actor, station=station, lateral=lateral, speed=speed,
                   active_time=actor.active_time + dt)


def scenario_released(route: RouteSpec, scenario_id: Optional[str],
                      progress: float) -> bool:
    """
    A scenario named by route triggers stays armed until the ego progress
    passes the earliest of them; any other scenario is released at once.
    """
    gates = [trigger.trigger_progress for trigger in route.scenario_triggers
             if trigger.scenario_ref == scenario_id]
    return not gates or progress >= min(gates)


def _update_actors(world: WorldState, ego_station: float, progress: float,
                   dt: float) -> Tuple[ActorState, ...]:
    released = scenario_released(world.route, world.scenario_id, progress)
    actors = []
    for actor in world.actors:
        if actor.spawned:
            actor = _advance_actor(actor, dt, world.route.lane_half_width)
        elif (released
              and ego_station >= actor.station - actor.spec.trigger_distance):
            logger.debug('actor %s spawned at tick %d', actor.actor_id,
                         world.tick)
            actor = replace(actor, spawned=True)
        actors.append(actor)
    return tuple(actors)


def detect_infractions(previous: WorldState,
                       world: WorldState) -> Tuple[List[Infraction],
                                                   FrozenSet[str]]:
    """
    Infractions caused by the step from `previous` to `world`. Boundary,
    deviation and collision events fire on entry, not on every tick spent
    in violation. Returns the infractions and the current contact set.
    """
    frame = previous.tick
    config = world.config
    route = world.route
    infractions = []
    lateral = abs(world.ego_lateral)
    if lateral > route.lane_half_width and not previous.outside_lane:
        infractions.append(Infraction(
            InfractionKind.BOUNDARY_CROSSING, frame,
            f'lateral offset {world.ego_lateral:+.2f} m'))
    if (lateral > route.lane_half_width + config.deviation_margin
            and not previous.deviated):
        infractions.append(Infraction(
            InfractionKind.ROUTE_DEVIATION, frame,
            f'lateral offset {world.ego_lateral:+.2f} m'))

    ego_box = rectangle_corners(world.ego.x, world.ego.y, world.ego.heading,
                                config.ego_length, config.ego_width)
    contacts = set()
    for actor in world.actors:
        if not actor.spawned:
            continue
        if actor.spec.has_footprint:
            length, width = FOOTPRINTS[ActorKind(actor.kind)]
            x, y, heading = actor_pose(world, actor)
            box = rectangle_corners(x, y, heading, length, width)
            if rectangles_overlap(ego_box, box):
                contacts.add(actor.actor_id)
                if actor.actor_id not in previous.contacts:
                    infractions.append(Infraction(
                        COLLISION_KINDS[ActorKind(actor.kind)], frame,
                        actor.actor_id))
        elif (previous.ego_station < actor.station <= world.ego_station
              and lateral <= route.lane_half_width
              and light_is_red(actor.spec, world.time)):
            infractions.append(Infraction(InfractionKind.RED_LIGHT, frame,
                                          actor.actor_id))
    return infractions, frozenset(contacts)


def step(world: WorldState, u: ControlVector,
         dt: float = None) -> Tuple[WorldState, List[Infraction], Observation]:
    """
    Advances the world by one tick under control u and returns the new
    state, the infractions of this tick and the rendered observation.
    """
    from sim.render import render_observation

    config = world.config
    dt = dt or config.dt
    ego = bicycle_step(world.ego, u, dt, config)
    station, lateral = world.geometry.project(ego.x, ego.y)
    progress = max(world.progress, _progress(world.geometry, station, config))
    advanced = replace(
        world,
        tick=world.tick + 1,
        time=world.time + dt,
        ego=ego,
        actors=_update_actors(world, station, progress, dt),
        progress=progress,
        ego_station=station,
        ego_lateral=lateral,
    )
    infractions, contacts = detect_infractions(world, advanced)
    half_width = world.route.lane_half_width
    advanced = replace(
        advanced,
        contacts=contacts,
        outside_lane=abs(lateral) > half_width,
        deviated=abs(lateral) > half_width + config.deviation_margin,
    )
    for infraction in infractions:
        logger.debug('tick %d: %s %s', world.tick, infraction.kind,
                     infraction.detail)
    return advanced, infractions, render_observation(advanced,
                                                     advanced.render_mode)


def is_fatal(infraction: Infraction, config: SimConfig) -> bool:
    return infraction.kind in config.fatal_infractions
