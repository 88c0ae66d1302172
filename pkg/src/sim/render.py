"""
Observation rendering: a deterministic structured scene description and a
top-down, ego-centred grayscale raster.
"""
import math
from typing import Optional, Tuple

import numpy as np

from core.types import (ActorSnapshot,
                        EgoState,
                        Observation,
                        ScenePayload,
                        SceneMode,
                        normalize_angle)
from sim.geometry import points_in_rectangle
from sim.routes import ActorKind
from sim.world import FOOTPRINTS, WorldState, actor_pose, light_is_red

RASTER_LANE = 60
RASTER_LIGHT = 100
RASTER_EGO = 160
RASTER_ACTOR = {
    ActorKind.VEHICLE: 220,
    ActorKind.PEDESTRIAN: 255,
    ActorKind.STATIC_OBSTACLE: 140,
}


def snapshot_actors(world: WorldState) -> Tuple[ActorSnapshot, ...]:
    ego = world.ego
    snapshots = []
    for actor in world.actors:
        if not actor.spawned:
            continue
        x, y, _ = actor_pose(world, actor)
        dx, dy = x - ego.x, y - ego.y
        distance = math.hypot(dx, dy)
        if distance > world.config.render_range:
            continue
        state = ''
        if actor.kind == ActorKind.TRAFFIC_LIGHT:
            state = 'red' if light_is_red(actor.spec, world.time) else 'green'
            in_lane = True
        else:
            in_lane = abs(actor.lateral) <= world.route.lane_half_width
        snapshots.append(ActorSnapshot(
            actor_id=actor.actor_id,
            kind=str(actor.kind),
            range_m=distance,
            bearing=normalize_angle(math.atan2(dy, dx) - ego.heading),
            gap=actor.station - world.ego_station,
            lateral=actor.lateral,
            speed=actor.speed,
            in_lane=in_lane,
            state=state,
        ))
    snapshots.sort(key=lambda snapshot: (snapshot.range_m, snapshot.actor_id))
    return tuple(snapshots)


def describe_scene(frame_index: int,
                   time: float,
                   ego: EgoState,
                   station: float,
                   lateral: float,
                   route_heading: float,
                   route_length: float,
                   progress: float,
                   lane_half_width: float,
                   speed_limit: float,
                   actors: Tuple[ActorSnapshot, ...] = ()) -> str:
    """
    Structured text description of a scene. Shared by the simulator and
    the simulated vehicle client.
    """
    lines = [
        f'frame {frame_index} t={time:.2f}s',
        f'ego: speed={ego.speed:.2f} m/s heading={ego.heading:+.4f} rad',
        f'lane: offset={lateral:+.3f} m half_width={lane_half_width:.2f} m '
        f'heading_error={normalize_angle(ego.heading - route_heading):+.4f} rad',
        f'route: progress={progress:.3f} '
        f'remaining={max(0.0, route_length - station):.1f} m '
        f'speed_limit={speed_limit:.2f} m/s',
    ]
    lights = [actor for actor in actors
              if actor.kind == ActorKind.TRAFFIC_LIGHT and actor.gap > 0.0]
    if lights:
        light = min(lights, key=lambda actor: actor.gap)
        lines.append(f'traffic_light: {light.state} gap={light.gap:.2f} m')
    else:
        lines.append('traffic_light: none')
    others = [actor for actor in actors
              if actor.kind != ActorKind.TRAFFIC_LIGHT]
    if not others:
        lines.append('actors: no actors')
    else:
        lines.append(f'actors: {len(others)}')
        for actor in others:
            lines.append(
                f'- actor {actor.actor_id} kind={actor.kind} '
                f'range={actor.range_m:.2f} m bearing={actor.bearing:+.3f} rad '
                f'gap={actor.gap:+.2f} m lateral={actor.lateral:+.2f} m '
                f'speed={actor.speed:.2f} m/s '
                f'in_lane={"yes" if actor.in_lane else "no"}')
    return '\n'.join(lines)


def _world_description(world: WorldState,
                       actors: Tuple[ActorSnapshot, ...]) -> str:
    return describe_scene(
        frame_index=world.tick,
        time=world.time,
        ego=world.ego,
        station=world.ego_station,
        lateral=world.ego_lateral,
        route_heading=world.geometry.heading_at(world.ego_station),
        route_length=world.geometry.length,
        progress=world.progress,
        lane_half_width=world.route.lane_half_width,
        speed_limit=world.route.speed_limit,
        actors=actors,
    )


def rasterize(world: WorldState) -> np.ndarray:
    """
    Top-down grayscale image centred on the ego, ego heading pointing up.
    """
    config = world.config
    size = config.raster_size
    resolution = config.raster_resolution
    ego = world.ego
    offsets = (np.arange(size) - size / 2.0 + 0.5) * resolution
    forward = -offsets[:, None] * np.ones((1, size))
    right = np.ones((size, 1)) * offsets[None, :]
    cos_h, sin_h = math.cos(ego.heading), math.sin(ego.heading)
    xs = ego.x + forward * cos_h - right * sin_h
    ys = ego.y + forward * sin_h + right * cos_h
    points = np.stack([xs.ravel(), ys.ravel()], axis=1)

    image = np.zeros(size * size, dtype=np.uint8)
    stations, laterals = world.geometry.project_many(points)
    lane = ((np.abs(laterals) <= world.route.lane_half_width)
            & (stations >= 0.0) & (stations <= world.geometry.length))
    image[lane] = RASTER_LANE

    def paint(x, y, heading, length, width, value):
        image[points_in_rectangle(points, x, y, heading, length, width)] = value

    for actor in world.actors:
        if not actor.spawned:
            continue
        x, y, heading = actor_pose(world, actor)
        if actor.kind == ActorKind.TRAFFIC_LIGHT:
            paint(x, y, heading, 1.0, 2.0 * world.route.lane_half_width,
                  RASTER_LIGHT)
        else:
            length, width = FOOTPRINTS[ActorKind(actor.kind)]
            paint(x, y, heading, length, width,
                  RASTER_ACTOR[ActorKind(actor.kind)])
    paint(ego.x, ego.y, ego.heading, config.ego_length, config.ego_width,
          RASTER_EGO)
    return image.reshape(size, size)


def render_observation(world: WorldState,
                       mode: Optional[str] = None) -> Observation:
    mode = mode or world.render_mode
    actors = snapshot_actors(world)
    description = _world_description(world, actors)
    if mode == SceneMode.RASTER:
        size = world.config.raster_size
        scene = ScenePayload(mode=SceneMode.RASTER,
                             image=rasterize(world).tobytes(),
                             encoding=f'gray8;{size}x{size}')
        caption = description
    else:
        scene = ScenePayload(mode=SceneMode.TEXT, text=description)
        caption = ''
    return Observation(
        frame_index=world.tick,
        timestamp=world.time,
        ego=world.ego,
        scene=scene,
        route_progress=world.progress,
        caption=caption,
        actors=actors,
    )
