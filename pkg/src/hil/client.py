"""
Simulated physical vehicle speaking the HIL protocol. It keeps a planar
kinematic state, renders observations from it, and applies every CONTROL
for its duration_s of simulated time.
"""
import logging
import math
import socket
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from core.types import (ActorSnapshot,
                        ControlVector,
                        EgoState,
                        Observation,
                        ScenePayload,
                        SceneMode,
                        normalize_angle)
from hil.conf import HilConfig
from hil.exceptions import ProtocolError, ProtocolException, SessionTimeout
from hil.platforms import PlatformParams, body_motion
from hil.protocol import (Bye,
                          ControlMessage,
                          Hello,
                          MessageStream,
                          ObservationMessage,
                          ResultMessage,
                          ResultStatus,
                          observation_to_payload)
from sim.geometry import Polyline, rectangle_corners, rectangles_overlap
from sim.render import describe_scene
from sim.routes import ActorKind, Behavior, RouteSpec
from sim.world import FOOTPRINTS

logger = logging.getLogger(__name__)

TERMINAL = {ResultStatus.FINISHED, ResultStatus.BOUNDARY,
            ResultStatus.COLLISION}


@dataclass(frozen=True)
class Obstacle:
    actor_id: str
    kind: str
    x: float
    y: float
    heading: float
    station: float
    lateral: float


@dataclass(frozen=True)
class ClientFrame:
    frame_index: int
    ego: EgoState
    progress: float
    control: ControlVector
    duration_s: float
    status: str


@dataclass
class ClientRunLog:
    route_id: str
    platform: str = ''
    frames: List[ClientFrame] = field(default_factory=list)
    outcome: str = ''
    completed_fraction: float = 0.0
    diagnostic: str = ''

    @property
    def success(self) -> bool:
        return self.outcome == ResultStatus.FINISHED


def integrate(ego: EgoState, velocity: float, yaw_rate: float,
              duration: float) -> EgoState:
    """
    Exact constant-twist motion over duration; yaw_rate is clockwise in
    the simulator's heading convention.
    """
    heading = ego.heading + yaw_rate * duration
    if abs(yaw_rate) < 1e-12:
        x = ego.x + velocity * math.cos(ego.heading) * duration
        y = ego.y + velocity * math.sin(ego.heading) * duration
    else:
        radius = velocity / yaw_rate
        x = ego.x + radius * (math.sin(heading) - math.sin(ego.heading))
        y = ego.y + radius * (math.cos(ego.heading) - math.cos(heading))
    return EgoState(x=x, y=y, heading=heading, speed=velocity)


class VehicleState:
    def __init__(self, route: RouteSpec, platform: PlatformParams,
                 obstacles: Sequence[Obstacle] = (),
                 finish_tolerance: float = 0.1):
        self.route = route
        self.platform = platform
        self.geometry = Polyline(route.waypoints)
        self.obstacles = tuple(obstacles)
        self.finish_tolerance = finish_tolerance
        x, y = route.waypoints[0]
        self.ego = EgoState(x=x, y=y, heading=self.geometry.heading_at(0.0))
        self.time = 0.0
        self.progress = 0.0
        self.station, self.lateral = 0.0, 0.0

    def apply(self, control: ControlVector, duration: float) -> str:
        velocity, yaw_rate = body_motion(control, self.platform)
        self.ego = integrate(self.ego, velocity, yaw_rate, duration)
        self.time += duration
        self.station, self.lateral = self.geometry.project(self.ego.x,
                                                           self.ego.y)
        if self.collided():
            return ResultStatus.COLLISION
        if abs(self.lateral) > self.route.lane_half_width:
            return ResultStatus.BOUNDARY
        self.progress = max(self.progress,
                            min(1.0, self.station / self.geometry.length))
        if self.geometry.length - self.station <= self.finish_tolerance:
            self.progress = 1.0
            return ResultStatus.FINISHED
        return ResultStatus.APPLIED

    def collided(self) -> bool:
        body = rectangle_corners(self.ego.x, self.ego.y, self.ego.heading,
                                 self.platform.body_length,
                                 self.platform.body_width)
        for obstacle in self.obstacles:
            length, width = FOOTPRINTS[ActorKind(obstacle.kind)]
            box = rectangle_corners(obstacle.x, obstacle.y, obstacle.heading,
                                    length, width)
            if rectangles_overlap(body, box):
                return True
        return False

    def observe(self, frame_index: int) -> Observation:
        actors = []
        for obstacle in self.obstacles:
            dx, dy = obstacle.x - self.ego.x, obstacle.y - self.ego.y
            actors.append(ActorSnapshot(
                actor_id=obstacle.actor_id, kind=obstacle.kind,
                range_m=math.hypot(dx, dy),
                bearing=normalize_angle(math.atan2(dy, dx) - self.ego.heading),
                gap=obstacle.station - self.station, lateral=obstacle.lateral,
                speed=0.0,
                in_lane=abs(obstacle.lateral) <= self.route.lane_half_width))
        actors.sort(key=lambda actor: (actor.range_m, actor.actor_id))
        text = describe_scene(
            frame_index=frame_index, time=self.time, ego=self.ego,
            station=self.station, lateral=self.lateral,
            route_heading=self.geometry.heading_at(self.station),
            route_length=self.geometry.length, progress=self.progress,
            lane_half_width=self.route.lane_half_width,
            speed_limit=self.platform.max_speed, actors=tuple(actors))
        return Observation(frame_index=frame_index, timestamp=self.time,
                           ego=self.ego,
                           scene=ScenePayload(mode=SceneMode.TEXT, text=text),
                           route_progress=self.progress, actors=tuple(actors))


def static_obstacles(route: RouteSpec, scenario=None) -> List[Obstacle]:
    """
    The stationary actors of a scenario that a platform can run into.
    """
    if scenario is None:
        return []
    geometry = Polyline(route.waypoints)
    obstacles = []
    for actor in scenario.actors:
        if actor.kind == ActorKind.TRAFFIC_LIGHT or actor.progress is None \
                or actor.behavior != Behavior.STATIONARY:
            continue
        station = actor.progress * geometry.length
        x, y = geometry.to_world(station, actor.offset)
        obstacles.append(Obstacle(actor.actor_id, actor.kind, x, y,
                                  geometry.heading_at(station), station,
                                  actor.offset))
    return obstacles


def sim_vehicle_client(address: Tuple[str, int], platform: PlatformParams,
                       route: RouteSpec, scenario=None,
                       config: HilConfig = None,
                       max_cycles: int = 1000) -> ClientRunLog:
    """
    Drives one physical-style run against the server at address. The run
    ends with BYE at the route end, a boundary crossing, a collision or
    after max_cycles; a silent or misbehaving server aborts it with a
    diagnostic.
    """
    config = config or HilConfig.from_settings()
    log = ClientRunLog(route_id=route.route_id, platform=platform.kind)
    vehicle = VehicleState(route, platform, static_obstacles(route, scenario),
                           config.finish_tolerance)
    timeout = config.silence_timeout
    try:
        sock = socket.create_connection(address, timeout=timeout)
    except OSError as exc:
        log.outcome, log.diagnostic = 'unreachable', str(exc)
        return log
    stream = MessageStream(sock, config.max_frame_bytes)
    try:
        stream.send(Hello(platform=platform.kind,
                          protocol_version=config.protocol_version))
        reply = stream.receive(timeout)
        if isinstance(reply, Bye):
            raise ProtocolError(f'server refused: {reply.reason}')
        if not isinstance(reply, Hello):
            raise ProtocolError(f'expected HELLO, got {reply.type}')

        for frame_index in range(max_cycles):
            observation = vehicle.observe(frame_index)
            stream.send(ObservationMessage(
                frame_index=frame_index, timestamp=observation.timestamp,
                payload=observation_to_payload(observation)))
            message = stream.receive(timeout)
            if not isinstance(message, ControlMessage):
                raise ProtocolError(f'expected CONTROL, got {message}')
            if message.frame_index != frame_index:
                raise ProtocolError(f'CONTROL for frame {message.frame_index} '
                                    f'answers observation {frame_index}')
            status = vehicle.apply(message.control, message.duration_s)
            log.frames.append(ClientFrame(frame_index, vehicle.ego,
                                          vehicle.progress, message.control,
                                          message.duration_s, status))
            stream.send(ResultMessage(frame_index=frame_index, status=status))
            if status in TERMINAL:
                log.outcome = str(status)
                break
        else:
            log.outcome = 'max_cycles'
        stream.send(Bye(reason=log.outcome))
    except SessionTimeout as exc:
        log.outcome = 'timeout'
        log.diagnostic = (f'server silent for {config.silence_cycles} '
                          f'cycle(s): {exc}')
    except ProtocolException as exc:
        log.outcome, log.diagnostic = 'protocol_error', str(exc)
        logger.warning('%s: run aborted: %s', route.route_id, exc)
    finally:
        sock.close()
    log.completed_fraction = vehicle.progress
    logger.info('%s on %s: %s at %.0f%% of the route', platform.kind,
                route.route_id, log.outcome, 100.0 * log.completed_fraction)
    return log
