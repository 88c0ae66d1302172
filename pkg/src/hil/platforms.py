"""
Mapping of ControlVector onto the actuation of small physical platforms.

Headings follow the simulator: positive steer turns right, i.e. clockwise.
For wheeled differential drives this means the left wheel runs faster.
Reverse driving is not supported; commanded velocity is clamped at zero.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

from django.conf import settings
from django.db import models

from core.types import ControlVector
from hil.exceptions import InvalidPlatform, PlatformMismatch


class PlatformKind(models.TextChoices):
    DIFFERENTIAL = 'differential', 'differential drive'
    ACKERMANN = 'ackermann', 'Ackermann steering'
    TRACKED = 'tracked', 'tracked'
    MECANUM = 'mecanum', 'Mecanum wheels'


@dataclass(frozen=True)
class PlatformParams:
    kind: str
    max_speed: float
    track_width: Optional[float] = None
    wheel_base: Optional[float] = None
    max_steer_angle: Optional[float] = None
    k_omega: float = 1.0
    body_length: float = 0.3
    body_width: float = 0.2

    def __post_init__(self):
        if self.kind not in PlatformKind.values:
            raise InvalidPlatform(f'unknown platform kind {self.kind!r}')
        required = ['max_speed', 'k_omega', 'body_length', 'body_width']
        if self.kind == PlatformKind.ACKERMANN:
            required += ['wheel_base', 'max_steer_angle']
        else:
            required.append('track_width')
        for name in required:
            value = getattr(self, name)
            if value is None or not math.isfinite(value) or value <= 0.0:
                raise InvalidPlatform(f'{self.kind}: {name} must be > 0, '
                                      f'got {value!r}')

    @classmethod
    def from_settings(cls, name: str, **overrides) -> 'PlatformParams':
        platforms = settings.DRIVEBENCH['HIL'].get('PLATFORMS', {})
        if name not in platforms:
            raise InvalidPlatform(f'no platform named {name!r}; configured: '
                                  f'{sorted(platforms)}')
        values = dict(platforms[name])
        values.update(overrides)
        return cls(**values)


def forward_velocity(u: ControlVector, params: PlatformParams) -> float:
    return min(params.max_speed,
               max(0.0, params.max_speed * (u.throttle - u.brake)))


def _clamp(value: float, limit: float) -> float:
    return min(limit, max(-limit, value))


def map_differential(u: ControlVector,
                     params: PlatformParams) -> Tuple[float, float]:
    """
    (left, right) wheel speeds in m/s. omega is the yaw rate in rad/s,
    counter-clockwise positive:

        v     = max_speed * (throttle - brake), clamped to [0, max_speed]
        omega = -k_omega * steer * max_speed / track_width
        left  = v - omega * track_width / 2
        right = v + omega * track_width / 2

    Tracked platforms map the same way.
    """
    if params.kind not in (PlatformKind.DIFFERENTIAL, PlatformKind.TRACKED):
        raise PlatformMismatch(f'differential mapping on a {params.kind} '
                               f'platform')
    velocity = forward_velocity(u, params)
    omega = -params.k_omega * u.steer * params.max_speed / params.track_width
    half = omega * params.track_width / 2.0
    return (_clamp(velocity - half, params.max_speed),
            _clamp(velocity + half, params.max_speed))


def map_ackermann(u: ControlVector,
                  params: PlatformParams) -> Tuple[float, float]:
    """
    (steer_angle rad, velocity m/s); steer_angle is linear in steer.
    """
    if params.kind != PlatformKind.ACKERMANN:
        raise PlatformMismatch(f'Ackermann mapping on a {params.kind} platform')
    return u.steer * params.max_steer_angle, forward_velocity(u, params)


def map_mecanum(u: ControlVector,
                params: PlatformParams) -> Tuple[float, float, float]:
    """
    (forward m/s, lateral m/s, yaw rate rad/s clockwise). ControlVector has
    no lateral component, so lateral is always zero.
    """
    if params.kind != PlatformKind.MECANUM:
        raise PlatformMismatch(f'Mecanum mapping on a {params.kind} platform')
    yaw_rate = params.k_omega * u.steer * params.max_speed / params.track_width
    return forward_velocity(u, params), 0.0, yaw_rate


def body_motion(u: ControlVector,
                params: PlatformParams) -> Tuple[float, float]:
    """
    Forward speed and clockwise yaw rate the platform executes under u.
    """
    if params.kind == PlatformKind.ACKERMANN:
        angle, velocity = map_ackermann(u, params)
        return velocity, velocity * math.tan(angle) / params.wheel_base
    if params.kind == PlatformKind.MECANUM:
        forward, _, yaw_rate = map_mecanum(u, params)
        return forward, yaw_rate
    left, right = map_differential(u, params)
    return (left + right) / 2.0, (left - right) / params.track_width
