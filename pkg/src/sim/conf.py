from dataclasses import dataclass, fields, replace
from typing import Tuple

from django.conf import settings


@dataclass(frozen=True)
class SimConfig:
    """
    Simulator constants. Defaults come from settings.DRIVEBENCH['SIM'].
    """
    dt: float = 0.1
    max_accel: float = 4.0
    max_brake: float = 8.0
    drag: float = 0.25
    wheel_base: float = 2.9
    max_steer_angle: float = 0.7
    ego_length: float = 4.5
    ego_width: float = 2.0
    deviation_margin: float = 3.0
    finish_tolerance: float = 0.5
    stop_speed: float = 0.05
    actor_speed_jitter: float = 0.05
    render_range: float = 50.0
    raster_size: int = 64
    raster_resolution: float = 0.5
    fatal_infractions: Tuple[str, ...] = ('route_deviation',)

    @classmethod
    def from_settings(cls, **overrides) -> 'SimConfig':
        configured = settings.DRIVEBENCH.get('SIM', {})
        names = {f.name for f in fields(cls)}
        values = {key.lower(): value for key, value in configured.items()
                  if key.lower() in names}
        return replace(cls(**values), **overrides)
