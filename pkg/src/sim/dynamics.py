import math

from core.types import ControlVector, EgoState
from sim.conf import SimConfig
from sim.exceptions import SimException


def bicycle_step(ego: EgoState,
                 u: ControlVector,
                 dt: float,
                 config: SimConfig = None) -> EgoState:
    """
    Kinematic bicycle update:

        a        = A_max*throttle - B_max*brake - C_drag*speed
        speed'   = max(0, speed + a*dt)
        heading' = heading + (speed'/L) * tan(delta_max*steer) * dt

    then the position advances along heading'. Below config.stop_speed with
    no throttle the vehicle comes to rest.
    """
    if not dt > 0.0:
        raise SimException(f'dt must be positive, got {dt!r}')
    config = config or SimConfig.from_settings()
    accel = (config.max_accel * u.throttle
             - config.max_brake * u.brake
             - config.drag * ego.speed)
    speed = max(0.0, ego.speed + accel * dt)
    if speed < config.stop_speed and u.throttle == 0.0:
        speed = 0.0
    yaw_rate = (speed / config.wheel_base
                * math.tan(config.max_steer_angle * u.steer))
    heading = ego.heading + yaw_rate * dt
    return EgoState(x=ego.x + speed * math.cos(heading) * dt,
                    y=ego.y + speed * math.sin(heading) * dt,
                    heading=heading,
                    speed=speed)
