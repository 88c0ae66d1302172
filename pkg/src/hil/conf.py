from dataclasses import dataclass, fields, replace

from django.conf import settings


@dataclass(frozen=True)
class HilConfig:
    """
    Bridge constants. Defaults come from settings.DRIVEBENCH['HIL'].
    """
    protocol_version: int = 1
    cycle_s: float = 0.5
    controller_budget_s: float = 0.5
    max_frame_bytes: int = 1 << 20
    silence_cycles: int = 3
    bind: str = '127.0.0.1:8800'
    finish_tolerance: float = 0.1

    @property
    def silence_timeout(self) -> float:
        return self.silence_cycles * self.cycle_s

    @property
    def address(self):
        host, _, port = self.bind.rpartition(':')
        return host or '127.0.0.1', int(port)

    @classmethod
    def from_settings(cls, **overrides) -> 'HilConfig':
        configured = settings.DRIVEBENCH.get('HIL', {})
        names = {f.name for f in fields(cls)}
        values = {key.lower(): value for key, value in configured.items()
                  if key.lower() in names}
        return replace(cls(**values), **overrides)
