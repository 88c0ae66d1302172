"""
RunConfig: the one JSON document a campaign is configured by.

    {
      "routes": "sim/routes",             route library directory or file
      "route_ids": ["r01-merge"],         optional subset
      "scenario_suite": "suites/threat",  optional
      "fast": {"kind": "rule_following"},
      "slow": {"kind": "endpoint", "url": ..., "auth_env": ...},
      "parsing_mode": "CNG",
      "hybrid": false,
      "risk": {...}, "risk_parsing_mode": "DCS",
      "suffix_table": null,
      "repetitions": 10,
      "seed": 0,
      "max_frames": 2000,
      "output_dir": "runs/latest"
    }

Relative paths resolve against the directory of the config file. Keys left
out fall back to settings.DRIVEBENCH.
"""
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from django.conf import settings

from adapters.exceptions import AdapterException
from adapters.factory import build_adapter
from campaign.exceptions import ConfigError
from core.types import SceneMode
from dualsys.exceptions import DualSystemException
from dualsys.prompts import (ParsingMode,
                             load_prompt_library,
                             load_suffix_table)

PATH_KEYS = ('routes', 'scenario_suite', 'suffix_table', 'output_dir',
             'prompt_dir')


@dataclass(frozen=True)
class RunConfig:
    fast: Dict[str, Any]
    slow: Dict[str, Any]
    routes: Optional[str] = None
    route_ids: Tuple[str, ...] = ()
    scenario_suite: Optional[str] = None
    parsing_mode: str = ParsingMode.CNG
    hybrid: bool = False
    risk: Optional[Dict[str, Any]] = None
    risk_parsing_mode: str = ParsingMode.DCS
    suffix_table: Optional[str] = None
    prompt_dir: Optional[str] = None
    repetitions: int = None
    seed: int = 0
    max_frames: int = None
    blocked_frames: int = None
    history_length: int = None
    fast_deadline: float = None
    slow_deadline: float = None
    render_mode: str = SceneMode.TEXT
    parallelism: int = None
    output_dir: str = 'runs'
    label: str = ''

    def __post_init__(self):
        conf = settings.DRIVEBENCH
        defaults = {
            'routes': conf['ROUTE_LIBRARY'],
            'repetitions': conf['REPETITIONS'],
            'max_frames': conf['MAX_FRAMES'],
            'blocked_frames': conf['BLOCKED_FRAMES'],
            'history_length': conf['HISTORY_LENGTH'],
            'fast_deadline': conf['FAST_DEADLINE_S'],
            'slow_deadline': conf['SLOW_DEADLINE_S'],
            'parallelism': conf['PARALLELISM'],
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        object.__setattr__(self, 'route_ids', tuple(self.route_ids))

    @property
    def display_label(self) -> str:
        if self.label:
            return self.label
        label = f'{_adapter_name(self.fast)} / {_adapter_name(self.slow)} ' \
                f'/ {self.parsing_mode}'
        if self.hybrid:
            label += f' + hybrid({_adapter_name(self.risk or self.slow)} ' \
                     f'/ {self.risk_parsing_mode})'
        return label


def _adapter_name(config: Optional[Dict[str, Any]]) -> str:
    if not config:
        return '-'
    return config.get('name') or config.get('model') or config.get('kind', '?')


def run_config_to_dict(config: RunConfig) -> Dict[str, Any]:
    data = asdict(config)
    data['route_ids'] = list(config.route_ids)
    return data


def run_config_from_dict(data: Dict[str, Any],
                         base_dir: Union[str, Path] = None,
                         **overrides) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError('run config must be a JSON object')
    data = dict(data)
    data.update({key: value for key, value in overrides.items()
                 if value is not None})
    names = {f.name for f in fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f'unknown run config keys {sorted(unknown)}')
    for key in ('fast', 'slow'):
        if key not in data:
            raise ConfigError(f'run config needs a {key!r} adapter')
    if base_dir is not None:
        for key in PATH_KEYS:
            if data.get(key):
                data[key] = str(Path(base_dir) / data[key])
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(f'malformed run config: {exc}') from exc


def load_run_config(path: Union[str, Path], **overrides) -> RunConfig:
    """
    Reads the config document at path; flag overrides win over the file.
    """
    path = Path(path)
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f'cannot read run config {path}: {exc}') from exc
    except ValueError as exc:
        raise ConfigError(f'{path} is not JSON: {exc}') from exc
    return run_config_from_dict(data, path.parent, **overrides)


def validate(config: RunConfig) -> RunConfig:
    """
    Checks everything a campaign needs before it starts: referenced paths
    exist, numbers are in range and the adapters can be built.
    """
    for key in ('routes', 'scenario_suite', 'suffix_table', 'prompt_dir'):
        value = getattr(config, key)
        if value and not Path(value).exists():
            raise ConfigError(f'{key}: {value} does not exist')
    if isinstance(config.repetitions, bool) or \
            not isinstance(config.repetitions, int) or config.repetitions < 1:
        raise ConfigError(f'repetitions must be an integer >= 1, '
                          f'got {config.repetitions!r}')
    for key in ('max_frames', 'blocked_frames', 'parallelism'):
        value = getattr(config, key)
        if not isinstance(value, int) or value < 1:
            raise ConfigError(f'{key} must be an integer >= 1, got {value!r}')
    if not isinstance(config.history_length, int) or config.history_length < 0:
        raise ConfigError(f'history_length must be >= 0, '
                          f'got {config.history_length!r}')
    for key in ('fast_deadline', 'slow_deadline'):
        value = getattr(config, key)
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not value > 0:
            raise ConfigError(f'{key} must be positive')
    for key in ('parsing_mode', 'risk_parsing_mode'):
        if getattr(config, key) not in ParsingMode.values:
            raise ConfigError(f'{key}: unknown parsing mode '
                              f'{getattr(config, key)!r}')
    if config.render_mode not in SceneMode.values:
        raise ConfigError(f'unknown render mode {config.render_mode!r}')
    if config.risk is not None and not config.hybrid:
        raise ConfigError('a risk adapter is configured but hybrid is off')
    for key in ('fast', 'slow', 'risk'):
        adapter = getattr(config, key)
        if adapter is None:
            continue
        try:
            build_adapter(adapter)
        except AdapterException as exc:
            raise ConfigError(f'{key} adapter: {exc}') from exc
    try:
        load_prompt_library(config.prompt_dir)
        if config.suffix_table:
            load_suffix_table(config.suffix_table)
    except DualSystemException as exc:
        raise ConfigError(f'prompts: {exc}') from exc
    return config


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    return replace(config, **{key: value for key, value in overrides.items()
                              if value is not None})
