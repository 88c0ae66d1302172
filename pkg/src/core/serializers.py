"""
JSON encoding of episode traces: one document per episode, keys sorted,
floats written with round-trip precision so that encode(decode(encode(t)))
is byte-identical to encode(t).
"""
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Union

from core.exceptions import CoreException, TraceFormatError
from core.types import (ActorSnapshot,
                        CommandSet,
                        ControlVector,
                        EgoState,
                        EpisodeTrace,
                        FrameRecord,
                        Infraction)


def dumps(document: Any) -> str:
    return json.dumps(document, sort_keys=True, separators=(',', ':'),
                      ensure_ascii=False, allow_nan=False)


def trace_to_dict(trace: EpisodeTrace) -> Dict[str, Any]:
    return asdict(trace)


def frame_from_dict(data: Dict[str, Any]) -> FrameRecord:
    return FrameRecord(
        frame_index=data['frame_index'],
        timestamp=data['timestamp'],
        dt=data['dt'],
        ego=EgoState(**data['ego']),
        route_progress=data['route_progress'],
        control=ControlVector(**data['control']),
        commands=CommandSet(**data['commands']),
        fallback=data['fallback'],
        failures=tuple(data['failures']),
        actors=tuple(ActorSnapshot(**actor) for actor in data['actors']),
        slow_adapter=data['slow_adapter'],
    )


def trace_from_dict(data: Dict[str, Any]) -> EpisodeTrace:
    try:
        return EpisodeTrace(
            route_id=data['route_id'],
            scenario_id=data['scenario_id'],
            frames=tuple(frame_from_dict(frame) for frame in data['frames']),
            infractions=tuple(Infraction(**infraction)
                              for infraction in data['infractions']),
            completed_fraction=data['completed_fraction'],
            terminated_by=data['terminated_by'],
        )
    except (KeyError, TypeError) as exc:
        raise TraceFormatError(f'malformed trace document: {exc}') from exc
    except CoreException as exc:
        raise TraceFormatError(f'invalid trace content: {exc}') from exc


def encode_trace(trace: EpisodeTrace) -> str:
    return dumps(trace_to_dict(trace))


def decode_trace(text: str) -> EpisodeTrace:
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise TraceFormatError(f'trace is not JSON: {exc}') from exc
    if not isinstance(data, dict):
        raise TraceFormatError('trace document must be an object')
    return trace_from_dict(data)


def write_trace(path: Union[str, Path], trace: EpisodeTrace) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(encode_trace(trace), encoding='utf-8')
    return path


def read_trace(path: Union[str, Path]) -> EpisodeTrace:
    return decode_trace(Path(path).read_text(encoding='utf-8'))
