from dataclasses import replace
from typing import Iterable

from core.exceptions import FrameOrderError, InvalidState
from core.types import EpisodeTrace, FrameRecord, Infraction, Termination


def append_frame(trace: EpisodeTrace, record: FrameRecord) -> EpisodeTrace:
    """
    Returns the trace extended by one frame. Frames must arrive with
    consecutive indices starting at 0.
    """
    expected = trace.last_frame_index + 1
    if record.frame_index != expected:
        raise FrameOrderError(
            f'frame {record.frame_index} appended after frame '
            f'{trace.last_frame_index}, expected {expected}')
    return replace(trace, frames=trace.frames + (record,))


def add_infractions(trace: EpisodeTrace,
                    infractions: Iterable[Infraction]) -> EpisodeTrace:
    infractions = tuple(infractions)
    if not infractions:
        return trace
    for infraction in infractions:
        if infraction.frame_index > trace.last_frame_index:
            raise InvalidState(
                f'{infraction.kind} at frame {infraction.frame_index} is past '
                f'the last frame {trace.last_frame_index}')
    return replace(trace, infractions=trace.infractions + infractions)


def finish(trace: EpisodeTrace,
           terminated_by: Termination,
           completed_fraction: float) -> EpisodeTrace:
    return replace(trace,
                   terminated_by=terminated_by,
                   completed_fraction=completed_fraction)
