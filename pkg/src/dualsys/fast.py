"""
Fast system: task-conditioned prompts over the observation history and the
textual commands it answers with.
"""
import logging
from typing import List, Sequence, Tuple

from django.conf import settings

from adapters.base import (Adapter,
                           Modality,
                           ModelRequest,
                           call_with_deadline)
from core.types import CommandSet, Observation, SceneMode, TaskSet
from dualsys.exceptions import HistoryError

logger = logging.getLogger(__name__)


def render_history(history: Sequence[Observation],
                   modality: str = Modality.VISION) -> Tuple[str, Tuple]:
    """
    Frames oldest first, each labelled `[frame N | t-k]`. Text scenes are
    inlined; raster scenes are attached as images for vision models and
    replaced by their captions for text-only models.
    """
    blocks = []
    images = []
    newest = len(history) - 1
    for position, observation in enumerate(history):
        label = f'[frame {observation.frame_index} | t-{newest - position}]'
        scene = observation.scene
        if scene.mode == SceneMode.RASTER and modality == Modality.VISION:
            images.append(scene)
            blocks.append(f'{label} <image {len(images)}>')
        else:
            blocks.append(f'{label}\n{observation.scene_text}')
    return '\n\n'.join(blocks), tuple(images)


def build_fast_prompts(history: Sequence[Observation],
                       tasks: TaskSet,
                       modality: str = Modality.VISION,
                       history_length: int = None
                       ) -> List[Tuple[str, ModelRequest]]:
    if not history:
        raise HistoryError('empty observation history')
    if history_length is None:
        history_length = settings.DRIVEBENCH['HISTORY_LENGTH']
    if len(history) > history_length + 1:
        raise HistoryError(f'history of {len(history)} frames exceeds '
                           f'k+1={history_length + 1}')
    frames, images = render_history(history, modality)
    prompts = []
    for task in tasks.tasks:
        prompt = (f'Task: {task}\n{tasks.prompts[task]}\n\n'
                  f'Observations, oldest first:\n{frames}\n')
        prompts.append((task, ModelRequest(prompt=prompt, images=images)))
    return prompts


def query_fast(adapter: Adapter,
               prompts: Sequence[Tuple[str, ModelRequest]],
               deadline: float = None) -> CommandSet:
    """
    One call per task, each under the fast deadline. Failed tasks land in
    CommandSet.failures; deciding on a fallback is up to the caller.
    """
    if deadline is None:
        deadline = settings.DRIVEBENCH['FAST_DEADLINE_S']
    answers = {}
    failures = {}
    for task, request in prompts:
        response = call_with_deadline(adapter, request, deadline)
        text = response.text.strip() if response.ok else ''
        if text:
            answers[task] = text
        else:
            reason = str(response.status) if not response.ok else 'blank answer'
            if response.detail:
                reason = f'{reason}: {response.detail}'
            failures[task] = reason
            logger.warning('fast system %s failed on %s: %s', adapter.name,
                           task, failures[task])
    return CommandSet(per_task_text=answers, failures=failures)
