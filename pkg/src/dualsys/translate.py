"""
Slow system: from a textual command to an executable ControlVector.
"""
import logging
import re
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from django.conf import settings
from django.db import models

from adapters.base import (Adapter,
                           Modality,
                           ModelRequest,
                           ModelResponse,
                           call_with_deadline)
from core.types import ControlVector, Observation, SceneMode
from dualsys.exceptions import (DualSystemException,
                                TemplateError)
from dualsys.fast import render_history
from dualsys.parsing import parse_cng, select_dcs
from dualsys.prompts import (CandidateSet,
                             ParsingMode,
                             PromptTemplate,
                             load_prompt_library)

logger = logging.getLogger(__name__)

IMAGE_SCENE = '[current scene attached as an image]'
LEADING_WORD = re.compile(r'^[\s"\'*(\[]*(?P<word>[A-Za-z]+)')


def fallback_action() -> ControlVector:
    return ControlVector(steer=0.0, throttle=0.0, brake=1.0)


@dataclass(frozen=True)
class Translation:
    control: ControlVector
    fallback: bool = False
    failure: str = ''
    response: Optional[ModelResponse] = None


def _current_scene(history: Sequence[Observation], modality: str) -> str:
    if not history:
        return ''
    latest = history[-1]
    if latest.scene.mode == SceneMode.RASTER and modality == Modality.VISION:
        return IMAGE_SCENE
    return latest.scene_text


def build_slow_prompt(command: str,
                      history: Sequence[Observation],
                      template: PromptTemplate,
                      candidates: Optional[CandidateSet] = None,
                      modality: str = Modality.TEXT) -> str:
    if template.mode == ParsingMode.DCS and candidates is None:
        raise TemplateError(f'{template.template_id}: DCS template needs '
                            f'candidates')
    if template.mode == ParsingMode.CNG and candidates is not None:
        raise TemplateError(f'{template.template_id}: CNG template takes no '
                            f'candidates')
    values = {'command_text': command,
              'scene': _current_scene(history, modality)}
    if candidates is not None:
        values['candidates'] = candidates.listing()
    try:
        return template.body.format_map(values)
    except (KeyError, IndexError, ValueError) as exc:
        raise TemplateError(f'{template.template_id}: unresolved '
                            f'placeholder {exc}') from exc


def _slow_request(prompt: str, history: Sequence[Observation],
                  adapter: Adapter) -> ModelRequest:
    if (history and adapter.modality == Modality.VISION
            and history[-1].scene.mode == SceneMode.RASTER):
        return ModelRequest(prompt=prompt, images=(history[-1].scene,))
    return ModelRequest(prompt=prompt)


def translate(command: str,
              history: Sequence[Observation],
              mode: str,
              slow_adapter: Adapter,
              template: Optional[PromptTemplate] = None,
              candidates: Optional[CandidateSet] = None,
              deadline: float = None) -> Translation:
    """
    Builds the slow prompt, queries the slow system and parses its answer
    per mode. Every failure yields fallback_action() and a reason; nothing
    is raised, so the closed loop never stalls. Without an explicit template
    or candidate set the defaults of the prompt library are used.
    """
    if deadline is None:
        deadline = settings.DRIVEBENCH['SLOW_DEADLINE_S']
    if template is None or (mode == ParsingMode.DCS and candidates is None):
        library = load_prompt_library()
        template = template or library.template(mode=mode)
        candidates = candidates or library.candidates
    if not command or not command.strip():
        return Translation(fallback_action(), True, 'empty command')
    try:
        prompt = build_slow_prompt(
            command, history, template,
            candidates if mode == ParsingMode.DCS else None,
            slow_adapter.modality)
    except DualSystemException as exc:
        logger.warning('slow prompt rejected: %s', exc)
        return Translation(fallback_action(), True, f'prompt: {exc}')
    response = call_with_deadline(slow_adapter,
                                  _slow_request(prompt, history, slow_adapter),
                                  deadline)
    if not response.ok:
        logger.warning('slow system %s: %s %s', slow_adapter.name,
                       response.status, response.detail)
        return Translation(fallback_action(), True,
                           f'{response.status}: {response.detail}', response)
    try:
        if mode == ParsingMode.DCS:
            control = select_dcs(response.text, candidates)
        else:
            control = parse_cng(response.text)
    except DualSystemException as exc:
        logger.warning('slow answer %.80r unusable: %s', response.text, exc)
        return Translation(fallback_action(), True, f'parse: {exc}', response)
    return Translation(control, response=response)


def apply_suffix_control(command: str, suffix_table: Mapping[str, str]) -> str:
    """
    Appends the suffix of the longest table pattern the command starts with.
    A trailing period or whitespace is dropped before the suffix goes on.
    """
    matches = [pattern for pattern in suffix_table
               if pattern and command.startswith(pattern)]
    if not matches:
        return command
    pattern = max(matches, key=len)
    return command.rstrip().rstrip('.').rstrip() + suffix_table[pattern]


class HybridBranch(models.TextChoices):
    RISK = 'risk', 'risk mode'
    DEFAULT = 'default', 'default mode'


def classify_threat_answer(text: str) -> str:
    match = LEADING_WORD.match(text or '')
    if match and match['word'].lower() == 'yes':
        return HybridBranch.RISK
    return HybridBranch.DEFAULT


def hybrid_mode_select(fast_adapter: Adapter,
                       history: Sequence[Observation],
                       question: str = None,
                       deadline: float = None) -> str:
    """
    Asks the fast system whether the scene holds a threat. A leading "yes"
    picks the risk branch; "no", anything unparseable or a failed call
    picks the default branch.
    """
    if deadline is None:
        deadline = settings.DRIVEBENCH['FAST_DEADLINE_S']
    if question is None:
        question = load_prompt_library().threat_question
    frames, images = render_history(history, fast_adapter.modality)
    request = ModelRequest(prompt=f'{question}\n\nObservations, oldest '
                                  f'first:\n{frames}\n',
                           images=images)
    response = call_with_deadline(fast_adapter, request, deadline)
    if not response.ok:
        logger.warning('threat question failed (%s), using default branch',
                       response.status)
        return HybridBranch.DEFAULT
    branch = classify_threat_answer(response.text)
    logger.debug('threat answer %.60r -> %s', response.text, branch)
    return branch
