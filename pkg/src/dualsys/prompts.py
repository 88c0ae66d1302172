"""
Prompt templates, candidate sets, task prompts and suffix tables. They are
data, loaded from a versioned prompt directory of JSON documents.
"""
import json
import logging
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

from django.conf import settings
from django.db import models

from core.exceptions import CoreException
from core.types import ControlVector, TaskSet
from dualsys.exceptions import InvalidCandidates, TemplateError

logger = logging.getLogger(__name__)

PLACEHOLDERS = ('command_text', 'scene', 'candidates')


class ParsingMode(models.TextChoices):
    CNG = 'CNG', 'continuous numeric generation'
    DCS = 'DCS', 'discrete command selection'


def template_fields(body: str) -> Tuple[str, ...]:
    try:
        parsed = list(string.Formatter().parse(body))
    except ValueError as exc:
        raise TemplateError(f'malformed template: {exc}') from exc
    return tuple(name for _, name, _, _ in parsed if name is not None)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    mode: str = ParsingMode.CNG

    def __post_init__(self):
        if self.mode not in ParsingMode.values:
            raise TemplateError(f'{self.template_id}: unknown mode {self.mode!r}')
        names = template_fields(self.body)
        unknown = [name for name in names if name not in PLACEHOLDERS]
        if unknown:
            raise TemplateError(f'{self.template_id}: unknown placeholders '
                                f'{unknown}')
        if 'command_text' not in names:
            raise TemplateError(f'{self.template_id}: no {{command_text}}')
        if self.mode == ParsingMode.DCS and 'candidates' not in names:
            raise TemplateError(f'{self.template_id}: DCS template without '
                                f'{{candidates}}')
        if self.mode == ParsingMode.CNG and 'candidates' in names:
            raise TemplateError(f'{self.template_id}: CNG template with '
                                f'{{candidates}}')


@dataclass(frozen=True)
class CandidateSet:
    entries: Tuple[Tuple[str, ControlVector], ...]

    def __post_init__(self):
        entries = tuple((label, control) for label, control in self.entries)
        object.__setattr__(self, 'entries', entries)
        if len(entries) < 2:
            raise InvalidCandidates(f'need at least 2 candidates, got '
                                    f'{len(entries)}')
        seen = set()
        for label, control in entries:
            if not isinstance(label, str) or not re.search(r'\w', label):
                raise InvalidCandidates(f'bad candidate label {label!r}')
            if label.strip() != label or ':' in label or '\n' in label:
                raise InvalidCandidates(f'bad candidate label {label!r}')
            if not isinstance(control, ControlVector):
                raise InvalidCandidates(f'{label}: control is not a '
                                        f'ControlVector')
            key = label.casefold()
            if key in seen:
                raise InvalidCandidates(f'duplicate candidate label {label!r}')
            seen.add(key)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(label for label, _ in self.entries)

    def control_of(self, label: str) -> ControlVector:
        for candidate, control in self.entries:
            if candidate == label:
                return control
        raise KeyError(label)

    def listing(self) -> str:
        return '\n'.join(
            f'- {label}: steer={control.steer:.2f} '
            f'throttle={control.throttle:.2f} brake={control.brake:.2f}'
            for label, control in self.entries)

    @classmethod
    def from_list(cls, items: Sequence[Dict]) -> 'CandidateSet':
        try:
            return cls(tuple((item['label'], ControlVector(*item['control']))
                             for item in items))
        except (KeyError, TypeError, CoreException) as exc:
            raise InvalidCandidates(f'malformed candidate list: {exc}') from exc


@dataclass(frozen=True)
class PromptLibrary:
    templates: Dict[str, PromptTemplate]
    candidates: CandidateSet
    tasks: TaskSet
    threat_question: str
    suffix_table: Dict[str, str] = field(default_factory=dict)
    version: str = ''

    def template(self, template_id: str = None,
                 mode: str = ParsingMode.CNG) -> PromptTemplate:
        """
        The named template, or the first template of the given mode.
        """
        if template_id is not None:
            try:
                return self.templates[template_id]
            except KeyError:
                raise TemplateError(f'no template {template_id!r}')
        for template in self.templates.values():
            if template.mode == mode:
                return template
        raise TemplateError(f'no {mode} template in prompt library')


def _read(path: Path) -> Dict:
    try:
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    except (OSError, ValueError) as exc:
        raise TemplateError(f'cannot read {path}: {exc}') from exc


def load_suffix_table(path: Union[str, Path]) -> Dict[str, str]:
    table = _read(Path(path)).get('suffixes', {})
    if not all(isinstance(k, str) and isinstance(v, str)
               for k, v in table.items()):
        raise TemplateError(f'{path}: suffix table must map text to text')
    return dict(table)


def load_prompt_library(directory: Optional[Union[str, Path]] = None,
                        with_suffixes: bool = False) -> PromptLibrary:
    directory = Path(directory or settings.DRIVEBENCH['PROMPT_DIR'])
    document = _read(directory / 'templates.json')
    try:
        templates = {}
        for item in document['templates']:
            template = PromptTemplate(item['template_id'], item['body'],
                                      item.get('mode', ParsingMode.CNG))
            templates[template.template_id] = template
        threat_question = document['threat_question']
        tasks = _read(directory / 'tasks.json')['tasks']
        candidates = CandidateSet.from_list(
            _read(directory / 'candidates.json')['candidates'])
    except (KeyError, TypeError) as exc:
        raise TemplateError(f'malformed prompt directory {directory}: '
                            f'{exc!r}') from exc
    suffix_table = {}
    if with_suffixes and (directory / 'suffixes.json').exists():
        suffix_table = load_suffix_table(directory / 'suffixes.json')
    logger.debug('loaded prompt library %s: %d templates, %d candidates',
                 directory, len(templates), len(candidates.entries))
    return PromptLibrary(templates=templates,
                         candidates=candidates,
                         tasks=TaskSet(tuple(tasks), tasks),
                         threat_question=threat_question,
                         suffix_table=suffix_table,
                         version=directory.name)
