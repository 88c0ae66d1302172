import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

from django.conf import settings

from adapters.base import Adapter
from core.types import CommandSet, ControlVector, Observation, Task, TaskSet
from dualsys.exceptions import DualSystemException
from dualsys.fast import build_fast_prompts, query_fast
from dualsys.prompts import (ParsingMode,
                             PromptLibrary,
                             PromptTemplate,
                             load_prompt_library)
from dualsys.translate import (HybridBranch,
                               apply_suffix_control,
                               fallback_action,
                               hybrid_mode_select,
                               translate)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlowBranch:
    """
    A slow system and the way its answers are parsed.
    """
    adapter: Adapter
    mode: str = ParsingMode.CNG
    template: Optional[PromptTemplate] = None

    def __post_init__(self):
        if self.mode not in ParsingMode.values:
            raise DualSystemException(f'unknown parsing mode {self.mode!r}')


@dataclass(frozen=True)
class Decision:
    control: ControlVector
    commands: CommandSet = field(default_factory=CommandSet)
    command: str = ''
    fallback: bool = False
    failures: Tuple[str, ...] = ()
    slow_adapter: str = ''


class DualSystemDriver:
    """
    One closed-loop decision per observation window: the fast system
    answers every task, the action command (with its suffix, if the table
    has one) goes to the slow system of the selected branch, and the parsed
    control comes back. With a risk branch configured, the fast system is
    first asked whether the scene holds a threat.
    """

    def __init__(self,
                 fast_adapter: Adapter,
                 default: SlowBranch,
                 risk: Optional[SlowBranch] = None,
                 library: PromptLibrary = None,
                 tasks: TaskSet = None,
                 suffix_table: Dict[str, str] = None,
                 history_length: int = None,
                 fast_deadline: float = None,
                 slow_deadline: float = None):
        conf = settings.DRIVEBENCH
        self.fast_adapter = fast_adapter
        self.library = library or load_prompt_library()
        self.tasks = tasks or self.library.tasks
        if Task.ACTION_PREDICTION not in self.tasks.tasks:
            raise DualSystemException('task set has no action_prediction task '
                                      'to drive with')
        self.branches = {HybridBranch.DEFAULT: default,
                         HybridBranch.RISK: risk or default}
        self.hybrid = risk is not None
        self.suffix_table = (self.library.suffix_table if suffix_table is None
                             else suffix_table)
        self.history_length = (conf['HISTORY_LENGTH'] if history_length is None
                               else history_length)
        self.fast_deadline = fast_deadline or conf['FAST_DEADLINE_S']
        self.slow_deadline = slow_deadline or conf['SLOW_DEADLINE_S']

    def window(self, history: Sequence[Observation]) -> Sequence[Observation]:
        return list(history)[-(self.history_length + 1):]

    def decide(self, history: Sequence[Observation]) -> Decision:
        history = self.window(history)
        prompts = build_fast_prompts(history, self.tasks,
                                     self.fast_adapter.modality,
                                     self.history_length)
        commands = query_fast(self.fast_adapter, prompts, self.fast_deadline)
        failures = [f'{task}: {reason}'
                    for task, reason in sorted(commands.failures.items())]
        command = commands.per_task_text.get(Task.ACTION_PREDICTION)
        if command is None:
            return Decision(control=fallback_action(), commands=commands,
                            fallback=True, failures=tuple(failures))
        command = apply_suffix_control(command, self.suffix_table)
        branch = HybridBranch.DEFAULT
        if self.hybrid:
            branch = hybrid_mode_select(self.fast_adapter, history,
                                        self.library.threat_question,
                                        self.fast_deadline)
        slow = self.branches[branch]
        template = slow.template or self.library.template(mode=slow.mode)
        translation = translate(command, history, slow.mode, slow.adapter,
                                template, self.library.candidates,
                                self.slow_deadline)
        if translation.fallback:
            failures.append(f'slow: {translation.failure}')
        return Decision(control=translation.control,
                        commands=commands,
                        command=command,
                        fallback=translation.fallback,
                        failures=tuple(failures),
                        slow_adapter=slow.adapter.name)
