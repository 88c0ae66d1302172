import logging
import threading
import time
from typing import List, Optional, Sequence, Tuple, Union

from adapters.base import (Adapter,
                           Modality,
                           ModelRequest,
                           ModelResponse,
                           ResponseStatus)
from adapters.exceptions import InvalidAdapterConfig

logger = logging.getLogger(__name__)

Answer = Union[str, ModelResponse]
Rule = Tuple[Optional[str], Union[Answer, Sequence[Answer]]]


class ScriptedAdapter(Adapter):
    """
    Answers from an ordered script of (matcher, answer) rules. A matcher is
    a literal substring of the prompt, or None to match everything; the first
    matching rule answers. An answer given as a list is consumed one item per
    call, repeating its last item once exhausted.
    """

    def __init__(self, rules: Sequence[Rule], name: str = 'scripted',
                 modality: str = Modality.VISION, delay: float = 0.0):
        self.name = name
        self.modality = modality
        self.delay = delay
        self._rules: List[Tuple[Optional[str], Tuple[Answer, ...]]] = []
        for matcher, answer in rules:
            if matcher is not None and not isinstance(matcher, str):
                raise InvalidAdapterConfig(f'matcher {matcher!r} is not a string')
            answers = (answer,) if isinstance(answer, (str, ModelResponse)) \
                else tuple(answer)
            if not answers:
                raise InvalidAdapterConfig(f'rule {matcher!r} has no answers')
            self._rules.append((matcher, answers))
        self._served = [0] * len(self._rules)
        self._lock = threading.Lock()

    def complete(self, request: ModelRequest) -> ModelResponse:
        if self.delay:
            time.sleep(self.delay)
        for index, (matcher, answers) in enumerate(self._rules):
            if matcher is not None and matcher not in request.prompt:
                continue
            with self._lock:
                answer = answers[min(self._served[index], len(answers) - 1)]
                self._served[index] += 1
            if isinstance(answer, ModelResponse):
                return answer
            if not answer:
                return ModelResponse.failure(ResponseStatus.REMOTE_ERROR,
                                             'scripted empty answer')
            return ModelResponse(text=answer)
        logger.debug('%s: no rule matches prompt %.60r', self.name,
                     request.prompt)
        return ModelResponse.failure(ResponseStatus.REMOTE_ERROR,
                                     'no scripted rule matches')
