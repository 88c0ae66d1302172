import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass
from typing import Optional, Tuple

from django.db import models

from adapters.exceptions import InvalidEndpoint, InvalidResponse
from core.types import ScenePayload

logger = logging.getLogger(__name__)


class ApiStyle(models.TextChoices):
    CHAT_COMPLETION = 'chat_completion', 'chat completion'
    RAW_TEXT = 'raw_text', 'raw text'


class Modality(models.TextChoices):
    VISION = 'vision', 'images and text'
    TEXT = 'text', 'text only'


class ResponseStatus(models.TextChoices):
    OK = 'ok', 'ok'
    TIMEOUT = 'timeout', 'timeout'
    TRANSPORT_ERROR = 'transport_error', 'transport error'
    REMOTE_ERROR = 'remote_error', 'remote error'


@dataclass(frozen=True)
class EndpointSpec:
    """
    HTTP model endpoint. The auth token is read from the environment
    variable named by auth_env, never stored in config documents.
    """
    url: str
    api_style: str = ApiStyle.CHAT_COMPLETION
    auth_env: Optional[str] = None
    deadline: float = 10.0
    max_retries: int = 0
    modality: str = Modality.VISION
    model: str = ''

    def __post_init__(self):
        if not self.url:
            raise InvalidEndpoint('endpoint without url')
        if self.api_style not in ApiStyle.values:
            raise InvalidEndpoint(f'unknown api_style {self.api_style!r}')
        if self.modality not in Modality.values:
            raise InvalidEndpoint(f'unknown modality {self.modality!r}')
        deadline = float(self.deadline)
        if not (math.isfinite(deadline) and deadline > 0.0):
            raise InvalidEndpoint(f'deadline must be > 0, got {self.deadline!r}')
        if not isinstance(self.max_retries, int) or self.max_retries < 0:
            raise InvalidEndpoint(
                f'max_retries must be an integer >= 0, got {self.max_retries!r}')
        object.__setattr__(self, 'deadline', deadline)

    @property
    def auth_token(self) -> Optional[str]:
        if not self.auth_env:
            return None
        return os.environ.get(self.auth_env) or None


@dataclass(frozen=True)
class ModelRequest:
    prompt: str
    images: Tuple[ScenePayload, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'images', tuple(self.images))


@dataclass(frozen=True)
class ModelResponse:
    text: str = ''
    latency: float = 0.0
    status: str = ResponseStatus.OK
    detail: str = ''

    def __post_init__(self):
        if self.status not in ResponseStatus.values:
            raise InvalidResponse(f'unknown status {self.status!r}')
        if self.status == ResponseStatus.OK and not self.text:
            raise InvalidResponse('ok response with empty text')

    @property
    def ok(self) -> bool:
        return self.status == ResponseStatus.OK

    @classmethod
    def failure(cls, status: str, detail: str,
                latency: float = 0.0) -> 'ModelResponse':
        return cls(text='', latency=latency, status=status, detail=detail)


class Adapter:
    """
    A model the harness can query. complete() must return a ModelResponse
    for every input; failures are statuses, not exceptions.
    """
    name = 'adapter'
    modality = Modality.VISION

    def complete(self, request: ModelRequest) -> ModelResponse:
        raise NotImplementedError

    def __repr__(self):
        return f'<{type(self).__name__} {self.name}>'


def call_with_deadline(adapter: Adapter, request: ModelRequest,
                       deadline: float) -> ModelResponse:
    """
    Runs adapter.complete on a worker thread and gives up after deadline
    seconds. A late answer is discarded. Exceptions escaping an adapter are
    turned into remote_error responses.
    """
    executor = ThreadPoolExecutor(max_workers=1,
                                  thread_name_prefix=f'adapter-{adapter.name}')
    started = time.monotonic()
    future = executor.submit(adapter.complete, request)
    try:
        response = future.result(timeout=deadline)
    except FutureTimeout:
        logger.warning('%s: no answer within %.2fs', adapter.name, deadline)
        return ModelResponse.failure(ResponseStatus.TIMEOUT,
                                     f'deadline {deadline:.2f}s exceeded',
                                     time.monotonic() - started)
    except Exception as exc:
        logger.warning('%s raised %r', adapter.name, exc)
        return ModelResponse.failure(ResponseStatus.REMOTE_ERROR,
                                     f'{type(exc).__name__}: {exc}',
                                     time.monotonic() - started)
    finally:
        executor.shutdown(wait=False)
    if not isinstance(response, ModelResponse):
        return ModelResponse.failure(ResponseStatus.REMOTE_ERROR,
                                     f'adapter returned {type(response).__name__}')
    return response
