import hashlib
import json
import logging
import os
import threading
from pathlib import Path
from typing import Dict, Union

from django.db import models

from adapters.base import (Adapter,
                           ModelRequest,
                           ModelResponse,
                           ResponseStatus)
from adapters.exceptions import CassetteError

logger = logging.getLogger(__name__)


class CassetteMode(models.TextChoices):
    RECORD = 'record', 'record'
    REPLAY = 'replay', 'replay'


def request_hash(request: ModelRequest) -> str:
    """
    sha256 over the prompt and the digests of the attached images, so that
    text-mode and image-mode requests both hash stably.
    """
    digest = hashlib.sha256()
    digest.update(b'prompt\0')
    digest.update(request.prompt.encode('utf-8'))
    for image in request.images:
        digest.update(b'\0image\0')
        digest.update(image.encoding.encode('utf-8'))
        digest.update(b'\0')
        digest.update(hashlib.sha256(image.image).hexdigest().encode('ascii'))
    return digest.hexdigest()


class RecordReplayAdapter(Adapter):
    """
    Record mode forwards to the inner adapter and stores every answer in a
    JSON cassette (hash -> {text, status}). Replay mode answers from the
    cassette only.
    """

    def __init__(self, inner: Adapter, path: Union[str, Path],
                 mode: str = CassetteMode.REPLAY, name: str = None):
        if mode not in CassetteMode.values:
            raise CassetteError(f'unknown cassette mode {mode!r}')
        if mode == CassetteMode.RECORD and inner is None:
            raise CassetteError('record mode needs an inner adapter')
        self.inner = inner
        self.path = Path(path)
        self.mode = mode
        self.name = name or f'cassette:{self.path.name}'
        if inner is not None:
            self.modality = inner.modality
        self._lock = threading.Lock()
        self._entries: Dict[str, Dict[str, str]] = {}
        if self.path.exists():
            self._entries = self._load()
        elif mode == CassetteMode.REPLAY:
            raise CassetteError(f'cassette {self.path} does not exist')

    def _load(self) -> Dict[str, Dict[str, str]]:
        try:
            with open(self.path, encoding='utf-8') as handle:
                entries = json.load(handle)
        except (OSError, ValueError) as exc:
            raise CassetteError(f'unreadable cassette {self.path}: {exc}') from exc
        if not isinstance(entries, dict):
            raise CassetteError(f'cassette {self.path} is not a JSON object')
        return entries

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        partial = self.path.with_name(self.path.name + '.partial')
        with open(partial, 'w', encoding='utf-8') as handle:
            json.dump(self._entries, handle, sort_keys=True, indent=1,
                      ensure_ascii=False)
        os.replace(partial, self.path)

    def complete(self, request: ModelRequest) -> ModelResponse:
        key = request_hash(request)
        if self.mode == CassetteMode.REPLAY:
            entry = self._entries.get(key)
            if entry is None:
                logger.warning('%s: replay miss %s', self.name, key)
                return ModelResponse.failure(ResponseStatus.REMOTE_ERROR,
                                             f'cassette miss {key}')
            if entry['status'] == ResponseStatus.OK:
                return ModelResponse(text=entry['text'])
            return ModelResponse.failure(entry['status'],
                                         'recorded failure')
        response = self.inner.complete(request)
        with self._lock:
            self._entries[key] = {'text': response.text,
                                  'status': str(response.status)}
            self._save()
        return response
