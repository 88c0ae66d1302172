"""
HTTP client for model endpoints.

chat_completion: POST a JSON body

    {"model": <model>, "messages": [{"role": "user", "content": [
        {"type": "text", "text": <prompt>},
        {"type": "image_url", "image_url": {"url": <data url>}}, ...]}]}

and read choices[0].message.content from the JSON answer. Images travel as
data:image/x-raw;encoding=<quoted encoding>;base64,<bytes> URLs.

raw_text: POST the prompt as a text/plain UTF-8 body and read the answer
body as the response text. Images are not sent.
"""
import base64
import logging
import time
from typing import Any, Dict, Tuple
from urllib.parse import quote

import requests

from adapters.base import (Adapter,
                           ApiStyle,
                           EndpointSpec,
                           Modality,
                           ModelRequest,
                           ModelResponse,
                           ResponseStatus)
from core.types import ScenePayload

logger = logging.getLogger(__name__)


def image_data_url(image: ScenePayload) -> str:
    encoded = base64.b64encode(image.image).decode('ascii')
    return (f'data:image/x-raw;encoding={quote(image.encoding, safe="")};'
            f'base64,{encoded}')


def _request_body(spec: EndpointSpec,
                  request: ModelRequest) -> Tuple[Dict[str, Any], Dict[str, str]]:
    headers = {}
    token = spec.auth_token
    if token:
        headers['Authorization'] = f'Bearer {token}'
    if spec.api_style == ApiStyle.RAW_TEXT:
        headers['Content-Type'] = 'text/plain; charset=utf-8'
        return {'data': request.prompt.encode('utf-8')}, headers
    content = [{'type': 'text', 'text': request.prompt}]
    for image in request.images:
        content.append({'type': 'image_url',
                        'image_url': {'url': image_data_url(image)}})
    body = {'messages': [{'role': 'user', 'content': content}]}
    if spec.model:
        body['model'] = spec.model
    return {'json': body}, headers


def _response_text(spec: EndpointSpec, response: requests.Response) -> str:
    if spec.api_style == ApiStyle.RAW_TEXT:
        return response.content.decode('utf-8')
    document = response.json()
    content = document['choices'][0]['message']['content']
    if isinstance(content, list):
        content = ''.join(part.get('text', '') for part in content)
    if not isinstance(content, str):
        raise ValueError(f'content is {type(content).__name__}')
    return content


def _attempt(spec: EndpointSpec, request: ModelRequest,
             timeout: float) -> ModelResponse:
    payload, headers = _request_body(spec, request)
    started = time.monotonic()

    def elapsed():
        return time.monotonic() - started

    try:
        response = requests.post(spec.url, headers=headers, timeout=timeout,
                                 **payload)
    except requests.Timeout as exc:
        return ModelResponse.failure(ResponseStatus.TIMEOUT, str(exc), elapsed())
    except requests.RequestException as exc:
        return ModelResponse.failure(ResponseStatus.TRANSPORT_ERROR, str(exc),
                                     elapsed())
    if response.status_code >= 400:
        return ModelResponse.failure(ResponseStatus.REMOTE_ERROR,
                                     f'HTTP {response.status_code}', elapsed())
    try:
        text = _response_text(spec, response)
    except (ValueError, KeyError, IndexError, TypeError,
            AttributeError, UnicodeDecodeError) as exc:
        return ModelResponse.failure(ResponseStatus.REMOTE_ERROR,
                                     f'unreadable answer: {exc}', elapsed())
    if not text:
        return ModelResponse.failure(ResponseStatus.REMOTE_ERROR,
                                     'empty answer', elapsed())
    return ModelResponse(text=text, latency=elapsed())


def _retryable(response: ModelResponse) -> bool:
    if response.status != ResponseStatus.REMOTE_ERROR:
        return True
    # client errors will not get better on retry
    return not response.detail.startswith('HTTP 4')


def call_endpoint(spec: EndpointSpec, request: ModelRequest) -> ModelResponse:
    """
    At most max_retries + 1 attempts, all within (max_retries + 1) * deadline
    seconds. Never raises for transport or remote trouble.
    """
    budget = (spec.max_retries + 1) * spec.deadline
    started = time.monotonic()
    response = None
    for attempt in range(spec.max_retries + 1):
        remaining = budget - (time.monotonic() - started)
        if remaining <= 0.0:
            break
        response = _attempt(spec, request, min(spec.deadline, remaining))
        if response.ok:
            break
        logger.warning('%s attempt %d/%d: %s %s', spec.url, attempt + 1,
                       spec.max_retries + 1, response.status, response.detail)
        if not _retryable(response):
            break
    if response is None:
        response = ModelResponse.failure(ResponseStatus.TIMEOUT,
                                         'no time left for an attempt')
    return ModelResponse(text=response.text,
                         latency=time.monotonic() - started,
                         status=response.status,
                         detail=response.detail)


class EndpointAdapter(Adapter):
    def __init__(self, spec: EndpointSpec, name: str = None):
        self.spec = spec
        self.name = name or spec.url
        self.modality = spec.modality

    def complete(self, request: ModelRequest) -> ModelResponse:
        if self.modality != Modality.VISION and request.images:
            request = ModelRequest(prompt=request.prompt)
        return call_endpoint(self.spec, request)
