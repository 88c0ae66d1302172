"""
HIL wire protocol. Every frame is a 4-byte big-endian body length followed
by a UTF-8 JSON object whose "type" field names the message:

    HELLO        {platform, protocol_version}
    OBSERVATION  {frame_index, timestamp, payload}
    CONTROL      {frame_index, control: {steer, throttle, brake}, duration_s}
    RESULT       {frame_index, status}
    BYE          {reason}
"""
import base64
import json
import math
import socket
import struct
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Tuple, Union

from django.db import models

from core.exceptions import CoreException
from core.types import (ActorSnapshot,
                        ControlVector,
                        EgoState,
                        Observation,
                        ScenePayload,
                        SceneMode)
from hil.exceptions import (ConnectionClosed,
                            FrameTooLarge,
                            NeedMoreBytes,
                            ProtocolError,
                            SessionTimeout)

HEADER = struct.Struct('>I')


class MessageType(models.TextChoices):
    HELLO = 'HELLO', 'hello'
    OBSERVATION = 'OBSERVATION', 'observation'
    CONTROL = 'CONTROL', 'control'
    RESULT = 'RESULT', 'result'
    BYE = 'BYE', 'bye'


class ResultStatus(models.TextChoices):
    APPLIED = 'applied', 'applied'
    FINISHED = 'finished', 'finished'
    BOUNDARY = 'boundary', 'boundary crossing'
    COLLISION = 'collision', 'collision'


@dataclass(frozen=True)
class Hello:
    platform: str
    protocol_version: int
    type = MessageType.HELLO


@dataclass(frozen=True)
class ObservationMessage:
    frame_index: int
    timestamp: float
    payload: Dict[str, Any] = field(default_factory=dict)
    type = MessageType.OBSERVATION


@dataclass(frozen=True)
class ControlMessage:
    frame_index: int
    control: ControlVector
    duration_s: float = 0.5
    type = MessageType.CONTROL


@dataclass(frozen=True)
class ResultMessage:
    frame_index: int
    status: str
    type = MessageType.RESULT


@dataclass(frozen=True)
class Bye:
    reason: str
    type = MessageType.BYE


WireMessage = Union[Hello, ObservationMessage, ControlMessage, ResultMessage,
                    Bye]

MESSAGE_CLASSES = {
    MessageType.HELLO: Hello,
    MessageType.OBSERVATION: ObservationMessage,
    MessageType.CONTROL: ControlMessage,
    MessageType.RESULT: ResultMessage,
    MessageType.BYE: Bye,
}


def message_to_dict(message: WireMessage) -> Dict[str, Any]:
    body = asdict(message)
    body['type'] = str(message.type)
    return body


def _integer(body, name):
    value = body[name]
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ProtocolError(f'{name} must be a non-negative integer, '
                            f'got {value!r}')
    return value


def _number(body, name):
    value = body[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)) \
            or not math.isfinite(value):
        raise ProtocolError(f'{name} must be a finite number, got {value!r}')
    return value


def _text(body, name):
    value = body[name]
    if not isinstance(value, str):
        raise ProtocolError(f'{name} must be a string, got {value!r}')
    return value


def message_from_dict(body: Dict[str, Any]) -> WireMessage:
    kind = body.get('type')
    if kind not in MessageType.values:
        raise ProtocolError(f'unknown message type {kind!r}')
    cls = MESSAGE_CLASSES[MessageType(kind)]
    expected = {f.name for f in fields(cls)} | {'type'}
    if set(body) != expected:
        raise ProtocolError(f'{kind} expects fields {sorted(expected)}, '
                            f'got {sorted(body)}')
    try:
        if cls is Hello:
            return Hello(platform=_text(body, 'platform'),
                         protocol_version=_integer(body, 'protocol_version'))
        if cls is ObservationMessage:
            if not isinstance(body['payload'], dict):
                raise ProtocolError('payload must be an object')
            return ObservationMessage(frame_index=_integer(body, 'frame_index'),
                                      timestamp=_number(body, 'timestamp'),
                                      payload=body['payload'])
        if cls is ControlMessage:
            control = body['control']
            if not isinstance(control, dict) or \
                    set(control) != {'steer', 'throttle', 'brake'}:
                raise ProtocolError(f'malformed control {control!r}')
            for name in control:
                _number(control, name)
            duration = _number(body, 'duration_s')
            if not duration > 0.0:
                raise ProtocolError(f'duration_s must be positive, '
                                    f'got {duration!r}')
            return ControlMessage(frame_index=_integer(body, 'frame_index'),
                                  control=ControlVector(**control),
                                  duration_s=duration)
        if cls is ResultMessage:
            return ResultMessage(frame_index=_integer(body, 'frame_index'),
                                 status=_text(body, 'status'))
        return Bye(reason=_text(body, 'reason'))
    except CoreException as exc:
        raise ProtocolError(f'invalid {kind}: {exc}') from exc


def encode(message: WireMessage, max_frame_bytes: int = None) -> bytes:
    try:
        body = json.dumps(message_to_dict(message), sort_keys=True,
                          separators=(',', ':'), ensure_ascii=False,
                          allow_nan=False).encode('utf-8')
    except ValueError as exc:
        raise ProtocolError(f'message is not encodable: {exc}') from exc
    if max_frame_bytes is not None and len(body) > max_frame_bytes:
        raise FrameTooLarge(f'{len(body)} byte body exceeds the '
                            f'{max_frame_bytes} byte cap')
    return HEADER.pack(len(body)) + body


def decode_prefix(data: bytes,
                  max_frame_bytes: int = None) -> Tuple[WireMessage, int]:
    """
    Decodes the frame at the start of data. Returns the message and the
    number of bytes it took; raises NeedMoreBytes while the frame is
    incomplete.
    """
    if len(data) < HEADER.size:
        raise NeedMoreBytes(HEADER.size - len(data))
    (length,) = HEADER.unpack_from(data)
    if max_frame_bytes is not None and length > max_frame_bytes:
        raise FrameTooLarge(f'frame declares {length} bytes, cap is '
                            f'{max_frame_bytes}')
    end = HEADER.size + length
    if len(data) < end:
        raise NeedMoreBytes(end - len(data))
    try:
        body = json.loads(bytes(data[HEADER.size:end]).decode('utf-8'))
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise ProtocolError(f'malformed body: {exc}') from exc
    if not isinstance(body, dict):
        raise ProtocolError('body is not a JSON object')
    return message_from_dict(body), end


def decode(data: bytes, max_frame_bytes: int = None) -> WireMessage:
    """
    Decodes exactly one frame; trailing bytes are a length mismatch.
    """
    message, consumed = decode_prefix(data, max_frame_bytes)
    if consumed != len(data):
        raise ProtocolError(f'length prefix covers {consumed - HEADER.size} '
                            f'bytes, frame carries {len(data) - HEADER.size}')
    return message


class FrameDecoder:
    """
    Incremental decoder for a byte stream. A decoding error leaves the
    stream unusable; the buffer is dropped and the error re-raised.
    """

    def __init__(self, max_frame_bytes: int = None):
        self.max_frame_bytes = max_frame_bytes
        self.buffer = bytearray()

    def feed(self, data: bytes) -> List[WireMessage]:
        self.buffer.extend(data)
        messages = []
        while True:
            try:
                message, consumed = decode_prefix(self.buffer,
                                                  self.max_frame_bytes)
            except NeedMoreBytes:
                return messages
            except (FrameTooLarge, ProtocolError):
                self.buffer.clear()
                raise
            del self.buffer[:consumed]
            messages.append(message)


class MessageStream:
    """
    Blocking message I/O over a connected socket.
    """

    def __init__(self, sock: socket.socket, max_frame_bytes: int = None):
        self.sock = sock
        self.max_frame_bytes = max_frame_bytes
        self.decoder = FrameDecoder(max_frame_bytes)
        self.pending: List[WireMessage] = []

    def send(self, message: WireMessage) -> None:
        try:
            self.sock.sendall(encode(message, self.max_frame_bytes))
        except OSError as exc:
            raise ConnectionClosed(f'send failed: {exc}') from exc

    def receive(self, timeout: float = None) -> WireMessage:
        self.sock.settimeout(timeout)
        while not self.pending:
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout as exc:
                raise SessionTimeout(f'nothing received within '
                                     f'{timeout:.2f}s') from exc
            except OSError as exc:
                raise ConnectionClosed(f'receive failed: {exc}') from exc
            if not chunk:
                raise ConnectionClosed('peer closed the connection')
            self.pending.extend(self.decoder.feed(chunk))
        return self.pending.pop(0)


def observation_to_payload(observation: Observation) -> Dict[str, Any]:
    scene = observation.scene
    return {
        'ego': asdict(observation.ego),
        'route_progress': observation.route_progress,
        'caption': observation.caption,
        'scene': {
            'mode': str(scene.mode),
            'text': scene.text,
            'image': base64.b64encode(scene.image).decode('ascii'),
            'encoding': scene.encoding,
        },
        'actors': [asdict(actor) for actor in observation.actors],
    }


def observation_from_message(message: ObservationMessage) -> Observation:
    payload = message.payload
    try:
        scene = payload['scene']
        return Observation(
            frame_index=message.frame_index,
            timestamp=message.timestamp,
            ego=EgoState(**payload['ego']),
            scene=ScenePayload(mode=scene.get('mode', SceneMode.TEXT),
                               text=scene.get('text', ''),
                               image=base64.b64decode(scene.get('image', '')),
                               encoding=scene.get('encoding', '')),
            route_progress=payload['route_progress'],
            caption=payload.get('caption', ''),
            actors=tuple(ActorSnapshot(**actor)
                         for actor in payload.get('actors', ())),
        )
    except (KeyError, TypeError, ValueError, CoreException) as exc:
        raise ProtocolError(f'malformed observation payload: {exc}') from exc
