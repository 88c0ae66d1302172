"""
Server side of the HIL bridge: one request-response session per
connection, one CONTROL in flight at a time.
"""
import logging
import socketserver
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from typing import Callable, List, Optional

from core.types import ControlVector, Observation
from dualsys.driver import DualSystemDriver
from dualsys.translate import fallback_action
from hil.conf import HilConfig
from hil.exceptions import (ConnectionClosed,
                            ProtocolError,
                            ProtocolException,
                            SessionTimeout)
from hil.protocol import (Bye,
                          ControlMessage,
                          Hello,
                          MessageStream,
                          MessageType,
                          ObservationMessage,
                          ResultMessage,
                          WireMessage,
                          observation_from_message)

logger = logging.getLogger(__name__)

Controller = Callable[[Observation], ControlVector]


@dataclass(frozen=True)
class LogEntry:
    time: float
    direction: str
    message: WireMessage


@dataclass
class SessionLog:
    entries: List[LogEntry] = field(default_factory=list)
    overruns: List[int] = field(default_factory=list)
    skipped: List[int] = field(default_factory=list)
    platform: str = ''
    closed_by: str = ''
    diagnostic: str = ''

    def record(self, direction: str, message: WireMessage) -> None:
        self.entries.append(LogEntry(time.monotonic(), direction, message))

    def messages(self, direction: str, kind: str = None) -> List[WireMessage]:
        return [entry.message for entry in self.entries
                if entry.direction == direction
                and (kind is None or entry.message.type == kind)]


class DriverController:
    """
    Controller backed by a DualSystemDriver: keeps the observation window
    and returns the decided control.
    """

    def __init__(self, driver: DualSystemDriver):
        self.driver = driver
        self.history: List[Observation] = []
        self.lock = threading.Lock()

    def __call__(self, observation: Observation) -> ControlVector:
        with self.lock:
            self.history = self.driver.window(self.history + [observation])
            return self.driver.decide(self.history).control


class ControllerRunner:
    """
    Runs one session's controller on a single worker thread. While a call
    that overran its budget is still busy, later frames are not submitted.
    """

    def __init__(self, controller: Controller, budget: float):
        self.controller = controller
        self.budget = budget
        self.executor = ThreadPoolExecutor(max_workers=1,
                                           thread_name_prefix='hil-controller')
        self.pending: Optional[Future] = None

    @property
    def busy(self) -> bool:
        return self.pending is not None and not self.pending.done()

    def __call__(self, observation: Observation) -> Optional[ControlVector]:
        """
        The controller's answer, or None when it is busy, overran the budget
        or failed.
        """
        if self.busy:
            return None
        self.pending = self.executor.submit(self.controller, observation)
        try:
            control = self.pending.result(timeout=self.budget)
        except FutureTimeout:
            return None
        except Exception as exc:
            logger.warning('controller raised %r on frame %d', exc,
                           observation.frame_index)
            return None
        return control if isinstance(control, ControlVector) else None

    def close(self) -> None:
        self.executor.shutdown(wait=False)


def serve_session(stream: MessageStream, controller: Controller,
                  config: HilConfig = None,
                  cycle_s: float = None) -> SessionLog:
    """
    Runs one session: HELLO handshake, then per cycle OBSERVATION in,
    CONTROL out with duration_s = cycle_s, RESULT in. Ends on BYE,
    disconnect, silence or a protocol violation; the log survives all of
    them.
    """
    config = config or HilConfig.from_settings()
    cycle_s = cycle_s or config.cycle_s
    budget = min(config.controller_budget_s, cycle_s)
    log = SessionLog()
    runner = ControllerRunner(controller, budget)

    def receive() -> WireMessage:
        message = stream.receive(config.silence_timeout)
        log.record('in', message)
        return message

    def send(message: WireMessage) -> None:
        log.record('out', message)
        stream.send(message)

    try:
        hello = receive()
        if not isinstance(hello, Hello):
            raise ProtocolError(f'expected HELLO, got {hello.type}')
        log.platform = hello.platform
        if hello.protocol_version != config.protocol_version:
            send(Bye(f'protocol version {hello.protocol_version} not '
                     f'supported, server speaks {config.protocol_version}'))
            log.closed_by = 'version_mismatch'
            return log
        send(Hello(platform=hello.platform,
                   protocol_version=config.protocol_version))

        last_frame = -1
        while True:
            message = receive()
            if isinstance(message, Bye):
                log.closed_by = 'bye'
                logger.info('session closed by client: %s', message.reason)
                return log
            if not isinstance(message, ObservationMessage):
                raise ProtocolError(f'expected OBSERVATION, got {message.type}')
            if message.frame_index <= last_frame:
                raise ProtocolError(f'frame {message.frame_index} after '
                                    f'{last_frame}')
            last_frame = message.frame_index
            busy = runner.busy
            control = runner(observation_from_message(message))
            if control is None:
                if busy:
                    logger.warning('controller still busy on frame %d, '
                                   'sending fallback', last_frame)
                    log.skipped.append(last_frame)
                else:
                    logger.warning('controller overran %.2fs on frame %d, '
                                   'sending fallback', budget, last_frame)
                log.overruns.append(last_frame)
                control = fallback_action()
            send(ControlMessage(frame_index=last_frame, control=control,
                                duration_s=cycle_s))
            result = receive()
            if not isinstance(result, ResultMessage) \
                    or result.frame_index != last_frame:
                raise ProtocolError(f'expected RESULT for frame {last_frame}, '
                                    f'got {result}')
    except ConnectionClosed as exc:
        log.closed_by, log.diagnostic = 'disconnect', str(exc)
    except SessionTimeout as exc:
        log.closed_by, log.diagnostic = 'timeout', str(exc)
    except ProtocolException as exc:
        log.closed_by, log.diagnostic = 'protocol_error', str(exc)
        logger.warning('session aborted: %s', exc)
        try:
            send(Bye(f'protocol_error: {exc}'))
        except ProtocolException:
            pass
    finally:
        runner.close()
    logger.info('session ended (%s) after %d message(s)', log.closed_by,
                len(log.entries))
    return log


class SessionHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server = self.server
        stream = MessageStream(self.request, server.config.max_frame_bytes)
        log = serve_session(stream, server.controller_factory(), server.config,
                            server.cycle_s)
        with server.lock:
            server.sessions.append(log)


class HilServer(socketserver.ThreadingTCPServer):
    """
    Serves concurrent sessions, each with its own controller from
    controller_factory.
    """
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, controller_factory: Callable[[], Controller],
                 config: HilConfig = None, cycle_s: float = None):
        self.controller_factory = controller_factory
        self.config = config or HilConfig.from_settings()
        self.cycle_s = cycle_s or self.config.cycle_s
        self.sessions: List[SessionLog] = []
        self.lock = threading.Lock()
        super().__init__(address, SessionHandler)


def observation_frames(log: SessionLog) -> List[int]:
    return [message.frame_index
            for message in log.messages('in', MessageType.OBSERVATION)]
