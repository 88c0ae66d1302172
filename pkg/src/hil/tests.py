import json
import math
import random
import socket
import threading
import time

from django.test import SimpleTestCase

from core.types import ControlVector, EgoState, Observation, ScenePayload
from dualsys.translate import fallback_action
from hil.client import ClientRunLog, integrate, sim_vehicle_client
from hil.completion import completion_rate, render_completion_table
from hil.conf import HilConfig
from hil.exceptions import (EmptyRouteGroup,
                            FrameTooLarge,
                            InvalidPlatform,
                            NeedMoreBytes,
                            PlatformMismatch,
                            ProtocolError,
                            ProtocolException)
from hil.platforms import (PlatformParams,
                           body_motion,
                           map_ackermann,
                           map_differential,
                           map_mecanum)
from hil.protocol import (HEADER,
                          Bye,
                          ControlMessage,
                          FrameDecoder,
                          Hello,
                          MessageStream,
                          MessageType,
                          ObservationMessage,
                          ResultMessage,
                          ResultStatus,
                          decode,
                          decode_prefix,
                          encode,
                          observation_from_message,
                          observation_to_payload)
from hil.session import HilServer, observation_frames, serve_session
from scengen.scenario import ScenarioSpec
from sim.routes import ActorSpec, RouteSpec

JETBOT = PlatformParams(kind='differential', max_speed=0.6, track_width=0.12,
                        body_length=0.26, body_width=0.2)
LIMO = PlatformParams(kind='ackermann', max_speed=1.0, wheel_base=0.2,
                      max_steer_angle=0.4, body_length=0.32, body_width=0.22)


def lab_route(length=3.0, half_width=0.3):
    return RouteSpec(route_id='lab-straight', waypoints=((0.0, 0.0),
                                                          (length, 0.0)),
                     lane_half_width=half_width, speed_limit=0.6)


def constant(steer=0.0, throttle=1.0, brake=0.0):
    control = ControlVector(steer=steer, throttle=throttle, brake=brake)
    return lambda observation: control


def random_control(rng):
    return ControlVector(steer=rng.uniform(-1.0, 1.0),
                         throttle=rng.random(), brake=rng.random())


def random_payload(rng, depth=0):
    payload = {}
    for index in range(rng.randint(0, 4)):
        key = f'k{index}'
        choice = rng.randint(0, 4 if depth < 2 else 3)
        if choice == 0:
            payload[key] = rng.uniform(-1e6, 1e6)
        elif choice == 1:
            payload[key] = rng.randint(-1000, 1000)
        elif choice == 2:
            payload[key] = ''.join(rng.choice('abc xyzé中')
                                   for _ in range(rng.randint(0, 12)))
        elif choice == 3:
            payload[key] = [rng.random() for _ in range(rng.randint(0, 3))]
        else:
            payload[key] = random_payload(rng, depth + 1)
    return payload


def random_message(rng):
    kind = rng.randint(0, 4)
    if kind == 0:
        return Hello(platform=rng.choice(['differential', 'ackermann']),
                     protocol_version=rng.randint(0, 5))
    if kind == 1:
        return ObservationMessage(frame_index=rng.randint(0, 10 ** 6),
                                  timestamp=rng.uniform(0.0, 1e4),
                                  payload=random_payload(rng))
    if kind == 2:
        return ControlMessage(frame_index=rng.randint(0, 10 ** 6),
                              control=random_control(rng),
                              duration_s=rng.uniform(0.01, 2.0))
    if kind == 3:
        return ResultMessage(frame_index=rng.randint(0, 10 ** 6),
                             status=rng.choice(ResultStatus.values))
    return Bye(reason=rng.choice(['finished', 'boundary', '']))


def observation(frame_index=0):
    return Observation(frame_index=frame_index, timestamp=0.5 * frame_index,
                       ego=EgoState(x=0.1, y=-0.2, heading=0.3, speed=0.4),
                       scene=ScenePayload(text='frame %d' % frame_index),
                       route_progress=0.25)


class CodecTest(SimpleTestCase):
    def test_control_example(self):
        message = ControlMessage(frame_index=0,
                                 control=ControlVector(0.0, 0.5, 0.0),
                                 duration_s=0.5)
        data = encode(message)
        (length,) = HEADER.unpack_from(data)
        self.assertEqual(length, len(data) - 4)
        self.assertEqual(decode(data), message)

    def test_round_trip(self):
        rng = random.Random(7)
        for _ in range(10000):
            message = random_message(rng)
            self.assertEqual(decode(encode(message)), message)

    def test_truncated_frame_needs_more_bytes(self):
        with self.assertRaises(NeedMoreBytes) as caught:
            decode(HEADER.pack(10) + b'{"type":"'[:8])
        self.assertEqual(caught.exception.needed, 2)
        with self.assertRaises(NeedMoreBytes):
            decode(b'\x00\x00')

    def test_unknown_variant(self):
        body = json.dumps({'type': 'PING'}).encode()
        with self.assertRaises(ProtocolError):
            decode(HEADER.pack(len(body)) + body)

    def test_rejections(self):
        good = encode(Bye(reason='done'))
        with self.assertRaises(ProtocolError):
            decode(good + b'\x00')
        for body in (b'not json', b'[1, 2]', b'\xff\xfe',
                     b'{"type": "BYE"}',
                     b'{"type": "BYE", "reason": "x", "extra": 1}',
                     b'{"type": "RESULT", "frame_index": -1, "status": "x"}',
                     b'{"type": "RESULT", "frame_index": true, "status": "x"}',
                     b'{"type": "CONTROL", "frame_index": 0, "duration_s": 0.5,'
                     b' "control": {"steer": 2, "throttle": 0, "brake": 0}}',
                     b'{"type": "CONTROL", "frame_index": 0, "duration_s": 0,'
                     b' "control": {"steer": 0, "throttle": 0, "brake": 0}}'):
            with self.subTest(body=body):
                with self.assertRaises(ProtocolError):
                    decode(HEADER.pack(len(body)) + body)

    def test_frame_cap(self):
        message = Bye(reason='x' * 100)
        with self.assertRaises(FrameTooLarge):
            encode(message, max_frame_bytes=50)
        with self.assertRaises(FrameTooLarge):
            decode(encode(message), max_frame_bytes=50)

    def test_decode_prefix_reports_consumed(self):
        first, second = encode(Bye(reason='a')), encode(Bye(reason='bb'))
        message, consumed = decode_prefix(first + second)
        self.assertEqual(message, Bye(reason='a'))
        self.assertEqual(consumed, len(first))

    def test_stream_decoder_handles_any_split(self):
        rng = random.Random(3)
        messages = [random_message(rng) for _ in range(200)]
        data = b''.join(encode(message) for message in messages)
        decoder = FrameDecoder()
        received = []
        position = 0
        while position < len(data):
            step = rng.randint(1, 64)
            received.extend(decoder.feed(data[position:position + step]))
            position += step
        self.assertEqual(received, messages)

    def test_fuzz_raises_only_protocol_errors(self):
        rng = random.Random(11)
        valid = [encode(random_message(rng)) for _ in range(500)]
        fed = 0
        decoder = FrameDecoder(max_frame_bytes=4096)
        while fed < 1 << 20:
            if rng.random() < 0.5:
                chunk = bytes(rng.getrandbits(8)
                              for _ in range(rng.randint(1, 256)))
            else:
                chunk = bytearray(rng.choice(valid))
                for _ in range(rng.randint(0, 3)):
                    chunk[rng.randrange(len(chunk))] = rng.getrandbits(8)
                chunk = bytes(chunk)
            fed += len(chunk)
            try:
                decoder.feed(chunk)
            except ProtocolException:
                self.assertEqual(len(decoder.buffer), 0)
            try:
                decode(chunk, max_frame_bytes=4096)
            except ProtocolException:
                pass

    def test_observation_payload(self):
        original = observation(4)
        message = ObservationMessage(frame_index=4, timestamp=2.0,
                                     payload=observation_to_payload(original))
        self.assertEqual(observation_from_message(decode(encode(message))),
                         original)
        broken = ObservationMessage(frame_index=4, timestamp=2.0,
                                    payload={'ego': {}})
        with self.assertRaises(ProtocolError):
            observation_from_message(broken)


class PlatformMappingTest(SimpleTestCase):
    def test_straight_gives_equal_wheels(self):
        rng = random.Random(5)
        for _ in range(1000):
            u = ControlVector(steer=0.0, throttle=rng.random(),
                              brake=rng.random())
            left, right = map_differential(u, JETBOT)
            self.assertEqual(left, right)
            self.assertGreaterEqual(left, 0.0)

    def test_mirror_swaps_wheels(self):
        rng = random.Random(6)
        for _ in range(1000):
            u = random_control(rng)
            mirrored = ControlVector(-u.steer, u.throttle, u.brake)
            left, right = map_differential(u, JETBOT)
            self.assertEqual(map_differential(mirrored, JETBOT),
                             (right, left))

    def test_hand_evaluated_pair(self):
        params = PlatformParams(kind='differential', max_speed=1.0,
                                track_width=0.2)
        left, right = map_differential(ControlVector(1.0, 0.5, 0.0), params)
        self.assertAlmostEqual(left, 1.0, places=12)
        self.assertAlmostEqual(right, 0.0, places=12)

    def test_positive_steer_turns_clockwise(self):
        for params in (JETBOT, LIMO):
            velocity, yaw_rate = body_motion(ControlVector(0.5, 1.0, 0.0),
                                             params)
            self.assertGreater(velocity, 0.0)
            self.assertGreater(yaw_rate, 0.0)

    def test_right_steer_speeds_up_left_wheel(self):
        # omega is counter-clockwise positive and positive steer is a right
        # turn, so omega < 0 and the left wheel outruns the right one.
        params = PlatformParams(kind='differential', max_speed=1.0,
                                track_width=0.2)
        left, right = map_differential(ControlVector(1.0, 0.5, 0.0), params)
        self.assertGreater(left, right)
        self.assertAlmostEqual(left - right, 1.0, delta=1e-12)
        _, clockwise = body_motion(ControlVector(1.0, 0.5, 0.0), params)
        self.assertAlmostEqual(clockwise, 5.0, delta=1e-12)

    def test_ackermann(self):
        self.assertEqual(map_ackermann(ControlVector(0.0, 0.0, 1.0), LIMO),
                         (0.0, 0.0))
        self.assertEqual(map_ackermann(ControlVector(1.0, 0.0, 0.0), LIMO)[0],
                         LIMO.max_steer_angle)
        params = PlatformParams(kind='ackermann', max_speed=1.0,
                                wheel_base=0.2, max_steer_angle=0.4)
        _, velocity = map_ackermann(ControlVector(0.0, 0.5, 0.2), params)
        self.assertAlmostEqual(velocity, 0.3, delta=1e-12)

    def test_ackermann_linear_in_steer(self):
        rng = random.Random(8)
        for _ in range(1000):
            steer = rng.uniform(-1.0, 1.0)
            angle, _ = map_ackermann(ControlVector(steer, 0.3, 0.0), LIMO)
            self.assertAlmostEqual(angle, steer * LIMO.max_steer_angle,
                                   delta=1e-12)

    def test_wrong_kind(self):
        u = ControlVector(0.0, 0.5, 0.0)
        with self.assertRaises(PlatformMismatch):
            map_differential(u, LIMO)
        with self.assertRaises(PlatformMismatch):
            map_ackermann(u, JETBOT)
        with self.assertRaises(PlatformMismatch):
            map_mecanum(u, JETBOT)

    def test_tracked_and_mecanum(self):
        u = ControlVector(0.3, 0.8, 0.0)
        tracked = PlatformParams(kind='tracked', max_speed=0.6,
                                 track_width=0.12)
        self.assertEqual(map_differential(u, tracked),
                         map_differential(u, JETBOT))
        mecanum = PlatformParams(kind='mecanum', max_speed=0.6,
                                 track_width=0.12)
        forward, lateral, yaw_rate = map_mecanum(u, mecanum)
        self.assertAlmostEqual(forward, 0.48)
        self.assertEqual(lateral, 0.0)
        self.assertGreater(yaw_rate, 0.0)

    def test_invalid_params(self):
        with self.assertRaises(InvalidPlatform):
            PlatformParams(kind='hovercraft', max_speed=1.0)
        with self.assertRaises(InvalidPlatform):
            PlatformParams(kind='differential', max_speed=1.0)
        with self.assertRaises(InvalidPlatform):
            PlatformParams(kind='ackermann', max_speed=1.0, wheel_base=0.2,
                           max_steer_angle=-0.1)
        with self.assertRaises(InvalidPlatform):
            PlatformParams.from_settings('submarine')

    def test_configured_platforms(self):
        self.assertEqual(PlatformParams.from_settings('jetbot'), JETBOT)
        self.assertEqual(PlatformParams.from_settings('limo'), LIMO)


class SessionPeer:
    """
    Runs serve_session on one end of a socket pair; the test drives the
    other end by hand.
    """

    def __init__(self, controller, config=None):
        server_sock, client_sock = socket.socketpair()
        self.config = config or HilConfig.from_settings()
        self.stream = MessageStream(client_sock, self.config.max_frame_bytes)
        self.sockets = (server_sock, client_sock)
        self.log = None
        self.thread = threading.Thread(target=self._serve, args=(
            MessageStream(server_sock, self.config.max_frame_bytes),
            controller))
        self.thread.start()

    def _serve(self, stream, controller):
        self.log = serve_session(stream, controller, self.config)

    def hello(self, version=None):
        version = self.config.protocol_version if version is None else version
        self.stream.send(Hello(platform='differential',
                               protocol_version=version))
        return self.stream.receive(2.0)

    def cycle(self, frame_index):
        self.stream.send(ObservationMessage(
            frame_index=frame_index, timestamp=0.5 * frame_index,
            payload=observation_to_payload(observation(frame_index))))
        control = self.stream.receive(2.0)
        self.stream.send(ResultMessage(frame_index=frame_index,
                                       status=ResultStatus.APPLIED))
        return control

    def finish(self):
        self.thread.join(5.0)
        for sock in self.sockets:
            sock.close()
        return self.log


class ServeSessionTest(SimpleTestCase):
    def test_bye_mid_session_keeps_log(self):
        peer = SessionPeer(constant(throttle=0.5))
        self.assertIsInstance(peer.hello(), Hello)
        controls = [peer.cycle(index) for index in range(3)]
        peer.stream.send(Bye(reason='operator stop'))
        log = peer.finish()
        self.assertEqual(log.closed_by, 'bye')
        self.assertEqual([control.frame_index for control in controls],
                         [0, 1, 2])
        self.assertTrue(all(control.duration_s == 0.5 for control in controls))
        self.assertEqual(len(log.messages('out', MessageType.CONTROL)), 3)
        self.assertEqual(observation_frames(log), [0, 1, 2])
        times = [entry.time for entry in log.entries]
        self.assertEqual(times, sorted(times))

    def test_overrun_sends_fallback(self):
        def controller(obs):
            if obs.frame_index == 1:
                time.sleep(0.4)
            return ControlVector(0.0, 0.5, 0.0)

        peer = SessionPeer(controller,
                           HilConfig.from_settings(controller_budget_s=0.1))
        peer.hello()
        controls = [peer.cycle(0), peer.cycle(1)]
        time.sleep(0.5)
        controls.append(peer.cycle(2))
        peer.stream.send(Bye(reason='done'))
        log = peer.finish()
        self.assertEqual(controls[1].control, fallback_action())
        self.assertEqual(controls[0].control, ControlVector(0.0, 0.5, 0.0))
        self.assertEqual(controls[2].control, ControlVector(0.0, 0.5, 0.0))
        self.assertEqual(log.overruns, [1])

    def test_busy_controller_is_not_called_again(self):
        gates = {1: threading.Event(), 4: threading.Event()}
        finished = {1: threading.Event(), 4: threading.Event()}

        class SlowController:
            def __init__(self):
                self.history = []
                self.active = 0
                self.most_active = 0
                self.lock = threading.Lock()

            def __call__(self, obs):
                with self.lock:
                    self.active += 1
                    self.most_active = max(self.most_active, self.active)
                try:
                    if obs.frame_index in gates:
                        gates[obs.frame_index].wait(5.0)
                    self.history = self.history + [obs.frame_index]
                    return ControlVector(0.0, 0.5, 0.0)
                finally:
                    with self.lock:
                        self.active -= 1
                    if obs.frame_index in finished:
                        finished[obs.frame_index].set()

        controller = SlowController()
        peer = SessionPeer(controller,
                           HilConfig.from_settings(controller_budget_s=0.1))
        peer.hello()
        controls = {}
        for index in range(7):
            controls[index] = peer.cycle(index).control
            if index in (2, 5):
                gates[index - 1].set()
                self.assertTrue(finished[index - 1].wait(5.0))
                time.sleep(0.1)
        peer.stream.send(Bye(reason='done'))
        log = peer.finish()
        self.assertEqual(log.overruns, [1, 2, 4, 5])
        self.assertEqual(log.skipped, [2, 5])
        self.assertEqual(controller.history, [0, 1, 3, 4, 6])
        self.assertEqual(controller.most_active, 1)
        self.assertEqual([index for index, control in controls.items()
                          if control == fallback_action()], [1, 2, 4, 5])

    def test_raising_controller_falls_back(self):
        def controller(obs):
            raise RuntimeError('model crashed')

        peer = SessionPeer(controller)
        peer.hello()
        self.assertEqual(peer.cycle(0).control, fallback_action())
        peer.stream.send(Bye(reason='done'))
        self.assertEqual(peer.finish().overruns, [0])

    def test_version_mismatch(self):
        peer = SessionPeer(constant())
        reply = peer.hello(version=99)
        self.assertIsInstance(reply, Bye)
        self.assertEqual(peer.finish().closed_by, 'version_mismatch')

    def test_out_of_order_message(self):
        peer = SessionPeer(constant())
        peer.hello()
        peer.stream.send(ControlMessage(frame_index=0,
                                        control=ControlVector()))
        self.assertIsInstance(peer.stream.receive(2.0), Bye)
        log = peer.finish()
        self.assertEqual(log.closed_by, 'protocol_error')

    def test_frame_index_must_increase(self):
        peer = SessionPeer(constant())
        peer.hello()
        peer.cycle(3)
        peer.stream.send(ObservationMessage(
            frame_index=3, timestamp=2.0,
            payload=observation_to_payload(observation(3))))
        self.assertIsInstance(peer.stream.receive(2.0), Bye)
        self.assertEqual(peer.finish().closed_by, 'protocol_error')

    def test_disconnect(self):
        peer = SessionPeer(constant())
        peer.hello()
        peer.cycle(0)
        peer.sockets[1].close()
        self.assertEqual(peer.finish().closed_by, 'disconnect')


class LoopbackTest(SimpleTestCase):
    def setUp(self):
        self.config = HilConfig.from_settings()
        self.controller = constant()
        self.server = HilServer(('127.0.0.1', 0), lambda: self.controller,
                                self.config)
        self.thread = threading.Thread(target=self.server.serve_forever,
                                       kwargs={'poll_interval': 0.05})
        self.thread.start()
        self.address = self.server.server_address

    def tearDown(self):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(5.0)

    def sessions(self, count):
        deadline = time.monotonic() + 5.0
        while time.monotonic() < deadline:
            with self.server.lock:
                if len(self.server.sessions) >= count:
                    return list(self.server.sessions)
            time.sleep(0.01)
        self.fail(f'expected {count} finished session(s)')

    def test_ten_observations_ten_controls(self):
        self.controller = constant(throttle=0.5)
        log = sim_vehicle_client(self.address, JETBOT, lab_route(20.0),
                                 config=self.config, max_cycles=10)
        self.assertEqual(log.outcome, 'max_cycles')
        (session,) = self.sessions(1)
        controls = session.messages('out', MessageType.CONTROL)
        self.assertEqual([control.frame_index for control in controls],
                         list(range(10)))
        self.assertTrue(all(control.duration_s == 0.5 for control in controls))
        self.assertEqual(session.closed_by, 'bye')
        self.assertEqual(session.platform, 'differential')

    def test_straight_route_finishes(self):
        log = sim_vehicle_client(self.address, JETBOT, lab_route(),
                                 config=self.config)
        self.assertEqual(log.outcome, ResultStatus.FINISHED)
        self.assertTrue(log.success)
        self.assertEqual(log.completed_fraction, 1.0)
        # 0.3 m per cycle, finished within 0.1 m of the 3 m route end
        self.assertEqual([frame.frame_index for frame in log.frames],
                         list(range(10)))
        (session,) = self.sessions(1)
        results = session.messages('in', MessageType.RESULT)
        self.assertEqual(results[-1].status, ResultStatus.FINISHED)
        self.assertEqual(session.messages('in', MessageType.BYE)[0].reason,
                         'finished')

    def test_ackermann_finishes(self):
        self.controller = constant(throttle=0.6)
        log = sim_vehicle_client(self.address, LIMO, lab_route(),
                                 config=self.config)
        self.assertTrue(log.success)
        self.assertEqual(len(log.frames), 10)

    def test_deterministic(self):
        first = sim_vehicle_client(self.address, JETBOT, lab_route(),
                                   config=self.config)
        second = sim_vehicle_client(self.address, JETBOT, lab_route(),
                                    config=self.config)
        self.assertEqual(first.frames, second.frames)

    def test_hard_right_crosses_boundary(self):
        self.controller = constant(steer=0.1)
        route = lab_route()
        log = sim_vehicle_client(self.address, JETBOT, route,
                                 config=self.config)
        self.assertEqual(log.outcome, ResultStatus.BOUNDARY)
        self.assertFalse(log.success)

        velocity, yaw_rate = body_motion(ControlVector(0.1, 1.0, 0.0), JETBOT)
        x = y = heading = 0.0
        substeps = 500
        dt = self.config.cycle_s / substeps
        expected = None
        for cycle in range(100):
            for _ in range(substeps):
                x += velocity * math.cos(heading) * dt
                y += velocity * math.sin(heading) * dt
                heading += yaw_rate * dt
            if abs(y) > route.lane_half_width:
                expected = cycle
                break
        self.assertIsNotNone(expected)
        self.assertLessEqual(abs(log.frames[-1].frame_index - expected), 1)
        self.assertGreater(log.frames[-1].ego.y, 0.0)

    def test_static_obstacle_collision(self):
        route = lab_route(10.0)
        scenario = ScenarioSpec(
            scenario_id='lab-box', base_route_id=route.route_id,
            actors=(ActorSpec(actor_id='box', kind='static_obstacle',
                              progress=0.5, offset=0.0),))
        log = sim_vehicle_client(self.address, JETBOT, route,
                                 scenario=scenario, config=self.config)
        self.assertEqual(log.outcome, ResultStatus.COLLISION)
        self.assertLess(log.frames[-1].ego.x, 5.0)
        self.assertLess(log.completed_fraction, 0.5)

    def test_server_refuses_version(self):
        config = HilConfig.from_settings(protocol_version=7)
        log = sim_vehicle_client(self.address, JETBOT, lab_route(),
                                 config=config)
        self.assertEqual(log.outcome, 'protocol_error')
        self.assertIn('refused', log.diagnostic)
        self.assertEqual(log.frames, [])


class MisbehavingServerTest(SimpleTestCase):
    def setUp(self):
        self.listener = socket.socket()
        self.listener.bind(('127.0.0.1', 0))
        self.listener.listen(1)
        self.address = self.listener.getsockname()
        self.accepted = []

    def tearDown(self):
        for sock in self.accepted:
            sock.close()
        self.listener.close()

    def test_silent_server_times_out(self):
        config = HilConfig.from_settings(cycle_s=0.1)
        started = time.monotonic()
        log = sim_vehicle_client(self.address, JETBOT, lab_route(),
                                 config=config)
        self.assertEqual(log.outcome, 'timeout')
        self.assertIn('3 cycle', log.diagnostic)
        self.assertLess(time.monotonic() - started, 2.0)

    def test_control_out_of_lockstep(self):
        def serve():
            sock, _ = self.listener.accept()
            self.accepted.append(sock)
            stream = MessageStream(sock)
            hello = stream.receive(2.0)
            stream.send(hello)
            stream.receive(2.0)
            stream.send(ControlMessage(frame_index=5,
                                       control=ControlVector(0.0, 1.0, 0.0)))

        thread = threading.Thread(target=serve)
        thread.start()
        log = sim_vehicle_client(self.address, JETBOT, lab_route(),
                                 config=HilConfig.from_settings())
        thread.join(5.0)
        self.assertEqual(log.outcome, 'protocol_error')
        self.assertIn('frame 5', log.diagnostic)


class IntegrateTest(SimpleTestCase):
    def test_matches_fine_euler(self):
        rng = random.Random(12)
        for _ in range(50):
            ego = EgoState(x=rng.uniform(-5, 5), y=rng.uniform(-5, 5),
                           heading=rng.uniform(-3, 3))
            velocity, yaw_rate = rng.uniform(0, 1), rng.uniform(-3, 3)
            end = integrate(ego, velocity, yaw_rate, 0.5)
            x, y, heading = ego.x, ego.y, ego.heading
            dt = 0.5 / 20000
            for _ in range(20000):
                x += velocity * math.cos(heading + 0.5 * yaw_rate * dt) * dt
                y += velocity * math.sin(heading + 0.5 * yaw_rate * dt) * dt
                heading += yaw_rate * dt
            self.assertAlmostEqual(end.x, x, places=6)
            self.assertAlmostEqual(end.y, y, places=6)


def run_logs(successes, n_runs):
    return [ClientRunLog(route_id='r', outcome=ResultStatus.FINISHED,
                         completed_fraction=1.0)] * successes + \
           [ClientRunLog(route_id='r', outcome=ResultStatus.BOUNDARY,
                         completed_fraction=0.4)] * (n_runs - successes)


class CompletionRateTest(SimpleTestCase):
    def test_single_route(self):
        report = completion_rate({'seg01': run_logs(7, 10)}, n_runs=10)
        (route,) = report.routes
        self.assertEqual((route.successes, route.n_runs), (7, 10))
        self.assertAlmostEqual(route.mean_fraction, 0.82)

    def test_published_average(self):
        groups = {f'seg{index:02d}': run_logs(successes, 10)
                  for index, successes in enumerate([5, 4, 6, 3, 5], start=1)}
        report = completion_rate(groups, n_runs=10)
        self.assertAlmostEqual(report.average, 46.0)
        table = render_completion_table(report)
        self.assertIn('5/10', table)
        self.assertIn('46%', table)
        self.assertEqual(report.as_dict()['routes']['seg03']['successes'], 6)

    def test_all_complete(self):
        groups = {name: run_logs(3, 3) for name in ('a', 'b')}
        self.assertEqual(completion_rate(groups, n_runs=3).average, 100.0)

    def test_missing_runs_count_as_failures(self):
        report = completion_rate({'a': run_logs(3, 3)}, n_runs=10)
        self.assertEqual(report.routes[0].successes, 3)
        self.assertAlmostEqual(report.average, 30.0)

    def test_rejections(self):
        with self.assertRaises(EmptyRouteGroup):
            completion_rate({'a': []}, n_runs=10)
        with self.assertRaises(EmptyRouteGroup):
            completion_rate({}, n_runs=10)
        with self.assertRaises(EmptyRouteGroup):
            completion_rate({'a': run_logs(4, 4)}, n_runs=3)
