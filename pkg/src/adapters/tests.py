import json
import os
import tempfile
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from unittest import mock

from django.test import SimpleTestCase

from adapters.base import (Adapter,
                           EndpointSpec,
                           ModelRequest,
                           ModelResponse,
                           ResponseStatus,
                           call_with_deadline)
from adapters.cassette import RecordReplayAdapter, request_hash
from adapters.endpoint import EndpointAdapter, call_endpoint
from adapters.exceptions import (CassetteError,
                                 InvalidAdapterConfig,
                                 InvalidEndpoint,
                                 InvalidResponse)
from adapters.factory import build_adapter
from adapters.reference import RuleFollowingAdapter, read_scene
from adapters.scripted import ScriptedAdapter
from core.types import ActorSnapshot, EgoState, ScenePayload
from sim.render import describe_scene


class StubHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get('Content-Length', 0))
        body = self.rfile.read(length)
        server = self.server
        with server.lock:
            server.hits[self.path] = server.hits.get(self.path, 0) + 1
            server.requests.append((self.path, dict(self.headers), body))
        if self.path == '/fail':
            self.send_response(500)
            self.end_headers()
            return
        if self.path == '/missing':
            self.send_response(404)
            self.end_headers()
            return
        if self.path == '/slow':
            time.sleep(1.5)
        if self.path == '/raw':
            answer = b'OK ' + body
            self.send_response(200)
            self.send_header('Content-Type', 'text/plain')
        else:
            answer = json.dumps({'choices': [
                {'message': {'role': 'assistant', 'content': 'OK'}}]}).encode()
            self.send_response(200)
            self.send_header('Content-Type', 'application/json')
        self.send_header('Content-Length', str(len(answer)))
        self.end_headers()
        self.wfile.write(answer)


class EndpointTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.server = ThreadingHTTPServer(('127.0.0.1', 0), StubHandler)
        cls.server.lock = threading.Lock()
        cls.server.hits = {}
        cls.server.requests = []
        cls.thread = threading.Thread(target=cls.server.serve_forever,
                                      daemon=True)
        cls.thread.start()
        cls.base = f'http://127.0.0.1:{cls.server.server_address[1]}'

    @classmethod
    def tearDownClass(cls):
        cls.server.shutdown()
        cls.server.server_close()
        super().tearDownClass()

    def spec(self, path, **kwargs):
        return EndpointSpec(url=self.base + path, **kwargs)

    def test_chat_completion_ok(self):
        response = call_endpoint(self.spec('/ok', deadline=2.0),
                                 ModelRequest('hello'))
        self.assertEqual(response.status, ResponseStatus.OK)
        self.assertEqual(response.text, 'OK')

    def test_chat_completion_carries_images(self):
        image = ScenePayload(mode='raster', image=b'\x00\x01\x02',
                             encoding='gray8;64x64')
        call_endpoint(self.spec('/images', deadline=2.0),
                      ModelRequest('look', images=(image,)))
        _, _, body = self.server.requests[-1]
        content = json.loads(body)['messages'][0]['content']
        self.assertEqual(content[0], {'type': 'text', 'text': 'look'})
        self.assertTrue(content[1]['image_url']['url'].startswith(
            'data:image/x-raw;encoding=gray8%3B64x64;base64,'))

    def test_raw_text(self):
        response = call_endpoint(self.spec('/raw', api_style='raw_text',
                                           deadline=2.0),
                                 ModelRequest('ping'))
        self.assertEqual(response.text, 'OK ping')

    def test_auth_token_from_environment(self):
        with mock.patch.dict(os.environ, {'DRIVEBENCH_TEST_TOKEN': 's3cret'}):
            call_endpoint(self.spec('/auth', auth_env='DRIVEBENCH_TEST_TOKEN',
                                    deadline=2.0),
                          ModelRequest('hello'))
        _, headers, _ = self.server.requests[-1]
        self.assertEqual(headers['Authorization'], 'Bearer s3cret')

    def test_http_500_is_remote_error(self):
        before = self.server.hits.get('/fail', 0)
        response = call_endpoint(self.spec('/fail', deadline=2.0,
                                           max_retries=2),
                                 ModelRequest('hello'))
        self.assertEqual(response.status, ResponseStatus.REMOTE_ERROR)
        self.assertEqual(self.server.hits['/fail'] - before, 3)

    def test_client_error_not_retried(self):
        before = self.server.hits.get('/missing', 0)
        response = call_endpoint(self.spec('/missing', deadline=2.0,
                                           max_retries=3),
                                 ModelRequest('hello'))
        self.assertEqual(response.status, ResponseStatus.REMOTE_ERROR)
        self.assertEqual(self.server.hits['/missing'] - before, 1)

    def test_slow_server_times_out(self):
        started = time.monotonic()
        response = call_endpoint(self.spec('/slow', deadline=0.3),
                                 ModelRequest('hello'))
        self.assertEqual(response.status, ResponseStatus.TIMEOUT)
        self.assertLess(time.monotonic() - started, 1.2)

    def test_unreachable_host(self):
        spec = EndpointSpec(url='http://127.0.0.1:1/', deadline=1.0,
                            max_retries=1)
        started = time.monotonic()
        response = call_endpoint(spec, ModelRequest('hello'))
        self.assertIn(response.status, (ResponseStatus.TRANSPORT_ERROR,
                                        ResponseStatus.TIMEOUT))
        self.assertLessEqual(time.monotonic() - started, 2.5)

    def test_text_endpoint_drops_images(self):
        adapter = EndpointAdapter(self.spec('/textonly', deadline=2.0,
                                            modality='text'))
        image = ScenePayload(mode='raster', image=b'\x00', encoding='gray8;1x1')
        adapter.complete(ModelRequest('hello', images=(image,)))
        _, _, body = self.server.requests[-1]
        self.assertEqual(len(json.loads(body)['messages'][0]['content']), 1)

    def test_invalid_spec(self):
        self.assertRaises(InvalidEndpoint, EndpointSpec, url='http://x',
                          deadline=0)
        self.assertRaises(InvalidEndpoint, EndpointSpec, url='http://x',
                          max_retries=-1)
        self.assertRaises(InvalidEndpoint, EndpointSpec, url='http://x',
                          api_style='grpc')


class ResponseTest(SimpleTestCase):
    def test_ok_needs_text(self):
        self.assertRaises(InvalidResponse, ModelResponse, text='',
                          status='ok')

    def test_failure_may_be_empty(self):
        response = ModelResponse.failure(ResponseStatus.TIMEOUT, 'late')
        self.assertFalse(response.ok)


class ScriptedAdapterTest(SimpleTestCase):
    def test_first_matching_rule(self):
        adapter = ScriptedAdapter([('threat', 'Yes'), (None, 'No')])
        self.assertEqual(adapter.complete(
            ModelRequest('Is there a threat?')).text, 'Yes')
        self.assertEqual(adapter.complete(ModelRequest('other')).text, 'No')

    def test_match_all(self):
        adapter = ScriptedAdapter([(None, 'always')])
        for prompt in ('', 'a', 'b' * 100):
            self.assertEqual(adapter.complete(ModelRequest(prompt)).text,
                             'always')

    def test_empty_script(self):
        response = ScriptedAdapter([]).complete(ModelRequest('anything'))
        self.assertEqual(response.status, ResponseStatus.REMOTE_ERROR)

    def test_answer_sequence_repeats_last(self):
        adapter = ScriptedAdapter([(None, ['one', 'two'])])
        answers = [adapter.complete(ModelRequest('x')).text for _ in range(4)]
        self.assertEqual(answers, ['one', 'two', 'two', 'two'])

    def test_scripted_failure(self):
        timeout = ModelResponse.failure(ResponseStatus.TIMEOUT, 'scripted')
        adapter = ScriptedAdapter([('slow', timeout), (None, 'fast')])
        self.assertEqual(adapter.complete(ModelRequest('slow')).status,
                         ResponseStatus.TIMEOUT)


class ExplodingAdapter(Adapter):
    name = 'exploding'

    def complete(self, request):
        raise RuntimeError('boom')


class DeadlineTest(SimpleTestCase):
    def test_late_answer_becomes_timeout(self):
        adapter = ScriptedAdapter([(None, 'late')], delay=1.0)
        started = time.monotonic()
        response = call_with_deadline(adapter, ModelRequest('x'), 0.2)
        self.assertEqual(response.status, ResponseStatus.TIMEOUT)
        self.assertLess(time.monotonic() - started, 0.8)

    def test_exception_becomes_remote_error(self):
        response = call_with_deadline(ExplodingAdapter(), ModelRequest('x'), 1.0)
        self.assertEqual(response.status, ResponseStatus.REMOTE_ERROR)
        self.assertIn('boom', response.detail)

    def test_in_time_answer_passes_through(self):
        response = call_with_deadline(ScriptedAdapter([(None, 'hi')]),
                                      ModelRequest('x'), 1.0)
        self.assertEqual(response.text, 'hi')


class CassetteTest(SimpleTestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = Path(self.directory.name) / 'cassette.json'

    def tearDown(self):
        self.directory.cleanup()

    def test_record_then_replay(self):
        inner = ScriptedAdapter([('brake', 'steer: 0 throttle: 0 brake: 1'),
                                 (None, 'Keep going straight')])
        recorder = RecordReplayAdapter(inner, self.path, 'record')
        recorded = [recorder.complete(ModelRequest(prompt))
                    for prompt in ('brake now', 'drive')]
        with open(self.path) as handle:
            self.assertEqual(len(json.load(handle)), 2)
        player = RecordReplayAdapter(None, self.path, 'replay')
        replayed = [player.complete(ModelRequest(prompt))
                    for prompt in ('brake now', 'drive')]
        self.assertEqual([(r.text, r.status) for r in recorded],
                         [(r.text, r.status) for r in replayed])

    def test_replay_miss(self):
        recorder = RecordReplayAdapter(ScriptedAdapter([(None, 'x')]),
                                       self.path, 'record')
        recorder.complete(ModelRequest('seen'))
        player = RecordReplayAdapter(None, self.path, 'replay')
        request = ModelRequest('unseen')
        response = player.complete(request)
        self.assertEqual(response.status, ResponseStatus.REMOTE_ERROR)
        self.assertIn(request_hash(request), response.detail)

    def test_replay_needs_cassette(self):
        self.assertRaises(CassetteError, RecordReplayAdapter, None, self.path,
                          'replay')

    def test_hash_covers_images(self):
        image = ScenePayload(mode='raster', image=b'\x01', encoding='gray8;1x1')
        other = ScenePayload(mode='raster', image=b'\x02', encoding='gray8;1x1')
        self.assertNotEqual(request_hash(ModelRequest('p', (image,))),
                            request_hash(ModelRequest('p', (other,))))
        self.assertNotEqual(request_hash(ModelRequest('p', (image,))),
                            request_hash(ModelRequest('p')))
        self.assertEqual(request_hash(ModelRequest('p', (image,))),
                         request_hash(ModelRequest('p', (image,))))


def scene(speed=5.0, offset=0.0, heading_error=0.0, actors=(), light=None):
    snapshots = list(actors)
    if light is not None:
        state, gap = light
        snapshots.append(ActorSnapshot('tl', 'traffic_light', gap, 0.0, gap,
                                       0.0, 0.0, True, state))
    return describe_scene(3, 0.3, EgoState(0.0, 0.0, heading_error, speed),
                          20.0, offset, 0.0, 100.0, 0.2, 1.75, 8.0,
                          tuple(snapshots))


def vehicle_ahead(gap, lateral=0.0, speed=0.0):
    return ActorSnapshot('a0', 'vehicle', gap, 0.0, gap, lateral, speed,
                         abs(lateral) <= 1.75)


class RuleFollowingTest(SimpleTestCase):
    def setUp(self):
        self.adapter = RuleFollowingAdapter()

    def ask(self, prompt):
        return self.adapter.complete(ModelRequest(prompt)).text

    def test_reads_scene(self):
        reading = read_scene(scene(actors=[vehicle_ahead(12.0)]))
        self.assertEqual(reading.speed, 5.0)
        self.assertEqual(reading.actors[0].gap, 12.0)

    def test_clear_road(self):
        self.assertEqual(self.ask('Task: action_prediction\n' + scene()),
                         'Keep going straight')

    def test_stops_for_vehicle(self):
        prompt = 'Task: action_prediction\n' + scene(
            actors=[vehicle_ahead(12.0)])
        self.assertEqual(self.ask(prompt), 'Stop')

    def test_ignores_adjacent_lane(self):
        prompt = 'Task: action_prediction\n' + scene(
            actors=[vehicle_ahead(12.0, lateral=3.5)])
        self.assertEqual(self.ask(prompt), 'Keep going straight')

    def test_stops_for_red_light(self):
        prompt = 'Task: action_prediction\n' + scene(light=('red', 10.0))
        self.assertEqual(self.ask(prompt), 'Stop')
        prompt = 'Task: action_prediction\n' + scene(light=('green', 10.0))
        self.assertEqual(self.ask(prompt), 'Keep going straight')

    def test_lane_keeping(self):
        self.assertEqual(self.ask(scene(offset=0.6)), 'Steer left')
        self.assertEqual(self.ask(scene(offset=-0.6)), 'Steer right')

    def test_uses_last_frame(self):
        prompt = scene(actors=[vehicle_ahead(12.0)]) + '\n' + scene()
        self.assertEqual(self.ask(prompt), 'Keep going straight')

    def test_threat_question(self):
        question = 'Is there a security threat?\n'
        self.assertTrue(self.ask(question + scene(
            actors=[vehicle_ahead(20.0)])).startswith('Yes'))
        self.assertTrue(self.ask(question + scene()).startswith('No'))

    def test_translation(self):
        self.assertEqual(self.ask('Command: Stop\n' + scene()),
                         'steer: 0.0, throttle: 0.0, brake: 1.0')
        self.assertEqual(
            self.ask('Command: Keep going straight with speed = 0.5\n'),
            'steer: 0.0, throttle: 0.5, brake: 0.0')

    def test_translation_picks_candidate(self):
        prompt = ('Command: Steer left\nCandidates:\n'
                  '- STOP: steer=0.00 throttle=0.00 brake=1.00\n'
                  '- LEFT: steer=-0.40 throttle=0.30 brake=0.00\n'
                  '- RIGHT: steer=0.40 throttle=0.30 brake=0.00\n')
        self.assertEqual(self.ask(prompt), 'LEFT')

    def test_unreadable_prompt(self):
        response = self.adapter.complete(ModelRequest('no scene here'))
        self.assertEqual(response.status, ResponseStatus.REMOTE_ERROR)


class FactoryTest(SimpleTestCase):
    def test_scripted(self):
        adapter = build_adapter({'kind': 'scripted', 'name': 'fast',
                                 'rules': [['threat', 'Yes'], [None, 'No']]})
        self.assertEqual(adapter.name, 'fast')
        self.assertEqual(adapter.complete(ModelRequest('threat')).text, 'Yes')

    def test_scripted_failure_answer(self):
        adapter = build_adapter({'kind': 'scripted', 'rules': [
            [None, {'status': 'timeout', 'detail': 'scripted'}]]})
        self.assertEqual(adapter.complete(ModelRequest('x')).status,
                         ResponseStatus.TIMEOUT)

    def test_endpoint(self):
        adapter = build_adapter({'kind': 'endpoint', 'url': 'http://h/v1',
                                 'deadline': 3, 'modality': 'text'})
        self.assertIsInstance(adapter, EndpointAdapter)
        self.assertEqual(adapter.spec.deadline, 3.0)

    def test_rule_following(self):
        self.assertIsInstance(build_adapter({'kind': 'rule_following'}),
                              RuleFollowingAdapter)

    def test_invalid(self):
        self.assertRaises(InvalidAdapterConfig, build_adapter, {'kind': 'grpc'})
        self.assertRaises(InvalidAdapterConfig, build_adapter,
                          {'kind': 'endpoint', 'url': 'http://h', 'deadline': 0})
        self.assertRaises(InvalidAdapterConfig, build_adapter,
                          {'kind': 'cassette', 'path': '/nonexistent/c.json'})
        self.assertRaises(InvalidAdapterConfig, build_adapter, ['scripted'])
