import json
import shutil
import tempfile
import threading
from io import StringIO
from pathlib import Path
from unittest import mock

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from campaign.conf import (RunConfig,
                           load_run_config,
                           run_config_from_dict,
                           run_config_to_dict,
                           validate)
from campaign.exceptions import (CampaignException,
                                 ConfigError,
                                 DeleteEntityException,
                                 EpisodeAborted)
from campaign.models import Campaign, Episode
from campaign.runner import (_cached_inputs,
                             campaign_inputs,
                             run_campaign,
                             run_episode)
from core.serializers import write_trace
from core.types import ControlVector, InfractionKind, Termination
from dualsys.translate import fallback_action
from hil.conf import HilConfig
from hil.session import HilServer
from sim.routes import RouteSpec

STRAIGHT_FAST = {'kind': 'scripted', 'name': 'straight',
                 'rules': [[None, 'Keep going straight']]}
CRUISE_SLOW = {'kind': 'scripted', 'name': 'cruise',
               'rules': [[None, 'steer: 0 throttle: 0.5 brake: 0']]}
BRAKE_SLOW = {'kind': 'scripted', 'name': 'brake',
              'rules': [[None, 'steer: 0 throttle: 0 brake: 1']]}
RIGHT_SLOW = {'kind': 'scripted', 'name': 'right',
              'rules': [[None, 'steer: 1 throttle: 0.5 brake: 0']]}
RULE_FOLLOWING = {'kind': 'rule_following', 'name': 'rules'}

TEST_ROUTES = [
    {'route_id': 'test-a', 'waypoints': [[0.0, 0.0], [20.0, 0.0]],
     'skill_tags': ['merging']},
    {'route_id': 'test-b', 'waypoints': [[0.0, 0.0], [15.0, 0.0],
                                         [25.0, 0.0]],
     'skill_tags': ['overtaking']},
]


def straight_route(length=30.0):
    return RouteSpec(route_id='straight', waypoints=((0.0, 0.0),
                                                     (length, 0.0)))


class WorkspaceMixin:
    def setUp(self):
        super().setUp()
        self.workspace = Path(tempfile.mkdtemp(prefix='drivebench-'))
        self.routes = self.workspace / 'routes.json'
        self.routes.write_text(json.dumps(TEST_ROUTES), encoding='utf-8')

    def tearDown(self):
        shutil.rmtree(self.workspace, ignore_errors=True)
        super().tearDown()

    def config(self, **values) -> RunConfig:
        data = {'fast': RULE_FOLLOWING, 'slow': RULE_FOLLOWING,
                'routes': str(self.routes), 'repetitions': 1,
                'max_frames': 400, 'output_dir': str(self.workspace / 'out')}
        data.update(values)
        return run_config_from_dict(data)

    def write_config(self, name='config.json', **values) -> Path:
        data = {'fast': RULE_FOLLOWING, 'slow': RULE_FOLLOWING,
                'routes': 'routes.json', 'repetitions': 1, 'max_frames': 400,
                'output_dir': 'out'}
        data.update(values)
        path = self.workspace / name
        path.write_text(json.dumps(data), encoding='utf-8')
        return path


class RunConfigTest(WorkspaceMixin, SimpleTestCase):
    def test_defaults_from_settings(self):
        config = run_config_from_dict({'fast': STRAIGHT_FAST,
                                       'slow': CRUISE_SLOW})
        self.assertEqual(config.repetitions, settings.DRIVEBENCH['REPETITIONS'])
        self.assertEqual(config.history_length,
                         settings.DRIVEBENCH['HISTORY_LENGTH'])
        self.assertEqual(config.routes, settings.DRIVEBENCH['ROUTE_LIBRARY'])

    def test_relative_paths_and_overrides(self):
        path = self.write_config(repetitions=3)
        config = load_run_config(path, repetitions=5, seed=None)
        self.assertEqual(config.repetitions, 5)
        self.assertEqual(config.seed, 0)
        self.assertEqual(Path(config.routes), self.routes)
        self.assertEqual(Path(config.output_dir), self.workspace / 'out')
        self.assertIs(validate(config), config)

    def test_round_trip(self):
        config = self.config(route_ids=['test-a'], hybrid=True,
                             risk=CRUISE_SLOW)
        self.assertEqual(run_config_from_dict(run_config_to_dict(config)),
                         config)

    def test_rejections(self):
        with self.assertRaises(ConfigError):
            run_config_from_dict({'fast': STRAIGHT_FAST})
        with self.assertRaises(ConfigError):
            run_config_from_dict({'fast': STRAIGHT_FAST, 'slow': CRUISE_SLOW,
                                  'colour': 'red'})
        with self.assertRaises(ConfigError):
            load_run_config(self.workspace / 'missing.json')
        broken = self.workspace / 'broken.json'
        broken.write_text('{', encoding='utf-8')
        with self.assertRaises(ConfigError):
            load_run_config(broken)
        for values in ({'repetitions': 0}, {'max_frames': 0},
                       {'parsing_mode': 'GUESS'},
                       {'routes': str(self.workspace / 'nowhere')},
                       {'slow': {'kind': 'telepathy'}},
                       {'risk': CRUISE_SLOW},
                       {'fast_deadline': 0}):
            with self.subTest(values=values):
                with self.assertRaises(ConfigError):
                    validate(self.config(**values))

    def test_campaign_inputs(self):
        routes, scenarios = campaign_inputs(self.config(route_ids=['test-b']))
        self.assertEqual([route.route_id for route in routes], ['test-b'])
        self.assertEqual(scenarios, {})
        with self.assertRaises(ConfigError):
            campaign_inputs(self.config(route_ids=['test-z']))
        routes, scenarios = campaign_inputs(self.config(
            routes=settings.DRIVEBENCH['ROUTE_LIBRARY'],
            scenario_suite=settings.DRIVEBENCH['SCENARIO_SUITE']))
        self.assertEqual(set(scenarios), {route.route_id for route in routes})

    def test_display_label(self):
        self.assertEqual(self.config(fast=STRAIGHT_FAST,
                                     slow=CRUISE_SLOW).display_label,
                         'straight / cruise / CNG')
        self.assertIn('hybrid', self.config(hybrid=True).display_label)
        self.assertEqual(self.config(label='mine').display_label, 'mine')


class RunEpisodeTest(WorkspaceMixin, SimpleTestCase):
    def test_straight_driver_finishes(self):
        trace = run_episode(self.config(fast=STRAIGHT_FAST, slow=CRUISE_SLOW),
                            straight_route())
        self.assertEqual(trace.terminated_by, Termination.FINISHED)
        self.assertEqual(trace.completed_fraction, 1.0)
        self.assertEqual(trace.infractions, ())
        self.assertEqual([frame.frame_index for frame in trace.frames],
                         list(range(len(trace.frames))))
        self.assertTrue(all(frame.slow_adapter == 'cruise'
                            for frame in trace.frames))

    def test_always_braking_is_blocked(self):
        trace = run_episode(self.config(fast=STRAIGHT_FAST, slow=BRAKE_SLOW,
                                        blocked_frames=20),
                            straight_route())
        self.assertEqual(trace.terminated_by, Termination.BLOCKED)
        self.assertEqual(len(trace.frames), 20)
        self.assertEqual(trace.completed_fraction, 0.0)

    def test_frame_budget_is_a_timeout(self):
        trace = run_episode(self.config(fast=STRAIGHT_FAST, slow=CRUISE_SLOW,
                                        max_frames=5),
                            straight_route())
        self.assertEqual(trace.terminated_by, Termination.TIMEOUT)
        self.assertEqual(len(trace.frames), 5)
        self.assertEqual(list(trace.infraction_kinds()),
                         [InfractionKind.TIMEOUT])
        self.assertEqual(trace.infractions[0].frame_index, 4)

    def test_deviation_is_fatal(self):
        trace = run_episode(self.config(fast=STRAIGHT_FAST, slow=RIGHT_SLOW),
                            straight_route(100.0))
        self.assertEqual(trace.terminated_by, Termination.INFRACTION_FATAL)
        kinds = list(trace.infraction_kinds())
        self.assertIn(InfractionKind.BOUNDARY_CROSSING, kinds)
        self.assertEqual(kinds[-1], InfractionKind.ROUTE_DEVIATION)

    def test_never_stalls_on_timeouts(self):
        slow_fast = dict(STRAIGHT_FAST, delay=0.2)
        config = self.config(fast=slow_fast, slow=CRUISE_SLOW,
                             fast_deadline=0.02, blocked_frames=10)
        trace = run_episode(config, straight_route())
        self.assertEqual(trace.terminated_by, Termination.BLOCKED)
        self.assertTrue(all(frame.fallback for frame in trace.frames))
        self.assertTrue(all(frame.control == fallback_action()
                            for frame in trace.frames))

    def test_last_frame_progress_is_completed_fraction(self):
        for slow, extra in ((CRUISE_SLOW, {}),
                            (BRAKE_SLOW, {'blocked_frames': 20}),
                            (CRUISE_SLOW, {'max_frames': 15})):
            with self.subTest(slow=slow['name'], **extra):
                trace = run_episode(self.config(fast=STRAIGHT_FAST, slow=slow,
                                                **extra),
                                    straight_route())
                progress = [frame.route_progress for frame in trace.frames]
                self.assertEqual(progress[-1], trace.completed_fraction)
                self.assertEqual(progress, sorted(progress))

    def test_scenario_for_another_route(self):
        routes, scenarios = campaign_inputs(self.config(
            routes=settings.DRIVEBENCH['ROUTE_LIBRARY'],
            scenario_suite=settings.DRIVEBENCH['SCENARIO_SUITE']))
        with self.assertRaises(EpisodeAborted):
            run_episode(self.config(), straight_route(),
                        scenarios['r01-merge'])

    def test_seeded_episodes_repeat(self):
        config = self.config(routes=settings.DRIVEBENCH['ROUTE_LIBRARY'],
                             scenario_suite=settings.DRIVEBENCH[
                                 'SCENARIO_SUITE'],
                             route_ids=['r03-emergency-brake'])
        routes, scenarios = campaign_inputs(config)
        route = routes[0]
        first = run_episode(config, route, scenarios[route.route_id], seed=3)
        second = run_episode(config, route, scenarios[route.route_id], seed=3)
        self.assertEqual(first, second)


class CampaignTest(WorkspaceMixin, TestCase):
    def test_reproducible_aggregate(self):
        first = run_campaign(self.config(repetitions=3, seed=5,
                                         output_dir=str(self.workspace / 'a')))
        second = run_campaign(self.config(repetitions=3, seed=5,
                                          output_dir=str(self.workspace / 'b')))
        self.assertEqual((first.done, first.failed), (6, 0))
        for result in (first, second):
            traces = sorted(path.name for path in
                            (result.output_dir / 'traces').glob('*.json'))
            self.assertEqual(len(traces), result.aggregate.extra['episodes'])
            self.assertIn('test-a__clean__rep2.json', traces)
            self.assertEqual(result.campaign.status, Campaign.Status.DONE)
        self.assertEqual((self.workspace / 'a' / 'aggregate.json').read_bytes(),
                         (self.workspace / 'b' / 'aggregate.json').read_bytes())
        self.assertEqual(
            [episode.seed for episode in
             Episode.objects.done(campaign=first.campaign,
                                  route_id='test-a')],
            [5, 6, 7])
        manifest = json.loads((self.workspace / 'a' / 'manifest.json')
                              .read_text(encoding='utf-8'))
        self.assertEqual(len(manifest['episodes']), 6)
        report = (self.workspace / 'a' / 'report.txt').read_text(
            encoding='utf-8')
        self.assertIn('Driving Score', report)
        self.assertIn('rules / rules / CNG', report)

    def test_single_repetition_has_zero_std(self):
        result = run_campaign(self.config())
        for summary in result.aggregate.metrics.values():
            if summary is not None:
                self.assertEqual(summary.std, 0.0)

    def test_failed_episodes_are_recorded(self):
        def failing(config, route, scenario=None, seed=0, **kwargs):
            if route.route_id == 'test-b':
                raise EpisodeAborted('simulated failure')
            return run_episode(config, route, scenario, seed, **kwargs)

        with mock.patch('campaign.runner.run_episode', side_effect=failing):
            result = run_campaign(self.config(repetitions=2))
        self.assertTrue(result.has_failures)
        self.assertEqual((result.done, result.failed), (2, 2))
        self.assertEqual(result.campaign.status, Campaign.Status.PARTIAL)
        self.assertEqual(result.aggregate.extra, {'episodes': 2, 'failed': 2})
        failed = Episode.objects.failed(campaign=result.campaign)
        self.assertTrue(all(episode.detail == 'simulated failure'
                            for episode in failed))
        self.assertEqual(len(list((result.output_dir / 'traces')
                                  .glob('*.json'))), 2)

    def test_unexpected_episode_errors_are_recorded(self):
        def flaky(path, trace):
            if 'test-b' in Path(path).name:
                raise OSError('disk full')
            return write_trace(path, trace)

        with mock.patch('campaign.runner.write_trace', side_effect=flaky):
            result = run_campaign(self.config(repetitions=2))
        self.assertEqual((result.done, result.failed), (2, 2))
        self.assertEqual(result.campaign.status, Campaign.Status.PARTIAL)
        for episode in Episode.objects.failed(campaign=result.campaign):
            self.assertEqual(episode.route_id, 'test-b')
            self.assertTrue(episode.detail.startswith('OSError'))
        for name in ('aggregate.json', 'report.txt', 'manifest.json'):
            self.assertTrue((result.output_dir / name).is_file())

    def test_campaign_without_finished_episodes_fails(self):
        with mock.patch('campaign.runner.write_trace',
                        side_effect=OSError('disk full')):
            with self.assertRaises(CampaignException):
                run_campaign(self.config())
        campaign = Campaign.objects.order_by('-pk').first()
        self.assertEqual(campaign.status, Campaign.Status.FAILED)
        self.assertEqual(Episode.objects.failed(campaign=campaign).count(), 2)

    def test_inputs_are_parsed_once_per_campaign(self):
        _cached_inputs.cache_clear()
        with mock.patch('campaign.runner.campaign_inputs',
                        wraps=campaign_inputs) as parse:
            result = run_campaign(self.config(repetitions=2))
        self.assertEqual(result.done, 4)
        self.assertEqual(parse.call_count, 2)

    def test_never_stall_campaign(self):
        config = self.config(fast=dict(STRAIGHT_FAST, delay=0.2),
                             slow=CRUISE_SLOW, fast_deadline=0.02,
                             blocked_frames=10, repetitions=2)
        result = run_campaign(config)
        self.assertEqual(result.failed, 0)
        self.assertEqual(
            set(Episode.objects.done(campaign=result.campaign)
                .values_list('terminated_by', flat=True)),
            {Termination.BLOCKED})
        self.assertEqual(result.aggregate['driving_score'].mean, 0.0)

    def test_episodes_cannot_be_deleted(self):
        result = run_campaign(self.config(route_ids=['test-a']))
        with self.assertRaises(DeleteEntityException):
            Episode.objects.all().delete()
        with self.assertRaises(DeleteEntityException):
            Episode.objects.first().delete()
        self.assertEqual(Episode.objects.filter(
            campaign=result.campaign).count(), 1)

    def test_rule_following_beats_straight_driver_on_cut_in(self):
        common = {'routes': settings.DRIVEBENCH['ROUTE_LIBRARY'],
                  'scenario_suite': settings.DRIVEBENCH['SCENARIO_SUITE'],
                  'route_ids': ['r01-merge'], 'max_frames': 800}
        careful = run_campaign(self.config(
            output_dir=str(self.workspace / 'careful'), **common))
        reckless = run_campaign(self.config(
            fast=STRAIGHT_FAST, slow=CRUISE_SLOW,
            output_dir=str(self.workspace / 'reckless'), **common))
        self.assertGreater(careful.aggregate['driving_score'].mean,
                           reckless.aggregate['driving_score'].mean)

    def test_threat_suite_scores_lower(self):
        common = {'routes': settings.DRIVEBENCH['ROUTE_LIBRARY'],
                  'route_ids': ['r01-merge', 'r03-emergency-brake'],
                  'max_frames': 800, 'repetitions': 2, 'seed': 11}
        clean = run_campaign(self.config(
            output_dir=str(self.workspace / 'clean'), **common))
        threat = run_campaign(self.config(
            scenario_suite=settings.DRIVEBENCH['SCENARIO_SUITE'],
            output_dir=str(self.workspace / 'threat'), **common))
        self.assertLess(threat.aggregate['driving_score'].mean,
                        clean.aggregate['driving_score'].mean)
        # the braked lead stays in the lane, so the route cannot be finished
        self.assertNotIn(Termination.FINISHED, set(
            Episode.objects.done(campaign=threat.campaign,
                                 route_id='r03-emergency-brake')
            .values_list('terminated_by', flat=True)))
        names = {path.name for path in
                 (threat.output_dir / 'traces').glob('*.json')}
        self.assertIn('r01-merge__r01-merge-threat__rep0.json', names)


class CommandTest(WorkspaceMixin, TestCase):
    def call(self, *args):
        out = StringIO()
        call_command(*args, stdout=out)
        return out.getvalue()

    def test_validate_config(self):
        output = self.call('validate_config', str(self.write_config()))
        self.assertIn('2 route(s)', output)
        with self.assertRaises(CommandError) as caught:
            self.call('validate_config',
                      str(self.write_config('bad.json', repetitions=0)))
        self.assertEqual(caught.exception.returncode, 1)

    def test_run_and_report(self):
        output = self.call('run', str(self.write_config()),
                           '--route-id', 'test-a', '--label', 'baseline')
        self.assertIn('baseline', output)
        self.assertIn('1 episode(s) done', output)
        aggregate = str(self.workspace / 'out' / 'aggregate.json')
        output = self.call('report', aggregate, '--baseline', aggregate)
        self.assertIn('(+0.00)', output)
        self.assertIn('Success Rate', output)

    def test_run_config_error_exit_code(self):
        with self.assertRaises(CommandError) as caught:
            self.call('run', str(self.write_config(parsing_mode='GUESS')))
        self.assertEqual(caught.exception.returncode, 1)

    def test_run_with_failures_exit_code(self):
        with mock.patch('campaign.runner.run_episode',
                        side_effect=EpisodeAborted('boom')):
            with self.assertRaises(CommandError) as caught:
                self.call('run', str(self.write_config()))
        self.assertEqual(caught.exception.returncode, 3)

    def test_report_rejects_non_aggregates(self):
        bogus = self.workspace / 'bogus.json'
        bogus.write_text('[]', encoding='utf-8')
        with self.assertRaises(CommandError) as caught:
            self.call('report', str(bogus))
        self.assertEqual(caught.exception.returncode, 1)

    def test_hil_simclient(self):
        control = ControlVector(0.0, 1.0, 0.0)
        server = HilServer(('127.0.0.1', 0), lambda: (lambda obs: control),
                           HilConfig.from_settings())
        thread = threading.Thread(target=server.serve_forever,
                                  kwargs={'poll_interval': 0.05})
        thread.start()
        try:
            route = self.workspace / 'lab.json'
            route.write_text(json.dumps({
                'route_id': 'lab', 'waypoints': [[0.0, 0.0], [3.0, 0.0]],
                'lane_half_width': 0.3, 'speed_limit': 0.6}),
                encoding='utf-8')
            host, port = server.server_address
            output = self.call('hil_simclient', '--routes', str(route),
                               '--address', f'{host}:{port}', '--runs', '2',
                               '--output', str(self.workspace / 'runs.json'))
        finally:
            server.shutdown()
            server.server_close()
            thread.join(5.0)
        self.assertIn('2/2', output)
        self.assertIn('100%', output)
        runs = json.loads((self.workspace / 'runs.json').read_text(
            encoding='utf-8'))
        self.assertEqual(runs['completion']['average'], 100.0)
        self.assertEqual(runs['runs']['lab'][0]['outcome'], 'finished')
