import random

from django.test import SimpleTestCase

from core.types import (ActorSnapshot,
                        ControlVector,
                        EgoState,
                        EpisodeTrace,
                        FrameRecord,
                        Infraction,
                        InfractionKind)
from metrics.aggregate import (RunSummary,
                               aggregate,
                               aggregate_from_dict,
                               aggregate_to_dict,
                               compare_aggregates,
                               summarize_run)
from metrics.exceptions import (EmptyAggregate,
                                InvalidPenaltyTable,
                                InvalidThresholds)
from metrics.report import render_report
from metrics.scoring import (ComfortThresholds,
                             MetricsReport,
                             PenaltyTable,
                             comfort,
                             driving_score,
                             efficiency,
                             evaluate,
                             skill_score,
                             success)
from sim.routes import RouteSpec, Skill

ROUTE = RouteSpec('r', ((0.0, 0.0), (100.0, 0.0)), speed_limit=8.0,
                  skill_tags=('merging',))


def frame(index, speed=0.0, steer=0.0, progress=0.0, dt=0.1, actors=()):
    return FrameRecord(frame_index=index, timestamp=index * dt, dt=dt,
                       ego=EgoState(0.0, 0.0, 0.0, speed),
                       route_progress=progress,
                       control=ControlVector(steer, 0.5, 0.0),
                       actors=tuple(actors))


def trace(fraction=1.0, kinds=(), frames=()):
    return EpisodeTrace(
        route_id='r', frames=tuple(frames),
        infractions=tuple(Infraction(kind, 0) for kind in kinds),
        completed_fraction=fraction, terminated_by='finished')


def driving_frames(count, speed, actors=()):
    return [frame(index, speed=speed, progress=min(1.0, index / (count - 1)),
                  actors=actors)
            for index in range(count)]


class PenaltyTableTest(SimpleTestCase):
    def test_defaults(self):
        table = PenaltyTable.from_settings()
        self.assertEqual(table['collision_vehicle'], 0.60)
        self.assertEqual(set(table.multipliers), set(InfractionKind.values))

    def test_invalid(self):
        table = dict(PenaltyTable.from_settings().multipliers)
        del table['timeout']
        self.assertRaises(InvalidPenaltyTable, PenaltyTable, table)
        self.assertRaises(InvalidPenaltyTable, PenaltyTable.from_settings,
                          red_light=0.0)
        self.assertRaises(InvalidPenaltyTable, PenaltyTable.from_settings,
                          red_light=1.5)
        self.assertRaises(InvalidPenaltyTable, PenaltyTable.from_settings,
                          speeding=0.5)

    def test_thresholds(self):
        self.assertEqual(ComfortThresholds.from_settings().max_jerk, 10.0)
        self.assertRaises(InvalidThresholds, ComfortThresholds, 0.0, 3.0, 10.0)


class DrivingScoreTest(SimpleTestCase):
    def setUp(self):
        self.penalties = PenaltyTable.from_settings()

    def test_clean_run(self):
        self.assertEqual(driving_score(trace(), self.penalties), 100.0)

    def test_partial_with_collision(self):
        score = driving_score(trace(0.8, ['collision_vehicle']),
                              self.penalties)
        self.assertAlmostEqual(score, 48.0, delta=1e-9)

    def test_fixture_set(self):
        fixtures = [
            (1.0, [], 100.0),
            (0.5, [], 50.0),
            (1.0, ['collision_pedestrian'], 50.0),
            (1.0, ['red_light', 'boundary_crossing'], 56.0),
            (0.25, ['collision_static', 'timeout'], 100 * 0.25 * 0.65 * 0.70),
            (0.0, ['route_deviation'], 0.0),
        ]
        for fraction, kinds, expected in fixtures:
            self.assertAlmostEqual(
                driving_score(trace(fraction, kinds), self.penalties),
                expected, delta=1e-9)

    def test_repeated_infraction(self):
        score = driving_score(trace(1.0, ['red_light', 'red_light']),
                              self.penalties)
        self.assertAlmostEqual(score, 100.0 * 0.70 ** 2, delta=1e-9)

    def test_permutation_and_monotonicity(self):
        rng = random.Random(1)
        kinds = list(InfractionKind.values)
        for _ in range(500):
            chosen = [rng.choice(kinds) for _ in range(rng.randint(0, 6))]
            fraction = rng.random()
            score = driving_score(trace(fraction, chosen), self.penalties)
            shuffled = chosen[:]
            rng.shuffle(shuffled)
            self.assertEqual(score,
                             driving_score(trace(fraction, shuffled),
                                           self.penalties))
            more = driving_score(trace(fraction, chosen + [rng.choice(kinds)]),
                                 self.penalties)
            self.assertLessEqual(more, score)

    def test_success_implies_full_score(self):
        rng = random.Random(2)
        for _ in range(100):
            table = PenaltyTable({kind: rng.uniform(0.01, 1.0)
                                  for kind in InfractionKind.values})
            self.assertEqual(driving_score(trace(), table), 100.0)


class SuccessTest(SimpleTestCase):
    def test_examples(self):
        self.assertTrue(success(trace()))
        self.assertFalse(success(trace(1.0, ['boundary_crossing'])))
        self.assertFalse(success(trace(0.99)))

    def test_evaluate(self):
        result = evaluate(trace(frames=driving_frames(60, 8.0)), ROUTE)
        self.assertTrue(result.success)
        self.assertEqual(result.success_rate, 100.0)
        self.assertEqual(result.skill_success, {'merging': True})
        self.assertEqual(result.comfort, 100.0)
        self.assertAlmostEqual(result.efficiency, 100.0)


class EfficiencyTest(SimpleTestCase):
    def test_reference_speed(self):
        self.assertAlmostEqual(
            efficiency(trace(frames=driving_frames(50, 8.0)), ROUTE), 100.0)

    def test_stationary(self):
        frames = [frame(index) for index in range(50)]
        self.assertEqual(efficiency(trace(0.0, frames=frames), ROUTE), 0.0)

    def test_faster_than_limit(self):
        self.assertAlmostEqual(
            efficiency(trace(frames=driving_frames(50, 9.6)), ROUTE), 120.0)

    def test_nearby_traffic_sets_reference(self):
        actors = [ActorSnapshot('a', 'vehicle', 20.0, 0.0, 20.0, 0.0, 4.0),
                  ActorSnapshot('b', 'vehicle', 10.0, 0.0, 10.0, 3.5, 9.0),
                  ActorSnapshot('c', 'vehicle', 45.0, 0.0, 45.0, 0.0, 1.0),
                  ActorSnapshot('d', 'pedestrian', 5.0, 0.0, 5.0, 3.5, 2.0),
                  ActorSnapshot('e', 'traffic_light', 8.0, 0.0, 8.0, 2.0,
                                0.0, state='red')]
        frames = driving_frames(50, 5.0, actors)
        self.assertAlmostEqual(efficiency(trace(frames=frames), ROUTE), 100.0)

    def test_stopped_traffic_counts(self):
        actors = [ActorSnapshot('lead', 'vehicle', 12.0, 0.0, 12.0, 0.0, 0.0),
                  ActorSnapshot('next', 'vehicle', 20.0, 0.0, 20.0, 3.5, 4.0)]
        frames = driving_frames(50, 2.0, actors)
        self.assertAlmostEqual(efficiency(trace(frames=frames), ROUTE), 100.0)

    def test_traffic_at_rest_falls_back_to_limit(self):
        actors = [ActorSnapshot('lead', 'vehicle', 12.0, 0.0, 12.0, 0.0, 0.0)]
        frames = driving_frames(50, 4.0, actors)
        self.assertAlmostEqual(efficiency(trace(frames=frames), ROUTE), 50.0)

    def test_unreached_checkpoints_excluded(self):
        frames = [frame(index, speed=4.0 if index < 10 else 8.0,
                        progress=index / 100.0) for index in range(30)]
        # checkpoints 5%, 10%, ... 25% at frames 5, 10, 15, 20, 25
        expected = (50.0 + 100.0 * 4) / 5
        self.assertAlmostEqual(efficiency(trace(0.3, frames=frames), ROUTE),
                               expected)


def brute_force_comfort(frames, thresholds):
    windows = len(frames) // 20
    if not windows:
        return None
    smooth = 0
    for window in range(windows):
        chunk = frames[window * 20:window * 20 + 20]
        ok = True
        accels = []
        for i in range(1, 20):
            if abs(chunk[i].control.steer - chunk[i - 1].control.steer) > \
                    thresholds.max_steer_delta:
                ok = False
            accels.append((chunk[i].ego.speed - chunk[i - 1].ego.speed)
                          / chunk[i - 1].dt)
        for i in range(len(accels)):
            if abs(accels[i]) > thresholds.max_accel:
                ok = False
            if i and abs((accels[i] - accels[i - 1]) / chunk[i - 1].dt) > \
                    thresholds.max_jerk:
                ok = False
        smooth += ok
    return 100.0 * smooth / windows


class ComfortTest(SimpleTestCase):
    def setUp(self):
        self.thresholds = ComfortThresholds()

    def test_constant_signals(self):
        frames = [frame(index, speed=5.0, steer=0.1) for index in range(40)]
        self.assertEqual(comfort(trace(frames=frames), self.thresholds), 100.0)

    def test_one_rough_window(self):
        frames = [frame(index, speed=5.0,
                        steer=0.5 if index == 30 else 0.0)
                  for index in range(40)]
        self.assertEqual(comfort(trace(frames=frames), self.thresholds), 50.0)

    def test_remainder_dropped(self):
        frames = [frame(index, speed=5.0,
                        steer=0.5 if index == 45 else 0.0)
                  for index in range(50)]
        self.assertEqual(comfort(trace(frames=frames), self.thresholds), 100.0)

    def test_windows_do_not_share_deltas(self):
        frames = [frame(index, speed=5.0 if index < 20 else 6.0)
                  for index in range(40)]
        self.assertEqual(comfort(trace(frames=frames), self.thresholds), 100.0)

    def test_short_trace_is_missing(self):
        frames = [frame(index) for index in range(19)]
        self.assertIsNone(comfort(trace(frames=frames), self.thresholds))

    def test_matches_brute_force(self):
        rng = random.Random(20)
        for _ in range(1000):
            thresholds = ComfortThresholds(rng.uniform(0.05, 0.3),
                                           rng.uniform(1.0, 4.0),
                                           rng.uniform(5.0, 30.0))
            steer, speed = 0.0, rng.uniform(0.0, 10.0)
            frames = []
            for index in range(rng.randint(0, 90)):
                steer = max(-1.0, min(1.0, steer + rng.gauss(0.0, 0.04)))
                speed = max(0.0, speed + rng.gauss(0.0, 0.15))
                frames.append(FrameRecord(
                    index, index * 0.1, rng.choice((0.1, 0.1, 0.05)),
                    EgoState(0.0, 0.0, 0.0, speed), 0.0,
                    ControlVector(steer, 0.3, 0.0)))
            self.assertEqual(comfort(trace(frames=frames), thresholds),
                             brute_force_comfort(frames, thresholds))


class SkillScoreTest(SimpleTestCase):
    def test_all_skills_pass(self):
        results = {f'r{index}': ((skill,), True)
                   for index, skill in enumerate(Skill.values)}
        self.assertEqual(skill_score(results), 100.0)

    def test_one_skill_passes(self):
        results = {f'r{index}': ((skill,), index == 0)
                   for index, skill in enumerate(Skill.values)}
        self.assertEqual(skill_score(results), 20.0)

    def test_route_with_two_skills(self):
        results = {
            'a': (('merging', 'overtaking'), True),
            'b': (('overtaking',), False),
            'c': (('merging',), False),
            'd': (('give_way',), True),
        }
        # merging 1/2, overtaking 1/2, give_way 1/1
        self.assertAlmostEqual(skill_score(results), (50.0 + 50.0 + 100.0) / 3)

    def test_brute_force_tally(self):
        rng = random.Random(4)
        for _ in range(200):
            results = {}
            for index in range(rng.randint(1, 8)):
                tags = tuple(rng.sample(Skill.values, rng.randint(1, 3)))
                results[f'r{index}'] = (tags, rng.random() < 0.5)
            rates = []
            for skill in Skill.values:
                tagged = [ok for tags, ok in results.values() if skill in tags]
                if tagged:
                    rates.append(100.0 * sum(tagged) / len(tagged))
            self.assertAlmostEqual(skill_score(results),
                                   sum(rates) / len(rates))

    def test_no_tags(self):
        self.assertIsNone(skill_score({'r': ((), True)}))
        self.assertIsNone(skill_score({}))


def report(score, succeeded=False, comfort_value=None):
    return MetricsReport(success=succeeded, driving_score=score,
                         efficiency=100.0, comfort=comfort_value,
                         skill_success={'merging': succeeded})


class AggregateTest(SimpleTestCase):
    def test_mean_and_sample_std(self):
        result = aggregate([report(1.0), report(2.0), report(3.0)])
        self.assertEqual(result['driving_score'].mean, 2.0)
        self.assertEqual(result['driving_score'].std, 1.0)

    def test_single_run(self):
        result = aggregate([report(42.0, comfort_value=80.0)])
        for metric, summary in result.metrics.items():
            self.assertEqual(summary.std, 0.0, metric)

    def test_success_rate(self):
        result = aggregate([report(10.0, succeeded=index == 0)
                            for index in range(10)])
        self.assertAlmostEqual(result['success_rate'].mean, 10.0)

    def test_missing_metric(self):
        result = aggregate([report(1.0), report(2.0, comfort_value=50.0)])
        self.assertEqual(result['comfort'].mean, 50.0)
        self.assertEqual(result['comfort'].n, 1)
        self.assertIsNone(aggregate([report(1.0)])['comfort'])

    def test_empty(self):
        self.assertRaises(EmptyAggregate, aggregate, [])

    def test_mean_within_range(self):
        rng = random.Random(9)
        for _ in range(300):
            values = [rng.choice((0.1, 0.7, rng.uniform(0.0, 100.0)))
                      for _ in range(rng.randint(1, 12))]
            summary = aggregate([report(value) for value in values])[
                'driving_score']
            self.assertGreaterEqual(summary.mean, min(values))
            self.assertLessEqual(summary.mean, max(values))

    def test_run_summaries(self):
        first = summarize_run([('a', report(50.0, True, 100.0)),
                               ('b', report(30.0))])
        second = summarize_run([('a', report(70.0)), ('b', report(10.0))])
        self.assertEqual(first.success_rate, 50.0)
        self.assertEqual(first.driving_score, 40.0)
        self.assertEqual(first.comfort, 100.0)
        self.assertIsNone(second.comfort)
        result = aggregate([first, second])
        self.assertEqual(result['driving_score'].mean, 40.0)
        self.assertEqual(result.n, 2)

    def test_dict_round_trip(self):
        result = aggregate([RunSummary(50.0, 40.0, 90.0, None, 50.0, 2)],
                           label='mock')
        self.assertEqual(aggregate_from_dict(aggregate_to_dict(result)), result)

    def test_compare(self):
        baseline = aggregate([report(80.0), report(90.0)])
        threat = aggregate([report(40.0), report(60.0)])
        drops = compare_aggregates(baseline, threat)
        self.assertEqual(drops['driving_score'].mean, -35.0)
        self.assertIsNone(drops['comfort'])


class RenderReportTest(SimpleTestCase):
    def setUp(self):
        self.result = aggregate([report(1.0), report(2.0), report(3.0)],
                                label='rule+rule CNG')

    def test_single_row(self):
        lines = render_report(self.result).splitlines()
        self.assertEqual(len(lines), 3)
        self.assertIn('Success Rate', lines[0])
        self.assertIn('Comfortness', lines[0])
        cells = [cell.strip() for cell in lines[2].split('|')]
        self.assertEqual(cells[0], 'rule+rule CNG')
        self.assertEqual(len(cells), 6)
        self.assertEqual(cells[2], '2.00±1.00')

    def test_deterministic(self):
        self.assertEqual(render_report(self.result).encode(),
                         render_report(self.result).encode())

    def test_missing_comfort(self):
        cells = [cell.strip() for cell in
                 render_report(self.result).splitlines()[2].split('|')]
        self.assertEqual(cells[4], '—')

    def test_rows_and_drops(self):
        threat = aggregate([report(0.5), report(1.5)], label='threat')
        text = render_report([self.result, threat],
                             [None, compare_aggregates(self.result, threat)])
        lines = text.splitlines()
        self.assertEqual(len(lines), 4)
        self.assertIn('1.00±0.71 (-1.00)', lines[3])
