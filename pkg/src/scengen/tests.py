import random
import tempfile

from django.conf import settings
from django.test import SimpleTestCase

from adapters.base import Modality, ModelResponse, ResponseStatus
from adapters.scripted import ScriptedAdapter
from scengen.dsl import find_blocks, format_dsl, parse_dsl
from scengen.exceptions import (DslSyntaxError,
                                DslValidationError,
                                FusionFailed,
                                InvalidScenarioSpec)
from scengen.generate import (P3Answers,
                              elicit_p3,
                              fuse,
                              fusion_prompt,
                              generate_suite,
                              load_grammar,
                              load_p3_prompts,
                              persist_suite,
                              scene_history)
from scengen.scenario import ScenarioSpec, load_suite
from sim.render import render_observation
from sim.routes import (ALLOWED_BEHAVIORS,
                        BEHAVIOR_PARAMS,
                        LIGHT_PARAMS,
                        PARAM_BOUNDS,
                        ActorKind,
                        ActorSpec,
                        RouteSpec,
                        load_route_library)
from sim.world import load_route

CUT_IN = 'ACTOR vehicle AT progress=0.5 offset=0 BEHAVIOR cut_in speed=6 trigger=15'
VALID = ('DESC a car cuts in\n'
         'ACTOR vehicle AT progress=0.5 offset=3.5 BEHAVIOR cut_in speed=6 '
         'trigger=15 lateral_speed=1.5\n')

PROSE_WORDS = ('the', 'ego', 'vehicle', 'should', 'slow', 'scenario', 'here',
               'is', 'a', 'threat', 'actor', 'at', 'behavior', 'note:', '```')


def stub_route(index):
    return RouteSpec(f'stub{index:03d}', ((0.0, 0.0), (80.0 + index, 0.0)),
                     skill_tags=('merging',))


def random_actor(rng, index):
    kind = rng.choice(sorted(ALLOWED_BEHAVIORS))
    behavior = rng.choice(sorted(ALLOWED_BEHAVIORS[kind]))
    names = LIGHT_PARAMS if kind == ActorKind.TRAFFIC_LIGHT \
        else BEHAVIOR_PARAMS[behavior]
    params = {}
    for name in names:
        if rng.random() < 0.6:
            low, high, _, _ = PARAM_BOUNDS[name]
            params[name] = low + (high - low) * rng.uniform(0.01, 1.0)
    return ActorSpec(
        actor_id=rng.choice((f'a{index}', f'actor_{index}', f'x-{index}')),
        kind=str(kind),
        behavior=str(behavior),
        progress=rng.uniform(0.001, 0.999),
        offset=rng.choice((0.0, rng.uniform(-10.0, 10.0))),
        speed=rng.choice((0.0, rng.uniform(0.0, 30.0))),
        trigger_distance=rng.uniform(0.1, 200.0),
        params=params,
    )


def random_scenario(rng):
    words = [rng.choice(PROSE_WORDS[:12]) for _ in range(rng.randint(0, 8))]
    return ScenarioSpec(
        scenario_id='s-threat',
        base_route_id='s',
        description=' '.join(words),
        actors=tuple(random_actor(rng, index)
                     for index in range(1, rng.randint(1, 4) + 1)),
    )


class DslParseTest(SimpleTestCase):
    def test_cut_in_statement(self):
        scenario = parse_dsl(CUT_IN, 'r01', 'r01-threat')
        self.assertEqual(len(scenario.actors), 1)
        actor = scenario.actors[0]
        self.assertEqual(actor.behavior, 'cut_in')
        self.assertEqual(actor.kind, 'vehicle')
        self.assertEqual(actor.actor_id, 'a1')
        self.assertEqual(actor.progress, 0.5)
        self.assertEqual(actor.speed, 6.0)
        self.assertEqual(actor.trigger_distance, 15.0)
        self.assertEqual(scenario.scenario_id, 'r01-threat')
        self.assertEqual(scenario.base_route_id, 'r01')

    def test_default_scenario_id(self):
        self.assertEqual(parse_dsl(CUT_IN, 'r02').scenario_id, 'r02-threat')

    def test_description(self):
        scenario = parse_dsl(VALID)
        self.assertEqual(scenario.description, 'a car cuts in')
        self.assertEqual(scenario.actors[0].params, {'lateral_speed': 1.5})

    def test_progress_out_of_range(self):
        with self.assertRaises(DslValidationError) as caught:
            parse_dsl(CUT_IN.replace('progress=0.5', 'progress=1.5'))
        self.assertEqual(caught.exception.field, 'progress')
        self.assertEqual(caught.exception.line, 1)

    def test_unknown_behavior(self):
        with self.assertRaises(DslValidationError) as caught:
            parse_dsl('intro\n' + CUT_IN.replace('cut_in', 'drift'))
        self.assertEqual(caught.exception.field, 'behavior')
        self.assertEqual(caught.exception.line, 2)

    def test_behavior_not_allowed_for_kind(self):
        with self.assertRaises(DslValidationError) as caught:
            parse_dsl('ACTOR static_obstacle AT progress=0.5 offset=0 '
                      'BEHAVIOR cut_in')
        self.assertEqual(caught.exception.field, 'behavior')

    def test_parameter_errors(self):
        with self.assertRaises(DslValidationError) as caught:
            parse_dsl(CUT_IN + ' decel=3')
        self.assertEqual(caught.exception.field, 'decel')
        with self.assertRaises(DslValidationError) as caught:
            parse_dsl(CUT_IN + ' wings=3')
        self.assertEqual(caught.exception.field, 'wings')
        with self.assertRaises(DslValidationError) as caught:
            parse_dsl(CUT_IN + ' speed=7')
        self.assertEqual(caught.exception.field, 'speed')
        with self.assertRaises(DslValidationError) as caught:
            parse_dsl(CUT_IN.replace('trigger=15', 'trigger=0'))
        self.assertEqual(caught.exception.field, 'trigger')

    def test_syntax_error_location(self):
        with self.assertRaises(DslSyntaxError) as caught:
            parse_dsl('ACTOR vehicle AT progress=abc offset=0 '
                      'BEHAVIOR stationary')
        self.assertEqual((caught.exception.line, caught.exception.column),
                         (1, 27))
        with self.assertRaises(DslSyntaxError) as caught:
            parse_dsl('prose\n\nACTOR vehicle progress=0.5 offset=0 '
                      'BEHAVIOR stationary')
        self.assertEqual((caught.exception.line, caught.exception.column),
                         (3, 15))
        with self.assertRaises(DslSyntaxError) as caught:
            parse_dsl('ACTOR vehicle AT progress=0.5 BEHAVIOR stationary')
        self.assertEqual(caught.exception.column, 31)
        with self.assertRaises(DslSyntaxError) as caught:
            parse_dsl('ACTOR vehicle AT progress=0.5 offset=0')
        self.assertEqual(caught.exception.column, 39)

    def test_no_block(self):
        with self.assertRaises(DslSyntaxError) as caught:
            parse_dsl('I cannot think of a threat for this scene.')
        self.assertEqual(caught.exception.line, 1)

    def test_duplicate_ids(self):
        with self.assertRaises(DslValidationError) as caught:
            parse_dsl(f'{CUT_IN} id=car\n{CUT_IN} id=car')
        self.assertEqual(caught.exception.field, 'id')
        self.assertEqual(caught.exception.line, 2)

    def test_description_only(self):
        with self.assertRaises(DslValidationError) as caught:
            parse_dsl('DESC nothing happens')
        self.assertEqual(caught.exception.field, 'actors')

    def test_first_good_block_wins(self):
        text = (f'Draft:\n{CUT_IN.replace("0.5", "2")}\n\nFinal:\n'
                f'{VALID}\nThird:\n{CUT_IN}\n')
        self.assertEqual(parse_dsl(text), parse_dsl(VALID))

    def test_find_blocks(self):
        blocks = find_blocks(f'a\n{CUT_IN}\n  {CUT_IN}\nb\nDESC x\n')
        self.assertEqual([[number for number, _ in block] for block in blocks],
                         [[2, 3], [5]])


class DslRoundTripTest(SimpleTestCase):
    def test_format_then_parse_is_identity(self):
        rng = random.Random(3)
        for _ in range(1000):
            scenario = random_scenario(rng)
            text = format_dsl(scenario)
            self.assertEqual(parse_dsl(text, scenario.base_route_id,
                                       scenario.scenario_id), scenario, text)

    def test_description_whitespace_round_trips(self):
        scenario = parse_dsl(VALID)
        spaced = ScenarioSpec(scenario.scenario_id, scenario.base_route_id,
                              scenario.actors, '  a car\tcuts   in ')
        self.assertEqual(spaced.description, 'a car cuts in')
        self.assertEqual(spaced, scenario)
        self.assertEqual(parse_dsl(format_dsl(spaced)), spaced)
        self.assertEqual(
            parse_dsl(VALID.replace('a car cuts in', 'a  car cuts\tin')),
            scenario)

    def test_prose_wrappers_are_ignored(self):
        rng = random.Random(4)
        for _ in range(300):
            block = format_dsl(random_scenario(rng))
            expected = parse_dsl(block)

            def prose():
                return '\n'.join(
                    ' '.join(rng.choice(PROSE_WORDS)
                             for _ in range(rng.randint(0, 10)))
                    for _ in range(rng.randint(0, 4)))

            wrapped = f'{prose()}\n{block}{prose()}'
            self.assertEqual(parse_dsl(wrapped), expected, wrapped)


class P3Test(SimpleTestCase):
    def setUp(self):
        self.route = load_route_library()[0]
        self.history = [render_observation(load_route(self.route))]

    def test_three_distinct_answers(self):
        adapter = ScriptedAdapter([('Perception.', 'a car ahead'),
                                   ('Prediction.', 'the car may brake'),
                                   ('Planning.', 'keep distance')],
                                  modality=Modality.TEXT)
        answers = elicit_p3(adapter, self.history)
        self.assertEqual((answers.perception, answers.prediction,
                          answers.planning),
                         ('a car ahead', 'the car may brake', 'keep distance'))
        self.assertFalse(answers.degraded)

    def test_failed_stage(self):
        adapter = ScriptedAdapter([('Perception.', 'a car ahead'),
                                   ('Planning.', 'keep distance')],
                                  modality=Modality.TEXT)
        answers = elicit_p3(adapter, self.history)
        self.assertEqual(answers.prediction, '')
        self.assertTrue(answers.degraded)
        self.assertEqual(list(answers.failures), ['prediction'])

    def test_all_stages_fail(self):
        failure = ModelResponse.failure(ResponseStatus.TRANSPORT_ERROR, 'down')
        adapter = ScriptedAdapter([(None, failure)])
        answers = elicit_p3(adapter, self.history)
        self.assertEqual(answers, P3Answers(failures=answers.failures))
        self.assertTrue(answers.degraded)
        self.assertEqual(len(answers.failures), 3)

    def test_empty_history(self):
        self.assertRaises(InvalidScenarioSpec, elicit_p3,
                          ScriptedAdapter([]), [])

    def test_vision_history_attaches_raster(self):
        history = scene_history(self.route, Modality.VISION)
        self.assertEqual(history[0].scene.mode, 'raster')
        self.assertEqual(scene_history(self.route, Modality.TEXT)[0].scene.mode,
                         'text')


class FuseTest(SimpleTestCase):
    def setUp(self):
        self.answers = P3Answers('car {ahead}', 'may brake', 'keep distance')

    def test_prompt_embeds_answers_and_grammar(self):
        grammar = load_grammar()
        prompt = fusion_prompt(self.answers, load_p3_prompts(), grammar)
        for text in ('car {ahead}', 'may brake', 'keep distance', grammar):
            self.assertIn(text, prompt)
        repaired = fusion_prompt(self.answers, load_p3_prompts(), grammar,
                                 'line 1: invalid progress')
        self.assertIn('line 1: invalid progress', repaired)

    def test_echo(self):
        self.assertEqual(fuse(self.answers, ScriptedAdapter([(None, VALID)])),
                         VALID)

    def test_timeout(self):
        slow = ScriptedAdapter([(None, VALID)], delay=0.5)
        self.assertRaises(FusionFailed, fuse, self.answers, slow,
                          deadline=0.05)


def p3_adapter():
    return ScriptedAdapter([('Perception.', 'two lanes, light traffic'),
                            ('Prediction.', 'a car may cut in'),
                            ('Planning.', 'keep the lane')],
                           modality=Modality.TEXT)


class GenerateSuiteTest(SimpleTestCase):
    def test_always_valid(self):
        routes = [stub_route(index) for index in range(5)]
        result = generate_suite(routes, p3_adapter(),
                                ScriptedAdapter([(None, VALID)]))
        self.assertEqual([scenario.base_route_id for scenario in result.scenarios],
                         [route.route_id for route in routes])
        self.assertEqual(result.scenarios[0].scenario_id, 'stub000-threat')
        self.assertEqual(result.skipped, [])
        self.assertEqual(set(result.repairs.values()), {0})

    def test_repair(self):
        slow = ScriptedAdapter([('was rejected', VALID), (None, 'no idea')])
        result = generate_suite([stub_route(0)], p3_adapter(), slow)
        self.assertEqual(len(result.scenarios), 1)
        self.assertEqual(result.repairs, {'stub000': 1})

    def test_never_valid(self):
        result = generate_suite([stub_route(0), stub_route(1)], p3_adapter(),
                                ScriptedAdapter([(None, 'sorry')]))
        self.assertEqual(result.scenarios, [])
        self.assertEqual([entry.route_id for entry in result.skipped],
                         ['stub000', 'stub001'])
        self.assertEqual(result.skipped[0].attempts, 4)

    def test_fusion_failure_skips(self):
        result = generate_suite([stub_route(0)], p3_adapter(),
                                ScriptedAdapter([]))
        self.assertEqual(result.scenarios, [])
        self.assertEqual(result.skipped[0].attempts, 1)

    def test_empty_routes(self):
        self.assertRaises(InvalidScenarioSpec, generate_suite, [],
                          p3_adapter(), ScriptedAdapter([]))

    def test_two_hundred_twenty_routes(self):
        routes = [stub_route(index) for index in range(220)]
        rng = random.Random(5)
        answers = [format_dsl(random_scenario(rng)) for _ in range(220)]
        result = generate_suite(routes, p3_adapter(),
                                ScriptedAdapter([(None, answers)]),
                                parallelism=4)
        self.assertEqual(len(result.scenarios), 220)
        for route, scenario in zip(routes, result.scenarios):
            self.assertEqual(parse_dsl(format_dsl(scenario), route.route_id),
                             scenario)
            load_route(route, scenario)

    def test_deterministic(self):
        routes = load_route_library()
        first = generate_suite(routes, p3_adapter(),
                               ScriptedAdapter([(None, VALID)]))
        second = generate_suite(routes, p3_adapter(),
                                ScriptedAdapter([(None, VALID)]))
        self.assertEqual(first.scenarios, second.scenarios)
        self.assertEqual(len(first.scenarios), len(routes))

    def test_persist_and_load(self):
        routes = [stub_route(index) for index in range(3)]
        result = generate_suite(routes, p3_adapter(),
                                ScriptedAdapter([(None, VALID)]))
        with tempfile.TemporaryDirectory() as directory:
            persist_suite(result.scenarios, directory, result.skipped)
            self.assertEqual(load_suite(directory), result.scenarios)


class BundledSuiteTest(SimpleTestCase):
    def test_suite_loads_on_its_routes(self):
        routes = {route.route_id: route for route in load_route_library()}
        suite = load_suite(settings.DRIVEBENCH['SCENARIO_SUITE'])
        self.assertEqual(sorted(scenario.base_route_id for scenario in suite),
                         sorted(routes))
        for scenario in suite:
            route = routes[scenario.base_route_id]
            self.assertIn(scenario.scenario_id,
                          [trigger.scenario_ref
                           for trigger in route.scenario_triggers])
            load_route(route, scenario)
            self.assertEqual(parse_dsl(format_dsl(scenario), route.route_id),
                             scenario)
