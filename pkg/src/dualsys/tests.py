import math
import random

from django.test import SimpleTestCase

from adapters.base import ModelResponse, ResponseStatus
from adapters.reference import RuleFollowingAdapter
from adapters.scripted import ScriptedAdapter
from core.types import (ControlVector,
                        EgoState,
                        Observation,
                        ScenePayload,
                        SceneMode,
                        Task,
                        TaskSet)
from dualsys.driver import DualSystemDriver, SlowBranch
from dualsys.exceptions import (HistoryError,
                                InvalidCandidates,
                                ParseFailure,
                                SelectionFailure,
                                TemplateError)
from dualsys.fast import build_fast_prompts, query_fast
from dualsys.parsing import format_control, parse_cng, select_dcs
from dualsys.prompts import (CandidateSet,
                             ParsingMode,
                             PromptTemplate,
                             load_prompt_library)
from dualsys.translate import (HybridBranch,
                               apply_suffix_control,
                               build_slow_prompt,
                               fallback_action,
                               hybrid_mode_select,
                               translate)
from sim.render import describe_scene

CNG = PromptTemplate('cng', 'Command: {command_text}\nScene:\n{scene}\n'
                            'Answer: steer, throttle, brake', ParsingMode.CNG)
DCS = PromptTemplate('dcs', 'Command: {command_text}\nScene:\n{scene}\n'
                            'Candidates:\n{candidates}', ParsingMode.DCS)
THREE = CandidateSet((
    ('STOP', ControlVector(0.0, 0.0, 1.0)),
    ('STRAIGHT', ControlVector(0.0, 0.5, 0.0)),
    ('TURN_LEFT', ControlVector(-0.5, 0.3, 0.0)),
))
ALL_TASKS = TaskSet(
    (Task.ACTION_PREDICTION, Task.TRAJECTORY_FORECASTING,
     Task.SEMANTIC_REASONING),
    {Task.ACTION_PREDICTION: 'What should the ego vehicle do next?',
     Task.TRAJECTORY_FORECASTING: 'Where will the ego vehicle be in 3 s?',
     Task.SEMANTIC_REASONING: 'What matters in this scene?'})
ACTION_ONLY = TaskSet((Task.ACTION_PREDICTION,),
                      {Task.ACTION_PREDICTION: 'What should the ego do next?'})


def observation(frame_index, speed=5.0, raster=False):
    ego = EgoState(0.0, 0.0, 0.0, speed)
    text = describe_scene(frame_index, frame_index * 0.1, ego, 10.0, 0.0, 0.0,
                          100.0, 0.1, 1.75, 8.0)
    if raster:
        scene = ScenePayload(SceneMode.RASTER, image=bytes(16),
                             encoding='gray8;4x4')
        return Observation(frame_index, frame_index * 0.1, ego, scene, 0.1,
                           caption=text)
    return Observation(frame_index, frame_index * 0.1, ego,
                       ScenePayload(SceneMode.TEXT, text=text), 0.1)


class FastPromptTest(SimpleTestCase):
    def test_one_frame_one_task(self):
        prompts = build_fast_prompts([observation(0)], ACTION_ONLY)
        self.assertEqual(len(prompts), 1)
        task, request = prompts[0]
        self.assertEqual(task, Task.ACTION_PREDICTION)
        self.assertIn('What should the ego do next?', request.prompt)
        self.assertIn('[frame 0 | t-0]', request.prompt)

    def test_every_prompt_holds_every_frame(self):
        history = [observation(index) for index in range(3)]
        prompts = build_fast_prompts(history, ALL_TASKS)
        self.assertEqual(len(prompts), 3)
        for _, request in prompts:
            for label in ('[frame 0 | t-2]', '[frame 1 | t-1]',
                          '[frame 2 | t-0]'):
                self.assertIn(label, request.prompt)

    def test_empty_history(self):
        self.assertRaises(HistoryError, build_fast_prompts, [], ALL_TASKS)

    def test_history_longer_than_window(self):
        history = [observation(index) for index in range(6)]
        self.assertRaises(HistoryError, build_fast_prompts, history,
                          ALL_TASKS, history_length=4)
        self.assertEqual(len(build_fast_prompts(history[1:], ALL_TASKS,
                                                history_length=4)), 3)

    def test_raster_frames_as_images_or_captions(self):
        history = [observation(0, raster=True), observation(1, raster=True)]
        _, request = build_fast_prompts(history, ACTION_ONLY, 'vision')[0]
        self.assertEqual(len(request.images), 2)
        self.assertIn('<image 2>', request.prompt)
        _, request = build_fast_prompts(history, ACTION_ONLY, 'text')[0]
        self.assertEqual(request.images, ())
        self.assertIn('speed=5.00 m/s', request.prompt)


class QueryFastTest(SimpleTestCase):
    def test_scripted_answer(self):
        adapter = ScriptedAdapter([(None, 'Keep going straight')])
        prompts = build_fast_prompts([observation(0)], ACTION_ONLY)
        commands = query_fast(adapter, prompts)
        self.assertEqual(commands.per_task_text,
                         {Task.ACTION_PREDICTION: 'Keep going straight'})
        self.assertEqual(commands.failures, {})

    def test_one_task_times_out(self):
        tasks = TaskSet((Task.ACTION_PREDICTION, Task.TRAJECTORY_FORECASTING),
                        {Task.ACTION_PREDICTION: 'act',
                         Task.TRAJECTORY_FORECASTING: 'forecast'})
        timeout = ModelResponse.failure(ResponseStatus.TIMEOUT, 'too slow')
        adapter = ScriptedAdapter([('Task: trajectory_forecasting', timeout),
                                   (None, 'Stop')])
        commands = query_fast(adapter, build_fast_prompts([observation(0)],
                                                          tasks))
        self.assertEqual(commands.per_task_text,
                         {Task.ACTION_PREDICTION: 'Stop'})
        self.assertEqual(list(commands.failures),
                         [Task.TRAJECTORY_FORECASTING])

    def test_all_tasks_fail(self):
        commands = query_fast(ScriptedAdapter([]),
                              build_fast_prompts([observation(0)], ALL_TASKS))
        self.assertEqual(commands.per_task_text, {})
        self.assertEqual(len(commands.failures), 3)

    def test_deadline(self):
        adapter = ScriptedAdapter([(None, 'late')], delay=0.5)
        commands = query_fast(adapter,
                              build_fast_prompts([observation(0)], ACTION_ONLY),
                              deadline=0.05)
        self.assertIn('timeout', commands.failures[Task.ACTION_PREDICTION])


class TemplateTest(SimpleTestCase):
    def test_cng_prompt(self):
        prompt = build_slow_prompt('turn left slowly', [observation(0)], CNG)
        self.assertIn('turn left slowly', prompt)
        self.assertNotIn('Candidates', prompt)
        self.assertIn('speed=5.00 m/s', prompt)

    def test_dcs_prompt_lists_labels(self):
        prompt = build_slow_prompt('stop now', [observation(0)], DCS, THREE)
        for label in THREE.labels:
            self.assertIn(label, prompt)

    def test_dcs_without_candidates(self):
        self.assertRaises(TemplateError, build_slow_prompt, 'stop',
                          [observation(0)], DCS)

    def test_template_validation(self):
        self.assertRaises(TemplateError, PromptTemplate, 't',
                          '{command_text} {speed}')
        self.assertRaises(TemplateError, PromptTemplate, 't',
                          '{command_text} {candidates}', ParsingMode.CNG)
        self.assertRaises(TemplateError, PromptTemplate, 't',
                          '{command_text}', ParsingMode.DCS)
        self.assertRaises(TemplateError, PromptTemplate, 't', '{scene}')
        self.assertRaises(TemplateError, PromptTemplate, 't',
                          '{command_text} {')

    def test_candidate_set_invariants(self):
        stop = ControlVector(0.0, 0.0, 1.0)
        self.assertRaises(InvalidCandidates, CandidateSet, (('STOP', stop),))
        self.assertRaises(InvalidCandidates, CandidateSet,
                          (('STOP', stop), ('stop', stop)))
        self.assertRaises(InvalidCandidates, CandidateSet,
                          (('STOP', stop), ('GO', (0.0, 1.0, 0.0))))

    def test_bundled_library(self):
        library = load_prompt_library(with_suffixes=True)
        self.assertEqual(library.candidates.labels,
                         ('STOP', 'STRAIGHT_SLOW', 'STRAIGHT', 'LEFT', 'RIGHT',
                          'HARD_LEFT', 'HARD_RIGHT'))
        self.assertEqual(library.candidates.control_of('HARD_LEFT'),
                         ControlVector(-0.8, 0.2, 0.0))
        self.assertEqual(library.template(mode=ParsingMode.DCS).mode,
                         ParsingMode.DCS)
        self.assertEqual(set(library.tasks.tasks), set(Task.values))
        self.assertIn('Keep going straight', library.suffix_table)
        self.assertEqual(load_prompt_library().suffix_table, {})


class ParseCngTest(SimpleTestCase):
    def test_labeled(self):
        self.assertEqual(parse_cng('steer: -0.25, throttle: 0.4, brake: 0.0'),
                         ControlVector(-0.25, 0.4, 0.0))

    def test_prose(self):
        self.assertEqual(parse_cng('I will brake. steer=0 throttle=0 brake=1.0'),
                         ControlVector(0.0, 0.0, 1.0))

    def test_any_order(self):
        self.assertEqual(parse_cng('Brake: 0\nThrottle: 0.7\nSteering: 0.1'),
                         ControlVector(0.1, 0.7, 0.0))

    def test_no_numbers(self):
        self.assertRaises(ParseFailure, parse_cng, 'turn left a bit')

    def test_positional(self):
        self.assertEqual(parse_cng('(0.1, 0.5, 0)'),
                         ControlVector(0.1, 0.5, 0.0))
        self.assertRaises(ParseFailure, parse_cng, '0.1 0.5')
        self.assertRaises(ParseFailure, parse_cng, '0.1 0.5 0 0.2')

    def test_duplicate_label(self):
        self.assertRaises(ParseFailure, parse_cng,
                          'steer: 0.1 steer: 0.2 throttle: 0 brake: 0')

    def test_partial_labels(self):
        self.assertRaises(ParseFailure, parse_cng, 'steer: 0.1, throttle: 0.2')

    def test_clamps(self):
        self.assertEqual(parse_cng('steer: -3, throttle: 2, brake: 0'),
                         ControlVector(-1.0, 1.0, 0.0))

    def test_overflow(self):
        self.assertRaises(ParseFailure, parse_cng,
                          'steer: 1e999, throttle: 0, brake: 0')

    def test_round_trip(self):
        rng = random.Random(7)
        for _ in range(10000):
            control = ControlVector(rng.uniform(-1.0, 1.0), rng.random(),
                                    rng.random())
            self.assertEqual(parse_cng(format_control(control)), control)
        for control in (ControlVector(-1.0, 0.0, 1.0),
                        ControlVector(1e-05, 1.0, 0.0)):
            self.assertEqual(parse_cng(format_control(control)), control)


class SelectDcsTest(SimpleTestCase):
    def test_exact_label(self):
        self.assertEqual(select_dcs('TURN_LEFT', THREE),
                         ControlVector(-0.5, 0.3, 0.0))

    def test_substring(self):
        self.assertEqual(select_dcs('I choose STOP because of the pedestrian',
                                    THREE), ControlVector(0.0, 0.0, 1.0))

    def test_no_label(self):
        self.assertRaises(SelectionFailure, select_dcs, 'accelerate hard',
                          THREE)
        self.assertRaises(SelectionFailure, select_dcs, 'Stopping soon', THREE)

    def test_earliest_wins(self):
        self.assertEqual(select_dcs('straight, not stop', THREE),
                         ControlVector(0.0, 0.5, 0.0))

    def test_spacing_and_case(self):
        self.assertEqual(select_dcs('turn left', THREE),
                         ControlVector(-0.5, 0.3, 0.0))

    def test_longest_label(self):
        library = load_prompt_library()
        self.assertEqual(select_dcs('HARD_LEFT', library.candidates),
                         ControlVector(-0.8, 0.2, 0.0))
        self.assertEqual(select_dcs('go straight slow', library.candidates),
                         ControlVector(0.0, 0.3, 0.0))
        self.assertEqual(select_dcs('LEFT', library.candidates),
                         ControlVector(-0.4, 0.3, 0.0))

    def test_only_members(self):
        rng = random.Random(11)
        library = load_prompt_library()
        members = {control for _, control in library.candidates.entries}
        words = ['stop', 'LEFT', 'hard', 'right', 'straight', 'slow', 'go',
                 'STRAIGHT_SLOW', 'HARD_RIGHT', 'the', 'left-ish', '_', '.']
        for _ in range(2000):
            response = ' '.join(rng.choice(words)
                                for _ in range(rng.randint(0, 6)))
            try:
                control = select_dcs(response, library.candidates)
            except SelectionFailure:
                continue
            self.assertIn(control, members)


class TranslateTest(SimpleTestCase):
    def test_cng(self):
        slow = ScriptedAdapter([(None, 'steer:0 throttle:0.5 brake:0')])
        translation = translate('Keep going straight', [observation(0)],
                                ParsingMode.CNG, slow, CNG)
        self.assertEqual(translation.control, ControlVector(0.0, 0.5, 0.0))
        self.assertFalse(translation.fallback)

    def test_timeout_falls_back(self):
        slow = ScriptedAdapter([(None, 'steer:0 throttle:0.5 brake:0')],
                               delay=0.5)
        translation = translate('Keep going straight', [observation(0)],
                                ParsingMode.CNG, slow, CNG, deadline=0.05)
        self.assertEqual(translation.control, fallback_action())
        self.assertTrue(translation.fallback)
        self.assertIn('timeout', translation.failure)

    def test_dcs(self):
        slow = ScriptedAdapter([(None, 'STOP')])
        translation = translate('Stop', [observation(0)], ParsingMode.DCS,
                                slow, DCS, THREE)
        self.assertEqual(translation.control, ControlVector(0.0, 0.0, 1.0))

    def test_default_library_template(self):
        slow = ScriptedAdapter([('Candidates:', 'RIGHT'), (None, 'no')])
        translation = translate('Steer right', [observation(0)],
                                ParsingMode.DCS, slow)
        self.assertEqual(translation.control, ControlVector(0.4, 0.3, 0.0))

    def test_unparseable_falls_back(self):
        slow = ScriptedAdapter([(None, 'I would rather not say')])
        translation = translate('Stop', [observation(0)], ParsingMode.CNG,
                                slow, CNG)
        self.assertTrue(translation.fallback)
        self.assertTrue(translation.failure.startswith('parse'))

    def test_empty_command(self):
        translation = translate('  ', [observation(0)], ParsingMode.CNG,
                                ScriptedAdapter([(None, 'x')]), CNG)
        self.assertEqual(translation.control, fallback_action())

    def test_controls_always_in_range(self):
        rng = random.Random(3)
        fragments = ['steer', 'throttle', 'brake', ':', '=', ' ', ',', '-',
                     '0.5', '2', '-7.25', '1e3', 'nan', 'inf', 'STOP',
                     'TURN_LEFT', 'straight', '.', 'maybe']
        for index in range(2000):
            text = ''.join(rng.choice(fragments)
                           for _ in range(rng.randint(0, 12))) or 'x'
            mode = ParsingMode.CNG if index % 2 else ParsingMode.DCS
            template = CNG if mode == ParsingMode.CNG else DCS
            translation = translate('go', [observation(0)], mode,
                                    ScriptedAdapter([(None, text)]), template,
                                    THREE)
            control = translation.control
            self.assertTrue(-1.0 <= control.steer <= 1.0)
            self.assertTrue(0.0 <= control.throttle <= 1.0)
            self.assertTrue(0.0 <= control.brake <= 1.0)
            self.assertTrue(all(math.isfinite(value)
                                for value in control.as_tuple()))


class FallbackTest(SimpleTestCase):
    def test_full_brake(self):
        self.assertEqual(fallback_action().as_tuple(), (0.0, 0.0, 1.0))
        self.assertEqual(fallback_action(), fallback_action())


class SuffixTest(SimpleTestCase):
    def test_speed_suffix_replaces_trailing_period(self):
        table = {'Keep going straight': ' with speed = 0.5'}
        self.assertEqual(apply_suffix_control('Keep going straight', table),
                         'Keep going straight with speed = 0.5')
        self.assertEqual(apply_suffix_control('Keep going straight.', table),
                         'Keep going straight with speed = 0.5')

    def test_no_match(self):
        table = {'Keep going straight': ' with speed = 0.5'}
        self.assertEqual(apply_suffix_control('Stop', table), 'Stop')

    def test_empty_table(self):
        for command in ('Stop', '', 'Keep going straight'):
            self.assertEqual(apply_suffix_control(command, {}), command)

    def test_longest_pattern(self):
        table = {'Keep': ' a', 'Keep going': ' b'}
        self.assertEqual(apply_suffix_control('Keep going', table),
                         'Keep going b')


class HybridTest(SimpleTestCase):
    def select(self, answer):
        return hybrid_mode_select(ScriptedAdapter([(None, answer)]),
                                  [observation(0)], 'Is there a threat?')

    def test_yes(self):
        self.assertEqual(self.select('Yes, a pedestrian is crossing'),
                         HybridBranch.RISK)
        self.assertEqual(self.select('**YES**'), HybridBranch.RISK)

    def test_no(self):
        self.assertEqual(self.select('No.'), HybridBranch.DEFAULT)

    def test_unclear(self):
        self.assertEqual(self.select('Unclear'), HybridBranch.DEFAULT)
        self.assertEqual(self.select('Yesterday it was fine'),
                         HybridBranch.DEFAULT)

    def test_failed_call(self):
        self.assertEqual(hybrid_mode_select(ScriptedAdapter([]),
                                            [observation(0)], 'threat?'),
                         HybridBranch.DEFAULT)


class DriverTest(SimpleTestCase):
    def test_scripted_cng(self):
        fast = ScriptedAdapter([(None, 'Keep going straight')])
        slow = ScriptedAdapter([(None, 'steer: 0 throttle: 0.5 brake: 0')],
                               name='slow')
        driver = DualSystemDriver(fast, SlowBranch(slow), tasks=ALL_TASKS)
        decision = driver.decide([observation(0), observation(1)])
        self.assertEqual(decision.control, ControlVector(0.0, 0.5, 0.0))
        self.assertEqual(decision.slow_adapter, 'slow')
        self.assertEqual(len(decision.commands.per_task_text), 3)

    def test_hybrid_uses_risk_branch(self):
        fast = ScriptedAdapter([('security threat', 'Yes, a car cuts in'),
                                (None, 'Steer left')])
        default = ScriptedAdapter([(None, 'steer: 0 throttle: 0.5 brake: 0')],
                                  name='default')
        risk = ScriptedAdapter([(None, 'HARD_LEFT')], name='risk')
        driver = DualSystemDriver(fast, SlowBranch(default),
                                  SlowBranch(risk, ParsingMode.DCS),
                                  tasks=ACTION_ONLY)
        decision = driver.decide([observation(0)])
        self.assertEqual(decision.slow_adapter, 'risk')
        self.assertEqual(decision.control, ControlVector(-0.8, 0.2, 0.0))

    def test_no_action_command(self):
        fast = ScriptedAdapter([])
        slow = ScriptedAdapter([(None, 'steer: 0 throttle: 1 brake: 0')])
        decision = DualSystemDriver(fast, SlowBranch(slow),
                                    tasks=ACTION_ONLY).decide([observation(0)])
        self.assertTrue(decision.fallback)
        self.assertEqual(decision.control, fallback_action())

    def test_suffix_reaches_slow_system(self):
        fast = ScriptedAdapter([(None, 'Keep going straight.')])
        slow = RuleFollowingAdapter()
        driver = DualSystemDriver(fast, SlowBranch(slow), tasks=ACTION_ONLY,
                                  suffix_table={'Keep going straight':
                                                ' with speed = 0.5'})
        decision = driver.decide([observation(0)])
        self.assertEqual(decision.command,
                         'Keep going straight with speed = 0.5')
        self.assertEqual(decision.control, ControlVector(0.0, 0.5, 0.0))

    def test_window_is_trimmed(self):
        fast = RuleFollowingAdapter()
        driver = DualSystemDriver(fast, SlowBranch(RuleFollowingAdapter()),
                                  history_length=2)
        history = [observation(index) for index in range(10)]
        decision = driver.decide(history)
        self.assertEqual(decision.command, 'Keep going straight')
        self.assertFalse(decision.fallback)
