import math
import random

from django.test import SimpleTestCase

from core.exceptions import (FrameOrderError,
                             InvalidControl,
                             InvalidState,
                             InvalidTaskSet)
from core.serializers import decode_trace, encode_trace
from core.trace import add_infractions, append_frame, finish
from core.types import (ActorSnapshot,
                        CommandSet,
                        ControlVector,
                        EgoState,
                        EpisodeTrace,
                        FrameRecord,
                        Infraction,
                        InfractionKind,
                        TaskSet,
                        Termination,
                        clamp_control,
                        normalize_angle)


def make_frame(index, control=None, speed=1.0):
    return FrameRecord(
        frame_index=index,
        timestamp=index * 0.1,
        dt=0.1,
        ego=EgoState(x=index * 0.1, y=0.0, heading=0.0, speed=speed),
        route_progress=min(1.0, index / 100),
        control=control or ControlVector(0.0, 0.5, 0.0),
        commands=CommandSet({'action_prediction': 'Keep going straight'}),
    )


class ControlVectorTest(SimpleTestCase):
    def test_in_range_identity(self):
        self.assertEqual(clamp_control((0.3, 0.5, 0.0)).as_tuple(),
                         (0.3, 0.5, 0.0))

    def test_clamps_to_ranges(self):
        self.assertEqual(clamp_control((1.5, 0.5, -0.2)).as_tuple(),
                         (1.0, 0.5, 0.0))

    def test_rejects_non_finite(self):
        self.assertRaises(InvalidControl, clamp_control,
                          (math.nan, 0.2, 0.1))
        self.assertRaises(InvalidControl, clamp_control,
                          (0.0, math.inf, 0.1))

    def test_constructor_rejects_out_of_range(self):
        self.assertRaises(InvalidControl, ControlVector, 0.0, 1.2, 0.0)
        self.assertRaises(InvalidControl, ControlVector, -1.01, 0.0, 0.0)

    def test_clamp_is_idempotent_and_in_range(self):
        rng = random.Random(7)
        for _ in range(10000):
            raw = tuple(rng.uniform(-5.0, 5.0) for _ in range(3))
            once = clamp_control(raw)
            self.assertEqual(clamp_control(once.as_tuple()), once)
            self.assertTrue(-1.0 <= once.steer <= 1.0)
            self.assertTrue(0.0 <= once.throttle <= 1.0)
            self.assertTrue(0.0 <= once.brake <= 1.0)


class EgoStateTest(SimpleTestCase):
    def test_heading_is_normalized(self):
        self.assertAlmostEqual(EgoState(heading=2 * math.pi + 0.5).heading, 0.5)
        self.assertAlmostEqual(EgoState(heading=-math.pi).heading, math.pi)
        self.assertEqual(EgoState(heading=0.25).heading, 0.25)

    def test_negative_speed_rejected(self):
        self.assertRaises(InvalidState, EgoState, 0.0, 0.0, 0.0, -0.1)

    def test_normalize_keeps_range(self):
        rng = random.Random(3)
        for _ in range(1000):
            angle = normalize_angle(rng.uniform(-50.0, 50.0))
            self.assertTrue(-math.pi < angle <= math.pi)
            self.assertEqual(normalize_angle(angle), angle)


class TaskSetTest(SimpleTestCase):
    def test_every_task_needs_a_prompt(self):
        self.assertRaises(InvalidTaskSet, TaskSet,
                          ('action_prediction',), {})

    def test_empty_rejected(self):
        self.assertRaises(InvalidTaskSet, TaskSet, (), {})

    def test_command_set_keys_checked(self):
        tasks = TaskSet(('action_prediction',),
                        {'action_prediction': 'What next?'})
        CommandSet({'action_prediction': 'Stop'}).check_against(tasks)
        self.assertRaises(InvalidTaskSet,
                          CommandSet({'semantic_reasoning': 'x'}).check_against,
                          tasks)


class TraceTest(SimpleTestCase):
    def test_append_to_empty(self):
        trace = append_frame(EpisodeTrace('r0'), make_frame(0))
        self.assertEqual(len(trace.frames), 1)

    def test_append_consecutive(self):
        trace = EpisodeTrace('r0')
        for index in range(5):
            trace = append_frame(trace, make_frame(index))
        trace = append_frame(trace, make_frame(5))
        self.assertEqual(len(trace.frames), 6)

    def test_append_out_of_order(self):
        trace = EpisodeTrace('r0')
        for index in range(5):
            trace = append_frame(trace, make_frame(index))
        self.assertRaises(FrameOrderError, append_frame, trace, make_frame(7))

    def test_infraction_past_last_frame_rejected(self):
        trace = append_frame(EpisodeTrace('r0'), make_frame(0))
        self.assertRaises(InvalidState, add_infractions, trace,
                          [Infraction(InfractionKind.TIMEOUT, 3)])

    def test_round_trip_is_byte_identical(self):
        rng = random.Random(11)
        trace = EpisodeTrace('route-7', scenario_id='route-7-threat')
        for index in range(30):
            control = clamp_control((rng.uniform(-1, 1), rng.random(),
                                     rng.random()))
            record = FrameRecord(
                frame_index=index,
                timestamp=index * 0.1,
                dt=0.1,
                ego=EgoState(rng.uniform(-50, 50), rng.uniform(-50, 50),
                             rng.uniform(-3, 3), rng.uniform(0, 10)),
                route_progress=index / 30,
                control=control,
                commands=CommandSet({'action_prediction': 'Steer left'},
                                    {'semantic_reasoning': 'timeout'}),
                fallback=index % 7 == 0,
                failures=('slow: timeout',) if index % 7 == 0 else (),
                actors=(ActorSnapshot('a0', 'vehicle', rng.random() * 30,
                                      0.1, 12.5, -0.5, 6.0, True),),
            )
            trace = append_frame(trace, record)
        trace = add_infractions(trace, [
            Infraction(InfractionKind.COLLISION_VEHICLE, 12, 'a0')])
        trace = finish(trace, Termination.FINISHED, 1.0)

        encoded = encode_trace(trace)
        decoded = decode_trace(encoded)
        self.assertEqual(decoded, trace)
        self.assertEqual(encode_trace(decoded), encoded)
