import math
import random
import re
from dataclasses import replace

from django.conf import settings
from django.test import SimpleTestCase

from core.types import ControlVector, EgoState, InfractionKind, SceneMode
from scengen.scenario import ScenarioSpec, load_suite
from sim.conf import SimConfig
from sim.dynamics import bicycle_step
from sim.exceptions import InvalidActor, InvalidRoute, SimException
from sim.render import render_observation
from sim.routes import (ActorSpec,
                        RouteSpec,
                        ScenarioTrigger,
                        Skill,
                        load_route_library)
from sim.world import load_route, route_progress, step

ZERO = ControlVector(0.0, 0.0, 0.0)
STRAIGHT = RouteSpec('straight', ((0.0, 0.0), (100.0, 0.0)))


def scenario_with(*actors, route=STRAIGHT):
    return ScenarioSpec(f'{route.route_id}-threat', route.route_id, actors)


def place_ego(world, x, y=0.0, heading=0.0, speed=0.0):
    return replace(world, ego=EgoState(x, y, heading, speed))


def corners(x, y, heading, length, width):
    c, s = math.cos(heading), math.sin(heading)
    result = []
    for fl, fw in ((1, 1), (1, -1), (-1, -1), (-1, 1)):
        result.append((x + fl * length / 2 * c - fw * width / 2 * s,
                       y + fl * length / 2 * s + fw * width / 2 * c))
    return result


def inside(point, x, y, heading, length, width):
    dx, dy = point[0] - x, point[1] - y
    along = dx * math.cos(heading) + dy * math.sin(heading)
    across = -dx * math.sin(heading) + dy * math.cos(heading)
    return abs(along) <= length / 2 and abs(across) <= width / 2


def segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 > 0) != (d2 > 0) and (d3 > 0) != (d4 > 0)


def boxes_overlap_oracle(a, b):
    """
    Brute force: a corner of one box inside the other, or crossing edges.
    """
    ca, cb = corners(*a), corners(*b)
    if any(inside(point, *b) for point in ca):
        return True
    if any(inside(point, *a) for point in cb):
        return True
    for i in range(4):
        for j in range(4):
            if segments_cross(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]):
                return True
    return False


class RouteTest(SimpleTestCase):
    def test_single_waypoint_rejected(self):
        self.assertRaises(InvalidRoute, RouteSpec, 'r', ((0.0, 0.0),))

    def test_repeated_waypoint_rejected(self):
        self.assertRaises(InvalidRoute, RouteSpec, 'r',
                          ((0.0, 0.0), (0.0, 0.0), (5.0, 0.0)))

    def test_actor_bounds(self):
        self.assertRaises(InvalidActor, ActorSpec, 'a', 'vehicle',
                          'cut_in', progress=1.5)
        self.assertRaises(InvalidActor, ActorSpec, 'a', 'vehicle',
                          'cut_in', progress=0.5, speed=-1.0)
        self.assertRaises(InvalidActor, ActorSpec, 'a', 'vehicle',
                          'cut_in', progress=0.5, trigger_distance=0.0)
        self.assertRaises(InvalidActor, ActorSpec, 'a', 'static_obstacle',
                          'crossing', progress=0.5)

    def test_bundled_library_covers_all_skills(self):
        routes = load_route_library()
        self.assertGreaterEqual(len(routes), 5)
        tags = {tag for route in routes for tag in route.skill_tags}
        self.assertEqual(tags, set(Skill.values))
        self.assertEqual([route.route_id for route in routes],
                         sorted(route.route_id for route in routes))


class LoadRouteTest(SimpleTestCase):
    def test_ego_on_first_waypoint(self):
        world = load_route(STRAIGHT, None, seed=0)
        self.assertEqual((world.ego.x, world.ego.y), (0.0, 0.0))
        self.assertEqual(world.ego.heading, 0.0)
        self.assertEqual(route_progress(world), 0.0)

    def test_heading_toward_second_waypoint(self):
        route = RouteSpec('diag', ((0.0, 0.0), (10.0, 10.0)))
        world = load_route(route, None, seed=0)
        self.assertAlmostEqual(world.ego.heading, math.pi / 4)

    def test_cut_in_actor_armed_not_spawned(self):
        actor = ActorSpec('a0', 'vehicle', 'cut_in', progress=0.5, offset=3.5,
                          speed=6.0, trigger_distance=15.0)
        world = load_route(STRAIGHT, scenario_with(actor), seed=0)
        self.assertEqual(len(world.actors), 1)
        self.assertFalse(world.actors[0].spawned)
        world, _, observation = step(world, ZERO)
        self.assertFalse(world.actors[0].spawned)
        self.assertEqual(observation.actors, ())

    def test_route_trigger_holds_actors_until_passed(self):
        route = replace(STRAIGHT, scenario_triggers=(
            ScenarioTrigger(0.5, 'straight-threat'),))
        actor = ActorSpec('a0', 'vehicle', 'stationary', progress=0.8,
                          trigger_distance=100.0)
        world = load_route(route, scenario_with(actor, route=route), seed=0)
        for x in (0.0, 20.0, 49.0):
            world, _, observation = step(place_ego(world, x), ZERO)
            self.assertFalse(world.actors[0].spawned, x)
            self.assertEqual(observation.actors, ())
        world, _, observation = step(place_ego(world, 50.5), ZERO)
        self.assertTrue(world.actors[0].spawned)
        self.assertEqual([actor.actor_id for actor in observation.actors],
                         ['a0'])

    def test_trigger_for_another_scenario_is_ignored(self):
        route = replace(STRAIGHT, scenario_triggers=(
            ScenarioTrigger(0.9, 'elsewhere'),))
        actor = ActorSpec('a0', 'vehicle', 'stationary', progress=0.8,
                          trigger_distance=100.0)
        world = load_route(route, scenario_with(actor, route=route), seed=0)
        world, _, _ = step(world, ZERO)
        self.assertTrue(world.actors[0].spawned)

    def test_bundled_triggers_fire_before_actors_arm(self):
        scenarios = {scenario.base_route_id: scenario for scenario in
                     load_suite(settings.DRIVEBENCH['SCENARIO_SUITE'])}
        for route in load_route_library():
            world = load_route(route, scenarios[route.route_id], seed=0)
            for trigger in route.scenario_triggers:
                for actor in world.actors:
                    if actor.spawned:
                        continue
                    arming = (actor.station - actor.spec.trigger_distance) \
                        / world.geometry.length
                    self.assertLessEqual(trigger.trigger_progress,
                                         max(arming, 0.0) + 1e-9,
                                         (route.route_id, actor.actor_id))

    def test_scenario_for_other_route_rejected(self):
        actor = ActorSpec('a0', 'vehicle', 'stationary', progress=0.5)
        scenario = ScenarioSpec('x', 'other-route', (actor,))
        self.assertRaises(SimException, load_route, STRAIGHT, scenario, 0)


class BicycleTest(SimpleTestCase):
    def setUp(self):
        self.config = SimConfig.from_settings()

    def test_straight_throttle(self):
        ego = EgoState(0.0, 0.0, 0.3, 2.0)
        after = bicycle_step(ego, ControlVector(0.0, 0.6, 0.0), 0.1,
                             self.config)
        self.assertEqual(after.heading, ego.heading)
        self.assertGreater(after.speed, ego.speed)
        self.assertAlmostEqual(math.atan2(after.y - ego.y, after.x - ego.x),
                               ego.heading)

    def test_rest_stays_at_rest(self):
        ego = EgoState(3.0, -2.0, 1.0, 0.0)
        after = bicycle_step(ego, ControlVector(0.0, 0.0, 1.0), 0.1,
                             self.config)
        self.assertEqual(after, ego)

    def test_mirror_symmetry(self):
        ego = EgoState(0.0, 0.0, 0.4, 5.0)
        left = bicycle_step(ego, ControlVector(-0.5, 0.3, 0.0), 0.1,
                            self.config)
        right = bicycle_step(ego, ControlVector(0.5, 0.3, 0.0), 0.1,
                             self.config)
        self.assertAlmostEqual(left.heading - ego.heading,
                               -(right.heading - ego.heading))
        self.assertEqual(left.speed, right.speed)

    def test_positive_steer_turns_right(self):
        world = load_route(STRAIGHT, None, seed=0)
        world = place_ego(world, 10.0, speed=5.0)
        for _ in range(10):
            world, _, _ = step(world, ControlVector(0.5, 0.3, 0.0))
        self.assertGreater(world.ego_lateral, 0.0)

    def test_rejects_non_positive_dt(self):
        self.assertRaises(SimException, bicycle_step, EgoState(), ZERO, 0.0,
                          self.config)

    def test_zero_controls_come_to_rest(self):
        ego = EgoState(0.0, 0.0, 0.0, 10.0)
        for _ in range(2000):
            ego = bicycle_step(ego, ZERO, 0.1, self.config)
        self.assertEqual(ego.speed, 0.0)
        after = bicycle_step(ego, ZERO, 0.1, self.config)
        self.assertEqual((after.x, after.y), (ego.x, ego.y))


class StepTest(SimpleTestCase):
    def setUp(self):
        self.config = SimConfig.from_settings(actor_speed_jitter=0.0)

    def test_in_lane_no_actors(self):
        world = load_route(STRAIGHT, None, seed=0, config=self.config)
        for _ in range(30):
            world, infractions, _ = step(world, ControlVector(0.0, 0.5, 0.0))
            self.assertEqual(infractions, [])

    def test_boundary_crossing(self):
        world = load_route(STRAIGHT, None, seed=0, config=self.config)
        world = place_ego(world, 20.0, y=2.0)
        world, infractions, _ = step(world, ZERO)
        self.assertEqual([i.kind for i in infractions],
                         [InfractionKind.BOUNDARY_CROSSING])
        world, infractions, _ = step(world, ZERO)
        self.assertEqual(infractions, [])

    def test_route_deviation_beyond_margin(self):
        world = load_route(STRAIGHT, None, seed=0, config=self.config)
        world = place_ego(world, 20.0, y=-6.0)
        world, infractions, _ = step(world, ZERO)
        self.assertEqual({i.kind for i in infractions},
                         {InfractionKind.BOUNDARY_CROSSING,
                          InfractionKind.ROUTE_DEVIATION})

    def test_collision_with_vehicle(self):
        actor = ActorSpec('a0', 'vehicle', 'stationary', progress=0.1,
                          trigger_distance=50.0)
        world = load_route(STRAIGHT, scenario_with(actor), seed=0,
                           config=self.config)
        world = place_ego(world, 8.0)
        world, infractions, _ = step(world, ZERO)
        ego_box = (world.ego.x, world.ego.y, world.ego.heading, 4.5, 2.0)
        actor_box = (10.0, 0.0, 0.0, 4.5, 2.0)
        self.assertTrue(boxes_overlap_oracle(ego_box, actor_box))
        self.assertEqual([i.kind for i in infractions],
                         [InfractionKind.COLLISION_VEHICLE])
        world, infractions, _ = step(world, ZERO)
        self.assertEqual(infractions, [])

    def test_collision_matches_oracle_on_random_scenes(self):
        rng = random.Random(5)
        kinds = {'vehicle': (4.5, 2.0), 'pedestrian': (0.6, 0.6),
                 'static_obstacle': (1.5, 1.5)}
        collisions = {'vehicle': InfractionKind.COLLISION_VEHICLE,
                      'pedestrian': InfractionKind.COLLISION_PEDESTRIAN,
                      'static_obstacle': InfractionKind.COLLISION_STATIC}
        hits = 0
        for index in range(300):
            kind = rng.choice(sorted(kinds))
            progress = rng.uniform(0.2, 0.3)
            offset = rng.uniform(-3.0, 3.0)
            actor = ActorSpec('a0', kind, 'stationary', progress=progress,
                              offset=offset, trigger_distance=100.0)
            world = load_route(STRAIGHT, scenario_with(actor), seed=index,
                               config=self.config)
            ego_x = rng.uniform(15.0, 35.0)
            ego_y = rng.uniform(-3.0, 3.0)
            heading = rng.uniform(-0.8, 0.8)
            world = place_ego(world, ego_x, ego_y, heading)
            world, infractions, _ = step(world, ZERO)
            length, width = kinds[kind]
            expected = boxes_overlap_oracle(
                (world.ego.x, world.ego.y, world.ego.heading, 4.5, 2.0),
                (progress * 100.0, offset, 0.0, length, width))
            found = collisions[kind] in [i.kind for i in infractions]
            self.assertEqual(found, expected, f'scene {index}')
            hits += expected
        self.assertGreater(hits, 10)

    def test_red_light(self):
        light = ActorSpec('tl', 'traffic_light', 'stationary', progress=0.2,
                          params={'green': 1.0, 'red': 100.0, 'phase': 1.0})
        world = load_route(STRAIGHT, scenario_with(light), seed=0,
                           config=self.config)
        world = place_ego(world, 15.0, speed=8.0)
        kinds = []
        for _ in range(15):
            world, infractions, _ = step(world, ControlVector(0.0, 0.5, 0.0))
            kinds.extend(i.kind for i in infractions)
        self.assertEqual(kinds, [InfractionKind.RED_LIGHT])

    def test_green_light_passes(self):
        light = ActorSpec('tl', 'traffic_light', 'stationary', progress=0.2,
                          params={'green': 100.0, 'red': 1.0})
        world = load_route(STRAIGHT, scenario_with(light), seed=0,
                           config=self.config)
        world = place_ego(world, 15.0, speed=8.0)
        for _ in range(15):
            world, infractions, _ = step(world, ControlVector(0.0, 0.5, 0.0))
            self.assertEqual(infractions, [])

    def test_sudden_brake_actor_stops(self):
        actor = ActorSpec('a0', 'vehicle', 'sudden_brake', progress=0.3,
                          speed=6.0, trigger_distance=100.0,
                          params={'brake_after': 0.5, 'decel': 6.0})
        world = load_route(STRAIGHT, scenario_with(actor), seed=0,
                           config=self.config)
        for _ in range(40):
            world, _, _ = step(world, ZERO)
        self.assertEqual(world.actors[0].speed, 0.0)
        station = world.actors[0].station
        world, _, _ = step(world, ZERO)
        self.assertEqual(world.actors[0].station, station)

    def test_cut_in_reaches_lane_center(self):
        actor = ActorSpec('a0', 'vehicle', 'cut_in', progress=0.3, offset=3.5,
                          speed=5.0, trigger_distance=100.0,
                          params={'lateral_speed': 1.0})
        world = load_route(STRAIGHT, scenario_with(actor), seed=0,
                           config=self.config)
        for _ in range(50):
            world, _, _ = step(world, ZERO)
        self.assertEqual(world.actors[0].lateral, 0.0)


class ProgressTest(SimpleTestCase):
    def test_first_waypoint(self):
        world = load_route(STRAIGHT, None, seed=0)
        world, _, _ = step(world, ZERO)
        self.assertEqual(route_progress(world), 0.0)

    def test_last_waypoint(self):
        world = place_ego(load_route(STRAIGHT, None, seed=0), 100.0)
        world, _, _ = step(world, ZERO)
        self.assertEqual(route_progress(world), 1.0)

    def test_midpoint(self):
        world = place_ego(load_route(STRAIGHT, None, seed=0), 50.0)
        world, _, _ = step(world, ZERO)
        self.assertEqual(route_progress(world), 0.5)

    def test_arc_length_on_bent_route(self):
        route = RouteSpec('bent', ((0.0, 0.0), (30.0, 0.0), (30.0, 40.0)))
        world = place_ego(load_route(route, None, seed=0), 30.0, 5.0,
                          math.pi / 2)
        world, _, _ = step(world, ZERO)
        self.assertAlmostEqual(route_progress(world), 35.0 / 70.0)

    def test_monotonic(self):
        world = place_ego(load_route(STRAIGHT, None, seed=0), 50.0)
        world, _, _ = step(world, ZERO)
        world = place_ego(world, 20.0)
        world, _, _ = step(world, ZERO)
        self.assertEqual(route_progress(world), 0.5)


class RenderTest(SimpleTestCase):
    def setUp(self):
        self.config = SimConfig.from_settings(actor_speed_jitter=0.0)

    def test_empty_scene_text(self):
        world = load_route(STRAIGHT, None, seed=0, config=self.config)
        observation = render_observation(world, SceneMode.TEXT)
        self.assertIn('speed=0.00 m/s', observation.scene.text)
        self.assertIn('no actors', observation.scene.text)

    def test_render_is_deterministic(self):
        world = load_route(STRAIGHT, None, seed=0, config=self.config)
        world, _, _ = step(world, ControlVector(0.1, 0.5, 0.0))
        for mode in (SceneMode.TEXT, SceneMode.RASTER):
            self.assertEqual(render_observation(world, mode),
                             render_observation(world, mode))

    def test_actor_range(self):
        actor = ActorSpec('a0', 'vehicle', 'stationary', progress=0.1,
                          trigger_distance=50.0)
        world = load_route(STRAIGHT, scenario_with(actor), seed=0,
                           config=self.config)
        world, _, observation = step(world, ZERO)
        match = re.search(r'actor a0 kind=vehicle range=([0-9.]+) m',
                          observation.scene.text)
        self.assertIsNotNone(match)
        self.assertAlmostEqual(float(match.group(1)), 10.0, delta=0.05)

    def test_raster_dimensions(self):
        world = load_route(STRAIGHT, None, seed=0, config=self.config)
        observation = render_observation(world, SceneMode.RASTER)
        size = self.config.raster_size
        self.assertEqual(len(observation.scene.image), size * size)
        self.assertEqual(observation.scene.encoding, f'gray8;{size}x{size}')
        self.assertIn('no actors', observation.caption)


class DeterminismTest(SimpleTestCase):
    def run_episode(self, seed):
        actor = ActorSpec('a0', 'vehicle', 'cut_in', progress=0.4, offset=3.5,
                          speed=5.0, trigger_distance=20.0)
        world = load_route(STRAIGHT, scenario_with(actor), seed=seed)
        rng = random.Random(99)
        observations = []
        for _ in range(80):
            control = ControlVector(rng.uniform(-0.05, 0.05), rng.random(),
                                    0.0)
            world, infractions, observation = step(world, control)
            observations.append((observation, tuple(infractions)))
        return observations

    def test_same_seed_same_sequence(self):
        self.assertEqual(self.run_episode(3), self.run_episode(3))

    def test_seed_changes_actor_speed(self):
        first = load_route(STRAIGHT, scenario_with(
            ActorSpec('a0', 'vehicle', 'constant_velocity', progress=0.5,
                      speed=5.0)), seed=1)
        second = load_route(STRAIGHT, scenario_with(
            ActorSpec('a0', 'vehicle', 'constant_velocity', progress=0.5,
                      speed=5.0)), seed=2)
        self.assertNotEqual(first.actors[0].speed, second.actors[0].speed)
