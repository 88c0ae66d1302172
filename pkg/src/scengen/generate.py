"""
Self-reflective scenario generation. The fast system analyses a scene of
each base route in three stages (perception, prediction, planning), the slow
system fuses the three answers into a threat scenario written in the DSL,
and the result is compiled and checked against the route. Parse failures are
fed back to the slow system up to the repair budget.
"""
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from django.conf import settings

from adapters.base import Adapter, Modality, ModelRequest, call_with_deadline
from core.types import Observation, SceneMode
from dualsys.fast import render_history
from scengen.dsl import parse_dsl
from scengen.exceptions import (DslSyntaxError,
                                DslValidationError,
                                FusionFailed,
                                InvalidScenarioSpec)
from scengen.scenario import ScenarioSpec, scenario_to_dict
from sim.exceptions import SimException
from sim.render import render_observation
from sim.routes import RouteSpec
from sim.world import load_route

logger = logging.getLogger(__name__)

STAGES = ('perception', 'prediction', 'planning')


@dataclass(frozen=True)
class P3Prompts:
    perception: str
    prediction: str
    planning: str
    fusion: str
    repair: str

    def stage(self, name: str) -> str:
        return getattr(self, name)


def load_p3_prompts(directory: Union[str, Path] = None) -> P3Prompts:
    directory = Path(directory or settings.DRIVEBENCH['SCENGEN_PROMPT_DIR'])
    try:
        with open(directory / 'p3.json', encoding='utf-8') as handle:
            return P3Prompts(**json.load(handle))
    except (OSError, ValueError, TypeError) as exc:
        raise InvalidScenarioSpec(f'cannot load P3 prompts from '
                                  f'{directory}: {exc}') from exc


def load_grammar(path: Union[str, Path] = None) -> str:
    with open(path or settings.DRIVEBENCH['DSL_GRAMMAR'],
              encoding='utf-8') as handle:
        return handle.read()


@dataclass(frozen=True)
class P3Answers:
    perception: str = ''
    prediction: str = ''
    planning: str = ''
    failures: Dict[str, str] = field(default_factory=dict)

    @property
    def degraded(self) -> bool:
        return not all(getattr(self, stage) for stage in STAGES)


def elicit_p3(fast_adapter: Adapter,
              history: Sequence[Observation],
              prompts: P3Prompts = None,
              deadline: float = None) -> P3Answers:
    if not history:
        raise InvalidScenarioSpec('P3 elicitation needs at least one frame')
    prompts = prompts or load_p3_prompts()
    if deadline is None:
        deadline = settings.DRIVEBENCH['FAST_DEADLINE_S']
    frames, images = render_history(history, fast_adapter.modality)
    answers = {}
    failures = {}
    for stage in STAGES:
        request = ModelRequest(
            prompt=(f'{prompts.stage(stage)}\n\n'
                    f'Observations, oldest first:\n{frames}\n'),
            images=images)
        response = call_with_deadline(fast_adapter, request, deadline)
        answers[stage] = response.text.strip() if response.ok else ''
        if not answers[stage]:
            failures[stage] = response.detail or str(response.status)
            logger.warning('%s: %s stage failed: %s', fast_adapter.name,
                           stage, failures[stage])
    return P3Answers(failures=failures, **answers)


def fusion_prompt(answers: P3Answers, prompts: P3Prompts, grammar: str,
                  error: Optional[str] = None) -> str:
    prompt = prompts.fusion.format(perception=answers.perception,
                                   prediction=answers.prediction,
                                   planning=answers.planning,
                                   grammar=grammar)
    if error:
        prompt += prompts.repair.format(error=error)
    return prompt


def fuse(answers: P3Answers, slow_adapter: Adapter,
         prompts: P3Prompts = None, grammar: str = None,
         error: str = None, deadline: float = None) -> str:
    """
    Raw slow-system answer to the fusion prompt. `error` is the rejection
    reason of a previous attempt, appended as a repair request.
    """
    prompts = prompts or load_p3_prompts()
    grammar = grammar if grammar is not None else load_grammar()
    if deadline is None:
        deadline = settings.DRIVEBENCH['SLOW_DEADLINE_S']
    request = ModelRequest(prompt=fusion_prompt(answers, prompts, grammar,
                                                error))
    response = call_with_deadline(slow_adapter, request, deadline)
    if not response.ok:
        raise FusionFailed(f'{slow_adapter.name}: {response.status}'
                           f'{": " + response.detail if response.detail else ""}')
    return response.text


@dataclass(frozen=True)
class SkipEntry:
    route_id: str
    reason: str
    attempts: int


@dataclass
class GenerationResult:
    scenarios: List[ScenarioSpec] = field(default_factory=list)
    skipped: List[SkipEntry] = field(default_factory=list)
    repairs: Dict[str, int] = field(default_factory=dict)


def scene_history(route: RouteSpec, modality: str,
                  seed: int = 0) -> List[Observation]:
    mode = SceneMode.RASTER if modality == Modality.VISION else SceneMode.TEXT
    return [render_observation(load_route(route, seed=seed, mode=mode))]


def generate_scenario(route: RouteSpec, fast_adapter: Adapter,
                      slow_adapter: Adapter, prompts: P3Prompts,
                      grammar: str, repair_budget: int,
                      seed: int = 0) -> Tuple[Optional[ScenarioSpec], int, str]:
    """
    (scenario or None, repairs used, last rejection reason) for one route.
    """
    answers = elicit_p3(fast_adapter, scene_history(route, fast_adapter.modality,
                                                    seed), prompts)
    scenario_id = f'{route.route_id}-threat'
    error = None
    for attempt in range(repair_budget + 1):
        try:
            text = fuse(answers, slow_adapter, prompts, grammar, error)
        except FusionFailed as exc:
            return None, attempt, str(exc)
        try:
            scenario = parse_dsl(text, route.route_id, scenario_id)
            load_route(route, scenario, seed=seed)
        except (DslSyntaxError, DslValidationError, SimException,
                InvalidScenarioSpec) as exc:
            error = str(exc)
            logger.warning('%s: fusion attempt %d rejected: %s',
                           route.route_id, attempt + 1, error)
            continue
        return scenario, attempt, ''
    return None, repair_budget, error


def generate_suite(routes: Sequence[RouteSpec], fast_adapter: Adapter,
                   slow_adapter: Adapter, prompts: P3Prompts = None,
                   grammar: str = None, repair_budget: int = None,
                   parallelism: int = None, seed: int = 0) -> GenerationResult:
    """
    One threat scenario attempted per route, results in route order. Routes
    whose fusion fails or never compiles within the repair budget land in
    the skip log.
    """
    if not routes:
        raise InvalidScenarioSpec('no routes to generate scenarios for')
    prompts = prompts or load_p3_prompts()
    grammar = grammar if grammar is not None else load_grammar()
    if repair_budget is None:
        repair_budget = settings.DRIVEBENCH['REPAIR_BUDGET']
    parallelism = parallelism or settings.DRIVEBENCH['PARALLELISM']

    def attempt(route):
        return generate_scenario(route, fast_adapter, slow_adapter, prompts,
                                 grammar, repair_budget, seed)

    with ThreadPoolExecutor(max_workers=parallelism,
                            thread_name_prefix='scengen') as executor:
        outcomes = list(executor.map(attempt, routes))

    result = GenerationResult()
    for route, (scenario, repairs, reason) in zip(routes, outcomes):
        if scenario is None:
            logger.warning('%s: skipped after %d attempt(s): %s',
                           route.route_id, repairs + 1, reason)
            result.skipped.append(SkipEntry(route.route_id, reason, repairs + 1))
            continue
        result.scenarios.append(scenario)
        result.repairs[route.route_id] = repairs
    logger.info('generated %d scenario(s) for %d route(s), %d skipped',
                len(result.scenarios), len(routes), len(result.skipped))
    return result


def persist_suite(scenarios: Sequence[ScenarioSpec],
                  directory: Union[str, Path],
                  skipped: Sequence[SkipEntry] = ()) -> Path:
    """
    One JSON file per scenario plus manifest.json mapping route_id to
    scenario_id. Skipped routes are listed in the manifest for reference.
    """
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    manifest = {'scenarios': {}, 'skipped': {}}
    for scenario in scenarios:
        with open(directory / f'{scenario.scenario_id}.json', 'w',
                  encoding='utf-8') as handle:
            json.dump(scenario_to_dict(scenario), handle, indent=2,
                      sort_keys=True)
        manifest['scenarios'][scenario.base_route_id] = scenario.scenario_id
    for entry in skipped:
        manifest['skipped'][entry.route_id] = entry.reason
    with open(directory / 'manifest.json', 'w', encoding='utf-8') as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
    return directory
