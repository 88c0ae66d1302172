"""
The closed loop and the campaigns built from it.

An episode renders an observation, lets the dual-system driver decide, and
steps the simulator with the resulting control until the route is finished,
a fatal infraction ends it, the ego stops making progress or the frame
budget runs out. A campaign runs every route (with its threat scenario when
a suite is configured) `repetitions` times with seeds seed + rep, persists
every trace and aggregates the metrics over the repetitions.
"""
import json
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from adapters.exceptions import AdapterException
from adapters.factory import build_adapter
from campaign.conf import (RunConfig,
                           run_config_from_dict,
                           run_config_to_dict,
                           validate)
from campaign.exceptions import CampaignException, ConfigError, EpisodeAborted
from campaign.models import Campaign, Episode
from core.exceptions import CoreException
from core.serializers import read_trace, write_trace
from core.trace import add_infractions, append_frame, finish
from core.types import (EpisodeTrace,
                        FrameRecord,
                        Infraction,
                        InfractionKind,
                        Termination)
from dualsys.driver import DualSystemDriver, SlowBranch
from dualsys.exceptions import DualSystemException
from dualsys.prompts import load_prompt_library, load_suffix_table
from metrics.aggregate import (Aggregate,
                               aggregate,
                               aggregate_to_dict,
                               summarize_run)
from metrics.report import render_report
from metrics.scoring import evaluate
from scengen.exceptions import ScenarioException
from scengen.scenario import ScenarioSpec, load_suite
from sim.conf import SimConfig
from sim.exceptions import SimException
from sim.render import render_observation
from sim.routes import RouteSpec, load_route_library
from sim.world import is_fatal, load_route, step

logger = logging.getLogger(__name__)

EPISODE_ERRORS = (CampaignException, SimException, CoreException,
                  DualSystemException, AdapterException, ScenarioException)


def build_driver(config: RunConfig) -> DualSystemDriver:
    """
    A fresh driver per episode, so scripted and recorded adapters start
    from the top of their scripts.
    """
    library = load_prompt_library(config.prompt_dir)
    suffix_table = load_suffix_table(config.suffix_table) \
        if config.suffix_table else {}
    risk = None
    if config.hybrid:
        risk = SlowBranch(build_adapter(config.risk or config.slow),
                          config.risk_parsing_mode)
    return DualSystemDriver(build_adapter(config.fast),
                            SlowBranch(build_adapter(config.slow),
                                       config.parsing_mode),
                            risk=risk,
                            library=library,
                            suffix_table=suffix_table,
                            history_length=config.history_length,
                            fast_deadline=config.fast_deadline,
                            slow_deadline=config.slow_deadline)


def run_episode(config: RunConfig, route: RouteSpec,
                scenario: Optional[ScenarioSpec] = None, seed: int = 0,
                driver: DualSystemDriver = None,
                sim_config: SimConfig = None) -> EpisodeTrace:
    """
    Runs one closed-loop episode. Adapter failures only ever turn into
    fallback controls; a simulator error aborts the episode with
    EpisodeAborted.
    """
    driver = driver or build_driver(config)
    sim_config = sim_config or SimConfig.from_settings()
    try:
        world = load_route(route, scenario, seed=seed,
                           mode=config.render_mode, config=sim_config)
    except SimException as exc:
        raise EpisodeAborted(f'{route.route_id}: cannot load: {exc}') from exc
    observation = render_observation(world)
    trace = EpisodeTrace(route_id=route.route_id,
                         scenario_id=scenario.scenario_id if scenario else None)
    history = []
    best_progress, stalled = world.progress, 0
    terminated_by = Termination.TIMEOUT

    for frame_index in range(config.max_frames):
        history = driver.window(history + [observation])
        decision = driver.decide(history)
        before, actors = world, observation.actors
        try:
            world, infractions, observation = step(world, decision.control)
        except SimException as exc:
            raise EpisodeAborted(f'{route.route_id} frame {frame_index}: '
                                 f'{exc}') from exc
        # progress is recorded once the frame's control has been applied
        trace = append_frame(trace, FrameRecord(
            frame_index=frame_index,
            timestamp=before.time,
            dt=sim_config.dt,
            ego=before.ego,
            route_progress=world.progress,
            control=decision.control,
            commands=decision.commands,
            fallback=decision.fallback,
            failures=decision.failures,
            actors=actors,
            slow_adapter=decision.slow_adapter,
        ))
        trace = add_infractions(trace, infractions)

        if any(is_fatal(infraction, sim_config) for infraction in infractions):
            terminated_by = Termination.INFRACTION_FATAL
            break
        if world.progress >= 1.0:
            terminated_by = Termination.FINISHED
            break
        if world.progress > best_progress:
            best_progress, stalled = world.progress, 0
        else:
            stalled += 1
            if stalled >= config.blocked_frames:
                terminated_by = Termination.BLOCKED
                break
    else:
        trace = add_infractions(trace, [Infraction(
            InfractionKind.TIMEOUT, trace.last_frame_index,
            f'{config.max_frames} frame budget spent')])

    trace = finish(trace, terminated_by, world.progress)
    logger.info('%s/%s seed %d: %s after %d frame(s), progress %.3f',
                route.route_id, trace.scenario_id or 'clean', seed,
                terminated_by, len(trace.frames), world.progress)
    return trace


def campaign_inputs(config: RunConfig) -> Tuple[List[RouteSpec],
                                                Dict[str, ScenarioSpec]]:
    """
    The configured routes, in route_id order, and the suite scenarios keyed
    by the route they are built for.
    """
    try:
        routes = load_route_library(config.routes)
        scenarios = load_suite(config.scenario_suite) \
            if config.scenario_suite else []
    except (SimException, ScenarioException, OSError, ValueError,
            KeyError) as exc:
        raise ConfigError(f'cannot load campaign inputs: {exc}') from exc
    if config.route_ids:
        known = {route.route_id for route in routes}
        missing = sorted(set(config.route_ids) - known)
        if missing:
            raise ConfigError(f'unknown route ids {missing}')
        routes = [route for route in routes
                  if route.route_id in config.route_ids]
    if not routes:
        raise ConfigError('no routes to run')
    by_route = {}
    route_ids = {route.route_id for route in routes}
    for scenario in scenarios:
        if scenario.base_route_id in route_ids:
            by_route[scenario.base_route_id] = scenario
        else:
            logger.debug('scenario %s: route %s not in this campaign',
                         scenario.scenario_id, scenario.base_route_id)
    return routes, by_route


@lru_cache(maxsize=16)
def _cached_inputs(document: str) -> Tuple[Dict[str, RouteSpec],
                                           Dict[str, ScenarioSpec]]:
    routes, scenarios = campaign_inputs(run_config_from_dict(
        json.loads(document)))
    return {route.route_id: route for route in routes}, scenarios


def episode_inputs(campaign: Campaign) -> Tuple[Dict[str, RouteSpec],
                                                Dict[str, ScenarioSpec]]:
    """
    Routes by id and scenarios by route for a campaign, parsed once per
    config document and process.
    """
    return _cached_inputs(json.dumps(campaign.config, sort_keys=True))


def execute_episode(episode: Episode) -> Episode:
    """
    Runs a pending episode, writes its trace under the campaign output
    directory and records the outcome on the row. Any failure is recorded
    on the row; nothing escapes to the dispatcher.
    """
    campaign = episode.campaign
    try:
        config = campaign.run_config
        routes, scenarios = episode_inputs(campaign)
        route = routes.get(episode.route_id)
        if route is None:
            episode.mark_failed(f'route {episode.route_id} not in the '
                                f'campaign')
            return episode
        scenario = scenarios.get(route.route_id) \
            if episode.scenario_id else None
        trace = run_episode(config, route, scenario, seed=episode.seed)
        relative = Path('traces') / episode.trace_name
        write_trace(Path(campaign.output_dir) / relative, trace)
        report = evaluate(trace, route)
    except EPISODE_ERRORS as exc:
        logger.warning('episode %s failed: %s', episode.trace_name, exc)
        episode.mark_failed(str(exc))
        return episode
    except Exception as exc:
        logger.exception('episode %s crashed', episode.trace_name)
        episode.mark_failed(f'{type(exc).__name__}: {exc}')
        return episode
    episode.mark_done(str(relative), trace.terminated_by, len(trace.frames),
                      report.driving_score, report.success)
    return episode


@dataclass(frozen=True)
class CampaignResult:
    campaign: Campaign
    aggregate: Aggregate
    done: int
    failed: int
    output_dir: Path

    @property
    def has_failures(self) -> bool:
        return self.failed > 0


def plan_episodes(campaign: Campaign, config: RunConfig,
                  routes: List[RouteSpec],
                  scenarios: Dict[str, ScenarioSpec]) -> List[Episode]:
    episodes = []
    for repetition in range(config.repetitions):
        for route in routes:
            scenario = scenarios.get(route.route_id)
            episodes.append(Episode.objects.create(
                campaign=campaign,
                route_id=route.route_id,
                scenario_id=scenario.scenario_id if scenario else None,
                repetition=repetition,
                seed=config.seed + repetition))
    return episodes


def aggregate_campaign(campaign: Campaign) -> Aggregate:
    """
    Re-reads every finished episode's trace from disk, so the aggregate
    counts exactly the traces the output directory holds.
    """
    routes = episode_inputs(campaign)[0]
    per_repetition: Dict[int, list] = {}
    for episode in Episode.objects.done(campaign=campaign).order_by(
            'repetition', 'route_id'):
        trace = read_trace(Path(campaign.output_dir) / episode.trace_path)
        per_repetition.setdefault(episode.repetition, []).append(
            (episode.route_id, evaluate(trace, routes[episode.route_id])))
    if not per_repetition:
        raise CampaignException(f'campaign {campaign.pk}: no episode finished')
    summaries = [summarize_run(per_repetition[repetition])
                 for repetition in sorted(per_repetition)]
    result = aggregate(summaries, label=campaign.label)
    return replace(result, extra={
        'episodes': sum(len(items) for items in per_repetition.values()),
        'failed': Episode.objects.failed(campaign=campaign).count(),
    })


def _write_json(path: Path, document) -> None:
    path.write_text(json.dumps(document, indent=2, sort_keys=True,
                               ensure_ascii=False) + '\n', encoding='utf-8')


def write_artifacts(campaign: Campaign, result: Aggregate) -> None:
    """
    aggregate.json, report.txt and manifest.json next to the traces.
    """
    output = Path(campaign.output_dir)
    _write_json(output / 'aggregate.json', aggregate_to_dict(result))
    (output / 'report.txt').write_text(render_report(result),
                                       encoding='utf-8')
    episodes = [{
        'route_id': episode.route_id,
        'scenario_id': episode.scenario_id,
        'repetition': episode.repetition,
        'seed': episode.seed,
        'status': Episode.Status(episode.status).label,
        'trace': episode.trace_path or None,
        'terminated_by': episode.terminated_by or None,
        'detail': episode.detail,
    } for episode in campaign.episodes.order_by('repetition', 'route_id')]
    _write_json(output / 'manifest.json', {
        'label': campaign.label,
        'config': campaign.config,
        'episodes': episodes,
        'aggregate': 'aggregate.json',
        'report': 'report.txt',
    })


def run_campaign(config: RunConfig) -> CampaignResult:
    """
    Runs a whole campaign. Episodes go out as run_episode_task, at most
    `parallelism` in flight; aggregation starts only after all of them
    returned. Failed episodes are recorded and left out of the aggregate.
    """
    from campaign.tasks import run_episode_task

    validate(config)
    routes, scenarios = campaign_inputs(config)
    output = Path(config.output_dir)
    (output / 'traces').mkdir(parents=True, exist_ok=True)
    campaign = Campaign.objects.create(label=config.display_label,
                                       config=run_config_to_dict(config),
                                       seed=config.seed,
                                       repetitions=config.repetitions,
                                       output_dir=str(output),
                                       status=Campaign.Status.RUNNING)
    episodes = plan_episodes(campaign, config, routes, scenarios)
    logger.info('campaign %d: %d route(s), %d scenario(s), %d episode(s)',
                campaign.pk, len(routes), len(scenarios), len(episodes))

    try:
        for start in range(0, len(episodes), config.parallelism):
            window = [run_episode_task.delay(episode.pk)
                      for episode in episodes[start:start + config.parallelism]]
            for pending in window:
                pending.get()
        done = Episode.objects.done(campaign=campaign).count()
        failed = Episode.objects.failed(campaign=campaign).count()
        result = aggregate_campaign(campaign)
        write_artifacts(campaign, result)
    except Exception:
        campaign.set_status(Campaign.Status.FAILED)
        raise
    campaign.set_status(Campaign.Status.PARTIAL if failed
                        else Campaign.Status.DONE)
    logger.info('campaign %d finished: %d done, %d failed, driving score '
                '%.2f', campaign.pk, done, failed,
                result['driving_score'].mean)
    return CampaignResult(campaign, result, done, failed, output)
