import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from scengen.exceptions import InvalidScenarioSpec
from sim.exceptions import InvalidActor
from sim.routes import ActorSpec, actor_from_dict, actor_to_dict


@dataclass(frozen=True)
class ScenarioSpec:
    """
    Compiled threat scenario, loadable by the simulator on its base route.
    """
    scenario_id: str
    base_route_id: str
    actors: Tuple[ActorSpec, ...]
    description: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'actors', tuple(self.actors))
        # one line of single-spaced words, as the DSL carries it
        object.__setattr__(self, 'description',
                           ' '.join(str(self.description).split()))
        if not self.actors:
            raise InvalidScenarioSpec(f'{self.scenario_id}: no actors')
        for actor in self.actors:
            if not isinstance(actor, ActorSpec):
                raise InvalidScenarioSpec(f'{self.scenario_id}: '
                                          f'{actor!r} is not an ActorSpec')
            if actor.progress is None:
                raise InvalidScenarioSpec(
                    f'{self.scenario_id}: actor {actor.actor_id} has no '
                    f'trigger progress')
        ids = [actor.actor_id for actor in self.actors]
        if len(set(ids)) != len(ids):
            raise InvalidScenarioSpec(f'{self.scenario_id}: duplicate actor ids')


def scenario_to_dict(scenario: ScenarioSpec) -> Dict[str, Any]:
    return {
        'scenario_id': scenario.scenario_id,
        'base_route_id': scenario.base_route_id,
        'description': scenario.description,
        'actors': [actor_to_dict(actor) for actor in scenario.actors],
    }


def scenario_from_dict(data: Dict[str, Any]) -> ScenarioSpec:
    try:
        return ScenarioSpec(
            scenario_id=data['scenario_id'],
            base_route_id=data['base_route_id'],
            description=data.get('description', ''),
            actors=tuple(actor_from_dict(actor) for actor in data['actors']),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidScenarioSpec(f'malformed scenario document: {exc}') from exc
    except InvalidActor as exc:
        raise InvalidScenarioSpec(str(exc)) from exc


def load_scenario_file(path: Union[str, Path]) -> ScenarioSpec:
    with open(path, encoding='utf-8') as handle:
        return scenario_from_dict(json.load(handle))


def load_suite(directory: Union[str, Path]) -> List[ScenarioSpec]:
    """
    Loads a scenario suite directory through its manifest, ordered by
    route_id.
    """
    directory = Path(directory)
    with open(directory / 'manifest.json', encoding='utf-8') as handle:
        manifest = json.load(handle)
    scenarios = []
    for route_id in sorted(manifest['scenarios']):
        scenario_id = manifest['scenarios'][route_id]
        scenario = load_scenario_file(directory / f'{scenario_id}.json')
        if scenario.base_route_id != route_id:
            raise InvalidScenarioSpec(f'manifest maps {route_id} to '
                                      f'{scenario_id}, built for '
                                      f'{scenario.base_route_id}')
        scenarios.append(scenario)
    return scenarios
