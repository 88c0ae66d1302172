from typing import Any, Dict

from adapters.base import Adapter, EndpointSpec, Modality, ModelResponse
from adapters.cassette import RecordReplayAdapter
from adapters.endpoint import EndpointAdapter
from adapters.exceptions import AdapterException, InvalidAdapterConfig
from adapters.reference import RuleFollowingAdapter
from adapters.scripted import ScriptedAdapter

ENDPOINT_KEYS = ('url', 'api_style', 'auth_env', 'deadline', 'max_retries',
                 'modality', 'model')


def _scripted_answer(answer: Any):
    if isinstance(answer, dict):
        return ModelResponse(text=answer.get('text', ''),
                             status=answer.get('status', 'ok'),
                             detail=answer.get('detail', ''))
    if isinstance(answer, list):
        return [_scripted_answer(item) for item in answer]
    return answer


def build_adapter(config: Dict[str, Any]) -> Adapter:
    """
    Builds an adapter from its JSON config:

        {"kind": "endpoint", "url": ..., "api_style": ..., "auth_env": ...}
        {"kind": "scripted", "rules": [[matcher or null, answer], ...]}
        {"kind": "rule_following"}
        {"kind": "cassette", "path": ..., "mode": "record"|"replay",
         "inner": {...}}
    """
    if not isinstance(config, dict):
        raise InvalidAdapterConfig(f'adapter config must be an object, '
                                   f'got {type(config).__name__}')
    kind = config.get('kind')
    name = config.get('name')
    try:
        if kind == 'endpoint':
            spec = EndpointSpec(**{key: config[key] for key in ENDPOINT_KEYS
                                   if key in config})
            return EndpointAdapter(spec, name=name)
        if kind == 'scripted':
            rules = [(matcher, _scripted_answer(answer))
                     for matcher, answer in config.get('rules', ())]
            return ScriptedAdapter(rules, name=name or 'scripted',
                                   modality=config.get('modality',
                                                       Modality.VISION),
                                   delay=float(config.get('delay', 0.0)))
        if kind == 'rule_following':
            return RuleFollowingAdapter(name=name)
        if kind == 'cassette':
            inner = config.get('inner')
            return RecordReplayAdapter(
                build_adapter(inner) if inner is not None else None,
                config['path'], config.get('mode', 'replay'), name=name)
    except InvalidAdapterConfig:
        raise
    except AdapterException as exc:
        raise InvalidAdapterConfig(str(exc)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidAdapterConfig(f'malformed {kind} adapter config: '
                                   f'{exc!r}') from exc
    raise InvalidAdapterConfig(f'unknown adapter kind {kind!r}')
