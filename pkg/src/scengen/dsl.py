"""
Line-oriented scenario DSL, one statement per line:

    DESC <free text>
    ACTOR <kind> AT progress=<f> offset=<m> BEHAVIOR <name> [key=value ...]

Keys after the behavior are `id`, `speed`, `trigger` and the behavior or
traffic light parameters of sim.routes.PARAM_BOUNDS. The full grammar ships
in dsl_grammar.txt.
"""
import re
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from scengen.exceptions import DslSyntaxError, DslValidationError
from scengen.scenario import ScenarioSpec
from sim.exceptions import InvalidActor
from sim.routes import PARAM_BOUNDS, ActorSpec

KEYWORDS = ('ACTOR', 'DESC')
TOKEN = re.compile(r'\S+')
IDENTIFIER = re.compile(r'[A-Za-z0-9_\-]+')
LOCATION_KEYS = ('progress', 'offset')


@dataclass(frozen=True)
class Token:
    text: str
    column: int


def tokenize(line: str) -> List[Token]:
    return [Token(match.group(), match.start() + 1)
            for match in TOKEN.finditer(line)]


def statement_keyword(line: str) -> str:
    tokens = line.split(None, 1)
    if tokens and tokens[0] in KEYWORDS:
        return tokens[0]
    return ''


def find_blocks(text: str) -> List[List[Tuple[int, str]]]:
    """
    Runs of consecutive lines that start with a DSL keyword, with their
    1-based line numbers. Anything else ends a block.
    """
    blocks = []
    current = []
    for number, line in enumerate(text.splitlines(), start=1):
        if statement_keyword(line):
            current.append((number, line))
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    return blocks


def _number(token: Token, key: str, value: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise DslSyntaxError(f'{key} expects a number, got {value!r}', line,
                             token.column + len(key) + 1)


def _pair(token: Token, line: int) -> Tuple[str, str]:
    key, sep, value = token.text.partition('=')
    if not sep or not key or not value:
        raise DslSyntaxError(f'expected key=value, got {token.text!r}', line,
                             token.column)
    return key, value


def _expect(tokens: Sequence[Token], position: int, word: str,
            line: int, end_column: int) -> None:
    if position >= len(tokens):
        raise DslSyntaxError(f'expected {word}', line, end_column)
    if tokens[position].text != word:
        raise DslSyntaxError(f'expected {word}, got {tokens[position].text!r}',
                             line, tokens[position].column)


def parse_actor(line: str, number: int, index: int) -> ActorSpec:
    tokens = tokenize(line)
    end = len(line.rstrip()) + 1
    if len(tokens) < 2:
        raise DslSyntaxError('expected actor kind', number, end)
    kind = tokens[1].text
    _expect(tokens, 2, 'AT', number, end)

    position = 3
    location: Dict[str, float] = {}
    while position < len(tokens) and tokens[position].text != 'BEHAVIOR':
        key, value = _pair(tokens[position], number)
        if key not in LOCATION_KEYS:
            raise DslSyntaxError(f'unexpected {key!r} before BEHAVIOR', number,
                                 tokens[position].column)
        if key in location:
            raise DslValidationError(key, 'given twice', number)
        location[key] = _number(tokens[position], key, value, number)
        position += 1
    for key in LOCATION_KEYS:
        if key not in location:
            raise DslSyntaxError(f'missing {key}=', number,
                                 tokens[position].column
                                 if position < len(tokens) else end)
    _expect(tokens, position, 'BEHAVIOR', number, end)
    if position + 1 >= len(tokens):
        raise DslSyntaxError('expected behavior name', number, end)
    behavior = tokens[position + 1].text

    fields = {'actor_id': f'a{index}', 'speed': 0.0, 'trigger_distance': 30.0}
    params: Dict[str, float] = {}
    seen = set()
    for token in tokens[position + 2:]:
        key, value = _pair(token, number)
        if key in seen:
            raise DslValidationError(key, 'given twice', number)
        seen.add(key)
        if key == 'id':
            if not IDENTIFIER.fullmatch(value):
                raise DslValidationError('id', f'{value!r} is not an '
                                               f'identifier', number)
            fields['actor_id'] = value
        elif key == 'speed':
            fields['speed'] = _number(token, key, value, number)
        elif key == 'trigger':
            fields['trigger_distance'] = _number(token, key, value, number)
        elif key in PARAM_BOUNDS:
            params[key] = _number(token, key, value, number)
        else:
            raise DslValidationError(key, 'unknown parameter', number)
    try:
        return ActorSpec(kind=kind, behavior=behavior,
                         progress=location['progress'],
                         offset=location['offset'], params=params, **fields)
    except InvalidActor as exc:
        raise DslValidationError(exc.field, str(exc), number) from exc


def parse_block(block: Sequence[Tuple[int, str]], route_id: str,
                scenario_id: str) -> ScenarioSpec:
    actors = []
    lines = []
    description = None
    for number, line in block:
        if statement_keyword(line) == 'DESC':
            if description is not None:
                raise DslValidationError('description', 'DESC given twice',
                                         number)
            description = line.split(None, 1)[1] \
                if len(line.split(None, 1)) > 1 else ''
        else:
            actors.append(parse_actor(line, number, len(actors) + 1))
            lines.append(number)
    if not actors:
        raise DslValidationError('actors', 'no ACTOR statement', block[0][0])
    ids = [actor.actor_id for actor in actors]
    for position, actor_id in enumerate(ids):
        if actor_id in ids[:position]:
            raise DslValidationError('id', f'duplicate actor id {actor_id!r}',
                                     lines[position])
    return ScenarioSpec(scenario_id=scenario_id, base_route_id=route_id,
                        actors=tuple(actors), description=description or '')


def parse_dsl(text: str, route_id: str = 'unbound',
              scenario_id: str = None) -> ScenarioSpec:
    """
    Compiles the first well-formed DSL block found in text, ignoring the
    prose around it. When no block compiles, the error of the first block is
    raised; it carries the line (and for syntax errors the column) of the
    first failure.
    """
    scenario_id = scenario_id or f'{route_id}-threat'
    blocks = find_blocks(text)
    if not blocks:
        raise DslSyntaxError('no ACTOR or DESC statement found', 1, 1)
    first_error = None
    for block in blocks:
        try:
            return parse_block(block, route_id, scenario_id)
        except (DslSyntaxError, DslValidationError) as exc:
            first_error = first_error or exc
    raise first_error


def _format_number(value: float) -> str:
    return repr(float(value))


def format_actor(actor: ActorSpec) -> str:
    words = [
        'ACTOR', actor.kind, 'AT',
        f'progress={_format_number(actor.progress)}',
        f'offset={_format_number(actor.offset)}',
        'BEHAVIOR', actor.behavior,
        f'id={actor.actor_id}',
        f'speed={_format_number(actor.speed)}',
        f'trigger={_format_number(actor.trigger_distance)}',
    ]
    words.extend(f'{name}={_format_number(value)}'
                 for name, value in sorted(actor.params.items()))
    return ' '.join(words)


def format_dsl(scenario: ScenarioSpec) -> str:
    lines = []
    if scenario.description:
        lines.append(f'DESC {scenario.description}')
    lines.extend(format_actor(actor) for actor in scenario.actors)
    return '\n'.join(lines) + '\n'
