"""
Turning slow-system answers into controls.

CNG answers are read as labeled numbers first (`steer: -0.2`, `brake=1`,
any order, any surrounding prose), then as exactly three bare numbers in
steer, throttle, brake order. Anything else is a parse failure: a guessed
control would silently corrupt the closed-loop metrics.
"""
import re
from typing import Dict

from core.exceptions import InvalidControl
from core.types import ControlVector, clamp_control
from dualsys.exceptions import ParseFailure, SelectionFailure
from dualsys.prompts import CandidateSet

NUMBER = r'[-+]?(?:\d*\.\d+|\d+\.?\d*)(?:[eE][-+]?\d+)?'
LABELED = re.compile(r'(?<![A-Za-z])(?P<label>steer(?:ing)?|throttle|brake)'
                     r'\s*[:=]\s*(?P<value>' + NUMBER + r')',
                     re.IGNORECASE)
BARE_NUMBER = re.compile(r'(?<![\w.])' + NUMBER + r'(?![\w.])')
LABELS = ('steer', 'throttle', 'brake')


def format_control(control: ControlVector) -> str:
    """
    Canonical CNG text of a control; parse_cng reads it back exactly.
    """
    return (f'steer: {control.steer!r}, throttle: {control.throttle!r}, '
            f'brake: {control.brake!r}')


def parse_cng(response: str) -> ControlVector:
    labeled: Dict[str, str] = {}
    for match in LABELED.finditer(response):
        label = match['label'].lower()
        label = 'steer' if label.startswith('steer') else label
        if label in labeled:
            raise ParseFailure(f'{label} given more than once')
        labeled[label] = match['value']
    if labeled:
        missing = [label for label in LABELS if label not in labeled]
        if missing:
            raise ParseFailure(f'missing {", ".join(missing)}')
        raw = [labeled[label] for label in LABELS]
    else:
        raw = BARE_NUMBER.findall(response)
        if len(raw) != 3:
            raise ParseFailure(f'expected three numbers, found {len(raw)}')
    try:
        return clamp_control([float(value) for value in raw])
    except (InvalidControl, ValueError) as exc:
        raise ParseFailure(str(exc)) from exc


def _label_pattern(label: str) -> str:
    parts = [part for part in re.split(r'[_\s]+', label) if part]
    return r'[_\s]+'.join(re.escape(part) for part in parts)


def select_dcs(response: str, candidates: CandidateSet) -> ControlVector:
    """
    The candidate whose label occurs first in the response. Matching ignores
    case, treats underscores and spaces alike and only accepts whole words;
    at one position the longest label wins.
    """
    order = sorted(range(len(candidates.entries)),
                   key=lambda index: -len(candidates.entries[index][0]))
    alternatives = '|'.join(
        f'(?P<c{index}>{_label_pattern(candidates.entries[index][0])})'
        for index in order)
    pattern = re.compile(r'(?<!\w)(?:' + alternatives + r')(?!\w)',
                         re.IGNORECASE)
    match = pattern.search(response)
    if match is None:
        raise SelectionFailure('no candidate label in response')
    return candidates.entries[int(match.lastgroup[1:])][1]
