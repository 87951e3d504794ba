"""
Scenario file grammar.

A scenario file is a list of ``key = value`` lines with dotted keys::

    # baseline
    env.speedup = 3.0
    env.cost_rate = 0.05
    env.honest_delay = 600
    reward.kind = exponential
    reward.mean = 10.0
    attack.protocol_means = 10, 50, 100

Sections are ``env``, ``reward``, ``attack`` and ``robust``; ``#`` starts a
comment and list values are comma separated. Parsing only checks syntax,
value ranges are checked by :func:`esdp.core.validate_scenario`.
"""

import logging
import pathlib
import typing as t

import attrs

from .core import REWARD_MODELS, EconomicEnvironment, RewardModel, Scenario
from .exceptions import ParseError


log = logging.getLogger(__name__)


def _number(text: str) -> float:
    return float(text)


def _integer(text: str) -> int:
    return int(text)


def _numbers(text: str) -> tuple[float, ...]:
    if not text:
        return ()
    return tuple(float(part.strip()) for part in text.split(','))


def _word(text: str) -> str:
    if not text.isidentifier():
        raise ValueError(text)
    return text


_ENV_KEYS: dict[str, t.Callable[[str], t.Any]] = {
    'speedup': _number,
    'cost_rate': _number,
    'honest_delay': _number,
    'seed_time': _number,
}
_ENV_REQUIRED = ('speedup', 'cost_rate', 'honest_delay')

_ATTACK_KEYS: dict[str, t.Callable[[str], t.Any]] = {
    'grinding_size': _integer,
    'grinding_cost_exponent': _number,
    'grinding_mode': _word,
    'abort_probability': _number,
    'protocol_means': _numbers,
    'protocol_cap': _integer,
    'coalition_size': _integer,
    'players': _integer,
    'rounds': _integer,
    'round_means': _numbers,
}

_ROBUST_KEYS: dict[str, t.Callable[[str], t.Any]] = {
    'speedup_max': _number,
    'cost_min': _number,
    'epsilon': _number,
}

_LIST_PARAMS = frozenset({'samples'})


def _reward_keys(model: type[RewardModel]) -> dict[str, t.Callable[[str], t.Any]]:
    return {
        field.alias: _numbers if field.alias in _LIST_PARAMS else _number
        for field in attrs.fields(model)
    }


def _format(value: t.Any) -> str:
    if isinstance(value, tuple):
        return ', '.join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@attrs.define
class ScenarioCodec:
    """Converts between scenario files and :class:`~esdp.core.Scenario`."""

    comment: str = '#'

    def _lines(self, text: str) -> t.Iterator[tuple[int, str, str]]:
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split(self.comment, 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            key = key.strip()
            if not sep or not key:
                raise ParseError(f'expected "key = value", got {line!r}', line=number)
            yield number, key, value.strip()

    def decode(self, text: str) -> Scenario:
        """
        Parse a scenario file.

        Raises:
            ParseError: Malformed line, unknown or duplicate key, missing
                required key or a value of the wrong type.
        """
        raw: dict[str, tuple[int, str]] = {}
        for number, key, value in self._lines(text):
            if key in raw:
                raise ParseError(
                    f'duplicate key {key!r}, first set on line {raw[key][0]}', line=number,
                )
            raw[key] = (number, value)

        kind_line, kind = raw.pop('reward.kind', (None, None))
        if kind is None:
            raise ParseError('missing required key reward.kind')
        try:
            model = REWARD_MODELS[kind]
        except KeyError:
            raise ParseError(
                f'reward.kind: unknown model {kind!r}, expected one of'
                f' {", ".join(REWARD_MODELS)}',
                line=kind_line,
            ) from None

        sections = {
            'env': _ENV_KEYS,
            'reward': _reward_keys(model),
            'attack': _ATTACK_KEYS,
            'robust': _ROBUST_KEYS,
        }
        values: dict[str, dict[str, t.Any]] = {name: {} for name in sections}
        for key, (number, text_value) in raw.items():
            section, _, name = key.partition('.')
            parse = sections.get(section, {}).get(name)
            if parse is None:
                raise ParseError(f'unknown key {key!r}', line=number)
            if not text_value and parse is not _numbers:
                raise ParseError(f'{key}: missing value', line=number)
            try:
                values[section][name] = parse(text_value)
            except ValueError:
                raise ParseError(
                    f'{key}: invalid value {text_value!r}', line=number,
                ) from None

        required = [f'env.{name}' for name in _ENV_REQUIRED if name not in values['env']]
        required += [f'reward.{name}' for name in sections['reward']
                     if name not in values['reward']]
        if required:
            raise ParseError(f'missing required keys: {", ".join(required)}')

        scenario = Scenario(
            env=EconomicEnvironment(**values['env']),
            reward=model(**values['reward']),
            **values['attack'],
            **values['robust'],
        )
        log.debug('parsed scenario: %r', scenario)
        return scenario

    def encode(self, scenario: Scenario) -> str:
        """Serialize a scenario, only fields that differ from their default."""
        lines = [f'{self.comment} esdp scenario']
        for field in attrs.fields(EconomicEnvironment):
            lines.append(f'env.{field.name} = {_format(getattr(scenario.env, field.name))}')

        lines.append(f'reward.kind = {scenario.reward.kind}')
        for name, value in scenario.reward.params().items():
            lines.append(f'reward.{name} = {_format(value)}')

        for section, keys in (('attack', _ATTACK_KEYS), ('robust', _ROBUST_KEYS)):
            for field in attrs.fields(Scenario):
                if field.name not in keys:
                    continue
                value = getattr(scenario, field.name)
                if value != field.default:
                    lines.append(f'{section}.{field.name} = {_format(value)}')
        return '\n'.join(lines) + '\n'


_codec = ScenarioCodec()


def loads(text: str) -> Scenario:
    return _codec.decode(text)


def dumps(scenario: Scenario) -> str:
    return _codec.encode(scenario)


def load(path: t.Union[str, pathlib.Path]) -> Scenario:
    """
    Read a scenario file.

    Raises:
        OSError: The file cannot be read.
        ParseError: The file is not a valid scenario.
    """
    try:
        text = pathlib.Path(path).read_text(encoding='utf-8')
    except UnicodeDecodeError as e:
        raise ParseError(f'{path}: not UTF-8 text ({e.reason} at byte {e.start})') from e
    return loads(text)


def dump(scenario: Scenario, path: t.Union[str, pathlib.Path]) -> None:
    pathlib.Path(path).write_text(dumps(scenario), encoding='utf-8')
