"""
Preset scenarios reproducing the published case studies as data tables.

Each generator returns a :class:`CaseStudyOutput`: a table whose first
column is the abscissa and whose remaining columns are series, plus a few
labelled headline numbers. Rendering is left to the CLI.
"""

import json
import logging
import math
import typing as t

import attrs
import numpy as np
import pandas as pd

from .exceptions import ValidationError
from .thresholds import (
    expected_max_exponential,
    expected_profit,
    grinding_threshold,
    linear_threshold,
)


log = logging.getLogger(__name__)

BASELINE_SPEEDUP = 3.0
BASELINE_COST_RATE = 0.05
CASE1_REWARDS = (10.0, 50.0, 100.0)
CASE3_MEAN = 10.0
CASE3_COST_EXPONENT = 0.5
ETHEREUM_SPEEDUP = 2.5
ETHEREUM_COST_RATE = 0.00046
ETHEREUM_HOURLY_PRICE = 1.65
ETHEREUM_REWARDS = (50.0, 10000.0)

SECONDS_PER_MINUTE = 60.0
SECONDS_PER_DAY = 86400.0


@attrs.frozen
class Column:
    name: str
    unit: str

    @property
    def header(self) -> str:
        return f'{self.name}({self.unit})'


@attrs.frozen
class Headline:
    label: str
    value: float
    unit: str
    conversions: dict[str, float] = attrs.field(factory=dict)

    def __str__(self):
        text = f'{self.label}: {self.value:.6g} {self.unit}'
        if self.conversions:
            extra = ', '.join(f'{v:.6g} {u}' for u, v in self.conversions.items())
            text += f' ({extra})'
        return text


@attrs.frozen
class CaseStudyOutput:
    """
    Args:
        name: Short identifier, also the CSV file stem.
        title: Human readable title, used for figures.
        columns: Abscissa first, then one column per series.
        rows: Table rows sorted by the abscissa.
        headlines: Labelled numbers quoted alongside the table.
        notes: Free text metadata, e.g. rounding caveats.
        log_x: Whether the abscissa is best shown on a log-2 axis.
    """

    name: str
    title: str
    columns: tuple[Column, ...]
    rows: tuple[tuple[float, ...], ...]
    headlines: tuple[Headline, ...] = ()
    notes: tuple[str, ...] = ()
    log_x: bool = False

    def __attrs_post_init__(self):
        values = np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))
        if not np.all(np.isfinite(values)):
            raise ValidationError(f'{self.name}: table values must be finite')
        if np.any(np.diff(values[:, 0]) < 0):
            raise ValidationError(f'{self.name}: rows must be sorted by {self.columns[0].name}')

    @property
    def series(self) -> tuple[Column, ...]:
        return self.columns[1:]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.rows), columns=[c.header for c in self.columns])

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.17g', lineterminator='\n')

    def to_json(self) -> str:
        return json.dumps({
            'name': self.name,
            'title': self.title,
            'columns': [attrs.asdict(c) for c in self.columns],
            'rows': [list(r) for r in self.rows],
            'headlines': [attrs.asdict(h) for h in self.headlines],
            'notes': list(self.notes),
        }, indent=2)


def _sorted_inputs(name: str, values: t.Iterable[float], minimum: float = 0.0) -> list[float]:
    values = sorted(float(v) for v in values)
    if not values:
        raise ValidationError(f'{name}: at least one value is needed')
    bad = [v for v in values if not math.isfinite(v) or v < minimum]
    if bad:
        raise ValidationError(f'{name}: values must be finite and >= {minimum:g} (got {bad[0]!r})')
    return values


def _durations(seconds: float) -> dict[str, float]:
    return {'min': seconds / SECONDS_PER_MINUTE, 'days': seconds / SECONDS_PER_DAY}


def case1_profit_curves(delays: t.Optional[t.Iterable[float]] = None) -> CaseStudyOutput:
    """Expected profit per attack against the delay for three reward levels."""
    if delays is None:
        delays = np.arange(0, 7001, 50)
    delays = _sorted_inputs('delays', delays)

    rows = tuple(
        (delay, *(expected_profit(delay, BASELINE_SPEEDUP, BASELINE_COST_RATE, reward)
                  for reward in CASE1_REWARDS))
        for delay in delays
    )
    headlines = []
    for reward in CASE1_REWARDS:
        delay = linear_threshold(BASELINE_SPEEDUP, BASELINE_COST_RATE, reward)
        headlines.append(Headline(f'break-even delay, E[V] = {reward:g} USD', delay, 's',
                                  _durations(delay)))
    return CaseStudyOutput(
        name='case1',
        title='Expected profit per attack vs. delay',
        columns=(Column('delay', 's'),
                 *(Column(f'profit_ev{reward:g}', 'USD') for reward in CASE1_REWARDS)),
        rows=rows,
        headlines=tuple(headlines),
        notes=(f'speedup {BASELINE_SPEEDUP:g}, cost rate {BASELINE_COST_RATE:g} USD/s,'
               f' per-second cost c/δ = {BASELINE_COST_RATE / BASELINE_SPEEDUP!r} USD/s',),
    )


def case2_delay_curve(v_max_values: t.Optional[t.Iterable[float]] = None) -> CaseStudyOutput:
    """Required delay against the worst-case reward ``V_max``."""
    if v_max_values is None:
        v_max_values = np.arange(0, 101, 5)
    v_max_values = _sorted_inputs('v_max_values', v_max_values)

    def required(v_max):
        return linear_threshold(BASELINE_SPEEDUP, BASELINE_COST_RATE, v_max)

    rows = tuple((v, required(v)) for v in v_max_values)
    headline = required(100.0)
    return CaseStudyOutput(
        name='case2',
        title='Required delay vs. worst-case reward',
        columns=(Column('v_max', 'USD'), Column('required_delay', 's')),
        rows=rows,
        headlines=(Headline('required delay, V_max = 100 USD', headline, 's',
                            _durations(headline)),),
    )


def _grinding_delay(grinding_size: int) -> float:
    return grinding_threshold(
        BASELINE_SPEEDUP, BASELINE_COST_RATE, grinding_size,
        expected_max_exponential(CASE3_MEAN, grinding_size), CASE3_COST_EXPONENT,
    )


def case3_grinding_curve(g_values: t.Optional[t.Iterable[int]] = None) -> CaseStudyOutput:
    """
    Grinding threshold for exponential rewards with cost scaling as ``√G``.

    The curve is not monotone: it rises for small ``G`` and decays like
    ``ln G/√G`` afterwards.
    """
    if g_values is None:
        g_values = [2 ** k for k in range(11)]
    g_values = sorted(int(g) for g in g_values)
    if not g_values or g_values[0] < 1:
        raise ValidationError('g_values: grinding sizes must be positive integers')

    rows = tuple((float(g), _grinding_delay(g)) for g in g_values)
    peak_g, peak = max(rows, key=lambda row: row[1])
    log.debug('case 3 peak at G=%d: %g s', peak_g, peak)
    return CaseStudyOutput(
        name='case3',
        title='Grinding threshold vs. grinding size',
        columns=(Column('grinding_size', 'seeds'), Column('required_delay', 's')),
        rows=rows,
        headlines=(
            Headline(f'peak required delay, G = {peak_g:g}', peak, 's'),
            Headline(f'required delay, G = {g_values[-1]}', rows[-1][1], 's'),
        ),
        notes=(f'exponential rewards, mean {CASE3_MEAN:g} USD, cost scales as'
               f' c·G^{CASE3_COST_EXPONENT:g}',),
        log_x=True,
    )


def case4_ethereum(rewards: t.Iterable[float] = ETHEREUM_REWARDS) -> CaseStudyOutput:
    """Break-even delays for a RANDAO-style beacon on rented hardware."""
    rewards = _sorted_inputs('rewards', rewards)
    rows = []
    headlines = []
    for reward in rewards:
        delay = linear_threshold(ETHEREUM_SPEEDUP, ETHEREUM_COST_RATE, reward)
        rows.append((reward, delay, delay / SECONDS_PER_DAY))
        headlines.append(Headline(f'required delay, E[V] = {reward:g} USD', delay, 's',
                                  {'days': delay / SECONDS_PER_DAY}))

    exact_rate = ETHEREUM_HOURLY_PRICE / 3600
    return CaseStudyOutput(
        name='case4',
        title='Ethereum RANDAO with a VDF',
        columns=(Column('expected_reward', 'USD'), Column('required_delay', 's'),
                 Column('required_delay', 'days')),
        rows=tuple(rows),
        headlines=tuple(headlines),
        notes=(
            f'speedup {ETHEREUM_SPEEDUP:g}, cost rate {ETHEREUM_COST_RATE:g} USD/s',
            f'the cost rate is the rounded cloud price {ETHEREUM_HOURLY_PRICE:g} USD/h;'
            f' unrounded it is {exact_rate:.7f} USD/s',
        ),
    )


CASE_STUDIES: dict[int, t.Callable[[], CaseStudyOutput]] = {
    1: case1_profit_curves,
    2: case2_delay_curve,
    3: case3_grinding_curve,
    4: case4_ethereum,
}


def run_case_study(number: int) -> CaseStudyOutput:
    try:
        generator = CASE_STUDIES[number]
    except KeyError:
        raise ValidationError(
            f'case study: unknown id {number!r}, expected one of {sorted(CASE_STUDIES)}'
        ) from None
    return generator()
