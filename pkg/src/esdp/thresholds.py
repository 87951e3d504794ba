"""
Closed-form required delays for every modeled security condition.

All calculators return the smallest delay ``T*`` (seconds) such that the
corresponding condition certifies economic security for every ``T ≥ T*``.
Values are exact reals; rounding is left to presentation code.
"""

import itertools
import logging
import math
import typing as t

import attrs
import numpy as np
from scipy import integrate

from .core import (
    Bounded,
    Constant,
    Empirical,
    Exponential,
    RewardModel,
    Scenario,
    ThresholdReport,
    validate_scenario,
)
from .exceptions import EsdpError, ValidationError


log = logging.getLogger(__name__)

HARMONIC_DIRECT_LIMIT = 10 ** 6
MULTIROUND_SUBSET_LIMIT = 20


def _in_range(low: float, high: float = math.inf, *, open_low: bool = False):
    def check(instance, attribute, value):
        below = value <= low if open_low else value < low
        if below or value > high or math.isnan(value):
            bracket = '(' if open_low else '['
            raise ValidationError(
                f'{attribute.name}: must be in {bracket}{low:g}, {high:g}]'
                f' (got {value!r})'
            )
    return check


@attrs.frozen
class MomentBounds:
    """Moment bounds ``E[V] ≤ μ_max``, ``Var[V] ≤ σ_max²`` and tolerance ``ε``."""

    mean_max: float = attrs.field(converter=float, validator=_in_range(0))
    std_max: float = attrs.field(converter=float, validator=_in_range(0))
    epsilon: float = attrs.field(converter=float, validator=_in_range(0, 1, open_low=True))


@attrs.frozen
class ParameterIntervals:
    """Worst-case speedup ``δ_max``, cheapest cost rate ``c_min`` and reward bound."""

    speedup_max: float = attrs.field(converter=float, validator=_in_range(1))
    cost_min: float = attrs.field(converter=float, validator=_in_range(0, open_low=True))
    reward_max: float = attrs.field(converter=float, validator=_in_range(0))


def _delay_for(speedup: float, cost_rate: float, reward: float) -> float:
    # Shared by every calculator so that reductions to the linear case agree
    # to the last bit.
    return speedup * reward / cost_rate


def expected_profit(delay: float, speedup: float, cost_rate: float,
                    reward: float) -> float:
    """Expected profit of one full attack, ``V − c·T/δ``."""
    return reward - cost_rate * delay / speedup


def linear_threshold(speedup: float, cost_rate: float,
                     expected_reward: float) -> float:
    """
    Break-even delay ``(δ/c)·E[V]``. A round is secure for every delay at or
    above it and insecure below it.
    """
    return _delay_for(speedup, cost_rate, expected_reward)


def robust_interval_threshold(intervals: ParameterIntervals) -> float:
    return _delay_for(intervals.speedup_max, intervals.cost_min, intervals.reward_max)


def epsilon_robust_threshold(intervals: ParameterIntervals,
                             bounds: MomentBounds) -> float:
    """
    Delay guaranteeing ``P[profit > 0] ≤ ε`` per attempt from the first two
    moments of the reward only (Chebyshev). ``intervals.reward_max`` is unused.
    """
    reward = bounds.mean_max + bounds.std_max / math.sqrt(bounds.epsilon)
    return _delay_for(intervals.speedup_max, intervals.cost_min, reward)


def composition_threshold(speedup: float, cost_rate: float,
                          protocol_means: t.Sequence[float],
                          cap: t.Optional[int] = None) -> float:
    """
    Delay securing a round whose output feeds several protocols at once.

    Args:
        protocol_means: Expected reward contributed by each protocol.
        cap: Attacker can target at most this many protocols. The best subset
            is the ``cap`` largest means since all of them are nonnegative.
    """
    means = list(protocol_means)
    if not means:
        raise ValidationError('protocol_means: at least one protocol is required')
    if cap is None:
        return _delay_for(speedup, cost_rate, math.fsum(means))
    if cap < 1 or cap > len(means):
        raise ValidationError(
            f'protocol_cap: must be between 1 and {len(means)} (got {cap!r})'
        )
    best = sorted(means, reverse=True)[:cap]
    return _delay_for(speedup, cost_rate, math.fsum(best))


def _check_prefix_means(prefix_means: t.Sequence[float]) -> list[float]:
    prefix = [float(v) for v in prefix_means]
    if not prefix:
        raise ValidationError('prefix_means: at least one round is required')
    if prefix[0] < 0:
        raise ValidationError('prefix_means: expected rewards must be >= 0')
    for k, (prev, cur) in enumerate(zip(prefix, prefix[1:]), start=2):
        if cur < prev:
            raise ValidationError(
                f'prefix_means: cumulative expectation decreases at round {k}'
                f' ({cur!r} < {prev!r})'
            )
    return prefix


def multiround_threshold(speedup: float, cost_rate: float,
                         prefix_means: t.Sequence[float]) -> float:
    """
    Delay bounding cumulative profit over ``n`` rounds.

    Args:
        prefix_means: ``prefix_means[k]`` is the expected total reward of the
            first ``k + 1`` rounds.
    """
    prefix = _check_prefix_means(prefix_means)
    worst = max(total / k for k, total in enumerate(prefix, start=1))
    return _delay_for(speedup, cost_rate, worst)


def multiround_subset_threshold(speedup: float, cost_rate: float,
                                round_means: t.Sequence[float]) -> float:
    """
    Like :func:`multiround_threshold`, but the attacker picks an arbitrary set
    of rounds rather than a prefix. Enumerates every nonempty subset, so at
    most :data:`MULTIROUND_SUBSET_LIMIT` rounds are accepted.
    """
    means = [float(v) for v in round_means]
    if not means:
        raise ValidationError('round_means: at least one round is required')
    if len(means) > MULTIROUND_SUBSET_LIMIT:
        raise ValidationError(
            f'round_means: subset enumeration supports at most'
            f' {MULTIROUND_SUBSET_LIMIT} rounds (got {len(means)})'
        )
    if min(means) < 0:
        raise ValidationError('round_means: expected rewards must be >= 0')

    worst = 0.0
    for size in range(1, len(means) + 1):
        for subset in itertools.combinations(means, size):
            worst = max(worst, math.fsum(subset) / size)
    return _delay_for(speedup, cost_rate, worst)


def harmonic_number(n: int) -> float:
    """``H_n = 1 + 1/2 + ... + 1/n``, asymptotic expansion above 10⁶."""
    if n < 1:
        raise ValidationError(f'n: must be a positive integer (got {n!r})')
    if n <= HARMONIC_DIRECT_LIMIT:
        # Smallest terms first.
        return float(np.sum(1.0 / np.arange(n, 0, -1, dtype=float)))
    return math.log(n) + np.euler_gamma + 1 / (2 * n)


def expected_max_exponential(mean: float, grinding_size: int) -> float:
    """Expected maximum of ``G`` i.i.d. exponential rewards, ``μ·H_G``."""
    if mean < 0:
        raise ValidationError(f'mean: must be >= 0 (got {mean!r})')
    return mean * harmonic_number(grinding_size)


def expected_max_reward(model: RewardModel, grinding_size: int) -> float:
    """
    Expected maximum of ``G`` i.i.d. rewards drawn from ``model``.

    Exact for constant, bounded, empirical and exponential rewards, numerical
    quadrature of ``∫(1 − F(x)^G) dx`` otherwise.
    """
    if grinding_size < 1:
        raise ValidationError(f'grinding_size: must be >= 1 (got {grinding_size!r})')
    if isinstance(model, (Constant, Bounded)):
        return model.mean
    if isinstance(model, Exponential):
        return expected_max_exponential(model.mean, grinding_size)
    if isinstance(model, Empirical):
        values = np.sort(np.asarray(model.samples))
        ranks = np.arange(len(values) + 1) / len(values)
        cdf = ranks ** grinding_size
        return float(np.sum(values * np.diff(cdf)))
    if grinding_size == 1:
        return model.mean

    dist = model.distribution()
    if dist is None:
        return model.mean
    value, abserr = integrate.quad(
        lambda x: 1.0 - dist.cdf(x) ** grinding_size, 0, np.inf, limit=200,
    )
    log.debug('E[V_max] quadrature for %s, G=%d: %g (±%g)',
              model.kind, grinding_size, value, abserr)
    return float(value)


def sequential_grinding_size(speedup: float, grinding_size: int) -> int:
    """
    Number of seeds a single computation stream finishes strictly before the
    honest deadline, ``k·T/δ < T``.
    """
    return max(1, min(grinding_size, math.ceil(speedup) - 1))


def grinding_threshold(speedup: float, cost_rate: float, grinding_size: int,
                       expected_max: float, cost_exponent: float = 1.0) -> float:
    """
    Delay under grinding over ``G`` seeds, ``δ/(c·G^α)·E[V_max]``.

    ``α = 1`` is fully parallel provisioning (cost rate ``G·c``), smaller
    exponents model partially shared streams.
    """
    if grinding_size < 1:
        raise ValidationError(f'grinding_size: must be >= 1 (got {grinding_size!r})')
    if not 0 <= cost_exponent <= 1:
        raise ValidationError(f'cost_exponent: must be in [0, 1] (got {cost_exponent!r})')
    return _delay_for(speedup, cost_rate * grinding_size ** cost_exponent, expected_max)


def abort_threshold(speedup: float, cost_rate: float, expected_reward: float,
                    abort_probability: float) -> float:
    """Delay under selective abort, ``(δ/c)·E[V]/(1 − p)``."""
    if not 0 <= abort_probability < 1:
        raise ValidationError(
            f'abort_probability: must be in [0, 1) (got {abort_probability!r})'
        )
    return _delay_for(speedup, cost_rate, expected_reward / (1 - abort_probability))


def coalition_threshold(speedup: float, cost_rate: float, coalition_size: int,
                        expected_reward: float) -> float:
    """Delay against ``m`` players sharing hardware cost, ``(δ·m/c)·E[V]``."""
    if coalition_size < 1:
        raise ValidationError(f'coalition_size: must be >= 1 (got {coalition_size!r})')
    return _delay_for(speedup * coalition_size, cost_rate, expected_reward)


def early_revelation_window(delay: float, speedup: float) -> float:
    """
    Time during which only the adversary knows the output even if honest
    nodes broadcast it as soon as they finish, ``T·(1 − 1/δ)``.
    """
    return delay * (1 - 1 / speedup)


def _requirements(scenario: Scenario) -> t.Iterator[tuple[str, t.Callable[[], float]]]:
    env = scenario.env
    delta, c = env.speedup, env.cost_rate
    reward = scenario.reward

    yield 'linear', lambda: linear_threshold(delta, c, reward.mean)

    if scenario.grinding_size > 1:
        def grinding():
            size, alpha = scenario.grinding_size, scenario.grinding_cost_exponent
            if scenario.grinding_mode == 'sequential':
                size, alpha = sequential_grinding_size(delta, size), 1.0
            return grinding_threshold(
                delta, c, size, expected_max_reward(reward, size), alpha,
            )
        yield 'grinding', grinding

    if scenario.abort_probability > 0:
        yield 'abort', lambda: abort_threshold(
            delta, c, reward.mean, scenario.abort_probability,
        )

    if scenario.coalition_size > 1:
        yield 'coalition', lambda: coalition_threshold(
            delta, c, scenario.coalition_size, reward.mean,
        )

    if scenario.protocol_means:
        yield 'composition', lambda: composition_threshold(
            delta, c, scenario.protocol_means, scenario.protocol_cap,
        )

    if scenario.rounds > 1:
        means = scenario.round_means or (reward.mean,) * scenario.rounds
        yield 'multiround', lambda: multiround_threshold(
            delta, c, list(itertools.accumulate(means)),
        )
        if scenario.rounds <= MULTIROUND_SUBSET_LIMIT:
            yield 'multiround_subset', lambda: multiround_subset_threshold(
                delta, c, means,
            )

    bound = reward.upper_bound
    robust = scenario.speedup_max is not None or scenario.cost_min is not None
    delta_max = delta if scenario.speedup_max is None else scenario.speedup_max
    c_min = c if scenario.cost_min is None else scenario.cost_min
    if robust and bound is not None:
        yield 'interval', lambda: robust_interval_threshold(
            ParameterIntervals(delta_max, c_min, bound),
        )

    if scenario.epsilon is not None:
        yield 'epsilon', lambda: epsilon_robust_threshold(
            ParameterIntervals(delta_max, c_min, 0.0),
            MomentBounds(reward.mean, reward.std, scenario.epsilon),
        )


def esdp(scenario: Scenario, delay: t.Optional[float] = None) -> ThresholdReport:
    """
    Economically secure delay parameter of a scenario.

    Evaluates every condition the scenario's attack surface makes applicable
    and reports the largest required delay.

    Args:
        scenario: Scenario to analyze, validated here.
        delay: Candidate delay to judge, if any.

    Returns:
        Report with per-condition delays, the binding one and the verdict.

    Raises:
        ValidationError: Invalid scenario, or a condition rejected its inputs;
            ``condition`` then names the condition.
    """
    validate_scenario(scenario)

    requirements: dict[str, float] = {}
    for name, compute in _requirements(scenario):
        try:
            requirements[name] = compute()
        except EsdpError as e:
            if e.condition is None:
                e.condition = name
            raise
        except (ValueError, ArithmeticError) as e:
            raise EsdpError(str(e), condition=name) from e
        log.debug('condition %s requires T >= %r s', name, requirements[name])

    notes = []
    env = scenario.env
    window = early_revelation_window(env.honest_delay, env.speedup)
    if window > 0:
        notes.append(
            f'early revelation window at T={env.honest_delay:g} s:'
            f' {window:.6g} s during which only the adversary knows the output'
        )
    if 'grinding' in requirements and requirements['grinding'] < requirements['linear']:
        notes.append(
            'grinding bound is below the single-seed bound: the cost of'
            ' evaluating G seeds grows faster than E[V_max] here'
        )

    return ThresholdReport(
        requirements=requirements,
        speedup=env.speedup if scenario.speedup_max is None else scenario.speedup_max,
        delay=delay,
        notes=tuple(notes),
    )
