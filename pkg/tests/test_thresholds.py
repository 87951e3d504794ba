import math
from fractions import Fraction

import numpy as np
import pytest

import esdp
from esdp import thresholds


DELTA = 3.0
COST = 0.05


@pytest.fixture
def baseline():
    return esdp.Scenario(
        env=esdp.EconomicEnvironment(speedup=DELTA, cost_rate=COST, honest_delay=600.0),
        reward=esdp.Constant(10.0),
    )


@pytest.mark.parametrize(
    'delay, reward, profit',
    [
        pytest.param(600.0, 10.0, 0.0, id='break-even'),
        pytest.param(0.0, 10.0, 10.0, id='zero-delay'),
        pytest.param(1200.0, 10.0, -10.0, id='loss'),
    ],
)
def test_expected_profit(delay, reward, profit):
    assert thresholds.expected_profit(delay, DELTA, COST, reward) == pytest.approx(profit)


@pytest.mark.parametrize(
    'reward, delay',
    [
        pytest.param(10.0, 600.0, id='10'),
        pytest.param(100.0, 6000.0, id='100'),
        pytest.param(0.0, 0.0, id='zero'),
    ],
)
def test_linear_threshold(reward, delay):
    assert thresholds.linear_threshold(DELTA, COST, reward) == pytest.approx(delay)


def test_linear_threshold_is_break_even():
    delay = thresholds.linear_threshold(DELTA, COST, 10.0)
    assert thresholds.expected_profit(delay, DELTA, COST, 10.0) == pytest.approx(0.0, abs=1e-12)
    assert thresholds.expected_profit(delay * 0.99, DELTA, COST, 10.0) > 0
    assert thresholds.expected_profit(delay * 1.01, DELTA, COST, 10.0) < 0


def test_robust_interval_threshold():
    assert thresholds.robust_interval_threshold(
        esdp.ParameterIntervals(3.0, 0.05, 100.0)) == pytest.approx(6000.0)
    assert thresholds.robust_interval_threshold(
        esdp.ParameterIntervals(3.0, 0.05, 0.0)) == 0.0
    assert thresholds.robust_interval_threshold(
        esdp.ParameterIntervals(2.5, 0.00046, 50.0)) == pytest.approx(271739.13, abs=0.01)


@pytest.mark.parametrize(
    'mean, std, epsilon, delay',
    [
        pytest.param(10.0, 5.0, 0.01, 3600.0, id='epsilon-0.01'),
        pytest.param(10.0, 0.0, 0.01, 600.0, id='degenerate'),
        pytest.param(10.0, 5.0, 1.0, 900.0, id='epsilon-1'),
    ],
)
def test_epsilon_robust_threshold(mean, std, epsilon, delay):
    intervals = esdp.ParameterIntervals(DELTA, COST, 0.0)
    bounds = esdp.MomentBounds(mean, std, epsilon)
    assert thresholds.epsilon_robust_threshold(intervals, bounds) == pytest.approx(delay)


@pytest.mark.parametrize(
    'kwargs',
    [
        pytest.param({'mean_max': 10.0, 'std_max': 5.0, 'epsilon': 0.0}, id='epsilon-zero'),
        pytest.param({'mean_max': 10.0, 'std_max': 5.0, 'epsilon': 1.5}, id='epsilon-big'),
        pytest.param({'mean_max': -1.0, 'std_max': 5.0, 'epsilon': 0.5}, id='mean'),
    ],
)
def test_moment_bounds_rejected(kwargs):
    with pytest.raises(esdp.ValidationError):
        esdp.MomentBounds(**kwargs)


def test_parameter_intervals_rejected():
    with pytest.raises(esdp.ValidationError):
        esdp.ParameterIntervals(0.5, 0.05, 10.0)
    with pytest.raises(esdp.ValidationError):
        esdp.ParameterIntervals(3.0, 0.0, 10.0)


@pytest.mark.parametrize(
    'means, cap, delay',
    [
        pytest.param((10.0, 50.0, 100.0), None, 9600.0, id='all'),
        pytest.param((10.0, 50.0, 100.0), 2, 9000.0, id='cap-2'),
        pytest.param((10.0,), None, 600.0, id='single'),
    ],
)
def test_composition_threshold(means, cap, delay):
    assert thresholds.composition_threshold(DELTA, COST, means, cap) == pytest.approx(delay)


def test_composition_cap_matches_enumeration():
    rng = np.random.default_rng(7)
    means = list(rng.uniform(0, 100, 6))
    for cap in range(1, len(means) + 1):
        best = max(
            sum(m for bit, m in enumerate(means) if mask >> bit & 1)
            for mask in range(1, 2 ** len(means))
            if bin(mask).count('1') <= cap
        )
        assert thresholds.composition_threshold(DELTA, COST, means, cap) == pytest.approx(
            thresholds.linear_threshold(DELTA, COST, best))


def test_composition_rejects_bad_input():
    with pytest.raises(esdp.ValidationError):
        thresholds.composition_threshold(DELTA, COST, (10.0, 50.0), 3)
    with pytest.raises(esdp.ValidationError):
        thresholds.composition_threshold(DELTA, COST, ())


def test_composition_single_equals_linear():
    assert thresholds.composition_threshold(DELTA, COST, (10.0,)) == \
        thresholds.linear_threshold(DELTA, COST, 10.0)


@pytest.mark.parametrize(
    'prefix, delay',
    [
        pytest.param((10.0, 20.0, 30.0, 40.0, 50.0), 600.0, id='iid'),
        pytest.param((100.0, 110.0, 120.0), 6000.0, id='front-loaded'),
        pytest.param((10.0,), 600.0, id='single'),
    ],
)
def test_multiround_threshold(prefix, delay):
    assert thresholds.multiround_threshold(DELTA, COST, prefix) == pytest.approx(delay)


def test_multiround_iid_reduces_exactly():
    # Dyadic rewards keep every prefix sum and average exact.
    rng = np.random.default_rng(3)
    for mean in rng.integers(1, 10_000, 20) / 64:
        prefix = [mean * k for k in range(1, 9)]
        assert thresholds.multiround_threshold(DELTA, COST, prefix) == \
            thresholds.linear_threshold(DELTA, COST, mean)


def test_multiround_rejects_decreasing_prefix():
    with pytest.raises(esdp.ValidationError, match='decreases at round 3'):
        thresholds.multiround_threshold(DELTA, COST, (10.0, 20.0, 15.0))


def test_multiround_subset_threshold():
    # Best subset is the single richest round, not a prefix.
    assert thresholds.multiround_subset_threshold(DELTA, COST, (1.0, 100.0, 1.0)) == \
        pytest.approx(6000.0)
    assert thresholds.multiround_threshold(DELTA, COST, (1.0, 101.0, 102.0)) == \
        pytest.approx(60 * 50.5)


def test_multiround_subset_limit():
    with pytest.raises(esdp.ValidationError, match='at most 20 rounds'):
        thresholds.multiround_subset_threshold(DELTA, COST, [1.0] * 21)


def test_harmonic_number():
    assert thresholds.harmonic_number(1) == 1.0
    assert thresholds.harmonic_number(4) == pytest.approx(25 / 12)
    exact = sum(Fraction(1, k) for k in range(1, 1025))
    assert thresholds.harmonic_number(1024) == pytest.approx(float(exact), rel=1e-14)


def test_harmonic_number_asymptotic():
    n = thresholds.HARMONIC_DIRECT_LIMIT
    direct = thresholds.harmonic_number(n)
    asymptotic = math.log(n) + np.euler_gamma + 1 / (2 * n)
    assert direct == pytest.approx(asymptotic, rel=1e-12)
    assert thresholds.harmonic_number(n + 1) > direct


@pytest.mark.parametrize(
    'size, exponent, delay',
    [
        pytest.param(1, 0.5, 600.0, id='single-seed'),
        pytest.param(4, 0.5, 625.0, id='sqrt-cost'),
        pytest.param(4, 1.0, 312.5, id='parallel-cost'),
    ],
)
def test_grinding_threshold_exponential(size, exponent, delay):
    expected_max = thresholds.expected_max_exponential(10.0, size)
    assert thresholds.grinding_threshold(DELTA, COST, size, expected_max, exponent) == \
        pytest.approx(delay)


def test_grinding_single_seed_equals_linear():
    for alpha in (0.0, 0.5, 1.0):
        assert thresholds.grinding_threshold(DELTA, COST, 1, 10.0, alpha) == \
            thresholds.linear_threshold(DELTA, COST, 10.0)


@pytest.mark.parametrize(
    'model, size, expected',
    [
        pytest.param(esdp.Constant(10.0), 8, 10.0, id='constant'),
        pytest.param(esdp.Bounded(7.0), 8, 7.0, id='bounded'),
        pytest.param(esdp.Exponential(mean=10.0), 4, 10 * 25 / 12, id='exponential'),
        pytest.param(esdp.Empirical((0.0, 1.0)), 2, 0.75, id='empirical'),
        pytest.param(esdp.Empirical((1.0, 2.0, 3.0)), 1, 2.0, id='empirical-mean'),
    ],
)
def test_expected_max_reward(model, size, expected):
    assert thresholds.expected_max_reward(model, size) == pytest.approx(expected)


def test_expected_max_reward_quadrature():
    # Lognormal rewards go through the generic integral.
    model = esdp.Lognormal(mean=10.0, variance=100.0)
    single = thresholds.expected_max_reward(model, 1)
    double = thresholds.expected_max_reward(model, 2)

    assert single == pytest.approx(10.0)
    assert single < double < 2 * single


@pytest.mark.parametrize(
    'speedup, size, effective',
    [
        pytest.param(3.0, 8, 2, id='integer-speedup'),
        pytest.param(2.5, 8, 2, id='fractional'),
        pytest.param(1.0, 8, 1, id='no-speedup'),
        pytest.param(10.0, 4, 4, id='capped-by-g'),
    ],
)
def test_sequential_grinding_size(speedup, size, effective):
    assert thresholds.sequential_grinding_size(speedup, size) == effective


def test_abort_threshold():
    assert thresholds.abort_threshold(DELTA, COST, 10.0, 0.5) == pytest.approx(1200.0)
    assert thresholds.abort_threshold(DELTA, COST, 10.0, 0.0) == \
        thresholds.linear_threshold(DELTA, COST, 10.0)
    with pytest.raises(esdp.ValidationError):
        thresholds.abort_threshold(DELTA, COST, 10.0, 1.0)


def test_coalition_threshold():
    assert thresholds.coalition_threshold(DELTA, COST, 4, 10.0) == pytest.approx(2400.0)
    assert thresholds.coalition_threshold(DELTA, COST, 1, 10.0) == \
        thresholds.linear_threshold(DELTA, COST, 10.0)


def test_early_revelation_window():
    assert thresholds.early_revelation_window(600.0, 3.0) == pytest.approx(400.0)
    assert thresholds.early_revelation_window(600.0, 1.0) == 0.0


def test_esdp_baseline(baseline):
    report = esdp.esdp(baseline)

    assert report.requirements == {'linear': pytest.approx(600.0)}
    assert report.binding_condition == 'linear'
    assert report.secure is None


def test_esdp_defaults_reduce_to_linear(baseline):
    for reward in (esdp.Exponential(mean=10.0), esdp.Lognormal(mean=10.0, variance=4.0),
                   esdp.Empirical((5.0, 15.0)), esdp.Bounded(10.0)):
        report = esdp.esdp(baseline.replace(reward=reward))
        assert report.esdp == thresholds.linear_threshold(DELTA, COST, reward.mean)


def test_esdp_binding_condition(baseline):
    scenario = baseline.replace(
        reward=esdp.Exponential(mean=10.0),
        grinding_size=4,
        grinding_cost_exponent=0.5,
        abort_probability=0.25,
        coalition_size=2,
        protocol_means=(10.0, 50.0, 100.0),
        protocol_cap=2,
        rounds=3,
    )
    report = esdp.esdp(scenario)

    assert list(report.requirements) == [
        'linear', 'grinding', 'abort', 'coalition', 'composition', 'multiround',
        'multiround_subset',
    ]
    assert report.requirements['grinding'] == pytest.approx(625.0)
    assert report.requirements['abort'] == pytest.approx(800.0)
    assert report.requirements['coalition'] == pytest.approx(1200.0)
    assert report.binding_condition == 'composition'
    assert report.esdp == pytest.approx(9000.0)
    assert report.esdp == max(report.requirements.values())


def test_esdp_ties_resolve_to_earliest(baseline):
    # abort with p = 1/2 and a coalition of 2 both double the linear bound.
    report = esdp.esdp(baseline.replace(abort_probability=0.5, coalition_size=2))
    assert report.requirements['abort'] == report.requirements['coalition']
    assert report.binding_condition == 'abort'


def test_esdp_sequential_grinding(baseline):
    scenario = baseline.replace(
        reward=esdp.Exponential(mean=10.0), grinding_size=8, grinding_mode='sequential',
    )
    report = esdp.esdp(scenario)
    assert report.requirements['grinding'] == pytest.approx(60 * 10 * 1.5 / 2)


def test_esdp_robust_conditions(baseline):
    scenario = baseline.replace(
        reward=esdp.Bounded(100.0), speedup_max=3.0, cost_min=0.05, epsilon=0.01,
    )
    report = esdp.esdp(scenario)

    assert report.requirements['interval'] == pytest.approx(6000.0)
    assert report.requirements['epsilon'] == pytest.approx(6000.0)
    assert report.binding_condition == 'linear'


def test_esdp_interval_skipped_when_unbounded(baseline):
    scenario = baseline.replace(reward=esdp.Exponential(mean=10.0), speedup_max=4.0)
    assert 'interval' not in esdp.esdp(scenario).requirements


def test_esdp_verdict(baseline):
    assert esdp.esdp(baseline, delay=5.0).secure is False
    assert esdp.esdp(baseline, delay=600.0).secure is True


def test_esdp_notes(baseline):
    report = esdp.esdp(baseline.replace(
        reward=esdp.Exponential(mean=10.0), grinding_size=1024,
    ))
    assert any('early revelation window' in note for note in report.notes)
    assert any('grinding bound is below' in note for note in report.notes)


def test_esdp_names_failing_condition(baseline, mocker):
    mocker.patch(
        'esdp.thresholds.coalition_threshold',
        side_effect=esdp.ValidationError('boom'),
    )
    with pytest.raises(esdp.ValidationError) as exc_info:
        esdp.esdp(baseline.replace(coalition_size=2))

    assert exc_info.value.condition == 'coalition'
    assert str(exc_info.value) == 'coalition: boom'


def test_esdp_validates(baseline):
    with pytest.raises(esdp.ValidationError, match='speedup < 1'):
        esdp.esdp(baseline.with_env(speedup=0.5))


@pytest.fixture
def draws():
    rng = np.random.default_rng(2024)
    return list(zip(
        rng.uniform(1.0, 10.0, 1000),
        rng.uniform(1e-4, 1.0, 1000),
        rng.uniform(0.0, 1e4, 1000),
        rng.uniform(0.0, 1.0, 1000),
    ))


def test_reductions_to_linear(draws):
    for speedup, cost, reward, alpha in draws:
        linear = thresholds.linear_threshold(speedup, cost, reward)

        assert thresholds.grinding_threshold(speedup, cost, 1, reward, alpha) == linear
        assert thresholds.abort_threshold(speedup, cost, reward, 0.0) == linear
        assert thresholds.coalition_threshold(speedup, cost, 1, reward) == linear
        assert thresholds.composition_threshold(speedup, cost, [reward]) == linear
        assert thresholds.composition_threshold(speedup, cost, [reward], 1) == linear


def test_multiround_iid_reduces_to_linear(draws):
    # Rewards on a 1/1024 lattice keep every prefix sum and average exact.
    rng = np.random.default_rng(5)
    for (speedup, cost, _, _), rounds in zip(draws, rng.integers(1, 30, len(draws))):
        mean = float(rng.integers(0, 2 ** 24)) / 1024
        prefix = [mean * k for k in range(1, rounds + 1)]

        assert thresholds.multiround_threshold(speedup, cost, prefix) == \
            thresholds.linear_threshold(speedup, cost, mean)


def test_linear_threshold_is_homogeneous(draws):
    for speedup, cost, reward, _ in draws:
        delay = thresholds.linear_threshold(speedup, cost, reward)

        assert thresholds.linear_threshold(2 * speedup, cost, reward) == 2 * delay
        assert thresholds.linear_threshold(speedup, cost, 2 * reward) == 2 * delay
        assert thresholds.linear_threshold(speedup, 2 * cost, reward) == delay / 2


def test_thresholds_are_monotone(draws):
    for (speedup, cost, reward, alpha), (other, _, _, beta) in zip(draws, draws[1:]):
        low, high = sorted((alpha, beta))
        faster = max(speedup, other)
        slower = min(speedup, other)

        assert thresholds.linear_threshold(slower, cost, reward) <= \
            thresholds.linear_threshold(faster, cost, reward)
        assert thresholds.linear_threshold(speedup, cost, reward) <= \
            thresholds.linear_threshold(speedup, cost, reward + 1.0)
        assert thresholds.linear_threshold(speedup, cost * 2, reward) <= \
            thresholds.linear_threshold(speedup, cost, reward)
        assert thresholds.abort_threshold(speedup, cost, reward, low) <= \
            thresholds.abort_threshold(speedup, cost, reward, high)
        assert thresholds.coalition_threshold(speedup, cost, 2, reward) <= \
            thresholds.coalition_threshold(speedup, cost, 3, reward)


def test_composition_cap_matches_enumeration_up_to_twelve():
    rng = np.random.default_rng(11)
    for count in range(1, 13):
        means = list(rng.uniform(0, 100, count))
        best = [0.0] * (count + 1)
        for mask in range(1, 2 ** count):
            chosen = [m for bit, m in enumerate(means) if mask >> bit & 1]
            size = len(chosen)
            best[size] = max(best[size], math.fsum(chosen))
        for cap in range(1, count + 1):
            assert thresholds.composition_threshold(DELTA, COST, means, cap) == \
                pytest.approx(thresholds.linear_threshold(DELTA, COST, max(best[:cap + 1])))
