"""
Seeded simulation of reward paths and attack strategies.

Trials are split into chunks of ``SimConfig.chunk_size``; chunk ``k`` draws
from its own substream ``SeedSequence(seed, spawn_key=(k,))`` and results are
concatenated in chunk order, so a run is reproducible bit for bit whatever
the number of worker processes.
"""

import logging
import math
import multiprocessing
import typing as t

import attrs
import numpy as np
import pandas as pd
from scipy import stats

from .core import MarkovOU, RewardModel, Scenario, validate_scenario
from .exceptions import UnsupportedModelError, ValidationError
from .stopping import PolicyGrid, extract_decision_boundary


log = logging.getLogger(__name__)


@attrs.frozen
class SimConfig:
    """
    Args:
        trials: Number of independent trials.
        time_step: Seconds per simulation step for reward paths.
        seed: Master seed.
        confidence: Confidence level of reported intervals.
        workers: Worker processes, 1 runs in the calling process.
        chunk_size: Trials per random substream.
    """

    trials: int
    time_step: float = attrs.field(default=1.0, converter=float)
    seed: int = 0
    confidence: float = 0.99
    workers: int = 1
    chunk_size: int = 100_000

    def problems(self) -> list[str]:
        errors = []
        if self.trials < 1:
            errors.append(f'sim.trials: must be >= 1 (got {self.trials!r})')
        if not self.time_step > 0:
            errors.append(f'sim.time_step: must be > 0 (got {self.time_step!r})')
        if not 0 < self.confidence < 1:
            errors.append(f'sim.confidence: must be in (0, 1) (got {self.confidence!r})')
        if self.workers < 1:
            errors.append(f'sim.workers: must be >= 1 (got {self.workers!r})')
        if self.chunk_size < 1:
            errors.append(f'sim.chunk_size: must be >= 1 (got {self.chunk_size!r})')
        if not 0 <= self.seed < 2 ** 64:
            errors.append(f'sim.seed: must be a 64-bit unsigned integer (got {self.seed!r})')
        return errors

    def validate(self) -> 'SimConfig':
        errors = self.problems()
        if errors:
            raise ValidationError(*errors)
        return self

    @property
    def z_score(self) -> float:
        return float(stats.norm.ppf(0.5 + self.confidence / 2))


@attrs.frozen
class ProfitEstimate:
    mean: float
    std_error: float
    confidence_interval: tuple[float, float]
    positive_profit_fraction: float
    trials: int
    records: t.Optional[pd.DataFrame] = attrs.field(default=None, eq=False, repr=False)
    """Per-trial results: trial, profit, success flag and stop time."""

    def contains(self, value: float) -> bool:
        low, high = self.confidence_interval
        return low <= value <= high

    def to_dict(self):
        return {
            'mean': self.mean,
            'std_error': self.std_error,
            'confidence_interval': list(self.confidence_interval),
            'positive_profit_fraction': self.positive_profit_fraction,
            'trials': self.trials,
        }

    def write_records(self, path) -> None:
        if self.records is None:
            raise ValueError('estimate was computed without per-trial records')
        self.records.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


@attrs.frozen
class TailEstimate:
    fraction: float
    std_error: float
    confidence_interval: tuple[float, float]
    trials: int


@attrs.frozen
class OracleEstimate:
    """Sample mean of a Monte Carlo oracle, ``value`` is ``None`` without data."""

    value: t.Optional[float]
    std_error: t.Optional[float]
    trials: int
    used: int

    @property
    def insufficient(self) -> bool:
        return self.value is None

    def agrees(self, expected: float, sigmas: float = 3.0) -> bool:
        if self.value is None or self.std_error is None:
            return False
        return abs(self.value - expected) <= sigmas * self.std_error


@attrs.frozen(eq=False)
class RewardPaths:
    """Reward samples, ``values[trial, step]`` observed at ``times[step]``."""

    times: np.ndarray
    values: np.ndarray


def _generator(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def _chunks(trials: int, chunk_size: int) -> list[tuple[int, int]]:
    return [
        (index, min(chunk_size, trials - start))
        for index, start in enumerate(range(0, trials, chunk_size))
    ]


def _run(func, tasks: list, workers: int) -> list:
    if workers > 1 and len(tasks) > 1:
        log.debug('running %d chunks on %d workers', len(tasks), workers)
        with multiprocessing.Pool(min(workers, len(tasks))) as pool:
            return list(pool.imap(func, tasks))
    return [func(task) for task in tasks]


def _summarize(profits: np.ndarray, config: SimConfig,
               records: t.Optional[pd.DataFrame] = None) -> ProfitEstimate:
    trials = len(profits)
    mean = float(np.mean(profits))
    std_error = float(np.std(profits, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    half = config.z_score * std_error
    return ProfitEstimate(
        mean=mean,
        std_error=std_error,
        confidence_interval=(mean - half, mean + half),
        positive_profit_fraction=float(np.mean(profits > 0)),
        trials=trials,
        records=records,
    )


def _advance(model: RewardModel, values: np.ndarray, dt: float,
             rng: np.random.Generator) -> np.ndarray:
    if not isinstance(model, MarkovOU):
        return values
    decay, std = model.transition(dt)
    mean = model.long_run_mean + (values - model.long_run_mean) * decay
    # Reflection keeps rewards nonnegative.
    return np.abs(mean + std * rng.standard_normal(values.shape))


def _initial(model: RewardModel) -> float:
    return model.initial if isinstance(model, MarkovOU) else model.mean


def _path_chunk(task):
    model, times, seed, chunk, size = task
    rng = _generator(seed, chunk)
    if not model.is_markov:
        return model.sample(rng, size)[:, None]
    values = np.empty((size, len(times)))
    values[:, 0] = _initial(model)
    for k, dt in enumerate(np.diff(times)):
        values[:, k + 1] = _advance(model, values[:, k], dt, rng)
    return values


def simulate_reward_path(model: RewardModel, horizon: float,
                         config: SimConfig) -> RewardPaths:
    """
    Simulate ``config.trials`` reward paths over ``[0, horizon]``.

    Markov models are stepped with their exact transition every
    ``config.time_step`` seconds; distributional models have no dynamics and
    yield a single terminal sample per trial.

    Raises:
        ValidationError: Nonpositive horizon or invalid configuration.
    """
    config.validate()
    errors = model.problems()
    if not horizon > 0:
        errors.append(f'horizon: must be > 0 (got {horizon!r})')
    if errors:
        raise ValidationError(*errors)

    if model.is_markov:
        steps = max(1, math.ceil(horizon / config.time_step - 1e-9))
        times = np.minimum(np.arange(steps + 1) * config.time_step, horizon)
    else:
        times = np.array([float(horizon)])

    tasks = [(model, times, config.seed, index, size)
             for index, size in _chunks(config.trials, config.chunk_size)]
    values = np.concatenate(_run(_path_chunk, tasks, config.workers))
    return RewardPaths(times=times, values=values)


def _rollout_chunk(task):
    boundary, model, dt, seed, chunk, size = task
    rng = _generator(seed, chunk)
    done = boundary.shape[0] - 1
    deadline = boundary.shape[1] - 1

    values = np.full(size, _initial(model))
    work = np.zeros(size, dtype=np.int64)
    spent = np.zeros(size, dtype=np.int64)
    finished = np.zeros(size, dtype=bool)
    reward = np.zeros(size)
    stop = np.full(size, -1, dtype=np.int64)

    for j in range(deadline):
        if finished.all():
            break
        act = ~finished & (values >= boundary[work, j])
        work += act
        spent += act
        values = _advance(model, values, dt, rng)
        completed = act & (work == done)
        # Completion exactly at the deadline is a failure.
        if j + 1 < deadline:
            reward[completed] = values[completed]
            stop[completed] = j + 1
        finished |= completed
    return reward, spent, stop


def rollout_policy(policy: PolicyGrid, scenario: Scenario, config: SimConfig,
                   records: bool = False) -> ProfitEstimate:
    """
    Simulate an adversary following a solved policy on fresh reward paths.

    Each trial pays ``c`` per second of computing and earns the reward
    observed at completion when it finishes strictly before the deadline.

    Args:
        records: Keep per-trial results in the estimate.

    Raises:
        ValidationError: The policy was solved for another scenario or time
            step.
        StructureError: The policy is not monotone in the reward.
    """
    config.validate()
    validate_scenario(scenario)
    if policy.scenario != scenario:
        raise ValidationError('policy: solved for a different scenario')
    dt = policy.grid.time_step
    if not math.isclose(config.time_step, dt, rel_tol=1e-12):
        raise ValidationError(
            f'sim.time_step: {config.time_step!r} s does not match the grid time'
            f' step {dt!r} s'
        )

    boundary = extract_decision_boundary(policy)
    tasks = [(boundary, scenario.reward, dt, config.seed, index, size)
             for index, size in _chunks(config.trials, config.chunk_size)]
    log.info('rolling out %d trials in %d chunks', config.trials, len(tasks))
    results = _run(_rollout_chunk, tasks, config.workers)

    reward = np.concatenate([r[0] for r in results])
    spent = np.concatenate([r[1] for r in results])
    stop = np.concatenate([r[2] for r in results])
    profits = reward - spent * (scenario.env.cost_rate * dt)

    frame = None
    if records:
        success = stop >= 0
        stop_time = np.where(success, scenario.env.seed_time + stop * dt, np.nan)
        frame = pd.DataFrame({
            'trial': np.arange(len(profits)),
            'profit(USD)': profits,
            'success(bool)': success.astype(int),
            'stop_time(s)': stop_time,
        })
    return _summarize(profits, config, frame)


def _sample_chunk(task):
    model, seed, chunk, size = task
    return model.sample(_generator(seed, chunk), size)


def _sample_rewards(model: RewardModel, config: SimConfig) -> np.ndarray:
    tasks = [(model, config.seed, index, size)
             for index, size in _chunks(config.trials, config.chunk_size)]
    return np.concatenate(_run(_sample_chunk, tasks, config.workers))


def simulate_commit_attack(scenario: Scenario, delay: float, config: SimConfig,
                           records: bool = False) -> ProfitEstimate:
    """
    Simulate the commit-or-abstain strategy: always run the full evaluation
    and collect the sampled reward, profit ``V − c·T/δ`` per trial.
    """
    config.validate()
    validate_scenario(scenario)
    if isinstance(scenario.reward, MarkovOU):
        raise UnsupportedModelError(
            'markov_ou rewards need a solved policy, use rollout_policy'
        )
    cost = scenario.env.attack_cost(delay)
    profits = _sample_rewards(scenario.reward, config) - cost

    frame = None
    if records:
        env = scenario.env
        frame = pd.DataFrame({
            'trial': np.arange(len(profits)),
            'profit(USD)': profits,
            'success(bool)': np.ones(len(profits), dtype=int),
            'stop_time(s)': np.full(len(profits), env.seed_time + delay / env.speedup),
        })
    return _summarize(profits, config, frame)


def estimate_tail_probability(scenario: Scenario, delay: float,
                              config: SimConfig) -> TailEstimate:
    """
    Fraction of sampled rewards for which one full attack at ``delay`` is
    strictly profitable, with a normal-approximation confidence interval.
    """
    config.validate()
    validate_scenario(scenario)
    cost = scenario.env.attack_cost(delay)
    positive = _sample_rewards(scenario.reward, config) > cost

    trials = len(positive)
    fraction = float(np.mean(positive))
    std_error = math.sqrt(fraction * (1 - fraction) / trials)
    half = config.z_score * std_error
    return TailEstimate(
        fraction=fraction,
        std_error=std_error,
        confidence_interval=(max(0.0, fraction - half), min(1.0, fraction + half)),
        trials=trials,
    )


def _mean_estimate(samples: np.ndarray, trials: int) -> OracleEstimate:
    used = len(samples)
    if used == 0:
        return OracleEstimate(value=None, std_error=None, trials=trials, used=0)
    std_error = float(np.std(samples, ddof=1) / math.sqrt(used)) if used > 1 else 0.0
    return OracleEstimate(
        value=float(np.mean(samples)), std_error=std_error, trials=trials, used=used,
    )


def _grinding_chunk(task):
    mean, grinding_size, seed, chunk, size = task
    rng = _generator(seed, chunk)
    return rng.exponential(mean, (size, grinding_size)).max(axis=1)


def grinding_max_oracle(mean: float, grinding_size: int,
                        config: SimConfig) -> OracleEstimate:
    """Sample mean of the maximum of ``G`` i.i.d. exponential rewards."""
    config.validate()
    if mean < 0 or grinding_size < 1:
        raise ValidationError('mean must be >= 0 and grinding_size >= 1')
    if mean == 0:
        return OracleEstimate(value=0.0, std_error=0.0, trials=config.trials,
                              used=config.trials)

    rows = max(1, config.chunk_size // grinding_size)
    tasks = [(mean, grinding_size, config.seed, index, size)
             for index, size in _chunks(config.trials, rows)]
    samples = np.concatenate(_run(_grinding_chunk, tasks, config.workers))
    return _mean_estimate(samples, config.trials)


def equilibrium_empirical_check(players: int, probability: float, trials: int,
                                seed: int = 0) -> OracleEstimate:
    """
    Sample mean of ``1/K`` over draws ``K ~ Binomial(n, p)`` with ``K ≥ 1``.

    When no draw has an attacker the estimate is marked insufficient rather
    than failing.
    """
    if players < 1 or not 0 < probability <= 1 or trials < 1:
        raise ValidationError('players, trials must be >= 1 and probability in (0, 1]')
    attackers = _generator(seed, 0).binomial(players, probability, trials)
    attackers = attackers[attackers >= 1]
    estimate = _mean_estimate(1.0 / attackers, trials)
    if estimate.insufficient:
        log.warning('no draw out of %d had an attacker, p=%r too small',
                    trials, probability)
    return estimate
