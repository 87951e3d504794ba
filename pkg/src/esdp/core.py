import math
import typing as t

import attrs
import numpy as np
from scipy import stats

from .exceptions import ValidationError


def _floats(values: t.Iterable[t.Any]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def _finite(errors: list[str], name: str, value: float) -> bool:
    if not math.isfinite(value):
        errors.append(f'{name}: must be a finite number (got {value!r})')
        return False
    return True


@attrs.frozen
class EconomicEnvironment:
    """
    Adversary and protocol timing: hardware speedup ``speedup`` (δ), cost
    rate ``cost_rate`` in USD per second of adversarial running time (c),
    honest evaluation delay ``honest_delay`` in seconds (T) and the time the
    round seed becomes known ``seed_time`` (t0).
    """

    speedup: float = attrs.field(converter=float)
    cost_rate: float = attrs.field(converter=float)
    honest_delay: float = attrs.field(converter=float)
    seed_time: float = attrs.field(default=0.0, converter=float)

    @property
    def deadline(self) -> float:
        """Time the honest evaluator publishes the output, ``t0 + T``."""
        return self.seed_time + self.honest_delay

    def attack_cost(self, delay: t.Optional[float] = None) -> float:
        """Cost of one full adversarial evaluation, ``c·T/δ``."""
        if delay is None:
            delay = self.honest_delay
        return self.cost_rate * delay / self.speedup

    def problems(self) -> list[str]:
        errors: list[str] = []
        if _finite(errors, 'env.speedup', self.speedup) and self.speedup < 1:
            errors.append(f'env.speedup: speedup < 1 (got {self.speedup!r})')
        if _finite(errors, 'env.cost_rate', self.cost_rate) and self.cost_rate <= 0:
            errors.append(f'env.cost_rate: cost_rate must be > 0 (got {self.cost_rate!r})')
        if (_finite(errors, 'env.honest_delay', self.honest_delay)
                and self.honest_delay <= 0):
            errors.append(
                f'env.honest_delay: honest_delay must be > 0 (got {self.honest_delay!r})'
            )
        _finite(errors, 'env.seed_time', self.seed_time)
        return errors


@attrs.frozen
class RewardModel:
    """
    Base of the per-round reward descriptions. Subclasses describe either a
    distribution of the reward ``V`` or a Markov process ``(V_t)``.
    """

    kind: t.ClassVar[str] = ''
    is_markov: t.ClassVar[bool] = False

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def upper_bound(self) -> t.Optional[float]:
        """Almost sure bound on the reward, ``None`` when unbounded."""
        return None

    def distribution(self) -> t.Any:
        """Frozen :mod:`scipy.stats` distribution, when one describes the model."""
        return None

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict[str, t.Any]:
        """Model parameters keyed by their scenario-file names."""
        return attrs.asdict(self)

    def problems(self) -> list[str]:
        errors: list[str] = []
        for name, value in self.params().items():
            for v in (value if isinstance(value, tuple) else (value,)):
                if _finite(errors, f'reward.{name}', v) and v < 0:
                    errors.append(f'reward.{name}: must be >= 0 (got {v!r})')
                    break
        return errors


@attrs.frozen
class Constant(RewardModel):
    kind = 'constant'
    is_markov = True

    value: float = attrs.field(converter=float)

    @property
    def mean(self) -> float:
        return self.value

    @property
    def variance(self) -> float:
        return 0.0

    @property
    def upper_bound(self) -> t.Optional[float]:
        return self.value

    def sample(self, rng, size):
        return np.full(size, self.value)


@attrs.frozen
class Exponential(RewardModel):
    kind = 'exponential'

    mean_value: float = attrs.field(converter=float, alias='mean')

    @property
    def mean(self) -> float:
        return self.mean_value

    @property
    def variance(self) -> float:
        return self.mean_value ** 2

    def distribution(self):
        return stats.expon(scale=self.mean_value)

    def params(self):
        return {'mean': self.mean_value}

    def sample(self, rng, size):
        return rng.exponential(self.mean_value, size)


@attrs.frozen
class Lognormal(RewardModel):
    kind = 'lognormal'

    mean_value: float = attrs.field(converter=float, alias='mean')
    variance_value: float = attrs.field(converter=float, alias='variance')

    @property
    def mean(self) -> float:
        return self.mean_value

    @property
    def variance(self) -> float:
        return self.variance_value

    @property
    def log_params(self) -> tuple[float, float]:
        """Location and scale of ``log V``."""
        sigma2 = math.log1p(self.variance_value / self.mean_value ** 2)
        return math.log(self.mean_value) - sigma2 / 2, math.sqrt(sigma2)

    def distribution(self):
        mu, sigma = self.log_params
        return stats.lognorm(s=sigma, scale=math.exp(mu))

    def params(self):
        return {'mean': self.mean_value, 'variance': self.variance_value}

    def problems(self):
        errors = super().problems()
        if not errors:
            if self.variance_value <= 0:
                errors.append('reward.variance: lognormal variance must be > 0')
            if self.mean_value <= 0:
                errors.append('reward.mean: lognormal mean must be > 0')
        return errors

    def sample(self, rng, size):
        mu, sigma = self.log_params
        return rng.lognormal(mu, sigma, size)


@attrs.frozen
class Empirical(RewardModel):
    kind = 'empirical'

    samples: tuple[float, ...] = attrs.field(converter=_floats)

    @property
    def mean(self) -> float:
        return math.fsum(self.samples) / len(self.samples)

    @property
    def variance(self) -> float:
        return float(np.var(self.samples))

    @property
    def upper_bound(self) -> t.Optional[float]:
        return max(self.samples)

    def problems(self):
        if not self.samples:
            return ['reward.samples: empirical model requires at least 1 sample']
        return super().problems()

    def sample(self, rng, size):
        return rng.choice(np.asarray(self.samples), size)


@attrs.frozen
class Bounded(RewardModel):
    """
    Only an almost sure bound is known. Moments and sampling use the worst
    case, a point mass at ``max``.
    """

    kind = 'bounded'

    max: float = attrs.field(converter=float)

    @property
    def mean(self) -> float:
        return self.max

    @property
    def variance(self) -> float:
        return 0.0

    @property
    def upper_bound(self) -> t.Optional[float]:
        return self.max

    def sample(self, rng, size):
        return np.full(size, self.max)


@attrs.frozen
class MarkovOU(RewardModel):
    """
    Mean-reverting reward process ``dV = κ(θ − V)dt + σ dW`` reflected at 0.

    Its distributional view (``mean``, ``variance``, ``sample``) is the
    stationary law of the unreflected process folded at 0.
    """

    kind = 'markov_ou'
    is_markov = True

    initial: float = attrs.field(converter=float)
    long_run_mean: float = attrs.field(converter=float)
    reversion_rate: float = attrs.field(converter=float)
    volatility: float = attrs.field(converter=float)

    @property
    def stationary_std(self) -> float:
        return self.volatility / math.sqrt(2 * self.reversion_rate)

    def transition(self, dt: float) -> tuple[float, float]:
        """
        Decay factor ``e^{−κ dt}`` and standard deviation of the exact one-step
        Gaussian transition (before reflection).
        """
        decay = math.exp(-self.reversion_rate * dt)
        var = -math.expm1(-2 * self.reversion_rate * dt) / (2 * self.reversion_rate)
        return decay, self.volatility * math.sqrt(var)

    def conditional_mean(self, v, dt: float):
        decay, _ = self.transition(dt)
        return self.long_run_mean + (v - self.long_run_mean) * decay

    def distribution(self):
        std = self.stationary_std
        if std == 0:
            return None
        return stats.foldnorm(c=self.long_run_mean / std, scale=std)

    @property
    def mean(self) -> float:
        dist = self.distribution()
        return self.long_run_mean if dist is None else float(dist.mean())

    @property
    def variance(self) -> float:
        dist = self.distribution()
        return 0.0 if dist is None else float(dist.var())

    def problems(self):
        errors = super().problems()
        if not errors and self.reversion_rate <= 0:
            errors.append('reward.reversion_rate: must be > 0')
        return errors

    def sample(self, rng, size):
        return np.abs(rng.normal(self.long_run_mean, self.stationary_std, size))


REWARD_MODELS: dict[str, type[RewardModel]] = {
    m.kind: m for m in (Constant, Exponential, Lognormal, Empirical, Bounded, MarkovOU)
}

GRINDING_MODES = ('parallel', 'sequential')


@attrs.frozen
class Scenario:
    """
    Economic environment, reward model and attack surface of one beacon.

    Defaults describe an adversary with no extra leverage; every extended
    security condition then reduces to the linear one.
    """

    env: EconomicEnvironment
    reward: RewardModel
    grinding_size: int = 1
    grinding_cost_exponent: float = attrs.field(default=1.0, converter=float)
    grinding_mode: str = 'parallel'
    abort_probability: float = attrs.field(default=0.0, converter=float)
    protocol_means: tuple[float, ...] = attrs.field(default=(), converter=_floats)
    protocol_cap: t.Optional[int] = None
    coalition_size: int = 1
    players: int = 1
    rounds: int = 1
    round_means: tuple[float, ...] = attrs.field(default=(), converter=_floats)
    speedup_max: t.Optional[float] = None
    cost_min: t.Optional[float] = None
    epsilon: t.Optional[float] = None

    def replace(self, **changes) -> 'Scenario':
        return attrs.evolve(self, **changes)

    def with_env(self, **changes) -> 'Scenario':
        return attrs.evolve(self, env=attrs.evolve(self.env, **changes))

    def problems(self) -> list[str]:
        errors = self.env.problems() + self.reward.problems()

        for name in ('grinding_size', 'coalition_size', 'players', 'rounds'):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                errors.append(f'attack.{name}: must be a positive integer (got {value!r})')

        alpha = self.grinding_cost_exponent
        if _finite(errors, 'attack.grinding_cost_exponent', alpha) and not 0 <= alpha <= 1:
            errors.append(f'attack.grinding_cost_exponent: must be in [0, 1] (got {alpha!r})')
        if self.grinding_mode not in GRINDING_MODES:
            errors.append(
                f'attack.grinding_mode: must be one of {", ".join(GRINDING_MODES)}'
                f' (got {self.grinding_mode!r})'
            )

        p = self.abort_probability
        if _finite(errors, 'attack.abort_probability', p):
            if p < 0:
                errors.append(f'attack.abort_probability: must be >= 0 (got {p!r})')
            elif p >= 1:
                errors.append(
                    f'attack.abort_probability: abort_probability must be < 1 (got {p!r})'
                )

        for name in ('protocol_means', 'round_means'):
            for v in getattr(self, name):
                if _finite(errors, f'attack.{name}', v) and v < 0:
                    errors.append(f'attack.{name}: must be >= 0 (got {v!r})')
                    break

        k = self.protocol_cap
        if k is not None:
            if not isinstance(k, int) or k < 1:
                errors.append(f'attack.protocol_cap: must be a positive integer (got {k!r})')
            elif k > len(self.protocol_means):
                errors.append(
                    f'attack.protocol_cap: cap {k} exceeds the number of protocols'
                    f' ({len(self.protocol_means)})'
                )

        if self.round_means and len(self.round_means) != self.rounds:
            errors.append(
                f'attack.round_means: expected {self.rounds} values'
                f' (got {len(self.round_means)})'
            )

        if self.speedup_max is not None:
            if (_finite(errors, 'robust.speedup_max', self.speedup_max)
                    and self.speedup_max < self.env.speedup):
                errors.append('robust.speedup_max: must be >= env.speedup')
        if self.cost_min is not None:
            if _finite(errors, 'robust.cost_min', self.cost_min) and not (
                    0 < self.cost_min <= self.env.cost_rate):
                errors.append('robust.cost_min: must be in (0, env.cost_rate]')
        if self.epsilon is not None:
            if _finite(errors, 'robust.epsilon', self.epsilon) and not 0 < self.epsilon <= 1:
                errors.append(f'robust.epsilon: must be in (0, 1] (got {self.epsilon!r})')

        return errors


@attrs.frozen
class ThresholdReport:
    """
    Required delay per security condition. ``esdp`` is the largest of them
    and ``binding_condition`` names the condition attaining it.
    """

    requirements: dict[str, float]
    speedup: float
    binding_condition: str = attrs.field(init=False)
    esdp: float = attrs.field(init=False)
    delay: t.Optional[float] = None
    notes: tuple[str, ...] = ()

    def __attrs_post_init__(self):
        if not self.requirements:
            raise ValidationError('requirements: at least one condition is needed')
        binding = max(self.requirements, key=self.requirements.__getitem__)
        object.__setattr__(self, 'binding_condition', binding)
        object.__setattr__(self, 'esdp', self.requirements[binding])

    @property
    def secure(self) -> t.Optional[bool]:
        """Verdict at ``delay``, ``None`` when no delay was evaluated."""
        if self.delay is None:
            return None
        return self.delay >= self.esdp

    def declaration(self) -> str:
        return (
            f'Assuming adversarial speedup δ ≤ {self.speedup:g}, the delay'
            f' parameter T must satisfy T ≥ {self.esdp:.6g} s to maintain'
            f' economic security (binding condition: {self.binding_condition}).'
        )

    def to_dict(self) -> dict[str, t.Any]:
        return {
            'requirements': dict(self.requirements),
            'binding_condition': self.binding_condition,
            'esdp': self.esdp,
            'delay': self.delay,
            'secure': self.secure,
            'declaration': self.declaration(),
            'notes': list(self.notes),
        }


def validate_scenario(scenario: Scenario) -> Scenario:
    """
    Check every invariant of the scenario and its parts.

    Returns:
        The scenario itself, unchanged.

    Raises:
        ValidationError: Lists each violated invariant by field name.
    """
    errors = scenario.problems()
    if errors:
        raise ValidationError(*errors)
    return scenario
