"""
Symmetric ``n``-player attack game.

Every player attacks independently with probability ``p``; among the ``K``
attackers one wins the reward and all pay ``c·T/δ``.
"""

import logging
import math

import attrs
import numpy as np
from scipy import optimize, stats

from .exceptions import ValidationError
from .thresholds import linear_threshold


log = logging.getLogger(__name__)

# Below this the pmf is evaluated directly, above it in log space.
LOG_SPACE_PLAYERS = 500
BISECTION_LOWER = 1e-12
BISECTION_TOLERANCE = 1e-12

NO_ATTACK = 'no-attack'
INTERIOR = 'interior'
SATURATED = 'saturated'


@attrs.frozen
class EquilibriumResult:
    attack_probability: float
    players: int
    per_attacker_profit: float
    """Expected profit of an attacker at ``p*``, zero for interior equilibria."""
    regime: str
    residual: float = 0.0

    @property
    def expected_attackers(self) -> float:
        return self.players * self.attack_probability

    def to_dict(self):
        return {
            **attrs.asdict(self),
            'expected_attackers': self.expected_attackers,
        }


def attacker_payoff(attackers: int, expected_reward: float, cost_rate: float,
                    delay: float, speedup: float) -> float:
    """Expected profit of each of ``k`` attackers, ``E[V]/k − c·T/δ``."""
    if attackers < 1:
        raise ValidationError(f'attackers: must be >= 1 (got {attackers!r})')
    return expected_reward / attackers - cost_rate * delay / speedup


def conditional_inverse_expectation(players: int, probability: float) -> float:
    """
    ``E[1/K | K ≥ 1]`` for ``K ~ Binomial(n, p)``: the share of the reward an
    attacker expects given that it attacks.
    """
    if players < 1:
        raise ValidationError(f'players: must be >= 1 (got {players!r})')
    if not 0 < probability <= 1:
        raise ValidationError(
            f'probability: must be in (0, 1] (got {probability!r})'
        )
    if players == 1:
        return 1.0

    k = np.arange(1, players + 1)
    if players > LOG_SPACE_PLAYERS:
        pmf = np.exp(stats.binom.logpmf(k, players, probability))
    else:
        pmf = stats.binom.pmf(k, players, probability)
    # P(K >= 1) = 1 - (1 - p)^n, accurate for tiny p
    if probability == 1:
        at_least_one = 1.0
    else:
        at_least_one = -math.expm1(players * math.log1p(-probability))
    return float(np.sum(pmf / k) / at_least_one)


def equilibrium_attack_probability(players: int, expected_reward: float,
                                   cost_rate: float, delay: float,
                                   speedup: float) -> EquilibriumResult:
    """
    Symmetric mixed-strategy equilibrium of the attack game.

    Solves ``E[1/K | K ≥ 1]·E[V] = c·T/δ`` for ``p`` by bisection. When the
    reward does not exceed the cost nobody attacks (ties included); when even
    universal attack stays profitable every player attacks.

    Raises:
        ValidationError: Invalid game parameters.
    """
    if players < 1:
        raise ValidationError(f'players: must be >= 1 (got {players!r})')
    if expected_reward < 0 or cost_rate <= 0 or delay < 0 or speedup < 1:
        raise ValidationError(
            'expected_reward, delay must be >= 0, cost_rate > 0, speedup >= 1'
        )

    cost = cost_rate * delay / speedup

    if expected_reward <= cost:
        return EquilibriumResult(
            attack_probability=0.0,
            players=players,
            per_attacker_profit=expected_reward - cost,
            regime=NO_ATTACK,
        )

    def excess(p):
        return conditional_inverse_expectation(players, p) * expected_reward - cost

    saturated = excess(1.0)
    if saturated >= 0:
        return EquilibriumResult(
            attack_probability=1.0,
            players=players,
            per_attacker_profit=saturated,
            regime=SATURATED,
        )

    # excess decreases in p: positive near 0, negative at 1
    if excess(BISECTION_LOWER) <= 0:
        p = BISECTION_LOWER
    else:
        p = optimize.bisect(excess, BISECTION_LOWER, 1.0, xtol=BISECTION_TOLERANCE)
    residual = excess(p)
    log.debug('equilibrium n=%d: p*=%r residual=%r', players, p, residual)
    return EquilibriumResult(
        attack_probability=p,
        players=players,
        per_attacker_profit=0.0,
        regime=INTERIOR,
        residual=residual,
    )


def strict_dominance_delay(speedup: float, cost_rate: float,
                           expected_reward: float) -> float:
    """
    Delay from which not attacking strictly dominates attacking for any
    number of players.
    """
    return linear_threshold(speedup, cost_rate, expected_reward)
