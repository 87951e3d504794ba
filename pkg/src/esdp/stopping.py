"""
Backward induction for the adversary's compute/idle problem.

State is the remaining honest-time work ``s``, the current reward ``v`` and
time ``t``. The work axis is induced by the dynamics: computing for one time
step removes ``δ·dt`` of work, so ``s_i = T − i·δ·dt`` (clipped at 0) and the
compute action maps grid points to grid points. Arrays are indexed
``[work, reward, time]``; work index ``i`` counts compute steps already done,
so ``i = 0`` is a fresh evaluation and the last index is completion.
"""

import logging
import math
import typing as t

import attrs
import numpy as np
import pandas as pd
from numpy.polynomial import hermite_e
from scipy import stats

from .core import Constant, MarkovOU, Scenario, validate_scenario
from .exceptions import StructureError, UnsupportedModelError, ValidationError


log = logging.getLogger(__name__)

SCHEMES = ('cdf', 'hermite')
# Relative tolerance for dt dividing the honest delay.
STEP_TOLERANCE = 1e-9
# Values closer than this (USD) are a tie, which computing wins.
TIE_TOLERANCE = 1e-9


@attrs.frozen
class GridSpec:
    """
    Discretization of the state space.

    Args:
        time_step: Seconds per backward-induction step.
        reward_points: Number of reward grid points.
        reward_max: Top of the reward axis, transitions beyond are clamped.
            Defaults to 10× the mean plus 5 standard deviations for constant
            rewards. For mean-reverting rewards the axis reaches 6 standard
            deviations of the reward at the deadline above the larger of the
            initial and long-run values. Linear interpolation on a coarse
            axis overstates ``J``, refine ``reward_points`` before reading
            small margins.
        quadrature_nodes: Gauss–Hermite nodes for the ``hermite`` scheme.
        scheme: ``cdf`` integrates the exact reflected Gaussian transition over
            the reward cells, ``hermite`` uses quadrature nodes with linear
            interpolation.
    """

    time_step: float = attrs.field(converter=float)
    reward_points: int = 101
    reward_max: t.Optional[float] = None
    quadrature_nodes: int = 7
    scheme: str = 'cdf'

    def problems(self, delay: float, speedup: float) -> list[str]:
        errors = []
        if not self.time_step > 0:
            errors.append(f'grid.time_step: must be > 0 (got {self.time_step!r})')
        else:
            steps = delay / self.time_step
            if abs(steps - round(steps)) > STEP_TOLERANCE * max(1.0, steps):
                errors.append(
                    f'grid.time_step: {self.time_step!r} s does not divide the'
                    f' honest delay {delay!r} s'
                )
            if self.time_step * speedup > delay:
                errors.append(
                    'grid.time_step: grid too coarse, one compute step'
                    f' (δ·dt = {self.time_step * speedup!r}) exceeds the delay'
                )
        if self.reward_points < 2:
            errors.append(f'grid.reward_points: must be >= 2 (got {self.reward_points!r})')
        if self.reward_max is not None and not self.reward_max >= 0:
            errors.append(f'grid.reward_max: must be >= 0 (got {self.reward_max!r})')
        if self.quadrature_nodes < 1:
            errors.append(
                f'grid.quadrature_nodes: must be >= 1 (got {self.quadrature_nodes!r})'
            )
        if self.scheme not in SCHEMES:
            errors.append(f'grid.scheme: must be one of {", ".join(SCHEMES)}')
        return errors


def default_reward_max(scenario: Scenario) -> float:
    reward = scenario.reward
    if isinstance(reward, MarkovOU):
        _, spread = reward.transition(scenario.env.honest_delay)
        return max(reward.initial, reward.long_run_mean) + 6 * spread
    return 10 * reward.mean + 5 * reward.std


@attrs.frozen(eq=False)
class _Axes:
    work: np.ndarray
    rewards: np.ndarray
    times: np.ndarray

    @property
    def deadline_index(self) -> int:
        return len(self.times) - 1

    @property
    def done_index(self) -> int:
        return len(self.work) - 1


@attrs.frozen(eq=False)
class ValueGrid(_Axes):
    """Solved value function ``J(s, v, t)`` in USD."""

    values: np.ndarray
    grid: GridSpec
    scenario: Scenario

    def initial_value(self, reward: t.Optional[float] = None) -> float:
        """``J(T, v0, t0)``, linearly interpolated in ``v``."""
        if reward is None:
            reward = _initial_reward(self.scenario)
        return float(np.interp(reward, self.rewards, self.values[0, :, 0]))

    def to_frame(self, policy: t.Optional['PolicyGrid'] = None) -> pd.DataFrame:
        i, q, j = np.meshgrid(
            np.arange(len(self.work)),
            np.arange(len(self.rewards)),
            np.arange(len(self.times)),
            indexing='ij',
        )
        frame = pd.DataFrame({
            's(s)': self.work[i.ravel()],
            'v(USD)': self.rewards[q.ravel()],
            't(s)': self.times[j.ravel()],
            'J(USD)': self.values.ravel(),
        })
        if policy is not None:
            frame['compute(bool)'] = policy.compute.ravel().astype(int)
        return frame


@attrs.frozen(eq=False)
class PolicyGrid(_Axes):
    """
    Optimal action per state, ``True`` where computing is weakly better than
    idling (the acceptance region).
    """

    compute: np.ndarray
    scenario: Scenario
    grid: GridSpec


def _initial_reward(scenario: Scenario) -> float:
    reward = scenario.reward
    return reward.initial if isinstance(reward, MarkovOU) else reward.mean


def _interpolation_matrix(points: np.ndarray, weights: np.ndarray,
                          rewards: np.ndarray) -> np.ndarray:
    """
    Row ``p`` holds the weights expressing ``Σ_k w_k·f(points[p, k])`` as a
    combination of ``f`` on the reward grid, with linear interpolation and
    clamping at both ends.
    """
    size = len(rewards)
    x = np.clip(points, rewards[0], rewards[-1])
    upper = np.clip(np.searchsorted(rewards, x, side='right'), 1, size - 1)
    lower = upper - 1
    span = rewards[upper] - rewards[lower]
    frac = np.divide(x - rewards[lower], span, out=np.zeros_like(x), where=span > 0)

    matrix = np.zeros((size, size))
    rows = np.broadcast_to(np.arange(size)[:, None], x.shape)
    np.add.at(matrix, (rows, lower), weights * (1 - frac))
    np.add.at(matrix, (rows, upper), weights * frac)
    return matrix


def _transition_matrix(scenario: Scenario, grid: GridSpec,
                       rewards: np.ndarray) -> np.ndarray:
    """Row-stochastic one-step reward transition on the reward grid."""
    reward = scenario.reward
    if isinstance(reward, Constant):
        return np.eye(len(rewards))

    assert isinstance(reward, MarkovOU)
    mean = reward.conditional_mean(rewards, grid.time_step)
    _, std = reward.transition(grid.time_step)

    if std == 0:
        return _interpolation_matrix(np.abs(mean)[:, None], np.ones(1), rewards)

    if grid.scheme == 'hermite':
        nodes, weights = hermite_e.hermegauss(grid.quadrature_nodes)
        weights = weights / math.sqrt(2 * math.pi)
        points = np.abs(mean[:, None] + std * nodes[None, :])
        return _interpolation_matrix(points, weights, rewards)

    # Mass of the reflected Gaussian on each cell around a grid point, the
    # last cell absorbing everything above the grid.
    edges = np.concatenate([[0.0], (rewards[1:] + rewards[:-1]) / 2, [np.inf]])
    m = mean[:, None]
    cdf = (stats.norm.cdf((edges[None, :] - m) / std)
           - stats.norm.cdf((-edges[None, :] - m) / std))
    cdf[:, 0] = 0.0
    cdf[:, -1] = 1.0
    return np.diff(cdf, axis=1)


def _axes(scenario: Scenario, grid: GridSpec) -> _Axes:
    env = scenario.env
    steps = int(round(env.honest_delay / grid.time_step))
    stride = env.speedup * grid.time_step
    work_steps = math.ceil(env.honest_delay / stride - STEP_TOLERANCE)
    work = np.maximum(env.honest_delay - stride * np.arange(work_steps + 1), 0.0)
    work[-1] = 0.0

    reward_max = grid.reward_max
    if reward_max is None:
        reward_max = default_reward_max(scenario)
    rewards = np.linspace(0.0, reward_max, grid.reward_points)
    times = env.seed_time + grid.time_step * np.arange(steps + 1)
    return _Axes(work=work, rewards=rewards, times=times)


def solve(scenario: Scenario, grid: GridSpec) -> tuple[ValueGrid, PolicyGrid]:
    """
    Solve the Bellman recursion backwards from the honest deadline.

    The candidate delay is ``scenario.env.honest_delay``. At every step
    ``J_comp = −c·dt + E[J(s − δ·dt, V', t + dt)]`` and
    ``J_idle = E[J(s, V', t + dt)]``; computing wins ties.

    Raises:
        UnsupportedModelError: The reward model is not a Markov process.
        ValidationError: Invalid scenario or grid.
    """
    validate_scenario(scenario)
    if not scenario.reward.is_markov:
        raise UnsupportedModelError(
            f'{scenario.reward.kind} rewards are not supported by the dynamic'
            ' programming solver, use constant or markov_ou'
        )
    errors = grid.problems(scenario.env.honest_delay, scenario.env.speedup)
    if isinstance(scenario.reward, MarkovOU) and grid.reward_max == 0:
        errors.append('grid.reward_max: must be > 0 for markov_ou rewards')
    if errors:
        raise ValidationError(*errors)

    axes = _axes(scenario, grid)
    transition = _transition_matrix(scenario, grid, axes.rewards)
    step_cost = scenario.env.cost_rate * grid.time_step
    done, deadline = axes.done_index, axes.deadline_index

    shape = (len(axes.work), len(axes.rewards), len(axes.times))
    log.info('solving %s grid, %d work x %d reward x %d time points',
             scenario.reward.kind, *shape)

    values = np.zeros(shape)
    compute = np.zeros(shape, dtype=bool)
    # Completion before the deadline pays the current reward; everything
    # at or after the deadline is worth nothing.
    values[done, :, :deadline] = axes.rewards[:, None]

    for j in range(deadline - 1, -1, -1):
        expected = values[:, :, j + 1] @ transition.T
        idle = expected[:-1]
        comp = expected[1:] - step_cost
        compute[:-1, :, j] = comp >= idle - TIE_TOLERANCE
        values[:-1, :, j] = np.maximum(comp, idle)

    value_grid = ValueGrid(
        work=axes.work, rewards=axes.rewards, times=axes.times,
        values=values, grid=grid, scenario=scenario,
    )
    policy_grid = PolicyGrid(
        work=axes.work, rewards=axes.rewards, times=axes.times,
        compute=compute, scenario=scenario, grid=grid,
    )
    return value_grid, policy_grid



@attrs.frozen
class SecurityVerdict:
    rewards: np.ndarray = attrs.field(eq=False)
    values: np.ndarray = attrs.field(eq=False)
    secure: np.ndarray = attrs.field(eq=False)
    tolerance: float
    flip_reward: t.Optional[float]
    """Smallest grid reward at which the verdict changes, if it does."""

    @property
    def secure_everywhere(self) -> bool:
        return bool(self.secure.all())


def security_tolerance(scenario: Scenario, grid: GridSpec) -> float:
    """Discretization floor for ``J ≤ 0``: one time step of cost."""
    return scenario.env.cost_rate * grid.time_step


def initial_security_verdict(value_grid: ValueGrid) -> SecurityVerdict:
    """
    Judge the round secure for each initial reward on the grid, secure when
    ``J(T, v, t0)`` does not exceed :func:`security_tolerance`.
    """
    tolerance = security_tolerance(value_grid.scenario, value_grid.grid)
    values = value_grid.values[0, :, 0]
    secure = values <= tolerance

    flip = np.flatnonzero(secure[1:] != secure[:-1])
    flip_reward = float(value_grid.rewards[flip[0] + 1]) if len(flip) else None
    return SecurityVerdict(
        rewards=value_grid.rewards,
        values=values,
        secure=secure,
        tolerance=tolerance,
        flip_reward=flip_reward,
    )


@attrs.frozen
class StructureReport:
    violations: tuple[tuple[float, float, float], ...]
    """``(s, v, t)`` of every idle state lying above a compute state in ``v``."""
    checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


def _violation_mask(compute: np.ndarray) -> np.ndarray:
    seen = np.logical_or.accumulate(compute, axis=1)
    return seen & ~compute


def check_threshold_structure(policy: PolicyGrid) -> StructureReport:
    """
    Verify that the acceptance region is monotone in the reward: once
    computing is optimal at some ``v`` it stays optimal for every larger ``v``.
    """
    mask = _violation_mask(policy.compute)
    violations = tuple(
        (float(policy.work[i]), float(policy.rewards[q]), float(policy.times[j]))
        for i, q, j in zip(*np.nonzero(mask))
    )
    if violations:
        log.warning('%d states violate reward monotonicity of the policy',
                    len(violations))
    return StructureReport(violations=violations, checked=policy.compute.size)


def extract_decision_boundary(policy: PolicyGrid) -> np.ndarray:
    """
    Smallest grid reward at which computing is optimal, per ``(s, t)``.

    Returns:
        Array indexed ``[work, time]``; ``inf`` where computing is never
        optimal, 0 for completed work before the deadline.

    Raises:
        StructureError: The policy is not monotone in the reward.
    """
    if _violation_mask(policy.compute).any():
        raise StructureError(
            'policy is not monotone in the reward, run check_threshold_structure'
        )
    compute = policy.compute
    first = np.argmax(compute, axis=1)
    boundary = np.where(compute.any(axis=1), policy.rewards[first], np.inf)
    boundary[policy.done_index, :policy.deadline_index] = 0.0
    return boundary


def boundary_frame(policy: PolicyGrid, boundary: np.ndarray) -> pd.DataFrame:
    i, j = np.meshgrid(
        np.arange(len(policy.work)), np.arange(len(policy.times)), indexing='ij',
    )
    return pd.DataFrame({
        's(s)': policy.work[i.ravel()],
        't(s)': policy.times[j.ravel()],
        'v_star(USD)': boundary.ravel(),
    })
