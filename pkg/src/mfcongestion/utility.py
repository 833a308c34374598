"""Discounted values of repeating actions, and schedule evaluation.

Series of the form sum (a + n)^-alpha are summed directly up to a cutoff and
the remainder is closed with an Euler-Maclaurin tail, which carries a
rigorous remainder bound because x^-alpha is completely monotone.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .game import Exponential, GameInstance, ParallelConstant, PowerLaw, SojournProfile

EXP_CUTOFF = 700.0
DIRECT_SUM_LIMIT = 2_000_000

# B_2, B_4, ..., B_12
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730)
_EM_TERMS = 5


class Diverges(ValueError):
    """The requested infinite sum does not converge (power-law exponent <= 1)."""


class PayoffUnderflowWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ZetaValue:
    value: float
    bound: float


def exp_stationary_value(r, tau, beta: float):
    """Value of repeating an action forever under exponential discounting."""
    z = beta * np.asarray(tau, dtype=float)
    big = z > EXP_CUTOFF
    if np.any(big):
        warnings.warn("beta*tau above cutoff, value saturated to 0", PayoffUnderflowWarning, stacklevel=2)
    with np.errstate(over="ignore", divide="ignore"):
        out = np.where(big, 0.0, np.asarray(r, dtype=float) / np.expm1(np.minimum(z, EXP_CUTOFF)))
    return float(out) if out.ndim == 0 else out


def rate_payoff(r, tau):
    """Reward per unit time; the payoff for power-law exponents up to 1."""
    out = np.asarray(r, dtype=float) / np.asarray(tau, dtype=float)
    return float(out) if out.ndim == 0 else out


def payoffs(instance: GameInstance, profile: SojournProfile) -> np.ndarray:
    d = instance.discount
    if isinstance(d, Exponential):
        return np.atleast_1d(exp_stationary_value(instance.rewards, profile.taus, d.beta))
    return np.atleast_1d(rate_payoff(instance.rewards, profile.taus))


def _rising(alpha: float, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= alpha + j
    return out


def _em_tail(x: float, alpha: float) -> tuple[float, float]:
    """Euler-Maclaurin estimate of sum_{n>=0} (x+n)^-alpha for x >= 1, and its bound."""
    s = x ** (1.0 - alpha) / (alpha - 1.0) + 0.5 * x ** (-alpha)
    for j in range(1, _EM_TERMS + 1):
        s += _BERNOULLI[j - 1] / math.factorial(2 * j) * _rising(alpha, 2 * j - 1) * x ** (-alpha - 2 * j + 1)
    j = _EM_TERMS + 1
    bound = abs(_BERNOULLI[j - 1]) / math.factorial(2 * j) * _rising(alpha, 2 * j - 1) * x ** (-alpha - 2 * j + 1)
    return s, bound


def hurwitz(a: float, alpha: float, rel_tol: float = 1e-10) -> ZetaValue:
    """sum_{n>=0} (a+n)^-alpha for a > 0 and alpha > 1."""
    if not alpha > 1.0:
        raise Diverges(f"sum of n^-alpha diverges for alpha = {alpha} <= 1")
    if not a > 0:
        raise ValueError("offset must be positive")
    k = 16
    while True:
        head = float(np.sum((a + np.arange(k, dtype=float)) ** (-alpha)))
        tail, bound = _em_tail(a + k, alpha)
        value = head + tail
        if bound <= rel_tol * value or k >= 1 << 20:
            return ZetaValue(value, bound + 4 * k * np.finfo(float).eps * head)
        k *= 4


def zeta(alpha: float) -> ZetaValue:
    return hurwitz(1.0, alpha)


def powerlaw_stationary_value(r: float, tau: float, alpha: float) -> ZetaValue:
    """Value of repeating an action forever with power-law exponent alpha > 1."""
    z = zeta(alpha)
    scale = r * tau ** (-alpha)
    return ZetaValue(scale * z.value, scale * z.bound)


def partial_power_sum(count: int, alpha: float) -> float:
    """sum_{n=1}^{count} n^-alpha."""
    count = int(count)
    if count <= 0:
        return 0.0
    if alpha == 0.0:
        return float(count)
    if count <= DIRECT_SUM_LIMIT:
        return float(np.sum(np.arange(1, count + 1, dtype=float) ** (-alpha)))
    k = 1000
    head = float(np.sum(np.arange(1, k, dtype=float) ** (-alpha)))
    f = lambda x: x ** (-alpha)
    if alpha == 1.0:
        integral = math.log(count / k)
    else:
        integral = (k ** (1 - alpha) - count ** (1 - alpha)) / (alpha - 1)
    s = integral + 0.5 * (f(k) + f(count))
    for j in range(1, _EM_TERMS + 1):
        c = _BERNOULLI[j - 1] / math.factorial(2 * j) * _rising(alpha, 2 * j - 1)
        s += c * (k ** (-alpha - 2 * j + 1) - count ** (-alpha - 2 * j + 1))
    return head + s


def truncated_value(r: float, tau: float, alpha: float, horizon: float) -> float:
    """Power-law value of repeating an action until a finite horizon."""
    if tau > horizon:
        return 0.0
    count = int(math.floor(horizon / tau))
    return r * tau ** (-alpha) * partial_power_sum(count, alpha)


def value_after(r: float, tau: float, alpha: float, onset: float) -> ZetaValue:
    """Power-law value of repeating an action forever, starting at time ``onset``."""
    scale = r * tau ** (-alpha)
    h = hurwitz(1.0 + onset / tau, alpha)
    return ZetaValue(scale * h.value, scale * h.bound)


@dataclass(frozen=True)
class ActionSchedule:
    """Finite prefix of (action, repeat count) blocks, then one action forever."""

    blocks: tuple
    terminal: int

    def __init__(self, blocks: Sequence[tuple[int, int]], terminal: int):
        object.__setattr__(self, "blocks", tuple((int(a), int(c)) for a, c in blocks))
        object.__setattr__(self, "terminal", int(terminal))


@dataclass(frozen=True)
class ScheduleValue:
    value: float
    bound: float
    prefix_time: float


def evaluate_schedule(schedule: ActionSchedule, taus, rewards, discount, tail_tolerance: float = 1e-10) -> ScheduleValue:
    taus = np.asarray(taus, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    elapsed = 0.0
    terms = []
    for a, count in schedule.blocks:
        if count <= 0:
            continue
        times = elapsed + taus[a] * np.arange(1, count + 1, dtype=float)
        if isinstance(discount, Exponential):
            terms.append(rewards[a] * np.exp(-discount.beta * times))
        else:
            terms.append(rewards[a] * times ** (-discount.alpha))
        elapsed = float(times[-1])
    prefix = math.fsum(np.concatenate(terms)) if terms else 0.0
    a = schedule.terminal
    if isinstance(discount, Exponential):
        tail = math.exp(-discount.beta * elapsed) * exp_stationary_value(rewards[a], taus[a], discount.beta)
        bound = 0.0
    elif isinstance(discount, PowerLaw):
        if not discount.alpha > 1:
            raise Diverges("infinite schedules need alpha > 1 under power-law discounting")
        scale = rewards[a] * taus[a] ** (-discount.alpha)
        h = hurwitz(1.0 + elapsed / taus[a], discount.alpha, rel_tol=tail_tolerance)
        tail, bound = scale * h.value, scale * h.bound
    else:
        raise TypeError("unknown discount")
    return ScheduleValue(prefix + tail, bound, elapsed)


def best_stationary_action(instance: GameInstance, profile: SojournProfile, rel_tol: float = 1e-12) -> int:
    """Action an agent would repeat forever given fixed sojourn times.

    Under power-law discounting, ties in reward rate go to the shortest
    sojourn time and then to the lowest index.
    """
    d = instance.discount
    taus = profile.taus
    if isinstance(d, Exponential):
        return int(np.argmax(exp_stationary_value(instance.rewards, taus, d.beta)))
    rate = instance.rewards / taus
    top = rate.max()
    tied = [i for i in range(len(rate)) if rate[i] >= top * (1 - rel_tol)]
    return min(tied, key=lambda i: (taus[i], i))


def bellman_value(rewards, taus, beta: float) -> float:
    """Optimal value of an agent facing fixed sojourn times, exponential discount."""
    return float(np.max(exp_stationary_value(rewards, taus, beta)))


def bellman_residual(rewards, taus, beta: float) -> float:
    v = bellman_value(rewards, taus, beta)
    rhs = np.max(np.exp(-beta * np.asarray(taus)) * (np.asarray(rewards) + v))
    return abs(v - float(rhs))


@dataclass(frozen=True)
class SwitchingCounterexample:
    instance: GameInstance
    schedule: ActionSchedule
    repeats: int
    stationary_value: float
    switching_value: float
    switching_value_series: float
    margin: float
    truncation_bound: float

    def to_dict(self) -> dict:
        return {
            "repeats": self.repeats,
            "exec_times": [float(v) for v in self.instance.resource_model.exec_times],
            "rewards": [float(v) for v in self.instance.rewards],
            "alpha": self.instance.discount.alpha,
            "stationary_value": self.stationary_value,
            "switching_value": self.switching_value,
            "switching_value_series": self.switching_value_series,
            "margin": self.margin,
            "truncation_bound": self.truncation_bound,
        }


def _repeats_for(alpha: float, eps: float) -> int:
    """Smallest N >= 2 whose zeta tail sum_{n>=N} n^-alpha is below eps."""
    tail = lambda n: hurwitz(float(n), alpha).value
    if tail(2) < eps:
        return 2
    hi = 4
    while tail(hi) >= eps:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail(mid) < eps:
            hi = mid
        else:
            lo = mid
    return hi


def build_switching_counterexample(alpha: float, eps: float, t1: float = 1.0, r1: float = 1.0,
                                   total_mass: float = 1.0) -> SwitchingCounterexample:
    """Two-action instance where a switching schedule beats every stationary one.

    Action 2 is N times slower than action 1 and its reward is scaled so that
    repeating it is slightly worse than repeating action 1. Taking action 1 N
    times and then action 2 forever still wins when eps is small enough.
    """
    if not alpha > 1:
        raise Diverges("the construction needs alpha > 1")
    z = zeta(alpha)
    limit = 1.0 - 1.0 / z.value
    if not 0 < eps < limit:
        raise ValueError(f"eps must lie in (0, {limit:.6g}) for alpha = {alpha}")
    n = _repeats_for(alpha, eps)
    t2 = n * t1
    r2 = n ** alpha * r1 - r1
    inst = GameInstance(total_mass, [r1, r2], ParallelConstant([t1, t2], [math.inf, math.inf]), PowerLaw(alpha))
    stat1 = powerlaw_stationary_value(r1, t1, alpha)
    stat2 = powerlaw_stationary_value(r2, t2, alpha)
    stationary = max(stat1.value, stat2.value)
    schedule = ActionSchedule([(0, n)], terminal=1)
    ev = evaluate_schedule(schedule, [t1, t2], [r1, r2], PowerLaw(alpha))
    series = r1 * t1 ** (-alpha) * partial_power_sum(n, alpha) + r2 * t2 ** (-alpha) * (z.value - 1.0)
    bound = ev.bound + max(stat1.bound, stat2.bound) + r2 * t2 ** (-alpha) * z.bound
    return SwitchingCounterexample(inst, schedule, n, stationary, ev.value, series, ev.value - stationary, bound)
