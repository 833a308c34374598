"""Core types for stateless mean-field congestion games.

A game has a total agent mass, one reward per action, a resource model that
turns a mass distribution into sojourn times, and a discount family.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

INF = math.inf


class InvalidInstanceError(ValueError):
    """Raised when an instance or a mass distribution fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(str(v) for v in self.violations)
        super().__init__(text or "invalid instance")


@dataclass(frozen=True)
class Tolerances:
    kkt: float = 1e-10
    equilibrium: float = 1e-8
    bisection: float = 1e-12


DEFAULT_TOL = Tolerances()


def _vec(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Nondecreasing execution-time curve t(x) given by breakpoints.

    ``rates`` must start at 0 and be strictly increasing. Past the last
    breakpoint the curve continues with the slope of the last segment
    (flat if there is a single breakpoint).
    """

    rates: np.ndarray
    times: np.ndarray

    def __init__(self, rates, times):
        object.__setattr__(self, "rates", _vec(rates))
        object.__setattr__(self, "times", _vec(times))

    @classmethod
    def constant(cls, t: float) -> "PiecewiseLinear":
        return cls([0.0], [t])

    def problems(self) -> list[str]:
        out = []
        xs, ts = self.rates, self.times
        if xs.ndim != 1 or xs.shape != ts.shape or len(xs) == 0:
            return ["rates and times must be equal-length nonempty lists"]
        if xs[0] != 0.0:
            out.append("first breakpoint must be at rate 0")
        if np.any(np.diff(xs) <= 0):
            out.append("breakpoint rates must be strictly increasing")
        if not np.all(np.isfinite(ts)) or np.any(ts <= 0):
            out.append("times must be positive and finite")
        if np.any(np.diff(ts) < 0):
            out.append("times must be nondecreasing")
        return out

    def last_slope(self) -> float:
        if len(self.rates) < 2:
            return 0.0
        return float((self.times[-1] - self.times[-2]) / (self.rates[-1] - self.rates[-2]))

    def segment(self, x: float) -> tuple[float, float, float]:
        """Return (x0, t0, slope) of the linear piece containing x."""
        xs, ts = self.rates, self.times
        k = bisect.bisect_right(xs, x) - 1
        k = max(k, 0)
        if k >= len(xs) - 1:
            return float(xs[-1]), float(ts[-1]), self.last_slope()
        slope = (ts[k + 1] - ts[k]) / (xs[k + 1] - xs[k])
        return float(xs[k]), float(ts[k]), float(slope)

    def __call__(self, x: float) -> float:
        x0, t0, s = self.segment(x)
        return t0 + s * (x - x0)

    def pieces(self):
        """Yield (x0, x1, t0, slope) for each piece; the last has x1 = inf."""
        xs, ts = self.rates, self.times
        for k in range(len(xs) - 1):
            s = (ts[k + 1] - ts[k]) / (xs[k + 1] - xs[k])
            yield float(xs[k]), float(xs[k + 1]), float(ts[k]), float(s)
        yield float(xs[-1]), INF, float(ts[-1]), self.last_slope()


@dataclass(frozen=True, eq=False)
class ParallelConstant:
    """Independent resources with fixed execution times and supply rates."""

    exec_times: np.ndarray
    supply_rates: np.ndarray

    def __init__(self, exec_times, supply_rates):
        object.__setattr__(self, "exec_times", _vec(exec_times))
        object.__setattr__(self, "supply_rates", _vec(supply_rates))

    @property
    def n_actions(self) -> int:
        return len(self.exec_times)

    def base_times(self) -> np.ndarray:
        return np.array(self.exec_times)


@dataclass(frozen=True, eq=False)
class ParallelIncreasing:
    """Independent resources whose execution time grows with throughput."""

    curves: tuple
    supply_rates: np.ndarray

    def __init__(self, curves, supply_rates):
        object.__setattr__(self, "curves", tuple(curves))
        object.__setattr__(self, "supply_rates", _vec(supply_rates))

    @property
    def n_actions(self) -> int:
        return len(self.curves)

    def base_times(self) -> np.ndarray:
        return np.array([c(0.0) for c in self.curves])


@dataclass(frozen=True, eq=False)
class SharedTwoAction:
    """Two actions drawing on one resource: w1*x1 + w2*x2 <= supply."""

    exec_times: np.ndarray
    weights: np.ndarray
    supply: float

    def __init__(self, exec_times, weights, supply):
        object.__setattr__(self, "exec_times", _vec(exec_times))
        object.__setattr__(self, "weights", _vec(weights))
        object.__setattr__(self, "supply", float(supply))

    @property
    def n_actions(self) -> int:
        return len(self.exec_times)

    def base_times(self) -> np.ndarray:
        return np.array(self.exec_times)


ResourceModel = Union[ParallelConstant, ParallelIncreasing, SharedTwoAction]


@dataclass(frozen=True)
class Exponential:
    beta: float


@dataclass(frozen=True)
class PowerLaw:
    """Power-law discount; alpha = 0 is the undiscounted reward-rate case."""

    alpha: float


Discount = Union[Exponential, PowerLaw]


@dataclass(frozen=True, eq=False)
class GameInstance:
    total_mass: float
    rewards: np.ndarray
    resource_model: ResourceModel
    discount: Discount

    def __init__(self, total_mass, rewards, resource_model, discount):
        object.__setattr__(self, "total_mass", float(total_mass))
        object.__setattr__(self, "rewards", _vec(rewards))
        object.__setattr__(self, "resource_model", resource_model)
        object.__setattr__(self, "discount", discount)

    @property
    def n_actions(self) -> int:
        return len(self.rewards)

    def with_discount(self, discount: Discount) -> "GameInstance":
        return GameInstance(self.total_mass, self.rewards, self.resource_model, discount)

    def with_mass(self, total_mass: float) -> "GameInstance":
        return GameInstance(total_mass, self.rewards, self.resource_model, self.discount)


@dataclass(frozen=True, eq=False)
class MassDistribution:
    masses: np.ndarray
    declared_mass: float

    def __init__(self, masses, declared_mass=None):
        arr = _vec(masses)
        object.__setattr__(self, "masses", arr)
        total = float(arr.sum()) if declared_mass is None else float(declared_mass)
        object.__setattr__(self, "declared_mass", total)

    @property
    def total(self) -> float:
        return float(self.masses.sum())


@dataclass(frozen=True, eq=False)
class SojournProfile:
    """Sojourn times, throughput rates and waiting times for each action.

    For the shared model ``waits`` holds the single multiplier repeated, and
    the per-action waiting time is ``weights * waits``.
    """

    taus: np.ndarray
    rates: np.ndarray
    waits: np.ndarray

    def __init__(self, taus, rates, waits):
        object.__setattr__(self, "taus", _vec(taus))
        object.__setattr__(self, "rates", _vec(rates))
        object.__setattr__(self, "waits", _vec(waits))


@dataclass(frozen=True, eq=False)
class EquilibriumReport:
    distribution: np.ndarray
    support: tuple
    strategy: np.ndarray
    residual: float
    verdict: str
    payoffs: np.ndarray | None = None
    iterations: int = 0
    case: object = None
    notes: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        out = {
            "verdict": self.verdict,
            "distribution": [float(v) for v in self.distribution],
            "support": [int(i) for i in self.support],
            "strategy": [float(v) for v in self.strategy],
            "residual": float(self.residual),
            "iterations": int(self.iterations),
        }
        if self.payoffs is not None:
            out["payoffs"] = [float(v) for v in self.payoffs]
        if self.case is not None:
            out["case"] = self.case.to_dict() if hasattr(self.case, "to_dict") else self.case
        if self.notes:
            out["notes"] = list(self.notes)
        return out


EQUILIBRIUM = "Equilibrium"
NOT_EQUILIBRIUM = "NotEquilibrium"
NONEXISTENCE = "NonexistenceCertified"
UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


def _positive_finite(x) -> bool:
    return isinstance(x, (int, float, np.floating)) and math.isfinite(x) and x > 0


def validate_instance(instance: GameInstance) -> list[Violation]:
    """Return every violation found; an empty list means the instance is valid."""
    out: list[Violation] = []
    m = instance.total_mass
    if not (math.isfinite(m) and m >= 0):
        out.append(Violation("total_mass", "total mass must be finite and nonnegative"))
    r = instance.rewards
    n = len(r)
    if n == 0:
        out.append(Violation("rewards", "at least one action is required"))
    elif not np.all(np.isfinite(r)) or np.any(r <= 0):
        out.append(Violation("rewards", "rewards must be positive"))

    rm = instance.resource_model
    if isinstance(rm, ParallelConstant):
        if len(rm.exec_times) != n:
            out.append(Violation("resource_model.exec_times", f"expected {n} entries"))
        elif not np.all(np.isfinite(rm.exec_times)) or np.any(rm.exec_times <= 0):
            out.append(Violation("resource_model.exec_times", "execution times must be positive"))
        out.extend(_check_supply(rm.supply_rates, n))
    elif isinstance(rm, ParallelIncreasing):
        if len(rm.curves) != n:
            out.append(Violation("resource_model.curves", f"expected {n} curves"))
        for i, c in enumerate(rm.curves):
            for msg in c.problems():
                out.append(Violation(f"resource_model.curves[{i}]", msg))
        out.extend(_check_supply(rm.supply_rates, n))
    elif isinstance(rm, SharedTwoAction):
        if n != 2 or len(rm.exec_times) != 2 or len(rm.weights) != 2:
            out.append(Violation("resource_model", "SharedTwoAction requires exactly 2 actions"))
        else:
            if not np.all(np.isfinite(rm.exec_times)) or np.any(rm.exec_times <= 0):
                out.append(Violation("resource_model.exec_times", "execution times must be positive"))
            if not np.all(np.isfinite(rm.weights)) or np.any(rm.weights <= 0):
                out.append(Violation("resource_model.weights", "resource weights must be positive"))
        if not _positive_finite(rm.supply):
            out.append(Violation("resource_model.supply", "supply must be positive and finite"))
    else:
        out.append(Violation("resource_model", "unknown resource model"))

    d = instance.discount
    if isinstance(d, Exponential):
        if not _positive_finite(d.beta):
            out.append(Violation("discount.beta", "beta must be positive"))
    elif isinstance(d, PowerLaw):
        if not (math.isfinite(d.alpha) and d.alpha >= 0):
            out.append(Violation("discount.alpha", "alpha must be nonnegative"))
    else:
        out.append(Violation("discount", "unknown discount"))
    return out


def _check_supply(b, n) -> list[Violation]:
    if len(b) != n:
        return [Violation("resource_model.supply_rates", f"expected {n} entries")]
    if np.any(np.isnan(b)) or np.any(b <= 0):
        return [Violation("resource_model.supply_rates", "supply rates must be positive")]
    return []


def ensure_valid(instance: GameInstance) -> None:
    # instances are immutable, so a passing check is remembered on the object
    if instance.__dict__.get("_checked"):
        return
    problems = validate_instance(instance)
    if problems:
        raise InvalidInstanceError(problems)
    object.__setattr__(instance, "_checked", True)


def as_masses(instance: GameInstance, mu, atol: float = 1e-9) -> np.ndarray:
    """Coerce a distribution to an array and check it against the instance."""
    if isinstance(mu, MassDistribution):
        mu = mu.masses
    arr = np.array(mu, dtype=float)
    bad = []
    if arr.shape != (instance.n_actions,):
        bad.append(Violation("masses", f"expected {instance.n_actions} entries"))
    elif not np.all(np.isfinite(arr)) or np.any(arr < 0):
        bad.append(Violation("masses", "masses must be finite and nonnegative"))
    elif arr.sum() > instance.total_mass * (1 + atol) + atol:
        bad.append(Violation("masses", "total exceeds the instance mass"))
    if bad:
        raise InvalidInstanceError(bad)
    return arr


def rates_from(mu: Sequence[float], profile: SojournProfile) -> np.ndarray:
    """Throughput rates implied by Little's law, x = mu / tau."""
    return np.asarray(mu, dtype=float) / profile.taus


def strategy_from_distribution(mu: Sequence[float], profile: SojournProfile) -> np.ndarray:
    """Stationary strategy compatible with a distribution: choice shares of throughput."""
    x = rates_from(mu, profile)
    total = x.sum()
    if not total > 0:
        raise ValueError("strategy is undefined for an all-zero distribution")
    return x / total


def support_of(mu: np.ndarray) -> tuple:
    return tuple(int(i) for i in np.flatnonzero(np.asarray(mu) > 0))
