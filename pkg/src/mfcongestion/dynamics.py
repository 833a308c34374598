"""Projection dynamics for two-action games.

Mass flows toward the better action at a speed equal to the payoff gap,
and the flow is clipped so the state stays in [0, m].
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .game import Exponential, GameInstance, InvalidInstanceError, SharedTwoAction, Violation, ensure_valid
from .sojourn import solve_sojourn
from .utility import payoffs

STABLE, UNSTABLE, MARGINAL = "Stable", "Unstable", "Marginal"
TRACE_HEADER = ("t", "mu1", "mu2", "drift", "F1", "F2", "SW")


class SlackConstraintError(ValueError):
    """The shared resource is not saturated, so its waiting time is flat in mu1."""


def require_two_actions(instance: GameInstance) -> None:
    ensure_valid(instance)
    if instance.n_actions != 2:
        raise InvalidInstanceError([Violation("rewards", "dynamics need exactly 2 actions")])


def _state(instance, mu1):
    m = instance.total_mass
    mu1 = min(max(float(mu1), 0.0), m)
    mu = np.array([mu1, m - mu1])
    prof = solve_sojourn(instance, mu)
    return mu, prof, payoffs(instance, prof)


def raw_drift(instance: GameInstance, mu1: float) -> float:
    """Payoff gap F1 - F2 before clipping."""
    _, _, F = _state(instance, mu1)
    return float(F[0] - F[1])


def clip_drift(gap: float, mu1: float, m: float) -> float:
    if mu1 <= 0.0:
        return max(gap, 0.0)
    if mu1 >= m:
        return min(gap, 0.0)
    return gap


def drift(instance: GameInstance, mu1: float) -> float:
    require_two_actions(instance)
    return clip_drift(raw_drift(instance, mu1), mu1, instance.total_mass)


@dataclass(frozen=True, eq=False)
class Trace:
    t: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    drift: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    SW: np.ndarray

    def rows(self):
        return zip(self.t, self.mu1, self.mu2, self.drift, self.F1, self.F2, self.SW)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in self.rows():
            w.writerow([format(float(v), ".17g") for v in row])
        return buf.getvalue()


def default_step(instance: GameInstance) -> float:
    return 1e-3 * float(np.max(instance.resource_model.base_times()))


def integrate(instance: GameInstance, mu1_start: float, step: float | None = None,
              t_end: float | None = None, record_every: int = 1) -> Trace:
    """Forward Euler on the clipped dynamics, clamping the state into [0, m]."""
    require_two_actions(instance)
    m = instance.total_mass
    if not 0.0 <= mu1_start <= m:
        raise InvalidInstanceError([Violation("mu1", f"start must lie in [0, {m}]")])
    h = default_step(instance) if step is None else float(step)
    if t_end is None:
        t_end = 200.0 * float(np.max(instance.resource_model.base_times()))
    n_steps = int(math.ceil(t_end / h - 1e-9))
    rows = []
    mu1 = float(mu1_start)
    for k in range(n_steps + 1):
        mu, prof, F = _state(instance, mu1)
        d = clip_drift(float(F[0] - F[1]), mu1, m)
        if k % record_every == 0 or k == n_steps:
            sw = float(np.dot(instance.rewards, prof.rates))
            rows.append((k * h, mu[0], mu[1], d, F[0], F[1], sw))
        mu1 = min(max(mu1 + h * d, 0.0), m)
    cols = np.array(rows).T
    return Trace(*cols)


@dataclass(frozen=True)
class RestPoint:
    location: float
    kind: str
    stability: str
    derivative: float

    def to_dict(self) -> dict:
        return {"mu1": self.location, "kind": self.kind, "stability": self.stability,
                "derivative": self.derivative}


def classify_stability(instance: GameInstance, mu1: float) -> tuple[str, float]:
    """Stability of a rest point, with the slope used to decide it.

    Interior points use a central difference of the payoff gap. At a
    boundary the sign of the gap just inside decides whether the flow
    pushes back toward the boundary.
    """
    require_two_actions(instance)
    m = instance.total_mass
    h = 1e-6 * m
    if mu1 <= 0.0:
        g = raw_drift(instance, h)
        return (STABLE if g < 0 else UNSTABLE if g > 0 else MARGINAL), g
    if mu1 >= m:
        g = raw_drift(instance, m - h)
        return (STABLE if g > 0 else UNSTABLE if g < 0 else MARGINAL), g
    lo, hi = max(mu1 - h, 0.0), min(mu1 + h, m)
    slope = (raw_drift(instance, hi) - raw_drift(instance, lo)) / (hi - lo)
    if slope < -1e-6:
        return STABLE, slope
    if slope > 1e-6:
        return UNSTABLE, slope
    return MARGINAL, slope


def _bisect_root(instance, a, b, ga, width):
    while b - a > width:
        mid = 0.5 * (a + b)
        g = raw_drift(instance, mid)
        if g == 0.0:
            return mid
        if (g > 0) == (ga > 0):
            a, ga = mid, g
        else:
            b = mid
    return 0.5 * (a + b)


def find_rest_points(instance: GameInstance, grid_n: int = 512, width: float = 1e-10,
                     merge: float = 1e-8) -> list[RestPoint]:
    """Scan the payoff gap on a grid, bisect sign changes, and check both boundaries.

    A run of grid nodes where the gap is exactly zero is reported once, at its
    middle node.
    """
    require_two_actions(instance)
    m = instance.total_mass
    grid = np.linspace(0.0, m, grid_n + 1)
    gaps = [raw_drift(instance, x) for x in grid]
    found = []
    if gaps[0] <= 0:
        found.append((0.0, "Boundary"))
    if gaps[-1] >= 0:
        found.append((m, "Boundary"))
    k = 1
    while k < grid_n:
        if gaps[k] == 0.0:
            j = k
            while j + 1 < grid_n and gaps[j + 1] == 0.0:
                j += 1
            found.append((float(grid[(k + j) // 2]), "Interior"))
            k = j + 1
            continue
        k += 1
    for k in range(grid_n):
        ga, gb = gaps[k], gaps[k + 1]
        if ga != 0.0 and gb != 0.0 and (ga > 0) != (gb > 0):
            found.append((_bisect_root(instance, grid[k], grid[k + 1], ga, width), "Interior"))
    found.sort(key=lambda p: (p[0], p[1] != "Boundary"))
    out: list[RestPoint] = []
    for x, kind in found:
        if out and abs(x - out[-1].location) <= merge:
            continue
        stab, slope = classify_stability(instance, x)
        out.append(RestPoint(float(x), kind, stab, float(slope)))
    return out


def _shared_state(instance, mu1):
    rm = instance.resource_model
    if not isinstance(rm, SharedTwoAction):
        raise TypeError("needs the shared two-action resource model")
    mu, prof, F = _state(instance, mu1)
    w = float(prof.waits[0] / rm.weights[0])
    return rm, mu, prof, F, w


def analytic_drift_derivative(instance: GameInstance, mu1: float, allow_slack: bool = False) -> float:
    """d(F1 - F2)/d mu1 on the shared model while the resource is saturated.

    The waiting multiplier w is defined implicitly by the saturated capacity
    equation; differentiating it gives dw/dmu1, and each sojourn time moves
    by its weight times dw.
    """
    ensure_valid(instance)
    rm, mu, prof, F, w = _shared_state(instance, mu1)
    if w <= 0.0:
        if allow_slack:
            return 0.0
        raise SlackConstraintError("resource not saturated: sojourn times are constant, derivative is 0")
    g, tau, r = rm.weights, prof.taus, instance.rewards
    dw = (g[0] / tau[0] - g[1] / tau[1]) / (g[0] ** 2 * mu[0] / tau[0] ** 2 + g[1] ** 2 * mu[1] / tau[1] ** 2)
    d = instance.discount
    if isinstance(d, Exponential):
        e = np.exp(d.beta * tau)
        dF_dtau = -r * d.beta * e / np.expm1(d.beta * tau) ** 2
    else:
        dF_dtau = -r / tau ** 2
    dF = dF_dtau * g * dw
    return float(dF[0] - dF[1])


@dataclass(frozen=True)
class UnstableCheck:
    certified: bool
    base_condition: bool
    equilibrium_condition: bool
    payoffs_equal: bool
    saturated: bool
    payoff_gap: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _gap_weight(x):
    # e^x / (e^x - 1), the payoff's log-sensitivity to its sojourn time up to beta
    return -1.0 / math.expm1(-x)


def check_unstable_conditions(instance: GameInstance, mu1: float, tol: float = 1e-8) -> UnstableCheck:
    """Sufficient conditions for an interior rest point to repel.

    ``base_condition`` is the parameter-only test that bounds each sojourn
    time below by its execution time. ``equilibrium_condition`` applies the
    same sign comparison at the actual sojourn times, which the base test
    implies. Certification uses the latter together with equal payoffs and
    a saturated resource.
    """
    ensure_valid(instance)
    d = instance.discount
    if not isinstance(d, Exponential):
        raise TypeError("instability certificate is for exponential discount")
    rm, mu, prof, F, w = _shared_state(instance, mu1)
    beta = d.beta
    t, g, tau = rm.exec_times, rm.weights, prof.taus
    ratio, t_ratio = g[0] / g[1], t[0] / t[1]
    base = (ratio > t_ratio and ratio < -math.expm1(-beta * t[0])) or \
           (ratio < t_ratio and ratio > _gap_weight(beta * t[1]))
    lhs, rhs = g[0] * _gap_weight(beta * tau[0]), g[1] * _gap_weight(beta * tau[1])
    at_eq = (ratio > t_ratio and lhs < rhs) or (ratio < t_ratio and lhs > rhs)
    gap = float(F[0] - F[1])
    equal = abs(gap) <= tol
    saturated = rm.supply < g[0] * mu[0] / t[0] + g[1] * mu[1] / t[1]
    return UnstableCheck(bool(at_eq and equal and saturated), bool(base), bool(at_eq), bool(equal),
                         bool(saturated), gap)


def vector_field(instance: GameInstance, n: int = 65) -> list[tuple[float, float]]:
    require_two_actions(instance)
    return [(float(x), drift(instance, float(x))) for x in np.linspace(0.0, instance.total_mass, n)]
