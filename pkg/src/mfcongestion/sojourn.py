"""Steady-state sojourn times from a mass distribution.

Each resource model maps masses to throughput rates, waiting times and
sojourn times so that Little's law holds and waiting only builds up on
saturated resources.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import (
    INF,
    GameInstance,
    InvalidInstanceError,
    ParallelConstant,
    ParallelIncreasing,
    PiecewiseLinear,
    SharedTwoAction,
    SojournProfile,
    Violation,
    as_masses,
    ensure_valid,
)


def solve_parallel_constant(instance: GameInstance, mu) -> SojournProfile:
    rm = instance.resource_model
    mu = as_masses(instance, mu)
    t, b = rm.exec_times, rm.supply_rates
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.maximum(t, np.where(np.isinf(b), 0.0, mu / b))
    return SojournProfile(tau, mu / tau, tau - t)


def _increasing_one(curve: PiecewiseLinear, b: float, mu: float) -> tuple[float, float, float]:
    """(tau, x, w) for one action with a throughput-dependent execution time."""
    if mu <= 0.0:
        return curve(0.0), 0.0, 0.0
    if math.isfinite(b):
        tb = curve(b)
        if mu >= b * tb:
            tau = mu / b
            return tau, b, max(tau - tb, 0.0)
    # x*t(x) is strictly increasing, so the root sits in the first piece whose
    # right end carries enough mass; inside a piece the equation is quadratic.
    for x0, x1, t0, s in curve.pieces():
        if x1 != INF and x1 * (t0 + s * (x1 - x0)) < mu:
            continue
        a = t0 - s * x0
        if s == 0.0:
            x = mu / a
        elif a >= 0.0:
            x = 2.0 * mu / (a + math.sqrt(a * a + 4.0 * s * mu))
        else:
            x = (-a + math.sqrt(a * a + 4.0 * s * mu)) / (2.0 * s)
        x = min(max(x, x0), x1)
        if math.isfinite(b):
            x = min(x, b)
        tau = curve(x)
        return tau, x, 0.0
    raise AssertionError("unreachable: last piece is unbounded")


def solve_parallel_increasing(instance: GameInstance, mu) -> SojournProfile:
    rm = instance.resource_model
    mu = as_masses(instance, mu)
    out = [_increasing_one(c, float(b), float(m)) for c, b, m in zip(rm.curves, rm.supply_rates, mu)]
    tau, x, w = (np.array(v) for v in zip(*out))
    return SojournProfile(tau, x, w)


def shared_load(rm: SharedTwoAction, mu1: float, mu2: float, w: float) -> float:
    t, g = rm.exec_times, rm.weights
    return g[0] * mu1 / (t[0] + g[0] * w) + g[1] * mu2 / (t[1] + g[1] * w)


def shared_multiplier(rm: SharedTwoAction, mu1: float, mu2: float) -> float:
    """Common waiting multiplier w for the shared resource, found by bisection."""
    b = rm.supply
    if shared_load(rm, mu1, mu2, 0.0) <= b:
        return 0.0
    hi = float(max(rm.exec_times))
    while shared_load(rm, mu1, mu2, hi) > b:
        hi *= 2.0
    lo = 0.0
    # Run to machine precision; that is far inside the 1e-12 width target and
    # keeps finite differences of w clean.
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if shared_load(rm, mu1, mu2, mid) > b:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _shared_profile(rm: SharedTwoAction, mu1: float, mu2: float) -> SojournProfile:
    w = shared_multiplier(rm, mu1, mu2)
    waits = rm.weights * w
    tau = rm.exec_times + waits
    return SojournProfile(tau, np.array([mu1, mu2]) / tau, waits)


def solve_shared_two_action(instance: GameInstance, mu1: float) -> SojournProfile:
    """Profile of the shared two-action model with mu2 = m - mu1."""
    m = instance.total_mass
    if not (0.0 <= mu1 <= m * (1 + 1e-12)):
        raise InvalidInstanceError([Violation("mu1", f"mu1 must lie in [0, {m}]")])
    mu1 = min(float(mu1), m)
    return _shared_profile(instance.resource_model, mu1, m - mu1)


def solve_sojourn(instance: GameInstance, mu) -> SojournProfile:
    """Dispatch on the resource model. ``mu`` may total less than the mass."""
    ensure_valid(instance)
    rm = instance.resource_model
    if isinstance(rm, ParallelConstant):
        return solve_parallel_constant(instance, mu)
    if isinstance(rm, ParallelIncreasing):
        return solve_parallel_increasing(instance, mu)
    mu = as_masses(instance, mu)
    return _shared_profile(rm, float(mu[0]), float(mu[1]))


def base_profile(instance: GameInstance) -> SojournProfile:
    """Profile at zero mass, where every sojourn time equals its base execution time."""
    return solve_sojourn(instance, np.zeros(instance.n_actions))


@dataclass(frozen=True)
class KktResidual:
    littles_law: float
    decomposition: float
    feasibility: float
    slackness: float

    def max(self) -> float:
        return max(self.littles_law, self.decomposition, self.feasibility, self.slackness)

    def ok(self, tol: float = 1e-8) -> bool:
        return self.max() <= tol

    def to_dict(self) -> dict:
        return {
            "littles_law": self.littles_law,
            "decomposition": self.decomposition,
            "feasibility": self.feasibility,
            "slackness": self.slackness,
        }


def _slack_products(w, room):
    out = []
    for wi, ri in zip(w, room):
        if math.isinf(ri):
            out.append(0.0 if wi == 0 else INF)
        else:
            out.append(abs(wi * ri))
    return max(out) if out else 0.0


def kkt_residual(instance: GameInstance, mu, profile: SojournProfile) -> KktResidual:
    """Residuals of Little's law, the sojourn decomposition, feasibility and slackness."""
    rm = instance.resource_model
    mu = np.asarray(mu, dtype=float)
    tau, x, w = profile.taus, profile.rates, profile.waits
    little = float(np.max(np.abs(mu - x * tau)))
    neg = float(max(np.max(-x), np.max(-w), 0.0))
    if isinstance(rm, SharedTwoAction):
        g = rm.weights
        mult = float(w[0] / g[0])
        decomp = float(np.max(np.abs(tau - rm.exec_times - g * mult)))
        room = rm.supply - float(g @ x)
        feas = max(-room, neg)
        slack = abs(mult * room)
    else:
        b = rm.supply_rates
        if isinstance(rm, ParallelConstant):
            base = rm.exec_times
        else:
            base = np.array([c(xi) for c, xi in zip(rm.curves, x)])
        decomp = float(np.max(np.abs(tau - base - w)))
        feas = max(float(np.max(x - b)), neg, 0.0)
        slack = _slack_products(w, b - x)
    return KktResidual(little, decomp, max(feas, 0.0), float(slack))


def mass_interval(instance: GameInstance, i: int, tau: float) -> tuple[float, float]:
    """Masses on parallel action i whose sojourn time equals tau.

    Returns (lo, hi). Both are 0 when tau is below the base time (the action
    is unattractive at that level) and hi may be inf when the action never
    slows down past tau.
    """
    rm = instance.resource_model
    b = float(rm.supply_rates[i])
    if isinstance(rm, ParallelConstant):
        t = float(rm.exec_times[i])
        if tau < t:
            return 0.0, 0.0
        if tau == t:
            return 0.0, b * t
        return (b * tau, b * tau) if math.isfinite(b) else (INF, INF)
    if isinstance(rm, ParallelIncreasing):
        return _increasing_interval(rm.curves[i], b, tau)
    raise TypeError("mass_interval needs a parallel resource model")


def _increasing_interval(curve: PiecewiseLinear, b: float, tau: float) -> tuple[float, float]:
    t0 = curve(0.0)
    if tau < t0:
        return 0.0, 0.0
    tb = curve(b) if math.isfinite(b) else INF
    if tau > tb:
        return b * tau, b * tau
    # rates where t(x) == tau form an interval [xl, xh] (flat pieces)
    xl = xh = None
    for x0, x1, c0, s in curve.pieces():
        c1 = c0 + s * (x1 - x0) if x1 != INF else (INF if s > 0 else c0)
        if c1 < tau:
            continue
        if c0 > tau:
            break
        if s == 0.0:
            lo_here, hi_here = x0, x1
        else:
            lo_here = hi_here = x0 + (tau - c0) / s
        xl = lo_here if xl is None else xl
        xh = hi_here
    if xl is None:
        return INF, INF
    if math.isfinite(b):
        xl, xh = min(xl, b), min(xh, b)
        if tau == tb:
            return xl * tau, b * tau
    return xl * tau, xh * tau
