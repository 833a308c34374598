"""Stationary equilibria: verification, closed forms, and an iterative solver."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .game import (
    DEFAULT_TOL,
    EQUILIBRIUM,
    INF,
    NONEXISTENCE,
    NOT_EQUILIBRIUM,
    UNKNOWN,
    EquilibriumReport,
    Exponential,
    GameInstance,
    ParallelConstant,
    ParallelIncreasing,
    PowerLaw,
    SharedTwoAction,
    as_masses,
    ensure_valid,
    support_of,
)
from .sojourn import mass_interval, solve_sojourn
from .utility import exp_stationary_value, payoffs

log = logging.getLogger(__name__)


def payoff_vector(instance: GameInstance, mu):
    """Payoffs at a distribution, with the sojourn profile they came from."""
    profile = solve_sojourn(instance, mu)
    return payoffs(instance, profile), profile


def _strategy(mu, taus):
    x = np.asarray(mu) / taus
    s = x.sum()
    return x / s if s > 0 else np.zeros_like(x)


def verify_equilibrium(instance: GameInstance, mu, tol: float = DEFAULT_TOL.equilibrium) -> EquilibriumReport:
    """Largest payoff gain any supported action leaves on the table.

    Under power-law discounting with exponent above 1, ties in reward rate
    must also be resolved toward the shortest sojourn time, so a supported
    action that is slower than a tied alternative counts against the residual.
    """
    ensure_valid(instance)
    mu = as_masses(instance, mu)
    F, prof = payoff_vector(instance, mu)
    support = support_of(mu)
    top = float(F.max())
    residual = max((top - F[i] for i in support), default=0.0)
    d = instance.discount
    if isinstance(d, PowerLaw) and d.alpha > 1 and support:
        tied = [j for j in range(len(F)) if F[j] >= top - tol]
        fastest = min(prof.taus[j] for j in tied)
        residual = max(residual, max(prof.taus[i] - fastest for i in support))
    residual = max(float(residual), 0.0)
    notes = []
    mass_ok = abs(mu.sum() - instance.total_mass) <= tol * max(1.0, instance.total_mass)
    if not mass_ok:
        notes.append("distribution does not carry the full mass")
    verdict = EQUILIBRIUM if residual <= tol and mass_ok else NOT_EQUILIBRIUM
    return EquilibriumReport(mu, support, _strategy(mu, prof.taus), residual, verdict, payoffs=F, notes=tuple(notes))


@dataclass(frozen=True)
class CaseLabel:
    """Which closed-form regime produced an equilibrium.

    ``index`` counts actions from 1 in order of decreasing attractiveness:
    actions before it are saturated and it is the marginal action. When
    ``saturated`` is true the marginal action is saturated too.
    """

    index: int
    saturated: bool

    def to_dict(self) -> dict:
        return {"index": self.index, "saturated": self.saturated}


def _strict_order(values: np.ndarray, what: str) -> np.ndarray:
    order = np.argsort(-values, kind="stable")
    if np.any(np.diff(values[order]) >= 0):
        raise ValueError(f"closed form needs strictly ordered {what}; found a tie")
    return order


def _bisect_increasing(fn, target: float, lo: float, hi: float) -> float:
    """Root of a nondecreasing fn(x) = target; hi may be inf and is grown."""
    if math.isinf(hi):
        width = max(abs(lo), 1.0)
        while fn(lo + width) < target:
            width *= 2.0
        hi = lo + width
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid


def _finish(instance, mu_sorted, order, case, tol):
    mu = np.empty_like(mu_sorted)
    mu[order] = mu_sorted
    rep = verify_equilibrium(instance, mu, tol)
    return EquilibriumReport(rep.distribution, rep.support, rep.strategy, rep.residual, rep.verdict,
                             payoffs=rep.payoffs, case=case, notes=rep.notes)


def solve_constant_exponential(instance: GameInstance, tol: float = DEFAULT_TOL.equilibrium) -> EquilibriumReport:
    """Closed-form equilibrium for constant execution times, exponential discount.

    Actions are ranked by their uncongested value. Mass fills them in that
    order: each action first runs at its execution time, and once saturated
    its sojourn time grows until its value drops to the next action's level.
    """
    ensure_valid(instance)
    rm, d = instance.resource_model, instance.discount
    if not isinstance(rm, ParallelConstant) or not isinstance(d, Exponential):
        raise TypeError("needs ParallelConstant resources and exponential discount")
    beta, m = d.beta, instance.total_mass
    base_value = instance.rewards / np.expm1(beta * rm.exec_times)
    order = _strict_order(base_value, "uncongested values")
    t, r, b = rm.exec_times[order], instance.rewards[order], rm.supply_rates[order]
    inv = np.expm1(beta * t) / r  # reciprocal of each uncongested value
    n = len(t)
    budget = beta * m

    log_r = np.log(r)

    def load(log_level: float, upto: int) -> float:
        # beta * mass held by saturated actions 0..upto-1 at value exp(-log_level);
        # kept in logs because deep congestion pushes the level past float range
        return float(sum(b[k] * np.logaddexp(0.0, log_r[k] + log_level) for k in range(upto)))

    mu = np.zeros(n)
    log_inv = np.log(inv)
    for i in range(n):
        lower = load(log_inv[i], i)
        upper = load(log_inv[i + 1], i + 1) if i + 1 < n else INF
        if i > 0 and not lower < budget:
            continue
        if budget > upper:
            continue
        if budget <= lower + beta * b[i] * t[i]:
            for k in range(i):
                mu[k] = b[k] * np.logaddexp(0.0, log_r[k] + log_inv[i]) / beta
            mu[i] = max(m - mu[:i].sum(), 0.0)
            return _finish(instance, mu, order, CaseLabel(i + 1, False), tol)
        hi = log_inv[i + 1] if i + 1 < n else INF
        level = _bisect_increasing(lambda f: load(f, i + 1), budget, log_inv[i], hi)
        for k in range(i + 1):
            mu[k] = b[k] * np.logaddexp(0.0, log_r[k] + level) / beta
        return _finish(instance, mu, order, CaseLabel(i + 1, True), tol)
    raise AssertionError("case thresholds do not cover the mass")


def solve_constant_powerlaw(instance: GameInstance, tol: float = DEFAULT_TOL.equilibrium) -> EquilibriumReport:
    """Closed-form equilibrium for constant execution times and reward-rate payoffs."""
    ensure_valid(instance)
    rm, d = instance.resource_model, instance.discount
    if not isinstance(rm, ParallelConstant) or not isinstance(d, PowerLaw):
        raise TypeError("needs ParallelConstant resources and power-law discount")
    if d.alpha > 1:
        raise ValueError("reward-rate closed form covers exponents up to 1")
    m = instance.total_mass
    rate = instance.rewards / rm.exec_times
    order = _strict_order(rate, "reward rates")
    t, r, b, q = rm.exec_times[order], instance.rewards[order], rm.supply_rates[order], rate[order]
    n = len(t)
    held = lambda level, upto: float(sum(b[k] * r[k] / level for k in range(upto)))

    mu = np.zeros(n)
    for i in range(n):
        lower = held(q[i], i)
        upper = held(q[i + 1], i + 1) if i + 1 < n else INF
        if (i > 0 and not lower < m) or m > upper:
            continue
        if m <= lower + b[i] * t[i]:
            for k in range(i):
                mu[k] = b[k] * r[k] / q[i]
            mu[i] = max(m - mu[:i].sum(), 0.0)
            return _finish(instance, mu, order, CaseLabel(i + 1, False), tol)
        weight = float(np.sum(r[: i + 1] * b[: i + 1]))
        mu[: i + 1] = m * r[: i + 1] * b[: i + 1] / weight
        return _finish(instance, mu, order, CaseLabel(i + 1, True), tol)
    raise AssertionError("case thresholds do not cover the mass")


def _level_sojourn(instance: GameInstance, i: int, level: float) -> float:
    r = instance.rewards[i]
    d = instance.discount
    if isinstance(d, Exponential):
        return math.log1p(r / level) / d.beta
    return r / level


def _level_interval(instance: GameInstance, i: int, level: float) -> tuple[float, float]:
    """Masses on parallel action i whose payoff equals ``level``."""
    rm = instance.resource_model
    t0 = float(rm.base_times()[i])
    top = float(payoffs_at(instance, i, t0))
    if level > top:
        return 0.0, 0.0
    tau = t0 if level == top else max(_level_sojourn(instance, i, level), t0)
    return mass_interval(instance, i, tau)


def payoffs_at(instance: GameInstance, i: int, tau: float) -> float:
    d = instance.discount
    if isinstance(d, Exponential):
        return exp_stationary_value(instance.rewards[i], tau, d.beta)
    return instance.rewards[i] / tau


def water_fill(instance: GameInstance) -> np.ndarray:
    """Equilibrium of a parallel model by bisection on the common payoff level.

    Each action's payoff falls as its mass grows, so for a level c the masses
    that keep action i at payoff c form an interval. The level is moved until
    those intervals can hold exactly the total mass.
    """
    rm = instance.resource_model
    if not isinstance(rm, (ParallelConstant, ParallelIncreasing)):
        raise TypeError("water filling needs a parallel resource model")
    n, m = instance.n_actions, instance.total_mass
    if m == 0:
        return np.zeros(n)
    lows = lambda c: np.array([_level_interval(instance, i, c)[0] for i in range(n)])
    highs = lambda c: np.array([_level_interval(instance, i, c)[1] for i in range(n)])
    hi = max(payoffs_at(instance, i, float(rm.base_times()[i])) for i in range(n))
    full = [payoffs(instance, solve_sojourn(instance, m * np.eye(n)[i]))[i] for i in range(n)]
    lo = max(min(full), 1e-300)
    while highs(lo).sum() < m:
        lo *= 0.5
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if highs(mid).sum() < m:
            hi = mid
        elif lows(mid).sum() > m:
            lo = mid
        else:
            lo = hi = mid
            break
    base, cap = lows(hi), highs(lo)
    if not np.all(np.isfinite(base)):
        base = np.where(np.isfinite(base), base, 0.0)
    room = cap - base
    deficit = m - base.sum()
    if deficit < 0:
        return base * (m / base.sum())
    open_ended = np.isinf(room)
    if open_ended.any():
        return base + np.where(open_ended, deficit / open_ended.sum(), 0.0)
    if room.sum() > 0:
        return base + room * (deficit / room.sum())
    return base * (m / base.sum())


def _raw_gap(instance, mu1):
    m = instance.total_mass
    F, _ = payoff_vector(instance, [mu1, m - mu1])
    return F[0] - F[1]


def _polish_two_action(instance, mu1, radius):
    """Bisection for equal payoffs in a window around mu1 that widens until it brackets a root."""
    m = instance.total_mass
    radius = max(radius, 1e-9 * max(m, 1.0))
    while True:
        lo, hi = max(mu1 - radius, 0.0), min(mu1 + radius, m)
        glo, ghi = _raw_gap(instance, lo), _raw_gap(instance, hi)
        if glo == 0:
            return lo
        if ghi == 0:
            return hi
        if (glo > 0) != (ghi > 0):
            break
        if lo == 0.0 and hi == m:
            return None
        radius *= 2.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        g = _raw_gap(instance, mid)
        if g == 0:
            return mid
        if (g > 0) == (glo > 0):
            lo, glo = mid, g
        else:
            hi = mid


def _clean(mu, m):
    out = np.where(mu < 1e-12 * max(m, 1.0), 0.0, mu)
    out[np.argmax(out)] += m - out.sum()
    return out


def solve_fixed_point(instance: GameInstance, step: float = 0.2, max_iters: int = 100_000,
                      tol: float = DEFAULT_TOL.equilibrium, init=None, patience: int = 200) -> EquilibriumReport:
    """Damped best response, finished by an exact equal-payoff solve.

    A fixed step chatters around interior equilibria instead of settling.
    Once the residual is small or stops improving, parallel models are
    finished by water filling and the shared model by a bracketed bisection
    around the iterate.
    """
    ensure_valid(instance)
    n, m = instance.n_actions, instance.total_mass
    mu = np.full(n, m / n) if init is None else as_masses(instance, init).copy()
    best, stall, k = INF, 0, 0
    rep = None
    for k in range(1, max_iters + 1):
        F, _ = payoff_vector(instance, mu)
        top = F.max()
        tied = F >= top - 1e-12 * abs(top)
        mu = (1 - step) * mu + step * np.where(tied, m / tied.sum(), 0.0)
        rep = verify_equilibrium(instance, _clean(mu, m), tol)
        if rep.residual <= tol:
            break
        if rep.residual < 0.5 * best:
            best, stall = rep.residual, 0
        else:
            stall += 1
            if stall > patience:
                break
    if rep is None:
        rep = verify_equilibrium(instance, mu, tol)
    # A small residual can still sit far from the equilibrium where payoffs
    # are flat, so the exact solve runs even after the iteration converged.
    rm = instance.resource_model
    if isinstance(rm, SharedTwoAction):
        if rep.residual <= tol:
            return _with(rep, iterations=k)
        root = _polish_two_action(instance, float(mu[0]), 4 * step * m)
        cand = None if root is None else np.array([root, m - root])
    else:
        cand = water_fill(instance)
    if cand is not None:
        polished = verify_equilibrium(instance, cand, tol)
        if polished.residual <= tol:
            return _with(polished, iterations=k, notes=("finished by equal-payoff solve",))
        if rep.residual > tol:
            rep = polished
    if rep.residual <= tol:
        return _with(rep, iterations=k)
    log.info("fixed point did not converge: residual %.3g", rep.residual)
    return _with(rep, iterations=k, verdict=UNKNOWN)


def _with(rep: EquilibriumReport, **kw) -> EquilibriumReport:
    fields = dict(distribution=rep.distribution, support=rep.support, strategy=rep.strategy,
                  residual=rep.residual, verdict=rep.verdict, payoffs=rep.payoffs,
                  iterations=rep.iterations, case=rep.case, notes=rep.notes)
    fields.update(kw)
    return EquilibriumReport(**fields)


def detect_nonexistence_two_action(instance: GameInstance) -> EquilibriumReport:
    """Enumerate the only possible equilibria of a two-action game with exponent above 1.

    Only three shapes can be equilibria: everything on action 1, everything
    on action 2, or a split with equal reward rates and equal sojourn times.
    The last one needs equal rewards. If the first two fail too, no
    stationary equilibrium exists.
    """
    ensure_valid(instance)
    rm, d = instance.resource_model, instance.discount
    if not (isinstance(rm, ParallelConstant) and rm.n_actions == 2 and isinstance(d, PowerLaw) and d.alpha > 1):
        raise TypeError("needs two ParallelConstant actions and power-law exponent above 1")
    r = instance.rewards
    if r[0] == r[1]:
        raise ValueError("equal rewards admit split equilibria; the certificate does not apply")
    m = instance.total_mass
    notes = []
    for i, name in ((0, "all on action 1"), (1, "all on action 2")):
        mu = np.zeros(2)
        mu[i] = m
        rep = verify_equilibrium(instance, mu, tol=0.0)
        if rep.verdict == EQUILIBRIUM:
            return _with(rep, notes=(f"{name} is an equilibrium",))
        notes.append(f"{name} fails by {rep.residual:.6g}")
    notes.append("a split needs equal rewards, which do not hold")
    nan = np.full(2, np.nan)
    return EquilibriumReport(nan, (), nan, INF, NONEXISTENCE, notes=tuple(notes))


def find_equilibria(instance: GameInstance, tol: float = DEFAULT_TOL.equilibrium) -> list[EquilibriumReport]:
    """Pick the right solver for the instance and return every equilibrium it finds.

    Parallel models have a unique equilibrium. The shared model can have
    several, which are the rest points of the projection dynamics.
    """
    ensure_valid(instance)
    rm, d = instance.resource_model, instance.discount
    if isinstance(rm, SharedTwoAction):
        from .dynamics import find_rest_points

        m = instance.total_mass
        out = []
        for p in find_rest_points(instance):
            rep = verify_equilibrium(instance, [p.location, m - p.location], tol)
            out.append(_with(rep, notes=rep.notes + (f"{p.stability} rest point",)))
        return out
    if isinstance(d, PowerLaw) and d.alpha > 1:
        if isinstance(rm, ParallelConstant) and rm.n_actions == 2 and instance.rewards[0] != instance.rewards[1]:
            return [detect_nonexistence_two_action(instance)]
        return [solve_fixed_point(instance, tol=tol)]
    if isinstance(rm, ParallelConstant):
        try:
            if isinstance(d, Exponential):
                return [solve_constant_exponential(instance, tol)]
            return [solve_constant_powerlaw(instance, tol)]
        except ValueError:
            log.info("tied actions, falling back to the iterative solver")
    return [solve_fixed_point(instance, tol=tol)]
