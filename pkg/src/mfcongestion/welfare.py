"""Social welfare, the welfare-maximizing allocation, and price-of-anarchy reports."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import find_equilibria, verify_equilibrium
from .game import (
    EQUILIBRIUM,
    INF,
    EquilibriumReport,
    Exponential,
    GameInstance,
    ParallelConstant,
    ParallelIncreasing,
    PowerLaw,
    SharedTwoAction,
    as_masses,
    ensure_valid,
)
from .sojourn import _increasing_one, solve_sojourn


def social_welfare(instance: GameInstance, mu) -> float:
    """Total reward collected per unit time."""
    prof = solve_sojourn(instance, mu)
    return float(np.dot(instance.rewards, prof.rates))


@dataclass(frozen=True, eq=False)
class Optimum:
    distribution: np.ndarray
    value: float
    certified: bool
    method: str


def _greedy(instance: GameInstance) -> Optimum:
    rm = instance.resource_model
    t, b, r = rm.exec_times, rm.supply_rates, instance.rewards
    left = instance.total_mass
    mu = np.zeros(len(t))
    for i in sorted(range(len(t)), key=lambda k: (-r[k] / t[k], k)):
        if left <= 0:
            break
        mu[i] = min(left, b[i] * t[i])
        left -= mu[i]
    return Optimum(mu, float(np.sum(r * mu / t)), True, "greedy")


def _compositions(total: int, parts: int):
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, out = -1, []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield out


def _grid_resolution(parts: int, budget: int) -> int:
    k = 1
    while math.comb(k + 1 + parts - 1, parts - 1) <= budget:
        k += 1
    return k


def _descend(instance: GameInstance, alloc: np.ndarray, step: float) -> tuple[np.ndarray, float]:
    """Pairwise mass transfers with a halving step, starting from a grid point.

    The last slot of ``alloc`` is idle mass, so the search can use less
    than the full mass.
    """
    n, m = instance.n_actions, instance.total_mass
    value = lambda a: social_welfare(instance, a[:n])
    best, best_val = alloc, value(alloc)
    while step > 1e-12 * max(m, 1.0):
        improved = True
        while improved:
            improved = False
            for i, j in itertools.permutations(range(n + 1), 2):
                if best[i] <= 0:
                    continue
                move = min(step, best[i])
                cand = best.copy()
                cand[i] -= move
                cand[j] += move
                v = value(cand)
                if v > best_val + 1e-15 * abs(best_val):
                    best, best_val, improved = cand, v, True
        step *= 0.5
    return best, best_val


def _simplex_start(instance: GameInstance, budget: int = 4000) -> tuple[np.ndarray, float]:
    n, m = instance.n_actions, instance.total_mass
    k = _grid_resolution(n + 1, budget)
    best, best_val = None, -INF
    for comp in _compositions(k, n + 1):
        alloc = np.array(comp, dtype=float) * (m / k)
        v = social_welfare(instance, alloc[:n])
        if v > best_val:
            best, best_val = alloc, v
    return best, m / k


def _separable_start(instance: GameInstance, cells: int = 400) -> tuple[np.ndarray, float]:
    # Parallel welfare is a sum of one-action terms, so a knapsack-style
    # recursion over a mass grid finds the best grid allocation exactly.
    n, m = instance.n_actions, instance.total_mass
    rm = instance.resource_model
    grid = np.linspace(0.0, m, cells + 1)
    idx = np.arange(cells + 1)
    used = idx[:, None] - idx[None, :]  # used[j, k]: grid mass left for earlier actions
    best = np.zeros(cells + 1)
    picks = []
    for i in range(n):
        gain = instance.rewards[i] * np.array([_increasing_one(rm.curves[i], rm.supply_rates[i], g)[1] for g in grid])
        total = np.where(used >= 0, best[np.clip(used, 0, None)] + gain[None, :], -INF)
        k = np.argmax(total, axis=1)
        picks.append(k)
        best = total[idx, k]
    alloc, j = np.zeros(n + 1), int(np.argmax(best))
    alloc[n] = m - grid[j]
    for i in reversed(range(n)):
        k = int(picks[i][j])
        alloc[i] = grid[k]
        j -= k
    return alloc, m / cells


def _search(instance: GameInstance) -> Optimum:
    if isinstance(instance.resource_model, ParallelIncreasing):
        start, step = _separable_start(instance)
    else:
        start, step = _simplex_start(instance)
    best, best_val = _descend(instance, start, step)
    return Optimum(best[:instance.n_actions], best_val, False, "grid+descent")


def social_optimum(instance: GameInstance) -> Optimum:
    """Largest welfare over distributions of mass at most m.

    Constant execution times give an exact greedy answer: fill actions in
    order of reward per unit execution time up to their saturation mass.
    Other models use a numerical search that is not certified.
    """
    ensure_valid(instance)
    if isinstance(instance.resource_model, ParallelConstant):
        return _greedy(instance)
    return _search(instance)


def _golden_max(fn, a: float, b: float, iters: int = 80) -> float:
    inv = (math.sqrt(5) - 1) / 2
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fn(d)
    return max(fc, fd)


def _growth(x: float) -> float:
    # (e^x - 1)/x, which is 1 in the limit x -> 0
    if x == 0.0:
        return 1.0
    if x > 700:
        return INF
    return math.expm1(x) / x


@dataclass(frozen=True, eq=False)
class CharacteristicNumber:
    chi: float
    per_action: np.ndarray
    max_sojourn: np.ndarray


def characteristic_number(instance: GameInstance, scan: int = 256) -> CharacteristicNumber:
    """Largest (e^{beta tau} - 1)/(beta tau) reachable on each action.

    The ratio grows with tau, so it is evaluated at the longest sojourn time
    an action can see for the given mass.
    """
    ensure_valid(instance)
    d = instance.discount
    if not isinstance(d, Exponential):
        raise TypeError("the characteristic number is defined for exponential discount")
    rm, m, n = instance.resource_model, instance.total_mass, instance.n_actions
    if isinstance(rm, ParallelConstant):
        with np.errstate(divide="ignore"):
            tau_max = np.maximum(rm.exec_times, np.where(np.isinf(rm.supply_rates), 0.0, m / rm.supply_rates))
    elif isinstance(rm, ParallelIncreasing):
        tau_max = np.array([solve_sojourn(instance, m * np.eye(n)[i]).taus[i] for i in range(n)])
    else:
        tau_max = np.zeros(2)
        grid = np.linspace(0.0, m, scan + 1)
        for i in range(2):
            tau_at = lambda x, i=i: float(solve_sojourn(instance, [x, m - x]).taus[i])
            vals = [tau_at(x) for x in grid]
            k = int(np.argmax(vals))
            a, b = grid[max(k - 1, 0)], grid[min(k + 1, scan)]
            tau_max[i] = max(vals[k], _golden_max(tau_at, a, b))
    per = np.array([_growth(d.beta * tau) for tau in tau_max])
    return CharacteristicNumber(float(per.max()), per, tau_max)


@dataclass(frozen=True, eq=False)
class PoaReport:
    optimum: float
    optimum_distribution: np.ndarray
    equilibria: list
    worst_ratio: float
    chi: float | None
    chi_per_action: list | None
    certified: bool
    notes: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "optimum": self.optimum,
            "optimum_distribution": [float(v) for v in self.optimum_distribution],
            "equilibria": self.equilibria,
            "worst_ratio": _num(self.worst_ratio),
            "chi": None if self.chi is None else _num(self.chi),
            "chi_per_action": None if self.chi_per_action is None else [_num(v) for v in self.chi_per_action],
            "certified": self.certified,
            "notes": list(self.notes),
        }


def _num(x: float):
    return "inf" if math.isinf(x) else float(x)


def price_of_anarchy(instance: GameInstance, equilibria: list[EquilibriumReport] | None = None) -> PoaReport:
    ensure_valid(instance)
    opt = social_optimum(instance)
    if equilibria is None:
        equilibria = find_equilibria(instance)
    rows, worst, notes = [], 0.0, []
    for rep in equilibria:
        if rep.verdict != EQUILIBRIUM:
            notes.append(f"skipped a report with verdict {rep.verdict}")
            continue
        sw = social_welfare(instance, rep.distribution)
        ratio = INF if sw <= 0 else opt.value / sw
        if sw <= 0:
            notes.append("an equilibrium has zero welfare")
        rows.append({"distribution": [float(v) for v in rep.distribution], "welfare": sw, "ratio": _num(ratio)})
        worst = max(worst, ratio)
    chi = per = None
    if isinstance(instance.discount, Exponential):
        c = characteristic_number(instance)
        chi, per = c.chi, list(c.per_action)
    if not rows:
        worst = math.nan
    return PoaReport(opt.value, opt.distribution, rows, worst, chi, per, opt.certified, tuple(notes))


@dataclass(frozen=True, eq=False)
class Witness:
    instance: GameInstance
    equilibrium: np.ndarray
    equilibrium_verdict: str
    predicted_ratio: float
    measured_ratio: float
    optimum: float
    welfare: float
    greedy_matches_construction: bool

    def to_dict(self) -> dict:
        return {
            "equilibrium": [float(v) for v in self.equilibrium],
            "equilibrium_verdict": self.equilibrium_verdict,
            "predicted_ratio": self.predicted_ratio,
            "measured_ratio": self.measured_ratio,
            "optimum": self.optimum,
            "welfare": self.welfare,
            "greedy_matches_construction": self.greedy_matches_construction,
        }


def witness_exponential(beta: float = 1.0, t2: float = 1.0, t1: float = 1e-4, b1: float = 1.0) -> Witness:
    """Instance whose equilibrium wastes a large share of welfare under exponential discount.

    Action 1 is very fast but has little supply; in equilibrium all mass
    queues for it, with waiting time sqrt(t1), until its value falls to that
    of the slow, uncongested action 2. The optimum instead sends the waiting
    mass to action 2.
    """
    if not (t1 > 0 and t2 > 0 and beta > 0 and b1 > 0):
        raise ValueError("times, beta and supply must be positive")
    wait = math.sqrt(t1)
    tau1 = t1 + wait
    r2 = 1.0
    r1 = r2 * math.expm1(beta * tau1) / math.expm1(beta * t2)
    m = b1 * tau1
    inst = GameInstance(m, [r1, r2], ParallelConstant([t1, t2], [b1, INF]), Exponential(beta))
    mu = np.array([m, 0.0])
    rep = verify_equilibrium(inst, mu)
    big_m = math.expm1(beta * t2) / (beta * t2)
    predicted = 1.0 + big_m / (_growth(beta * tau1) * tau1 / wait)
    opt = social_optimum(inst)
    sw = social_welfare(inst, mu)
    return Witness(inst, mu, rep.verdict, predicted, opt.value / sw, opt.value, sw, bool(r2 / t2 <= r1 / t1))


def witness_powerlaw(t1: float = 0.01, alpha: float = 0.0) -> Witness:
    """Instance whose reward-rate equilibrium ratio approaches 2 as t1 shrinks."""
    r2, t2, m, b1 = 2.0, 1.0, 1.0, 2.0
    tau1 = m / b1
    if not 0 < t1 < tau1:
        raise ValueError(f"t1 must lie in (0, {tau1}) so that action 1 saturates")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    r1 = r2 * tau1 / t2
    inst = GameInstance(m, [r1, r2], ParallelConstant([t1, t2], [b1, INF]), PowerLaw(alpha))
    mu = np.array([m, 0.0])
    rep = verify_equilibrium(inst, mu)
    opt = social_optimum(inst)
    sw = social_welfare(inst, mu)
    return Witness(inst, mu, rep.verdict, 2.0 - b1 * t1 / m, opt.value / sw, opt.value, sw, bool(r2 / t2 <= r1 / t1))
