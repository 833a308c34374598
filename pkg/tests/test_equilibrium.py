import math

import numpy as np
import pytest
from scipy.optimize import brentq

from helpers import random_parallel
from mfcongestion import fixtures
from mfcongestion.equilibrium import (
    CaseLabel,
    detect_nonexistence_two_action,
    find_equilibria,
    payoff_vector,
    solve_constant_exponential,
    solve_constant_powerlaw,
    solve_fixed_point,
    verify_equilibrium,
    water_fill,
)
from mfcongestion.game import (
    EQUILIBRIUM,
    NONEXISTENCE,
    NOT_EQUILIBRIUM,
    UNKNOWN,
    Exponential,
    GameInstance,
    ParallelConstant,
    ParallelIncreasing,
    PiecewiseLinear,
    PowerLaw,
)
from mfcongestion.utility import PayoffUnderflowWarning

# Reference masses from scipy's brentq on the equal-value equations.
MU1_AT_1_6 = 1.4898801256447498  # log(2(e - 1) + 1)
MU_AT_3 = (1.7677667627943847, 1.2322332372056155)


def test_exponential_closed_form_examples():
    rep = solve_constant_exponential(fixtures.constant_exponential_pair(1.0))
    assert rep.distribution == pytest.approx([1.0, 0.0], abs=1e-15)
    assert rep.case == CaseLabel(1, False)

    rep = solve_constant_exponential(fixtures.constant_exponential_pair(1.6))
    assert rep.distribution == pytest.approx([MU1_AT_1_6, 1.6 - MU1_AT_1_6], abs=1e-12)
    assert rep.payoffs == pytest.approx([0.582, 0.582], abs=1e-3)
    assert rep.payoffs[0] == pytest.approx(1 / math.expm1(1), rel=1e-12)
    assert rep.case == CaseLabel(2, False)
    assert rep.verdict == EQUILIBRIUM

    rep = solve_constant_exponential(fixtures.constant_exponential_pair(3.0))
    assert rep.distribution == pytest.approx(MU_AT_3, abs=1e-12)
    assert rep.case == CaseLabel(2, True)


def test_exponential_saturated_oracle():
    inst = GameInstance(20.0, [3.0, 1.0, 2.0], ParallelConstant([1.0, 0.5, 2.0], [1.0, 2.0, 0.5]), Exponential(0.7))
    rep = solve_constant_exponential(inst)
    r, b, beta = inst.rewards, inst.resource_model.supply_rates, 0.7
    t = inst.resource_model.exec_times
    base = r / np.expm1(beta * t)
    saturated = lambda lvl: sum(b[k] * max(math.log1p(r[k] / lvl) / beta, t[k]) if base[k] > lvl else 0.0
                                for k in range(3))
    # all three actions are saturated at this mass, so the level solves the mass balance
    level = brentq(lambda c: saturated(c) - 20.0, 1e-9, base.min(), xtol=1e-15)
    expect = [b[k] * math.log1p(r[k] / level) / beta for k in range(3)]
    assert rep.distribution == pytest.approx(expect, abs=1e-10)
    assert rep.case == CaseLabel(3, True)


def test_powerlaw_closed_form_examples():
    rep = solve_constant_powerlaw(fixtures.constant_rate_pair(2.0))
    assert rep.distribution == pytest.approx([2.0, 0.0])
    p, _ = payoff_vector(fixtures.constant_rate_pair(2.0), rep.distribution)
    assert p[0] == pytest.approx(1.0)
    rep = solve_constant_powerlaw(fixtures.constant_rate_pair(6.0))
    assert rep.distribution == pytest.approx([4.0, 2.0])
    assert rep.case == CaseLabel(2, False)


def test_closed_forms_reject_ties():
    tied = GameInstance(1, [1.0, 1.0], ParallelConstant([1, 1], [1, 1]), Exponential(1))
    with pytest.raises(ValueError):
        solve_constant_exponential(tied)
    with pytest.raises(ValueError):
        solve_constant_powerlaw(tied.with_discount(PowerLaw(0.5)))


def test_closed_forms_accept_any_action_order():
    inst = GameInstance(1.6, [1.0, 2.0], ParallelConstant([1, 1], [1, 1]), Exponential(1))
    rep = solve_constant_exponential(inst)
    assert rep.distribution == pytest.approx([1.6 - MU1_AT_1_6, MU1_AT_1_6], abs=1e-12)


def test_verify_detects_non_equilibrium():
    inst = fixtures.constant_exponential_pair(1.6)
    rep = verify_equilibrium(inst, [0.8, 0.8])
    assert rep.verdict == NOT_EQUILIBRIUM and rep.residual > 0.01
    short = verify_equilibrium(inst, [1.0, 0.0])
    assert short.verdict == NOT_EQUILIBRIUM and short.notes


def test_verify_applies_tie_rule_above_one():
    # equal reward rates, action 2 slower: agents on action 2 would switch
    inst = GameInstance(2.0, [1.0, 2.0], ParallelConstant([1.0, 2.0], [math.inf, math.inf]), PowerLaw(2.0))
    assert verify_equilibrium(inst, [1.0, 1.0]).verdict == NOT_EQUILIBRIUM
    assert verify_equilibrium(inst, [2.0, 0.0]).verdict == EQUILIBRIUM
    assert verify_equilibrium(inst.with_discount(PowerLaw(0.5)), [1.0, 1.0]).verdict == EQUILIBRIUM


def test_fixed_point_matches_closed_form_examples():
    for m in (0.5, 1.0, 1.6, 3.0, 10.0):
        inst = fixtures.constant_exponential_pair(m)
        a, b = solve_constant_exponential(inst), solve_fixed_point(inst)
        assert np.max(np.abs(a.distribution - b.distribution)) <= 1e-9
    for m in (1.0, 2.0, 4.0, 6.0):
        inst = fixtures.constant_rate_pair(m)
        a, b = solve_constant_powerlaw(inst), solve_fixed_point(inst)
        assert np.max(np.abs(a.distribution - b.distribution)) <= 1e-9


def test_fixed_point_ignores_reward_scale():
    rng = np.random.default_rng(4)
    for _ in range(20):
        base = random_parallel(rng, discount=PowerLaw(float(rng.choice([0.0, 0.5, 1.0]))))
        scaled = GameInstance(base.total_mass, base.rewards * 37.5, base.resource_model, base.discount)
        a, b = solve_fixed_point(base), solve_fixed_point(scaled)
        assert np.max(np.abs(a.distribution - b.distribution)) <= 1e-8


def test_fixed_point_on_increasing_model():
    rng = np.random.default_rng(8)
    for _ in range(30):
        inst = random_parallel(rng, kind="increasing")
        rep = solve_fixed_point(inst)
        assert rep.verdict == EQUILIBRIUM
        assert rep.distribution.sum() == pytest.approx(inst.total_mass, rel=1e-12)


def test_water_fill_handles_flat_curve_pieces():
    curve = PiecewiseLinear([0, 1, 2], [1.0, 1.0, 2.0])
    inst = GameInstance(1.5, [1.0, 0.5], ParallelIncreasing([curve, PiecewiseLinear.constant(1.0)], [5, 5]),
                        PowerLaw(0.0))
    mu = water_fill(inst)
    assert verify_equilibrium(inst, mu).verdict == EQUILIBRIUM
    assert mu == pytest.approx([1.5, 0.0])


def test_fixed_point_reports_unknown_when_nothing_works():
    inst = GameInstance(10.0, [2.0, 1.0, 0.5], ParallelConstant([1, 1, 1], [1, math.inf, math.inf]), PowerLaw(2.0))
    assert solve_fixed_point(inst, max_iters=500).verdict == UNKNOWN


def test_nonexistence_certificate():
    rep = detect_nonexistence_two_action(fixtures.no_equilibrium_pair(10.0))
    assert rep.verdict == NONEXISTENCE
    rep = detect_nonexistence_two_action(fixtures.no_equilibrium_pair(1.0))
    assert rep.verdict == EQUILIBRIUM
    assert list(rep.distribution) == [1.0, 0.0]


def test_nonexistence_needs_distinct_rewards():
    inst = GameInstance(10.0, [1.0, 1.0], ParallelConstant([1, 2], [1, math.inf]), PowerLaw(2.0))
    with pytest.raises(ValueError):
        detect_nonexistence_two_action(inst)


def test_find_equilibria_dispatch():
    assert find_equilibria(fixtures.no_equilibrium_pair(10.0))[0].verdict == NONEXISTENCE
    assert find_equilibria(fixtures.constant_rate_pair(6.0))[0].case == CaseLabel(2, False)
    shared = find_equilibria(fixtures.shared_bistable())
    assert len(shared) == 3 and all(r.verdict == EQUILIBRIUM for r in shared)
    tied = GameInstance(2.0, [1.0, 1.0], ParallelConstant([1, 1], [1, 1]), Exponential(1))
    rep = find_equilibria(tied)[0]
    assert rep.verdict == EQUILIBRIUM and rep.distribution == pytest.approx([1.0, 1.0])


def test_shared_fixed_point_reaches_a_rest_point():
    rep = solve_fixed_point(fixtures.shared_bistable(), init=[0.2, 1.8])
    assert rep.verdict == EQUILIBRIUM
    assert rep.distribution[0] in (pytest.approx(0.0, abs=1e-9), pytest.approx(2.0, abs=1e-9))


def test_exponential_closed_form_survives_deep_congestion():
    # sojourn times near 1000 put the value level past float range
    inst = GameInstance(500.0, [2.0, 4.0, 2.5], ParallelConstant([0.5, 1.0, 1.0], [0.2, 0.5, 0.45]), Exponential(1.8))
    with pytest.warns(PayoffUnderflowWarning):
        rep = solve_constant_exponential(inst)
    mu = rep.distribution
    assert np.all(np.isfinite(mu)) and mu.sum() == pytest.approx(500.0, rel=1e-12)
    # all three saturated at a common value, so beta * tau_k - log(r_k) agrees across actions
    tau = mu / inst.resource_model.supply_rates
    key = 1.8 * tau - np.log(inst.rewards)
    assert np.ptp(key) <= 1e-9 * key.max()
    assert rep.case == CaseLabel(3, True)
