import math

import numpy as np
import pytest

from helpers import random_shared, shared_wait_quadratic
from mfcongestion import fixtures
from mfcongestion.dynamics import (
    MARGINAL,
    STABLE,
    TRACE_HEADER,
    UNSTABLE,
    SlackConstraintError,
    analytic_drift_derivative,
    check_unstable_conditions,
    classify_stability,
    drift,
    find_rest_points,
    integrate,
    raw_drift,
)
from mfcongestion.game import (
    Exponential,
    GameInstance,
    InvalidInstanceError,
    ParallelConstant,
    PowerLaw,
    SharedTwoAction,
)

# Equal-payoff point of the bistable shared game, from brentq on the quadratic waiting time.
INTERIOR_REST = 0.4855229815225717


def symmetric():
    return GameInstance(4.0, [1.0, 1.0], ParallelConstant([1.0, 1.0], [1.0, 1.0]), Exponential(1.0))


def test_drift_is_clipped_at_the_boundaries():
    fig = fixtures.shared_bistable()
    assert raw_drift(fig, 0.0) < 0 and drift(fig, 0.0) == 0.0
    assert raw_drift(fig, 2.0) > 0 and drift(fig, 2.0) == 0.0
    assert drift(fig, 1.0) == raw_drift(fig, 1.0)


def test_symmetric_instance_rests_in_the_middle():
    inst = symmetric()
    assert drift(inst, 2.0) == 0.0
    pts = find_rest_points(inst)
    assert [(p.location, p.stability) for p in pts] == [(pytest.approx(2.0, abs=1e-9), STABLE)]


def test_dynamics_need_two_actions():
    inst = GameInstance(1.0, [1, 1, 1], ParallelConstant([1, 1, 1], [1, 1, 1]), Exponential(1))
    with pytest.raises(InvalidInstanceError):
        drift(inst, 0.5)
    with pytest.raises(InvalidInstanceError):
        integrate(fixtures.shared_bistable(), 3.0)


def test_bistable_rest_points():
    pts = find_rest_points(fixtures.shared_bistable())
    assert [p.kind for p in pts] == ["Boundary", "Interior", "Boundary"]
    assert [p.stability for p in pts] == [STABLE, UNSTABLE, STABLE]
    assert pts[1].location == pytest.approx(INTERIOR_REST, abs=1e-9)
    assert pts[0].location == 0.0 and pts[2].location == 2.0


def test_undiscounted_has_one_rest_point():
    pts = find_rest_points(fixtures.shared_bistable(discounted=False))
    assert [(p.location, p.stability) for p in pts] == [(2.0, STABLE)]


def test_flat_gap_is_marginal():
    inst = GameInstance(2.0, [1.0, 1.0], ParallelConstant([1.0, 1.0], [5.0, 5.0]), PowerLaw(0.0))
    pts = find_rest_points(inst)
    assert MARGINAL in [p.stability for p in pts]
    assert classify_stability(inst, 1.0)[0] == MARGINAL


def test_trajectories_settle_on_stable_points():
    fig = fixtures.shared_bistable()
    low = integrate(fig, 0.4, t_end=60.0, record_every=100)
    high = integrate(fig, 0.6, t_end=60.0, record_every=100)
    assert low.mu1[-1] == 0.0
    assert high.mu1[-1] == 2.0
    assert np.all(np.diff(low.mu1) <= 0) and np.all(np.diff(high.mu1) >= 0)
    assert np.allclose(low.mu1 + low.mu2, 2.0)


def test_trace_csv_layout():
    tr = integrate(fixtures.shared_bistable(), 1.0, step=0.01, t_end=0.05)
    lines = tr.to_csv().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) == 1 + 6
    first = lines[1].split(",")
    assert float(first[1]) == 1.0
    assert float(first[6]) == pytest.approx(tr.SW[0], rel=0, abs=0)


def test_default_step_scales_with_execution_time():
    tr = integrate(fixtures.shared_bistable(), 1.0, t_end=0.03)
    assert tr.t[1] == pytest.approx(3e-3)


def _tight_point(rng, discount):
    while True:
        inst = random_shared(rng, discount)
        mu1 = float(rng.uniform(0.05, 0.95)) * inst.total_mass
        rm = inst.resource_model
        w = shared_wait_quadratic(rm.exec_times, rm.weights, rm.supply, mu1, inst.total_mass - mu1)
        if w > 1e-3:
            return inst, mu1


def _central(inst, mu1):
    h = 1e-5 * inst.total_mass
    return (raw_drift(inst, mu1 + h) - raw_drift(inst, mu1 - h)) / (2 * h)


@pytest.mark.parametrize("discount", [Exponential(0.8), PowerLaw(0.0), PowerLaw(0.6)])
def test_analytic_derivative_matches_differences(discount):
    rng = np.random.default_rng(21)
    for _ in range(40):
        inst, mu1 = _tight_point(rng, discount)
        fd = _central(inst, mu1)
        an = analytic_drift_derivative(inst, mu1)
        assert abs(an - fd) <= 1e-5 * max(abs(fd), 1e-3)


def test_rate_payoff_derivative_is_negative_at_equal_rates():
    # pick rewards so the two reward rates tie at a saturated interior point
    inst = GameInstance(2.0, [1.0, 1.0], SharedTwoAction([1.0, 0.4], [1.0, 2.0], 0.8), PowerLaw(0.0))
    from mfcongestion.sojourn import solve_sojourn

    tau = solve_sojourn(inst, [0.7, 1.3]).taus
    inst = GameInstance(2.0, [tau[0], tau[1]], inst.resource_model, PowerLaw(0.0))
    assert raw_drift(inst, 0.7) == pytest.approx(0.0, abs=1e-12)
    assert analytic_drift_derivative(inst, 0.7) < 0


def test_derivative_refuses_slack_constraint():
    inst = GameInstance(1.0, [1.0, 1.0], SharedTwoAction([1.0, 1.0], [1.0, 1.0], 5.0), Exponential(1.0))
    with pytest.raises(SlackConstraintError):
        analytic_drift_derivative(inst, 0.5)
    assert analytic_drift_derivative(inst, 0.5, allow_slack=True) == 0.0


def test_instability_certificate_on_bistable_game():
    fig = fixtures.shared_bistable()
    chk = check_unstable_conditions(fig, INTERIOR_REST)
    assert chk.certified and chk.equilibrium_condition and chk.saturated and chk.payoffs_equal
    # the parameter-only test is stricter: 2 < e^0.5/(e^0.5 - 1)
    assert not chk.base_condition
    assert 2.0 < math.exp(0.5) / math.expm1(0.5)


def test_instability_certificate_needs_unequal_ratios():
    inst = GameInstance(2.0, [math.exp(5), math.e], SharedTwoAction([3.0, 0.5], [6.0, 1.0], 1.0), Exponential(1.0))
    for mu1 in np.linspace(0.1, 1.9, 7):
        assert not check_unstable_conditions(inst, mu1).certified
    assert analytic_drift_derivative(inst, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_instability_certificate_needs_equal_payoffs():
    chk = check_unstable_conditions(fixtures.shared_bistable(), 1.0)
    assert not chk.payoffs_equal and not chk.certified


def test_certificate_agrees_with_observed_slope():
    rng = np.random.default_rng(9)
    checked = 0
    for _ in range(300):
        # perturb the bistable game so interior rest points of both kinds show up
        inst = GameInstance(float(rng.uniform(1.5, 2.5)),
                            [math.exp(rng.uniform(4, 6)), math.exp(rng.uniform(0.5, 1.5))],
                            SharedTwoAction([rng.uniform(2, 4), rng.uniform(0.3, 0.8)],
                                            [rng.uniform(1, 3), rng.uniform(0.5, 1.5)], rng.uniform(0.6, 1.4)),
                            Exponential(float(rng.uniform(0.6, 1.4))))
        for p in find_rest_points(inst, grid_n=64):
            if p.kind != "Interior":
                continue
            chk = check_unstable_conditions(inst, p.location)
            if chk.certified:
                assert p.stability == UNSTABLE
                checked += 1
            if chk.base_condition and chk.saturated:
                assert chk.equilibrium_condition
    assert checked > 20
