"""Random instance generators and independent reference computations for the tests."""
import math

import numpy as np

from mfcongestion.game import (
    Exponential,
    GameInstance,
    ParallelConstant,
    ParallelIncreasing,
    PiecewiseLinear,
    PowerLaw,
    SharedTwoAction,
)


def random_curve(rng):
    k = int(rng.integers(1, 5))
    rates = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 2.0, k - 1))])
    slopes = rng.uniform(0.0, 2.0, k - 1) * (rng.random(k - 1) < 0.8)
    times = rng.uniform(0.2, 3.0) + np.concatenate([[0.0], np.cumsum(slopes * np.diff(rates))])
    return PiecewiseLinear(rates, times)


def random_supply(rng, n, p_inf=0.15):
    b = rng.uniform(0.2, 3.0, n)
    b[rng.random(n) < p_inf] = math.inf
    return b


def random_discount(rng):
    if rng.random() < 0.5:
        return Exponential(float(rng.uniform(0.1, 2.0)))
    return PowerLaw(float(rng.choice([0.0, 0.3, 0.7, 1.0])))


def random_parallel(rng, n=None, discount=None, kind=None):
    n = int(rng.integers(1, 9)) if n is None else n
    kind = kind or ("constant" if rng.random() < 0.5 else "increasing")
    b = random_supply(rng, n)
    if kind == "constant":
        rm = ParallelConstant(rng.uniform(0.2, 3.0, n), b)
    else:
        rm = ParallelIncreasing([random_curve(rng) for _ in range(n)], b)
    disc = discount or random_discount(rng)
    return GameInstance(float(rng.uniform(0.1, 10.0)), rng.uniform(0.5, 5.0, n), rm, disc)


def random_masses(rng, n, m):
    return rng.dirichlet(np.ones(n)) * m * (1.0 if rng.random() < 0.7 else rng.uniform(0.2, 1.0))


def random_shared(rng, discount=None):
    t = rng.uniform(0.2, 3.0, 2)
    g = rng.uniform(0.3, 3.0, 2)
    return GameInstance(float(rng.uniform(0.5, 5.0)), rng.uniform(0.5, 5.0, 2),
                        SharedTwoAction(t, g, float(rng.uniform(0.2, 1.5))),
                        discount or Exponential(float(rng.uniform(0.2, 2.0))))


def shared_wait_quadratic(t, g, b, mu1, mu2):
    """Waiting multiplier of the shared model from its quadratic, independent of bisection."""
    A = b * g[0] * g[1]
    B = b * (t[0] * g[1] + t[1] * g[0]) - g[0] * g[1] * (mu1 + mu2)
    C = b * t[0] * t[1] - g[0] * mu1 * t[1] - g[1] * mu2 * t[0]
    if C >= 0:
        return 0.0
    return (-B + math.sqrt(B * B - 4 * A * C)) / (2 * A)
