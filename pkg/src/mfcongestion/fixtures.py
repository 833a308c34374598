"""Reference instances used by the reproduce command and the tests."""
from __future__ import annotations

import math

from .game import Exponential, GameInstance, ParallelConstant, PowerLaw, SharedTwoAction


def shared_bistable(discounted: bool = True) -> GameInstance:
    """Shared two-action game with two stable boundary equilibria when discounted."""
    disc = Exponential(1.0) if discounted else PowerLaw(0.0)
    return GameInstance(2.0, [math.exp(5), math.e], SharedTwoAction([3.0, 0.5], [2.0, 1.0], 1.0), disc)


def constant_exponential_pair(total_mass: float = 1.6) -> GameInstance:
    return GameInstance(total_mass, [2.0, 1.0], ParallelConstant([1.0, 1.0], [1.0, 1.0]), Exponential(1.0))


def constant_rate_pair(total_mass: float = 2.0) -> GameInstance:
    return GameInstance(total_mass, [2.0, 1.0], ParallelConstant([1.0, 2.0], [1.0, math.inf]), PowerLaw(0.0))


def no_equilibrium_pair(total_mass: float = 10.0) -> GameInstance:
    return GameInstance(total_mass, [2.0, 1.0], ParallelConstant([1.0, 1.0], [1.0, math.inf]), PowerLaw(2.0))
