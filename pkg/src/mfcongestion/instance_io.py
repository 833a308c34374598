"""JSON encoding of game instances and atomic file output."""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

from .game import (
    Exponential,
    GameInstance,
    InvalidInstanceError,
    ParallelConstant,
    ParallelIncreasing,
    PiecewiseLinear,
    PowerLaw,
    SharedTwoAction,
    Violation,
    validate_instance,
)


def _number(value, path: str) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidInstanceError([Violation(path, f"expected a number, got {value!r}")])
    return float(value)


def _numbers(values, path: str) -> list[float]:
    if not isinstance(values, list):
        raise InvalidInstanceError([Violation(path, "expected a list of numbers")])
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(values)]


def _encode(x: float):
    return "inf" if math.isinf(x) else float(x)


def _field(d: dict, key: str, path: str):
    if not isinstance(d, dict) or key not in d:
        raise InvalidInstanceError([Violation(f"{path}.{key}".lstrip("."), "missing field")])
    return d[key]


def instance_from_dict(data: dict) -> GameInstance:
    """Build and validate an instance; raises InvalidInstanceError with field paths."""
    m = _number(_field(data, "total_mass", ""), "total_mass")
    rewards = _numbers(_field(data, "rewards", ""), "rewards")
    rm_data = _field(data, "resource_model", "")
    kind = _field(rm_data, "kind", "resource_model")
    if kind == "parallel_constant":
        rm = ParallelConstant(_numbers(_field(rm_data, "exec_times", "resource_model"), "resource_model.exec_times"),
                              _numbers(_field(rm_data, "supply_rates", "resource_model"), "resource_model.supply_rates"))
    elif kind == "parallel_increasing":
        curves = []
        for i, c in enumerate(_field(rm_data, "curves", "resource_model")):
            p = f"resource_model.curves[{i}]"
            curves.append(PiecewiseLinear(_numbers(_field(c, "rates", p), p + ".rates"),
                                          _numbers(_field(c, "times", p), p + ".times")))
        rm = ParallelIncreasing(curves, _numbers(_field(rm_data, "supply_rates", "resource_model"),
                                                 "resource_model.supply_rates"))
    elif kind == "shared_two_action":
        rm = SharedTwoAction(_numbers(_field(rm_data, "exec_times", "resource_model"), "resource_model.exec_times"),
                             _numbers(_field(rm_data, "weights", "resource_model"), "resource_model.weights"),
                             _number(_field(rm_data, "supply", "resource_model"), "resource_model.supply"))
    else:
        raise InvalidInstanceError([Violation("resource_model.kind", f"unknown kind {kind!r}")])
    d_data = _field(data, "discount", "")
    dkind = _field(d_data, "kind", "discount")
    if dkind == "exponential":
        disc = Exponential(_number(_field(d_data, "beta", "discount"), "discount.beta"))
    elif dkind == "power_law":
        disc = PowerLaw(_number(_field(d_data, "alpha", "discount"), "discount.alpha"))
    else:
        raise InvalidInstanceError([Violation("discount.kind", f"unknown kind {dkind!r}")])
    inst = GameInstance(m, rewards, rm, disc)
    problems = validate_instance(inst)
    if problems:
        raise InvalidInstanceError(problems)
    return inst


def instance_to_dict(inst: GameInstance) -> dict:
    rm = inst.resource_model
    if isinstance(rm, ParallelConstant):
        rmd = {"kind": "parallel_constant", "exec_times": [_encode(v) for v in rm.exec_times],
               "supply_rates": [_encode(v) for v in rm.supply_rates]}
    elif isinstance(rm, ParallelIncreasing):
        rmd = {"kind": "parallel_increasing",
               "curves": [{"rates": [float(v) for v in c.rates], "times": [float(v) for v in c.times]}
                          for c in rm.curves],
               "supply_rates": [_encode(v) for v in rm.supply_rates]}
    else:
        rmd = {"kind": "shared_two_action", "exec_times": [float(v) for v in rm.exec_times],
               "weights": [float(v) for v in rm.weights], "supply": float(rm.supply)}
    d = inst.discount
    dd = {"kind": "exponential", "beta": d.beta} if isinstance(d, Exponential) else {"kind": "power_law", "alpha": d.alpha}
    return {"total_mass": inst.total_mass, "rewards": [float(v) for v in inst.rewards],
            "resource_model": rmd, "discount": dd}


def load_instance(path) -> GameInstance:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInstanceError([Violation("<file>", f"not valid JSON: {exc}")]) from exc
    return instance_from_dict(data)


def dumps(obj) -> str:
    # repr-based floats round-trip exactly; infinities are spelled out as "inf"
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    return obj


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
