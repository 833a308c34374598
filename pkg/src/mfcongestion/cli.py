"""Command line interface.

Every command reads an instance file (except ``witness`` and ``reproduce``),
computes everything in memory, and only then writes its outputs, each one
atomically. Exit codes: 0 ok, 2 bad input, 3 solver failure, 4 no
equilibrium exists, 5 solver could not decide.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import dynamics, equilibrium, fixtures, welfare
from .game import NONEXISTENCE, UNKNOWN, InvalidInstanceError, SharedTwoAction, Tolerances, Violation
from .instance_io import dumps, instance_to_dict, load_instance, write_atomic
from .sojourn import kkt_residual, solve_sojourn
from .utility import build_switching_counterexample

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_NONEXISTENCE, EXIT_UNKNOWN = 0, 2, 3, 4, 5

log = logging.getLogger("mfcongestion")


class SolverFailure(RuntimeError):
    pass


_LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level = _LOG_LEVELS.get(os.environ.get("MFG_LOG", "").lower(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _need_instance(args):
    if not args.instance:
        raise InvalidInstanceError([Violation("--instance", "an instance file is required")])
    return load_instance(args.instance)


def _masses(inst, args):
    m = inst.total_mass
    if args.mu1 is not None:
        if inst.n_actions != 2:
            raise InvalidInstanceError([Violation("--mu1", "only valid for two-action instances")])
        if not 0 <= args.mu1 <= m:
            raise InvalidInstanceError([Violation("--mu1", f"must lie in [0, {m}]")])
        return np.array([args.mu1, m - args.mu1])
    if args.mu is not None:
        return np.array(args.mu, dtype=float)
    raise InvalidInstanceError([Violation("--mu", "give --mu or --mu1")])


def cmd_sojourn(args, out: Path) -> int:
    inst = _need_instance(args)
    mu = _masses(inst, args)
    prof = solve_sojourn(inst, mu)
    res = kkt_residual(inst, mu, prof)
    payload = {"masses": list(mu), "taus": list(prof.taus), "rates": list(prof.rates),
               "waits": list(prof.waits), "kkt": res.to_dict(), "kkt_ok": res.ok(args.tol)}
    write_atomic(out / "sojourn.json", dumps(payload))
    return EXIT_OK


def _verdict_code(reports) -> int:
    verdicts = {r.verdict for r in reports}
    if NONEXISTENCE in verdicts:
        return EXIT_NONEXISTENCE
    if not reports or UNKNOWN in verdicts:
        return EXIT_UNKNOWN
    return EXIT_OK


def cmd_equilibrium(args, out: Path) -> int:
    inst = _need_instance(args)
    reports = equilibrium.find_equilibria(inst, tol=args.tol)
    payload = {"equilibria": [r.to_dict() for r in reports]}
    write_atomic(out / "equilibrium.json", dumps(payload))
    return _verdict_code(reports)


def cmd_dynamics(args, out: Path) -> int:
    inst = _need_instance(args)
    dynamics.require_two_actions(inst)
    m = inst.total_mass
    start = 0.5 * m if args.start is None else args.start
    if not 0 <= start <= m:
        raise InvalidInstanceError([Violation("--start", f"must lie in [0, {m}]")])
    trace = dynamics.integrate(inst, start, step=args.step, t_end=args.t_end, record_every=args.record_every)
    points = dynamics.find_rest_points(inst, grid_n=args.grid_n)
    field = dynamics.vector_field(inst, args.field_n)
    rest = {"rest_points": [p.to_dict() for p in points]}
    if isinstance(inst.resource_model, SharedTwoAction) and hasattr(inst.discount, "beta"):
        rest["instability_checks"] = [
            {"mu1": p.location, **dynamics.check_unstable_conditions(inst, p.location).to_dict()}
            for p in points if p.kind == "Interior"
        ]
    field_csv = "mu1,drift\n" + "".join(f"{x:.17g},{d:.17g}\n" for x, d in field)
    write_atomic(out / "trace.csv", trace.to_csv())
    write_atomic(out / "rest_points.json", dumps(rest))
    write_atomic(out / "field.csv", field_csv)
    return EXIT_OK


def cmd_poa(args, out: Path) -> int:
    inst = _need_instance(args)
    reports = equilibrium.find_equilibria(inst, tol=args.tol)
    code = _verdict_code(reports)
    rep = welfare.price_of_anarchy(inst, reports)
    write_atomic(out / "poa.json", dumps(rep.to_dict()))
    return code


def cmd_chi(args, out: Path) -> int:
    inst = _need_instance(args)
    try:
        c = welfare.characteristic_number(inst)
    except TypeError as exc:
        raise InvalidInstanceError([Violation("discount", str(exc))]) from exc
    payload = {"chi": c.chi, "per_action": list(c.per_action), "max_sojourn": list(c.max_sojourn)}
    write_atomic(out / "chi.json", dumps(payload))
    return EXIT_OK


def _witness_payload(args):
    if args.kind == "exponential":
        w = welfare.witness_exponential(args.beta, args.t2, args.t1)
        return w.instance, w.to_dict()
    if args.kind == "powerlaw":
        w = welfare.witness_powerlaw(args.t1, args.alpha)
        return w.instance, w.to_dict()
    c = build_switching_counterexample(args.alpha, args.eps)
    d = c.to_dict()
    d["schedule"] = {"blocks": [list(b) for b in c.schedule.blocks], "terminal": c.schedule.terminal}
    return c.instance, d


def cmd_witness(args, out: Path) -> int:
    try:
        inst, payload = _witness_payload(args)
    except ValueError as exc:
        raise InvalidInstanceError([Violation("witness", str(exc))]) from exc
    write_atomic(out / "witness.json", dumps(payload))
    write_atomic(out / "instance.json", dumps(instance_to_dict(inst)))
    return EXIT_OK


def _random_constant(rng, n, discount):
    from .game import GameInstance, ParallelConstant

    t = rng.uniform(0.2, 3.0, n)
    b = rng.uniform(0.2, 3.0, n)
    r = rng.uniform(0.5, 5.0, n)
    return GameInstance(rng.uniform(0.1, 10.0), r, ParallelConstant(t, b), discount)


def cmd_reproduce(args, out: Path) -> int:
    from .game import Exponential, PowerLaw

    files = {}
    for name, inst in (("discounted", fixtures.shared_bistable(True)), ("undiscounted", fixtures.shared_bistable(False))):
        pts = dynamics.find_rest_points(inst)
        entry = {"instance": instance_to_dict(inst), "rest_points": [p.to_dict() for p in pts]}
        interior = [p for p in pts if p.kind == "Interior"]
        if interior and name == "discounted":
            entry["instability_check"] = dynamics.check_unstable_conditions(inst, interior[0].location).to_dict()
        files[f"shared_{name}.json"] = entry
    cases = {}
    for m in (0.5, 1.0, 1.6, 3.0):
        rep = equilibrium.solve_constant_exponential(fixtures.constant_exponential_pair(m))
        cases[f"exponential_m={m}"] = rep.to_dict()
    for m in (1.0, 2.0, 4.0, 6.0):
        rep = equilibrium.solve_constant_powerlaw(fixtures.constant_rate_pair(m))
        cases[f"rate_m={m}"] = rep.to_dict()
    for m in (1.0, 10.0):
        cases[f"no_equilibrium_m={m}"] = equilibrium.detect_nonexistence_two_action(fixtures.no_equilibrium_pair(m)).to_dict()
    files["closed_forms.json"] = cases
    files["witnesses.json"] = {
        "exponential_t1": {str(t1): welfare.witness_exponential(1.0, 1.0, t1).to_dict() for t1 in (1e-2, 1e-3, 1e-4, 1e-5)},
        "exponential_t2": {str(t2): welfare.witness_exponential(1.0, t2).to_dict() for t2 in (2, 4, 6, 8, 10)},
        "powerlaw_t1": {str(t1): welfare.witness_powerlaw(t1).to_dict() for t1 in (0.25, 0.1, 0.01, 0.001)},
        "switching": {str(a): build_switching_counterexample(a, e).to_dict() for a, e in ((2.0, 0.3), (1.5, 0.2))},
    }
    rng = np.random.default_rng(args.seed)
    sweep = []
    for k in range(args.samples):
        disc = Exponential(float(rng.uniform(0.2, 2.0))) if k % 2 == 0 else PowerLaw(float(rng.choice([0, 0.3, 0.7, 1.0])))
        inst = _random_constant(rng, int(rng.integers(1, 6)), disc)
        rep = welfare.price_of_anarchy(inst)
        bound = rep.chi + 1 if rep.chi is not None else 2.0
        sweep.append({"ratio": rep.worst_ratio, "bound": bound, "within": bool(rep.worst_ratio <= bound + 1e-6)})
    files["poa_sweep.json"] = {"seed": args.seed, "samples": sweep,
                               "all_within": all(s["within"] for s in sweep)}
    for name, payload in files.items():
        write_atomic(out / name, dumps(payload))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", help="instance JSON file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--tol", type=float, default=Tolerances().equilibrium, help="equilibrium tolerance")
    common.add_argument("--seed", type=int, default=0)
    p = argparse.ArgumentParser(prog="mfcongestion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sojourn", parents=[common], help="sojourn times and KKT residuals")
    s.add_argument("--mu", type=float, nargs="+", help="mass on each action")
    s.add_argument("--mu1", type=float, help="mass on action 1 of a two-action game")
    s.set_defaults(func=cmd_sojourn)

    s = sub.add_parser("equilibrium", parents=[common], help="solve for stationary equilibria")
    s.set_defaults(func=cmd_equilibrium)

    s = sub.add_parser("dynamics", parents=[common], help="integrate the dynamics and find rest points")
    s.add_argument("--start", type=float, help="initial mass on action 1 (default m/2)")
    s.add_argument("--step", type=float, help="Euler step (default 1e-3 * max execution time)")
    s.add_argument("--t-end", type=float, help="end time (default 200 * max execution time)")
    s.add_argument("--record-every", type=int, default=1)
    s.add_argument("--grid-n", type=int, default=512)
    s.add_argument("--field-n", type=int, default=65)
    s.set_defaults(func=cmd_dynamics)

    s = sub.add_parser("poa", parents=[common], help="welfare ratio of equilibria to the optimum")
    s.set_defaults(func=cmd_poa)

    s = sub.add_parser("chi", parents=[common], help="characteristic number")
    s.set_defaults(func=cmd_chi)

    s = sub.add_parser("witness", parents=[common], help="build a worst-case instance")
    s.add_argument("--kind", choices=("exponential", "powerlaw", "switching"), required=True)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--t1", type=float, default=None)
    s.add_argument("--t2", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--eps", type=float, default=0.3)
    s.set_defaults(func=cmd_witness)

    s = sub.add_parser("reproduce", parents=[common], help="regenerate the reference results")
    s.add_argument("--samples", type=int, default=40, help="random instances in the welfare sweep")
    s.set_defaults(func=cmd_reproduce)
    return p


def _witness_defaults(args):
    if getattr(args, "command", None) != "witness":
        return
    if args.t1 is None:
        args.t1 = 1e-4 if args.kind == "exponential" else 0.01
    if args.alpha is None:
        args.alpha = 2.0 if args.kind == "switching" else 0.0


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    _witness_defaults(args)
    out = Path(args.out)
    try:
        return args.func(args, out)
    except InvalidInstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, RuntimeError, AssertionError) as exc:
        log.debug("solver failure", exc_info=True)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (TypeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
