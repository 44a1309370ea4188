"""``handsoff`` command line.

Exit codes: 0 success, 2 malformed input, 3 infeasible, 4 iteration limit,
5 codec or structure error, 6 divergence.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings

import numpy as np

from . import codec
from .errors import (
    CodecError,
    DivergenceError,
    HandsOffError,
    StructureViolationError,
    UnboundedSearchError,
)
from .model import is_controllable, plant_from_dict, spectral_info
from .netsim import ChannelModel, SimConfig, run_closed_loop, sweep_bits
from .solver import AdmmSettings, ControlProblem, build_reachability, minimum_time, solve_l1
from .structure import SwitchingSignal, extract_switching, theoretical_bits, verify_structure
from .svg import trace_svg

EXIT_OK = 0
EXIT_MALFORMED = 2
EXIT_INFEASIBLE = 3
EXIT_MAX_ITERS = 4
EXIT_CODEC = 5
EXIT_DIVERGED = 6

SEED_ENV = "HANDSOFF_SEED"


class InputError(Exception):
    """Malformed file or flag; maps to exit code 2."""


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


def load_problem(path, need_x0=True):
    """Parse a problem file into ``(plant, x0, T, N, lam, b)``; missing optional fields are None."""
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    try:
        plant = plant_from_dict(doc)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    x0 = doc.get("x0")
    if x0 is not None:
        try:
            x0 = np.asarray(x0, dtype=float)
        except (TypeError, ValueError) as exc:
            raise InputError(f"{path}: x0 is not numeric") from exc
        if x0.shape != (plant.n,):
            raise InputError(f"{path}: x0 must have length {plant.n}")
    elif need_x0:
        raise InputError(f"{path}: missing field 'x0'")
    T = doc.get("T")
    if T is not None and not (isinstance(T, (int, float)) and math.isfinite(T) and T > 0):
        raise InputError(f"{path}: T must be a positive number")
    if need_x0 and T is None:
        raise InputError(f"{path}: missing field 'T'")
    lam = doc.get("lambda")
    if lam is not None:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (plant.m,):
            raise InputError(f"{path}: lambda must have length {plant.m}")
    N = doc.get("N")
    if N is not None and (not isinstance(N, int) or N < 1):
        raise InputError(f"{path}: N must be a positive integer")
    b = doc.get("b", 8)
    if not isinstance(b, int) or not 1 <= b <= 32:
        raise InputError(f"{path}: b must be an integer in [1, 32]")
    return plant, x0, (float(T) if T is not None else None), N, lam, b


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_check(args):
    plant, x0, T, N, lam, b = load_problem(args.problem, need_x0=False)
    controllable, rank = is_controllable(plant)
    spectrum = spectral_info(plant.A)
    t_min = None
    if controllable and x0 is not None:
        try:
            t_min = minimum_time(plant, x0, tol=args.tol)
        except UnboundedSearchError:
            t_min = None
    report = {
        "n": plant.n,
        "m": plant.m,
        "controllable": controllable,
        "rank": rank,
        "omega": spectrum.omega,
        "a_nonsingular": spectrum.a_nonsingular,
        "eigenvalues": [[z.real, z.imag] for z in spectrum.eigenvalues],
        "minimum_time": t_min,
    }
    if args.json:
        _emit(report)
    else:
        print(f"plant: n={plant.n} m={plant.m}")
        print(f"controllable: {controllable} (Kalman rank {rank})")
        print(f"omega: {spectrum.omega:.6g}")
        print(f"A nonsingular: {spectrum.a_nonsingular}")
        print("minimum time: " + ("n/a" if t_min is None else f"{t_min:.6g}"))
    return EXIT_OK


def _solve(plant, x0, T, N, lam, tol):
    settings = AdmmSettings(eps_feas=tol) if tol else AdmmSettings()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        problem = ControlProblem(plant, x0, T, N=N, lam=lam)
        program = build_reachability(problem)
    return problem, solve_l1(program, settings)


def cmd_solve(args):
    plant, x0, T, N, lam, b = load_problem(args.problem)
    if args.n_grid is not None:
        N = args.n_grid
    problem, res = _solve(plant, x0, T, N, lam, args.tol)
    signal, fraction = extract_switching(res.u, T)
    report = verify_structure(signal, plant, T, fraction)
    summary = {
        "status": res.status,
        "J1": res.J1,
        "J0": res.J0,
        "N": problem.N,
        "iterations": res.iterations,
        "terminal_residual": res.terminal_residual,
        "switch_count": report.total_switches,
        "switch_counts": report.switch_counts,
        "bound": report.bound,
        "bound_applicable": report.bound_applicable,
        "sign_flip_violations": report.sign_flip_violations,
        "bang_bang_fraction": fraction,
        "signal": signal.to_json(),
    }
    if args.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"u{i + 1}" for i in range(plant.m)])
        for k, row in enumerate(res.u):
            w.writerow([repr(k * problem.dt)] + [repr(float(v)) for v in row])
        _write_text(args.out, buf.getvalue())
    _emit(summary)
    return {"optimal": EXIT_OK, "infeasible": EXIT_INFEASIBLE}.get(res.status, EXIT_MAX_ITERS)


def cmd_encode(args):
    try:
        signal = SwitchingSignal.from_json(_read_json(args.signal))
    except ValueError as exc:
        raise InputError(f"{args.signal}: {exc}") from exc
    packet = codec.encode(signal, args.bits)
    with open(args.out, "wb") as fh:
        fh.write(packet)
    header, payload = codec.bit_count(packet)
    out = {"header_bits": header, "payload_bits": payload, "bytes": len(packet),
           "switch_count": sum(signal.switch_counts())}
    if args.problem:
        plant = load_problem(args.problem, need_x0=False)[0]
        omega = spectral_info(plant.A).omega
        total, rate = theoretical_bits(plant.n, plant.m, args.bits, signal.T, omega)
        out["theoretical_bits"] = total
        out["theoretical_rate"] = rate
        out["overhead_bound"] = total + out["switch_count"] + 18 * signal.m
    _emit(out)
    return EXIT_OK


def cmd_decode(args):
    try:
        with open(args.packet, "rb") as fh:
            packet = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {args.packet}: {exc.strerror}") from exc
    signal = codec.decode(packet)
    doc = json.dumps(signal.to_json(), indent=2)
    if args.out:
        _write_text(args.out, doc + "\n")
    print(doc)
    return EXIT_OK


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env, 0)
    except ValueError as exc:
        raise InputError(f"{SEED_ENV} must be an integer, got {env!r}") from exc


def cmd_simulate(args):
    plant, x0, T, N, lam, b = load_problem(args.problem)
    config = SimConfig(horizons=args.horizons, T=T, b=args.bits or b, n_grid=N, lam=lam)
    channel = ChannelModel(bit_budget=args.budget, loss_prob=args.loss, seed=_seed(args))
    trace = run_closed_loop(plant, x0, config, channel)
    prefix = args.out
    _write_text(prefix + ".csv", trace.to_csv())
    _write_text(prefix + ".json", json.dumps(trace.to_json(), indent=2, sort_keys=True) + "\n")
    xs = np.array(trace.x)
    us = np.array(trace.u)
    _write_text(prefix + ".svg", trace_svg(trace.t, xs.T.tolist(), us.T.tolist()))
    _emit(trace.summary())
    return EXIT_OK


def parse_bits(text):
    """``"4..12"`` or ``"4,6,8"`` to a list of ints."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad bit list {text!r}") from exc
    if not values or not all(1 <= v <= 32 for v in values):
        raise argparse.ArgumentTypeError("bit widths must lie in [1, 32]")
    return values


def cmd_sweep(args):
    plant, x0, T, N, lam, b = load_problem(args.problem)
    config = SimConfig(horizons=args.horizons, T=T, n_grid=N, lam=lam)
    rows = sweep_bits(plant, x0, config, args.bits)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["b", "final_error", "total_bits"])
    for bb, err, bits in rows:
        w.writerow([bb, repr(err), bits])
    if args.out:
        _write_text(args.out, buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="handsoff",
                                description="Sparse (hands-off) control toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="controllability, spectrum and minimum time")
    c.add_argument("problem")
    c.add_argument("--json", action="store_true")
    c.add_argument("--tol", type=float, default=1e-3, help="minimum-time bisection tolerance")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("solve", help="L1-optimal control on a grid")
    s.add_argument("problem")
    s.add_argument("--n-grid", type=int, default=None)
    s.add_argument("--tol", type=float, default=None, help="terminal residual tolerance")
    s.add_argument("--out", help="control CSV (t,u1..um)")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("encode", help="switching-signal JSON to .hoc packet")
    e.add_argument("signal")
    e.add_argument("--bits", type=int, default=8)
    e.add_argument("--out", required=True)
    e.add_argument("--problem", help="problem file for the bit-budget comparison")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help=".hoc packet to switching-signal JSON")
    d.add_argument("packet")
    d.add_argument("--out")
    d.set_defaults(func=cmd_decode)

    m = sub.add_parser("simulate", help="networked closed loop over a lossy channel")
    m.add_argument("problem")
    m.add_argument("--horizons", type=int, default=1)
    m.add_argument("--loss", type=float, default=0.0)
    m.add_argument("--seed", type=lambda v: int(v, 0), default=None)
    m.add_argument("--budget", type=int, default=0, help="max packet bits (0: unlimited)")
    m.add_argument("--bits", type=int, default=None)
    m.add_argument("--out", required=True, help="output prefix for .csv/.json/.svg")
    m.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="final error and bits versus time-quantization width")
    w.add_argument("problem")
    w.add_argument("--bits", type=parse_bits, default=list(range(4, 13)))
    w.add_argument("--horizons", type=int, default=1)
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_MALFORMED if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except (CodecError, StructureViolationError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODEC
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (HandsOffError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
