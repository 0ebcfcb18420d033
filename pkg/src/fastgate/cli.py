"""Command-line front end: ``fastgate <command> [options]``.

Every command accepts ``--config FILE.json``; keys are option names with
dashes replaced by underscores, and explicit flags win over the file. JSON
outputs wrap the result as ``{"version", "config", "result"}``; CSV outputs
start with ``#`` comment lines carrying the same metadata, then a header row.

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from fastgate import __version__
from fastgate.errors import InvalidArgument, NumericalFailure

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3
HEATING_LIMITED_TIME_S = 0.1  # total run time allowed by a 10 /s heating rate
SIMULATION_TARGET = 0.7
JOINT_PULSE_MAX_IONS = 3


# ---------------------------------------------------------------- plumbing


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def _emit_json(args, result):
    doc = {"version": __version__, "config": _config_echo(args), "result": result}
    text = json.dumps(doc, indent=2, sort_keys=False)
    _write(args.output, text + "\n")


def _emit_csv(args, fieldnames, rows):
    buf = io.StringIO()
    buf.write(f"# version: {__version__}\n")
    buf.write(f"# config: {json.dumps(_config_echo(args), sort_keys=True)}\n")
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    _write(args.output, buf.getvalue())


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read_csv_rows(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class _Cache:
    """Directory of JSON blobs keyed by a hash of their inputs; a no-op without a directory."""

    def __init__(self, root):
        self.root = Path(root) if root else None
        if self.root:
            self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(*parts) -> str:
        blob = json.dumps(parts, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:32]

    def get(self, key):
        if self.root is None:
            return None
        f = self.root / f"{key}.json"
        return json.loads(f.read_text()) if f.exists() else None

    def put(self, key, value):
        if self.root is not None:
            (self.root / f"{key}.json").write_text(json.dumps(value))


def _trap(args, L):
    from fastgate.ion_chain import TrapConfig, axial_frequency

    return TrapConfig(
        ion_count=L,
        axial_freq=args.axial_freq or axial_frequency(L),
        transverse_freq=args.transverse_freq,
        base_lamb_dicke=args.eta0,
        thermal_occupation=args.nbar,
    )


def _modes(args, cfg):
    from fastgate.ion_chain import ModeStructure, normal_modes

    cache = _Cache(args.cache)
    key = cache.key("modes", asdict(cfg))
    hit = cache.get(key)
    if hit is not None:
        return ModeStructure.from_dict(hit)
    m = normal_modes(cfg)
    cache.put(key, m.to_dict())
    return m


def _spec(args, n, pair=(0, 1)):
    from fastgate.optimizer import OptimizationSpec

    return OptimizationSpec(
        n=n, pair=tuple(pair), objective=args.objective, fidelity_floor=args.floor,
        restarts=args.restarts, seed=args.seed,
    )


def _pair_gates(args, L, n):
    from fastgate.gate_design import GateOutcome
    from fastgate.optimizer import sweep_pairs

    cfg = _trap(args, L)
    spec = _spec(args, n)
    cache = _Cache(args.cache)
    key = cache.key("pairs", asdict(cfg), asdict(spec))
    hit = cache.get(key)
    if hit is not None:
        return cfg, [GateOutcome.from_dict(d) for d in hit]
    out = sweep_pairs(cfg, n, _modes(args, cfg), spec, workers=args.workers)
    cache.put(key, [g.to_dict() for g in out])
    return cfg, out


def _gate(args, L, n, pair):
    from fastgate.gate_design import GateOutcome
    from fastgate.optimizer import optimize_gate

    cfg = _trap(args, L)
    spec = _spec(args, n, pair)
    cache = _Cache(args.cache)
    key = cache.key("gate", asdict(cfg), asdict(spec))
    hit = cache.get(key)
    if hit is not None:
        return cfg, GateOutcome.from_dict(hit)
    log = open(args.log, "w") if getattr(args, "log", None) else None
    try:
        g = optimize_gate(cfg, _modes(args, cfg), spec, log=log, workers=args.workers)
    finally:
        if log:
            log.close()
    cache.put(key, g.to_dict())
    return cfg, g


# ---------------------------------------------------------------- commands


def cmd_modes(args):
    cfg = _trap(args, args.ions)
    _emit_json(args, _modes(args, cfg).to_dict())


def cmd_optimize(args):
    _, g = _gate(args, args.ions, args.n, args.pair)
    _emit_json(args, g.to_dict())


def cmd_umq(args):
    from fastgate.umq_composer import umq_plan

    _, gates = _pair_gates(args, args.ions, args.n)
    plan = umq_plan(args.ions, gates, target_ion=args.target)
    _emit_json(args, plan.to_dict(include_reverse=args.reverse))


def cmd_sweep(args):
    from fastgate.umq_composer import HUBBARD_UMQ_COUNT, heating_time_budget, ms_time, simulation_threshold, umq_plan

    thr = simulation_threshold(HUBBARD_UMQ_COUNT, SIMULATION_TARGET)
    budget = heating_time_budget(args.heating_rate, HEATING_LIMITED_TIME_S, HUBBARD_UMQ_COUNT).per_umq_time
    rows = []
    for L in sorted(args.ions):
        for n in sorted(args.n):
            _, gates = _pair_gates(args, L, n)
            plan = umq_plan(L, gates)
            rows.append({
                "ions": L, "n": n, "fast_gates": plan.fast_gate_count,
                "umq_error": 1.0 - plan.fidelity_bound, "umq_time_s": plan.duration,
                "feasible": plan.feasible, "threshold_error": 1.0 - thr,
                "heating_budget_time_s": budget, "ms_time_s": ms_time(L),
            })
    _emit_csv(args, list(rows[0]), rows)


def cmd_pulse_error(args):
    from fastgate.oracle_sim import pulse_error_gate, pulse_infidelity
    from fastgate.umq_composer import HUBBARD_UMQ_COUNT, fast_gate_count, simulation_threshold, uncorrelated_error_aggregate

    _, g = _gate(args, args.ions, args.n, (0, 1))
    modes = _modes(args, _trap(args, args.ions))
    base = pulse_error_gate(g.sequence, modes, 1.0, method=args.method).infidelity
    count = fast_gate_count(args.ions)
    thr = 1.0 - simulation_threshold(HUBBARD_UMQ_COUNT, SIMULATION_TARGET)
    # the joint state only fits in memory for short chains; beyond that fall
    # back to the fidelity drop, which mixes in the design error
    joint = args.ions <= JOINT_PULSE_MAX_IONS
    rows = []
    for xi in sorted(args.xi, reverse=True):
        r = pulse_error_gate(g.sequence, modes, xi, method=args.method)
        if xi == 1.0:
            added = 0.0
        elif joint:
            added = pulse_infidelity(g.sequence, modes, xi)
        else:
            added = max(r.infidelity - base, 0.0)
        rows.append({
            "xi": xi, "rotational_infidelity": r.rotational_infidelity, "gate_infidelity": r.infidelity,
            "added_gate_error": added, "umq_error_estimate": uncorrelated_error_aggregate(added, count),
            "threshold_error": thr,
        })
    _emit_csv(args, list(rows[0]), rows)


def cmd_noise(args):
    from fastgate.noise_mc import noise_sweep

    _, g = _gate(args, args.ions, args.n, (0, 1))
    modes = _modes(args, _trap(args, args.ions))
    rows = noise_sweep(g.sequence, modes, args.rates, args.channel, args.trajectories, args.seed, workers=args.workers)
    _emit_csv(args, ["rate_per_s", "mean_infidelity", "stderr", "trajectories"], [asdict(r) for r in rows])


def cmd_fit(args):
    from fastgate.analysis import power_law_fit, rep_rate_exponent

    rows = _read_csv_rows(args.input)
    try:
        pts = [(float(r[args.x_column]), float(r[args.y_column])) for r in rows]
    except KeyError as exc:
        raise InvalidArgument(f"column {exc} not in {args.input}") from None
    fit = power_law_fit(pts)
    out = fit.to_dict()
    out["rep_rate_exponent"] = rep_rate_exponent(fit.exponent)
    _emit_json(args, out)


# ---------------------------------------------------------------- parser


def _ints(text):
    return [int(v) for v in str(text).split(",")] if not isinstance(text, list) else [int(v) for v in text]


def _floats(text):
    return [float(v) for v in str(text).split(",")] if not isinstance(text, list) else [float(v) for v in text]


def _add_trap(p):
    p.add_argument("--axial-freq", type=float, default=None, help="COM axial frequency in Hz (default: scaling law)")
    p.add_argument("--transverse-freq", type=float, default=5e6)
    p.add_argument("--eta0", type=float, default=0.16, help="two-ion Lamb-Dicke parameter")
    p.add_argument("--nbar", type=float, default=0.1, help="thermal occupation per mode")


def _add_opt(p):
    p.add_argument("--objective", choices=["max-fidelity", "min-time"], default="max-fidelity")
    p.add_argument("--floor", type=float, default=None, help="fidelity floor")
    p.add_argument("--restarts", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastgate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--output", default="-", help="output file (default stdout)")
    common.add_argument("--cache", default=None, help="cache directory for modes and optimised gates")
    common.add_argument("--workers", type=int, default=1)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("modes", parents=[common], help="equilibrium and axial modes")
    p.add_argument("--ions", type=int, required=True)
    _add_trap(p)
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("optimize", parents=[common], help="optimise one pair gate")
    p.add_argument("--ions", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pair", type=int, nargs=2, default=[0, 1])
    p.add_argument("--log", default=None, help="JSON-lines restart log")
    _add_trap(p)
    _add_opt(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("umq", parents=[common], help="UMQ plan for one chain")
    p.add_argument("--ions", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--target", type=int, default=0)
    p.add_argument("--reverse", action="store_true", help="count the reversing pass too")
    _add_trap(p)
    _add_opt(p)
    p.set_defaults(func=cmd_umq)

    p = sub.add_parser("sweep", parents=[common], help="UMQ error and time over chain sizes and n")
    p.add_argument("--ions", type=_ints, required=True, help="comma-separated list")
    p.add_argument("--n", type=_ints, required=True, help="comma-separated list")
    p.add_argument("--heating-rate", type=float, default=10.0)
    _add_trap(p)
    _add_opt(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pulse-error", parents=[common], help="gate error against pulse area error")
    p.add_argument("--ions", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--xi", type=_floats, required=True, help="comma-separated pulse area scales")
    p.add_argument("--method", choices=["separable", "full"], default="separable")
    _add_trap(p)
    _add_opt(p)
    p.set_defaults(func=cmd_pulse_error)

    p = sub.add_parser("noise", parents=[common], help="trajectory sweep under heating or dephasing")
    p.add_argument("--ions", type=int, default=2)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--channel", choices=["heating", "dephasing"], required=True)
    p.add_argument("--rates", type=_floats, required=True, help="comma-separated rates in 1/s")
    p.add_argument("--trajectories", type=int, default=1000)
    _add_trap(p)
    _add_opt(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("fit", parents=[common], help="power-law fit of a CSV column pair")
    p.add_argument("--input", required=True)
    p.add_argument("--x-column", default="n")
    p.add_argument("--y-column", default="time_s")
    p.set_defaults(func=cmd_fit)
    return parser


def _parse(parser, argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            conf = json.loads(Path(known.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
        choices = parser._subparsers._group_actions[0].choices
        command = next((a for a in argv if a in choices), None)
        if command is None:
            parser.error("a command is required")
        sub = choices[command]
        actions = {a.dest: a for a in sub._actions}
        bad = sorted(set(conf) - set(actions))
        if bad:
            parser.error(f"unknown config keys: {', '.join(bad)}")
        for k, v in conf.items():
            if actions[k].type is not None and not isinstance(v, list):
                conf[k] = actions[k].type(v)
            # options given in the file are no longer required on the command line
            actions[k].required = False
        sub.set_defaults(**conf)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _parse(parser, argv)
    try:
        args.func(args)
    except InvalidArgument as exc:
        print(f"fastgate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"fastgate: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
