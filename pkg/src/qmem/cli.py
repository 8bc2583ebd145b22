"""Command-line front end.

Exit status: 0 on success, 1 for usage errors and unreadable input, 2 when
a computation fails numerically.  Results go to ``--out`` or stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from . import __version__
from .builder import MemorySpec, module_rotation, qudit_config
from .linear import (
    dfs_decompose,
    is_hurwitz,
    passivity_residuals,
    ranks,
    rotate,
    to_state_space,
)
from .netdsl import NetDslError, NetworkLoopError, compile_network, parse_file
from .pulses import Pulse, PulseError, read_pulses, write_pulses
from .serialize import (
    cplx,
    dumps,
    matrix_to_json,
    model_from_json,
    model_to_json,
    protocol_to_json,
    pulse_metadata,
    pulse_to_csv,
    spec_from_json,
    state_space_to_json,
    trajectory_to_csv,
    vector_to_json,
)
from .sim import coherent_run, memory_systems, mismatch_sweep, propagate, run_protocol
from .slh import AlgebraicLoopError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

_PRESET = re.compile(r"^(?:qubit([12])|qudit(\d+)-([12]))$")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def _kappa(text: str) -> tuple[str, float]:
    name, _, value = text.partition("=")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIRROR=RATE, got {text!r}") from None


def _preset(name: str, gamma: float):
    m = _PRESET.match(name)
    if not m:
        raise UsageError(f"unknown preset {name!r} (qubit1, qubit2, quditN-1, quditN-2)")
    if m.group(1):
        n, which = 1, int(m.group(1))
    else:
        n, which = int(m.group(2)), int(m.group(3))
        if n < 1:
            raise UsageError("qudit preset needs at least one module")
    return MemorySpec(n, gamma), which


def _load_model(args):
    if bool(args.preset) == bool(args.model):
        raise UsageError("give exactly one of --preset or --model")
    if args.preset:
        spec, which = _preset(args.preset, args.gamma)
        return qudit_config(spec, which), spec
    path = Path(args.model)
    try:
        if path.suffix == ".qnet":
            overrides = {"gamma": args.gamma} if args.gamma_given else None
            return compile_network(parse_file(path), overrides), None
        return model_from_json(json.loads(path.read_text(encoding="utf-8"))), None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from None


def _spec(args) -> MemorySpec:
    if getattr(args, "spec", None):
        try:
            spec = spec_from_json(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        except OSError as exc:
            raise UsageError(f"cannot read {args.spec}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed JSON in {args.spec}: {exc}") from None
        return spec.with_overrides(**dict(args.kappa or []))
    return MemorySpec(args.n, args.gamma, dict(args.kappa or []))


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands -------------------------------------------------------------

def cmd_reduce(args):
    model, _ = _load_model(args)
    ss = to_state_space(model)
    _emit(dumps({"model": model_to_json(model), "state_space": state_space_to_json(ss)}), args.out)


def _rotation_json(U, ss):
    r = rotate(ss, U)
    return {"U": matrix_to_json(U), "A": matrix_to_json(r.A),
            "B": matrix_to_json(r.B), "C": matrix_to_json(r.C)}


def analysis_report(model, spec=None) -> dict:
    ss = to_state_space(model)
    rc, ro = ranks(ss)
    hurwitz, ev = is_hurwitz(ss, return_eigenvalues=True)
    dec = dfs_decompose(ss)
    report = {
        "eigenvalues": [cplx(z) for z in ev],
        "rank_ctrb": rc,
        "rank_obsv": ro,
        "hurwitz": hurwitz,
        "dfs_indices": list(dec.dfs_indices),
        "passivity_residuals": passivity_residuals(ss),
        "n_modes": ss.n,
        "n_ports": ss.m,
        "dfs_rotation": {"U": matrix_to_json(dec.U), "A": matrix_to_json(dec.rotated.A),
                         "B": matrix_to_json(dec.rotated.B),
                         "C": matrix_to_json(dec.rotated.C)},
    }
    if spec is not None:
        report["module_rotation"] = _rotation_json(module_rotation(spec.n_qubits), ss)
    return report


def cmd_analyze(args):
    model, spec = _load_model(args)
    _emit(dumps(analysis_report(model, spec)), args.out)


def cmd_pulse(args):
    spec = _spec(args)
    ss1, _, dfs = memory_systems(spec)
    dt = args.dt if args.dt is not None else 1e-3 / spec.gamma
    if args.kind == "write":
        start = -60 / spec.gamma if args.start is None else args.start
        end = 0.0 if args.end is None else args.end
        pulses = write_pulses(ss1, dfs, start, end, dt)
    else:
        start = 0.0 if args.start is None else args.start
        end = start + 60 / spec.gamma if args.end is None else args.end
        pulses = read_pulses(ss1, dfs, start, end, dt)
    if args.format == "json":
        _emit(dumps({"pulses": [pulse_metadata(p) for p in pulses]}), args.out)
        return
    if not 1 <= args.index <= len(pulses):
        raise UsageError(f"--index must lie in 1..{len(pulses)}")
    pulse = pulses[args.index - 1]
    _emit(pulse_to_csv(pulse), args.out)
    if args.out:
        Path(args.out).with_suffix(".json").write_text(dumps(pulse_metadata(pulse)),
                                                       encoding="utf-8")


def _read_pulse_csv(path) -> Pulse:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        t = np.array([float(r["t"]) for r in rows])
        z = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except (KeyError, ValueError, TypeError):
        raise UsageError(f"malformed pulse CSV {path} (expected header t,re,im)") from None
    if len(t) < 2:
        raise UsageError(f"pulse CSV {path} needs at least two samples")
    return Pulse(float(t[0]), float(t[1] - t[0]), z, label=Path(path).stem)


def cmd_simulate(args):
    model, _ = _load_model(args)
    ss = to_state_space(model)
    if args.rotate:
        if args.preset is None:
            raise UsageError("--rotate needs a memory --preset")
        spec, _ = _preset(args.preset, args.gamma)
        ss = rotate(ss, module_rotation(spec.n_qubits))
    c0 = np.zeros(ss.n, complex)
    if args.c0:
        if len(args.c0) != ss.n:
            raise UsageError(f"--c0 needs {ss.n} values")
        c0 = np.array(args.c0, complex)
    inputs = [_read_pulse_csv(args.input)] if args.input else []
    dt = args.dt if args.dt is not None else 1e-3
    traj = propagate(ss, inputs, c0, (args.t0, args.t1), dt)
    if args.format == "csv":
        _emit(trajectory_to_csv(traj), args.out)
        return
    summary = {
        "n_modes": ss.n,
        "n_ports": ss.m,
        "t_span": [float(args.t0), float(args.t1)],
        "dt": traj.dt,
        "c_final": vector_to_json(traj.c[-1]),
        "output_energy": float(trapezoid(np.sum(np.abs(traj.eta) ** 2, axis=1), dx=traj.dt)),
        "energy_residual": traj.energy_residual(),
    }
    _emit(dumps(summary), args.out)


def cmd_protocol(args):
    spec = _spec(args)
    if not args.t0 < args.t1 < args.t2 < args.t3:
        raise UsageError("stage times must satisfy t0 < t1 < t2 < t3")
    if args.dt is not None and not args.dt > 0:
        raise UsageError("--dt must be positive")
    beta = args.beta if args.beta is not None else [1.0] + [0.0] * (spec.n_qubits - 1)
    if len(beta) != spec.n_qubits:
        raise UsageError(f"--beta needs {spec.n_qubits} values")
    stages = dict(t0=args.t0, t1=args.t1, t2=args.t2, t3=args.t3, dt=args.dt)
    if args.coherent:
        result = coherent_run(spec, beta, **stages)
    else:
        try:
            result = run_protocol(spec, beta, args.alpha0, **stages)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.trajectory_dir:
        outdir = Path(args.trajectory_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        for name, traj in result.trajectories.items():
            (outdir / f"{name}.csv").write_text(trajectory_to_csv(traj), encoding="utf-8")
    _emit(dumps(protocol_to_json(result)), args.out)


def cmd_sweep(args):
    spec = _spec(args)
    rows = mismatch_sweep(spec, args.eps, args.duration, target=args.target, dt=args.dt)
    if args.format == "csv":
        cols = list(rows[0]) if rows else ["epsilon", "leakage_rate"]
        lines = [",".join(cols)] + [",".join(repr(float(r[c])) for c in cols) for r in rows]
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(dumps({"target": args.target, "duration": float(args.duration),
                     "rows": rows}), args.out)


# -- parser --------------------------------------------------------------------

def _add_model_source(p):
    p.add_argument("--preset", help="qubit1, qubit2, quditN-1 or quditN-2")
    p.add_argument("--model", help=".qnet network or JSON model file")
    p.add_argument("--gamma", type=float, default=None, help="decay rate (default 1)")


def _add_spec(p):
    p.add_argument("--n", type=int, default=1, help="number of qubit modules")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--kappa", type=_kappa, action="append", metavar="MIRROR=RATE",
                   help="mirror rate override, e.g. c1=0.55 or 2.c1=0.55")
    p.add_argument("--spec", help="MemorySpec JSON file (overrides --n/--gamma)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmem", description="Passive cavity memory networks.")
    parser.add_argument("--version", action="version", version=f"qmem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reduce", help="compose a network into a single model")
    _add_model_source(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("analyze", help="spectrum, ranks, Hurwitz test, DFS modes")
    _add_model_source(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pulse", help="write or read wavepackets as CSV")
    _add_spec(p)
    p.add_argument("--kind", choices=["write", "read"], default="write")
    p.add_argument("--start", type=float)
    p.add_argument("--end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--index", type=int, default=1, help="1-based module index")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pulse)

    p = sub.add_parser("simulate", help="propagate one model over a time span")
    _add_model_source(p)
    p.add_argument("--rotate", action="store_true", help="use per-module rotated modes")
    p.add_argument("--c0", type=_complex, nargs="+")
    p.add_argument("--input", help="pulse CSV (t,re,im) driving port 1")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=10.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("protocol", help="full write/store/read cycle")
    _add_spec(p)
    p.add_argument("--beta", type=_complex, nargs="+")
    p.add_argument("--alpha0", type=_complex)
    p.add_argument("--coherent", action="store_true", help="treat --beta as coherent amplitudes")
    p.add_argument("--t0", type=float, default=-60.0)
    p.add_argument("--t1", type=float, default=0.0)
    p.add_argument("--t2", type=float, default=100.0)
    p.add_argument("--t3", type=float, default=160.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--trajectory-dir", help="also write stage trajectories as CSV here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("sweep", help="storage leakage under mirror-rate mismatch")
    _add_spec(p)
    p.add_argument("--eps", type=float, nargs="+", default=[0.0, 0.001, 0.01, 0.05])
    p.add_argument("--duration", type=float, default=100.0)
    p.add_argument("--target", default="c1", choices=["p1", "p2", "c1", "c2"])
    p.add_argument("--dt", type=float)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "preset") and "model" in vars(args):
            args.gamma_given = args.gamma is not None
            if args.gamma is None:
                args.gamma = 1.0
        if getattr(args, "gamma", 1.0) is not None and not args.gamma > 0:
            raise UsageError("--gamma must be positive")
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _warn_to_stderr
            args.func(args)
    except UsageError as exc:
        print(f"qmem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AlgebraicLoopError, NetworkLoopError, PulseError, np.linalg.LinAlgError,
            NumericalFailure, FloatingPointError) as exc:
        print(f"qmem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NetDslError, ValueError) as exc:
        print(f"qmem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except BrokenPipeError:  # reader closed early, e.g. `| head`
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    return EXIT_OK


def _warn_to_stderr(message, category, filename, lineno, file=None, line=None):
    print(f"qmem: warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
