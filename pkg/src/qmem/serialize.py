"""JSON and CSV formats for models, pulses, trajectories and results.

Complex scalars are written as ``[re, im]`` and matrices as lists of rows of
such pairs.  Floats use Python's shortest round-trip repr, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .builder import MemorySpec, StorageState
from .linear import StateSpace
from .pulses import Pulse
from .sim import ProtocolResult, Trajectory
from .slh import AdjacencyMap, SlhModel

__all__ = [
    "dumps",
    "cplx",
    "matrix_to_json",
    "matrix_from_json",
    "model_to_json",
    "model_from_json",
    "state_space_to_json",
    "adjacency_to_json",
    "adjacency_from_json",
    "spec_to_json",
    "spec_from_json",
    "pulse_to_csv",
    "pulse_metadata",
    "trajectory_to_csv",
    "protocol_to_json",
]


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def cplx(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def uncplx(pair) -> complex:
    if isinstance(pair, (int, float)):
        return complex(pair)
    re, im = pair
    return complex(float(re), float(im))


def matrix_to_json(M) -> list:
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return [[cplx(x) for x in row] for row in M]


def matrix_from_json(rows, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=complex)
    if shape[0] * shape[1] == 0:
        return out
    if len(rows) != shape[0] or any(len(r) != shape[1] for r in rows):
        raise ValueError(f"matrix does not have shape {shape}")
    for i, row in enumerate(rows):
        for j, x in enumerate(row):
            out[i, j] = uncplx(x)
    return out


def vector_to_json(v) -> list:
    return [cplx(x) for x in np.ravel(v)]


def model_to_json(model: SlhModel) -> dict:
    return {
        "n_modes": model.n_modes,
        "n_ports": model.n_ports,
        "S": matrix_to_json(model.S) if model.n_ports else [],
        "K": matrix_to_json(model.K) if model.K.size else [[] for _ in range(model.n_ports)],
        "Omega": matrix_to_json(model.Omega) if model.n_modes else [],
        "port_labels": list(model.port_labels),
    }


def model_from_json(data: dict) -> SlhModel:
    try:
        n, m = int(data["n_modes"]), int(data["n_ports"])
        S = matrix_from_json(data["S"], (m, m))
        K = matrix_from_json(data["K"], (m, n))
        Omega = matrix_from_json(data["Omega"], (n, n))
        labels = tuple(data.get("port_labels") or ())
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model JSON: {exc}") from None
    return SlhModel(S, K, Omega, labels)


def state_space_to_json(ss: StateSpace) -> dict:
    return {
        "n_modes": ss.n,
        "n_ports": ss.m,
        "A": matrix_to_json(ss.A) if ss.n else [],
        "B": matrix_to_json(ss.B) if ss.B.size else [],
        "C": matrix_to_json(ss.C) if ss.C.size else [],
        "D": matrix_to_json(ss.D) if ss.m else [],
    }


def adjacency_to_json(adj: AdjacencyMap) -> dict:
    return {"connections": [list(c) for c in adj.connections]}


def adjacency_from_json(data: dict) -> AdjacencyMap:
    return AdjacencyMap(tuple(tuple(c) for c in data["connections"]))


def spec_to_json(spec: MemorySpec) -> dict:
    return {
        "n_qubits": spec.n_qubits,
        "gamma": float(spec.gamma),
        "kappa_overrides": {k: float(v) for k, v in spec.kappa_overrides.items()},
    }


def spec_from_json(data: dict) -> MemorySpec:
    return MemorySpec(int(data.get("n_qubits", 1)), float(data.get("gamma", 1.0)),
                      dict(data.get("kappa_overrides") or {}))


def pulse_to_csv(pulse: Pulse) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "re", "im"])
    for t, z in zip(pulse.times, pulse.samples):
        w.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])
    return buf.getvalue()


def pulse_metadata(pulse: Pulse) -> dict:
    return {
        "label": pulse.label,
        "norm_constant": float(pulse.norm_constant),
        "t_switch": None if pulse.t_ref is None else float(pulse.t_ref),
        "dt": float(pulse.dt),
    }


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["t"]
    for k in range(traj.c.shape[1]):
        header += [f"re(c_{k + 1})", f"im(c_{k + 1})"]
    for k in range(traj.eta.shape[1]):
        header += [f"re(eta_{k + 1})", f"im(eta_{k + 1})"]
    w.writerow(header)
    for t, c, eta in zip(traj.t, traj.c, traj.eta):
        row = [repr(float(t))]
        for z in np.concatenate([c, eta]):
            row += [repr(float(z.real)), repr(float(z.imag))]
        w.writerow(row)
    return buf.getvalue()


def storage_state_to_json(state: StorageState) -> dict:
    return {
        "labels": state.labels,
        "coefficients": vector_to_json(state.coefficients),
        "leaked": float(state.leaked),
    }


def protocol_to_json(result: ProtocolResult) -> dict:
    t0, t1, t2, t3 = result.stage_bounds
    out = {
        "mode": result.mode,
        "n_qubits": result.n_qubits,
        "gamma": float(result.gamma),
        "stages": {"t0": float(t0), "t1": float(t1), "t2": float(t2), "t3": float(t3)},
        "dt": float(result.dt),
        "target": vector_to_json(result.target),
        "alpha0": None if result.alpha0 is None else cplx(result.alpha0),
        "write_efficiency": [float(x) for x in result.write_efficiency],
        "stored_amplitudes": vector_to_json(result.stored_amplitudes),
        "storage_drift": float(result.storage_drift),
        "readout_overlap": float(result.readout_overlap),
        "roundtrip_fidelity": float(result.roundtrip_fidelity),
        "retrieved_amplitudes": vector_to_json(result.retrieved_amplitudes),
        "retrieval_phase": float(result.retrieval_phase),
        "energy_residuals": {k: float(v) for k, v in result.energy_residuals.items()},
        "write_pulse_overlaps": np.asarray(result.write_pulse_overlaps, float).tolist(),
        "read_pulse_overlaps": np.asarray(result.read_pulse_overlaps, float).tolist(),
        "norm_constants": {k: [float(x) for x in v] for k, v in result.norm_constants.items()},
        "storage_state": (
            None if result.storage_state is None else storage_state_to_json(result.storage_state)
        ),
    }
    return out
