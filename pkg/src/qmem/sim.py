"""Single-excitation and mean-field transport, and the write/store/read cycle.

Inside the one-photon sector (and for coherent-state mean fields) a passive
network is an ordinary linear filter::

    c'(t) = A c(t) + B xi(t),     eta(t) = C c(t) + D xi(t)

where ``c`` holds the mode amplitudes, ``xi`` the input envelopes and ``eta``
the output envelopes.  :func:`propagate` integrates it step by step with the
exact propagator of a cubic interpolant of the sampled input.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
import scipy.linalg as la
from scipy.integrate import trapezoid

from .builder import (
    MemorySpec,
    StorageState,
    dfs_mode_indices,
    module_rotation,
    qubit_config,
    qudit_config,
    storage_state_from_modes,
)
from .linear import StateSpace, rotate, to_state_space
from .pulses import Pulse, norm, overlap, read_pulses, superpose, time_grid, write_pulses

__all__ = [
    "Trajectory",
    "ProtocolResult",
    "propagate",
    "run_protocol",
    "coherent_run",
    "mismatch_sweep",
    "memory_systems",
]

# cubic through the samples at local offsets -1, 0, 1, 2 (units of dt)
_NODES = np.array([-1.0, 0.0, 1.0, 2.0])
_VINV = np.linalg.inv(np.vander(_NODES, 4, increasing=True))
_DEGREE = 3


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution of one :func:`propagate` call.

    ``flux[k]`` is the net energy injected during step ``k`` (input minus
    output), integrated exactly for the interpolated input.
    """

    t: np.ndarray
    c: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    flux: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def energy_residual(self, method: str = "exact") -> float:
        """Gain in stored energy minus net injected energy.

        ``method="trapezoid"`` integrates the sampled fluxes instead, which
        adds an ``O(dt^2)`` quadrature error.
        """
        if method == "exact" and self.flux is not None:
            net_in = float(np.sum(self.flux))
        elif method in ("exact", "trapezoid"):
            flux = np.sum(np.abs(self.xi) ** 2, axis=1) - np.sum(np.abs(self.eta) ** 2, axis=1)
            net_in = trapezoid(flux, dx=self.dt) if len(self.t) > 1 else 0.0
        else:
            raise ValueError(f"unknown method {method!r}")
        gain = np.sum(np.abs(self.c[-1]) ** 2) - np.sum(np.abs(self.c[0]) ** 2)
        return float(gain - net_in)

    def output(self, port: int = 0, label: str = "") -> Pulse:
        return Pulse(float(self.t[0]), self.dt, self.eta[:, port], label=label)


def _augmented(A, B):
    """Generator of the state ``c`` joined with a cubic input and its derivatives."""
    n, m = B.shape
    size = n + (_DEGREE + 1) * m
    M = np.zeros((size, size), dtype=complex)
    M[:n, :n] = A
    M[:n, n:n + m] = B
    for j in range(_DEGREE):
        lo = n + j * m
        M[lo:lo + m, lo + m:lo + 2 * m] = np.eye(m)
    return M


def _key(*arrays):
    return tuple((a.tobytes(), a.shape) for a in arrays)


def _unkey(key):
    return [np.frombuffer(b, dtype=complex).reshape(shape) for b, shape in key]


def _step_operators(A: np.ndarray, B: np.ndarray, dt: float):
    """Propagator ``E`` and the weights ``G_j = int_0^dt e^{A(dt-s)} B s^j/j! ds``."""
    return _step_operators_cached(_key(A, B), float(dt))


@lru_cache(maxsize=64)
def _step_operators_cached(key, dt):
    A, B = _unkey(key)
    n, m = B.shape
    F = la.expm(_augmented(A, B) * dt)
    E = F[:n, :n]
    G = [F[:n, n + j * m:n + (j + 1) * m] for j in range(_DEGREE + 1)]
    return E, G


@lru_cache(maxsize=64)
def _flux_weight(key, dt):
    """``W`` with ``x0^H W x0`` the net input energy over one step (Van Loan)."""
    A, B, C, D = _unkey(key)
    n, m = B.shape
    M = _augmented(A, B)
    size = M.shape[0]
    inp = np.zeros((m, size), dtype=complex)
    inp[:, n:n + m] = np.eye(m)
    out = np.zeros((C.shape[0], size), dtype=complex)
    out[:, :n] = C
    out[:, n:n + m] = D
    Q = inp.conj().T @ inp - out.conj().T @ out
    big = np.zeros((2 * size, 2 * size), dtype=complex)
    big[:size, :size] = -M.conj().T
    big[:size, size:] = Q
    big[size:, size:] = M
    F = la.expm(big * dt)
    W = F[size:, size:].conj().T @ F[:size, size:]
    return (W + W.conj().T) / 2


def _ghost(u0, u1, u2):
    return 3 * u0 - 3 * u1 + u2


def _input_derivatives(U: np.ndarray, dt: float) -> np.ndarray:
    """Derivatives ``u^(j)`` at the start of each step, shape ``(steps, 4, m)``."""
    n_samples, m = U.shape
    if n_samples < 3:
        padded = np.vstack([2 * U[0] - U[-1], U, 2 * U[-1] - U[0]])
    else:
        padded = np.vstack([_ghost(U[0], U[1], U[2]), U, _ghost(U[-1], U[-2], U[-3])])
    n_steps = n_samples - 1
    window = np.stack([padded[j:j + n_steps] for j in range(4)], axis=1)
    coef = np.einsum("ij,kjm->kim", _VINV, window)  # powers of s/dt
    scale = np.array([factorial(j) / dt ** j for j in range(_DEGREE + 1)])
    return coef * scale[None, :, None]


def propagate(ss: StateSpace, inputs, c0, t_span, dt: float) -> Trajectory:
    """Integrate the linear filter over ``t_span`` from the amplitudes ``c0``.

    Parameters
    ----------
    ss : StateSpace
    inputs : sequence of Pulse or None
        One entry per port; ``None`` (or a short list) means vacuum.  Pulses
        must share the step of the grid; they are zero outside their support.
    c0 : array_like
        Initial mode amplitudes.
    t_span : (float, float)
    dt : float
        Requested step; shrunk slightly if the span is not a multiple of it.
    """
    c0 = np.asarray(c0, dtype=complex).ravel()
    if c0.shape != (ss.n,):
        raise ValueError(f"c0 has {c0.size} entries, system has {ss.n} modes")
    inputs = list(inputs or [])
    if len(inputs) > ss.m:
        raise ValueError(f"{len(inputs)} inputs given for a {ss.m}-port system")
    inputs += [None] * (ss.m - len(inputs))

    t_start, t_end = t_span
    n_steps, dt = time_grid(t_start, t_end, dt)
    t = t_start + dt * np.arange(n_steps + 1)
    U = np.zeros((n_steps + 1, ss.m), dtype=complex)
    for port, pulse in enumerate(inputs):
        if pulse is not None:
            U[:, port] = pulse.on_grid(t_start, dt, n_steps + 1)

    A, B = np.ascontiguousarray(ss.A), np.ascontiguousarray(ss.B)
    C, D = np.ascontiguousarray(ss.C), np.ascontiguousarray(ss.D)
    E, G = _step_operators(A, B, dt)
    c = np.empty((n_steps + 1, ss.n), dtype=complex)
    c[0] = c0
    derivs = _input_derivatives(U, dt)
    if np.any(U):
        inc = np.einsum("kjm,jnm->kn", derivs, np.stack(G))
        for k in range(n_steps):
            c[k + 1] = E @ c[k] + inc[k]
    else:
        for k in range(n_steps):
            c[k + 1] = E @ c[k]
    eta = c @ C.T + U @ D.T

    W = _flux_weight(_key(A, B, C, D), float(dt))
    x = np.concatenate([c[:-1], derivs.reshape(n_steps, -1)], axis=1)
    flux = np.einsum("ki,ij,kj->k", x.conj(), W, x).real
    return Trajectory(t, c, eta, U, flux)


@dataclass(eq=False)
class ProtocolResult:
    """Outcome of a write/store/read cycle.

    Amplitude-valued fields are complex; ``write_efficiency`` is
    ``|c_dfs(t1)|^2`` per module (a mean photon number in coherent mode).
    Overlap-type figures are phase-insensitive and normalized by the ideal
    stored energy, so they lie in ``[0, 1]``.
    """

    mode: str
    n_qubits: int
    gamma: float
    stage_bounds: tuple
    dt: float
    target: np.ndarray
    alpha0: complex | None
    write_efficiency: list
    stored_amplitudes: np.ndarray
    storage_drift: float
    readout_overlap: float
    roundtrip_fidelity: float
    retrieved_amplitudes: np.ndarray
    retrieval_phase: float
    energy_residuals: dict
    write_pulse_overlaps: np.ndarray
    read_pulse_overlaps: np.ndarray
    norm_constants: dict
    storage_state: StorageState | None = None
    trajectories: dict = field(default_factory=dict, repr=False)
    pulses: dict = field(default_factory=dict, repr=False)


def memory_systems(spec: MemorySpec):
    """Rotated (write/read, storage) systems and the storage-mode indices."""
    U = module_rotation(spec.n_qubits)
    ss1 = rotate(to_state_space(qudit_config(spec, 1)), U)
    ss2 = rotate(to_state_space(qudit_config(spec, 2)), U)
    return ss1, ss2, dfs_mode_indices(spec.n_qubits)


def _gram(pulses):
    return np.array([[abs(overlap(p, q)) for q in pulses] for p in pulses])


def _three_stages(spec, amplitudes, t0, t1, t2, t3, dt, envelope=None):
    if not t0 < t1 < t2 < t3:
        raise ValueError("stage times must satisfy t0 < t1 < t2 < t3")
    gamma = spec.gamma
    dt = 1e-3 / gamma if dt is None else dt
    if t1 - t0 < 20 / gamma:
        warnings.warn("write window shorter than 20/gamma; truncation error dominates")

    ss1, ss2, dfs = memory_systems(spec)
    xis = write_pulses(ss1, dfs, t0, t1, dt)
    if envelope is None:
        target = np.asarray(amplitudes, dtype=complex)
        drive = superpose(xis, target, label="xi")
    else:
        drive = envelope
        target = np.array([overlap(x, drive) for x in xis])

    write = propagate(ss1, [drive], np.zeros(ss1.n), (t0, t1), dt)
    c_t1 = write.c[-1]
    store = propagate(ss2, [], c_t1, (t1, t2), dt)
    read = propagate(ss1, [], store.c[-1], (t2, t3), dt)

    reads = read_pulses(ss1, dfs, t2, t3, dt)
    out = read.output(0, label="out")
    retrieved = np.array([overlap(p, out) for p in reads])
    stored = c_t1[dfs]
    expected = superpose(reads, target, label="expected")

    ideal = float(np.sum(np.abs(target) ** 2))
    emitted = norm(out) ** 2
    if ideal > 0:
        readout = abs(overlap(expected, out)) ** 2 / (norm(expected) ** 2 * ideal)
        inner = np.vdot(target, retrieved)
        roundtrip = abs(inner) ** 2 / ideal ** 2
        phase = float(np.angle(inner))
    else:
        readout = roundtrip = max(0.0, 1.0 - emitted)
        phase = 0.0

    drift = np.abs(np.abs(store.c[:, dfs]) - np.abs(c_t1[dfs])).max() if dfs else 0.0
    return dict(
        target=target,
        write_efficiency=[float(abs(a) ** 2) for a in stored],
        stored_amplitudes=stored,
        storage_drift=float(drift),
        readout_overlap=float(min(1.0, readout)),
        roundtrip_fidelity=float(min(1.0, roundtrip)),
        retrieved_amplitudes=retrieved,
        retrieval_phase=phase,
        energy_residuals={
            "write": write.energy_residual(),
            "store": store.energy_residual(),
            "read": read.energy_residual(),
        },
        write_pulse_overlaps=_gram(xis),
        read_pulse_overlaps=_gram(reads),
        norm_constants={
            "write": [p.norm_constant for p in xis],
            "read": [p.norm_constant for p in reads],
        },
        dt=write.dt,
        trajectories={"write": write, "store": store, "read": read},
        pulses={"write": xis, "read": reads, "drive": drive, "output": out},
        modes_t1=module_rotation(spec.n_qubits) @ c_t1,
    )


def run_protocol(spec: MemorySpec, beta, alpha0: complex | None = None,
                 t0: float = -60.0, t1: float = 0.0, t2: float = 100.0,
                 t3: float = 160.0, dt: float | None = None) -> ProtocolResult:
    """Store ``alpha0 |vac> + sum_k beta_k |1_{xi_k}>`` and read it back.

    Writing and read-out use configuration 1, storage configuration 2; the
    mode amplitudes carry over unchanged at each switch.  ``alpha0`` defaults
    to the real value completing the normalization.  ``dt`` defaults to
    ``1e-3 / gamma``.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=complex))
    if beta.shape != (spec.n_qubits,):
        raise ValueError(f"beta needs {spec.n_qubits} entries, got {beta.size}")
    weight = float(np.sum(np.abs(beta) ** 2))
    if alpha0 is None:
        if weight > 1 + 1e-9:
            raise ValueError("beta has norm above one")
        alpha0 = np.sqrt(max(0.0, 1.0 - weight))
    if abs(abs(alpha0) ** 2 + weight - 1) > 1e-9:
        raise ValueError("|alpha0|^2 + |beta|^2 must equal 1")
    r = _three_stages(spec, beta, t0, t1, t2, t3, dt)
    state = storage_state_from_modes(alpha0, r.pop("modes_t1"))
    return ProtocolResult("photon", spec.n_qubits, spec.gamma, (t0, t1, t2, t3),
                          alpha0=complex(alpha0), storage_state=state, **r)


def coherent_run(spec: MemorySpec, amplitudes=None, t0: float = -60.0, t1: float = 0.0,
                 t2: float = 100.0, t3: float = 160.0, dt: float | None = None,
                 envelope: Pulse | None = None) -> ProtocolResult:
    """Mean-field run for a coherent drive ``f = sum_k alpha_k xi_k``.

    ``envelope`` overrides the drive; its targets are then its projections on
    the write pulses.
    """
    if envelope is None:
        amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=complex))
        if amplitudes.shape != (spec.n_qubits,):
            raise ValueError(f"need {spec.n_qubits} amplitudes, got {amplitudes.size}")
    r = _three_stages(spec, amplitudes, t0, t1, t2, t3, dt, envelope=envelope)
    r.pop("modes_t1")
    return ProtocolResult("coherent", spec.n_qubits, spec.gamma, (t0, t1, t2, t3),
                          alpha0=None, **r)


def _leakage_point(spec, eps, target, duration, dt):
    base = spec.kappas(1)[target]
    single = MemorySpec(1, spec.gamma, {
        k: v for k, v in spec.kappa_overrides.items() if "." not in k
    }).with_overrides(**{target: (1 + eps) * base})
    ss = to_state_space(qubit_config(single, 2))
    v = module_rotation(1)[:, 1]
    traj = propagate(ss, [], v, (0.0, duration), dt)
    kept = abs(np.vdot(v, traj.c[-1])) ** 2
    max_re = float(ss.eigenvalues().real.max())
    return {
        "epsilon": float(eps),
        "kappa": float((1 + eps) * base),
        "leakage_rate": float(-np.log(kept) / duration),
        "max_real_eigenvalue": max_re,
        "spectral_rate": -2.0 * max_re,
        "energy_residual": traj.energy_residual(),
    }


def mismatch_sweep(spec: MemorySpec, relative_deviations, storage_duration: float = 100.0,
                   target: str = "c1", dt: float | None = None,
                   threads: int | None = None) -> list[dict]:
    """Leakage of an ideally stored photon when one mirror rate is off by ``eps``.

    For each relative deviation the storage configuration is rebuilt with the
    ``target`` mirror at ``(1 + eps)`` times its nominal rate, the ideal
    storage mode is excited, and ``-ln(|<dfs|c(T)>|^2) / T`` is reported next
    to ``-2 max Re(eig A)``.  ``threads`` defaults to ``$QMEM_THREADS`` or 1.
    """
    if threads is None:
        threads = int(os.environ.get("QMEM_THREADS", "1") or 1)
    dt = 1e-2 / spec.gamma if dt is None else dt
    eps_list = [float(e) for e in relative_deviations]
    job = lambda e: _leakage_point(spec, e, target, storage_duration, dt)  # noqa: E731
    if threads > 1 and len(eps_list) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, eps_list))
    return [job(e) for e in eps_list]
