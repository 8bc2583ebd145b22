"""Preset networks for the two-cavity memory module and its qudit extension."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.linalg as la

from .slh import AdjacencyMap, SlhModel, feedback_reduce, parallel_sum, series

__all__ = [
    "MemorySpec",
    "StorageState",
    "make_cavity",
    "qubit_config",
    "qudit_config",
    "module_rotation",
    "dfs_mode_indices",
    "storage_state",
    "storage_state_from_modes",
    "CONFIG1_CONNECTIONS",
    "CONFIG2_CONNECTIONS",
]

# open-loop port order: p.1, p.2, c.1, c.2 (0-based output -> input)
CONFIG1_CONNECTIONS = ((0, 3), (3, 1), (1, 2))
CONFIG2_CONNECTIONS = ((0, 3), (2, 1))

MIRRORS = ("p1", "p2", "c1", "c2")


@dataclass(frozen=True)
class MemorySpec:
    """Rates for an ``n_qubits``-module memory.

    ``kappa_overrides`` maps a mirror name (``"p1"``, ``"p2"``, ``"c1"``,
    ``"c2"``) to a rate applied to every module, or ``"<k>.<mirror>"`` to a
    rate for module ``k`` only (1-based).  Mirrors not overridden get
    ``gamma / 2``.
    """

    n_qubits: int = 1
    gamma: float = 1.0
    kappa_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.n_qubits) != self.n_qubits or self.n_qubits < 1:
            raise ValueError("n_qubits must be a positive integer")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        for key, val in self.kappa_overrides.items():
            mirror = key.split(".")[-1]
            if mirror not in MIRRORS:
                raise ValueError(f"unknown mirror {key!r}")
            if "." in key:
                k = int(key.split(".")[0])
                if not 1 <= k <= self.n_qubits:
                    raise ValueError(f"module index out of range in {key!r}")
            if not val > 0:
                raise ValueError(f"rate {key}={val} must be positive")

    def kappas(self, module: int = 1) -> dict:
        out = {name: self.gamma / 2 for name in MIRRORS}
        for key, val in self.kappa_overrides.items():
            if "." not in key:
                out[key] = float(val)
        for key, val in self.kappa_overrides.items():
            if "." in key and int(key.split(".")[0]) == module:
                out[key.split(".")[1]] = float(val)
        return out

    def with_overrides(self, **overrides) -> "MemorySpec":
        merged = dict(self.kappa_overrides)
        merged.update(overrides)
        return MemorySpec(self.n_qubits, self.gamma, merged)


def make_cavity(*kappas: float, name: str = "cav", allow_zero: bool = False) -> SlhModel:
    """Single-mode cavity with one port per partially transmitting mirror.

    ``S = I``, ``K = [sqrt(kappa_1); sqrt(kappa_2); ...]``, ``Omega = 0``.
    With ``allow_zero`` a zero-rate mirror is dropped (with a warning)
    instead of raising.
    """
    if not kappas:
        raise ValueError("a cavity needs at least one mirror")
    keep = []
    for j, k in enumerate(kappas, start=1):
        if k > 0:
            keep.append((j, k))
        elif k == 0 and allow_zero:
            warnings.warn(f"cavity {name}: mirror {j} has zero rate, port dropped")
        else:
            raise ValueError(f"cavity {name}: rate {k} for mirror {j} must be positive")
    if not keep:
        raise ValueError(f"cavity {name}: all mirrors have zero rate")
    K = np.sqrt(np.array([[k] for _, k in keep], dtype=float))
    labels = tuple(f"{name}.{j}" for j, _ in keep)
    return SlhModel(np.eye(len(keep)), K, np.zeros((1, 1)), labels)


def qubit_config(spec: MemorySpec, which: int, module: int = 1) -> SlhModel:
    """Plant and controller cavities closed into configuration 1 (write and
    read) or configuration 2 (storage)."""
    if which not in (1, 2):
        raise ValueError("configuration must be 1 or 2")
    k = spec.kappas(module)
    plant = make_cavity(k["p1"], k["p2"], name="p")
    ctrl = make_cavity(k["c1"], k["c2"], name="c")
    conns = CONFIG1_CONNECTIONS if which == 1 else CONFIG2_CONNECTIONS
    return feedback_reduce(parallel_sum([plant, ctrl]), AdjacencyMap(conns))


def qudit_config(spec: MemorySpec, which: int) -> SlhModel:
    """``n_qubits`` modules, cascaded (config 1) or side by side (config 2).

    Modes are ordered module by module, plant before controller.
    """
    n = spec.n_qubits
    if n == 1:
        return qubit_config(spec, which)
    modules = [qubit_config(spec, which, j).relabel(f"{j}.") for j in range(1, n + 1)]
    if which == 1:
        return reduce(series, modules)
    return parallel_sum(modules)


def module_rotation(n_qubits: int) -> np.ndarray:
    """Block-diagonal Hadamard: per module ``(a_p + a_c)/sqrt2`` then
    ``(a_p - a_c)/sqrt2``."""
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    return la.block_diag(*[h] * n_qubits).astype(complex)


def dfs_mode_indices(n_qubits: int) -> list[int]:
    """Indices of the storage modes in the :func:`module_rotation` basis."""
    return [2 * j + 1 for j in range(n_qubits)]


@dataclass(frozen=True, eq=False)
class StorageState:
    """Single-excitation cavity state.

    ``coefficients[0]`` is the vacuum amplitude, followed by one photon in
    ``(1, p)``, ``(1, c)``, ``(2, p)``, ...  ``leaked`` is the probability
    removed by renormalization when built from simulated amplitudes.
    """

    coefficients: np.ndarray
    leaked: float = 0.0

    @property
    def labels(self) -> list[str]:
        n = (len(self.coefficients) - 1) // 2
        out = ["vac"]
        for j in range(1, n + 1):
            out += [f"{j}.p", f"{j}.c"]
        return out

    def as_dict(self) -> dict:
        return dict(zip(self.labels, self.coefficients))


def storage_state(alpha0: complex, dfs_amplitudes, tol: float = 1e-9) -> StorageState:
    """Cavity state holding ``alpha0 |vac> + sum_j beta_j |stored in module j>``,
    where the stored photon of module ``j`` is ``(|1_p 0_c> - |0_p 1_c>)/sqrt2``."""
    beta = np.atleast_1d(np.asarray(dfs_amplitudes, dtype=complex))
    total = abs(alpha0) ** 2 + np.sum(np.abs(beta) ** 2)
    if abs(total - 1) > tol:
        raise ValueError(f"amplitudes are not normalized (|.|^2 sums to {total:.12g})")
    coeffs = np.empty(2 * len(beta) + 1, dtype=complex)
    coeffs[0] = alpha0
    coeffs[1::2] = beta / np.sqrt(2)
    coeffs[2::2] = -beta / np.sqrt(2)
    return StorageState(coeffs)


def storage_state_from_modes(alpha0: complex, mode_amplitudes) -> StorageState:
    """Cavity state from simulated single-excitation amplitudes in the
    unrotated ``(a_{1,p}, a_{1,c}, ...)`` basis, renormalized."""
    amps = np.asarray(mode_amplitudes, dtype=complex)
    coeffs = np.concatenate([[alpha0], amps])
    norm2 = float(np.sum(np.abs(coeffs) ** 2))
    if norm2 == 0:
        raise ValueError("state has zero norm")
    return StorageState(coeffs / np.sqrt(norm2), leaked=max(0.0, 1.0 - norm2))
