"""Passive SLH models and the network composition rules.

A passive linear component is carried by three coefficient matrices: the
scattering matrix ``S`` (ports x ports), the coupling matrix ``K``
(ports x modes, so that ``L = K a``) and the Hamiltonian matrix ``Omega``
(modes x modes, so that ``H = a^* Omega a``).  Networks are assembled by
concatenating components with :func:`parallel_sum` and then closing internal
channels with :func:`feedback_reduce`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.linalg as la

__all__ = [
    "SlhError",
    "AlgebraicLoopError",
    "SlhModel",
    "AdjacencyMap",
    "parallel_sum",
    "feedback_reduce",
    "series",
    "passthrough",
]

UNITARY_TOL = 1e-12
LOOP_COND_LIMIT = 1e12

PortRef = Union[int, str]


class SlhError(ValueError):
    """Invalid model, adjacency or composition request."""


class AlgebraicLoopError(SlhError):
    """Raised when ``eta - S_ii`` is singular.

    ``connections`` lists the (output, input) index pairs that take part in
    the ill-posed loop, ``condition`` the condition number that tripped.
    """

    def __init__(self, message, connections=(), condition=np.inf):
        super().__init__(message)
        self.connections = list(connections)
        self.condition = condition


def _as_matrix(x, shape, name) -> np.ndarray:
    arr = np.array(x, dtype=complex)
    if arr.size == 0:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise SlhError(f"{name} has shape {arr.shape}, expected {shape}")
    arr.setflags(write=False)
    return arr


def split_label(label: str) -> tuple[str, str]:
    """Return the (input, output) names encoded in a port label."""
    if "/" in label:
        inp, out = label.split("/", 1)
        return inp, out
    return label, label


def join_label(inp: str, out: str) -> str:
    return inp if inp == out else f"{inp}/{out}"


@dataclass(frozen=True, eq=False)
class SlhModel:
    """Passive SLH triple ``(S, K a, a^* Omega a)``.

    Parameters
    ----------
    S : (m, m) array_like
        Unitary scattering matrix.
    K : (m, n) array_like
        Coupling matrix; row ``j`` is the coupling vector of port ``j``.
    Omega : (n, n) array_like
        Hermitian Hamiltonian coefficient matrix.
    port_labels : sequence of str, optional
        One name per port.  A port whose input and output carry different
        names is labelled ``"input/output"``.
    """

    S: np.ndarray
    K: np.ndarray
    Omega: np.ndarray
    port_labels: tuple = field(default=())
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        K = np.array(self.K, dtype=complex)
        if K.ndim != 2:
            raise SlhError("K must be a 2-d matrix")
        m, n = K.shape
        object.__setattr__(self, "K", _as_matrix(K, (m, n), "K"))
        object.__setattr__(self, "S", _as_matrix(self.S, (m, m), "S"))
        object.__setattr__(self, "Omega", _as_matrix(self.Omega, (n, n), "Omega"))
        labels = tuple(self.port_labels) or tuple(str(j) for j in range(m))
        if len(labels) != m:
            raise SlhError(f"{len(labels)} port labels given for {m} ports")
        object.__setattr__(self, "port_labels", labels)
        if self.validate:
            self.check()

    @property
    def n_modes(self) -> int:
        return self.K.shape[1]

    @property
    def n_ports(self) -> int:
        return self.K.shape[0]

    @property
    def input_labels(self) -> list[str]:
        return [split_label(lab)[0] for lab in self.port_labels]

    @property
    def output_labels(self) -> list[str]:
        return [split_label(lab)[1] for lab in self.port_labels]

    def check(self, tol: float = UNITARY_TOL) -> None:
        """Raise :class:`SlhError` unless S is unitary and Omega Hermitian."""
        m = self.n_ports
        if m:
            scale = max(1.0, np.abs(self.S).max())
            eye = np.eye(m)
            err = max(
                np.abs(self.S.conj().T @ self.S - eye).max(),
                np.abs(self.S @ self.S.conj().T - eye).max(),
            )
            if err > tol * scale:
                raise SlhError(f"S is not unitary (residual {err:.3g})")
        if self.n_modes:
            scale = max(1.0, np.abs(self.Omega).max())
            err = np.abs(self.Omega - self.Omega.conj().T).max()
            if err > tol * scale:
                raise SlhError(f"Omega is not Hermitian (residual {err:.3g})")

    def relabel(self, prefix: str = "", labels: Sequence[str] | None = None) -> "SlhModel":
        """Copy with new port labels, or with ``prefix`` prepended to each name."""
        if labels is None:
            labels = [
                join_label(prefix + i, prefix + o)
                for i, o in zip(self.input_labels, self.output_labels)
            ]
        return SlhModel(self.S, self.K, self.Omega, tuple(labels), validate=False)

    def input_index(self, ref: PortRef) -> int:
        return self._index(ref, self.input_labels)

    def output_index(self, ref: PortRef) -> int:
        return self._index(ref, self.output_labels)

    def _index(self, ref, names):
        if isinstance(ref, (int, np.integer)):
            if not 0 <= ref < self.n_ports:
                raise SlhError(f"port {ref} out of range for {self.n_ports}-port model")
            return int(ref)
        if ref in names:
            return names.index(ref)
        if ref in self.port_labels:
            return self.port_labels.index(ref)
        raise SlhError(f"unknown port {ref!r}")

    def allclose(self, other: "SlhModel", atol: float = 1e-12) -> bool:
        return (
            self.S.shape == other.S.shape
            and self.K.shape == other.K.shape
            and np.allclose(self.S, other.S, rtol=0, atol=atol)
            and np.allclose(self.K, other.K, rtol=0, atol=atol)
            and np.allclose(self.Omega, other.Omega, rtol=0, atol=atol)
        )

    def __repr__(self):
        return (
            f"SlhModel(n_modes={self.n_modes}, n_ports={self.n_ports}, "
            f"port_labels={list(self.port_labels)})"
        )


@dataclass(frozen=True)
class AdjacencyMap:
    """Internal channels ``(source output port, target input port)``.

    Ports may be given by index or by label; labels are resolved against the
    model passed to :meth:`resolve`.
    """

    connections: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "connections", tuple(tuple(c) for c in self.connections))
        for c in self.connections:
            if len(c) != 2:
                raise SlhError(f"connection {c!r} is not a (source, target) pair")

    def resolve(self, model: SlhModel) -> list[tuple[int, int]]:
        pairs = [(model.output_index(s), model.input_index(r)) for s, r in self.connections]
        sources = [s for s, _ in pairs]
        targets = [r for _, r in pairs]
        if len(set(sources)) != len(sources):
            raise SlhError("an output port is used as a source more than once")
        if len(set(targets)) != len(targets):
            raise SlhError("an input port is used as a target more than once")
        return pairs


def passthrough(n_ports: int, labels: Sequence[str] | None = None) -> SlhModel:
    """Mode-free model with identity scattering."""
    return SlhModel(np.eye(n_ports), np.zeros((n_ports, 0)), np.zeros((0, 0)),
                    tuple(labels or ()))


def parallel_sum(models: Sequence[SlhModel]) -> SlhModel:
    """Concatenate independent components into one open-loop model.

    Scattering, coupling and Hamiltonian matrices are assembled block
    diagonally; ports and modes keep the order of ``models``.
    """
    models = list(models)
    if not models:
        raise SlhError("no models")
    if len(models) == 1:
        return models[0]
    S = la.block_diag(*[m.S for m in models])
    K = _block_diag_rect([m.K for m in models])
    Omega = _block_diag_rect([m.Omega for m in models])
    labels = tuple(lab for m in models for lab in m.port_labels)
    return SlhModel(S, K, Omega, labels, validate=False)


def _block_diag_rect(blocks):
    # la.block_diag drops empty (k, 0) blocks' rows, so assemble by hand
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols), dtype=complex)
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def feedback_reduce(model: SlhModel, adj: AdjacencyMap | Sequence) -> SlhModel:
    """Close internal channels of ``model``.

    Each connection feeds an output port back into an input port.  The
    reduced model keeps the unconnected inputs and outputs, both in their
    original index order; the ``j``-th remaining input and ``j``-th remaining
    output form reduced port ``j``.

    Raises
    ------
    AlgebraicLoopError
        If ``eta - S_ii`` is singular (condition number above 1e12).
    """
    if not isinstance(adj, AdjacencyMap):
        adj = AdjacencyMap(tuple(adj))
    pairs = adj.resolve(model)
    if not pairs:
        return model

    m = model.n_ports
    int_out = sorted(s for s, _ in pairs)
    int_in = sorted(r for _, r in pairs)
    ext_out = [j for j in range(m) if j not in int_out]
    ext_in = [j for j in range(m) if j not in int_in]

    eta = np.zeros((len(pairs), len(pairs)))
    for s, r in pairs:
        eta[int_out.index(s), int_in.index(r)] = 1.0

    S, K = model.S, model.K
    loop = eta - S[np.ix_(int_out, int_in)]
    cond = np.linalg.cond(loop)
    if not np.isfinite(cond) or cond > LOOP_COND_LIMIT:
        raise AlgebraicLoopError(
            f"algebraic loop not well-posed (condition number {cond:.3g})",
            _loop_support(loop, pairs, int_in),
            cond,
        )
    # G maps internal outputs to internal inputs
    G = np.linalg.solve(loop, np.eye(len(pairs)))

    S_ei = S[np.ix_(ext_out, int_in)]
    S_red = S[np.ix_(ext_out, ext_in)] + S_ei @ G @ S[np.ix_(int_out, ext_in)]
    K_red = K[ext_out] + S_ei @ G @ K[int_out]
    X = K.conj().T @ S[:, int_in] @ G @ K[int_out]
    Omega_red = model.Omega + (X - X.conj().T) / 2j

    in_names = model.input_labels
    out_names = model.output_labels
    labels = tuple(join_label(in_names[i], out_names[o]) for i, o in zip(ext_in, ext_out))
    return SlhModel(S_red, K_red, Omega_red, labels)


def _loop_support(loop, pairs, int_in):
    _, _, vh = np.linalg.svd(loop)
    v = np.abs(vh[-1])
    hot = {int_in[k] for k in np.flatnonzero(v > 1e-8 * v.max())}
    return [(s, r) for s, r in pairs if r in hot]


def series(upstream: SlhModel, downstream: SlhModel) -> SlhModel:
    """Cascade: every output of ``upstream`` drives the matching input of
    ``downstream``."""
    m = upstream.n_ports
    if downstream.n_ports != m:
        raise SlhError(
            f"port-count mismatch: {m} upstream vs {downstream.n_ports} downstream"
        )
    combined = parallel_sum([upstream, downstream])
    return feedback_reduce(combined, AdjacencyMap(tuple((j, m + j) for j in range(m))))
