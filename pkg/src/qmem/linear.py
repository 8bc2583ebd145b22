"""State-space form of passive models and the usual linear-systems analyses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .slh import SlhModel

__all__ = [
    "StateSpace",
    "DfsDecomposition",
    "to_state_space",
    "controllability_matrix",
    "observability_matrix",
    "ranks",
    "matrix_rank",
    "is_hurwitz",
    "dfs_decompose",
    "rotate",
    "transfer_function",
    "passivity_residuals",
]

RANK_RTOL = 1e-9
HURWITZ_EPS = 1e-10
DFS_TOL = 1e-9


class NotUnitaryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Complex LTI system ``c' = A c + B u``, ``y = C c + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in "ABCD":
            arr = np.array(getattr(self, name), dtype=complex)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, m = self.B.shape
        if self.A.shape != (n, n) or self.C.shape != (self.D.shape[0], n) or self.D.shape[1] != m:
            raise ValueError(
                f"inconsistent shapes A{self.A.shape} B{self.B.shape} "
                f"C{self.C.shape} D{self.D.shape}"
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``A`` sorted by real then imaginary part."""
        ev = la.eigvals(self.A) if self.n else np.zeros(0, complex)
        return ev[np.lexsort((ev.imag, ev.real))]


@dataclass(frozen=True, eq=False)
class DfsDecomposition:
    U: np.ndarray
    dfs_indices: list
    rotated: StateSpace


def to_state_space(model: SlhModel) -> StateSpace:
    """``A = -(i Omega + K^* K / 2)``, ``B = -K^* S``, ``C = K``, ``D = S``."""
    K, S = model.K, model.S
    A = -(1j * model.Omega + K.conj().T @ K / 2)
    return StateSpace(A, -K.conj().T @ S, K, S)


def controllability_matrix(ss: StateSpace) -> np.ndarray:
    blocks = [ss.B]
    for _ in range(1, ss.n):
        blocks.append(ss.A @ blocks[-1])
    return np.hstack(blocks) if blocks else np.zeros((0, 0), complex)


def observability_matrix(ss: StateSpace) -> np.ndarray:
    blocks = [ss.C]
    for _ in range(1, ss.n):
        blocks.append(blocks[-1] @ ss.A)
    return np.vstack(blocks) if blocks else np.zeros((0, 0), complex)


def matrix_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Count singular values above ``rtol * sigma_max``."""
    if M.size == 0:
        return 0
    sv = la.svdvals(M)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def ranks(ss: StateSpace) -> tuple[int, int]:
    """Ranks of the controllability and observability matrices."""
    return matrix_rank(controllability_matrix(ss)), matrix_rank(observability_matrix(ss))


def is_hurwitz(ss: StateSpace, eps: float = HURWITZ_EPS, return_eigenvalues: bool = False):
    """True when every eigenvalue of ``A`` has real part below ``-eps``."""
    ev = ss.eigenvalues()
    ok = bool(ss.n > 0 and np.all(ev.real < -eps))
    return (ok, ev) if return_eigenvalues else ok


def rotate(ss: StateSpace, U) -> StateSpace:
    """Change mode basis: ``(U^* A U, U^* B, C U, D)``."""
    U = np.asarray(U, dtype=complex)
    if U.shape != (ss.n, ss.n):
        raise ValueError(f"U has shape {U.shape}, system has {ss.n} modes")
    if np.abs(U.conj().T @ U - np.eye(ss.n)).max() > 1e-10:
        raise NotUnitaryError("rotation matrix is not unitary")
    Uh = U.conj().T
    return StateSpace(Uh @ ss.A @ U, Uh @ ss.B, ss.C @ U, ss.D)


def transfer_function(ss: StateSpace, s: complex) -> np.ndarray:
    """``G(s) = C (sI - A)^{-1} B + D``."""
    if ss.n == 0:
        return ss.D.copy()
    M = s * np.eye(ss.n) - ss.A
    sv = la.svdvals(M)
    if sv[-1] <= 1e-14 * max(1.0, sv[0], abs(s)):
        raise np.linalg.LinAlgError(f"s = {s} is a pole of the system")
    return ss.C @ np.linalg.solve(M, ss.B) + ss.D


def passivity_residuals(ss: StateSpace) -> dict:
    """Max-abs residuals of the identities every passive model satisfies."""
    res = {
        "drift": _maxabs(ss.A + ss.A.conj().T + ss.C.conj().T @ ss.C),
        "input": _maxabs(ss.B + ss.C.conj().T @ ss.D),
        "unitarity": _maxabs(ss.D.conj().T @ ss.D - np.eye(ss.m)),
    }
    return res


def _maxabs(M):
    return float(np.abs(M).max()) if M.size else 0.0


def _mode_blocks(A, tol):
    """Connected components of the coupling graph of ``A``."""
    n = A.shape[0]
    link = (np.abs(A) > tol) | (np.abs(A.T) > tol)
    seen = [False] * n
    blocks = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.flatnonzero(link[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        blocks.append(sorted(comp))
    return blocks


def _fix_phases(U, tol):
    U = U.copy()
    for k in range(U.shape[1]):
        col = U[:, k]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size:
            lead = col[nz[0]]
            U[:, k] = col * (abs(lead) / lead)
    return U


def _null_space(M, tol):
    if M.size == 0:
        return np.eye(M.shape[1], dtype=complex)
    u, s, vh = la.svd(M)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * max(smax, 1.0)))
    return vh[rank:].conj().T


def _diagonalize_normal(A):
    T, Z = la.schur(A.astype(complex), output="complex")
    return np.diag(T), Z


def _block_basis(ss_block: StateSpace, tol):
    """Unitary basis for one block, non-decoupled columns first."""
    A = ss_block.A
    scale = max(1.0, np.abs(A).max())
    normal = np.abs(A @ A.conj().T - A.conj().T @ A).max() <= tol * scale ** 2
    if normal:
        ev, Z = _diagonalize_normal(A)
        Bt = Z.conj().T @ ss_block.B
        Ct = ss_block.C @ Z
        dfs = [
            k for k in range(len(ev))
            if abs(ev[k].real) <= tol * scale
            and _maxabs(Bt[k]) <= tol * scale and _maxabs(Ct[:, k]) <= tol * scale
        ]
        rest = [k for k in range(len(ev)) if k not in dfs]
        rest.sort(key=lambda k: (ev[k].real, ev[k].imag))
        dfs.sort(key=lambda k: (ev[k].real, ev[k].imag))
        return Z[:, rest + dfs], len(rest)

    # uncontrollable and unobservable modes: kernel of [ctrb^*; obsv]
    stacked = np.vstack([controllability_matrix(ss_block).conj().T,
                         observability_matrix(ss_block)])
    N = _null_space(stacked, tol)
    if N.shape[1] == 0:
        return np.eye(A.shape[0], dtype=complex), A.shape[0]
    Q = _null_space(N.conj().T, tol)
    _, Zn = _diagonalize_normal(N.conj().T @ A @ N)
    if Q.shape[1]:
        _, Zq = la.schur(Q.conj().T @ A @ Q, output="complex")
        Q = Q @ Zq
    return np.hstack([Q, N @ Zn]), Q.shape[1]


def dfs_decompose(ss: StateSpace, tol: float = DFS_TOL) -> DfsDecomposition:
    """Find the decoherence-free modes of a passive system.

    The modes are split into independently evolving blocks; each block is
    rotated so that its decoupled modes come last.  When a block's drift is
    normal it is diagonalized outright, otherwise the common kernel of the
    adjoint controllability matrix and the observability matrix is used.
    Columns of ``U`` have their first significant entry real and positive.
    """
    n = ss.n
    if n == 0:
        return DfsDecomposition(np.zeros((0, 0), complex), [], ss)
    U = np.zeros((n, n), dtype=complex)
    dfs = []
    col = 0
    for idx in _mode_blocks(ss.A, tol):
        block = StateSpace(ss.A[np.ix_(idx, idx)], ss.B[idx], ss.C[:, idx], ss.D)
        Z, n_rest = _block_basis(block, tol)
        U[np.ix_(idx, range(col, col + len(idx)))] = Z
        dfs.extend(range(col + n_rest, col + len(idx)))
        col += len(idx)
    U = _fix_phases(U, 1e-12)
    return DfsDecomposition(U, dfs, rotate(ss, U))
