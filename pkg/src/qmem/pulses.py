"""Write (absorption) and read (emission) wavepackets of a rotated memory."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
from scipy.integrate import trapezoid

from .linear import StateSpace

__all__ = [
    "Pulse",
    "PulseError",
    "GridMismatch",
    "time_grid",
    "write_pulses",
    "read_pulses",
    "overlap",
    "norm",
    "superpose",
]


class PulseError(ValueError):
    pass


class GridMismatch(PulseError):
    pass


def time_grid(t_start: float, t_end: float, dt: float) -> tuple[int, float]:
    """Number of steps and the effective step covering ``[t_start, t_end]``.

    The step is shrunk slightly when the span is not a multiple of ``dt``.
    """
    if not dt > 0:
        raise PulseError("dt must be positive")
    span = t_end - t_start
    if not span > 0:
        raise PulseError("grid end must come after grid start")
    n = max(1, int(round(span / dt)))
    return n, span / n


@dataclass(frozen=True, eq=False)
class Pulse:
    """Complex envelope on the uniform grid ``t0 + k * dt``.

    ``norm_constant`` is the L2 norm the samples had before normalization
    (1.0 when they were never rescaled); ``t_ref`` is the switch or release
    time the envelope was built for.
    """

    t0: float
    dt: float
    samples: np.ndarray
    label: str = ""
    norm_constant: float = 1.0
    t_ref: float | None = None
    normalized: bool = field(default=False)

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex).ravel()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.normalized and abs(norm(self) - 1) > 1e-8:
            raise PulseError("pulse flagged normalized but its norm is not 1")

    @property
    def t1(self) -> float:
        return self.t0 + (len(self.samples) - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    def scaled(self, factor: complex) -> "Pulse":
        return replace(self, samples=self.samples * factor, normalized=False)

    def on_grid(self, t0: float, dt: float, n_samples: int) -> np.ndarray:
        """Samples on another grid with the same step, zero outside support."""
        if abs(dt - self.dt) > 1e-12 * max(1.0, dt):
            raise GridMismatch(f"step {self.dt} does not match grid step {dt}")
        shift = (self.t0 - t0) / dt
        offset = int(round(shift))
        if abs(shift - offset) > 1e-6:
            raise GridMismatch("pulse samples are not aligned with the grid")
        out = np.zeros(n_samples, dtype=complex)
        lo, hi = max(0, offset), min(n_samples, offset + len(self.samples))
        if lo < hi:
            out[lo:hi] = self.samples[lo - offset:hi - offset]
        return out


def norm(p: Pulse) -> float:
    """L2 norm by the trapezoid rule."""
    if len(p.samples) < 2:
        return 0.0
    return float(np.sqrt(trapezoid(np.abs(p.samples) ** 2, dx=p.dt)))


def overlap(p: Pulse, q: Pulse) -> complex:
    """``integral conj(p) q dt`` by the trapezoid rule on a shared grid."""
    if (
        len(p.samples) != len(q.samples)
        or abs(p.dt - q.dt) > 1e-12 * max(1.0, p.dt)
        or abs(p.t0 - q.t0) > 1e-9 * max(1.0, p.dt)
    ):
        raise GridMismatch("pulses live on different grids")
    if len(p.samples) < 2:
        return 0j
    return complex(trapezoid(p.samples.conj() * q.samples, dx=p.dt))


def superpose(pulses, weights, label: str = "") -> Pulse:
    """Weighted sum of pulses sharing one grid."""
    pulses = list(pulses)
    if not pulses:
        raise PulseError("nothing to superpose")
    ref = pulses[0]
    total = np.zeros(len(ref.samples), dtype=complex)
    for p, w in zip(pulses, weights, strict=True):
        total += w * p.on_grid(ref.t0, ref.dt, len(ref.samples))
    return Pulse(ref.t0, ref.dt, total, label=label, t_ref=ref.t_ref)


def _propagated_columns(M, V, n_steps, dt):
    """``exp(M k dt) V`` for ``k = 0 .. n_steps``, shape ``(n_steps+1, n, m)``."""
    step = la.expm(M * dt)
    out = np.empty((n_steps + 1,) + V.shape, dtype=complex)
    out[0] = V
    for k in range(n_steps):
        out[k + 1] = step @ out[k]
    return out


def _stable_generator(M):
    ev = la.eigvals(M)
    if np.all(ev.real < 0):
        return M
    if np.all(ev.real > 0):
        return -M
    raise PulseError("no rising-exponential solution")


def _package(raw, dfs_indices, t0, dt, t_ref, kind, normalize):
    pulses = []
    for k, idx in enumerate(dfs_indices, start=1):
        samples = raw[:, idx]
        p = Pulse(t0, dt, samples, label=f"{kind}{k}", t_ref=t_ref)
        c = norm(p)
        if normalize:
            if c == 0:
                raise PulseError(f"{kind} envelope for mode {idx} vanishes")
            p = Pulse(t0, dt, samples / c, label=p.label, norm_constant=c,
                      t_ref=t_ref, normalized=True)
        pulses.append(p)
    return pulses


def write_pulses(rotated: StateSpace, dfs_indices, t_start: float, t_switch: float,
                 dt: float, port: int = 0, normalize: bool = True) -> list[Pulse]:
    """Absorption envelopes that load the modes ``dfs_indices``.

    Evaluates ``-exp(A# (t_switch - t)) C^T`` on ``[t_start, t_switch]``
    (``#`` is entrywise conjugation) and keeps the rows of the target modes
    for input ``port``.  The exponent sign is the one that keeps the
    envelope square integrable toward the past.
    """
    n_steps, dt = time_grid(t_start, t_switch, dt)
    M = _stable_generator(rotated.A.conj())
    cols = _propagated_columns(M, rotated.C.T[:, [port]], n_steps, dt)[:, :, 0]
    raw = -cols[::-1]
    return _package(raw, dfs_indices, t_start, dt, t_switch, "xi", normalize)


def read_pulses(rotated: StateSpace, dfs_indices, t_release: float, t_end: float,
                dt: float, port: int = 0, normalize: bool = True,
                literal: bool = False) -> list[Pulse]:
    """Emission envelopes of the modes ``dfs_indices`` after release.

    Row ``k`` of ``exp(A^T (t - t_release)) C^T`` is the envelope the output
    ``port`` carries when only mode ``k`` is excited at release.  With
    ``literal=True`` the conjugate ``A#`` replaces ``A^T``; the two agree up
    to sign for a single module but differ for cascades.
    """
    n_steps, dt = time_grid(t_release, t_end, dt)
    gen = rotated.A.conj() if literal else rotated.A.T
    M = _stable_generator(gen)
    raw = _propagated_columns(M, rotated.C.T[:, [port]], n_steps, dt)[:, :, 0]
    return _package(raw, dfs_indices, t_release, dt, t_release, "xi'", normalize)
