"""Reference computations that share no code with the package."""

import numpy as np


def open_loop_transfer(S, K, Omega, s):
    """``S - K (s + i Omega + K^H K / 2)^-1 K^H S`` for one frequency."""
    n = Omega.shape[0]
    if n == 0:
        return np.array(S, dtype=complex)
    A = -(1j * Omega + 0.5 * K.conj().T @ K)
    return S + K @ np.linalg.solve(s * np.eye(n) - A, -K.conj().T @ S)


def closed_loop_transfer(S, K, Omega, connections, s):
    """Close ``out -> in`` connections on the frequency-domain matrix.

    Solves ``y = G u`` together with ``u[in] = y[out]`` for every free input
    unit vector, without any SLH reduction formula.
    """
    G = open_loop_transfer(S, K, Omega, s)
    m = G.shape[0]
    outs = [o for o, _ in connections]
    ins = [i for _, i in connections]
    free_in = [j for j in range(m) if j not in ins]
    free_out = [j for j in range(m) if j not in outs]
    # unknowns: y (m) and u (m); equations: y - G u = 0, u[ins] - y[outs] = 0,
    # u[free_in] = e
    cols = []
    for e in range(len(free_in)):
        M = np.zeros((2 * m, 2 * m), dtype=complex)
        rhs = np.zeros(2 * m, dtype=complex)
        M[:m, :m] = np.eye(m)
        M[:m, m:] = -G
        r = m
        for o, i in connections:
            M[r, m + i] = 1
            M[r, o] = -1
            r += 1
        for k, j in enumerate(free_in):
            M[r, m + j] = 1
            rhs[r] = 1.0 if k == e else 0.0
            r += 1
        sol = np.linalg.solve(M, rhs)
        cols.append(sol[:m][free_out])
    return np.array(cols).T


def cavity(kappas):
    K = np.sqrt(np.asarray(kappas, float)).reshape(-1, 1).astype(complex)
    return np.eye(len(kappas), dtype=complex), K, np.zeros((1, 1), complex)


def block_diag(*mats):
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols), dtype=complex)
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def rk_reference(A, B, xi_fun, c0, t0, t1, rtol=1e-11, atol=1e-13):
    """Dense adaptive integration of ``c' = A c + B xi(t)``."""
    from scipy.integrate import solve_ivp

    def rhs(t, y):
        c = y[: len(c0)] + 1j * y[len(c0):]
        d = A @ c + B @ xi_fun(t)
        return np.concatenate([d.real, d.imag])

    y0 = np.concatenate([np.real(c0), np.imag(c0)])
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=rtol, atol=atol)
    y = sol.y[:, -1]
    return y[: len(c0)] + 1j * y[len(c0):]
