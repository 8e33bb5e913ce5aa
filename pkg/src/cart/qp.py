"""Small dense strictly convex QPs: ``min 1/2 x^T H x + g^T x  s.t.  A x <= b``.

:func:`solve_qp` is the Goldfarb-Idnani dual active-set method; it starts
from the unconstrained minimizer and adds the most violated constraint
until the primal iterate is feasible.  Projections are recomputed from
scratch each iteration, which is fine for the handful of rows used here.
:func:`solve_qp_enumerate` checks every active set and is the test oracle.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import QPInfeasible


@dataclass(frozen=True, eq=False)
class QPSolution:
    x: np.ndarray
    multipliers: np.ndarray
    active: tuple
    iterations: int = 0

    def objective(self, H, g) -> float:
        return float(0.5 * self.x @ H @ self.x + g @ self.x)


def _as_problem(H, g, A, b):
    H = np.atleast_2d(np.asarray(H, dtype=float))
    g = np.asarray(g, dtype=float).reshape(-1)
    A = np.asarray(A, dtype=float).reshape(-1, g.size) if A is not None else np.zeros((0, g.size))
    b = np.asarray(b, dtype=float).reshape(-1) if b is not None else np.zeros(0)
    if A.shape[0] != b.size:
        raise ValueError("A and b row counts differ")
    return H, g, A, b


def solve_qp(H, g, A=None, b=None, tol=1e-10, max_iter=200) -> QPSolution:
    H, g, A, b = _as_problem(H, g, A, b)
    n = g.size
    Hinv = np.linalg.inv(H)
    x = -Hinv @ g
    active: list[int] = []
    u = np.zeros(0)
    scale = 1.0 + np.abs(b)
    it = 0
    while True:
        viol = (A @ x - b) / scale
        viol[active] = -np.inf
        if viol.size == 0 or viol.max() <= tol:
            break
        p = int(np.argmax(viol))
        # constraint p in ">=" form: n_p^T x >= -b_p with n_p = -A_p
        n_p = -A[p]
        u_plus = np.append(u, 0.0)
        while True:
            it += 1
            if it > max_iter:
                raise QPInfeasible(f"active-set iteration limit ({max_iter}) reached")
            if active:
                N = -A[active].T
                NtHN = N.T @ Hinv @ N
                Nstar = np.linalg.solve(NtHN, N.T @ Hinv)
                z = Hinv @ n_p - Hinv @ N @ (Nstar @ n_p)
                r = Nstar @ n_p
            else:
                z = Hinv @ n_p
                r = np.zeros(0)
            t1, k_drop = np.inf, None
            for k, rk in enumerate(r):
                if rk > 0:
                    ratio = u_plus[k] / rk
                    if ratio < t1:
                        t1, k_drop = ratio, k
            zn = float(z @ n_p)
            dependent = len(active) >= n or np.linalg.norm(z) <= 1e-9 * np.linalg.norm(Hinv @ n_p)
            if dependent or zn <= 0:
                if k_drop is None:
                    raise QPInfeasible(f"constraint {p} cannot be satisfied with the active set {active}")
                u_plus = u_plus + t1 * np.append(-r, 1.0)
                del active[k_drop]
                u_plus = np.delete(u_plus, k_drop)
                continue
            s_p = float(n_p @ x + b[p])
            t2 = -s_p / zn
            t = min(t1, t2)
            x = x + t * z
            u_plus = u_plus + t * np.append(-r, 1.0)
            if t2 <= t1:
                active.append(p)
                u = u_plus
                break
            del active[k_drop]
            u_plus = np.delete(u_plus, k_drop)
    mult = np.zeros(A.shape[0])
    if active:
        mult[active] = np.maximum(u, 0.0)
    return QPSolution(x, mult, tuple(sorted(active)), it)


def solve_qp_enumerate(H, g, A=None, b=None, tol=1e-9) -> QPSolution:
    """Exhaustive active-set search; exponential in the number of rows."""
    H, g, A, b = _as_problem(H, g, A, b)
    n, q = g.size, A.shape[0]
    best = None
    best_val = np.inf
    for size in range(0, min(n, q) + 1):
        for S in combinations(range(q), size):
            S = list(S)
            K = np.zeros((n + size, n + size))
            K[:n, :n] = H
            K[:n, n:] = A[S].T
            K[n:, :n] = A[S]
            rhs = np.concatenate([-g, b[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.any(lam < -tol) or np.any(A @ x - b > tol * (1 + np.abs(b))):
                continue
            val = 0.5 * x @ H @ x + g @ x
            if val < best_val - 1e-14:
                mult = np.zeros(q)
                mult[S] = lam
                best, best_val = QPSolution(x, mult, tuple(S)), val
    if best is None:
        raise QPInfeasible("no feasible active set")
    return best


def kkt_residuals(H, g, A, b, sol: QPSolution):
    """``(stationarity, complementarity, primal violation, min multiplier)``."""
    H, g, A, b = _as_problem(H, g, A, b)
    stat = H @ sol.x + g + A.T @ sol.multipliers
    slack = A @ sol.x - b
    comp = np.abs(sol.multipliers * slack)
    return (float(np.abs(stat).max()) if stat.size else 0.0,
            float(comp.max()) if comp.size else 0.0,
            float(max(0.0, slack.max())) if slack.size else 0.0,
            float(sol.multipliers.min()) if sol.multipliers.size else 0.0)
