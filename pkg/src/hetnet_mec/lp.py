"""Centralized baseline: dense two-phase simplex and a brute-force binary oracle."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .problem import Allocation, ProblemInstance

__all__ = [
    "SimplexResult",
    "simplex",
    "LpSolution",
    "solve_centralized",
    "BinarySolution",
    "EnumerationCapExceeded",
    "brute_force_binary",
    "binary_utility",
]


@dataclass
class SimplexResult:
    status: str                 # "optimal", "infeasible", "unbounded" or "iteration_limit"
    x: np.ndarray | None
    objective: float
    iterations: int
    certificate: str = ""
    # rows (eq rows first, then ub rows) carrying Farkas weight when infeasible
    infeasible_rows: list[int] = field(default_factory=list)


def simplex(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, *, tol: float = 1e-9,
            opt_tol: float = 1e-13, max_iter: int = 100_000) -> SimplexResult:
    """Maximize ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``.

    Dense tableau, two phases, Bland's rule for both the entering and the
    leaving variable, so the pivot sequence is deterministic and cannot cycle.
    ``tol`` is the pivot/feasibility tolerance; ``opt_tol`` the reduced-cost
    threshold of phase 2, kept tight because objective coefficients can span
    many orders of magnitude.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_eq, m_ub = len(b_eq), len(b_ub)
    m = m_eq + m_ub

    # rows: equalities then inequalities; columns: x, slacks (one per ub row), artificials
    need_art = [True] * m_eq + [bool(b < 0) for b in b_ub]
    n_art = sum(need_art)
    width = n + m_ub + n_art
    T = np.zeros((m + 1, width + 1))
    basis = np.empty(m, dtype=int)
    art_cols = []
    k_art = n + m_ub
    for i in range(m):
        if i < m_eq:
            row, rhs, slack = A_eq[i], b_eq[i], None
        else:
            row, rhs, slack = A_ub[i - m_eq], b_ub[i - m_eq], n + (i - m_eq)
        sign = -1.0 if rhs < 0 else 1.0
        T[i, :n] = sign * row
        if slack is not None:
            T[i, slack] = sign
        T[i, -1] = sign * rhs
        if need_art[i]:
            T[i, k_art] = 1.0
            basis[i] = k_art
            art_cols.append(k_art)
            k_art += 1
        else:
            basis[i] = slack
    iterations = 0

    # phase 1: maximize -sum(artificials); objective row holds reduced costs z_j - c_j
    if n_art:
        cost1 = np.zeros(width)
        cost1[art_cols] = -1.0
        T[-1, :-1] = -cost1
        for i in range(m):
            if need_art[i]:
                T[-1] -= T[i]    # make reduced costs of basic artificials zero
        status, iterations = _pivot_loop(T, basis, tol, max_iter, iterations)
        if status != "optimal":
            return SimplexResult(status, None, math.nan, iterations)
        if T[-1, -1] < -tol * max(1.0, np.abs(T[:-1, -1]).max(initial=0.0)):
            # Farkas multipliers from reduced costs of the initial basis columns
            y = np.empty(m)
            for i in range(m):
                if need_art[i]:
                    col = n + m_ub + sum(need_art[:i])
                    y[i] = T[-1, col] - 1.0
                else:
                    y[i] = T[-1, n + (i - m_eq)]
            rows = [i for i in range(m) if abs(y[i]) > 1e-9]
            return SimplexResult("infeasible", None, math.nan, iterations,
                                 certificate=f"phase-1 infeasibility {-T[-1, -1]:.3g}",
                                 infeasible_rows=rows)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = []
        for i in range(m):
            if basis[i] >= n + m_ub:
                cand = np.nonzero(np.abs(T[i, :n + m_ub]) > tol)[0]
                if cand.size:
                    _pivot(T, basis, i, int(cand[0]))
                    iterations += 1
                    keep.append(i)
            else:
                keep.append(i)
        T = np.vstack([T[keep], T[-1:]])
        basis = basis[keep]
        T = np.delete(T, list(range(n + m_ub, width)), axis=1)
        width = n + m_ub

    cost = np.zeros(width)
    cost[:n] = c
    T[-1, :] = 0.0
    T[-1, :-1] = -cost
    for i, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[i]
    status, iterations = _pivot_loop(T, basis, tol, max_iter, iterations, opt_tol)
    if status == "unbounded":
        return SimplexResult("unbounded", None, math.inf, iterations,
                             certificate="objective increases without bound along a ray")
    if status != "optimal":
        return SimplexResult(status, None, math.nan, iterations)
    x = np.zeros(width)
    x[basis] = T[:-1, -1]
    x = x[:n]
    x[x < 1e-13] = 0.0
    return SimplexResult("optimal", x, float(c @ x), iterations)


def _pivot(T: np.ndarray, basis: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = j


def _pivot_loop(T, basis, tol, max_iter, iterations, opt_tol=None):
    m = len(basis)
    opt_tol = tol if opt_tol is None else opt_tol
    while True:
        if iterations >= max_iter:
            return "iteration_limit", iterations
        red = T[-1, :-1]
        entering = np.nonzero(red < -opt_tol)[0]
        if entering.size == 0:
            return "optimal", iterations
        j = int(entering[0])
        col = T[:m, j]
        pos = np.nonzero(col > tol)[0]
        if pos.size == 0:
            return "unbounded", iterations
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, abs(best))]
        r = int(ties[np.argmin(basis[ties])])
        _pivot(T, basis, r, j)
        iterations += 1


# ---------------------------------------------------------------------------


@dataclass
class LpSolution:
    allocation: Allocation | None
    objective: float
    status: str
    iterations: int
    certificate: str = ""


def solve_centralized(inst: ProblemInstance, *, tol: float = 1e-9) -> LpSolution:
    """Solve the relaxed problem exactly as one LP over scaled variables."""
    rows = inst.rows
    c = inst.scaled_objective()
    free = inst.upper_bounds > 0
    res = simplex(c[free], rows.A_ub[:, free], rows.b_ub, rows.A_eq[:, free], rows.b_eq, tol=tol)
    if res.status != "optimal":
        cert = res.certificate
        if res.status == "infeasible":
            labels = list(rows.eq_labels) + list(rows.ub_labels)
            names = sorted({labels[i][0] for i in res.infeasible_rows})
            detail = ", ".join(f"{labels[i][0]}{list(labels[i][1])}" for i in res.infeasible_rows)
            cert = f"{cert}; rows {detail}; groups {names}"
        return LpSolution(None, math.nan if res.status != "unbounded" else math.inf,
                          res.status, res.iterations, cert)
    v = np.zeros(inst.n_vars)
    v[free] = res.x
    alloc = inst.from_scaled(v, solver="centralized")
    return LpSolution(alloc, res.objective * inst.objective_scale, "optimal", res.iterations)


# ---------------------------------------------------------------------------
# brute-force oracle over binary association and caching decisions


class EnumerationCapExceeded(ValueError):
    pass


@dataclass
class BinarySolution:
    a: np.ndarray
    b: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    utility: float
    feasible: bool
    enumerated: int

    def as_allocation(self) -> Allocation:
        return Allocation(self.a.astype(float), self.b.copy(), self.x1.astype(float), self.x2.astype(float))


def _best_bandwidth(inst: ProblemInstance, n: int, users: tuple[int, ...]):
    """Optimal bandwidth at BS ``n`` for ``users``: minimum rates, leftover to best positive margin."""
    b = {}
    for u in users:
        need = inst.min_comm_rate[u]
        r = inst.spectral_efficiency[u, n]
        if need > 0 and r <= 0:
            return None
        b[u] = need / r if need > 0 else 0.0
    left = inst.bandwidth[n] - sum(b.values())
    if left < -1e-9 * inst.bandwidth[n]:
        return None
    comm = inst.coefficients.comm
    if users:
        best = max(users, key=lambda u: (comm[u, n], -u))
        if comm[best, n] > 0:
            b[best] += max(left, 0.0)
    return b


def _best_cache(inst: ProblemInstance, n: int, users: tuple[int, ...]):
    """Exact 0/1 caching at BS ``n`` by subset enumeration."""
    if not inst.caching:
        return 0.0, ()
    c1, c2 = inst.coefficients.cache1, inst.coefficients.cache2
    items = [(u, 1, c1[u, n], inst.input_size[u]) for u in users]
    items += [(u, 2, c2[u, n], inst.output_size[u]) for u in users]
    best_val, best_set = 0.0, ()
    cap = inst.cache_capacity[n]
    for mask in itertools.product((0, 1), repeat=len(items)):
        size = sum(it[3] for it, on in zip(items, mask) if on)
        if size > cap * (1 + 1e-12):
            continue
        val = sum(it[2] for it, on in zip(items, mask) if on)
        if val > best_val:
            best_val, best_set = val, tuple(it[:2] for it, on in zip(items, mask) if on)
    return best_val, best_set


def binary_utility(inst: ProblemInstance, assoc) -> tuple[float, dict] | None:
    """Best utility for a fixed association vector (BS index per user), or None if infeasible."""
    U, N = inst.n_users, inst.n_bs
    groups = [tuple(u for u in range(U) if assoc[u] == n) for n in range(N)]
    for n, users in enumerate(groups):
        if len(users) > inst.max_tasks[n]:
            return None
    for u in range(U):
        if inst.compute_rate[u, assoc[u]] < inst.min_compute_rate[u]:
            return None
    total = 0.0
    detail = {"b": {}, "cache": {}}
    for n, users in enumerate(groups):
        b = _best_bandwidth(inst, n, users)
        if b is None:
            return None
        val, chosen = _best_cache(inst, n, users)
        total += val
        total += sum(inst.coefficients.comm[u, n] * bu for u, bu in b.items())
        total += sum(inst.coefficients.compute[u, n] for u in users)
        detail["b"].update({(u, n): bu for u, bu in b.items()})
        detail["cache"][n] = chosen
    return total, detail


def brute_force_binary(inst: ProblemInstance, cap: int = 2_000_000) -> BinarySolution:
    """Exact optimum with binary association and caching by enumeration.

    The enumeration covers ``N**U`` associations and, per association,
    ``4**U`` caching patterns (caching is only possible at the associated
    BS).  Bandwidth is optimized exactly for each association.
    """
    U, N = inst.n_users, inst.n_bs
    size = N**U * 4**U
    if size > cap:
        raise EnumerationCapExceeded(f"enumeration size {N}^{U} * 4^{U} = {size} exceeds cap {cap}")
    best = None
    for assoc in itertools.product(range(N), repeat=U):
        got = binary_utility(inst, assoc)
        if got is not None and (best is None or got[0] > best[0]):
            best = (got[0], assoc, got[1])
    a = np.zeros((U, N), dtype=int)
    b = np.zeros((U, N))
    x1 = np.zeros((U, N), dtype=int)
    x2 = np.zeros((U, N), dtype=int)
    if best is None:
        return BinarySolution(a, b, x1, x2, -math.inf, False, size)
    val, assoc, detail = best
    for u, n in enumerate(assoc):
        a[u, n] = 1
    for (u, n), bu in detail["b"].items():
        b[u, n] = bu
    for n, chosen in detail["cache"].items():
        for u, kind in chosen:
            (x1 if kind == 1 else x2)[u, n] = 1
    return BinarySolution(a, b, x1, x2, val, True, size)
