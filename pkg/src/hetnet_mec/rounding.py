"""Binary recovery from a relaxed allocation.

Three passes: associate users greedily by marginal benefit, re-solve the
bandwidth LP for the fixed association, then fill each cache with a
ratio-greedy knapsack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import simplex
from .problem import Allocation, ProblemInstance, check_feasibility, evaluate_utility

__all__ = ["BinaryAllocation", "marginal_benefit", "greedy_knapsack", "round_allocation"]


@dataclass
class BinaryAllocation:
    a: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    b: np.ndarray
    utility: float
    feasible: bool
    blocking_user: int | None = None

    def as_allocation(self) -> Allocation:
        return Allocation(self.a.astype(float), self.b.copy(), self.x1.astype(float), self.x2.astype(float))


def marginal_benefit(inst: ProblemInstance, relaxed: Allocation) -> np.ndarray:
    """Per-(user, BS) utility contribution of the relaxed point."""
    c = inst.coefficients
    return (c.comm * relaxed.b_tilde + c.compute * relaxed.a
            + c.cache1 * relaxed.x1_tilde + c.cache2 * relaxed.x2_tilde)


def greedy_knapsack(values, sizes, capacity: float) -> list[int]:
    """Indices picked by descending value/size ratio, skipping items that no longer fit.

    Only items with a positive value are considered; ties go to the lower index.
    """
    values = np.asarray(values, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    order = sorted((i for i in range(len(values)) if values[i] > 0),
                   key=lambda i: (-values[i] / sizes[i], i))
    used, picked = 0.0, []
    for i in order:
        if used + sizes[i] <= capacity * (1 + 1e-12):
            picked.append(i)
            used += sizes[i]
    return sorted(picked)


def _bandwidth_need(inst: ProblemInstance, u: int, n: int) -> float:
    need = inst.min_comm_rate[u]
    if need <= 0:
        return 0.0
    r = inst.spectral_efficiency[u, n]
    return need / r if r > 0 else np.inf


def _integral(m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    return bool(np.all(np.minimum(np.abs(m), np.abs(m - 1.0)) <= tol))


def round_allocation(inst: ProblemInstance, relaxed: Allocation) -> BinaryAllocation:
    """Binary allocation recovered from ``relaxed``.

    An integral feasible input is a fixed point and comes back unchanged.
    """
    U, N = inst.n_users, inst.n_bs
    if (_integral(relaxed.a) and _integral(relaxed.x1_tilde) and _integral(relaxed.x2_tilde)
            and not check_feasibility(inst, relaxed, tol=1e-9)):
        a, x1, x2 = (np.rint(m).astype(int) for m in (relaxed.a, relaxed.x1_tilde, relaxed.x2_tilde))
        return BinaryAllocation(a, x1, x2, np.asarray(relaxed.b_tilde, dtype=float).copy(),
                                evaluate_utility(inst, relaxed), True)

    benefit = marginal_benefit(inst, relaxed)
    count = np.zeros(N, dtype=int)
    left = inst.bandwidth.astype(float).copy()
    assoc = np.full(U, -1)
    blocking = None

    for u in sorted(range(U), key=lambda u: (-benefit[u].max(), u)):
        for n in sorted(range(N), key=lambda n: (-benefit[u, n], n)):
            need = _bandwidth_need(inst, u, n)
            if (count[n] < inst.max_tasks[n]
                    and inst.compute_rate[u, n] >= inst.min_compute_rate[u]
                    and need <= left[n] * (1 + 1e-12)):
                assoc[u] = n
                count[n] += 1
                left[n] -= need
                break
        else:
            if blocking is None:
                blocking = u
            # keep every user associated somewhere; the result is flagged infeasible
            assoc[u] = int(np.argmax(benefit[u]))
            count[assoc[u]] += 1

    a = np.zeros((U, N), dtype=int)
    a[np.arange(U), assoc] = 1

    b = np.zeros((U, N))
    b_ok = _solve_bandwidth(inst, assoc, b)

    x1 = np.zeros((U, N), dtype=int)
    x2 = np.zeros((U, N), dtype=int)
    if inst.caching:
        c = inst.coefficients
        for n in range(N):
            users = [u for u in range(U) if assoc[u] == n]
            items = [(u, 1) for u in users] + [(u, 2) for u in users]
            vals = [c.cache1[u, n] if k == 1 else c.cache2[u, n] for u, k in items]
            sizes = [inst.input_size[u] if k == 1 else inst.output_size[u] for u, k in items]
            for i in greedy_knapsack(vals, sizes, inst.cache_capacity[n]):
                u, k = items[i]
                (x1 if k == 1 else x2)[u, n] = 1

    out = BinaryAllocation(a, x1, x2, b, 0.0, blocking is None and b_ok, blocking)
    alloc = out.as_allocation()
    out.utility = evaluate_utility(inst, alloc)
    if out.feasible and check_feasibility(inst, alloc, tol=1e-9):
        out.feasible = False
    return out


def _solve_bandwidth(inst: ProblemInstance, assoc: np.ndarray, b: np.ndarray) -> bool:
    """Exact bandwidth LP for a fixed association; fills ``b`` in place (Hz)."""
    U, N = inst.n_users, inst.n_bs
    B = inst.bandwidth
    # variables: fraction of the serving BS bandwidth per user
    c = np.array([inst.coefficients.comm[u, assoc[u]] * B[assoc[u]] for u in range(U)])
    A_ub, b_ub = [], []
    for n in range(N):
        row = np.array([1.0 if assoc[u] == n else 0.0 for u in range(U)])
        if row.any():
            A_ub.append(row)
            b_ub.append(1.0)
    for u in range(U):
        need = inst.min_comm_rate[u]
        if need > 0:
            row = np.zeros(U)
            row[u] = -inst.spectral_efficiency[u, assoc[u]] * B[assoc[u]] / need
            A_ub.append(row)
            b_ub.append(-1.0)
    scale = np.abs(c).max() if np.any(c) else 1.0
    res = simplex(c / scale, np.array(A_ub), np.array(b_ub))
    if res.status != "optimal":
        return False
    b[np.arange(U), assoc] = res.x * B[assoc]
    return True
