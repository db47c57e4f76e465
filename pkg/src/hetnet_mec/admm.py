"""Global-consensus ADMM over the base stations.

Each BS keeps local copies of the association and bandwidth grids; the
coordinator averages them (plus scaled duals) into the global iterate and
updates the duals.  Caching columns are not consensus variables: BS ``n``
owns column ``n`` and is the only one that optimizes it.

All iterates are kept in the scaled space of the problem instance, so the
penalty ``rho`` and the residual tolerances refer to normalized variables.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .problem import Allocation, ProblemInstance, evaluate_utility
from .subqp import (InfeasibleSubproblem, local_subproblem, phase1_feasible, reduce_subproblem, solve_local,
                    unpack)

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "IterationTrace",
    "SolveReport",
    "global_update",
    "dual_update",
    "check_stop",
    "initial_state",
    "admm_solve",
]

log = logging.getLogger(__name__)


def fmt(x: float) -> str:
    """Fixed 12-significant-digit float formatting used in every CSV."""
    return f"{x:.12g}"


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 2.0
    tol_primal: float = 1e-4
    tol_dual: float = 1e-4
    max_iterations: int = 1000
    record_trace: bool = True
    qp_tol: float = 1e-10
    # multiply the dual residual by rho (the usual scaled definition)
    scaled_dual_residual: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if not (self.tol_primal > 0 and self.tol_dual > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class AdmmState:
    a_hat: np.ndarray      # (N, U, N) local association copies
    b_hat: np.ndarray      # (N, U, N) local bandwidth copies
    a: np.ndarray          # (U, N)
    b: np.ndarray          # (U, N)
    mu: np.ndarray         # (N, U, N)
    nu: np.ndarray         # (N, U, N)
    x1: np.ndarray         # (U, N) caching columns, column n owned by BS n
    x2: np.ndarray
    iteration: int = 0


@dataclass
class IterationTrace:
    primal_a: list = field(default_factory=list)   # per iteration, array over BSs
    primal_b: list = field(default_factory=list)
    dual_a: list = field(default_factory=list)
    dual_b: list = field(default_factory=list)
    utility: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)

    def __len__(self):
        return len(self.utility)

    def append(self, pa, pb, da, db, util, ms):
        self.primal_a.append(np.asarray(pa, dtype=float))
        self.primal_b.append(np.asarray(pb, dtype=float))
        self.dual_a.append(float(da))
        self.dual_b.append(float(db))
        self.utility.append(float(util))
        self.elapsed_ms.append(float(ms))

    def header(self, n_bs: int, timing: bool = False) -> list[str]:
        cols = ["iteration"]
        cols += [f"primal_a_bs{n}" for n in range(n_bs)]
        cols += [f"primal_b_bs{n}" for n in range(n_bs)]
        cols += ["dual_a", "dual_b", "utility"]
        return cols + (["elapsed_ms"] if timing else [])

    def rows(self, timing: bool = False):
        for i in range(len(self)):
            row = [i + 1, *self.primal_a[i], *self.primal_b[i], self.dual_a[i], self.dual_b[i], self.utility[i]]
            if timing:
                row.append(self.elapsed_ms[i])
            yield row

    def to_csv(self, timing: bool = False) -> str:
        n_bs = len(self.primal_a[0]) if len(self) else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header(n_bs, timing))
        for row in self.rows(timing):
            w.writerow([row[0]] + [fmt(v) for v in row[1:]])
        return buf.getvalue()


@dataclass
class SolveReport:
    scheme: str
    final_utility: float
    iterations: int
    converged: bool
    termination: str
    trace: IterationTrace | None = None
    rounded_utility: float = math.nan
    rounded_feasible: bool = False
    wall_time_s: float = 0.0
    meta: dict = field(default_factory=dict)


def global_update(local, dual, rho: float) -> np.ndarray:
    """Closed-form minimizer of the consensus step: average of ``local + dual/rho`` over BSs."""
    if not rho > 0:
        raise ValueError("rho must be > 0")
    local = np.asarray(local, dtype=float)
    dual = np.asarray(dual, dtype=float)
    return np.mean(local + dual / rho, axis=0)


def dual_update(local, global_, dual, rho: float) -> np.ndarray:
    return np.asarray(dual, dtype=float) + rho * (np.asarray(local, dtype=float) - np.asarray(global_, dtype=float))


def check_stop(primal_a, primal_b, dual_a: float, dual_b: float, tol_primal: float, tol_dual: float) -> bool:
    """True when every BS's primal residuals and both dual residuals are within tolerance (inclusive)."""
    return bool(np.max(primal_a) <= tol_primal and np.max(primal_b) <= tol_primal
                and dual_a <= tol_dual and dual_b <= tol_dual)


def initial_state(inst: ProblemInstance) -> AdmmState:
    """Uniform association, bandwidth meeting the rate floor under the uniform split, zero duals."""
    U, N = inst.n_users, inst.n_bs
    a = np.full((U, N), 1.0 / N)
    r = inst.spectral_efficiency
    usable = r > 0
    b_si = np.zeros((U, N))
    for u in range(U):
        k = usable[u].sum()
        if k:
            b_si[u, usable[u]] = inst.min_comm_rate[u] / (k * r[u, usable[u]])
    b = b_si / inst.bandwidth[None, :]
    zeros = np.zeros((N, U, N))
    return AdmmState(np.repeat(a[None], N, 0), np.repeat(b[None], N, 0), a, b,
                     zeros.copy(), zeros.copy(), np.zeros((U, N)), np.zeros((U, N)))


def _allocation(inst: ProblemInstance, st: AdmmState, **meta) -> Allocation:
    v = np.concatenate([st.a.ravel(), st.b.ravel(), st.x1.ravel(), st.x2.ravel()])
    return inst.from_scaled(v, **meta)


def admm_solve(inst: ProblemInstance, config: AdmmConfig = AdmmConfig(),
               state: AdmmState | None = None, on_iteration=None) -> tuple[Allocation, SolveReport]:
    """Run consensus ADMM until the residual test passes or ``max_iterations``.

    Returns the global relaxed allocation and a report.  When the iteration
    budget runs out, the iterate with the smallest residual is returned with
    ``converged=False``.  ``on_iteration(state, trace)`` is called after each
    iteration.
    """
    t0 = time.perf_counter()
    U, N = inst.n_users, inst.n_bs
    rho = config.rho
    st = state if state is not None else initial_state(inst)
    trace = IterationTrace()
    starts, implicit = {}, {}
    for n in range(N):
        sub = local_subproblem(inst, n, st.a, st.b, st.mu[n], st.nu[n], rho)
        ph = phase1_feasible(sub)
        if not ph.feasible:
            raise InfeasibleSubproblem(n, ph.groups)
        starts[n], implicit[n] = ph.point, ph.implicit

    def step1(n: int):
        if N == 1:
            # one agent: the global copy equals the local one, so the penalty
            # vanishes and Step 1 is the centralized problem itself
            zero = np.zeros_like(st.a)
            sub = local_subproblem(inst, n, zero, zero, zero, zero, rho)
            sub = replace(sub, P=np.zeros_like(sub.P))
        else:
            sub = local_subproblem(inst, n, st.a, st.b, st.mu[n], st.nu[n], rho)
        sub = reduce_subproblem(sub, implicit[n])
        sol = solve_local(sub, tol=config.qp_tol, start=starts[n])
        return unpack(sub, sol.x), sol.newton_iterations

    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    best = None
    converged = False
    newton_total = 0
    try:
        for it in range(1, config.max_iterations + 1):
            results = list(pool.map(step1, range(N)) if pool else map(step1, range(N)))
            for n, ((a_hat, b_hat, x1, x2), k) in enumerate(results):
                st.a_hat[n], st.b_hat[n] = a_hat, b_hat
                st.x1[:, n], st.x2[:, n] = x1, x2
                newton_total += k
            a_new = global_update(st.a_hat, st.mu, rho)
            b_new = global_update(st.b_hat, st.nu, rho)
            for n in range(N):
                st.mu[n] = dual_update(st.a_hat[n], a_new, st.mu[n], rho)
                st.nu[n] = dual_update(st.b_hat[n], b_new, st.nu[n], rho)
            pa = np.linalg.norm((st.a_hat - a_new).reshape(N, -1), axis=1)
            pb = np.linalg.norm((st.b_hat - b_new).reshape(N, -1), axis=1)
            scale = rho if config.scaled_dual_residual else 1.0
            da = scale * float(np.linalg.norm(a_new - st.a))
            db = scale * float(np.linalg.norm(b_new - st.b))
            st.a, st.b, st.iteration = a_new, b_new, it
            util = evaluate_utility(inst, _allocation(inst, st))
            if config.record_trace:
                trace.append(pa, pb, da, db, util, 1e3 * (time.perf_counter() - t0))
            if on_iteration is not None:
                on_iteration(st, trace)
            worst = max(pa.max(), pb.max(), da, db)
            if best is None or worst < best[0]:
                best = (worst, it, st.a.copy(), st.b.copy(), st.x1.copy(), st.x2.copy(), util)
            if check_stop(pa, pb, da, db, config.tol_primal, config.tol_dual):
                converged = True
                break
    finally:
        if pool:
            pool.shutdown()

    if converged:
        alloc = _allocation(inst, st, solver="admm", converged=True)
        util, iters, reason = evaluate_utility(inst, alloc), st.iteration, "converged"
    else:
        _, it_best, a, b, x1, x2, _ = best
        v = np.concatenate([a.ravel(), b.ravel(), x1.ravel(), x2.ravel()])
        alloc = inst.from_scaled(v, solver="admm", converged=False, best_iteration=it_best)
        util, iters, reason = evaluate_utility(inst, alloc), st.iteration, "max_iterations"
        log.warning("ADMM stopped at max_iterations=%d without meeting tolerances", config.max_iterations)
    report = SolveReport("admm", util, iters, converged, reason, trace if config.record_trace else None,
                         wall_time_s=time.perf_counter() - t0,
                         meta={"rho": rho, "newton_iterations": newton_total, "state": st})
    return alloc, report
