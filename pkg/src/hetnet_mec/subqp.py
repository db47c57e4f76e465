"""Per-BS local subproblem of the consensus scheme and its interior-point solver.

BS ``n`` holds local copies of the whole association and bandwidth grids plus
its own caching column, and minimizes

    -(its own utility terms) + mu.(a_hat - a) + rho/2 |a_hat - a|^2
                             + nu.(b_hat - b) + rho/2 |b_hat - b|^2

over the local feasible set (all coupling constraints on the local copies,
its own cache capacity, linking rows, nonnegativity).  Everything is in the
scaled/normalized space of :class:`~hetnet_mec.problem.ProblemInstance`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import simplex
from .problem import ProblemInstance

__all__ = [
    "LocalSubproblem",
    "QpSolution",
    "Phase1Result",
    "InfeasibleSubproblem",
    "NonConvergence",
    "local_subproblem",
    "phase1_feasible",
    "solve_local",
    "kkt_residual",
    "reduce_subproblem",
]

# caching coefficients at or below this (normalized) value are pinned to 0
CACHE_COEF_EPS = 1e-12


class InfeasibleSubproblem(ValueError):
    def __init__(self, bs_id: int, groups: list[str], detail: str = ""):
        self.bs_id = bs_id
        self.groups = groups
        super().__init__(f"local feasible set of BS {bs_id} is empty; "
                         f"violated row groups {groups}{': ' + detail if detail else ''}")


class NonConvergence(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"interior point stopped after {iterations} Newton steps, residual {residual:.3e}")


@dataclass(frozen=True, eq=False)
class LocalSubproblem:
    """``min 1/2 x'Px + q'x  s.t.  A x = b, G x <= h`` for one BS.

    ``cols`` maps local variables to indices of the global scaled vector;
    ``g_labels`` names the row group of each inequality (``"bound"`` for
    nonnegativity).
    """

    bs_id: int
    n_users: int
    n_bs: int
    cols: np.ndarray
    P: np.ndarray          # diagonal of the Hessian
    q: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    g_labels: tuple
    rho: float

    @property
    def n(self) -> int:
        return len(self.q)

    def objective(self, x) -> float:
        x = np.asarray(x)
        return float(0.5 * x @ (self.P * x) + self.q @ x)

    def with_objective(self, q) -> "LocalSubproblem":
        return LocalSubproblem(self.bs_id, self.n_users, self.n_bs, self.cols, self.P, np.asarray(q, float),
                               self.A, self.b, self.G, self.h, self.g_labels, self.rho)


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray        # equality multipliers
    z: np.ndarray        # inequality multipliers
    s: np.ndarray        # inequality slacks
    kkt_residual: float
    newton_iterations: int
    objective: float
    problem: "LocalSubproblem | None" = None   # the (possibly reduced) problem actually solved


@dataclass
class Phase1Result:
    feasible: bool
    point: np.ndarray | None
    min_slack: float
    strict: bool
    groups: list[str]     # violated row groups when infeasible
    # inequality rows that hold with equality on the whole feasible set
    implicit: tuple = ()


def _local_layout(inst: ProblemInstance, n: int):
    U, N = inst.n_users, inst.n_bs
    a = np.arange(U * N) + inst.block_slice("a").start
    b = np.arange(U * N) + inst.block_slice("b").start
    x1 = np.array([inst.index("x1", u, n) for u in range(U)])
    x2 = np.array([inst.index("x2", u, n) for u in range(U)])
    return a, b, x1, x2


def local_subproblem(inst: ProblemInstance, n: int, a_global, b_global, mu, nu, rho: float) -> LocalSubproblem:
    """Step-1 problem of BS ``n`` around global iterates ``a_global``/``b_global``.

    All matrices are ``U x N`` arrays in scaled units (bandwidth as a
    fraction of the BS bandwidth).  Caching columns with a non-positive
    coefficient, a zero cache or caching disabled are pinned to zero and
    removed.
    """
    if not rho > 0:
        raise ValueError("rho must be > 0")
    U, N = inst.n_users, inst.n_bs
    ia, ib, ix1, ix2 = _local_layout(inst, n)
    c = inst.scaled_objective()
    ub = inst.upper_bounds
    keep_x = [j for j in np.concatenate([ix1, ix2])
              if ub[j] > 0 and c[j] > CACHE_COEF_EPS and inst.cache_capacity[n] > 0]
    cols = np.concatenate([ia, ib, np.array(keep_x, dtype=int)]).astype(int)

    own = np.zeros(inst.n_vars, dtype=bool)
    own[[inst.index(blk, u, n) for blk in ("a", "b") for u in range(U)]] = True
    own[keep_x] = True
    lin = -np.where(own, c, 0.0)[cols]
    m = U * N
    P = np.zeros(len(cols))
    P[:2 * m] = rho
    q = lin.copy()
    q[:m] += np.ravel(mu) - rho * np.ravel(a_global)
    q[m:2 * m] += np.ravel(nu) - rho * np.ravel(b_global)

    rows = inst.rows
    A = rows.A_eq[:, cols]
    G_rows, h_rows, labels = [], [], []
    for k, (grp, idx) in enumerate(rows.ub_labels):
        if grp == "C6" and idx[0] != n:
            continue
        if grp in ("L1", "L2") and idx[1] != n:
            continue
        row = rows.A_ub[k, cols]
        if not np.any(row > 0) and rows.b_ub[k] >= 0:
            continue    # trivially satisfied for nonnegative variables
        G_rows.append(row)
        h_rows.append(rows.b_ub[k])
        labels.append(grp)
    nb = len(cols)
    G = np.vstack([np.array(G_rows).reshape(-1, nb), -np.eye(nb)])
    h = np.concatenate([np.array(h_rows, dtype=float), np.zeros(nb)])
    labels += ["bound"] * nb
    return LocalSubproblem(n, U, N, cols, P, q, A, rows.b_eq.copy(), G, h, tuple(labels), float(rho))


def unpack(sub: LocalSubproblem, x):
    """Split a local solution into ``a_hat``, ``b_hat`` (U x N) and the full-length caching column."""
    U, N = sub.n_users, sub.n_bs
    m = U * N
    a_hat = np.asarray(x[:m]).reshape(U, N)
    b_hat = np.asarray(x[m:2 * m]).reshape(U, N)
    x1 = np.zeros(U)
    x2 = np.zeros(U)
    for g, val in zip(sub.cols[2 * m:], x[2 * m:]):
        blk, rem = divmod(int(g), m)
        (x1 if blk == 2 else x2)[rem // N] = val
    return a_hat, b_hat, x1, x2


# ---------------------------------------------------------------------------


def _constructive_point(sub: LocalSubproblem, delta: float):
    """Uniform association, proportional bandwidth and small caching shares."""
    U, N = sub.n_users, sub.n_bs
    m = U * N
    x = np.empty(sub.n)
    x[:m] = 1.0 / N
    x[m:2 * m] = 1.0 / (2.0 * N * U)
    x[2 * m:] = 1.0 / (4.0 * N)
    # shrink the caching shares until every cache row has slack
    for _ in range(60):
        slack = sub.h - sub.G @ x
        if np.all(slack >= delta) or sub.n == 2 * m:
            break
        x[2 * m:] *= 0.5
    if np.all(slack >= delta) and np.allclose(sub.A @ x, sub.b, atol=1e-12):
        return x, float(slack.min())
    return None, 0.0


def phase1_feasible(sub: LocalSubproblem, delta: float = 1e-9) -> Phase1Result:
    """Strictly feasible start for the interior-point solver, or an infeasibility report.

    Tries a constructive point first; otherwise maximizes the smallest
    inequality slack ``t`` by LP.  ``t > delta`` gives a strict interior
    point.  ``t ~ 0`` means some rows are tight on the whole set; those are
    listed in ``implicit`` and the point is interior to the remaining rows
    (``strict`` reports whether that worked out).
    """
    x, slack = _constructive_point(sub, delta)
    if x is not None:
        return Phase1Result(True, x, slack, True, [])
    t, x = _max_min_slack(sub, range(len(sub.h)))
    if t > delta:
        return Phase1Result(True, x, t, True, [])
    if t >= -1e-9:
        implicit, x = _implicit_equalities(sub, delta)
        reduced = reduce_subproblem(sub, implicit)
        t = float((reduced.h - reduced.G @ x).min())
        return Phase1Result(True, x, t, t > 0, [], implicit)
    groups = []
    for grp in dict.fromkeys(sub.g_labels):
        keep = [k for k, lab in enumerate(sub.g_labels) if lab != grp]
        if _max_min_slack(sub, keep)[0] >= -1e-9:
            groups.append(grp)
    if not groups:
        groups = sorted(set(sub.g_labels))
    return Phase1Result(False, None, t, False, groups)


def _implicit_equalities(sub: LocalSubproblem, delta: float):
    """Rows that are tight on the whole feasible set, plus a point with slack on all others.

    Each round maximizes the total (capped) slack of the rows not yet known
    to be loose; rows that gain slack are loose.  A round where none gains
    slack proves the remaining rows are implicit equalities.  The returned
    point averages the round optima, so every loose row has positive slack.
    """
    m, n = len(sub.h), sub.n
    loose: set[int] = set()
    points = []
    while True:
        rest = [k for k in range(m) if k not in loose]
        if not rest:
            break
        c = np.zeros(n + len(rest))
        c[n:] = 1.0
        G1 = np.hstack([sub.G, np.zeros((m, len(rest)))])
        for j, k in enumerate(rest):
            G1[k, n + j] = 1.0
        cap = np.hstack([np.zeros((len(rest), n)), np.eye(len(rest))])
        A1 = np.hstack([sub.A, np.zeros((sub.A.shape[0], len(rest)))])
        res = simplex(c, np.vstack([G1, cap]), np.concatenate([sub.h, np.ones(len(rest))]), A1, sub.b)
        if res.status != "optimal":
            break
        points.append(res.x[:n])
        gained = {k for j, k in enumerate(rest) if res.x[n + j] > delta}
        if not gained:
            break
        loose |= gained
    implicit = tuple(k for k in range(m) if k not in loose)
    return implicit, np.mean(points, axis=0)


def reduce_subproblem(sub: LocalSubproblem, implicit) -> LocalSubproblem:
    """Move implicit-equality rows from ``G`` into ``A``, dropping linearly dependent ones."""
    if not implicit:
        return sub
    implicit = list(implicit)
    A, b = sub.A, sub.b
    rank = np.linalg.matrix_rank(A) if A.size else 0
    for k in implicit:
        cand = np.vstack([A, sub.G[k]])
        r = np.linalg.matrix_rank(cand)
        if r > rank:
            A, b, rank = cand, np.append(b, sub.h[k]), r
    keep = [k for k in range(len(sub.h)) if k not in set(implicit)]
    return LocalSubproblem(sub.bs_id, sub.n_users, sub.n_bs, sub.cols, sub.P, sub.q, A, b,
                           sub.G[keep], sub.h[keep], tuple(sub.g_labels[k] for k in keep), sub.rho)


def _max_min_slack(sub: LocalSubproblem, rows) -> tuple[float, np.ndarray | None]:
    rows = list(rows)
    G, h = sub.G[rows], sub.h[rows]
    n = sub.n
    # variables: x >= 0, t+ >= 0, t- >= 0; maximize t+ - t- with t+ <= 1
    c = np.zeros(n + 2)
    c[n], c[n + 1] = 1.0, -1.0
    G1 = np.hstack([G, np.ones((len(rows), 1)), -np.ones((len(rows), 1))])
    cap = np.zeros((1, n + 2))
    cap[0, n] = 1.0
    A1 = np.hstack([sub.A, np.zeros((sub.A.shape[0], 2))])
    res = simplex(c, np.vstack([G1, cap]), np.concatenate([h, [1.0]]), A1, sub.b)
    if res.status != "optimal":
        return -np.inf, None
    return float(res.objective), res.x[:n]


# ---------------------------------------------------------------------------


def kkt_residual(sub: LocalSubproblem, x, y, z, s) -> float:
    """Largest of the dual, equality, inequality residuals and the duality measure."""
    r_d = sub.P * x + sub.q + sub.A.T @ y + sub.G.T @ z
    r_p = sub.A @ x - sub.b
    r_i = sub.G @ x + s - sub.h
    mu = float(s @ z) / len(s)
    return float(max(np.abs(r_d).max(initial=0.0), np.abs(r_p).max(initial=0.0),
                     np.abs(r_i).max(initial=0.0), mu))


def solve_local(sub: LocalSubproblem, tol: float = 1e-8, max_newton: int = 200,
                start=None, sigma: float = 0.1) -> QpSolution:
    """Primal-dual interior-point method on the perturbed KKT system.

    Newton steps toward the central path with target ``sigma * mu`` (barrier
    reduced tenfold per step by default), fraction-to-boundary 0.99, stop
    once the KKT residual (including the duality measure) is below ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if start is None:
        ph = phase1_feasible(sub)
        if not ph.feasible:
            raise InfeasibleSubproblem(sub.bs_id, ph.groups)
        start = ph.point
        sub = reduce_subproblem(sub, ph.implicit)
    x = np.array(start, dtype=float)
    G, h, A, b, P, q = sub.G, sub.h, sub.A, sub.b, sub.P, sub.q
    m, p, n = len(h), len(b), sub.n
    s = np.maximum(h - G @ x, 1e-4)
    z = np.ones(m)
    y = np.zeros(p)
    K = np.zeros((n + p, n + p))
    K[n:, :n] = A
    K[:n, n:] = A.T
    for it in range(max_newton + 1):
        r_d = P * x + q + A.T @ y + G.T @ z
        r_p = A @ x - b
        r_i = G @ x + s - h
        mu = float(s @ z) / m
        res = max(np.abs(r_d).max(), np.abs(r_p).max(initial=0.0), np.abs(r_i).max(), mu)
        if res <= tol:
            return QpSolution(x, y, z, s, float(res), it, sub.objective(x), sub)
        if it == max_newton:
            break
        d = z / s
        r_c = sigma * mu - s * z
        K[:n, :n] = G.T @ (d[:, None] * G)
        K[np.arange(n), np.arange(n)] += P
        rhs = np.concatenate([-r_d - G.T @ ((r_c + z * r_i) / s), -r_p])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        dx, dy = sol[:n], sol[n:]
        dz = (r_c + z * r_i + z * (G @ dx)) / s
        ds = -r_i - G @ dx
        alpha = min(1.0, _max_step(s, ds), _max_step(z, dz))
        x += alpha * dx
        y += alpha * dy
        z += alpha * dz
        s += alpha * ds
    raise NonConvergence(float(res), max_newton)


def _max_step(v: np.ndarray, dv: np.ndarray, frac: float = 0.99) -> float:
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return frac * float(np.min(-v[neg] / dv[neg]))
