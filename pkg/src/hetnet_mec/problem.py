"""Relaxed joint allocation problem: coefficients, constraint rows, utility.

Decision variables live on a ``U x N`` grid in four blocks, flattened in this
order: association ``a``, bandwidth ``b`` (Hz, already multiplied by ``a``),
and the two caching indicators ``x1``/``x2`` (also multiplied by ``a``).

Solvers work on *scaled* variables where each bandwidth entry is divided by
the bandwidth of its BS, so every variable lies in ``[0, 1]``.  Constraint
rows are normalized by their right-hand side (or largest coefficient when the
right-hand side is zero) and the objective by its largest coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .scenario import Scenario, caching_gain

__all__ = [
    "BLOCKS",
    "UtilityCoefficients",
    "Allocation",
    "ConstraintRows",
    "ProblemInstance",
    "Violation",
    "build_instance",
    "evaluate_utility",
    "check_feasibility",
    "dump_instance",
]

BLOCKS = ("a", "b", "x1", "x2")


@dataclass(frozen=True)
class UtilityCoefficients:
    """Per-(user, BS) coefficients of the linear utility.

    ``comm`` is per Hz of allocated bandwidth, ``compute`` multiplies the
    association, ``cache1``/``cache2`` multiply the caching indicators.
    """

    comm: np.ndarray
    compute: np.ndarray
    cache1: np.ndarray
    cache2: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.compute.ravel(), self.comm.ravel(),
                               self.cache1.ravel(), self.cache2.ravel()])


@dataclass
class Allocation:
    a: np.ndarray
    b_tilde: np.ndarray
    x1_tilde: np.ndarray
    x2_tilde: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, n_users: int, n_bs: int) -> "Allocation":
        z = np.zeros((n_users, n_bs))
        return cls(z.copy(), z.copy(), z.copy(), z.copy())

    @classmethod
    def from_vector(cls, v, n_users: int, n_bs: int, **meta) -> "Allocation":
        blocks = np.asarray(v, dtype=float).reshape(4, n_users, n_bs)
        return cls(*(blk.copy() for blk in blocks), meta=dict(meta))

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(m, dtype=float).ravel()
                               for m in (self.a, self.b_tilde, self.x1_tilde, self.x2_tilde)])

    def copy(self) -> "Allocation":
        return Allocation(self.a.copy(), self.b_tilde.copy(), self.x1_tilde.copy(),
                          self.x2_tilde.copy(), dict(self.meta))


@dataclass(frozen=True)
class ConstraintRows:
    """``A_eq v = b_eq`` and ``A_ub v <= b_ub`` with a label per row."""

    A_eq: np.ndarray
    b_eq: np.ndarray
    eq_labels: tuple
    A_ub: np.ndarray
    b_ub: np.ndarray
    ub_labels: tuple


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: tuple
    magnitude: float      # in the row's own SI unit
    normalized: float     # magnitude divided by the row scale

    def __str__(self):
        return f"{self.constraint}{list(self.index)}: violated by {self.magnitude:.6g}"


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    n_users: int
    n_bs: int
    coefficients: UtilityCoefficients
    spectral_efficiency: np.ndarray   # r[u, n], bps/Hz
    compute_rate: np.ndarray          # R[u, n], bps
    energy: np.ndarray                # E[u, n], J
    bandwidth: np.ndarray             # B[n], Hz
    max_tasks: np.ndarray             # D[n]
    cache_capacity: np.ndarray        # Z[n], bits
    input_size: np.ndarray            # z[u], bits
    output_size: np.ndarray           # z'[u], bits
    min_comm_rate: np.ndarray         # R^cm[u]
    min_compute_rate: np.ndarray      # R^cp[u]
    caching: bool = True
    si_rows: ConstraintRows = None
    rows: ConstraintRows = None       # scaled variables, normalized rows
    row_scale_eq: np.ndarray = None
    row_scale_ub: np.ndarray = None

    # ---- layout helpers

    @property
    def n_vars(self) -> int:
        return 4 * self.n_users * self.n_bs

    def index(self, block: str, u: int, n: int) -> int:
        return (BLOCKS.index(block) * self.n_users + u) * self.n_bs + n

    def block_slice(self, block: str) -> slice:
        k = BLOCKS.index(block)
        m = self.n_users * self.n_bs
        return slice(k * m, (k + 1) * m)

    @property
    def objective(self) -> np.ndarray:
        """Objective vector over SI variables."""
        return self.coefficients.as_vector()

    @property
    def var_scale(self) -> np.ndarray:
        s = np.ones(self.n_vars)
        s[self.block_slice("b")] = np.tile(self.bandwidth, self.n_users)
        return s

    @property
    def upper_bounds(self) -> np.ndarray:
        """Upper bounds on scaled variables (0 pins caching off)."""
        ub = np.ones(self.n_vars)
        if not self.caching:
            ub[self.block_slice("x1")] = 0.0
            ub[self.block_slice("x2")] = 0.0
        return ub

    @property
    def objective_scale(self) -> float:
        c = np.abs(self.objective * self.var_scale)
        m = float(c.max()) if c.size else 0.0
        return m if m > 0 else 1.0

    def scaled_objective(self) -> np.ndarray:
        """Objective over scaled variables, divided by ``objective_scale``."""
        return self.objective * self.var_scale / self.objective_scale

    def to_scaled(self, alloc: Allocation) -> np.ndarray:
        return alloc.to_vector() / self.var_scale

    def from_scaled(self, v, **meta) -> Allocation:
        return Allocation.from_vector(np.asarray(v) * self.var_scale, self.n_users, self.n_bs, **meta)

    def without_caching(self) -> "ProblemInstance":
        return _assemble(self.n_users, self.n_bs, self.coefficients, self.spectral_efficiency,
                         self.compute_rate, self.energy, self.bandwidth, self.max_tasks,
                         self.cache_capacity, self.input_size, self.output_size,
                         self.min_comm_rate, self.min_compute_rate, caching=False)


def build_instance(scenario: Scenario, *, caching: bool = True,
                   compute_share: str = "full") -> ProblemInstance:
    """Assemble the relaxed problem for ``scenario``.

    ``compute_share`` selects the per-user computation capability: ``"full"``
    gives each associated user the whole BS capability ``F_n`` (time sharing),
    ``"per_task"`` gives ``F_n / D_n``.
    """
    s = scenario
    U, N = s.n_users, s.n_bs
    r = np.array(s.channel.spectral_efficiency, dtype=float)
    F = s.bs_array("compute_capability_cps")
    if compute_share == "per_task":
        F = F / s.bs_array("max_tasks")
    elif compute_share != "full":
        raise ValueError(f"compute_share must be 'full' or 'per_task', got {compute_share!r}")
    z = s.task_array("input_size_bits")
    zp = s.task_array("output_size_bits")
    c = s.task_array("cycles")
    e = s.bs_array("energy_per_cycle_j")
    R = F[None, :] * z[:, None] / c[:, None]
    E = c[:, None] * e[None, :]

    alpha = s.user_array("access_price")
    phi = s.user_array("compute_price")
    beta = s.bs_array("spectrum_price")
    gamma = s.bs_array("backhaul_price")
    psi = s.bs_array("energy_price")
    cp_before = s.bs_array("cache_price_before")
    cp_after = s.bs_array("cache_price_after")

    p = s.popularity.probabilities
    g1 = caching_gain(p[[u.task.content_id_before for u in s.users]], z, s.task_array("download_time_before_s"))
    g2 = caching_gain(p[[u.task.content_id_after for u in s.users]], zp, s.task_array("download_time_after_s"))

    coeffs = UtilityCoefficients(
        comm=alpha[:, None] * r - beta[None, :],
        compute=phi[:, None] * R - psi[None, :] * E,
        cache1=gamma[None, :] * np.atleast_1d(g1)[:, None] - cp_before[None, :] * z[:, None],
        cache2=gamma[None, :] * np.atleast_1d(g2)[:, None] - cp_after[None, :] * zp[:, None],
    )
    return _assemble(U, N, coeffs, r, R, E, s.bs_array("bandwidth_hz"), s.bs_array("max_tasks"),
                     s.bs_array("cache_capacity_bits"), z, zp, s.user_array("min_comm_rate_bps"),
                     s.task_array("min_compute_rate_bps"), caching=caching)


def _assemble(U, N, coeffs, r, R, E, B, D, Z, z, zp, Rcm, Rcp, caching) -> ProblemInstance:
    inst = ProblemInstance(U, N, coeffs, r, R, E, B, D, Z, z, zp, Rcm, Rcp, caching)
    si = _si_rows(inst)
    scale = inst.var_scale
    A_eq = si.A_eq * scale
    A_ub = si.A_ub * scale
    s_eq = _row_scale(A_eq, si.b_eq)
    s_ub = _row_scale(A_ub, si.b_ub)
    rows = ConstraintRows(A_eq / s_eq[:, None], si.b_eq / s_eq, si.eq_labels,
                          A_ub / s_ub[:, None], si.b_ub / s_ub, si.ub_labels)
    object.__setattr__(inst, "si_rows", si)
    object.__setattr__(inst, "rows", rows)
    object.__setattr__(inst, "row_scale_eq", s_eq)
    object.__setattr__(inst, "row_scale_ub", s_ub)
    return inst


def _row_scale(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    s = np.abs(rhs).astype(float)
    amax = np.abs(A).max(axis=1) if A.size else np.zeros(len(rhs))
    s = np.where(s > 0, s, amax)
    return np.where(s > 0, s, 1.0)


def _si_rows(inst: ProblemInstance) -> ConstraintRows:
    U, N, nv = inst.n_users, inst.n_bs, inst.n_vars
    ix = inst.index
    eq, eq_rhs, eq_lab = [], [], []
    for u in range(U):
        row = np.zeros(nv)
        row[[ix("a", u, n) for n in range(N)]] = 1.0
        eq.append(row); eq_rhs.append(1.0); eq_lab.append(("C1", (u,)))

    ub, ub_rhs, ub_lab = [], [], []

    def add(row, rhs, label):
        ub.append(row); ub_rhs.append(rhs); ub_lab.append(label)

    for n in range(N):
        row = np.zeros(nv)
        row[[ix("b", u, n) for u in range(U)]] = 1.0
        add(row, inst.bandwidth[n], ("C2", (n,)))
    for u in range(U):
        row = np.zeros(nv)
        for n in range(N):
            row[ix("b", u, n)] = -inst.spectral_efficiency[u, n]
        add(row, -inst.min_comm_rate[u], ("C3", (u,)))
    for u in range(U):
        row = np.zeros(nv)
        for n in range(N):
            row[ix("a", u, n)] = -inst.compute_rate[u, n]
        add(row, -inst.min_compute_rate[u], ("C4", (u,)))
    for n in range(N):
        row = np.zeros(nv)
        row[[ix("a", u, n) for u in range(U)]] = 1.0
        add(row, float(inst.max_tasks[n]), ("C5", (n,)))
    for n in range(N):
        row = np.zeros(nv)
        for u in range(U):
            row[ix("x1", u, n)] = inst.input_size[u]
            row[ix("x2", u, n)] = inst.output_size[u]
        add(row, inst.cache_capacity[n], ("C6", (n,)))
    # linking rows keep resources and caching at the BS the user associates with
    for blk, tag in (("b", "LB"), ("x1", "L1"), ("x2", "L2")):
        for u in range(U):
            for n in range(N):
                row = np.zeros(nv)
                row[ix(blk, u, n)] = 1.0
                row[ix("a", u, n)] = -(inst.bandwidth[n] if blk == "b" else 1.0)
                add(row, 0.0, (tag, (u, n)))
    return ConstraintRows(np.array(eq), np.array(eq_rhs), tuple(eq_lab),
                          np.array(ub), np.array(ub_rhs, dtype=float), tuple(ub_lab))


def _check_shape(inst: ProblemInstance, alloc: Allocation) -> None:
    want = (inst.n_users, inst.n_bs)
    for name in ("a", "b_tilde", "x1_tilde", "x2_tilde"):
        got = np.shape(getattr(alloc, name))
        if got != want:
            raise ValueError(f"allocation.{name} has shape {got}, expected {want}")


def evaluate_utility(inst: ProblemInstance, alloc: Allocation) -> float:
    """Total utility of ``alloc``; defined for infeasible points too."""
    _check_shape(inst, alloc)
    c = inst.coefficients
    return float(np.sum(c.comm * alloc.b_tilde) + np.sum(c.compute * alloc.a)
                 + np.sum(c.cache1 * alloc.x1_tilde) + np.sum(c.cache2 * alloc.x2_tilde))


def check_feasibility(inst: ProblemInstance, alloc: Allocation, tol: float = 1e-6) -> list[Violation]:
    """Violated constraints of ``alloc``; empty iff feasible within ``tol``.

    ``tol`` applies to normalized rows (row divided by its scale, with
    bandwidth measured as a fraction of the BS bandwidth).
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    _check_shape(inst, alloc)
    v = alloc.to_vector()
    vs = v / inst.var_scale
    out: list[Violation] = []
    si = inst.si_rows
    res_eq = si.A_eq @ v - si.b_eq
    for k, lab in enumerate(si.eq_labels):
        norm = abs(res_eq[k]) / inst.row_scale_eq[k]
        if norm > tol:
            out.append(Violation(lab[0], lab[1], float(abs(res_eq[k])), float(norm)))
    res_ub = si.A_ub @ v - si.b_ub
    for k, lab in enumerate(si.ub_labels):
        norm = res_ub[k] / inst.row_scale_ub[k]
        if norm > tol:
            out.append(Violation(lab[0], lab[1], float(res_ub[k]), float(norm)))
    ub = inst.upper_bounds
    U, N = inst.n_users, inst.n_bs
    for j in range(inst.n_vars):
        blk, rem = divmod(j, U * N)
        u, n = divmod(rem, N)
        if vs[j] < -tol:
            out.append(Violation(f"LB_{BLOCKS[blk]}", (u, n), float(-v[j]), float(-vs[j])))
        elif vs[j] > ub[j] + tol:
            over = vs[j] - ub[j]
            out.append(Violation(f"UB_{BLOCKS[blk]}", (u, n), float(over * inst.var_scale[j]), float(over)))
    return out


def dump_instance(inst: ProblemInstance) -> str:
    """Plain-text matrix dump over SI variables for cross-checking with LP tools.

    Sections: ``variables`` (index, name, lower, upper), ``objective``
    (index, coefficient; maximize), ``rows`` (index, label, sense, rhs) and
    ``triplets`` (row, column, value).
    """
    U, N = inst.n_users, inst.n_bs
    lines = [f"# relaxed allocation instance U={U} N={N} sense=max"]
    lines.append("variables")
    ub = inst.upper_bounds * inst.var_scale
    for j in range(inst.n_vars):
        blk, rem = divmod(j, U * N)
        u, n = divmod(rem, N)
        lines.append(f"{j} {BLOCKS[blk]}[{u},{n}] 0 {ub[j]!r}")
    lines.append("objective")
    for j, cj in enumerate(inst.objective):
        if cj != 0.0:
            lines.append(f"{j} {cj!r}")
    si = inst.si_rows
    lines.append("rows")
    labels = [(lab, "=", rhs) for lab, rhs in zip(si.eq_labels, si.b_eq)]
    labels += [(lab, "<=", rhs) for lab, rhs in zip(si.ub_labels, si.b_ub)]
    for i, (lab, sense, rhs) in enumerate(labels):
        idx = ",".join(str(k) for k in lab[1])
        lines.append(f"{i} {lab[0]}[{idx}] {sense} {float(rhs)!r}")
    lines.append("triplets")
    A = np.vstack([si.A_eq, si.A_ub])
    for i, j in zip(*np.nonzero(A)):
        lines.append(f"{i} {j} {float(A[i, j])!r}")
    return "\n".join(lines) + "\n"

