import numpy as np
import pytest

from hetnet_mec.admm import initial_state
from hetnet_mec.problem import build_instance
from hetnet_mec.scenario import build_scenario
from hetnet_mec.subqp import (
    InfeasibleSubproblem, NonConvergence, _constructive_point, kkt_residual, local_subproblem, phase1_feasible, solve_local, unpack,
)

from conftest import tiny_instance


def sub_at_start(inst, n=0, rho=2.0):
    st = initial_state(inst)
    return local_subproblem(inst, n, st.a, st.b, st.mu[n], st.nu[n], rho)


def prox_only(sub, center):
    """Same feasible set, objective rho/2 |x - center|^2 on the consensus coordinates only."""
    q = -sub.P * center
    return sub.with_objective(q)


def test_projection_of_interior_point_is_identity(fig2_instance):
    sub = sub_at_start(fig2_instance)
    ph = phase1_feasible(sub)
    assert ph.strict
    m = 2 * sub.n_users * sub.n_bs
    sol = solve_local(prox_only(sub, ph.point), tol=1e-10)
    np.testing.assert_allclose(sol.x[:m], ph.point[:m], atol=1e-8)


def test_single_box_violation_is_clipped(fig2_instance):
    sub = sub_at_start(fig2_instance)
    center = phase1_feasible(sub).point.copy()
    U, N = sub.n_users, sub.n_bs
    m = U * N
    # b_hat[0, 1] below its lower bound; user 0 still meets its rate through BS 0
    k = m + 0 * N + 1
    center[k] = -0.05
    sol = solve_local(prox_only(sub, center), tol=1e-11)
    assert sol.x[k] == pytest.approx(0.0, abs=1e-8)
    others = [j for j in range(2 * m) if j != k]
    np.testing.assert_allclose(sol.x[others], center[others], atol=1e-7)


def one_user_two_bs():
    doc = {"seed": 0,
           "bss": [{"compute": "8GHz", "cache": "0Mb", "position": [0, 0]},
                   {"compute": "5GHz", "cache": "0Mb", "position": [100, 0]}],
           "users": {"min_comm_rate": "30Mbps",
                     "entries": [{"input_size": "2Mb", "output_size": "1Mb", "cycles": "600Mcycles",
                                  "content_before": 0, "content_after": 0}]},
           "channel": {"spectral_efficiency": [[6.0, 9.0]]}}
    return build_instance(build_scenario(doc))


def test_matches_grid_search():
    inst = one_user_two_bs()
    a_g = np.array([[0.3, 0.7]])
    b_g = np.array([[0.5, 0.2]])
    mu = np.array([[0.4, -0.1]])
    nu = np.array([[-0.2, 0.3]])
    sub = local_subproblem(inst, 0, a_g, b_g, mu, nu, rho=1.5)
    assert sub.n == 4          # a0, a1, b0, b1; no cache at either BS
    sol = solve_local(sub, tol=1e-11)

    # grid over (a0, b0) at 1e-3; a1 = 1 - a0; b1 minimized exactly on its feasible interval
    g = np.linspace(0.0, 1.0, 1001)
    A0, B0 = np.meshgrid(g, g, indexing="ij")
    A1 = 1.0 - A0
    lo = np.zeros_like(A0)
    hi = np.full_like(A0, np.inf)
    for row, h in zip(sub.G, sub.h):
        rest = h - row[0] * A0 - row[1] * A1 - row[2] * B0
        if row[3] > 0:
            hi = np.minimum(hi, rest / row[3])
        elif row[3] < 0:
            lo = np.maximum(lo, rest / row[3])
        else:
            hi = np.where(rest < -1e-12, -np.inf, hi)
    ok = lo <= hi
    B1 = np.clip(-sub.q[3] / sub.P[3], lo, hi)
    obj = (0.5 * sub.P[0] * A0**2 + sub.q[0] * A0 + 0.5 * sub.P[1] * A1**2 + sub.q[1] * A1
           + 0.5 * sub.P[2] * B0**2 + sub.q[2] * B0 + 0.5 * sub.P[3] * B1**2 + sub.q[3] * B1)
    obj = np.where(ok, obj, np.inf)
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    best = obj[i, j]
    assert sol.objective <= best + 1e-12
    assert best - sol.objective <= 1e-5
    np.testing.assert_allclose(sol.x, [A0[i, j], A1[i, j], B0[i, j], B1[i, j]], atol=2e-3)


# ---- phase 1

def test_phase1_constructive_point(fig2_instance):
    sub = sub_at_start(fig2_instance)
    ph = phase1_feasible(sub)
    m = sub.n_users * sub.n_bs
    assert ph.feasible and ph.strict
    np.testing.assert_allclose(ph.point[:m], 1.0 / sub.n_bs)
    assert np.all(sub.h - sub.G @ ph.point >= 1e-9)
    np.testing.assert_allclose(sub.A @ ph.point, sub.b, atol=1e-12)


def test_zero_cache_drops_caching_columns():
    inst = tiny_instance(2, 2, 3, cache=0.0)
    sub = sub_at_start(inst)
    assert sub.n == 2 * 3 * 2
    assert phase1_feasible(sub).feasible
    x = solve_local(sub).x
    _, _, x1, x2 = unpack(sub, x)
    assert not x1.any() and not x2.any()


def test_unsatisfiable_compute_rate_certificate():
    doc = {"seed": 0, "bss": [{"compute": "1GHz"}],
           "users": {"min_compute_rate": "1Gbps",
                     "entries": [{"input_size": "1Mb", "output_size": "1Mb", "cycles": "1Gcycles",
                                  "content_before": 0, "content_after": 0}]}}
    inst = build_instance(build_scenario(doc))
    sub = sub_at_start(inst)
    ph = phase1_feasible(sub)
    assert not ph.feasible
    assert "C4" in ph.groups
    with pytest.raises(InfeasibleSubproblem, match="C4"):
        solve_local(sub)


def test_lp_fallback_when_constructive_point_fails():
    # tight bandwidth: the uniform split misses the rate floor, so the LP has to find the interior
    inst = tiny_instance(1, 2, 3, min_comm_rate="160Mbps")
    sub = sub_at_start(inst)
    assert _constructive_point(sub, 1e-9)[0] is None
    ph = phase1_feasible(sub)
    assert ph.feasible and ph.strict
    assert np.all(sub.h - sub.G @ ph.point >= -1e-9)


# ---- solver properties

def random_subproblem(seed):
    rng = np.random.default_rng(seed)
    inst = tiny_instance(seed, int(rng.integers(2, 4)), int(rng.integers(2, 5)))
    U, N = inst.n_users, inst.n_bs
    a = rng.dirichlet(np.ones(N), size=U)
    b = rng.uniform(0, 1.0 / U, (U, N))
    mu = rng.normal(0, 0.1, (U, N))
    nu = rng.normal(0, 0.1, (U, N))
    return local_subproblem(inst, int(rng.integers(N)), a, b, mu, nu, rho=float(rng.uniform(0.3, 4)))


@pytest.mark.parametrize("seed", range(6))
def test_directional_derivatives_nonnegative(seed):
    sub = random_subproblem(seed)
    sol = solve_local(sub, tol=1e-10)
    rng = np.random.default_rng(seed)
    # feasible points: optima of random objectives over the same set
    pts = [solve_local(sub.with_objective(rng.normal(size=sub.n)), tol=1e-9).x for _ in range(20)]
    pts = np.array(pts)
    grad = sub.P * sol.x + sub.q
    w = rng.dirichlet(np.ones(len(pts)), size=1000)
    dirs = w @ pts - sol.x
    assert np.min(dirs @ grad) >= -1e-7


@pytest.mark.parametrize("seed", range(6))
def test_unique_in_consensus_coordinates(seed):
    sub = random_subproblem(seed)
    tol = 1e-10
    one = solve_local(sub, tol=tol)
    other_start = solve_local(sub.with_objective(np.ones(sub.n)), tol=1e-8).x
    two = solve_local(sub, tol=tol, start=other_start)
    m = 2 * sub.n_users * sub.n_bs
    # the duality measure bounds the objective gap; distance scales with its square root over rho
    np.testing.assert_allclose(one.x[:m], two.x[:m], atol=max(10 * tol, 1e-6))


@pytest.mark.parametrize("seed", range(6))
def test_objective_below_phase1_point(seed):
    sub = random_subproblem(seed)
    sol = solve_local(sub)
    assert sol.objective <= sub.objective(phase1_feasible(sub).point) + 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_reported_kkt_residual_recomputes(seed):
    sub = random_subproblem(seed)
    sol = solve_local(sub)
    assert sol.kkt_residual <= 1e-8
    assert abs(kkt_residual(sol.problem, sol.x, sol.y, sol.z, sol.s) - sol.kkt_residual) <= 1e-10
    # iterate lies in the local set
    assert np.all(sub.G @ sol.x <= sub.h + 1e-8)


def test_nonconvergence_and_bad_arguments(fig2_instance):
    sub = sub_at_start(fig2_instance)
    with pytest.raises(NonConvergence) as info:
        solve_local(sub, max_newton=2)
    assert info.value.residual > 0
    with pytest.raises(ValueError):
        solve_local(sub, tol=0.0)
    st = initial_state(fig2_instance)
    with pytest.raises(ValueError):
        local_subproblem(fig2_instance, 0, st.a, st.b, st.mu[0], st.nu[0], rho=0.0)


def test_implicit_equalities_are_detected():
    inst = tiny_instance(9, 2, 3)            # task caps sum to the user count
    sub = sub_at_start(inst)
    ph = phase1_feasible(sub)
    assert ph.feasible and ph.strict
    assert {sub.g_labels[k] for k in ph.implicit} >= {"C5"}
    sol = solve_local(sub, tol=1e-10)
    assert sol.problem.A.shape[0] > sub.A.shape[0]
    assert np.all(sub.G @ sol.x <= sub.h + 1e-8)
    np.testing.assert_allclose(sub.A @ sol.x, sub.b, atol=1e-9)
