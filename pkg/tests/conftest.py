import numpy as np
import pytest

from hetnet_mec.problem import build_instance
from hetnet_mec.scenario import build_scenario, load_scenario


def tiny_doc(seed: int, n_bs: int, n_users: int, *, max_tasks=None, cache=None, **users):
    """Random desk-scale config: BS capabilities, caches and task caps vary with the seed."""
    rng = np.random.default_rng([seed, 99])
    bss = []
    for n in range(n_bs):
        bss.append({
            "kind": "macro" if n == 0 else "small",
            "position": [0.0, 0.0] if n == 0 else [float(rng.uniform(-300, 300)), float(rng.uniform(-300, 300))],
            "compute": f"{rng.uniform(2, 12):.3f}GHz",
            "cache": f"{cache if cache is not None else rng.uniform(0, 8):.3f}Mb",
            "max_tasks": int(max_tasks[n]) if max_tasks is not None else int(rng.integers(1, n_users + 1)),
        })
    if max_tasks is None:
        # keep the task caps jointly satisfiable
        short = n_users - sum(b["max_tasks"] for b in bss)
        if short > 0:
            bss[0]["max_tasks"] += short
    doc = {"seed": int(seed), "bss": bss, "users": {"count": n_users, "area_radius": "300m", **users}}
    return doc


def tiny_instance(seed: int, n_bs: int, n_users: int, **kw):
    return build_instance(build_scenario(tiny_doc(seed, n_bs, n_users, **kw)))


@pytest.fixture(scope="session")
def fig2_instance():
    return build_instance(load_scenario("fig2"))


def default_instance(seed: int, n_bs: int, n_users: int):
    """Instance from the default parameter set: one macro BS plus small cells, generous task caps."""
    doc = {"seed": int(seed), "bss": [{"kind": "macro"}] + [{"kind": "small"}] * (n_bs - 1),
           "users": {"count": n_users}}
    return build_instance(build_scenario(doc))
