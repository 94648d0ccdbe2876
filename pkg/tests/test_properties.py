import numpy as np

from dynwalk import properties


def test_every_check_runs_and_passes_at_small_scale():
    results = properties.run_suite(seed=1729, chains=30, vectors=8)
    names = {r.name for r in results}
    assert names == {
        "contraction_orthogonal", "l2_product_decay",
        "variance_dirichlet_decrease", "dirichlet_hitting_bound",
        "killed_radius_bound", "two_target_contraction",
        "hitting_sandwich", "cheeger_sandwich", "lp_monotonicity",
        "l2_to_uniform", "survival_product_bound",
        "moving_target_survival_bound",
    }
    for r in results:
        assert r.cases > 0
        assert r.passed, f"{r.name} violated by {r.max_violation}"


def test_margins_are_finite_and_informative():
    results = properties.run_suite(seed=4, chains=10, vectors=5)
    for r in results:
        assert np.isfinite(r.max_violation)
        assert r.tolerance == 1e-9


def test_suite_deterministic():
    a = properties.run_suite(seed=11, chains=8, vectors=4)
    b = properties.run_suite(seed=11, chains=8, vectors=4)
    assert [(r.name, r.max_violation) for r in a] == \
           [(r.name, r.max_violation) for r in b]


def test_instances_cover_requested_sizes():
    insts = properties.make_instances(seed=5, count=40, vectors=3, n_lo=3, n_hi=8)
    sizes = {inst.schedule.n for inst in insts}
    assert sizes == set(range(3, 9))
    for inst in insts:
        assert inst.schedule.is_lazy()
        assert inst.schedule.is_reversible(inst.pi)
