import math

import numpy as np
import pytest

from dynwalk import chain, edge_markovian as em, sim
from dynwalk.chain import ChainError


class TestClosedForm:
    def test_t_one_is_m(self):
        p, q = 0.3, 0.2
        M = em.EdgeMarkovianParams(4, p, q).transition_matrix()
        assert np.allclose(em.m_power_closed_form(p, q, 1), M, atol=1e-15)

    def test_t_zero_is_identity(self):
        assert np.allclose(em.m_power_closed_form(0.4, 0.3, 0), np.eye(2), atol=1e-15)

    def test_symmetric_rates_formula(self):
        # p = q: birth probability after t steps is (1 - (1-2p)^t)/2
        for p in (0.1, 0.3, 0.5):
            for t in (1, 5, 40):
                Mt = em.m_power_closed_form(p, p, t)
                assert Mt[0, 1] == pytest.approx((1 - (1 - 2 * p) ** t) / 2, abs=1e-14)

    def test_matches_matrix_power(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = float(rng.random() * 0.7 + 0.01)
            q = float(rng.random() * min(0.98 - p, 0.6) + 0.01)
            t = int(rng.integers(1, 10_001))
            M = np.array([[1 - p, p], [q, 1 - q]])
            assert np.abs(em.m_power_closed_form(p, q, t)
                          - np.linalg.matrix_power(M, t)).max() <= 1e-12

    def test_degenerate_rates_rejected(self):
        with pytest.raises(ChainError):
            em.m_power_closed_form(0.0, 0.0, 3)


class TestGenerate:
    def test_frozen_graph(self):
        params = em.EdgeMarkovianParams(5, 0.0, 0.0, seed=1)
        b0 = em.initial_states(params, "complete")
        snaps = [G for _t, G in em.generate(params, b0, 10)]
        assert all(G.edges == snaps[0].edges for G in snaps)
        assert len(snaps[0].edges) == 10

    def test_alternating_complement(self):
        params = em.EdgeMarkovianParams(4, 1.0, 1.0, seed=2)
        b0 = em.initial_states(params, "empty")
        snaps = [G for _t, G in em.generate(params, b0, 4)]
        assert len(snaps[0].edges) == 0
        assert len(snaps[1].edges) == 6
        assert len(snaps[2].edges) == 0
        assert len(snaps[3].edges) == 6

    def test_long_run_density(self):
        # stationary edge probability p/(p+q), 3 sigma over pairs x steps
        params = em.EdgeMarkovianParams(14, 0.3, 0.2, seed=3)
        b0 = em.initial_states(params, "empty")
        counts = [G for _t, G in em.generate(params, b0, 400)]
        dens = np.array([len(G.edges) for G in counts[100:]]) / params.pairs
        target = 0.6
        # mean over 300 correlated rounds of 91 independent edges
        theta = 1 - 0.5
        eff = len(dens) * (1 - theta) / (1 + theta)
        se = math.sqrt(target * (1 - target) / (params.pairs * eff))
        assert abs(dens.mean() - target) <= 4 * se

    def test_deterministic_under_seed(self):
        params = em.EdgeMarkovianParams(6, 0.4, 0.3, seed=4)
        b0 = em.initial_states(params, "stationary")
        a = [G.edges for _t, G in em.generate(params, b0, 20)]
        b = [G.edges for _t, G in em.generate(params, b0, 20)]
        assert a == b


class TestJumpAdvancement:
    def test_jump_matches_stepping_distribution(self):
        # exactness cross-check: k-step transition frequencies from jumps
        # agree with step-by-step simulation within 4 sigma
        params = em.EdgeMarkovianParams(3, 0.35, 0.25, seed=5)
        delta, reps = 7, 4000
        p01 = em.m_power_closed_form(params.p, params.q, delta)[0, 1]
        rng1 = sim.block_stream(99, 7, 0)
        hits_jump = 0
        for _ in range(reps):
            state = em.EdgeStateVector(3, np.zeros(3, dtype=bool))
            state = em.jump_states(state, params, delta, rng1)
            hits_jump += int(state.states[0])
        rng2 = sim.block_stream(98, 7, 0)
        hits_step = 0
        for _ in range(reps):
            state = em.EdgeStateVector(3, np.zeros(3, dtype=bool))
            for _s in range(delta):
                state = em.step_states(state, params, rng2)
            hits_step += int(state.states[0])
        se = math.sqrt(2 * p01 * (1 - p01) / reps)
        assert abs(hits_jump / reps - hits_step / reps) <= 4 * se
        assert abs(hits_jump / reps - p01) <= 4 * math.sqrt(p01 * (1 - p01) / reps)

    def test_zero_jump_is_noop(self):
        params = em.EdgeMarkovianParams(4, 0.2, 0.2, seed=6)
        b0 = em.initial_states(params, "stationary")
        assert em.jump_states(b0, params, 0, sim.block_stream(1, 7, 1)) is b0


class TestIndependence:
    def test_two_edges_uncorrelated(self):
        # cross-correlation of two pair indicator sequences; the null variance
        # accounts for each chain's own autocorrelation (1-p-q)^k
        params = em.EdgeMarkovianParams(5, 0.3, 0.3, seed=8)
        b0 = em.initial_states(params, "stationary")
        xs, ys = [], []
        for _t, G in em.generate(params, b0, 20_000):
            xs.append(int((0, 1) in G.edges))
            ys.append(int((2, 3) in G.edges))
        x = np.array(xs[1:], dtype=float)
        y = np.array(ys[1:], dtype=float)
        r = np.corrcoef(x, y)[0, 1]
        theta = 1 - params.p - params.q
        var = (1 + theta**2) / (1 - theta**2) / len(x)
        assert abs(r) <= 4 * math.sqrt(var)


class TestIntervalPlan:
    def test_checkpoint_closed_form(self):
        plan = em.IntervalPlan(I=3, J=2)
        for level in range(0, 7):
            for i in range(0, level + 1):
                expected = (sum(range(level)) + i) * 5
                assert plan.checkpoint(level, i) == expected

    def test_probe_times_increase(self):
        plan = em.IntervalPlan(I=2, J=1)
        seen = [t for (_level, _i, t), _ in zip(plan.probe_times(), range(15))]
        assert all(b > a for a, b in zip(seen, seen[1:]))

    def test_forget_time_values(self):
        assert em.interval_plan(em.EdgeMarkovianParams(5, 0.5, 0.5), J=1).I == 1
        assert em.interval_plan(em.EdgeMarkovianParams(5, 0.1, 0.1), J=1).I == 5
        # q/p = e^2, log ratio 2, I = ceil(2/(p+q))
        p = 0.05
        q = p * math.e**2
        plan = em.interval_plan(em.EdgeMarkovianParams(5, p, q), J=0)
        assert plan.I == math.ceil(2 / (p + q))

    def test_requires_positive_birth(self):
        with pytest.raises(ChainError):
            em.interval_plan(em.EdgeMarkovianParams(5, 0.0, 0.5), J=1)


class TestForgetSandwich:
    def test_sandwich_holds_on_grid(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            p = float(rng.random() * 0.8 + 0.01)
            q = float(rng.random() * (1.0 - p - 0.001))
            params = em.EdgeMarkovianParams(6, p, q)
            plan = em.interval_plan(params, J=0)
            for I_prime in (plan.I, plan.I + 1, 2 * plan.I, 5 * plan.I):
                lo, mn, mx, hi = em.forget_time_sandwich(params, I_prime)
                assert lo <= mn + 1e-12
                assert mx <= hi + 1e-12


class TestExpanderProbe:
    def test_count_zero_empty(self):
        params = em.EdgeMarkovianParams(10, 0.5, 0.5, seed=11)
        plan = em.interval_plan(params, J=1)
        rep = em.expander_probe(params, em.initial_states(params, "empty"), plan, 0)
        assert rep.rows == ()
        assert math.isnan(rep.fraction_within())

    def test_values_at_least_one(self):
        params = em.EdgeMarkovianParams(24, 0.4, 0.4, seed=12)
        plan = em.interval_plan(params, J=1)
        rep = em.expander_probe(params, em.initial_states(params, "empty"), plan, 12)
        assert all(r.t_rel >= 1.0 for r in rep.rows)

    def test_dense_regime_all_within_constant(self):
        params = em.EdgeMarkovianParams(40, 0.5, 0.5, seed=13)
        plan = em.interval_plan(params, J=1)
        rep = em.expander_probe(params, em.initial_states(params, "empty"), plan, 25)
        assert rep.fraction_within() == 1.0

    def test_disconnected_snapshots_count_as_failures(self):
        # p tiny: early snapshots from the empty start stay disconnected
        params = em.EdgeMarkovianParams(12, 0.001, 0.9, seed=14)
        plan = em.interval_plan(params, J=0)
        rep = em.expander_probe(params, em.initial_states(params, "empty"), plan, 4)
        assert any(not r.connected for r in rep.rows)
        for r in rep.rows:
            if not r.connected:
                assert r.t_rel == math.inf and not r.leq_C

    def test_regime_flag(self):
        dense = em.EdgeMarkovianParams(400, 0.9, 0.05, seed=15)
        plan = em.interval_plan(dense, J=1)
        rep = em.expander_probe(dense, em.initial_states(dense, "stationary"),
                                plan, 1, c=0.1)
        assert rep.in_regime
        sparse = em.EdgeMarkovianParams(40, 0.5, 0.5, seed=16)
        rep2 = em.expander_probe(sparse, em.initial_states(sparse, "empty"),
                                 em.interval_plan(sparse, J=1), 1)
        assert not rep2.in_regime

    def test_size_cap(self):
        params = em.EdgeMarkovianParams(600, 0.5, 0.5, seed=17)
        with pytest.raises(ChainError, match="n <= 512"):
            em.expander_probe(params, em.initial_states(params, "empty"),
                              em.IntervalPlan(I=1, J=1), 1)


class TestMetropolisSchedule:
    def test_walk_bounds_loose_theorem_form(self):
        # dense regime: empirical hit/cover/coalesce means stay far below the
        # (astronomically loose) closed-form bounds built from the probe
        # constant; this is the qualitative check the constants allow
        params = em.EdgeMarkovianParams(16, 0.6, 0.3, seed=18)
        b0 = em.initial_states(params, "stationary")
        sched = em.metropolis_schedule(params, b0, horizon=4000)
        rep = sim.simulate_hit(sched, [0], params.n - 1, horizon=4000, trials=60, seed=19)
        I = em.interval_plan(params, J=0).I
        n, k = params.n, 1
        J_hit = math.ceil(8192 * (2 * math.log(n) + math.log(2)) + 20 * 8192 * n / k)
        assert rep.censored_count == 0
        assert rep.mean <= 100 * (I + J_hit)
        cov = sim.simulate_cover(sched, [0], horizon=4000, trials=60, seed=20)
        J_cov = math.ceil(8192 * (2 * math.log(n) + math.log(2))
                          + 20 * 8192 * n * math.log(n) / k)
        assert cov.censored_count == 0
        assert cov.mean <= 100 * (I + J_cov)
        coal = sim.simulate_coalesce(sched, horizon=4000, trials=60, seed=21)
        assert coal.censored_count == 0
        assert coal.mean <= 100 * (I + math.ceil(8192 * 85 * n))

    def test_matrices_are_valid_even_disconnected(self):
        params = em.EdgeMarkovianParams(8, 0.05, 0.6, seed=22)
        b0 = em.initial_states(params, "empty")
        sched = em.metropolis_schedule(params, b0, horizon=30)
        for t in (1, 5, 30):
            chain.check_stochastic(sched.matrix(t))
