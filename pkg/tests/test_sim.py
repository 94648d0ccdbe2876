import math

import numpy as np
import pytest

from dynwalk import chain, graphs, sim
from dynwalk.chain import ChainError
from dynwalk.schedule import (ChainSchedule, non_hit_probability,
                              random_reversible_schedule, schedule_summary)


def lazy_cycle(n):
    return ChainSchedule.static(graphs.lazy_simple_kernel(graphs.cycle_graph(n)))


def k2_schedule():
    return ChainSchedule.static(graphs.lazy_simple_kernel(graphs.path_graph(2)))


class TestStep:
    def test_permutation_matrix_forces_move(self):
        P = np.roll(np.eye(4), 1, axis=1)
        s = ChainSchedule.static(P)
        state = sim.EnsembleState(t=0, positions=[0, 2])
        nxt = sim.step(s, state, np.random.default_rng(0))
        assert list(nxt.positions) == [1, 3]
        assert nxt.t == 1

    def test_identity_keeps_positions(self):
        s = ChainSchedule.static(np.eye(3))
        state = sim.EnsembleState(t=0, positions=[2, 0, 1])
        nxt = sim.step(s, state, np.random.default_rng(1))
        assert list(nxt.positions) == [2, 0, 1]

    def test_one_step_frequencies_match_row(self):
        # binomial oracle: |freq - p| <= 3 sqrt(p(1-p)/N) per entry
        P = graphs.lazy_simple_kernel(graphs.cycle_graph(5))
        s = ChainSchedule.static(P)
        rng = np.random.default_rng(7)
        N = 100_000
        counts = np.zeros(5)
        for _ in range(N):
            nxt = sim.step(s, sim.EnsembleState(t=0, positions=[0]), rng)
            counts[nxt.positions[0]] += 1
        freq = counts / N
        for v in range(5):
            p = P[0, v]
            assert abs(freq[v] - p) <= 3 * math.sqrt(max(p * (1 - p), 1e-12) / N) + 1e-9

    def test_merged_walkers_copy_representative(self):
        s = ChainSchedule.static(np.full((3, 3), 1 / 3))
        state = sim.EnsembleState(t=0, positions=[1, 1, 2], coalescing=True)
        rng = np.random.default_rng(3)
        for _ in range(20):
            state = sim.step(s, state, rng)
            assert state.positions[0] == state.positions[1]


class TestRngStream:
    def test_reproducible(self):
        a = sim.RngStream(99, trial=3, walker=1).generator().random(8)
        b = sim.RngStream(99, trial=3, walker=1).generator().random(8)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = sim.RngStream(99, trial=3, walker=1).generator().random(8)
        b = sim.RngStream(99, trial=3, walker=2).generator().random(8)
        c = sim.RngStream(98, trial=3, walker=1).generator().random(8)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestSimulateHit:
    def test_start_on_target_is_zero(self):
        rep = sim.simulate_hit(lazy_cycle(4), [2], 2, horizon=10, trials=50, seed=1)
        assert rep.mean == 0.0 and rep.censored_count == 0

    def test_cycle4_worst_pair_matches_exact(self):
        rep = sim.simulate_hit(lazy_cycle(4), [0], 2, horizon=400, trials=40_000, seed=2)
        assert rep.censored_count == 0
        assert abs(rep.mean - 8.0) <= 3 * rep.std_err

    def test_pi_started_two_walkers_below_t_hit(self):
        # with stationary starts the k-walk mean stays below the single-walk
        # worst case; checked with CI slack
        sched, pi = random_reversible_schedule(5, 3, seed=4)
        t_HIT = max(chain.t_hit(P) for P in sched.matrices)
        rep = sim.simulate_hit(sched, None, 0, horizon=2000, trials=20_000,
                               seed=5, start_law=pi, k=2)
        assert rep.censored_count == 0
        assert rep.mean <= t_HIT + 3 * rep.std_err

    def test_censoring_flagged(self):
        rep = sim.simulate_hit(lazy_cycle(6), [0], 3, horizon=2, trials=400, seed=6)
        assert rep.censored_count > 0
        assert rep.values.max() == 2


class TestSimulateCover:
    def test_single_vertex_zero(self):
        s = ChainSchedule.static(np.eye(1))
        rep = sim.simulate_cover(s, [0], horizon=5, trials=10, seed=1)
        assert rep.mean == 0.0

    def test_k2_geometric(self):
        rep = sim.simulate_cover(k2_schedule(), [0], horizon=400, trials=40_000, seed=8)
        assert abs(rep.mean - 2.0) <= 3 * rep.std_err

    def test_cover_at_least_hit_pathwise(self):
        # same seed => same trajectories; covering includes hitting
        sched = lazy_cycle(5)
        out = sim.run_walks(sched, [0], 600, 2000, seed=9, target=3, track_cover=True)
        hit = np.where(out["hit"] < 0, 600, out["hit"])
        cov = np.where(out["cover"] < 0, 600, out["cover"])
        assert (cov >= hit).all()


class TestSimulateMeet:
    def test_equal_starts_zero(self):
        rep = sim.simulate_meet(lazy_cycle(5), [2, 2], horizon=10, trials=20, seed=1)
        assert rep.mean == 0.0

    def test_complete_graph_matches_product_chain(self):
        # oracle: hitting time of the diagonal in the n^2-state product chain
        n = 4
        P = graphs.lazy_simple_kernel(graphs.complete_graph(n))
        prod = np.kron(P, P)
        absorbed = [i * n + i for i in range(n)]
        keep = [s for s in range(n * n) if s not in absorbed]
        A = np.eye(len(keep)) - prod[np.ix_(keep, keep)]
        h = np.linalg.solve(A, np.ones(len(keep)))
        exact = {keep[i]: h[i] for i in range(len(keep))}
        start_state = 0 * n + 1
        rep = sim.simulate_meet(ChainSchedule.static(P), [0, 1],
                                horizon=2000, trials=40_000, seed=11)
        assert rep.censored_count == 0
        assert abs(rep.mean - exact[start_state]) <= 3 * rep.std_err

    def test_double_star_no_meetings(self):
        # crossing the moving bridge needs m-1 consecutive self-loops:
        # expected crossings over the run ~ trials * 2 * horizon * 2^(1-m) << 1
        m = 20
        _, perm = graphs.ot_double_star(m)
        cs = perm.dynamic_schedule("lazy_simple").chain_schedule()
        rep = sim.simulate_meet(cs, [m - 1, 2 * m - 1], horizon=2000, trials=40, seed=12)
        assert rep.censored_count == 40


class TestSimulateCoalesce:
    def test_single_vertex_zero(self):
        s = ChainSchedule.static(np.eye(1))
        assert sim.simulate_coalesce(s, horizon=5, trials=5, seed=1).mean == 0.0

    def test_k2_mean_two(self):
        rep = sim.simulate_coalesce(k2_schedule(), horizon=400, trials=40_000, seed=13)
        assert abs(rep.mean - 2.0) <= 3 * rep.std_err

    def test_meet_below_coalesce(self):
        sched, _pi = random_reversible_schedule(5, 2, seed=14)
        worst = 0.0
        for u in range(5):
            for v in range(u + 1, 5):
                m = sim.simulate_meet(sched, [u, v], horizon=2000, trials=4000, seed=15)
                worst = max(worst, m.mean - 2 * m.std_err)
        c = sim.simulate_coalesce(sched, horizon=2000, trials=4000, seed=16)
        assert worst <= c.mean + 2 * c.std_err

    def test_cluster_count_non_increasing_and_merged_stay_together(self):
        sched, _pi = random_reversible_schedule(6, 3, seed=17)
        out = sim.run_coalescing(sched, horizon=60, trials=50, seed=18, record=True)
        traj = out["traj"]                      # (T+1, trials, n)
        for j in range(traj.shape[1]):
            prev = None
            merged = set()
            for t in range(traj.shape[0]):
                pos = traj[t, j]
                clusters = len(set(pos.tolist()))
                if prev is not None:
                    assert clusters <= prev
                for a, b in merged:
                    assert pos[a] == pos[b]
                prev = clusters
                for a in range(len(pos)):
                    for b in range(a + 1, len(pos)):
                        if pos[a] == pos[b]:
                            merged.add((a, b))


class TestDeterminism:
    def test_bit_identical_reports(self):
        sched, _ = random_reversible_schedule(5, 3, seed=20)
        a = sim.simulate_hit(sched, [0], 3, horizon=500, trials=3000, seed=21)
        b = sim.simulate_hit(sched, [0], 3, horizon=500, trials=3000, seed=21)
        assert a.mean == b.mean and a.std_err == b.std_err
        assert np.array_equal(a.values, b.values)

    def test_thread_count_does_not_change_results(self):
        sched, _ = random_reversible_schedule(4, 2, seed=22)
        a = sim.simulate_coalesce(sched, horizon=400, trials=3000, seed=23, threads=1)
        b = sim.simulate_coalesce(sched, horizon=400, trials=3000, seed=23, threads=4)
        assert np.array_equal(a.values, b.values)

    def test_multi_block_determinism(self):
        sched = lazy_cycle(4)
        trials = sim.BLOCK_TRIALS + 100
        a = sim.simulate_hit(sched, [0], 2, horizon=300, trials=trials, seed=24)
        b = sim.simulate_hit(sched, [0], 2, horizon=300, trials=trials, seed=24, threads=3)
        assert np.array_equal(a.values, b.values)


class TestExactVsMonteCarlo:
    def test_non_hit_probability_within_ci(self):
        # n <= 8, T <= 12: exact masked-product value sits inside the 99% CI
        # of the Monte Carlo frequency with 1e5 trials
        rng = np.random.default_rng(30)
        for seed in range(3):
            sched, pi = random_reversible_schedule(int(rng.integers(4, 9)), 3, seed=seed)
            T = int(rng.integers(5, 13))
            w = int(rng.integers(0, sched.n))
            exact = non_hit_probability(sched, pi, [w] * (T + 1))
            out = sim.run_walks(sched, None, T, 100_000, seed=31 + seed,
                                start_law=pi, k=1, target=w)
            freq = float((out["hit"] < 0).mean())
            se = math.sqrt(max(exact * (1 - exact), 1e-12) / 100_000)
            assert abs(freq - exact) <= 2.576 * se + 1e-9

    def test_path4_avoidance_frequency(self):
        # exact masked-product value vs simulated frequency on the 4-path
        P = graphs.lazy_simple_kernel(graphs.path_graph(4))
        sched = ChainSchedule.static(P)
        start = np.zeros(4)
        start[0] = 1.0
        exact = non_hit_probability(sched, start, [3] * 6)
        out = sim.run_walks(sched, [0], 5, 100_000, seed=33, target=3)
        freq = float((out["hit"] < 0).mean())
        se = math.sqrt(exact * (1 - exact) / 100_000)
        assert abs(freq - exact) <= 3 * se

    def test_htl_empirical_bound(self):
        # pi-started non-hit frequency <= exp(-T / t_HIT) + 4 sigma
        for seed in range(5):
            sched, pi = random_reversible_schedule(5, 3, seed=40 + seed)
            t_HIT = max(chain.t_hit(P) for P in sched.matrices)
            T = 8
            out = sim.run_walks(sched, None, T, 50_000, seed=41 + seed,
                                start_law=pi, k=1, target=2)
            freq = float((out["hit"] < 0).mean())
            bound = math.exp(-T / t_HIT)
            sigma = math.sqrt(bound * (1 - bound) / 50_000 + 1e-12)
            assert freq <= bound + 4 * sigma


class TestKillingSchedule:
    def summary(self, n=6, seed=50):
        sched, pi = random_reversible_schedule(n, 3, seed=seed)
        return sched, pi, schedule_summary(sched, pi, T_max=2000)

    def test_two_walker_unroll(self):
        _sched, _pi, summ = self.summary(n=2, seed=51)
        ks = sim.killing_schedule(summ, 2, K=3.0)
        assert ks.ell == 1
        assert ks.levels[1] == summ.t_sep
        assert ks.levels[0] == summ.t_sep + math.ceil(3.0 * summ.t_HIT)

    def test_levels_strictly_decreasing(self):
        _sched, _pi, summ = self.summary(n=13, seed=52)
        ks = sim.killing_schedule(summ, 13, K=1.0)
        levels = list(ks.levels)
        assert all(levels[i] > levels[i + 1] for i in range(len(levels) - 1))

    def test_l0_closed_form_bound(self):
        rng = np.random.default_rng(53)
        for _ in range(200):
            n = int(rng.integers(2, 500))
            t_sep = int(rng.integers(0, 50))
            t_HIT = float(rng.random() * 200 + 1)
            K = float(rng.random() * 50 + 1)
            from dynwalk.schedule import ScheduleSummary
            summ = ScheduleSummary(t_HIT=t_HIT, t_REL=1.0, t_sep=t_sep,
                                   t_mix_inf=t_sep, eps=0.5, evaluated_horizon=10)
            ks = sim.killing_schedule(summ, n, K)
            assert ks.L0 <= t_sep + math.log2(n) + 2 * K * t_HIT + 1e-9

    def test_window_structure(self):
        _sched, _pi, summ = self.summary(n=8, seed=54)
        ks = sim.killing_schedule(summ, 8, K=1.0)
        assert ks.allowed_list(ks.levels[ks.ell]) == set()
        t = ks.levels[1]                     # inside (L_1, L_0]? no: == L_1, level 1
        lvl = ks.active_level(t)
        assert lvl == 1
        pairs = ks.allowed_list(t)
        assert pairs == {(b, a) for b in (2, 3) for a in range(4, 9)}
        assert ks.allows(2, 5, t) and not ks.allows(2, 3, t)

    def test_infinite_inputs_rejected(self):
        from dynwalk.schedule import ScheduleSummary
        bad = ScheduleSummary(t_HIT=math.inf, t_REL=1.0, t_sep=3,
                              t_mix_inf=3, eps=0.5, evaluated_horizon=10)
        with pytest.raises(ChainError):
            sim.killing_schedule(bad, 4, K=1.0)
        none_sep = ScheduleSummary(t_HIT=5.0, t_REL=1.0, t_sep=None,
                                   t_mix_inf=None, eps=0.5, evaluated_horizon=10)
        with pytest.raises(ChainError):
            sim.killing_schedule(none_sep, 4, K=1.0)


class TestKilledWalks:
    def test_empty_allowed_list_never_kills(self):
        sched, _pi = random_reversible_schedule(5, 2, seed=60)
        rep = sim.simulate_killed(sched, "allowed_killings", horizon=30, trials=20,
                                  seed=61, killing=sim.FixedAllowedPairs.of([]))
        assert (rep.counts == 5).all()

    def test_single_pair_colocated_start_kills_at_time_zero(self):
        sched, _pi = random_reversible_schedule(4, 2, seed=62)
        allowed = sim.FixedAllowedPairs.of([(1, 4)])
        out = sim.run_walks(sched, [0, 1, 2, 0], 5, 10, seed=63, record=True)
        counts = sim.killed_survivor_counts(out["traj"], "allowed_killings", allowed)
        assert (counts[0] == 3).all()      # label-4 walker dies at t=0 on label 1

    def test_killings_mode_kills_colocated(self):
        sched, _pi = random_reversible_schedule(4, 2, seed=64)
        out = sim.run_walks(sched, [2, 2, 2, 2], 5, 10, seed=65, record=True)
        counts = sim.killed_survivor_counts(out["traj"], "killings")
        assert (counts[0] == 1).all()

    def test_coupling_y_below_z_on_coalesced_trajectories(self):
        sched, pi = random_reversible_schedule(8, 3, seed=66)
        summ = schedule_summary(sched, pi, T_max=2000)
        ks = sim.killing_schedule(summ, 8, K=1.0)
        horizon = min(ks.L0, 120)
        out = sim.run_coalescing(sched, horizon=horizon, trials=60, seed=67, record=True)
        y = sim.killed_survivor_counts(out["traj"], "killings")
        z = sim.killed_survivor_counts(out["traj"], "allowed_killings", ks)
        assert (y <= z).all()

    def test_coal_mult_inequality(self):
        # Pr[coalescence unfinished at L_0] <= Pr[independent-walk survival event]
        for seed in (70, 71, 72):
            sched, pi = random_reversible_schedule(6, 3, seed=seed)
            summ = schedule_summary(sched, pi, T_max=2000)
            ks = sim.killing_schedule(summ, 6, K=0.5)
            trials = 4000
            coal = sim.run_coalescing(sched, horizon=ks.L0, trials=trials, seed=seed + 1)
            lhs = float((coal["coal"] < 0).mean())
            rep = sim.simulate_killed(sched, "allowed_killings", horizon=ks.L0,
                                      trials=trials, seed=seed + 2, killing=ks)
            rhs = float(rep.survival_event.mean())
            slack = 4 * math.sqrt(0.25 / trials) * 2
            assert lhs <= rhs + slack

    def test_mode_validation(self):
        with pytest.raises(ChainError):
            sim.killed_survivor_counts(np.zeros((2, 2, 2), dtype=int), "nope")
        with pytest.raises(ChainError):
            sim.killed_survivor_counts(np.zeros((2, 2, 2), dtype=int), "allowed_killings")


class TestEstimateReport:
    def test_ci_structure(self):
        rep = sim.estimate_report(np.array([1.0, 2.0, 3.0]), np.array([False, False, True]))
        assert rep.mean == pytest.approx(2.0)
        assert rep.ci95 == (rep.ci_lo, rep.ci_hi)
        assert rep.ci_lo == pytest.approx(rep.mean - 1.96 * rep.std_err)
        assert rep.censored_count == 1
