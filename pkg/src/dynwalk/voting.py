"""Synchronous pull voting driven by a matrix schedule.

Each round, every vertex u samples a vertex from the row P_t(u, .) and
adopts the sampled vertex's previous opinion.  Consensus (all opinions
equal) is absorbing.  Small instances admit exact computation through
selection matrices: a round is summarized by the binary matrix with a
single 1 per row marking each vertex's choice, the product of the chosen
entries being the round's probability.  Running the selection sequence
backwards turns consensus into coalescence, which is the identity the
``duality_check`` enumeration verifies digit for digit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainError, check_stochastic
from .schedule import ChainSchedule
from .sim import (TAG_VOTE, _map_blocks, _trial_blocks, block_stream,
                  estimate_report, EstimateReport)

MAX_ENUM_N = 5
MAX_ENUM_SUPPORT = 4


@dataclass
class VotingState:
    """Opinion vector at time t; labels are opaque integers."""
    t: int
    opinions: np.ndarray

    def __post_init__(self):
        self.opinions = np.asarray(self.opinions, dtype=int)

    def in_consensus(self) -> bool:
        return bool((self.opinions == self.opinions[0]).all())


def vote_step(P, state: VotingState, rng: np.random.Generator) -> VotingState:
    """One synchronous round: every vertex copies a P-row-sampled neighbor."""
    P = check_stochastic(P)
    n = P.shape[0]
    if len(state.opinions) != n:
        raise ChainError("dimension mismatch between P and opinions")
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(n)
    choices = np.minimum((cum < u[:, None]).sum(axis=1), n - 1)
    return VotingState(t=state.t + 1, opinions=state.opinions[choices])


def run_voting(schedule: ChainSchedule, opinions, horizon: int, trials: int,
               seed: int, threads: int = 1):
    """Vectorized pull voting; returns consensus times and final opinions.

    Finished trials are compacted out of the working arrays, so the draws
    consumed by a trial depend only on the (deterministic) evolution of its
    block; reruns with the same seed are bit-identical.
    """
    opinions = np.asarray(opinions, dtype=int)
    n = schedule.n
    if opinions.shape != (n,):
        raise ChainError("initial opinions must assign one label per vertex")
    cons_time = np.full(trials, -1, dtype=np.int64)
    final = np.full(trials, -1, dtype=np.int64)

    cums = {}

    def cum(t):
        key = (t - 1) % schedule.period if schedule.period else t
        if key not in cums:
            c = np.cumsum(schedule.matrix(t), axis=1)
            c[:, -1] = 1.0
            cums[key] = c
        return cums[key]

    def do_block(block_spec):
        block, _start_idx, m = block_spec
        g = block_stream(seed, TAG_VOTE, block)
        ops = np.tile(opinions, (m, 1))
        b_cons = np.full(m, -1, dtype=np.int64)
        b_final = np.full(m, -1, dtype=np.int64)
        idx = np.arange(m)
        done0 = (ops == ops[:, :1]).all(axis=1)
        b_cons[idx[done0]] = 0
        b_final[idx[done0]] = ops[done0, 0]
        keep = ~done0
        ops, idx = ops[keep], idx[keep]
        for t in range(1, horizon + 1):
            if not len(idx):
                break
            u = g.random(ops.shape)
            choices = np.minimum((cum(t)[None, :, :] < u[..., None]).sum(axis=-1), n - 1)
            ops = np.take_along_axis(ops, choices, axis=1)
            done = (ops == ops[:, :1]).all(axis=1)
            if done.any():
                b_cons[idx[done]] = t
                b_final[idx[done]] = ops[done, 0]
                ops, idx = ops[~done], idx[~done]
        return b_cons, b_final

    blocks = list(_trial_blocks(trials))
    for (block, start_idx, m), (b_cons, b_final) in zip(
            blocks, _map_blocks(do_block, blocks, threads)):
        sl = slice(start_idx, start_idx + m)
        cons_time[sl] = b_cons
        final[sl] = b_final
    return {"cons": cons_time, "final": final}


def simulate_consensus(schedule: ChainSchedule, opinions, horizon: int,
                       trials: int, seed: int, threads: int = 1) -> EstimateReport:
    """Time for pull voting to reach a single common opinion."""
    out = run_voting(schedule, opinions, horizon, trials, seed, threads=threads)
    censored = out["cons"] < 0
    values = np.where(censored, horizon, out["cons"])
    return estimate_report(values, censored)


def winning_probability(schedule: ChainSchedule, opinions, sigma: int,
                        trials: int, seed: int, horizon: int = 100_000,
                        max_censoring: float = 1e-3, threads: int = 1) -> EstimateReport:
    """Frequency with which voting settles on opinion ``sigma``.

    The horizon must be generous enough that fewer than ``max_censoring`` of
    the trials are still undecided, otherwise the estimate is refused.
    """
    out = run_voting(schedule, opinions, horizon, trials, seed, threads=threads)
    censored = out["cons"] < 0
    n_censored = int(censored.sum())
    if n_censored > max_censoring * trials:
        raise ChainError(
            f"{n_censored}/{trials} trials undecided at horizon {horizon}; "
            "raise the horizon (censoring budget exceeded)")
    values = (out["final"][~censored] == sigma).astype(float)
    rep = estimate_report(values, np.zeros(len(values), dtype=bool))
    return EstimateReport(trials=rep.trials, mean=rep.mean, std_err=rep.std_err,
                          ci_lo=rep.ci_lo, ci_hi=rep.ci_hi,
                          censored_count=n_censored, values=rep.values)


def opinion_weight_track(schedule: ChainSchedule, opinions, pi, horizon: int,
                         trials: int, seed: int) -> np.ndarray:
    """Per-step increments of sum_v pi(v) [opinion_v == 1] along trajectories.

    The running pi-weight of a binary opinion vector is conserved in
    expectation; the returned flat array of increments feeds the zero-drift
    check.
    """
    opinions = np.asarray(opinions, dtype=int)
    pi = np.asarray(pi, dtype=float)
    n = schedule.n
    incs = []
    cums = {}

    def cum(t):
        key = (t - 1) % schedule.period if schedule.period else t
        if key not in cums:
            c = np.cumsum(schedule.matrix(t), axis=1)
            c[:, -1] = 1.0
            cums[key] = c
        return cums[key]

    for block, _start, m in _trial_blocks(trials):
        g = block_stream(seed, TAG_VOTE, block)
        ops = np.tile(opinions, (m, 1))
        w = (ops == 1) @ pi
        for t in range(1, horizon + 1):
            u = g.random(ops.shape)
            choices = np.minimum((cum(t)[None, :, :] < u[..., None]).sum(axis=-1), n - 1)
            ops = np.take_along_axis(ops, choices, axis=1)
            w_next = (ops == 1) @ pi
            incs.append(w_next - w)
            w = w_next
    return np.concatenate(incs)


# ---------------------------------------------------------------------------
# Exact small-n enumeration.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionMatrix:
    """One round's choices: row u has a single 1 at the sampled vertex."""
    choices: tuple          # choices[u] = sampled vertex
    probability: float

    def matrix(self) -> np.ndarray:
        n = len(self.choices)
        S = np.zeros((n, n))
        S[np.arange(n), list(self.choices)] = 1.0
        return S

    def apply_opinions(self, y: np.ndarray) -> np.ndarray:
        """y' = S y: vertex u adopts y[choices[u]]."""
        return y[list(self.choices)]

    def push_counts(self, c: np.ndarray) -> np.ndarray:
        """c' = c S: all walkers on u move to choices[u]."""
        return np.bincount(list(self.choices), weights=c, minlength=len(c))


def selection_measure(P) -> list[SelectionMatrix]:
    """All positive-probability selection matrices of P with their weights.

    The weight of a selection is the product of the chosen entries; weights
    sum to 1.  Enumeration is capped at n <= 5 with per-row support <= 4.
    """
    P = check_stochastic(P)
    n = P.shape[0]
    if n > MAX_ENUM_N:
        raise ChainError(f"selection enumeration limited to n <= {MAX_ENUM_N}")
    supports = [np.nonzero(P[u] > 0)[0] for u in range(n)]
    if any(len(s) > MAX_ENUM_SUPPORT for s in supports):
        raise ChainError(f"selection enumeration limited to row support <= {MAX_ENUM_SUPPORT}")
    out = []
    for combo in itertools.product(*supports):
        prob = float(np.prod([P[u, v] for u, v in enumerate(combo)]))
        out.append(SelectionMatrix(choices=tuple(int(v) for v in combo), probability=prob))
    return out


def reversed_schedule(schedule: ChainSchedule, pivot: int) -> ChainSchedule:
    """The sequence running the first ``pivot`` matrices backwards.

    Q_t = P_{pivot-t+1} for t <= pivot, and the source's first matrix
    afterwards (the padding never touches events decided by time
    ``pivot``).  A static schedule reverses to itself.
    """
    if pivot < 0:
        raise ChainError("pivot must be >= 0")
    if schedule.kind == "static":
        return schedule
    mats = [schedule.matrix(pivot - t + 1) for t in range(1, pivot + 1)]
    mats.append(schedule.matrix(1))

    def provider(t):
        return mats[t - 1] if t <= pivot else mats[-1]

    return ChainSchedule.generated(provider, schedule.n, horizon=None)


def consensus_probability_exact(schedule: ChainSchedule, j: int) -> float:
    """Pr[consensus within j rounds] from distinct opinions, by enumeration."""
    n = schedule.n
    y0 = np.arange(n)
    total = 0.0
    per_step = [selection_measure(schedule.matrix(t)) for t in range(1, j + 1)]
    for seq in itertools.product(*per_step):
        y = y0
        for sel in seq:
            y = sel.apply_opinions(y)
        if (y == y[0]).all():
            total += math.prod(s.probability for s in seq)
    return total


def coalescence_probability_exact(schedule: ChainSchedule, j: int) -> float:
    """Pr[all n walkers merged within j rounds], one walker per vertex."""
    n = schedule.n
    c0 = np.ones(n)
    total = 0.0
    per_step = [selection_measure(schedule.matrix(t)) for t in range(1, j + 1)]
    for seq in itertools.product(*per_step):
        c = c0
        for sel in seq:
            c = sel.push_counts(c)
        if c.max() == n:
            total += math.prod(s.probability for s in seq)
    return total


def duality_check(schedule: ChainSchedule, j: int, max_n: int = 4,
                  max_j: int = 4) -> tuple[float, float, float]:
    """Exact Pr[consensus <= j] under the schedule vs Pr[coalescence <= j]
    under its j-reversal; returns (lhs, rhs, |lhs - rhs|).

    Both sides are exact enumeration sums; agreement to 1e-12 is the
    checked identity.  j=0 gives 0 = 0 whenever opinions start distinct
    (n >= 2).
    """
    if schedule.n > max_n or j > max_j:
        raise ChainError(f"duality enumeration limited to n <= {max_n}, j <= {max_j}")
    if j == 0:
        lhs = rhs = 0.0 if schedule.n >= 2 else 1.0
        return lhs, rhs, 0.0
    lhs = consensus_probability_exact(schedule, j)
    rhs = coalescence_probability_exact(reversed_schedule(schedule, j), j)
    return lhs, rhs, abs(lhs - rhs)
