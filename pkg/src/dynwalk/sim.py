"""Seeded Monte Carlo simulation of walks on a matrix schedule.

Walk estimators (hitting, cover, meeting, coalescing, killed walkers) are
vectorized across trials.  Randomness is counter-based: trials are grouped
into fixed blocks, each block owning a Philox stream whose counter encodes
(purpose tag, block index), and within a block the uniform consumed by
(step, trial, walker) sits at a fixed position of that stream.  Identical
(config, master_seed) therefore reproduce bit-identical reports, results
never depend on evaluation order, and distinct (trial, walker) slices are
independent substreams.  Early termination only stops *drawing*; it never
changes the values already consumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainError
from .schedule import ChainSchedule, ScheduleSummary

BLOCK_TRIALS = 8192
# Purpose tags keep the streams of different estimators disjoint.
TAG_WALK = 1
TAG_COALESCE = 2
TAG_VOTE = 3
TAG_EDGES = 4

_MAX_TRAJ_ELEMENTS = 200_000_000


@dataclass(frozen=True)
class RngStream:
    """Counter-derived stream for one (trial, walker) pair.

    Identical (master_seed, trial, walker) always reproduces the same draw
    sequence; distinct pairs occupy disjoint Philox counter ranges.
    """
    master_seed: int
    trial: int = 0
    walker: int = 0

    def generator(self) -> np.random.Generator:
        counter = (int(self.trial) << 128) | (int(self.walker) << 64)
        return np.random.Generator(
            np.random.Philox(key=int(self.master_seed) & (2**64 - 1), counter=counter))


def block_stream(master_seed: int, tag: int, block: int) -> np.random.Generator:
    """The Philox stream owning trial block `block` of purpose `tag`."""
    counter = (int(tag) << 192) | (int(block) << 128)
    return np.random.Generator(
        np.random.Philox(key=int(master_seed) & (2**64 - 1), counter=counter))


def _trial_blocks(trials: int):
    for start in range(0, trials, BLOCK_TRIALS):
        yield start // BLOCK_TRIALS, start, min(BLOCK_TRIALS, trials - start)


def _map_blocks(fn, blocks, threads: int):
    """Run one worker per trial block; results come back in block order.

    Blocks are fully independent (each owns its Philox stream), so any pool
    size yields identical results; numpy releases the GIL in the hot paths.
    """
    if threads <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


class _RowSampler:
    """Cumulative-row lookup tables for inverse-transform sampling.

    Safe to share across block workers: concurrent cache inserts at worst
    recompute the same table.
    """

    def __init__(self, schedule: ChainSchedule):
        self.schedule = schedule
        self._cache = {}

    def cum(self, t: int) -> np.ndarray:
        key = (t - 1) % self.schedule.period if self.schedule.period else t
        if key not in self._cache:
            c = np.cumsum(self.schedule.matrix(t), axis=1)
            c[:, -1] = 1.0
            self._cache[key] = c
        return self._cache[key]


def _sample_rows(cum: np.ndarray, pos: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One inverse-transform draw per walker: row pos[...] of the cdf table."""
    return np.minimum((cum[pos] < u[..., None]).sum(axis=-1), cum.shape[0] - 1)


@dataclass(frozen=True)
class EstimateReport:
    """Mean/CI summary of one per-trial statistic.

    Trials that did not finish by the horizon contribute the horizon as a
    lower bound to ``values`` and are counted in ``censored_count``.
    """
    trials: int
    mean: float
    std_err: float
    ci_lo: float
    ci_hi: float
    censored_count: int
    values: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def ci95(self) -> tuple:
        return (self.ci_lo, self.ci_hi)


def estimate_report(values: np.ndarray, censored: np.ndarray) -> EstimateReport:
    values = np.asarray(values, dtype=float)
    trials = len(values)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return EstimateReport(
        trials=trials, mean=mean, std_err=se,
        ci_lo=mean - 1.96 * se, ci_hi=mean + 1.96 * se,
        censored_count=int(censored.sum()), values=values)


@dataclass
class EnsembleState:
    """Positions of k walkers plus merge/kill bookkeeping.

    ``merge_map[a]`` is the smallest index sharing walker a's position when
    the ensemble coalesces (walkers copy their representative's move once
    co-located); it stays the identity for independent ensembles.
    ``kill_flags[a]`` is True while walker a is alive; coffin walkers keep
    their last position but the killed-walk bookkeeping ignores them.
    """
    t: int
    positions: np.ndarray
    coalescing: bool = False
    merge_map: np.ndarray = None
    kill_flags: np.ndarray = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=int)
        k = len(self.positions)
        if self.merge_map is None:
            self.merge_map = self._representatives() if self.coalescing else np.arange(k)
        if self.kill_flags is None:
            self.kill_flags = np.ones(k, dtype=bool)

    def _representatives(self) -> np.ndarray:
        eq = self.positions[:, None] == self.positions[None, :]
        return eq.argmax(axis=1)

    def survivor_count(self) -> int:
        return len(set(self.positions[self.kill_flags].tolist()))


def step(schedule: ChainSchedule, state: EnsembleState,
         rng: np.random.Generator) -> EnsembleState:
    """Advance the ensemble one step, to time state.t + 1.

    Each live, unmerged walker samples its row of the step's matrix
    independently (in index order); a walker co-located with a smaller-index
    walker in a coalescing ensemble copies that representative's move.
    """
    t_next = state.t + 1
    P = schedule.matrix(t_next)
    pos = state.positions.copy()
    if state.coalescing:
        reps = state._representatives()
    else:
        reps = np.arange(len(pos))
    new_pos = pos.copy()
    for a in range(len(pos)):
        if not state.kill_flags[a]:
            continue
        if reps[a] < a:
            new_pos[a] = new_pos[reps[a]]
        else:
            new_pos[a] = rng.choice(schedule.n, p=P[pos[a]])
    return EnsembleState(t=t_next, positions=new_pos, coalescing=state.coalescing,
                         kill_flags=state.kill_flags.copy())


# ---------------------------------------------------------------------------
# Vectorized independent-walk engine.
# ---------------------------------------------------------------------------

def _resolve_starts(starts, start_law, n, k):
    if starts is not None and start_law is not None:
        raise ChainError("pass either fixed starts or a start law, not both")
    if starts is not None:
        starts = np.asarray(starts, dtype=int)
        if starts.ndim != 1 or not len(starts):
            raise ChainError("starts must be a nonempty vertex vector")
        if ((starts < 0) | (starts >= n)).any():
            raise ChainError("start vertex out of range")
        return starts, None
    if start_law is None:
        raise ChainError("need starts or start_law")
    law = np.asarray(start_law, dtype=float)
    if law.shape != (n,):
        raise ChainError("start law has wrong dimension")
    return None, np.cumsum(law)


def run_walks(schedule: ChainSchedule, starts, horizon: int, trials: int,
              seed: int, *, k: int = None, start_law=None, target=None,
              track_cover: bool = False, track_meet: bool = False,
              record: bool = False, threads: int = 1):
    """Drive k independent walkers per trial, collecting stopping times.

    Returns a dict with per-trial arrays: ``hit`` (first time any walker sits
    on ``target``; -1 while unresolved), ``cover``, ``meet`` (k=2 only), and
    optionally the full ``traj`` array of shape (horizon+1, trials, k).
    Unresolved statistics are left at -1; callers translate them into
    censored values.  All requested statistics are evaluated at t=0 before
    any randomness is drawn.
    """
    if horizon < 0:
        raise ChainError("horizon must be >= 0")
    n = schedule.n
    if k is None:
        k = len(starts) if starts is not None else 1
    starts, start_cum = _resolve_starts(starts, start_law, n, k)
    if starts is not None:
        k = len(starts)
    if track_meet and k != 2:
        raise ChainError("meeting time needs exactly two walkers")
    if record and (horizon + 1) * trials * k > _MAX_TRAJ_ELEMENTS:
        raise ChainError("trajectory recording would exceed the memory budget")

    sampler = _RowSampler(schedule)
    hit = np.full(trials, -1, dtype=np.int64)
    cover = np.full(trials, -1, dtype=np.int64)
    meet = np.full(trials, -1, dtype=np.int64)
    traj = (np.zeros((horizon + 1, trials, k), dtype=np.int32) if record else None)

    def do_block(block_spec):
        block, _start_idx, m = block_spec
        g = block_stream(seed, TAG_WALK, block)
        if starts is not None:
            pos = np.tile(starts, (m, 1))
        else:
            u0 = g.random((m, k))
            pos = np.minimum((start_cum[None, None, :] < u0[..., None]).sum(axis=-1), n - 1)
        b_traj = np.zeros((horizon + 1, m, k), dtype=np.int32) if record else None
        if record:
            b_traj[0] = pos

        b_hit = np.full(m, -1, dtype=np.int64)
        b_cover = np.full(m, -1, dtype=np.int64)
        b_meet = np.full(m, -1, dtype=np.int64)
        visited = None
        if track_cover:
            visited = np.zeros((m, n), dtype=bool)
            np.put_along_axis(visited, pos, True, axis=1)
            b_cover[visited.all(axis=1)] = 0
        if target is not None:
            b_hit[(pos == target).any(axis=1)] = 0
        if track_meet:
            b_meet[pos[:, 0] == pos[:, 1]] = 0

        def unresolved() -> bool:
            if record:
                return True
            pending = False
            if target is not None:
                pending |= bool((b_hit < 0).any())
            if track_cover:
                pending |= bool((b_cover < 0).any())
            if track_meet:
                pending |= bool((b_meet < 0).any())
            return pending

        for t in range(1, horizon + 1):
            if not unresolved():
                break
            u = g.random((m, k))
            pos = _sample_rows(sampler.cum(t), pos, u)
            if record:
                b_traj[t] = pos
            if target is not None:
                fresh = (b_hit < 0) & (pos == target).any(axis=1)
                b_hit[fresh] = t
            if track_cover:
                np.put_along_axis(visited, pos, True, axis=1)
                fresh = (b_cover < 0) & visited.all(axis=1)
                b_cover[fresh] = t
            if track_meet:
                fresh = (b_meet < 0) & (pos[:, 0] == pos[:, 1])
                b_meet[fresh] = t
        return b_hit, b_cover, b_meet, b_traj

    blocks = list(_trial_blocks(trials))
    for (block, start_idx, m), (b_hit, b_cover, b_meet, b_traj) in zip(
            blocks, _map_blocks(do_block, blocks, threads)):
        sl = slice(start_idx, start_idx + m)
        hit[sl] = b_hit
        cover[sl] = b_cover
        meet[sl] = b_meet
        if record:
            traj[:, sl] = b_traj

    return {"hit": hit, "cover": cover, "meet": meet, "traj": traj}


def _censor(times: np.ndarray, horizon: int) -> EstimateReport:
    censored = times < 0
    values = np.where(censored, horizon, times)
    return estimate_report(values, censored)


def simulate_hit(schedule: ChainSchedule, starts, target: int, horizon: int,
                 trials: int, seed: int, start_law=None, k: int = None,
                 threads: int = 1) -> EstimateReport:
    """First time any of the k walkers has visited ``target`` (t=0 counts).

    Fixed ``starts`` set k implicitly; with ``start_law`` each of the ``k``
    walkers draws its start independently from that law.
    """
    if not 0 <= target < schedule.n:
        raise ChainError("target out of range")
    out = run_walks(schedule, starts, horizon, trials, seed,
                    target=target, start_law=start_law,
                    k=k if starts is None else None, threads=threads)
    return _censor(out["hit"], horizon)


def simulate_cover(schedule: ChainSchedule, starts, horizon: int,
                   trials: int, seed: int, threads: int = 1) -> EstimateReport:
    """First time the union of all walkers' visited sets is the vertex set."""
    out = run_walks(schedule, starts, horizon, trials, seed, track_cover=True,
                    threads=threads)
    return _censor(out["cover"], horizon)


def simulate_meet(schedule: ChainSchedule, start_pair, horizon: int,
                  trials: int, seed: int, threads: int = 1) -> EstimateReport:
    """First time two independent walkers occupy the same vertex."""
    if len(start_pair) != 2:
        raise ChainError("meeting time needs exactly two starts")
    out = run_walks(schedule, start_pair, horizon, trials, seed, track_meet=True,
                    threads=threads)
    return _censor(out["meet"], horizon)


# ---------------------------------------------------------------------------
# Coalescing walks.
# ---------------------------------------------------------------------------

def run_coalescing(schedule: ChainSchedule, horizon: int, trials: int, seed: int,
                   *, starts=None, record: bool = False, threads: int = 1):
    """Coalescing ensemble: co-located walkers move as one.

    The default start is one walker per vertex.  Per step, the smallest
    index at each occupied vertex draws the move and every co-located walker
    copies it, so |distinct positions| is non-increasing.  Returns per-trial
    coalescence times (-1 while more than one cluster remains) and optional
    trajectories.
    """
    n = schedule.n
    if starts is None:
        starts = np.arange(n)
    starts = np.asarray(starts, dtype=int)
    W = len(starts)
    if record and (horizon + 1) * trials * W > _MAX_TRAJ_ELEMENTS:
        raise ChainError("trajectory recording would exceed the memory budget")
    sampler = _RowSampler(schedule)
    coal = np.full(trials, -1, dtype=np.int64)
    traj = (np.zeros((horizon + 1, trials, W), dtype=np.int32) if record else None)

    def do_block(block_spec):
        block, _start_idx, m = block_spec
        g = block_stream(seed, TAG_COALESCE, block)
        pos = np.tile(starts, (m, 1))
        b_traj = np.zeros((horizon + 1, m, W), dtype=np.int32) if record else None
        if record:
            b_traj[0] = pos
        b_coal = np.full(m, -1, dtype=np.int64)
        b_coal[(pos == pos[:, :1]).all(axis=1)] = 0
        for t in range(1, horizon + 1):
            if not record and (b_coal >= 0).all():
                break
            u = g.random((m, W))
            eq = pos[:, :, None] == pos[:, None, :]
            reps = eq.argmax(axis=2)
            drawn = _sample_rows(sampler.cum(t), pos, u)
            pos = np.take_along_axis(drawn, reps, axis=1)
            if record:
                b_traj[t] = pos
            fresh = (b_coal < 0) & (pos == pos[:, :1]).all(axis=1)
            b_coal[fresh] = t
        return b_coal, b_traj

    blocks = list(_trial_blocks(trials))
    for (block, start_idx, m), (b_coal, b_traj) in zip(
            blocks, _map_blocks(do_block, blocks, threads)):
        sl = slice(start_idx, start_idx + m)
        coal[sl] = b_coal
        if record:
            traj[:, sl] = b_traj

    return {"coal": coal, "traj": traj}


def simulate_coalesce(schedule: ChainSchedule, horizon: int, trials: int,
                      seed: int, starts=None, threads: int = 1) -> EstimateReport:
    """Time for the walkers (one per vertex) to merge into a single one.

    ``starts`` other than one-per-vertex fall outside the defining setup and
    exist for exploration only.
    """
    out = run_coalescing(schedule, horizon, trials, seed, starts=starts,
                         threads=threads)
    return _censor(out["coal"], horizon)


# ---------------------------------------------------------------------------
# Killed-walker constructions.
# ---------------------------------------------------------------------------

def _ilog2(x: int) -> int:
    return int(math.ceil(math.log2(x))) if x > 1 else 0


@dataclass(frozen=True)
class KillingSchedule:
    """Level times L_ell >= ... >= L_0 and the allowed-killing windows.

    Walker labels are 1-based here, matching the inductive construction:
    during L_{i+1} < t <= L_i, walkers b with 2^i <= b < 2^{i+1} may kill
    any walker a >= 2^{i+1}.  No killings are allowed up to L_ell.
    """
    n: int
    ell: int
    K: float
    levels: tuple  # levels[i] = L_i, i = 0..ell

    @property
    def L0(self) -> int:
        return self.levels[0]

    def active_level(self, t: int) -> int | None:
        """The i with L_{i+1} < t <= L_i, or None outside every window."""
        if t <= self.levels[self.ell] or t > self.levels[0]:
            return None
        for i in range(self.ell - 1, -1, -1):
            if self.levels[i + 1] < t <= self.levels[i]:
                return i
        return None

    def allows(self, killer: int, victim: int, t: int) -> bool:
        """May `killer` kill `victim` at time t?  Labels are 1-based."""
        i = self.active_level(t)
        if i is None:
            return False
        return 2**i <= killer < 2**(i + 1) and victim >= 2**(i + 1)

    def allowed_list(self, t: int) -> set:
        """Materialized killer/victim pairs at time t (small n only)."""
        i = self.active_level(t)
        if i is None:
            return set()
        return {(b, a) for b in range(2**i, min(2**(i + 1), self.n + 1))
                for a in range(2**(i + 1), self.n + 1)}


@dataclass(frozen=True)
class FixedAllowedPairs:
    """An allowed-killing list that is the same set of pairs at every time.

    Pairs are (killer, victim) with 1-based labels, killer < victim.
    """
    pairs: frozenset

    @staticmethod
    def of(pairs) -> "FixedAllowedPairs":
        return FixedAllowedPairs(frozenset((int(b), int(a)) for b, a in pairs))

    def allows(self, killer: int, victim: int, t: int) -> bool:
        return (killer, victim) in self.pairs


def killing_schedule(summary: ScheduleSummary, n: int, K: float) -> KillingSchedule:
    """Level times from the recursion L_ell = t_sep, L_i = L_{i+1} + ceil(K t_HIT / 2^i)."""
    if summary.t_sep is None:
        raise ChainError("killing schedule needs a finite separation time")
    if not math.isfinite(summary.t_HIT):
        raise ChainError("killing schedule needs a finite worst-case hitting time")
    if K <= 0:
        raise ChainError("K must be positive")
    ell = _ilog2(n)
    levels = [0] * (ell + 1)
    levels[ell] = int(summary.t_sep)
    for i in range(ell - 1, -1, -1):
        levels[i] = levels[i + 1] + math.ceil(K * summary.t_HIT / 2**i)
    bound = summary.t_sep + math.log2(n) + 2 * K * summary.t_HIT
    assert levels[0] <= bound + 1e-9, f"L_0={levels[0]} exceeds {bound}"
    return KillingSchedule(n=n, ell=ell, K=K, levels=tuple(levels))


def killed_survivor_counts(traj: np.ndarray, mode: str,
                           killing=None) -> np.ndarray:
    """Survivor counts |{a : walker a not yet in the coffin}| over time.

    ``traj`` has shape (T+1, trials, n); walker at array column a-1 carries
    label a.  Mode "killings": walker a dies the first time it sits on a
    *live* smaller-labeled walker.  Mode "allowed_killings": only pairs the
    ``killing`` object allows at that time count (anything with an
    ``allows(killer, victim, t)`` method works), and killers must be alive.
    Feeding coalesced trajectories reproduces the coupling in which the two
    modes are comparable pathwise.
    """
    if mode not in ("killings", "allowed_killings"):
        raise ChainError(f"unknown mode {mode!r}")
    if mode == "allowed_killings" and killing is None:
        raise ChainError("allowed_killings needs a KillingSchedule")
    T1, trials, n = traj.shape
    alive = np.ones((trials, n), dtype=bool)
    counts = np.zeros((T1, trials), dtype=np.int32)
    for t in range(T1):
        x = traj[t]
        for a in range(1, n):        # label a+1; label 1 is never killed
            if mode == "allowed_killings":
                killers = [b for b in range(a) if killing.allows(b + 1, a + 1, t)]
            else:
                killers = list(range(a))
            if not killers:
                continue
            cols = np.array(killers)
            hit_now = (alive[:, cols] & (x[:, cols] == x[:, a:a + 1])).any(axis=1)
            alive[:, a] &= ~hit_now
        counts[t] = alive.sum(axis=1)
    return counts


def allowed_meeting_free(traj: np.ndarray, killing: KillingSchedule) -> np.ndarray:
    """Per-trial indicator of the independent-walk survival event.

    True when some walker a >= 2 avoids every allowed (killer, time)
    meeting, positions taken from the raw trajectories (killers count even
    after their own death, unlike the inductive bookkeeping).
    """
    T1, trials, n = traj.shape
    survived_any = np.zeros(trials, dtype=bool)
    for a in range(2, n + 1):        # labels
        met = np.zeros(trials, dtype=bool)
        for i in range(killing.ell):
            if a < 2**(i + 1):
                continue
            lo, hi = killing.levels[i + 1], killing.levels[i]
            ts = np.arange(max(lo + 1, 0), min(hi, T1 - 1) + 1)
            if not len(ts):
                continue
            bs = np.arange(2**i, min(2**(i + 1), n + 1)) - 1
            if not len(bs):
                continue
            seg = traj[ts]                       # (|ts|, trials, n)
            met |= (seg[:, :, bs] == seg[:, :, a - 1:a]).any(axis=(0, 2))
        survived_any |= ~met
    return survived_any


@dataclass(frozen=True)
class KilledWalkReport:
    """Survivor-count trajectories of a killed-walker run."""
    mode: str
    counts: np.ndarray          # (T+1, trials)
    survival_event: np.ndarray  # per-trial allowed-survival indicator (Z mode)

    def mean_curve(self) -> np.ndarray:
        return self.counts.mean(axis=1)


def simulate_killed(schedule: ChainSchedule, mode: str, horizon: int,
                    trials: int, seed: int, killing: KillingSchedule | None = None,
                    starts=None) -> KilledWalkReport:
    """Run n independent walks and derive the killed-walker bookkeeping."""
    n = schedule.n
    if starts is None:
        starts = np.arange(n)
    out = run_walks(schedule, starts, horizon, trials, seed, record=True)
    counts = killed_survivor_counts(out["traj"], mode, killing)
    event = (allowed_meeting_free(out["traj"], killing)
             if isinstance(killing, KillingSchedule)
             else np.zeros(trials, dtype=bool))
    return KilledWalkReport(mode=mode, counts=counts, survival_event=event)
