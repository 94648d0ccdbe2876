"""Edge-Markovian dynamic graphs: every potential edge flips independently.

An absent edge appears with probability p per step and a present edge
disappears with probability q, i.e. each pair follows the two-state chain
M = [[1-p, p], [q, 1-q]].  M^t has a closed form, so edge states can be
advanced any number of steps in one exact jump, which is how the expander
probe reaches its widely spaced checkpoint times without stepping every
round.  The probe builds the lazy Metropolis matrix of sampled snapshots
and reports how often its relaxation time stays below the constant 8192.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import chain, graphs
from .chain import ChainError
from .schedule import ChainSchedule
from .sim import TAG_EDGES, block_stream

EXPANDER_CONSTANT = 8192.0
MAX_PROBE_N = 512


@dataclass(frozen=True)
class EdgeMarkovianParams:
    n: int
    p: float
    q: float
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ChainError("need at least two vertices")
        if not (0 <= self.p <= 1 and 0 <= self.q <= 1):
            raise ChainError("p and q must lie in [0, 1]")

    @property
    def pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    def transition_matrix(self) -> np.ndarray:
        return np.array([[1 - self.p, self.p], [self.q, 1 - self.q]])

    def stationary_density(self) -> float:
        if self.p + self.q == 0:
            raise ChainError("p + q = 0 has no unique stationary density")
        return self.p / (self.p + self.q)


def m_power_closed_form(p: float, q: float, t: int) -> np.ndarray:
    """M^t in closed form: (1/(p+q)) [[q,p],[q,p]] + (theta^t/(p+q)) [[p,-p],[-q,q]].

    theta = 1 - p - q.  Undefined at p + q = 0 (M is the identity and the
    normalization breaks down), which is an error.
    """
    if p + q <= 0:
        raise ChainError("closed form needs p + q > 0")
    if t < 0:
        raise ChainError("t must be >= 0")
    theta = (1.0 - p - q) ** t
    base = np.array([[q, p], [q, p]])
    swing = np.array([[p, -p], [-q, q]])
    return (base + theta * swing) / (p + q)


def pair_index(n: int):
    """Row/column labels of the unordered pairs in storage order (u < v)."""
    return np.triu_indices(n, k=1)


@dataclass(frozen=True)
class EdgeStateVector:
    """One binary state per unordered pair, in triu order, at time t."""
    n: int
    states: np.ndarray
    t: int = 0

    def __post_init__(self):
        expected = self.n * (self.n - 1) // 2
        if self.states.shape != (expected,):
            raise ChainError(f"expected {expected} pair states, got {self.states.shape}")

    def edge_count(self) -> int:
        return int(self.states.sum())

    def snapshot(self) -> graphs.GraphSnapshot:
        rows, cols = pair_index(self.n)
        on = np.nonzero(self.states)[0]
        return graphs.GraphSnapshot.from_edges(
            self.n, zip(rows[on].tolist(), cols[on].tolist()))

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        rows, cols = pair_index(self.n)
        A[rows, cols] = self.states
        return A + A.T


def initial_states(params: EdgeMarkovianParams, kind: str = "empty",
                   rng: np.random.Generator | None = None) -> EdgeStateVector:
    m = params.pairs
    if kind == "empty":
        s = np.zeros(m, dtype=bool)
    elif kind == "complete":
        s = np.ones(m, dtype=bool)
    elif kind == "stationary":
        if rng is None:
            rng = block_stream(params.seed, TAG_EDGES, 0)
        s = rng.random(m) < params.stationary_density()
    else:
        raise ChainError(f"unknown initial state kind {kind!r}")
    return EdgeStateVector(n=params.n, states=s, t=0)


def step_states(state: EdgeStateVector, params: EdgeMarkovianParams,
                rng: np.random.Generator) -> EdgeStateVector:
    """One synchronous flip round for every pair."""
    u = rng.random(len(state.states))
    nxt = np.where(state.states, u >= params.q, u < params.p)
    return EdgeStateVector(n=state.n, states=nxt, t=state.t + 1)


def jump_states(state: EdgeStateVector, params: EdgeMarkovianParams,
                delta: int, rng: np.random.Generator) -> EdgeStateVector:
    """Advance every pair chain ``delta`` steps in one exact draw.

    Each pair is Markov, so its state after delta steps is Bernoulli with
    success probability M^delta(current state, 1); sampling that marginal
    reproduces the law of the stepped process at the jump times.
    """
    if delta < 0:
        raise ChainError("delta must be >= 0")
    if delta == 0:
        return state
    Mt = m_power_closed_form(params.p, params.q, delta)
    probs = np.where(state.states, Mt[1, 1], Mt[0, 1])
    nxt = rng.random(len(state.states)) < probs
    return EdgeStateVector(n=state.n, states=nxt, t=state.t + delta)


def generate(params: EdgeMarkovianParams, b0: EdgeStateVector, horizon: int):
    """Yield (t, GraphSnapshot) for t = 0..horizon, deterministic under seed."""
    if horizon < 1:
        raise ChainError("horizon must be >= 1")
    rng = block_stream(params.seed, TAG_EDGES, 1)
    state = b0
    yield 0, state.snapshot()
    for t in range(1, horizon + 1):
        state = step_states(state, params, rng)
        yield t, state.snapshot()


def metropolis_schedule(params: EdgeMarkovianParams, b0: EdgeStateVector,
                        horizon: int) -> ChainSchedule:
    """The lazy Metropolis walk driven by the generated snapshots.

    Snapshots may be disconnected; their matrices are still valid (isolated
    vertices self-loop), the per-snapshot hitting time is just infinite.
    Matrices are materialized eagerly, so keep horizon * n^2 modest.
    """
    mats = {}
    for t, G in generate(params, b0, horizon):
        if t >= 1:
            mats[t] = (graphs.lazy_metropolis_kernel(G) if G.edges
                       else np.eye(params.n))
    return ChainSchedule.generated(lambda t: mats[t], params.n, horizon=horizon)


@dataclass(frozen=True)
class IntervalPlan:
    """Checkpoint arithmetic S(l, i) = (l(l-1)/2 + i) (I + J).

    I = ceil(max(1, log(q/p)) / (p+q)) is the forget time after which every
    pair's edge probability is sandwiched inside [p/(2(p+q)), 2p/(p+q)]
    regardless of its state at the window start.
    """
    I: int
    J: int

    def __post_init__(self):
        if self.I < 1 or self.J < 0:
            raise ChainError("need I >= 1 and J >= 0")

    def checkpoint(self, level: int, i: int) -> int:
        if level < 0 or not 0 <= i <= level:
            raise ChainError("need level >= 0 and 0 <= i <= level")
        return (level * (level - 1) // 2 + i) * (self.I + self.J)

    def probe_times(self):
        """Window starts S(l, i-1) plus the forget time I, in schedule order."""
        level = 1
        while True:
            for i in range(1, level + 1):
                yield level, i, self.checkpoint(level, i - 1) + self.I
            level += 1


def interval_plan(params: EdgeMarkovianParams, J: int) -> IntervalPlan:
    if params.p <= 0 or params.p + params.q > 1:
        raise ChainError("interval plan needs p > 0 and p + q <= 1")
    ratio = params.q / params.p
    I = math.ceil(max(1.0, math.log(ratio) if ratio > 0 else 0.0) / (params.p + params.q))
    return IntervalPlan(I=max(I, 1), J=J)


def forget_time_sandwich(params: EdgeMarkovianParams, I_prime: int) -> tuple[float, float, float, float]:
    """(lower, min over b of M^I'(b,1), max over b, upper) for the sandwich check."""
    Mt = m_power_closed_form(params.p, params.q, I_prime)
    lo = params.p / (2 * (params.p + params.q))
    hi = 2 * params.p / (params.p + params.q)
    return lo, float(min(Mt[0, 1], Mt[1, 1])), float(max(Mt[0, 1], Mt[1, 1])), hi


@dataclass(frozen=True)
class ProbeRow:
    t: int
    level: int
    window: int
    connected: bool
    lambda_star: float
    t_rel: float
    leq_C: bool


@dataclass(frozen=True)
class ProbeReport:
    rows: tuple
    C: float
    in_regime: bool

    def fraction_within(self) -> float:
        if not self.rows:
            return float("nan")
        return sum(r.leq_C for r in self.rows) / len(self.rows)


def expander_probe(params: EdgeMarkovianParams, b0: EdgeStateVector,
                   plan: IntervalPlan, count: int, c: float = 1.0,
                   C: float = EXPANDER_CONSTANT) -> ProbeReport:
    """Relaxation times of lazy Metropolis snapshots at the plan's checkpoints.

    Pair chains are advanced to each probe time by exact jumps; every probe
    records whether the snapshot is connected and whether t_rel <= C
    (disconnected snapshots have t_rel = +inf and count as failures).
    ``in_regime`` records whether the density hypothesis
    p/(p+q) >= 32(c+1) log(n)/n held; the probe itself runs either way.
    """
    if params.n > MAX_PROBE_N:
        raise ChainError(f"eigendecomposition budget limits probes to n <= {MAX_PROBE_N}")
    if count < 0:
        raise ChainError("count must be >= 0")
    in_regime = (params.p + params.q > 0 and
                 params.stationary_density() >= 32 * (c + 1) * math.log(params.n) / params.n)
    rng = block_stream(params.seed, TAG_EDGES, 2)
    uniform = np.full(params.n, 1.0 / params.n)
    rows = []
    state = b0
    for level, window, t in plan.probe_times():
        if len(rows) >= count:
            break
        state = jump_states(state, params, t - state.t, rng)
        G = state.snapshot()
        connected = G.is_connected()
        if G.edges:
            P = graphs.lazy_metropolis_kernel(G)
            spec = chain.spectrum(P, uniform)
            lam, trel = spec.lambda_star, spec.t_rel
        else:
            lam, trel = 1.0, math.inf
        rows.append(ProbeRow(t=t, level=level, window=window, connected=connected,
                             lambda_star=lam, t_rel=trel, leq_C=bool(trel <= C)))
    return ProbeReport(rows=tuple(rows), C=C, in_regime=in_regime)
