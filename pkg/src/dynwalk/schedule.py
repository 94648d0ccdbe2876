"""Matrix schedules: the object driving a time-inhomogeneous walk.

A schedule maps step t >= 1 to a row-stochastic matrix P_t.  Three kinds
exist: ``static`` (one matrix forever), ``cyclic`` (a finite list repeated),
and ``generated`` (an arbitrary provider up to a stored horizon).  Products
P_[a,b] = P_a P_{a+1} ... P_b, separation / uniform-mixing searches, and the
per-schedule worst-case aggregates (max relaxation time, max hitting time)
all live here, together with seeded generators for random reversible
schedules sharing a prescribed stationary distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from . import chain
from .chain import ChainError


@dataclass(frozen=True)
class ChainSchedule:
    """Deterministic mapping t -> P_t for t >= 1.

    ``period`` is set for static/cyclic schedules (sup-over-offsets searches
    scan one period); ``horizon`` bounds generated schedules.  Matrices of a
    generated schedule are materialized through ``provider`` and cached.
    """
    kind: str
    n: int
    matrices: tuple = ()
    provider: object = None
    period: int | None = None
    horizon: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @staticmethod
    def static(P) -> "ChainSchedule":
        P = chain.check_stochastic(P)
        return ChainSchedule(kind="static", n=P.shape[0], matrices=(P,), period=1)

    @staticmethod
    def cyclic(matrices) -> "ChainSchedule":
        mats = tuple(chain.check_stochastic(P) for P in matrices)
        if not mats:
            raise ChainError("cyclic schedule needs at least one matrix")
        n = mats[0].shape[0]
        if any(P.shape[0] != n for P in mats):
            raise ChainError("all matrices in a schedule must share n")
        return ChainSchedule(kind="cyclic", n=n, matrices=mats, period=len(mats))

    @staticmethod
    def generated(provider, n: int, horizon: int | None) -> "ChainSchedule":
        """Arbitrary provider; horizon=None leaves the schedule unbounded
        (window searches then scan only the s=0 offset up to T_max)."""
        if horizon is not None and horizon < 1:
            raise ChainError("generated schedule needs horizon >= 1")
        return ChainSchedule(kind="generated", n=n, provider=provider, horizon=horizon)

    def matrix(self, t: int) -> np.ndarray:
        """The matrix driving step t (1-indexed)."""
        if t < 1:
            raise ChainError(f"schedules are defined for t >= 1, got t={t}")
        if self.kind == "static":
            return self.matrices[0]
        if self.kind == "cyclic":
            return self.matrices[(t - 1) % self.period]
        if self.horizon is not None and t > self.horizon:
            raise ChainError(f"t={t} exceeds schedule horizon {self.horizon}")
        if t not in self._cache:
            P = chain.check_stochastic(self.provider(t))
            if P.shape[0] != self.n:
                raise ChainError(f"provider returned wrong size at t={t}")
            self._cache[t] = P
        return self._cache[t]

    def offsets(self, t: int):
        """Start offsets s over which sup_{s>=0} is evaluated for window length t.

        One period for static/cyclic schedules; every window fitting inside
        the stored horizon for generated ones.
        """
        if self.kind in ("static", "cyclic"):
            return range(self.period)
        if self.horizon is None:
            return range(1)
        return range(self.horizon - t + 1)

    def search_limit(self, T_max: int) -> int:
        if self.kind == "generated" and self.horizon is not None:
            return min(T_max, self.horizon)
        return T_max

    def distinct_matrices(self):
        """The matrices the schedule can ever produce (period or horizon scan)."""
        if self.kind in ("static", "cyclic"):
            return list(self.matrices)
        if self.horizon is None:
            raise ChainError("unbounded generated schedule has no finite matrix list")
        return [self.matrix(t) for t in range(1, self.horizon + 1)]

    def is_reversible(self, pi, tol: float = chain.REVERSIBILITY_TOL) -> bool:
        """Detailed balance w.r.t. pi at every provided t."""
        return all(chain.is_reversible(P, pi, tol) for P in self.distinct_matrices())

    def is_lazy(self) -> bool:
        return all(chain.is_lazy(P) for P in self.distinct_matrices())


def product(schedule: ChainSchedule, a: int, b: int) -> np.ndarray:
    """Left-to-right product P_a P_{a+1} ... P_b."""
    if not 1 <= a <= b:
        raise ChainError(f"need 1 <= a <= b, got a={a}, b={b}")
    return reduce(np.matmul, (schedule.matrix(t) for t in range(a, b + 1)))


def reversed_product(schedule: ChainSchedule, a: int, b: int) -> np.ndarray:
    """The reversed-order product P_b P_{b-1} ... P_a."""
    if not 1 <= a <= b:
        raise ChainError(f"need 1 <= a <= b, got a={a}, b={b}")
    return reduce(np.matmul, (schedule.matrix(t) for t in range(b, a - 1, -1)))


def _window_scan(schedule, pi, eps, T_max, criterion):
    """Least t <= T_max with max over offsets of `criterion` <= eps.

    Maintains the running window product for every offset; each time
    increment costs one matmul per offset.
    """
    pi = chain.check_probability_vector(pi, positive=True)
    if pi.shape[0] != schedule.n:
        raise ChainError("dimension mismatch between schedule and pi")
    if T_max < 1:
        raise ChainError("T_max must be >= 1")
    limit = schedule.search_limit(T_max)
    eye = np.eye(schedule.n)
    if criterion(eye, pi) <= eps:   # t = 0, empty product
        return 0
    windows = {s: eye for s in schedule.offsets(1)}
    for t in range(1, limit + 1):
        for s in list(windows):
            if schedule.kind == "generated" and s + t > schedule.horizon:
                del windows[s]
                continue
            windows[s] = windows[s] @ schedule.matrix(s + t)
        if not windows:
            return None
        if max(criterion(M, pi) for M in windows.values()) <= eps:
            return t
    return None


def separation_time(schedule: ChainSchedule, pi, eps: float = 0.5,
                    T_max: int = 10_000) -> int | None:
    """Least t with every window-product row dominating (1-eps) pi entrywise.

    The sup over window starts is taken over one period (cyclic) or the
    stored horizon (generated).  Returns None if no t <= T_max qualifies.
    """
    return _window_scan(
        schedule, pi, eps, T_max,
        lambda M, p: float(np.max(1.0 - M / p[None, :])))


def uniform_mixing_time(schedule: ChainSchedule, pi, eps: float = 0.5,
                        T_max: int = 10_000) -> int | None:
    """Least t with every window-product row within factor (1 +- eps) of pi.

    Two-sided version of the separation criterion, so never smaller than
    ``separation_time`` at equal eps.
    """
    return _window_scan(
        schedule, pi, eps, T_max,
        lambda M, p: float(np.max(np.abs(M / p[None, :] - 1.0))))


def non_hit_probability(schedule: ChainSchedule, start, targets) -> float:
    """Exact Pr[X_t != w_t for all 0 <= t <= T] with X_0 ~ start.

    ``targets`` is the vertex sequence w_0..w_T; the probability is the
    start law pushed through the masked products (mask w_{t-1}, multiply
    by P_t, mask w_t), summed.
    """
    mu = chain.check_probability_vector(start)
    targets = list(targets)
    if not targets:
        raise ChainError("need at least w_0 (T >= 0)")
    n = schedule.n
    if mu.shape[0] != n:
        raise ChainError("dimension mismatch between schedule and start law")
    if any(not 0 <= w < n for w in targets):
        raise ChainError("target vertex out of range")
    v = mu.copy()
    v[targets[0]] = 0.0
    for t, w in enumerate(targets[1:], start=1):
        v = v @ schedule.matrix(t)
        v[w] = 0.0
    return float(min(max(v.sum(), 0.0), 1.0))


@dataclass(frozen=True)
class ScheduleSummary:
    """Worst-case aggregates of a schedule over its period/horizon.

    t_HIT and t_REL are maxima of the per-matrix quantities (inf when some
    snapshot is reducible or periodic); t_sep and t_mix_inf come from the
    window searches and are None when not found within the horizon.
    """
    t_HIT: float
    t_REL: float
    t_sep: int | None
    t_mix_inf: int | None
    eps: float
    evaluated_horizon: int


def snapshot_relaxation(P) -> float:
    """Relaxation time of one matrix, using its own stationary vector.

    Reducible matrices get +inf.  Snapshots that are not reversible even
    w.r.t. their own stationary vector fall back to the magnitude of the
    general (possibly complex) spectrum.
    """
    if not chain.is_irreducible(P):
        return math.inf
    pi_own = chain.stationary(P)
    if chain.is_reversible(P, pi_own):
        return chain.spectrum(P, pi_own).t_rel
    eig = np.linalg.eigvals(P)
    mags = np.sort(np.abs(eig))[::-1]
    return chain.relaxation_time(float(mags[1])) if len(mags) > 1 else 1.0


def schedule_summary(schedule: ChainSchedule, pi, eps: float = 0.5,
                     T_max: int = 10_000) -> ScheduleSummary:
    pi = chain.check_probability_vector(pi, positive=True)
    t_hit_max = 0.0
    t_rel_max = 0.0
    for P in schedule.distinct_matrices():
        if not chain.is_irreducible(P):
            t_hit_max = math.inf
            t_rel_max = math.inf
            break
        t_hit_max = max(t_hit_max, chain.t_hit(P))
        t_rel_max = max(t_rel_max, snapshot_relaxation(P))
    return ScheduleSummary(
        t_HIT=t_hit_max,
        t_REL=t_rel_max,
        t_sep=separation_time(schedule, pi, eps, T_max),
        t_mix_inf=uniform_mixing_time(schedule, pi, eps, T_max),
        eps=eps,
        evaluated_horizon=schedule.search_limit(T_max),
    )


# ---------------------------------------------------------------------------
# Seeded random reversible chains sharing a prescribed stationary vector.
#
# For a symmetric nonnegative E with zero diagonal and row sums
# sum_v E(u,v) <= budget * pi(u), the matrix P(u,v) = E(u,v)/pi(u) off the
# diagonal (remainder on the diagonal) satisfies pi(u)P(u,v) = E(u,v) =
# pi(v)P(v,u), so P is reversible w.r.t. pi, and pi P = pi follows.
# budget <= 1/2 keeps every diagonal entry >= 1/2 (lazy).
# ---------------------------------------------------------------------------

def random_stationary(n: int, rng, min_mass: float = 0.05) -> np.ndarray:
    """A random positive stationary vector bounded away from zero."""
    pi = rng.random(n) + min_mass * n
    return pi / pi.sum()


def random_reversible_matrix(n: int, pi, rng, lazy: bool = True,
                             budget: float | None = None) -> np.ndarray:
    """Random irreducible chain with stationary vector pi, full support.

    ``budget`` caps the off-diagonal row mass (relative to pi); at most 1/2
    for a lazy chain, anything below 1 otherwise (positive diagonals keep
    the chain aperiodic either way).
    """
    pi = chain.check_probability_vector(pi, positive=True)
    if budget is None:
        budget = 0.5 if lazy else 0.9
    if lazy and budget > 0.5:
        raise ChainError("lazy chains need off-diagonal budget <= 1/2")
    W = rng.random((n, n))
    E = np.triu(W, 1)
    E = E + E.T
    scale = np.max(E.sum(axis=1) / pi) if n > 1 else 1.0
    E *= budget / scale if scale > 0 else 0.0
    P = E / pi[:, None]
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return chain.check_stochastic(P, tol=1e-9)


def random_reversible_schedule(n: int, length: int, seed, lazy: bool = True,
                               pi=None, kind: str = "cyclic") -> tuple[ChainSchedule, np.ndarray]:
    """A seeded schedule of random reversible chains sharing one pi."""
    rng = np.random.default_rng(seed)
    if pi is None:
        pi = random_stationary(n, rng)
    mats = [random_reversible_matrix(n, pi, rng, lazy=lazy) for _ in range(length)]
    if kind == "cyclic":
        sched = ChainSchedule.cyclic(mats)
    elif kind == "generated":
        sched = ChainSchedule.generated(lambda t: mats[t - 1], n, horizon=length)
    else:
        raise ChainError(f"unknown schedule kind {kind!r}")
    return sched, pi


# ---------------------------------------------------------------------------
# JSON file formats.
# ---------------------------------------------------------------------------

def matrix_from_json(obj, where: str = "matrix") -> np.ndarray:
    """Parse {"n": int, "rows": [[...]]} with row-addressed errors."""
    if not isinstance(obj, dict):
        raise ChainError(f"{where}: expected an object")
    unknown = set(obj) - {"n", "rows"}
    if unknown:
        raise ChainError(f"{where}: unknown fields {sorted(unknown)}")
    try:
        n = int(obj["n"])
        rows = obj["rows"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ChainError(f"{where}: need integer 'n' and list 'rows'") from exc
    if len(rows) != n:
        raise ChainError(f"{where}: expected {n} rows, found {len(rows)}")
    for i, row in enumerate(rows):
        if len(row) != n:
            raise ChainError(f"{where}, row {i}: expected {n} entries, found {len(row)}")
    P = np.asarray(rows, dtype=float)
    sums = P.sum(axis=1)
    for i in range(n):
        if np.isnan(P[i]).any() or (P[i] < -chain.PROB_TOL).any() or (P[i] > 1 + chain.PROB_TOL).any():
            raise ChainError(f"{where}, row {i}: entries outside [0,1]")
        if abs(sums[i] - 1.0) > chain.PROB_TOL:
            raise ChainError(f"{where}, row {i}: sums to {sums[i]:.17g}, expected 1")
    return P


def matrix_to_json(P) -> dict:
    P = chain.check_stochastic(P)
    return {"n": int(P.shape[0]), "rows": P.tolist()}


def schedule_from_json(obj) -> ChainSchedule:
    """Parse {"kind": ..., "matrices": [...], "period": int, "seed": int}.

    ``generated`` schedules are reconstructed from (seed, n, horizon,
    length) as seeded random reversible schedules so that experiment
    configs are reproducible from file alone.
    """
    if not isinstance(obj, dict):
        raise ChainError("schedule: expected an object")
    kind = obj.get("kind")
    if kind == "static":
        _reject_unknown(obj, {"kind", "matrices"}, "schedule")
        mats = obj.get("matrices", [])
        if len(mats) != 1:
            raise ChainError("schedule: static kind needs exactly one matrix")
        return ChainSchedule.static(matrix_from_json(mats[0], "schedule, matrix 0"))
    if kind == "cyclic":
        _reject_unknown(obj, {"kind", "matrices", "period"}, "schedule")
        mats = [matrix_from_json(m, f"schedule, matrix {i}")
                for i, m in enumerate(obj.get("matrices", []))]
        if "period" in obj and int(obj["period"]) != len(mats):
            raise ChainError(f"schedule: period {obj['period']} != {len(mats)} matrices")
        return ChainSchedule.cyclic(mats)
    if kind == "generated":
        _reject_unknown(obj, {"kind", "seed", "n", "horizon", "lazy"}, "schedule")
        try:
            n = int(obj["n"])
            horizon = int(obj["horizon"])
            seed = int(obj["seed"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ChainError("schedule: generated kind needs 'n', 'horizon', 'seed'") from exc
        sched, _ = random_reversible_schedule(
            n, horizon, seed, lazy=bool(obj.get("lazy", True)), kind="generated")
        return sched
    raise ChainError(f"schedule: unknown kind {kind!r}")


def schedule_to_json(schedule: ChainSchedule) -> dict:
    if schedule.kind == "static":
        return {"kind": "static", "matrices": [matrix_to_json(schedule.matrices[0])]}
    if schedule.kind == "cyclic":
        return {"kind": "cyclic", "period": schedule.period,
                "matrices": [matrix_to_json(P) for P in schedule.matrices]}
    raise ChainError("generated schedules serialize via their (seed, n, horizon) config")


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ChainError(f"{where}: unknown fields {sorted(unknown)}")


def load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        return matrix_from_json(json.load(fh), where=str(path))


def load_schedule(path) -> ChainSchedule:
    with open(path) as fh:
        return schedule_from_json(json.load(fh))
