"""Graph snapshots and the walk kernels that turn them into transition matrices.

Vertices are dense integers 0..n-1.  Three kernels are provided: the lazy
simple walk (stationary vector proportional to degree), the max-degree lazy
walk and the lazy Metropolis walk (both symmetric, hence uniform stationary
vector on any graph).  Dynamic constructions produce one snapshot per step
t >= 1: the rotating-center star sequence whose lazy simple walk needs
exponentially many self-loops to make progress, and the permuted double star
on which two walkers take exponentially long to meet.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from . import chain
from .chain import ChainError
from .schedule import ChainSchedule


@dataclass(frozen=True)
class GraphSnapshot:
    """Simple undirected graph on vertices 0..n-1 (no self-loops)."""
    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ChainError("graph needs at least one vertex")
        for e in self.edges:
            u, v = e
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ChainError(f"edge {e} out of range for n={self.n}")
            if u == v:
                raise ChainError(f"self-loop {e} not allowed")
            if u > v:
                raise ChainError(f"edge {e} must be stored as (min, max)")

    @staticmethod
    def from_edges(n: int, edges) -> "GraphSnapshot":
        return GraphSnapshot(n, frozenset(
            (int(min(u, v)), int(max(u, v))) for u, v in edges))

    def degree(self, v: int) -> int:
        return sum(1 for e in self.edges if v in e)

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for u, v in self.edges:
            d[u] += 1
            d[v] += 1
        return d

    def neighbors(self, v: int) -> list:
        out = []
        for a, b in self.edges:
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        return sorted(out)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for u, v in self.edges:
            A[u, v] = A[v, u] = 1.0
        return A

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        ncomp, _ = scipy.sparse.csgraph.connected_components(
            scipy.sparse.csr_matrix(self.adjacency()), directed=False)
        return ncomp == 1

    def relabel(self, perm) -> "GraphSnapshot":
        """Apply a vertex permutation (perm[v] is the new label of v)."""
        return GraphSnapshot.from_edges(
            self.n, ((perm[u], perm[v]) for u, v in self.edges))


# ---------------------------------------------------------------------------
# Kernels.
# ---------------------------------------------------------------------------

def lazy_simple_kernel(G: GraphSnapshot) -> np.ndarray:
    """1/2 self-loop, otherwise a uniform neighbor: P(u,v) = 1/(2 deg(u)).

    Reversible w.r.t. the degree-proportional vector deg(v)/2m.  Isolated
    vertices have no row to define, so they are rejected.
    """
    deg = G.degrees()
    if (deg == 0).any():
        raise ChainError(f"isolated vertex {int(np.argmin(deg))}: lazy simple walk undefined")
    P = np.zeros((G.n, G.n))
    for u, v in G.edges:
        P[u, v] = 1.0 / (2 * deg[u])
        P[v, u] = 1.0 / (2 * deg[v])
    np.fill_diagonal(P, 0.5)
    return P


def dmax_lazy_kernel(G: GraphSnapshot) -> np.ndarray:
    """P(u,v) = 1/(2 d_max) on edges, remainder on the diagonal.

    Symmetric by construction, so the stationary vector is uniform on any
    graph; diagonal entries are at least 1/2.
    """
    if not G.edges:
        raise ChainError("graph has no edges; d_max undefined")
    deg = G.degrees()
    dmax = int(deg.max())
    P = np.zeros((G.n, G.n))
    w = 1.0 / (2 * dmax)
    for u, v in G.edges:
        P[u, v] = w
        P[v, u] = w
    np.fill_diagonal(P, 1.0 - deg / (2 * dmax))
    return P


def lazy_metropolis_kernel(G: GraphSnapshot) -> np.ndarray:
    """P(u,v) = 1/(2 max{deg(u), deg(v)}) on edges, remainder on the diagonal.

    Uses only the degrees at the two endpoints, yet is symmetric (uniform
    stationary vector) and lazy: each off-diagonal entry is at most
    1/(2 deg(u)), so the diagonal remainder is at least 1/2.
    """
    if not G.edges:
        raise ChainError("graph has no edges")
    deg = G.degrees()
    P = np.zeros((G.n, G.n))
    for u, v in G.edges:
        w = 1.0 / (2 * max(deg[u], deg[v]))
        P[u, v] = w
        P[v, u] = w
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


KERNELS = {
    "lazy_simple": lazy_simple_kernel,
    "dmax_lazy": dmax_lazy_kernel,
    "lazy_metropolis": lazy_metropolis_kernel,
}


def kernel_stationary(kernel: str, G: GraphSnapshot) -> np.ndarray:
    """The stationary vector the kernel guarantees on this snapshot."""
    if kernel in ("dmax_lazy", "lazy_metropolis"):
        return np.full(G.n, 1.0 / G.n)
    if kernel == "lazy_simple":
        deg = G.degrees().astype(float)
        return deg / deg.sum()
    raise ChainError(f"unknown kernel {kernel!r}")


# ---------------------------------------------------------------------------
# Standard graphs.
# ---------------------------------------------------------------------------

def cycle_graph(n: int) -> GraphSnapshot:
    if n < 3:
        raise ChainError("cycle needs n >= 3")
    return GraphSnapshot.from_edges(n, ((i, (i + 1) % n) for i in range(n)))


def path_graph(n: int) -> GraphSnapshot:
    if n < 2:
        raise ChainError("path needs n >= 2")
    return GraphSnapshot.from_edges(n, ((i, i + 1) for i in range(n - 1)))


def complete_graph(n: int) -> GraphSnapshot:
    if n < 2:
        raise ChainError("complete graph needs n >= 2")
    return GraphSnapshot.from_edges(n, ((u, v) for u in range(n) for v in range(u + 1, n)))


def star_graph(n: int, center: int = 0) -> GraphSnapshot:
    if n < 2:
        raise ChainError("star needs n >= 2")
    if not 0 <= center < n:
        raise ChainError(f"center {center} out of range")
    return GraphSnapshot.from_edges(n, ((center, v) for v in range(n) if v != center))


STANDARD_GRAPHS = {
    "cycle": cycle_graph,
    "path": path_graph,
    "complete": complete_graph,
    "star": star_graph,
}


def standard_graph(name: str, n: int) -> GraphSnapshot:
    if name not in STANDARD_GRAPHS:
        raise ChainError(f"unknown graph {name!r}; have {sorted(STANDARD_GRAPHS)}")
    return STANDARD_GRAPHS[name](n)


def random_connected_graph(n: int, rng, edge_prob: float = 0.4) -> GraphSnapshot:
    """Erdos-Renyi edges plus a random spanning tree to force connectivity."""
    edges = set()
    order = rng.permutation(n)
    for i in range(1, n):
        a = order[i]
        b = order[rng.integers(0, i)]
        edges.add((min(a, b), max(a, b)))
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < edge_prob:
                edges.add((u, v))
    return GraphSnapshot.from_edges(n, edges)


# ---------------------------------------------------------------------------
# Dynamic constructions.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DynamicGraphSchedule:
    """Snapshot provider t -> G_t plus a kernel name, periodic or bounded."""
    n: int
    kernel: str
    provider: object
    period: int | None = None
    horizon: int | None = None
    _matrices: dict = field(default_factory=dict, repr=False, compare=False)

    def snapshot(self, t: int) -> GraphSnapshot:
        if t < 1:
            raise ChainError(f"snapshots are defined for t >= 1, got t={t}")
        if self.horizon is not None and t > self.horizon:
            raise ChainError(f"t={t} exceeds horizon {self.horizon}")
        if self.period is not None:
            t = (t - 1) % self.period + 1
        return self.provider(t)

    def matrix(self, t: int) -> np.ndarray:
        if self.period is not None:
            t = (t - 1) % self.period + 1
        if t not in self._matrices:
            self._matrices[t] = KERNELS[self.kernel](self.snapshot(t))
        return self._matrices[t]

    def chain_schedule(self) -> ChainSchedule:
        if self.period is not None:
            return ChainSchedule.cyclic([self.matrix(t) for t in range(1, self.period + 1)])
        return ChainSchedule.generated(self.matrix, self.n, horizon=self.horizon)

    def stationary(self) -> np.ndarray | None:
        """The common stationary vector, when the construction guarantees one.

        Uniform for the symmetric kernels; degree-proportional when every
        snapshot shares one degree sequence; None otherwise.
        """
        if self.kernel in ("dmax_lazy", "lazy_metropolis"):
            return np.full(self.n, 1.0 / self.n)
        span = range(1, (self.period or self.horizon) + 1)
        degs = [self.snapshot(t).degrees() for t in span]
        if all((d == degs[0]).all() for d in degs):
            d = degs[0].astype(float)
            return d / d.sum()
        return None


def sisyphus_schedule(n: int, kernel: str = "lazy_simple") -> DynamicGraphSchedule:
    """Stars with rotating center v(t) = t mod (n-1), period n-1.

    Every snapshot is connected with n-1 edges; vertex n-1 is never the
    center, and a walker not at the current center can only move to it or
    stand still, which is what forces the exponential hitting time of
    vertex n-1 for the lazy simple walk.
    """
    if n < 3:
        raise ChainError("rotating-star schedule needs n >= 3")
    if kernel not in KERNELS:
        raise ChainError(f"unknown kernel {kernel!r}")

    def provider(t: int) -> GraphSnapshot:
        return star_graph(n, center=t % (n - 1))

    return DynamicGraphSchedule(n=n, kernel=kernel, provider=provider, period=n - 1)


@dataclass(frozen=True)
class PermutationSchedule:
    """G_1 = base, G_{t+1} = eta(G_t) for a vertex permutation eta."""
    base: GraphSnapshot
    eta: tuple

    def __post_init__(self):
        if sorted(self.eta) != list(range(self.base.n)):
            raise ChainError("eta must be a permutation of the vertex set")

    def snapshot(self, t: int) -> GraphSnapshot:
        if t < 1:
            raise ChainError(f"snapshots are defined for t >= 1, got t={t}")
        G = self.base
        eta = np.asarray(self.eta)
        power = np.arange(self.base.n)
        for _ in range((t - 1) % self.order()):
            power = eta[power]
        return G.relabel(power)

    def order(self) -> int:
        """Smallest k >= 1 with eta^k = identity."""
        eta = np.asarray(self.eta)
        power = eta.copy()
        k = 1
        while not (power == np.arange(self.base.n)).all():
            power = eta[power]
            k += 1
        return k

    def dynamic_schedule(self, kernel: str = "lazy_simple") -> DynamicGraphSchedule:
        return DynamicGraphSchedule(
            n=self.base.n, kernel=kernel, provider=self.snapshot, period=self.order())


def ot_double_star(m: int) -> tuple[GraphSnapshot, PermutationSchedule]:
    """Two m-vertex stars joined at their centers, rotated by index shift.

    Vertices u_0..u_{m-1} are 0..m-1 and w_0..w_{m-1} are m..2m-1; edges are
    {u_0,w_0}, {u_i,u_0} and {w_j,w_0}.  The permutation shifts both index
    sets cyclically, so the bridge edge {u_j,w_j} moves every step and a
    walker can cross sides only by standing still for m-1 consecutive steps.
    """
    if m < 2:
        raise ChainError("double star needs m >= 2")
    edges = [(0, m)]
    edges += [(0, i) for i in range(1, m)]
    edges += [(m, m + j) for j in range(1, m)]
    base = GraphSnapshot.from_edges(2 * m, edges)
    eta = tuple([(i + 1) % m for i in range(m)] +
                [m + (j + 1) % m for j in range(m)])
    return base, PermutationSchedule(base=base, eta=eta)


# ---------------------------------------------------------------------------
# JSON file format: {"n": int, "edges": [[u, v], ...]}.
# ---------------------------------------------------------------------------

def graph_from_json(obj, where: str = "graph") -> GraphSnapshot:
    if not isinstance(obj, dict):
        raise ChainError(f"{where}: expected an object")
    unknown = set(obj) - {"n", "edges"}
    if unknown:
        raise ChainError(f"{where}: unknown fields {sorted(unknown)}")
    try:
        n = int(obj["n"])
        edges = obj["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ChainError(f"{where}: need integer 'n' and list 'edges'") from exc
    pairs = []
    for i, e in enumerate(edges):
        if len(e) != 2:
            raise ChainError(f"{where}, edge {i}: expected a pair, got {e}")
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n and 0 <= v < n):
            raise ChainError(f"{where}, edge {i}: endpoint out of range")
        if u == v:
            raise ChainError(f"{where}, edge {i}: self-loop not allowed")
        pairs.append((u, v))
    return GraphSnapshot.from_edges(n, pairs)


def graph_to_json(G: GraphSnapshot) -> dict:
    return {"n": G.n, "edges": sorted([u, v] for u, v in G.edges)}


def load_graph(path) -> GraphSnapshot:
    with open(path) as fh:
        return graph_from_json(json.load(fh), where=str(path))
