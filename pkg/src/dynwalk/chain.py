"""Exact numerical machinery for a single transition matrix.

Everything here works on dense float64 arrays: row-stochastic matrices P,
positive stationary vectors pi, and the pi-weighted geometry (inner product
<f,g>_pi = sum_v pi(v) f(v) g(v)) that makes reversible chains self-adjoint.
Spectral quantities are computed through the symmetrization
S(u,v) = sqrt(pi(u)/pi(v)) P(u,v), which shares P's eigenvalues and is
symmetric exactly when detailed balance holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph

# Tolerance regime for dense symmetric problems at n <= 2048.
PROB_TOL = 1e-12       # probability vectors and row sums
REVERSIBILITY_TOL = 1e-10
EIGEN_TOL = 1e-9

# Desk-scale O(n^3) budgets.
MAX_EIG_N = 2048
MAX_CONDUCTANCE_N = 22
MAX_HITTING_N = 4096


class ChainError(ValueError):
    """Raised when an input violates a chain-structure precondition."""


def as_matrix(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise ChainError(f"expected a square matrix, got shape {P.shape}")
    return P


def check_stochastic(P, tol: float = PROB_TOL) -> np.ndarray:
    """Return P as an ndarray after verifying it is row-stochastic.

    Rejects NaN and negative entries outright; row sums must equal 1
    within `tol`.
    """
    P = as_matrix(P)
    if np.isnan(P).any():
        raise ChainError("matrix contains NaN entries")
    bad = np.argwhere((P < -tol) | (P > 1 + tol))
    if bad.size:
        u, v = bad[0]
        raise ChainError(f"entry ({u},{v}) = {P[u, v]} outside [0,1]")
    sums = P.sum(axis=1)
    off = np.argwhere(np.abs(sums - 1.0) > tol)
    if off.size:
        r = int(off[0][0])
        raise ChainError(f"row {r} sums to {sums[r]:.17g}, expected 1")
    return P


def check_probability_vector(v, positive: bool = False, tol: float = PROB_TOL) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ChainError(f"expected a vector, got shape {v.shape}")
    if np.isnan(v).any():
        raise ChainError("vector contains NaN entries")
    if (v < -tol).any():
        raise ChainError("vector has negative entries")
    if abs(v.sum() - 1.0) > tol:
        raise ChainError(f"vector sums to {v.sum():.17g}, expected 1")
    if positive and (v <= 0).any():
        raise ChainError("vector must be strictly positive")
    return v


@dataclass(frozen=True)
class MatrixDiagnostics:
    stochastic: bool
    lazy: bool
    irreducible: bool


def is_lazy(P, tol: float = PROB_TOL) -> bool:
    """A chain is lazy when every diagonal entry is at least 1/2."""
    P = as_matrix(P)
    return bool((np.diag(P) >= 0.5 - tol).all())


def is_irreducible(P) -> bool:
    """Strong connectivity of the support digraph {(u,v): P(u,v) > 0}."""
    P = as_matrix(P)
    support = scipy.sparse.csr_matrix(P > 0)
    ncomp, _ = scipy.sparse.csgraph.connected_components(
        support, directed=True, connection="strong")
    return ncomp == 1


def validate(P, tol: float = PROB_TOL) -> MatrixDiagnostics:
    """Report the stochastic / lazy / irreducible predicates for P.

    NaN and negative entries are rejected with an error rather than
    reported, since no downstream computation can use such a matrix.
    """
    P = as_matrix(P)
    if np.isnan(P).any():
        raise ChainError("matrix contains NaN entries")
    if (P < -tol).any():
        raise ChainError("matrix has negative entries")
    stochastic = bool((np.abs(P.sum(axis=1) - 1.0) <= tol).all()
                      and (P <= 1 + tol).all())
    return MatrixDiagnostics(
        stochastic=stochastic,
        lazy=is_lazy(P, tol),
        irreducible=is_irreducible(P),
    )


def stationary(P) -> np.ndarray:
    """Solve pi P = pi for the unique stationary distribution.

    Requires P irreducible (otherwise the stationary vector is not
    unique and an error is raised).  The returned vector is strictly
    positive and satisfies ||pi P - pi||_inf <= 1e-10.
    """
    P = check_stochastic(P)
    if not is_irreducible(P):
        raise ChainError("matrix is not irreducible; stationary vector not unique")
    n = P.shape[0]
    # Consistent overdetermined system: pi (P - I) = 0 together with sum(pi) = 1.
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    residual = np.max(np.abs(pi @ P - pi))
    if residual > 1e-10:
        raise ChainError(f"stationary solve residual {residual:.3e} exceeds 1e-10")
    if (pi <= 0).any():
        raise ChainError("computed stationary vector is not strictly positive")
    return pi / pi.sum()


def is_reversible(P, pi, tol: float = REVERSIBILITY_TOL) -> bool:
    """Detailed balance: max_{u,v} |pi(u)P(u,v) - pi(v)P(v,u)| <= tol."""
    P = as_matrix(P)
    pi = check_probability_vector(pi, positive=True)
    if pi.shape[0] != P.shape[0]:
        raise ChainError("dimension mismatch between P and pi")
    F = pi[:, None] * P
    return bool(np.max(np.abs(F - F.T)) <= tol)


def symmetrize(P, pi) -> np.ndarray:
    """The similarity transform S = D^{1/2} P D^{-1/2} with D = diag(pi)."""
    P = as_matrix(P)
    pi = np.asarray(pi, dtype=float)
    root = np.sqrt(pi)
    return (root[:, None] / root[None, :]) * P


@dataclass(frozen=True)
class SpectralSummary:
    """Real spectrum of a reversible chain, sorted descending."""
    eigenvalues: np.ndarray
    lambda2: float
    lambda_star: float
    t_rel: float

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


def relaxation_time(lambda_star: float) -> float:
    """1/(1 - lambda_star), reported as +inf for periodic/reducible chains."""
    if lambda_star >= 1.0 - 1e-12:
        return math.inf
    return 1.0 / (1.0 - lambda_star)


def spectrum(P, pi) -> SpectralSummary:
    """Eigenvalues of a reversible P via its symmetrization.

    The symmetrization sqrt(pi(u)/pi(v)) P(u,v) is symmetric exactly when
    detailed balance holds, so a symmetric eigensolver applies and all
    eigenvalues are real in [-1, 1].  Non-reversible input is an error.
    """
    P = as_matrix(P)
    pi = check_probability_vector(pi, positive=True)
    if P.shape[0] > MAX_EIG_N:
        raise ChainError(f"eigendecomposition limited to n <= {MAX_EIG_N}")
    if not is_reversible(P, pi):
        raise ChainError("P is not reversible w.r.t. pi; symmetrization invalid")
    S = symmetrize(P, pi)
    S = 0.5 * (S + S.T)  # scrub the <= 1e-10 detailed-balance asymmetry
    eig = np.linalg.eigvalsh(S)[::-1]
    if abs(eig[0] - 1.0) > EIGEN_TOL or eig[-1] < -1.0 - EIGEN_TOL:
        raise ChainError(f"spectrum outside [-1,1]: lambda_1={eig[0]}, lambda_n={eig[-1]}")
    n = len(eig)
    lambda2 = float(eig[1]) if n > 1 else float(eig[0])
    lambda_star = float(max(abs(eig[1]), abs(eig[-1]))) if n > 1 else 0.0
    return SpectralSummary(
        eigenvalues=eig,
        lambda2=lambda2,
        lambda_star=lambda_star,
        t_rel=relaxation_time(lambda_star),
    )


def killed_matrix(P, w: int) -> np.ndarray:
    """Zero out row and column w (the diagonal-mask product around P).

    The result is substochastic; its iterates compute probabilities of
    avoiding w.  Masking is idempotent.
    """
    P = as_matrix(P)
    n = P.shape[0]
    if not (0 <= w < n):
        raise ChainError(f"vertex {w} out of range for n={n}")
    Q = P.copy()
    Q[w, :] = 0.0
    Q[:, w] = 0.0
    return Q


def check_substochastic(Q, tol: float = PROB_TOL) -> np.ndarray:
    Q = as_matrix(Q)
    if np.isnan(Q).any() or (Q < -tol).any() or (Q > 1 + tol).any():
        raise ChainError("entries outside [0,1]")
    if (Q.sum(axis=1) > 1 + tol).any():
        raise ChainError("row sums exceed 1")
    return Q


def spectral_radius_killed(P, pi, w: int) -> float:
    """Spectral radius of the matrix P with row/column w zeroed.

    Computed on the symmetrized (n-1) x (n-1) principal submatrix, which
    is symmetric for reversible P, so the radius is the largest absolute
    eigenvalue of a real symmetric matrix.  Lies in [0, 1) for
    irreducible P.
    """
    P = as_matrix(P)
    pi = check_probability_vector(pi, positive=True)
    n = P.shape[0]
    if not (0 <= w < n):
        raise ChainError(f"vertex {w} out of range for n={n}")
    if not is_irreducible(P):
        raise ChainError("matrix is not irreducible")
    if not is_reversible(P, pi):
        raise ChainError("P is not reversible w.r.t. pi")
    keep = [v for v in range(n) if v != w]
    if not keep:
        return 0.0
    S = symmetrize(P, pi)[np.ix_(keep, keep)]
    S = 0.5 * (S + S.T)
    eig = np.linalg.eigvalsh(S)
    return float(max(abs(eig[0]), abs(eig[-1])))


def exact_hitting_times(P, w: int) -> np.ndarray:
    """Expected times to first reach w, by first-step analysis.

    h(w) = 0 and, on V \\ {w}, h solves (I - P restricted to V \\ {w}) h = 1,
    solved densely.  Raises if the restricted system is singular (the
    chain cannot reach w from somewhere) or the residual exceeds 1e-8.
    """
    P = check_stochastic(P)
    n = P.shape[0]
    if n > MAX_HITTING_N:
        raise ChainError(f"exact hitting solves limited to n <= {MAX_HITTING_N}")
    if not (0 <= w < n):
        raise ChainError(f"vertex {w} out of range for n={n}")
    h = np.zeros(n)
    keep = [v for v in range(n) if v != w]
    if not keep:
        return h
    A = np.eye(n - 1) - P[np.ix_(keep, keep)]
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            sol = scipy.linalg.solve(A, np.ones(n - 1))
    except scipy.linalg.LinAlgError as exc:
        raise ChainError(f"hitting-time system for target {w} is singular "
                         "(is the chain irreducible?)") from exc
    if not np.isfinite(sol).all():
        raise ChainError(f"hitting-time system for target {w} is singular "
                         "(is the chain irreducible?)")
    residual = np.max(np.abs(A @ sol - 1.0))
    if residual > 1e-8:
        raise ChainError(f"hitting-time solve residual {residual:.3e} exceeds 1e-8")
    if (sol < 0).any():
        raise ChainError("negative hitting time; chain is not irreducible")
    h[keep] = sol
    return h


def t_hit(P) -> float:
    """Worst-case expected hitting time: max over targets w and starts u."""
    P = check_stochastic(P)
    return max(float(exact_hitting_times(P, w).max()) for w in range(P.shape[0]))


def dirichlet_form(P, pi, f) -> float:
    """Quadratic form <f,f>_pi - <f,Pf>_pi measuring local variation of f.

    Computed both in inner-product form and as the explicit edge sum
    (1/2) sum_{u,v} pi(u) P(u,v) (f(u) - f(v))^2; the two must agree to
    1e-10 (they differ only if P is not reversible w.r.t. pi).
    """
    P = as_matrix(P)
    pi = check_probability_vector(pi, positive=True)
    f = np.asarray(f, dtype=float)
    if f.shape != (P.shape[0],) or pi.shape != f.shape:
        raise ChainError("dimension mismatch")
    inner = float(np.sum(pi * f * f) - np.sum(pi * f * (P @ f)))
    diff = f[:, None] - f[None, :]
    edge = float(0.5 * np.sum(pi[:, None] * P * diff**2))
    if abs(inner - edge) > 1e-10 * max(1.0, abs(edge)):
        raise ChainError(
            f"Dirichlet form cross-check failed: {inner:.17g} vs {edge:.17g} "
            "(P not reversible w.r.t. pi?)")
    return edge


def lp_distance(mu, pi, p) -> float:
    """l^p distance between mu/pi and the all-one vector, pi-weighted.

    p=1 gives total variation times two, p=2 the chi-square-style distance
    used by the mixing bounds, p=inf the uniform (relative) distance.
    Monotone nondecreasing in p.
    """
    mu = check_probability_vector(mu)
    pi = check_probability_vector(pi, positive=True)
    if mu.shape != pi.shape:
        raise ChainError("dimension mismatch")
    ratio = mu / pi - 1.0
    if p == math.inf or p == "inf":
        return float(np.max(np.abs(ratio)))
    if p in (1, 2):
        return float(np.sum(pi * np.abs(ratio) ** p) ** (1.0 / p))
    raise ChainError(f"p must be 1, 2 or inf, got {p!r}")


def variance(pi, f) -> float:
    """Var_pi(f) = <f,f>_pi - <f,1>_pi^2."""
    pi = np.asarray(pi, dtype=float)
    f = np.asarray(f, dtype=float)
    mean = float(np.sum(pi * f))
    return float(np.sum(pi * (f - mean) ** 2))


def conductance(P, pi) -> float:
    """Bottleneck ratio min_{0 < pi(S) <= 1/2} Q(S)/pi(S), by brute force.

    Q(S) sums the stationary edge flow pi(u)P(u,v) leaving S.  Exhaustive
    subset enumeration, so n is capped at 22; beyond that the spectral
    bound 1 - lambda_star <= 2 * Phi gives a sampling-free alternative.
    """
    P = as_matrix(P)
    pi = check_probability_vector(pi, positive=True)
    n = P.shape[0]
    if n > MAX_CONDUCTANCE_N:
        raise ChainError(
            f"exhaustive conductance limited to n <= {MAX_CONDUCTANCE_N}; "
            "use the spectral bound 1 - lambda_star <= 2*Phi instead")
    flow = pi[:, None] * P
    best = math.inf
    members = np.arange(n)
    for bits in range(1, 2**n - 1):
        mask = (bits >> members) & 1 == 1
        pis = pi[mask].sum()
        if pis > 0.5 + PROB_TOL:
            continue
        q = flow[np.ix_(mask, ~mask)].sum()
        best = min(best, q / pis)
    if n == 1:
        return 0.0
    return float(best)


def worst_hitting_pair(P) -> tuple[int, int, float]:
    """(start, target, time) achieving the worst-case expected hitting time."""
    P = check_stochastic(P)
    best = (0, 0, 0.0)
    for w in range(P.shape[0]):
        h = exact_hitting_times(P, w)
        u = int(np.argmax(h))
        if h[u] > best[2]:
            best = (u, w, float(h[u]))
    return best
