"""Numerical verification of the spectral and stopping-time inequalities.

Every check draws seeded random lazy reversible chains (and short schedules
of them sharing one stationary vector), evaluates both sides of one
inequality exactly, and reports the worst violation over all cases.  A check
passes when that violation stays within a 1e-9 slack.  ``run_suite`` is the
single entry point the CLI's verify-lemmas experiment and the acceptance
tests share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import chain
from .schedule import (ChainSchedule, non_hit_probability, product,
                       random_reversible_matrix, random_stationary,
                       reversed_product)

TOLERANCE = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    cases: int
    max_violation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance


@dataclass(frozen=True)
class SuiteInstance:
    """One seeded test instance: a short common-pi lazy schedule + vectors."""
    pi: np.ndarray
    schedule: ChainSchedule
    matrices: list
    vectors: np.ndarray       # (n_vectors, n) arbitrary reals
    measures: np.ndarray      # (n_vectors, n) probability vectors
    targets: np.ndarray


def make_instances(seed: int, count: int, vectors: int = 20,
                   n_lo: int = 3, n_hi: int = 8, length_hi: int = 4) -> list[SuiteInstance]:
    out = []
    for i in range(count):
        rng = np.random.default_rng((seed, i))
        n = int(rng.integers(n_lo, n_hi + 1))
        pi = random_stationary(n, rng)
        length = int(rng.integers(2, length_hi + 1))
        mats = [random_reversible_matrix(n, pi, rng, lazy=True) for _ in range(length)]
        vecs = rng.normal(size=(vectors, n))
        meas = rng.random((vectors, n)) + 0.02
        meas /= meas.sum(axis=1, keepdims=True)
        targets = rng.integers(0, n, size=length + 1)
        out.append(SuiteInstance(
            pi=pi, schedule=ChainSchedule.cyclic(mats), matrices=mats,
            vectors=vecs, measures=meas, targets=targets))
    return out


def _norm_pi(pi, f):
    return math.sqrt(float(np.sum(pi * f * f)))


def check_contraction_orthogonal(instances) -> CheckResult:
    """Self-adjoint contraction: ||P f||_pi <= lambda_star ||f||_pi on 1-orthogonal f."""
    worst, cases = -math.inf, 0
    for inst in instances:
        P = inst.matrices[0]
        lam = chain.spectrum(P, inst.pi).lambda_star
        for f in inst.vectors:
            f0 = f - np.sum(inst.pi * f)        # <f0, 1>_pi = 0
            worst = max(worst, _norm_pi(inst.pi, P @ f0) - lam * _norm_pi(inst.pi, f0))
            cases += 1
    return CheckResult("contraction_orthogonal", cases, worst, TOLERANCE)


def check_l2_product_decay(instances) -> CheckResult:
    """d2(mu P_[1,T]) <= d2(mu) * prod_t lambda_star(P_t) for common-pi schedules."""
    worst, cases = -math.inf, 0
    for inst in instances:
        lams = [chain.spectrum(P, inst.pi).lambda_star for P in inst.matrices]
        T = len(inst.matrices)
        M = product(inst.schedule, 1, T)
        decay = math.prod(lams)
        for mu in inst.measures:
            lhs = chain.lp_distance(mu @ M, inst.pi, 2)
            rhs = chain.lp_distance(mu, inst.pi, 2) * decay
            worst = max(worst, lhs - rhs)
            cases += 1
    return CheckResult("l2_product_decay", cases, worst, TOLERANCE)


def check_variance_dirichlet_decrease(instances) -> CheckResult:
    """Var_pi(P f) <= Var_pi(f) - E_P,pi(f) for lazy reversible P."""
    worst, cases = -math.inf, 0
    for inst in instances:
        P = inst.matrices[0]
        for f in inst.vectors:
            lhs = chain.variance(inst.pi, P @ f)
            rhs = chain.variance(inst.pi, f) - chain.dirichlet_form(P, inst.pi, f)
            worst = max(worst, lhs - rhs)
            cases += 1
    return CheckResult("variance_dirichlet_decrease", cases, worst, TOLERANCE)


def check_dirichlet_hitting_bound(instances) -> CheckResult:
    """E_P,pi(mu/pi) >= Var_pi(mu/pi)^2 / t_hit(P) for lazy reversible P."""
    worst, cases = -math.inf, 0
    for inst in instances:
        P = inst.matrices[0]
        th = chain.t_hit(P)
        for mu in inst.measures:
            f = mu / inst.pi
            lhs = chain.dirichlet_form(P, inst.pi, f)
            rhs = chain.variance(inst.pi, f) ** 2 / th
            worst = max(worst, rhs - lhs)
            cases += 1
    return CheckResult("dirichlet_hitting_bound", cases, worst, TOLERANCE)


def check_killed_radius_bound(instances) -> CheckResult:
    """rho(P with w zeroed) <= 1 - 1/t_hit(P), every target w."""
    worst, cases = -math.inf, 0
    for inst in instances:
        P = inst.matrices[0]
        bound = 1.0 - 1.0 / chain.t_hit(P)
        for w in range(P.shape[0]):
            rho = chain.spectral_radius_killed(P, inst.pi, w)
            worst = max(worst, rho - bound)
            cases += 1
    return CheckResult("killed_radius_bound", cases, worst, TOLERANCE)


def check_two_target_contraction(instances) -> CheckResult:
    """||D_x P D_y f||^2 <= rho(D_x P D_x) rho(D_y P D_y) ||f||^2, lazy P."""
    worst, cases = -math.inf, 0
    for inst in instances:
        P = inst.matrices[0]
        n = P.shape[0]
        rng = np.random.default_rng(int(inst.targets[0]) + 101)
        for f in inst.vectors[:5]:
            x, y = (int(v) for v in rng.integers(0, n, size=2))
            g = f.copy()
            g[y] = 0.0          # D_y f
            h = P @ g
            h[x] = 0.0          # D_x P D_y f
            lhs = float(np.sum(inst.pi * h * h))
            rho = (chain.spectral_radius_killed(P, inst.pi, x)
                   * chain.spectral_radius_killed(P, inst.pi, y))
            rhs = rho * float(np.sum(inst.pi * f * f))
            worst = max(worst, lhs - rhs)
            cases += 1
    return CheckResult("two_target_contraction", cases, worst, TOLERANCE)


def check_hitting_sandwich(instances) -> CheckResult:
    """1/(1 - lambda_2) <= t_hit <= 2/(pi_min (1 - lambda_2))."""
    worst, cases = -math.inf, 0
    for inst in instances:
        P = inst.matrices[0]
        spec = chain.spectrum(P, inst.pi)
        th = chain.t_hit(P)
        lo = 1.0 / (1.0 - spec.lambda2)
        hi = 2.0 / (inst.pi.min() * (1.0 - spec.lambda2))
        worst = max(worst, lo - th, th - hi)
        cases += 1
    return CheckResult("hitting_sandwich", cases, worst, TOLERANCE)


def check_cheeger_sandwich(instances) -> CheckResult:
    """Phi^2/2 <= 1 - lambda_star <= 2 Phi for lazy reversible chains."""
    worst, cases = -math.inf, 0
    for inst in instances:
        P = inst.matrices[0]
        gap = 1.0 - chain.spectrum(P, inst.pi).lambda_star
        phi = chain.conductance(P, inst.pi)
        worst = max(worst, phi**2 / 2 - gap, gap - 2 * phi)
        cases += 1
    return CheckResult("cheeger_sandwich", cases, worst, TOLERANCE)


def check_lp_monotonicity(instances) -> CheckResult:
    """d^(1) <= d^(2) <= d^(inf) over random measure pairs."""
    worst, cases = -math.inf, 0
    for inst in instances:
        for mu in inst.measures:
            d1 = chain.lp_distance(mu, inst.pi, 1)
            d2 = chain.lp_distance(mu, inst.pi, 2)
            dinf = chain.lp_distance(mu, inst.pi, math.inf)
            worst = max(worst, d1 - d2, d2 - dinf)
            cases += 1
    return CheckResult("lp_monotonicity", cases, worst, TOLERANCE)


def check_l2_to_uniform(instances) -> CheckResult:
    """|P_[1,2T](u,v)/pi(v) - 1| <= d2(row of P_[1,T]) d2(row of reversed tail).

    The second factor takes rows of P_2T P_2T-1 ... P_T+1, the reversed-order
    product the two-sided bound contracts through.
    """
    worst, cases = -math.inf, 0
    for inst in instances:
        T = len(inst.matrices)
        front = product(inst.schedule, 1, T)
        full = front @ product(inst.schedule, T + 1, 2 * T)
        back = reversed_product(inst.schedule, T + 1, 2 * T)
        for u in range(inst.schedule.n):
            for v in range(inst.schedule.n):
                lhs = abs(full[u, v] / inst.pi[v] - 1.0)
                rhs = (chain.lp_distance(front[u], inst.pi, 2)
                       * chain.lp_distance(back[v], inst.pi, 2))
                worst = max(worst, lhs - rhs)
                cases += 1
    return CheckResult("l2_to_uniform", cases, worst, TOLERANCE)


def check_survival_product_bound(instances) -> CheckResult:
    """Pi-started survival: Pr[avoid w through T] <= prod_t (1 - 1/t_hit(P_t)).

    Constant target; laziness plays no role here.
    """
    worst, cases = -math.inf, 0
    for inst in instances:
        T = len(inst.matrices)
        rhs = math.prod(1.0 - 1.0 / chain.t_hit(P) for P in inst.matrices)
        for w in range(inst.schedule.n):
            lhs = non_hit_probability(inst.schedule, inst.pi, [w] * (T + 1))
            worst = max(worst, lhs - rhs)
            cases += 1
    return CheckResult("survival_product_bound", cases, worst, TOLERANCE)


def check_moving_target_survival_bound(instances) -> CheckResult:
    """Same product bound against a time-varying target, lazy schedules only."""
    worst, cases = -math.inf, 0
    for inst in instances:
        T = len(inst.matrices)
        rhs = math.prod(1.0 - 1.0 / chain.t_hit(P) for P in inst.matrices)
        lhs = non_hit_probability(inst.schedule, inst.pi, list(inst.targets[:T + 1]))
        worst = max(worst, lhs - rhs)
        cases += 1
    return CheckResult("moving_target_survival_bound", cases, worst, TOLERANCE)


ALL_CHECKS = [
    check_contraction_orthogonal,
    check_l2_product_decay,
    check_variance_dirichlet_decrease,
    check_dirichlet_hitting_bound,
    check_killed_radius_bound,
    check_two_target_contraction,
    check_hitting_sandwich,
    check_cheeger_sandwich,
    check_lp_monotonicity,
    check_l2_to_uniform,
    check_survival_product_bound,
    check_moving_target_survival_bound,
]


def run_suite(seed: int, chains: int = 200, vectors: int = 20,
              n_lo: int = 3, n_hi: int = 8) -> list[CheckResult]:
    """Evaluate every inequality over one shared pool of seeded instances."""
    instances = make_instances(seed, chains, vectors, n_lo, n_hi)
    return [check(instances) for check in ALL_CHECKS]
