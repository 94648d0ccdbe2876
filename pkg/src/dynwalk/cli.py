"""Experiment driver: config parsing, seed management, result emission.

Each subcommand runs one experiment kind against a JSON config (an
ExperimentSpec), writes ``<out>.csv`` with a JSON mirror and a rendered
figure next to it, and prints a short summary.  Seeds default to a fixed
constant so repeated runs are reproducible; ``--seed`` overrides.  Exit
codes: 0 success, 1 failed verification, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import chain, edge_markovian as em, graphs, properties, report, voting
from .chain import ChainError
from .schedule import (ChainSchedule, random_reversible_schedule,
                       schedule_from_json, schedule_summary)
from .sim import (simulate_coalesce, simulate_cover, simulate_hit,
                  simulate_meet)

DEFAULT_SEED = 1729

ESTIMATE_COLUMNS = ["experiment_id", "n", "k", "trials", "mean", "std_err",
                    "ci_lo", "ci_hi", "censored"]

KINDS = ("spectra", "hit", "cover", "meet", "coalesce", "vote", "duality",
         "win-prob", "em-probe", "verify-lemmas")


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    kind: str
    parameters: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    output: str | None = None


def spec_from_json(obj) -> ExperimentSpec:
    if not isinstance(obj, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = set(obj) - {"id", "kind", "parameters", "seed", "output"}
    if unknown:
        raise ConfigError(f"config: unknown fields {sorted(unknown)}")
    for name in ("id", "kind"):
        if name not in obj or not isinstance(obj[name], str):
            raise ConfigError(f"config.{name}: required string")
    if obj["kind"] not in KINDS:
        raise ConfigError(f"config.kind: unknown kind {obj['kind']!r}; have {KINDS}")
    params = obj.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("config.parameters: expected an object")
    seed = obj.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("config.seed: expected a nonnegative integer")
    output = obj.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("config.output: expected a string path")
    return ExperimentSpec(id=obj["id"], kind=obj["kind"], parameters=params,
                          seed=seed, output=output)


def spec_to_json(spec: ExperimentSpec) -> dict:
    out = {"id": spec.id, "kind": spec.kind, "parameters": spec.parameters,
           "seed": spec.seed}
    if spec.output is not None:
        out["output"] = spec.output
    return out


def _param(params: dict, name: str, default=None, required: bool = False):
    if name not in params:
        if required:
            raise ConfigError(f"parameters.{name}: required")
        return default
    return params[name]


def _check_params(params: dict, allowed: set) -> None:
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"parameters: unknown fields {sorted(unknown)}")


# ---------------------------------------------------------------------------
# Schedule descriptors (reproducible from config alone).
# ---------------------------------------------------------------------------

def _build_graph(desc) -> graphs.GraphSnapshot:
    if not isinstance(desc, dict):
        raise ConfigError("graph: expected an object")
    if "name" in desc:
        if set(desc) - {"name", "n"}:
            raise ConfigError("graph: a named graph takes only 'name' and 'n'")
        return graphs.standard_graph(desc["name"], int(desc["n"]))
    return graphs.graph_from_json(desc)


def build_schedule(desc, default_seed: int):
    """Instantiate (schedule, guaranteed common stationary vector or None)."""
    if not isinstance(desc, dict) or "construction" not in desc:
        raise ConfigError("schedule: expected an object with 'construction'")
    c = desc["construction"]
    seed = int(desc.get("seed", default_seed))
    if c == "graph":
        G = _build_graph(desc.get("graph", {}))
        kernel = desc.get("kernel", "lazy_simple")
        sched = ChainSchedule.static(graphs.KERNELS[kernel](G))
        return sched, graphs.kernel_stationary(kernel, G)
    if c == "graphs":
        kernel = desc.get("kernel", "lazy_simple")
        snaps = [_build_graph(g) for g in desc.get("graphs", [])]
        if not snaps:
            raise ConfigError("schedule.graphs: need at least one graph")
        sched = ChainSchedule.cyclic([graphs.KERNELS[kernel](G) for G in snaps])
        pis = [graphs.kernel_stationary(kernel, G) for G in snaps]
        pi = pis[0] if all(np.allclose(p, pis[0]) for p in pis) else None
        return sched, pi
    if c == "sisyphus":
        dyn = graphs.sisyphus_schedule(int(desc["n"]), desc.get("kernel", "lazy_simple"))
        return dyn.chain_schedule(), dyn.stationary()
    if c == "double_star":
        _, perm = graphs.ot_double_star(int(desc["m"]))
        dyn = perm.dynamic_schedule(desc.get("kernel", "lazy_simple"))
        return dyn.chain_schedule(), dyn.stationary()
    if c == "random_reversible":
        sched, pi = random_reversible_schedule(
            int(desc["n"]), int(desc.get("length", 3)), seed,
            lazy=bool(desc.get("lazy", True)))
        return sched, pi
    if c == "random_metropolis":
        rng = np.random.default_rng(seed)
        n = int(desc["n"])
        snaps = [graphs.random_connected_graph(n, rng, float(desc.get("edge_prob", 0.4)))
                 for _ in range(int(desc.get("length", 3)))]
        sched = ChainSchedule.cyclic([graphs.lazy_metropolis_kernel(G) for G in snaps])
        return sched, np.full(n, 1.0 / n)
    if c == "matrices":
        inner = {k: v for k, v in desc.items() if k != "construction"}
        sched = schedule_from_json(inner)
        return sched, None
    if c == "file":
        from .schedule import load_schedule
        sched = load_schedule(desc["path"])
        return sched, None
    if c == "edge_markovian":
        params = em.EdgeMarkovianParams(n=int(desc["n"]), p=float(desc["p"]),
                                        q=float(desc["q"]), seed=seed)
        b0 = em.initial_states(params, desc.get("b0", "empty"))
        sched = em.metropolis_schedule(params, b0, int(desc["horizon"]))
        return sched, np.full(params.n, 1.0 / params.n)
    raise ConfigError(f"schedule.construction: unknown construction {c!r}")


def _resolve_pi(schedule: ChainSchedule, pi):
    if pi is not None:
        return pi
    P1 = schedule.matrix(1)
    if chain.is_irreducible(P1):
        return chain.stationary(P1)
    return np.full(schedule.n, 1.0 / schedule.n)


def _parse_opinions(raw, n: int) -> np.ndarray:
    if raw == "distinct" or raw is None:
        return np.arange(n)
    if isinstance(raw, str):          # path to a JSON vertex -> opinion map
        with open(raw) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("opinion file: expected a vertex -> opinion map")
    if isinstance(raw, dict):
        ops = np.full(n, -1, dtype=int)
        for key, val in raw.items():
            v = int(key)
            if not 0 <= v < n:
                raise ConfigError(f"parameters.opinions: vertex {v} out of range")
            ops[v] = int(val)
        if (ops < 0).any():
            raise ConfigError("parameters.opinions: every vertex needs an opinion")
        return ops
    if isinstance(raw, list):
        if len(raw) != n:
            raise ConfigError(f"parameters.opinions: expected {n} entries")
        return np.asarray(raw, dtype=int)
    raise ConfigError("parameters.opinions: map, list, or \"distinct\"")


# ---------------------------------------------------------------------------
# Experiment runners.  Each returns (header, rows, plot_kind, summary lines).
# ---------------------------------------------------------------------------

def _estimate_row(spec, n, k, rep):
    return [spec.id, n, k, rep.trials, rep.mean, rep.std_err,
            rep.ci_lo, rep.ci_hi, rep.censored_count]


def run_spectra(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"schedule", "eps", "t_max"})
    sched, pi = build_schedule(_param(p, "schedule", required=True), spec.seed)
    pi = _resolve_pi(sched, pi)
    eps = float(_param(p, "eps", 0.5))
    t_max = int(_param(p, "t_max", 2000))
    rows = []
    for t, P in enumerate(sched.distinct_matrices(), start=1):
        if chain.is_irreducible(P):
            pi_own = chain.stationary(P)
            if chain.is_reversible(P, pi_own):
                s = chain.spectrum(P, pi_own)
                lam2, lam_star, trel = s.lambda2, s.lambda_star, s.t_rel
            else:
                mags = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
                lam2, lam_star = float(mags[1]), float(mags[1])
                trel = chain.relaxation_time(lam_star)
            th = chain.t_hit(P)
        else:
            mags = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
            lam2 = lam_star = float(mags[1]) if len(mags) > 1 else 1.0
            trel, th = math.inf, math.inf
        rows.append([t, lam2, lam_star, trel, th])
    summary = schedule_summary(sched, pi, eps, t_max)
    lines = [f"t_HIT={summary.t_HIT} t_REL={summary.t_REL} "
             f"t_sep={summary.t_sep} t_mix_inf={summary.t_mix_inf} (eps={eps})"]
    return (["t", "lambda2", "lambda_star", "t_rel", "t_hit"], rows, "spectra", lines)


def run_hit(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"schedule", "starts", "k", "start_law", "target",
                      "horizon", "trials"})
    sched, pi = build_schedule(_param(p, "schedule", required=True), spec.seed)
    target = int(_param(p, "target", required=True))
    horizon = int(_param(p, "horizon", required=True))
    trials = int(_param(p, "trials", required=True))
    if _param(p, "start_law") == "stationary":
        law = _resolve_pi(sched, pi)
        k = int(_param(p, "k", 1))
        rep = simulate_hit(sched, None, target, horizon, trials, spec.seed,
                           start_law=law, k=k, threads=threads)
    else:
        starts = [int(v) for v in _param(p, "starts", required=True)]
        k = len(starts)
        rep = simulate_hit(sched, starts, target, horizon, trials, spec.seed,
                           threads=threads)
    rows = [_estimate_row(spec, sched.n, k, rep)]
    return (ESTIMATE_COLUMNS, rows, "estimates",
            [f"mean={rep.mean:.6g} +- {1.96 * rep.std_err:.3g} censored={rep.censored_count}"])


def run_cover(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"schedule", "starts", "horizon", "trials"})
    sched, _pi = build_schedule(_param(p, "schedule", required=True), spec.seed)
    starts = [int(v) for v in _param(p, "starts", required=True)]
    rep = simulate_cover(sched, starts, int(p["horizon"]), int(p["trials"]),
                         spec.seed, threads=threads)
    return (ESTIMATE_COLUMNS, [_estimate_row(spec, sched.n, len(starts), rep)],
            "estimates", [f"mean={rep.mean:.6g} censored={rep.censored_count}"])


def run_meet(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"schedule", "starts", "horizon", "trials"})
    sched, _pi = build_schedule(_param(p, "schedule", required=True), spec.seed)
    starts = [int(v) for v in _param(p, "starts", required=True)]
    rep = simulate_meet(sched, starts, int(p["horizon"]), int(p["trials"]),
                        spec.seed, threads=threads)
    return (ESTIMATE_COLUMNS, [_estimate_row(spec, sched.n, 2, rep)],
            "estimates", [f"mean={rep.mean:.6g} censored={rep.censored_count}"])


def run_coalesce(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"schedule", "horizon", "trials"})
    sched, _pi = build_schedule(_param(p, "schedule", required=True), spec.seed)
    rep = simulate_coalesce(sched, int(p["horizon"]), int(p["trials"]),
                            spec.seed, threads=threads)
    return (ESTIMATE_COLUMNS, [_estimate_row(spec, sched.n, sched.n, rep)],
            "estimates", [f"mean={rep.mean:.6g} censored={rep.censored_count}"])


def run_vote(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"schedule", "opinions", "horizon", "trials"})
    sched, _pi = build_schedule(_param(p, "schedule", required=True), spec.seed)
    opinions = _parse_opinions(_param(p, "opinions"), sched.n)
    rep = voting.simulate_consensus(sched, opinions, int(p["horizon"]),
                                    int(p["trials"]), spec.seed, threads=threads)
    return (ESTIMATE_COLUMNS, [_estimate_row(spec, sched.n, sched.n, rep)],
            "estimates", [f"mean={rep.mean:.6g} censored={rep.censored_count}"])


def run_win_prob(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"schedule", "opinions", "sigma", "horizon", "trials"})
    sched, pi = build_schedule(_param(p, "schedule", required=True), spec.seed)
    opinions = _parse_opinions(_param(p, "opinions", required=True), sched.n)
    sigma = int(_param(p, "sigma", required=True))
    rep = voting.winning_probability(
        sched, opinions, sigma, int(p["trials"]), spec.seed,
        horizon=int(_param(p, "horizon", 100_000)), threads=threads)
    pi = _resolve_pi(sched, pi)
    target = float(pi[np.asarray(opinions) == sigma].sum())
    lines = [f"win frequency {rep.mean:.6g} (target sum_pi={target:.6g})"]
    return (ESTIMATE_COLUMNS, [_estimate_row(spec, sched.n, sched.n, rep)],
            "estimates", lines)


def run_duality(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"schedule", "j"})
    sched, _pi = build_schedule(_param(p, "schedule", required=True), spec.seed)
    js = _param(p, "j", required=True)
    if isinstance(js, int):
        js = [js]
    rows = []
    for j in js:
        lhs, rhs, diff = voting.duality_check(sched, int(j))
        rows.append([int(j), lhs, rhs, diff])
    worst = max(row[3] for row in rows)
    return (["j", "lhs_consensus", "rhs_coalescence", "abs_diff"], rows,
            "duality", [f"max |lhs-rhs| = {worst:.3e}"])


def run_em_probe(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"n", "p", "q", "samples", "j", "b0", "c"})
    params = em.EdgeMarkovianParams(
        n=int(_param(p, "n", required=True)), p=float(_param(p, "p", required=True)),
        q=float(_param(p, "q", required=True)), seed=spec.seed)
    plan = em.interval_plan(params, J=int(_param(p, "j", 1)))
    b0 = em.initial_states(params, _param(p, "b0", "empty"))
    rep = em.expander_probe(params, b0, plan, int(_param(p, "samples", 50)),
                            c=float(_param(p, "c", 1.0)))
    rows = [[r.t, int(r.connected), r.lambda_star, r.t_rel, int(r.leq_C)]
            for r in rep.rows]
    lines = [f"fraction(t_rel <= {rep.C:g}) = {rep.fraction_within():.4f} "
             f"over {len(rep.rows)} samples; in_regime={rep.in_regime} "
             f"(I={plan.I}, J={plan.J})"]
    return (["t", "connected", "lambda_star", "t_rel", "leq_C"], rows, "probe", lines)


def run_verify_lemmas(spec: ExperimentSpec, threads: int):
    p = spec.parameters
    _check_params(p, {"chains", "vectors", "n_lo", "n_hi"})
    results = properties.run_suite(
        spec.seed, chains=int(_param(p, "chains", 200)),
        vectors=int(_param(p, "vectors", 20)),
        n_lo=int(_param(p, "n_lo", 3)), n_hi=int(_param(p, "n_hi", 8)))
    rows = [[r.name, r.cases, r.max_violation, r.tolerance, int(r.passed)]
            for r in results]
    lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.name:34s} "
             f"cases={r.cases:<6d} worst={r.max_violation:.3e}"
             for r in results]
    ok = all(r.passed for r in results)
    lines.append("all checks passed" if ok else "SOME CHECKS FAILED")
    return (["check", "cases", "max_violation", "tolerance", "passed"],
            rows, "checks", lines)


RUNNERS = {
    "spectra": run_spectra,
    "hit": run_hit,
    "cover": run_cover,
    "meet": run_meet,
    "coalesce": run_coalesce,
    "vote": run_vote,
    "win-prob": run_win_prob,
    "duality": run_duality,
    "em-probe": run_em_probe,
    "verify-lemmas": run_verify_lemmas,
}


def run(spec: ExperimentSpec, out: str | None = None, threads: int = 1,
        plot: bool = True) -> int:
    """Execute one experiment spec; returns the process exit code."""
    header, rows, plot_kind, lines = RUNNERS[spec.kind](spec, threads)
    prefix = out or spec.output or f"results/{spec.id}"
    paths = report.emit(prefix, header, rows, plot_kind if plot else None,
                        title=spec.id)
    for line in lines:
        print(line)
    for path in paths:
        print(f"wrote {path}")
    if spec.kind == "verify-lemmas" and any(row[-1] == 0 for row in rows):
        return 1
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------

def _load_spec(args, kind: str) -> ExperimentSpec:
    if args.config:
        with open(args.config) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config: not valid JSON ({exc})") from exc
        spec = spec_from_json(obj)
        if spec.kind != kind:
            raise ConfigError(f"config.kind: {spec.kind!r} does not match "
                              f"subcommand {kind!r}")
    else:
        spec = ExperimentSpec(id=kind, kind=kind)
    if args.seed is not None:
        spec = ExperimentSpec(id=spec.id, kind=spec.kind, parameters=spec.parameters,
                              seed=args.seed, output=spec.output)
    return spec


def _add_common(sub, config_required=True):
    sub.add_argument("--config", required=config_required,
                     help="experiment spec JSON "
                          "{id, kind, parameters, seed, output}")
    sub.add_argument("--seed", type=int, default=None,
                     help=f"override the config seed (default {DEFAULT_SEED})")
    sub.add_argument("--threads", type=int, default=1,
                     help="trial-block worker pool size")
    sub.add_argument("--out", default=None, help="output path prefix")
    sub.add_argument("--no-plot", action="store_true",
                     help="skip the rendered figure")


SCHEMA_HELP = """\
output schemas (CSV columns; the JSON mirror carries the same rows):
  hit/cover/meet/coalesce/vote/win-prob:
      experiment_id,n,k,trials,mean,std_err,ci_lo,ci_hi,censored
  spectra:        t,lambda2,lambda_star,t_rel,t_hit
  vote duality:   j,lhs_consensus,rhs_coalescence,abs_diff
  em probe:       t,connected,lambda_star,t_rel,leq_C
  verify-lemmas:  check,cases,max_violation,tolerance,passed
"""


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dynwalk",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Random walks on dynamic graphs: exact quantities, "
                    "seeded simulation, and inequality verification. "
                    "Results land in <out>.csv with a JSON mirror and a "
                    "figure alongside.",
        epilog=SCHEMA_HELP)
    subs = ap.add_subparsers(dest="command", required=True)

    for name in ("spectra", "hit", "cover", "meet", "coalesce"):
        _add_common(subs.add_parser(name, help=f"run a {name} experiment"))

    vote = subs.add_parser("vote", help="pull-voting experiments")
    vsubs = vote.add_subparsers(dest="vote_command", required=True)
    _add_common(vsubs.add_parser("sim", help="consensus-time simulation"))
    _add_common(vsubs.add_parser("win-prob", help="winning-probability estimate"))
    _add_common(vsubs.add_parser("duality", help="exact consensus/coalescence identity"))

    emp = subs.add_parser("em", help="edge-Markovian experiments")
    esubs = emp.add_subparsers(dest="em_command", required=True)
    probe = esubs.add_parser("probe", help="relaxation-time probe of snapshots")
    _add_common(probe, config_required=False)
    probe.add_argument("--n", type=int, help="vertex count")
    probe.add_argument("--p", type=float, help="edge birth probability")
    probe.add_argument("--q", type=float, help="edge death probability")
    probe.add_argument("--samples", type=int, default=None,
                       help="checkpoints to probe (default 50)")
    probe.add_argument("--j", type=int, default=None,
                       help="checkpoint spacing term J (default 1)")
    probe.add_argument("--b0", default=None,
                       choices=["empty", "complete", "stationary"],
                       help="initial edge states (default empty)")

    verify = subs.add_parser(
        "verify-lemmas",
        help="run every inequality check; nonzero exit on violation")
    _add_common(verify, config_required=False)
    verify.add_argument("--chains", type=int, default=None,
                        help="random chains to draw (default 200)")
    verify.add_argument("--vectors", type=int, default=None,
                        help="test vectors per chain (default 20)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "vote":
            kind = {"sim": "vote", "win-prob": "win-prob",
                    "duality": "duality"}[args.vote_command]
            spec = _load_spec(args, kind)
        elif args.command == "em":
            spec = _load_spec(args, "em-probe")
            params = dict(spec.parameters)
            for name in ("n", "p", "q", "samples", "j", "b0"):
                val = getattr(args, name)
                if val is not None:
                    params[name] = val
            spec = ExperimentSpec(id=spec.id, kind=spec.kind, parameters=params,
                                  seed=spec.seed, output=spec.output)
        elif args.command == "verify-lemmas":
            spec = _load_spec(args, "verify-lemmas")
            params = dict(spec.parameters)
            if args.chains is not None:
                params["chains"] = args.chains
            if args.vectors is not None:
                params["vectors"] = args.vectors
            spec = ExperimentSpec(id=spec.id, kind=spec.kind, parameters=params,
                                  seed=spec.seed, output=spec.output)
        else:
            spec = _load_spec(args, args.command)
        return run(spec, out=args.out, threads=max(1, args.threads),
                   plot=not args.no_plot)
    except (ConfigError, ChainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
