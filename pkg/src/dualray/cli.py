"""Config-driven experiment harness.

Subcommands: ``run`` executes an algorithm matrix over seeds and writes one
trace CSV plus JSON sidecar per run and a summary table; ``check`` runs the
built-in property suite; ``table`` recomputes the summary from raw traces.
Exit codes: 0 success, 1 validation, 2 runtime failure, 3 property failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import checks, data, diagnostics, engine, rays, stepsize
from .errors import ConfigError, DomainError
from .model import problem_from_dict, problem_to_dict

TARGET_ACCURACY = 1e-5


# ---------------------------------------------------------------------------
# configuration

def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if "problem" not in cfg:
        raise ConfigError("config needs a 'problem' section")
    algs = cfg.get("algorithms")
    if not algs:
        raise ConfigError("config needs a non-empty 'algorithms' matrix")
    seeds = cfg.get("seeds", [0])
    if not seeds:
        raise ConfigError("config needs at least one seed")
    names = set()
    for alg in algs:
        if "variant" not in alg:
            raise ConfigError(f"algorithm entry missing 'variant': {alg}")
        if alg["variant"] not in ("standard", "fgor", "stochastic"):
            raise ConfigError(f"unknown variant {alg['variant']!r}")
        name = run_label(alg)
        for seed in seeds:
            key = f"{name}-s{seed}"
            if key in names:
                raise ConfigError(f"duplicate run name {key}")
            names.add(key)
        rule_cfg = dict(alg.get("rule", {"kind": "poly_sqrt_k", "gamma0": 1.0}))
        if rule_cfg.get("kind") == "polyak":
            rule_cfg.setdefault("g_star", 0.0)  # resolved per problem later
        stepsize.from_config(rule_cfg)


def run_label(alg):
    if "name" in alg:
        return alg["name"]
    rule = alg.get("rule", {})
    return f"{alg['variant']}-{rule.get('kind', 'default')}"


def build_problem(problem_cfg, seed):
    kind = problem_cfg.get("kind")
    if kind == "synth_quadratic":
        return data.synth_quadratic(
            problem_cfg["m"], problem_cfg["n"], problem_cfg.get("a", 1.0),
            seed, optimum=problem_cfg.get("optimum", "interior"))
    if kind == "mixed":
        return data.synth_mixed_nonconvex(
            problem_cfg["m"], problem_cfg["m_convex"], problem_cfg["n"],
            problem_cfg.get("a", 1.0), seed)
    if kind == "preset":
        return data.preset(problem_cfg["name"], problem_cfg["n"],
                           a=problem_cfg.get("a", 1.0))
    if kind == "json":
        with open(problem_cfg["path"]) as fh:
            return problem_from_dict(json.load(fh))
    if kind == "least_squares_csv":
        ds = data.load_csv(problem_cfg["csv_path"],
                           problem_cfg["target_column"],
                           bias=problem_cfg.get("bias", True),
                           header=problem_cfg.get("header", False))
        if problem_cfg.get("standardize", True):
            ds = data.standardize(ds)
        shards = data.partition_agents(ds, problem_cfg["m"])
        return data.constrain_regularized(shards, problem_cfg["d_bar"])
    raise ConfigError(f"unknown problem kind {kind!r}")


# ---------------------------------------------------------------------------
# reference values and initialization

def reference_g_star(problem, b=64):
    """Per-problem reference dual optimum.

    Convex instances: the primal oracle value (strong duality).  Otherwise
    the best dual value of a long warm-started run with the adaptive
    fallback (the dual is concave, so any convergent run certifies the
    value to tolerance).
    """
    convex = all(a.tag == "strictly-convex" for a in problem.agents)
    if convex:
        oracle = diagnostics.brute_force_primal(problem, method="dense-qp")
        return oracle.f_star, "oracle-dense-qp"
    ray = rays.build_consensus_ray(problem.m, problem.n, problem.box.radius)
    fallback = stepsize.StepsizeState(kind="adaptive_local", gamma0=1.0)
    trace = engine.run_fgor(problem, ray, fallback.gamma0, fallback,
                            K=6000, eps=1e-12, b=b)
    return trace.g_best, "long-run-best-dual"


def _reference_lambda(problem, b=64):
    """High-accuracy multiplier used as the center of the sphere init."""
    try:
        return diagnostics.interior_dual_optimum(problem)
    except DomainError:
        ray = rays.build_consensus_ray(problem.m, problem.n,
                                       problem.box.radius)
        fallback = stepsize.StepsizeState(kind="adaptive_local", gamma0=1.0)
        trace = engine.run_fgor(problem, ray, fallback.gamma0, fallback,
                                K=6000, eps=1e-12, b=b)
        return trace.lambda_best


def initial_lambda(problem, alg, seed, lam_ref):
    dim = (problem.m - 1) * problem.n
    mode = alg.get("init", "sphere")
    if mode == "zeros":
        return np.zeros(dim)
    if mode == "warm":
        ray = rays.build_consensus_ray(problem.m, problem.n,
                                       problem.box.radius,
                                       beta=alg.get("beta", 1.0),
                                       c=alg.get("c"))
        return ray.lambda0
    if mode == "sphere":
        # drawn uniformly on the sphere centered at the reference optimum
        # with radius ||mu_tilde - lambda_ref||
        ray = rays.build_consensus_ray(problem.m, problem.n,
                                       problem.box.radius)
        radius = float(np.linalg.norm(ray.mu_tilde - lam_ref))
        rng = np.random.default_rng((seed, 0xD0A1))
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        return lam_ref + radius * u
    raise ConfigError(f"unknown init mode {mode!r}")


# ---------------------------------------------------------------------------
# run execution

def execute_run(problem, alg, seed, g_star, lam_ref, b):
    rule_cfg = alg.get("rule", {"kind": "poly_sqrt_k", "gamma0": 1.0})
    rule_cfg = dict(rule_cfg)
    if rule_cfg.get("kind") == "polyak" and "g_star" not in rule_cfg:
        rule_cfg["g_star"] = g_star
    K = int(alg.get("K", 1000))
    eps = float(alg.get("eps", 0.0))
    variant = alg["variant"]
    meta = {"variant": variant, "rule": rule_cfg, "seed": seed,
            "m": problem.m, "n": problem.n,
            "box_radius": problem.box.radius, "name": run_label(alg)}
    if variant == "standard":
        rule = stepsize.from_config(rule_cfg)
        lam0 = initial_lambda(problem, alg, seed, lam_ref)
        return engine.run_standard(problem, rule, lam0, K, eps, b=b,
                                   config=meta)
    if variant == "fgor":
        rule = stepsize.from_config(rule_cfg)
        ray = rays.build_consensus_ray(problem.m, problem.n,
                                       problem.box.radius,
                                       beta=alg.get("beta", 1.0),
                                       c=alg.get("c"))
        gamma_const = float(alg.get("gamma_const", rule.gamma0))
        return engine.run_fgor(problem, ray, gamma_const, rule, K, eps, b=b,
                               config=meta)
    if variant == "stochastic":
        mode = alg.get("mode", "standard")
        n0 = int(alg["n0"])
        meta["mode"] = mode
        if mode == "standard":
            rule = stepsize.from_config(rule_cfg)
            lam0 = initial_lambda(problem, alg, seed, lam_ref)
            return engine.run_stochastic(problem, "standard", n0, seed,
                                         rule=rule, lam0=lam0, K=K, eps=eps,
                                         b=b, reference=alg.get("reference",
                                                                False),
                                         config=meta)
        rule = stepsize.from_config(rule_cfg)
        ray = rays.build_consensus_ray(problem.m, problem.n,
                                       problem.box.radius,
                                       beta=alg.get("beta", 1.0),
                                       c=alg.get("c"))
        gamma_const = float(alg.get("gamma_const", rule.gamma0))
        return engine.run_stochastic(problem, "fgor", n0, seed, ray=ray,
                                     gamma_const=gamma_const, fallback=rule,
                                     K=K, eps=eps, b=b,
                                     reference=alg.get("reference", False),
                                     config=meta)
    raise ConfigError(f"unknown variant {variant!r}")


def _run_task(args):
    cfg, alg, seed, out_dir, g_star, lam_ref = args
    problem = build_problem(cfg["problem"], seed)
    b = int(cfg.get("bits_per_real", 64))
    lam_ref = np.asarray(lam_ref, dtype=float) if lam_ref is not None else None
    trace = execute_run(problem, alg, seed, g_star, lam_ref, b)
    name = f"{run_label(alg)}-s{seed}"
    out = Path(out_dir)
    trace.to_csv(out / f"{name}.csv")
    trace.write_sidecar(out / f"{name}.json", g_star=g_star)
    return name, summarize(trace, g_star)


def summarize(trace, g_star, tol=TARGET_ACCURACY):
    k_star = trace.k_star(g_star, tol=tol)
    final_gap = abs(trace.records[-1].g_val - g_star) if trace.records else None
    return {
        "k_star": k_star if k_star is not None else f">{trace.k_total}",
        "k0": trace.k0,
        "bits": trace.bits_at(k_star) if k_star is not None
        else trace.bits_total,
        "final_gap": final_gap,
    }


def cmd_run(config_path, out_dir, jobs=1, verbose=False):
    cfg = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    b = int(cfg.get("bits_per_real", 64))
    seeds = cfg.get("seeds", [0])

    tasks = []
    ref_cache = {}
    for seed in seeds:
        problem = build_problem(cfg["problem"], seed)
        g_star, method = reference_g_star(problem, b=b)
        needs_sphere = any(a.get("init", "sphere") == "sphere"
                           and a["variant"] in ("standard", "stochastic")
                           for a in cfg["algorithms"])
        lam_ref = _reference_lambda(problem, b=b) if needs_sphere else None
        ref_cache[seed] = {"g_star": g_star, "method": method}
        for alg in cfg["algorithms"]:
            tasks.append((cfg, alg, seed,
                          str(out), g_star,
                          lam_ref.tolist() if lam_ref is not None else None))
        with open(out / f"problem-s{seed}.json", "w") as fh:
            json.dump(problem_to_dict(problem), fh, sort_keys=True)

    results = []
    failures = []
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = {ex.submit(_run_task, t): t for t in tasks}
            for fut in concurrent.futures.as_completed(futures):
                t = futures[fut]
                try:
                    results.append(fut.result())
                except engine.RunAborted as exc:
                    failures.append((f"{run_label(t[1])}-s{t[2]}", str(exc)))
    else:
        for t in tasks:
            try:
                results.append(_run_task(t))
            except engine.RunAborted as exc:
                failures.append((f"{run_label(t[1])}-s{t[2]}", str(exc)))

    results.sort(key=lambda r: r[0])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "k_star", "k0", "bits", "final_gap"])
        for name, summ in results:
            w.writerow([name, summ["k_star"], summ["k0"], summ["bits"],
                        repr(summ["final_gap"])])
    with open(out / "references.json", "w") as fh:
        json.dump({str(k): v for k, v in ref_cache.items()}, fh, indent=2,
                  sort_keys=True)
    if verbose:
        for name, summ in results:
            print(f"{name}: k*={summ['k_star']} k0={summ['k0']} "
                  f"bits={summ['bits']} gap={summ['final_gap']:.3e}")
    for name, msg in failures:
        print(f"FAILED {name}: {msg}", file=sys.stderr)
    return 2 if failures else 0


def cmd_table(out_dir, tol=TARGET_ACCURACY):
    out = Path(out_dir)
    rows = []
    for trace_path in sorted(out.glob("*.csv")):
        if trace_path.name in ("summary.csv", "table.csv"):
            continue
        if trace_path.stem.startswith("errprofile"):
            continue
        sidecar_path = trace_path.with_suffix(".json")
        if not sidecar_path.exists():
            continue
        side = engine.read_sidecar(sidecar_path)
        if "g_star" not in side:
            print(f"error: run {trace_path.stem} has no g_star reference",
                  file=sys.stderr)
            return 1
        records = engine.read_trace_csv(trace_path)
        g_star = side["g_star"]
        meta = side.get("config", {})
        m, n, b = meta.get("m"), meta.get("n"), meta.get("bits_per_real", 64)
        k_star = None
        for r in records:
            if abs(r.g_val - g_star) <= tol:
                k_star = r.k
                break
        k0 = sum(1 for r in records if r.in_rfgor)
        if k_star is None:
            k_disp, bits = f">{len(records)}", ""
        else:
            bits = records[k_star - 1].bits_cum
            if m is not None and n is not None:
                expected = engine.bits_formula_fgor(m, n, k_star, min(k0, k_star), b)
                if bits != expected:
                    print(f"error: ledger mismatch for {trace_path.stem}: "
                          f"recorded {bits}, formula {expected}",
                          file=sys.stderr)
                    return 2
            k_disp = k_star
        rows.append((trace_path.stem, k_disp, k0, bits))
    if not rows:
        print("error: no traces with sidecars found", file=sys.stderr)
        return 1
    widths = [max(len(str(r[i])) for r in rows + [("run", "k*", "k0", "b*")])
              for i in range(4)]
    header = ("run", "k*", "k0", "b*")
    print("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
    for r in rows:
        print("  ".join(str(v).ljust(widths[i]) for i, v in enumerate(r)))
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "k_star", "k0", "bits_at_accuracy"])
        for r in rows:
            w.writerow(r)
    return 0


def cmd_check(verbose=False, fault=None):
    results = checks.run_all(fault=fault)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        line = f"{status}  {res.name}"
        if verbose:
            line += f"  (margin {res.margin:+.3e}; {res.detail})"
        print(line)
        if not res.passed:
            failed += 1
    if failed:
        print(f"{failed} properties failed", file=sys.stderr)
        return 3
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="dualray",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment matrix")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--verbose", action="store_true")

    p_check = sub.add_parser("check", help="run the built-in property suite")
    p_check.add_argument("--verbose", action="store_true")
    p_check.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)

    p_table = sub.add_parser("table", help="recompute the summary from traces")
    p_table.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, jobs=args.jobs,
                           verbose=args.verbose)
        if args.command == "check":
            return cmd_check(verbose=args.verbose, fault=args.inject_fault)
        if args.command == "table":
            return cmd_table(args.out)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except engine.RunAborted as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
