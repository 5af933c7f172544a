"""Command line: ``votes``, ``certify``, ``compare`` and ``selftest``.

Exit codes: 0 success, 2 input error, 3 solver or numeric failure, 4 selftest failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .certify import (CertProblem, ExactLimits, LimitExceeded, SolverFailure, certify_collective)
from .classifier import DimensionError, ForwardPassModel, SyntheticClassifier
from .graph import GraphError, InputFormatError, ThreatModel, read_edge_list, read_matrix
from .smoothing import GENERATOR_ID, SmoothingParams
from .votes import default_threads, estimate_votes, gaps_from_votes, read_gaps_csv, write_gaps_csv

log = logging.getLogger("giacert")

SCHEMA_VERSION = 1
DESK_SAMPLES = 10_000
REFERENCE_SAMPLES = 100_000
EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_SELFTEST = 0, 2, 3, 4
COMPARE_HEADER = ["rho", "samplewise_ratio", "lp1_ratio", "lp2_ratio", "lp1_runtime", "lp2_runtime"]


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# helpers

def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_graph(args):
    n = args.num_nodes
    if n is None and getattr(args, "features", None):
        n = read_matrix(args.features).shape[0]
    g = read_edge_list(args.graph, n)
    feats = read_matrix(args.features) if getattr(args, "features", None) else None
    labels = None
    if getattr(args, "labels", None):
        labels = read_matrix(args.labels).astype(np.int64).ravel()
    if feats is not None or labels is not None:
        g = type(g)(g.n, g.edges, feats, labels)
    return g


def _params(args, meta):
    p_e = args.p_e if args.p_e is not None else meta.get("p_e")
    p_n = args.p_n if args.p_n is not None else meta.get("p_n")
    if p_e is None or p_n is None:
        raise UsageError("smoothing parameters missing: pass --p-e/--p-n or use a gaps file that records them")
    return SmoothingParams(float(p_e), float(p_n))


def _select_targets(spec: str, g, gaps, seed: int) -> np.ndarray:
    if spec == "all":
        return np.arange(g.n)
    if spec == "all-correct" or spec.startswith("random-"):
        pool = np.arange(g.n)
        if g.labels is not None:
            pool = np.flatnonzero(gaps.y_star == g.labels)
        elif spec == "all-correct":
            raise UsageError("--targets all-correct needs --labels")
        if spec == "all-correct":
            return pool
        try:
            k = int(spec[len("random-"):])
        except ValueError:
            raise UsageError(f"bad target mode {spec!r}; use random-<count>") from None
        if k > pool.size:
            raise UsageError(f"asked for {k} random targets but only {pool.size} are eligible")
        return np.sort(np.random.default_rng(seed).choice(pool, size=k, replace=False))
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"targets file {spec} not found (modes: all, all-correct, random-<k>, or a path)")
    ids = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            for tok in line.replace(",", " ").split():
                try:
                    ids.append(int(tok))
                except ValueError:
                    raise InputFormatError(f"{path}:{lineno}: bad node id {tok!r}") from None
    return np.asarray(ids, dtype=np.int64)


def _samples_note(meta):
    N = meta.get("N")
    return {"N": N, "desk_default": DESK_SAMPLES, "reference_setting": REFERENCE_SAMPLES,
            "note": f"gaps estimated from N={N} samples; the reference setting uses N={REFERENCE_SAMPLES}"}


def _report_dict(rep, args, deterministic):
    d = rep.to_dict()
    if deterministic:
        d["runtime_ms"] = 0.0
    d["rng"] = {"seed": args.seed, "generator_id": GENERATOR_ID}
    return d


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# --------------------------------------------------------------------------
# subcommands

def cmd_votes(args) -> int:
    g = _load_graph(args)
    if args.weights:
        if g.features is None:
            raise UsageError("--weights needs a --features file")
        model = ForwardPassModel.from_file(args.weights)
    elif args.synthetic:
        model = SyntheticClassifier(args.synthetic, args.k)
    else:
        raise UsageError("pick a classifier: --weights (with --features) or --synthetic K")
    params = SmoothingParams(args.p_e, args.p_n)
    if args.samples < REFERENCE_SAMPLES:
        log.warning("using N=%d samples (desk scale); the reference setting is N=%d", args.samples, REFERENCE_SAMPLES)
    stats = estimate_votes(g, model, params, args.samples, args.seed, args.alpha, args.threads)
    gaps = gaps_from_votes(stats)
    gaps.meta.update(p_e=params.p_e, p_n=params.p_n, seed=args.seed, generator=GENERATOR_ID)
    write_gaps_csv(args.out, gaps)
    log.info("wrote %s (%d nodes, %d with positive gap)", args.out, gaps.n, int((gaps.c > 0).sum()))
    return EXIT_OK


def _problem(args):
    g = _load_graph(args)
    gaps = read_gaps_csv(args.gaps)
    if gaps.n != g.n:
        raise UsageError(f"gaps file covers {gaps.n} nodes but the graph has {g.n}")
    params = _params(args, gaps.meta)
    targets = _select_targets(args.targets, g, gaps, args.target_seed)
    return g, gaps, params, targets


def cmd_certify(args) -> int:
    g, gaps, params, targets = _problem(args)
    limits = ExactLimits(args.max_exact_rho, args.max_exact_slots)
    rhos = args.sweep if args.sweep else [args.rho]
    reports, code = [], EXIT_OK
    for rho in rhos:
        prob = CertProblem(g, ThreatModel(rho, args.tau, args.k), gaps, targets, params, args.method)
        try:
            rep = certify_collective(prob, limits)
            reports.append(_report_dict(rep, args, args.deterministic))
        except SolverFailure as exc:
            log.error("rho=%d: %s", rho, exc)
            reports.append({"method": args.method, "rho": rho, "tau": args.tau, "status": "solver-failure",
                            "error": str(exc), "diagnostics": exc.diagnostics})
            code = EXIT_SOLVER
    out = {"schema_version": SCHEMA_VERSION, "tool_version": __version__,
           "samples": _samples_note(gaps.meta), "gaps_meta": gaps.meta, "reports": reports}
    _write_json(args.out, out)
    if args.per_node_csv:
        with open(args.per_node_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "method", "rho", "robust_flag"])
            for r in reports:
                for item in r.get("per_node", []):
                    w.writerow([item["id"], r["method"], r["rho"], int(item["robust_flag"])])
    return code


def cmd_compare(args) -> int:
    g, gaps, params, targets = _problem(args)
    rows = []
    for rho in args.sweep:
        row = {"rho": rho}
        for method in ("samplewise", "lp1", "lp2"):
            prob = CertProblem(g, ThreatModel(rho, args.tau, args.k), gaps, targets, params, method)
            t0 = time.perf_counter()
            try:
                rep = certify_collective(prob)
            except SolverFailure as exc:
                log.error("rho=%d %s: %s", rho, method, exc)
                return EXIT_SOLVER
            elapsed = 0.0 if args.deterministic else round(1000 * (time.perf_counter() - t0), 3)
            row[f"{method}_ratio"] = repr(rep.certified_ratio)
            if method != "samplewise":
                row[f"{method}_runtime"] = elapsed
        rows.append(row)
    fh = open(args.out, "w", newline="") if args.out not in (None, "-") else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=COMPARE_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .oracle import run_battery
    t0 = time.perf_counter()
    res = run_battery(args.count, args.seed, inject_violation=args.inject_violation)
    status = "PASS" if res.ok else "FAIL"
    print(f"selftest {status}: {res.instances} instances, {res.checks} checks, "
          f"{len(res.violations)} violations, {time.perf_counter() - t0:.1f}s")
    for v in res.violations[:20]:
        print(f"  violation: {v}")
    return EXIT_OK if res.ok else EXIT_SELFTEST


# --------------------------------------------------------------------------
# parser

def _add_graph_args(p):
    p.add_argument("--graph", required=True, help="edge list, one 'u,v' per line")
    p.add_argument("--num-nodes", type=int, help="node count (default: from '# n=' header, features, or max id)")
    p.add_argument("--features", help="feature matrix file ('n d' header)")
    p.add_argument("--labels", help="label file ('n 1' header)")


def _add_cert_args(p):
    _add_graph_args(p)
    p.add_argument("--gaps", required=True, help="gaps CSV written by 'votes'")
    p.add_argument("--targets", default="all", help="ids file, 'all', 'all-correct' or 'random-<k>'")
    p.add_argument("--target-seed", type=int, default=0)
    p.add_argument("--p-e", type=float, help="edge deletion rate (default: from gaps metadata)")
    p.add_argument("--p-n", type=float, help="node deletion rate (default: from gaps metadata)")
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("-k", "--k", type=int, default=2)
    p.add_argument("--seed", type=int, default=0, help="recorded in the report")
    p.add_argument("--deterministic", action="store_true", help="zero out wall-clock fields")
    p.add_argument("--out", default="-")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="giacert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--threads", type=int, default=None, help="worker cap (default: $GIACERT_THREADS or 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("votes", help="Monte Carlo votes -> gaps CSV")
    _add_graph_args(p)
    p.add_argument("--weights", help="per-layer weight blocks for the convolutional model")
    p.add_argument("--synthetic", type=int, metavar="K", help="use the synthetic K-class classifier")
    p.add_argument("--p-e", type=float, required=True)
    p.add_argument("--p-n", type=float, required=True)
    p.add_argument("-k", "--k", type=int, default=2, help="synthetic classifier depth")
    p.add_argument("-N", "--samples", type=int, default=DESK_SAMPLES)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_votes)

    p = sub.add_parser("certify", help="collective or sample-wise certificate report (JSON)")
    _add_cert_args(p)
    p.add_argument("--method", choices=("exact", "lp1", "lp2", "samplewise"), default="lp2")
    p.add_argument("--rho", type=int, default=0)
    p.add_argument("--sweep", type=_int_list, help="comma-separated rho values (overrides --rho)")
    p.add_argument("--per-node-csv")
    p.add_argument("--max-exact-rho", type=int, default=ExactLimits.max_rho)
    p.add_argument("--max-exact-slots", type=int, default=ExactLimits.max_slots)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("compare", help="certified ratios of all methods along a rho sweep (CSV)")
    _add_cert_args(p)
    p.add_argument("--sweep", type=_int_list, required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("selftest", help="oracle cross-validation battery")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-violation", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "threads", None) is None:
        args.threads = default_threads()
    try:
        return args.func(args)
    except (InputFormatError, GraphError, DimensionError, UsageError, LimitExceeded,
            FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except SolverFailure as exc:
        log.error("%s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
