"""Command line front end: ``fwgraph validate|simulate|verify|fw-trace|decompose``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from collections import Counter

from .config import (
    BACKENDS, ConfigError, RunConfig, boundary_to_json, dumps, load_config, trace_to_json,
)
from .fw import (
    FWError, StageError, assignments_equal, check_assignment, pipeline_trace, resolve_deltas,
)
from .graph import GraphError, Vertex, decompose, decomposition_to_json, peel_last, validate_graph
from .pipeline import construct_paper_pipeline
from .sampler import DirectProcess, SamplerError, Trajectory, check_epsilon, trajectory_csv
from .statcheck import (
    TestReport, backend_equivalence, exit_law_check, format_table, interval_exits, laplace_exit_check,
)

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class ValidationFailed(Exception):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def feasibility_problems(cfg: RunConfig) -> list[str]:
    """Graph, boundary data and delta / epsilon checks; empty when the configuration can run."""
    g = cfg.graph
    problems = list(validate_graph(g).violations)
    if problems:
        return problems
    problems.extend(check_assignment(cfg.boundary, g))
    if problems:
        return problems
    for v in cfg.run.delta:
        if v not in g.incidence:
            problems.append(f"run.delta: unknown vertex {v}")
    if problems:
        return problems
    deltas = resolve_deltas(g, cfg.run.delta)
    for v, d in deltas.items():
        if not 0 < d < g.min_incident_length(v):
            problems.append(f"vertex {v}: delta={d} must be positive and below every incident edge length")
    eps = cfg.run.epsilon
    if eps >= min(deltas.values()):
        problems.append(f"epsilon={eps} must be below every delta (smallest {min(deltas.values())})")
    try:
        check_epsilon(g, cfg.boundary, eps)
    except SamplerError as exc:
        problems.append(str(exc))
    return problems


def _load(args) -> RunConfig:
    cfg = load_config(args.config, exact=getattr(args, "exact_rational", False))
    r = cfg.run
    if args.backend is not None:
        r.backend = args.backend
    if args.paths is not None:
        r.paths = args.paths
    if args.seed is not None:
        r.seed = args.seed
    if args.epsilon is not None:
        r.epsilon = args.epsilon
    if args.horizon is not None:
        r.horizon = args.horizon
    if args.out is not None:
        r.out = args.out
    if args.workers is not None:
        r.workers = args.workers
    if r.paths < 1 or r.epsilon <= 0 or r.horizon < 0 or r.workers < 1:
        raise ConfigError("run", "paths, epsilon and workers must be positive, horizon non-negative")
    return cfg


def _require_valid(cfg: RunConfig) -> None:
    problems = feasibility_problems(cfg)
    if problems:
        raise ValidationFailed(problems)


def _require_seed(cfg: RunConfig) -> int:
    if cfg.run.seed is None:
        raise ConfigError("run.seed", "a seed is required (pass --seed or set run.seed)")
    return cfg.run.seed


def _processes(cfg: RunConfig) -> dict:
    backends = ("direct", "pipeline") if cfg.run.backend == "both" else (cfg.run.backend,)
    out = {}
    for b in backends:
        if b == "direct":
            out[b] = DirectProcess(cfg.graph, cfg.boundary, cfg.run.epsilon)
        else:
            out[b] = construct_paper_pipeline(cfg.graph, cfg.boundary, cfg.run.delta or None, cfg.run.epsilon)
    return out


BACKEND_KEY = {"direct": 0, "pipeline": 1}


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_validate(args) -> int:
    cfg = _load(args)
    problems = feasibility_problems(cfg)
    if problems:
        for p in problems:
            print(f"invalid: {p}")
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


class _PathRecord:
    def __call__(self, tr: Trajectory):
        return trajectory_csv(tr), Counter(e.kind for e in tr.events), tr.status, tr.events[-1].t


def cmd_simulate(args) -> int:
    from .statcheck import run_paths

    cfg = _load(args)
    _require_valid(cfg)
    seed = _require_seed(cfg)
    r = cfg.run
    out = r.out or "fwgraph-out"
    start = r.start if r.start is not None else Vertex(cfg.graph.vertices[0])
    procs = _processes(cfg)
    width = max(5, len(str(r.paths - 1)))
    manifest = {"seed": seed, "paths": r.paths, "backends": {}}
    for name, proc in procs.items():
        recs = run_paths(proc, start, r.horizon, r.paths, seed, reduce=_PathRecord(),
                         key=(BACKEND_KEY[name],), workers=r.workers)
        d = os.path.join(out, name)
        os.makedirs(d, exist_ok=True)
        files = []
        kinds: Counter = Counter()
        status: Counter = Counter()
        lifetimes = []
        for k, (csv, counts, st, t_end) in enumerate(recs):
            fn = f"path_{k:0{width}d}.csv"
            with open(os.path.join(d, fn), "w", encoding="utf-8", newline="") as fh:
                fh.write(csv)
            files.append(fn)
            kinds.update(counts)
            status[st] += 1
            if st == "killed":
                lifetimes.append(t_end)
        summary = {
            "backend": name, "paths": r.paths, "seed": seed, "horizon": r.horizon, "epsilon": r.epsilon,
            "start": str(start), "event_counts": dict(sorted(kinds.items())),
            "status_counts": dict(sorted(status.items())),
            "killed_fraction": status["killed"] / r.paths,
            "mean_lifetime": math.fsum(lifetimes) / len(lifetimes) if lifetimes else None,
        }
        with open(os.path.join(d, "summary.json"), "w", encoding="utf-8") as fh:
            fh.write(dumps(summary))
        manifest["backends"][name] = {"directory": name, "files": files, "summary": "summary.json"}
        print(f"{name}: {r.paths} paths -> {d}")
    if len(procs) > 1:
        manifest["pairs"] = [[os.path.join(b, manifest["backends"][b]["files"][k]) for b in procs]
                             for k in range(r.paths)]
        with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
            fh.write(dumps(manifest))
    return EXIT_OK


def verify_reports(cfg: RunConfig) -> list[TestReport]:
    """Exit laws at every vertex, interval Laplace functionals, backend equivalence and the trace loop."""
    g, r = cfg.graph, cfg.run
    seed = _require_seed(cfg)
    level = float(cfg.verify.get("level", 0.01))
    reference = cfg.reference or cfg.boundary
    procs = _processes(cfg)
    reports: list[TestReport] = []
    for name, proc in procs.items():
        key = (BACKEND_KEY[name],)
        # distinct streams per vertex and per edge keep the checks independent
        for iv, v in enumerate(g.vertices):
            for rep in exit_law_check(proc, g, v, reference[v], r.epsilon, r.paths, seed, level=level,
                                      key=key + (0, iv), workers=r.workers):
                rep.name = f"{name}:{rep.name}"
                reports.append(rep)
        for ie, (i, (_, _, R)) in enumerate(g.internal.items()):
            x = float(cfg.verify.get("interval_start", 0.3)) * R
            samples = interval_exits(proc, g, i, x, r.paths, seed, key=key + (1, ie), workers=r.workers)
            for alpha in r.alpha:
                rep = laplace_exit_check(proc, g, i, x, alpha, r.paths, seed, samples=samples)
                rep.name = f"{name}:{rep.name}"
                reports.append(rep)
    if len(procs) == 2:
        vs = cfg.verify.get("vertices") or [g.vertices[0], g.vertices[-1]]
        for iv, v in enumerate(dict.fromkeys(vs)):
            lim = g.min_incident_length(v)
            radius = float(cfg.verify.get("ball_radius", min(0.4 * lim, 8 * r.epsilon)))
            reports.extend(backend_equivalence(procs["direct"], procs["pipeline"], g, v, radius, r.paths, seed,
                                               level=level, workers=r.workers, key=(2, iv)))
    trace = pipeline_trace(g, cfg.boundary, r.delta or None)
    same = assignments_equal(trace[-1].assignment, cfg.boundary, tol=1e-12)
    reports.append(TestReport("fw_trace.closed_loop", 0.0 if same else 1.0, same))
    return reports


def cmd_verify(args) -> int:
    cfg = _load(args)
    _require_valid(cfg)
    reports = verify_reports(cfg)
    lines = "\n".join(rep.to_json(timings=args.timings) for rep in reports) + "\n"
    if cfg.run.out:
        os.makedirs(cfg.run.out, exist_ok=True)
        with open(os.path.join(cfg.run.out, "reports.jsonl"), "w", encoding="utf-8") as fh:
            fh.write(lines)
    else:
        sys.stdout.write(lines)
    print(format_table(reports))
    failed = [rep.name for rep in reports if not rep.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} passed")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_fw_trace(args) -> int:
    cfg = _load(args)
    _require_valid(cfg)
    trace = pipeline_trace(cfg.graph, cfg.boundary, cfg.run.delta or None)
    doc = {"stages": trace_to_json(trace), "input": boundary_to_json(cfg.boundary)}
    if args.exact_rational:
        same = trace[-1].assignment == cfg.boundary
    else:
        same = assignments_equal(trace[-1].assignment, cfg.boundary, tol=1e-12)
    doc["final_equals_input"] = same
    text = dumps(doc)
    if cfg.run.out:
        os.makedirs(cfg.run.out, exist_ok=True)
        with open(os.path.join(cfg.run.out, "trace.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not same:
        print("final stage differs from the input assignment", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_decompose(args) -> int:
    cfg = _load(args)
    problems = validate_graph(cfg.graph).violations
    if problems:
        raise ValidationFailed(problems)
    if args.minus:
        dec = decompose(cfg.graph, [v.strip() for v in args.minus.split(",") if v.strip()])
    else:
        dec = peel_last(cfg.graph)
    text = json.dumps(decomposition_to_json(dec), indent=2) + "\n"
    if cfg.run.out:
        os.makedirs(cfg.run.out, exist_ok=True)
        with open(os.path.join(cfg.run.out, "decomposition.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "fw-trace": cmd_fw_trace,
    "decompose": cmd_decompose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fwgraph", description="Brownian motions on metric graphs "
                                     "with Feller-Wentzell vertex conditions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment document")
        p.add_argument("--backend", choices=BACKENDS)
        p.add_argument("--paths", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--horizon", type=float)
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
        if name == "fw-trace":
            p.add_argument("--exact-rational", action="store_true", help="read weights as exact fractions")
        if name == "verify":
            p.add_argument("--timings", action="store_true", help="include wall-clock runtimes in reports.jsonl")
        if name == "decompose":
            p.add_argument("--minus", help="comma separated vertices of the -1 side (default: all but the last)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationFailed as exc:
        for p in exc.problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_INVALID
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (GraphError, FWError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SamplerError, RuntimeError, AssertionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
