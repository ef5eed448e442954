"""JSON experiment documents: graph, boundary data and run parameters."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .fw import FWData, JumpMeasure, TraceStage
from .graph import Aux, Cemetery, EdgePoint, GraphPoint, MetricGraph, Vertex

BACKENDS = ("direct", "pipeline", "both")


class ConfigError(ValueError):
    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}" if where else msg)
        self.where = where


@dataclass
class RunParams:
    epsilon: float = 0.05
    delta: dict[str, float] = field(default_factory=dict)
    horizon: float = 10.0
    paths: int = 100
    seed: int | None = None
    alpha: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    backend: str = "direct"
    start: GraphPoint | None = None
    out: str | None = None
    workers: int = 1


@dataclass
class RunConfig:
    graph: MetricGraph
    boundary: dict[str, FWData]
    run: RunParams
    verify: dict[str, Any] = field(default_factory=dict)
    reference: dict[str, FWData] | None = None


# --------------------------------------------------------------------------
# numbers
# --------------------------------------------------------------------------

def parse_weight(x: Any, where: str, exact: bool = False):
    if isinstance(x, bool):
        raise ConfigError(where, f"expected a number, got {x!r}")
    if isinstance(x, str):
        try:
            return Fraction(x) if exact or "/" in x else float(x)
        except ValueError:
            raise ConfigError(where, f"cannot parse number {x!r}") from None
    if isinstance(x, int):
        return Fraction(x) if exact else x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ConfigError(where, f"number must be finite, got {x!r}")
        return Fraction(repr(x)) if exact else x
    raise ConfigError(where, f"expected a number, got {x!r}")


def weight_to_json(w):
    if isinstance(w, Fraction):
        return str(w) if w.denominator != 1 else w.numerator
    return w


def _positive(x: Any, where: str, allow_zero: bool = False) -> float:
    v = parse_weight(x, where)
    if v < 0 or (v == 0 and not allow_zero):
        raise ConfigError(where, f"must be {'non-negative' if allow_zero else 'positive'}, got {x!r}")
    return float(v)


# --------------------------------------------------------------------------
# graph and boundary documents
# --------------------------------------------------------------------------

def graph_from_json(doc: Any) -> MetricGraph:
    if not isinstance(doc, dict):
        raise ConfigError("graph", "expected an object")
    vs = doc.get("vertices")
    if not isinstance(vs, list):
        raise ConfigError("graph.vertices", "expected a list of vertex ids")
    internal, external = {}, {}
    for k, row in enumerate(doc.get("internal_edges", [])):
        where = f"graph.internal_edges[{k}]"
        if not isinstance(row, list) or len(row) != 4:
            raise ConfigError(where, "expected [id, from, to, length]")
        i, a, b, r = row
        if str(i) in internal:
            raise ConfigError(where, f"duplicate edge id {i!r}")
        internal[str(i)] = (str(a), str(b), float(parse_weight(r, where + ".length")))
    for k, row in enumerate(doc.get("external_edges", [])):
        where = f"graph.external_edges[{k}]"
        if not isinstance(row, list) or len(row) != 2:
            raise ConfigError(where, "expected [id, from]")
        if str(row[0]) in external:
            raise ConfigError(where, f"duplicate edge id {row[0]!r}")
        external[str(row[0])] = str(row[1])
    return MetricGraph(tuple(str(v) for v in vs), internal, external)


def graph_to_json(g: MetricGraph) -> dict:
    return {
        "vertices": list(g.vertices),
        "internal_edges": [[i, a, b, r] for i, (a, b, r) in g.internal.items()],
        "external_edges": [[e, v] for e, v in g.external.items()],
    }


def point_from_doc(d: Any, where: str) -> GraphPoint:
    if not isinstance(d, dict):
        raise ConfigError(where, "expected an object with 'vertex', 'edge' + 'coordinate', or 'aux'")
    if "vertex" in d:
        return Vertex(str(d["vertex"]))
    if "edge" in d:
        if "coordinate" not in d:
            raise ConfigError(where, "edge target needs a coordinate")
        return EdgePoint(str(d["edge"]), float(parse_weight(d["coordinate"], where + ".coordinate")))
    if "aux" in d:
        return Aux(str(d["aux"]))
    if d.get("cemetery"):
        return Cemetery()
    raise ConfigError(where, "expected 'vertex', 'edge' + 'coordinate', or 'aux'")


def point_to_doc(p: GraphPoint) -> dict:
    if isinstance(p, Vertex):
        return {"vertex": p.id}
    if isinstance(p, EdgePoint):
        return {"edge": p.edge, "coordinate": p.x}
    if isinstance(p, Aux):
        return {"aux": p.id}
    return {"cemetery": True}


def fw_from_json(doc: Any, where: str, exact: bool = False) -> FWData:
    if not isinstance(doc, dict):
        raise ConfigError(where, "expected an object")
    unknown = set(doc) - {"p1", "p2", "p3", "p4"}
    if unknown:
        raise ConfigError(where, f"unknown fields {sorted(unknown)}")
    p1 = parse_weight(doc.get("p1", 0), where + ".p1", exact)
    p3 = parse_weight(doc.get("p3", 0), where + ".p3", exact)
    p2doc = doc.get("p2", {})
    if not isinstance(p2doc, dict):
        raise ConfigError(where + ".p2", "expected an object edge -> weight")
    p2 = {str(l): parse_weight(w, f"{where}.p2.{l}", exact) for l, w in p2doc.items()}
    atoms = []
    p4doc = doc.get("p4", [])
    if not isinstance(p4doc, list):
        raise ConfigError(where + ".p4", "expected a list of atoms")
    for k, a in enumerate(p4doc):
        aw = f"{where}.p4[{k}]"
        if not isinstance(a, dict) or "weight" not in a:
            raise ConfigError(aw, "atom needs a target and a weight")
        w = parse_weight(a["weight"], aw + ".weight", exact)
        if w < 0:
            raise ConfigError(aw + ".weight", f"must be non-negative, got {a['weight']!r}")
        atoms.append((point_from_doc({k2: v for k2, v in a.items() if k2 != "weight"}, aw), w))
    for name, w in (("p1", p1), ("p3", p3), *((f"p2.{l}", w) for l, w in p2.items())):
        if w < 0:
            raise ConfigError(f"{where}.{name}", f"must be non-negative, got {w}")
    return FWData(p1, p2, p3, JumpMeasure(tuple(atoms)))


def fw_to_json(d: FWData) -> dict:
    return {
        "p1": weight_to_json(d.p1),
        "p2": {l: weight_to_json(w) for l, w in d.p2.items()},
        "p3": weight_to_json(d.p3),
        "p4": [{**point_to_doc(g), "weight": weight_to_json(w)} for g, w in d.p4],
    }


def boundary_from_json(doc: Any, where: str = "boundary", exact: bool = False) -> dict[str, FWData]:
    if not isinstance(doc, dict):
        raise ConfigError(where, "expected an object vertex -> data")
    return {str(v): fw_from_json(d, f"{where}.{v}", exact) for v, d in doc.items()}


def boundary_to_json(fw: dict[str, FWData]) -> dict:
    return {v: fw_to_json(d) for v, d in fw.items()}


# --------------------------------------------------------------------------
# run section and whole documents
# --------------------------------------------------------------------------

def run_from_json(doc: Any) -> RunParams:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("run", "expected an object")
    known = set(RunParams.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigError("run", f"unknown fields {sorted(unknown)}")
    p = RunParams()
    if "epsilon" in doc:
        p.epsilon = _positive(doc["epsilon"], "run.epsilon")
    if "delta" in doc:
        if not isinstance(doc["delta"], dict):
            raise ConfigError("run.delta", "expected an object vertex -> radius")
        p.delta = {str(v): _positive(x, f"run.delta.{v}") for v, x in doc["delta"].items()}
    if "horizon" in doc:
        p.horizon = _positive(doc["horizon"], "run.horizon", allow_zero=True)
    if "paths" in doc:
        n = doc["paths"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ConfigError("run.paths", f"must be a positive integer, got {n!r}")
        p.paths = n
    if "seed" in doc and doc["seed"] is not None:
        s = doc["seed"]
        if not isinstance(s, int) or isinstance(s, bool) or s < 0:
            raise ConfigError("run.seed", f"must be a non-negative integer, got {s!r}")
        p.seed = s
    if "alpha" in doc:
        if not isinstance(doc["alpha"], list) or not doc["alpha"]:
            raise ConfigError("run.alpha", "expected a non-empty list")
        p.alpha = [_positive(a, f"run.alpha[{k}]", allow_zero=True) for k, a in enumerate(doc["alpha"])]
    if "backend" in doc:
        if doc["backend"] not in BACKENDS:
            raise ConfigError("run.backend", f"must be one of {BACKENDS}, got {doc['backend']!r}")
        p.backend = doc["backend"]
    if "start" in doc and doc["start"] is not None:
        p.start = point_from_doc(doc["start"], "run.start")
    if "out" in doc:
        p.out = None if doc["out"] is None else str(doc["out"])
    if "workers" in doc:
        w = doc["workers"]
        if not isinstance(w, int) or isinstance(w, bool) or w < 1:
            raise ConfigError("run.workers", f"must be a positive integer, got {w!r}")
        p.workers = w
    return p


def run_to_json(p: RunParams) -> dict:
    out = {
        "epsilon": p.epsilon, "delta": dict(p.delta), "horizon": p.horizon, "paths": p.paths,
        "seed": p.seed, "alpha": list(p.alpha), "backend": p.backend, "workers": p.workers,
    }
    if p.start is not None:
        out["start"] = point_to_doc(p.start)
    if p.out is not None:
        out["out"] = p.out
    return out


def config_from_json(doc: Any, exact: bool = False) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a JSON object")
    for key in ("graph", "boundary"):
        if key not in doc:
            raise ConfigError(key, "missing section")
    unknown = set(doc) - {"graph", "boundary", "run", "verify"}
    if unknown:
        raise ConfigError("", f"unknown sections {sorted(unknown)}")
    verify = doc.get("verify", {}) or {}
    if not isinstance(verify, dict):
        raise ConfigError("verify", "expected an object")
    reference = None
    if "reference_boundary" in verify:
        reference = boundary_from_json(verify["reference_boundary"], "verify.reference_boundary", exact)
    return RunConfig(graph_from_json(doc["graph"]), boundary_from_json(doc["boundary"], exact=exact),
                     run_from_json(doc.get("run")), dict(verify), reference)


def config_to_json(cfg: RunConfig) -> dict:
    out = {"graph": graph_to_json(cfg.graph), "boundary": boundary_to_json(cfg.boundary),
           "run": run_to_json(cfg.run)}
    if cfg.verify:
        out["verify"] = cfg.verify
    return out


def load_config(path: str, exact: bool = False) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(path, f"cannot read: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return config_from_json(doc, exact)


def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def trace_to_json(trace: list[TraceStage]) -> list[dict]:
    return [
        {"stage": s.label, "space": s.space,
         "c0": {v: (c if math.isfinite(c) else None) for v, c in s.c0.items()},
         "data": boundary_to_json(s.assignment)}
        for s in trace
    ]
