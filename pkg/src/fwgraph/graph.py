"""Metric graphs, points on them, the path metric and two-sided decompositions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

INF = math.inf
SIDES = (-1, 1)


class GraphError(ValueError):
    """Malformed graph, point or decomposition request."""


# --------------------------------------------------------------------------
# points
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Vertex:
    id: str

    def __str__(self):
        return self.id


@dataclass(frozen=True)
class EdgePoint:
    edge: str
    x: float

    def __str__(self):
        return f"({self.edge},{self.x:g})"


@dataclass(frozen=True)
class Cemetery:
    def __str__(self):
        return "Δ"


@dataclass(frozen=True)
class Aux:
    """Isolated auxiliary point (fake cemeteries)."""

    id: str

    def __str__(self):
        return f"□{self.id}"


GraphPoint = Union[Vertex, EdgePoint, Cemetery, Aux]
CEMETERY = Cemetery()


def fake_cemetery(v: str) -> Aux:
    """The fake cemetery point attached to vertex ``v``."""
    return Aux(f"box:{v}")


#: the single fake cemetery used for the final killing stage
BOX = Aux("box")


class Edge(NamedTuple):
    id: str
    tail: str
    head: str | None  # None for external edges
    length: float

    @property
    def external(self) -> bool:
        return self.head is None


# --------------------------------------------------------------------------
# graph
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricGraph:
    """A finite metric graph.

    Internal edges are intervals ``(0, length)`` oriented from ``tail`` to
    ``head``; external edges are rays ``(0, inf)`` starting at their vertex.
    Construction does not validate; use :func:`validate_graph`.
    """

    vertices: tuple[str, ...]
    internal: dict[str, tuple[str, str, float]] = field(default_factory=dict)
    external: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))

    def __hash__(self):
        return id(self)

    @cached_property
    def edges(self) -> dict[str, Edge]:
        out = {i: Edge(i, a, b, float(r)) for i, (a, b, r) in self.internal.items()}
        out.update({e: Edge(e, v, None, INF) for e, v in self.external.items()})
        return out

    @cached_property
    def incidence(self) -> dict[str, tuple[str, ...]]:
        inc: dict[str, list[str]] = {v: [] for v in self.vertices}
        for e in self.edges.values():
            for w in (e.tail, e.head):
                if w is not None and w in inc:
                    inc[w].append(e.id)
        return {v: tuple(ls) for v, ls in inc.items()}

    def edges_at(self, v: str) -> tuple[str, ...]:
        return self.incidence[v]

    def length(self, edge: str) -> float:
        try:
            return self.edges[edge].length
        except KeyError:
            raise GraphError(f"unknown edge {edge!r}") from None

    def min_incident_length(self, v: str) -> float:
        return min((self.length(l) for l in self.edges_at(v)), default=INF)

    def min_internal_length(self) -> float:
        return min((r for _, _, r in self.internal.values()), default=INF)

    def point_at(self, v: str, edge: str, r: float) -> GraphPoint:
        """Point at distance ``r`` from ``v`` along an incident edge."""
        e = self.edges[edge]
        if r <= 0:
            return Vertex(v)
        if e.tail == v:
            return Vertex(e.head) if r >= e.length else EdgePoint(edge, r)
        if e.head == v:
            return Vertex(e.tail) if r >= e.length else EdgePoint(edge, e.length - r)
        raise GraphError(f"edge {edge!r} is not incident with {v!r}")

    def offset_from(self, v: str, edge: str, x: float) -> float:
        """Distance from ``v`` to coordinate ``x`` measured along ``edge``."""
        e = self.edges[edge]
        return x if e.tail == v else e.length - x

    def canonical(self, p: GraphPoint) -> GraphPoint:
        """Map edge endpoints to vertices and check coordinates."""
        if isinstance(p, EdgePoint):
            e = self.edges.get(p.edge)
            if e is None:
                raise GraphError(f"unknown edge {p.edge!r}")
            if p.x <= 0:
                return Vertex(e.tail)
            if p.x >= e.length:
                if e.head is None:
                    raise GraphError(f"coordinate {p.x} beyond external edge {p.edge!r}")
                return Vertex(e.head)
        elif isinstance(p, Vertex) and p.id not in self.incidence:
            raise GraphError(f"unknown vertex {p.id!r}")
        return p

    def contains(self, p: GraphPoint) -> bool:
        if isinstance(p, Vertex):
            return p.id in self.incidence
        if isinstance(p, EdgePoint):
            e = self.edges.get(p.edge)
            return e is not None and 0 < p.x < e.length
        return False

    # --- metric -----------------------------------------------------------

    @cached_property
    def _vertex_index(self) -> dict[str, int]:
        return {v: k for k, v in enumerate(self.vertices)}

    @cached_property
    def vertex_distances(self) -> np.ndarray:
        """All-pairs shortest path lengths between vertices."""
        n = len(self.vertices)
        idx = self._vertex_index
        w = np.full((n, n), INF)
        for a, b, r in self.internal.values():
            i, j = idx[a], idx[b]
            w[i, j] = w[j, i] = min(w[i, j], r)
        rows, cols = np.nonzero(np.isfinite(w))
        mat = csr_matrix((w[rows, cols], (rows, cols)), shape=(n, n))
        return dijkstra(mat, directed=False)

    def _anchors(self, p: GraphPoint) -> list[tuple[int, float]]:
        idx = self._vertex_index
        if isinstance(p, Vertex):
            return [(idx[p.id], 0.0)]
        e = self.edges[p.edge]
        out = [(idx[e.tail], p.x)]
        if e.head is not None:
            out.append((idx[e.head], e.length - p.x))
        return out

    def distance(self, a: GraphPoint, b: GraphPoint) -> float:
        return distance(self, a, b)


def distance(g: MetricGraph, a: GraphPoint, b: GraphPoint) -> float:
    """Shortest-path distance; ``inf`` to and from auxiliary points or Δ."""
    if not isinstance(a, (Vertex, EdgePoint)) or not isinstance(b, (Vertex, EdgePoint)):
        return 0.0 if a == b else INF
    a, b = g.canonical(a), g.canonical(b)
    if a == b:
        return 0.0
    best = INF
    if isinstance(a, EdgePoint) and isinstance(b, EdgePoint) and a.edge == b.edge:
        best = abs(a.x - b.x)
    D = g.vertex_distances
    for i, da in g._anchors(a):
        for j, db in g._anchors(b):
            best = min(best, da + D[i, j] + db)
    return float(best)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_graph(g: MetricGraph) -> ValidationReport:
    rep = ValidationReport()
    vs = set(g.vertices)
    if not vs:
        rep.violations.append("empty vertex set")
    if len(vs) != len(g.vertices):
        rep.violations.append("duplicate vertex ids")
    clash = set(g.internal) & set(g.external)
    if clash:
        rep.violations.append(f"edge ids used twice: {sorted(clash)}")
    for i, (a, b, r) in g.internal.items():
        for w in (a, b):
            if w not in vs:
                rep.violations.append(f"dangling endpoint: edge {i} references unknown vertex {w}")
        if a == b:
            rep.violations.append(f"loop: edge {i} at vertex {a}")
        if not (r > 0) or not math.isfinite(r):
            rep.violations.append(f"non-positive length: edge {i} has length {r}")
    for e, v in g.external.items():
        if v not in vs:
            rep.violations.append(f"dangling endpoint: edge {e} references unknown vertex {v}")
    return rep


def require_valid(g: MetricGraph) -> MetricGraph:
    rep = validate_graph(g)
    if not rep.ok:
        raise GraphError("; ".join(rep.violations))
    return g


# --------------------------------------------------------------------------
# decomposition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SubgraphDecomposition:
    """Split of a graph along a vertex partition into two graphs with shadow edges.

    ``crossing[j]`` holds the internal edges whose tail lies in side ``j`` and
    whose head lies in side ``-j``; every crossing edge ``i`` is replaced on
    side ``j`` by the external edge ``shadow[(i, j)]`` attached to the endpoint
    of ``i`` in side ``j``.
    """

    graph: MetricGraph
    parts: dict[int, frozenset[str]]
    external: dict[int, frozenset[str]]
    interior: dict[int, frozenset[str]]
    crossing: dict[int, frozenset[str]]
    shadow: dict[tuple[str, int], str]
    sides: dict[int, MetricGraph]

    def __hash__(self):
        return id(self)

    @cached_property
    def crossing_all(self) -> frozenset[str]:
        return self.crossing[-1] | self.crossing[1]

    @cached_property
    def shadow_owner(self) -> dict[str, tuple[str, int]]:
        """shadow edge id -> (crossing edge, side)"""
        return {s: key for key, s in self.shadow.items()}

    def shadow_length(self, e: str) -> float:
        i, _ = self.shadow_owner[e]
        return self.graph.length(i)

    def side_of_vertex(self, v: str) -> int:
        return -1 if v in self.parts[-1] else 1

    def side_of(self, p: GraphPoint) -> int:
        """A side whose subspace contains ``p``; crossing edges go to the tail side."""
        if isinstance(p, Vertex):
            return self.side_of_vertex(p.id)
        if isinstance(p, EdgePoint):
            e = self.graph.edges[p.edge]
            return self.side_of_vertex(e.tail)
        if isinstance(p, Aux) and p.id.startswith("box:"):
            v = p.id[4:]
            if v in self.graph.incidence:
                return self.side_of_vertex(v)
        return -1

    def transfer_target(self, j: int, i: str) -> str:
        """Vertex at which the other side is revived after side ``j`` dies on ``i``."""
        a, b, _ = self.graph.internal[i]
        if i in self.crossing[j]:
            return b
        if i in self.crossing[-j]:
            return a
        raise GraphError(f"edge {i!r} is not a crossing edge")

    def excrescent(self, j: int, p: GraphPoint) -> bool:
        if isinstance(p, EdgePoint) and p.edge in self.shadow_owner:
            return p.x >= self.shadow_length(p.edge)
        return False

    def psi(self, j: int, p: GraphPoint) -> GraphPoint:
        """Map a point of side ``j`` (off the excrescent parts) into the full graph."""
        if isinstance(p, EdgePoint) and p.edge in self.shadow_owner:
            i, side = self.shadow_owner[p.edge]
            if side != j:
                raise GraphError(f"{p} does not belong to side {j}")
            r = self.graph.length(i)
            if p.x >= r:
                raise GraphError(f"{p} lies in the excrescent part of a shadow edge")
            return EdgePoint(i, p.x if i in self.crossing[j] else r - p.x)
        return p

    def phi(self, j: int, p: GraphPoint) -> GraphPoint:
        """Inverse of :meth:`psi`."""
        if isinstance(p, EdgePoint) and p.edge in self.crossing_all:
            r = self.graph.length(p.edge)
            return EdgePoint(self.shadow[(p.edge, j)],
                             p.x if p.edge in self.crossing[j] else r - p.x)
        if isinstance(p, Vertex) and p.id not in self.parts[j]:
            raise GraphError(f"vertex {p.id} is not on side {j}")
        if isinstance(p, EdgePoint):
            e = self.graph.edges[p.edge]
            if e.tail not in self.parts[j]:
                raise GraphError(f"{p} is not on side {j}")
        return p


def psi_map(dec: SubgraphDecomposition, j: int, p: GraphPoint) -> GraphPoint:
    return dec.psi(j, p)


def _fresh_id(base: str, taken: set[str]) -> str:
    out = base
    while out in taken:
        out += "'"
    taken.add(out)
    return out


def decompose(g: MetricGraph, minus: Iterable[str], plus: Iterable[str] | None = None) -> SubgraphDecomposition:
    """Decompose ``g`` along the vertex partition (``minus``, ``plus``)."""
    require_valid(g)
    vm = frozenset(minus)
    vp = frozenset(plus) if plus is not None else frozenset(g.vertices) - vm
    if not vm or not vp:
        raise GraphError("both partition cells must be non-empty")
    if vm & vp or (vm | vp) != set(g.vertices):
        raise GraphError("partition cells must be disjoint and cover all vertices")
    parts = {-1: vm, 1: vp}
    external = {j: frozenset(e for e, v in g.external.items() if v in parts[j]) for j in SIDES}
    interior = {j: frozenset(i for i, (a, b, _) in g.internal.items()
                             if a in parts[j] and b in parts[j]) for j in SIDES}
    crossing = {j: frozenset(i for i, (a, b, _) in g.internal.items()
                             if a in parts[j] and b not in parts[j]) for j in SIDES}
    taken = set(g.edges)
    shadow = {}
    for i in sorted(crossing[-1] | crossing[1]):
        for j in SIDES:
            shadow[(i, j)] = _fresh_id(f"{i}^{j:+d}", taken)
    sides = {}
    order = {v: k for k, v in enumerate(g.vertices)}
    for j in SIDES:
        internal = {i: g.internal[i] for i in sorted(interior[j])}
        ext = {e: g.external[e] for e in sorted(external[j])}
        for i in sorted(crossing[j] | crossing[-j]):
            a, b, _ = g.internal[i]
            ext[shadow[(i, j)]] = a if i in crossing[j] else b
        sides[j] = MetricGraph(tuple(sorted(parts[j], key=order.__getitem__)), internal, ext)
    return SubgraphDecomposition(g, parts, external, interior, crossing, shadow, sides)


def peel_last(g: MetricGraph) -> SubgraphDecomposition:
    """Decomposition with the last declared vertex alone on the ``+1`` side."""
    return decompose(g, g.vertices[:-1], g.vertices[-1:])


def point_to_json(p: GraphPoint) -> dict:
    if isinstance(p, Vertex):
        return {"vertex": p.id}
    if isinstance(p, EdgePoint):
        return {"edge": p.edge, "coordinate": p.x}
    if isinstance(p, Aux):
        return {"aux": p.id}
    return {"cemetery": True}


def point_from_json(d: dict) -> GraphPoint:
    if "vertex" in d:
        return Vertex(str(d["vertex"]))
    if "edge" in d:
        return EdgePoint(str(d["edge"]), float(d["coordinate"]))
    if "aux" in d:
        return Aux(str(d["aux"]))
    if d.get("cemetery"):
        return CEMETERY
    raise GraphError(f"cannot parse point {d!r}")


def decomposition_to_json(dec: SubgraphDecomposition) -> dict:
    def graph_json(h: MetricGraph) -> dict:
        return {
            "vertices": list(h.vertices),
            "internal_edges": [[i, a, b, r] for i, (a, b, r) in h.internal.items()],
            "external_edges": [[e, v] for e, v in h.external.items()],
        }

    return {
        "partition": {str(j): sorted(dec.parts[j], key=dec.graph.vertices.index) for j in SIDES},
        "external": {str(j): sorted(dec.external[j]) for j in SIDES},
        "interior": {str(j): sorted(dec.interior[j]) for j in SIDES},
        "crossing": {str(j): sorted(dec.crossing[j]) for j in SIDES},
        "shadow_edges": [
            {"edge": i, "side": j, "id": s, "attached_to": dec.sides[j].external[s],
             "shadow_length": dec.graph.length(i)}
            for (i, j), s in sorted(dec.shadow.items())
        ],
        "subgraphs": {str(j): graph_json(dec.sides[j]) for j in SIDES},
    }
