"""Feller–Wentzell boundary data and its transformations.

Weights may be ``float`` or :class:`fractions.Fraction`; every transformation
is written so that rational input stays rational. Only the normalization sum,
which involves ``1 - exp(-d)`` for atoms at finite distance, is evaluated in
floating point.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Union

from .graph import (
    BOX, INF, SIDES, Aux, EdgePoint, GraphError, GraphPoint, MetricGraph,
    SubgraphDecomposition, Vertex, distance, fake_cemetery, peel_last,
)

Weight = Union[float, Fraction]
NORMALIZATION_TOL = 1e-12


class FWError(ValueError):
    """Invalid or degenerate boundary data."""


class StageError(FWError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"stage {stage!r}: {msg}")
        self.stage = stage


# --------------------------------------------------------------------------
# measures and data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpMeasure:
    """Finite measure with finitely many atoms; atoms on equal targets merge."""

    atoms: tuple[tuple[GraphPoint, Weight], ...] = ()

    def __post_init__(self):
        merged: dict[GraphPoint, Weight] = {}
        for g, w in self.atoms:
            if w < 0:
                raise FWError(f"negative jump weight {w} at {g}")
            if w == 0:
                continue
            merged[g] = merged[g] + w if g in merged else w
        object.__setattr__(self, "atoms", tuple(merged.items()))

    @classmethod
    def of(cls, mapping: Mapping[GraphPoint, Weight] | Iterable = ()) -> "JumpMeasure":
        items = mapping.items() if isinstance(mapping, Mapping) else mapping
        return cls(tuple(items))

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self):
        return len(self.atoms)

    def __bool__(self):
        return bool(self.atoms)

    def __eq__(self, other):
        if not isinstance(other, JumpMeasure):
            return NotImplemented
        return dict(self.atoms) == dict(other.atoms)

    def __hash__(self):
        return hash(frozenset(self.atoms))

    def __add__(self, other: "JumpMeasure") -> "JumpMeasure":
        return JumpMeasure(self.atoms + other.atoms)

    def __mul__(self, c: Weight) -> "JumpMeasure":
        return JumpMeasure(tuple((g, w * c) for g, w in self.atoms))

    __rmul__ = __mul__

    def as_dict(self) -> dict[GraphPoint, Weight]:
        return dict(self.atoms)

    @property
    def mass(self) -> Weight:
        return sum((w for _, w in self.atoms), 0)

    def targets(self) -> list[GraphPoint]:
        return [g for g, _ in self.atoms]

    def restrict(self, keep) -> "JumpMeasure":
        return JumpMeasure(tuple((g, w) for g, w in self.atoms if keep(g)))

    def push(self, f) -> "JumpMeasure":
        return JumpMeasure(tuple((f(g), w) for g, w in self.atoms))


def point_mass(g: GraphPoint, w: Weight = 1) -> JumpMeasure:
    return JumpMeasure(((g, w),))


@dataclass(frozen=True)
class FWData:
    """Boundary weights at one vertex: killing, reflection per edge, stickiness, jumps."""

    p1: Weight = 0
    p2: Mapping[str, Weight] = field(default_factory=dict)
    p3: Weight = 0
    p4: JumpMeasure = field(default_factory=JumpMeasure)

    def __post_init__(self):
        object.__setattr__(self, "p2", {l: w for l, w in dict(self.p2).items()})
        if not isinstance(self.p4, JumpMeasure):
            object.__setattr__(self, "p4", JumpMeasure.of(self.p4))

    def __hash__(self):
        return hash((self.p1, frozenset(self.p2.items()), self.p3, self.p4))

    @property
    def P2(self) -> Weight:
        return sum(self.p2.values(), 0)

    def scaled(self, c: Weight) -> "FWData":
        return FWData(self.p1 * c, {l: w * c for l, w in self.p2.items()}, self.p3 * c, self.p4 * c)

    def weights(self):
        yield self.p1
        yield from self.p2.values()
        yield self.p3
        yield from (w for _, w in self.p4)


FWAssignment = dict  # vertex id -> FWData


def _jump_factor(d: float) -> float | int:
    return 1 if d == INF else -math.expm1(-d)


def normalization_sum(d: FWData, graph: MetricGraph, v: str) -> Weight:
    """``p1 + sum p2 + p3 + int (1 - e^{-d(v,g)}) p4(dg)``; exact when no atom is at finite distance."""
    base = d.p1 + d.P2 + d.p3
    for g, w in d.p4:
        base = base + w * _jump_factor(distance(graph, Vertex(v), g))
    return base


def check_data(d: FWData, graph: MetricGraph, v: str, *, normalized: bool = True,
               tol: float = NORMALIZATION_TOL) -> list[str]:
    """Violations of the data invariants at ``v`` (empty list if fine)."""
    out = []
    for w in d.weights():
        if w < 0:
            out.append(f"vertex {v}: negative weight {w}")
    inc = set(graph.edges_at(v))
    for l in d.p2:
        if l not in inc:
            out.append(f"vertex {v}: reflection weight on non-incident edge {l}")
    for g, _ in d.p4:
        if g == Vertex(v):
            out.append(f"vertex {v}: jump atom at the vertex itself")
        elif isinstance(g, (Vertex, EdgePoint)) and not graph.contains(g):
            out.append(f"vertex {v}: jump target {g} is not a point of the graph")
    if d.P2 + d.p3 == 0:
        out.append(f"vertex {v}: pure-jump vertex unsupported (sum p2 + p3 = 0 needs an infinite jump measure)")
    if normalized:
        s = normalization_sum(d, graph, v)
        if abs(float(s) - 1.0) > tol:
            out.append(f"vertex {v}: normalization sum is {float(s):.15g}, expected 1")
    return out


def check_assignment(fw: Mapping[str, FWData], graph: MetricGraph, *, normalized: bool = True) -> list[str]:
    out = []
    for v in graph.vertices:
        if v not in fw:
            out.append(f"vertex {v}: no boundary data")
    for v, d in fw.items():
        if v not in graph.incidence:
            out.append(f"boundary data for unknown vertex {v}")
            continue
        out.extend(check_data(d, graph, v, normalized=normalized))
    return out


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def normalize(raw: FWData, graph: MetricGraph, v: str) -> tuple[FWData, Weight]:
    """Scale ``raw`` so that the normalization sum equals one; returns the data and the factor."""
    s = normalization_sum(raw, graph, v)
    if s <= 0:
        raise FWError(f"vertex {v}: all boundary weights are zero")
    c0 = 1 / s if isinstance(s, Fraction) else 1.0 / float(s)
    if s == 1:
        return raw, s
    return raw.scaled(c0), c0


def split_local(d: FWData, graph: MetricGraph, v: str, delta: float) -> tuple[Weight, JumpMeasure, JumpMeasure]:
    """Split jumps into the part inside the open ball of radius ``delta`` and the rest.

    Returns ``(q1, local, far)`` where ``q1 = p1 + mass(far)``.
    """
    if not delta > 0:
        raise FWError(f"vertex {v}: delta must be positive")
    if delta >= graph.min_incident_length(v):
        raise FWError(f"vertex {v}: delta={delta} is not below every incident edge length")
    here = Vertex(v)
    local = d.p4.restrict(lambda g: distance(graph, here, g) < delta)
    far = d.p4.restrict(lambda g: not distance(graph, here, g) < delta)
    return d.p1 + far.mass, local, far


def kill_transform(d: FWData, F: Iterable[GraphPoint]) -> FWData:
    """Data after killing on the absorbing set ``F``: jumps into ``F`` become killing."""
    F = set(F)
    hit = d.p4.restrict(lambda g: g in F)
    return replace(d, p1=d.p1 + hit.mass, p4=d.p4.restrict(lambda g: g not in F))


def _is_probability(kappa: JumpMeasure) -> bool:
    m = kappa.mass
    if isinstance(m, Fraction) or isinstance(m, int):
        return m == 1
    return abs(m - 1) <= NORMALIZATION_TOL


def revive_transform(d: FWData, kappa: JumpMeasure) -> FWData:
    """Data after instant revival with kernel ``kappa``: killing becomes jumps ``p1 * kappa``."""
    if not _is_probability(kappa):
        raise FWError(f"revival kernel has mass {kappa.mass}, expected 1")
    if d.p1 == 0:
        warnings.warn("revival of data without killing weight is a no-op", stacklevel=2)
        return d
    return replace(d, p1=d.p1 * 0, p4=d.p4 + kappa * d.p1)


def restrict_to_side(dec: SubgraphDecomposition, j: int, fw: Mapping[str, FWData]) -> dict[str, FWData]:
    """Express data of side-``j`` vertices in the coordinates of the side graph."""
    out = {}
    for v in dec.sides[j].vertices:
        d = fw[v]
        p2 = {dec.shadow[(l, j)] if l in dec.crossing_all else l: w for l, w in d.p2.items()}

        def move(g, v=v):
            if isinstance(g, Aux):
                return g
            try:
                return dec.phi(j, g)
            except GraphError:
                raise FWError(f"vertex {v}: jump target {g} lies outside side {j}") from None

        out[v] = FWData(d.p1, p2, d.p3, d.p4.push(move))
    return out


def glue_transform(dec: SubgraphDecomposition, fw_minus: Mapping[str, FWData],
                   fw_plus: Mapping[str, FWData]) -> dict[str, FWData]:
    """Data of the glued process from killing-free data on the two side graphs."""
    out = {}
    for j, fw in zip(SIDES, (fw_minus, fw_plus)):
        for v, d in fw.items():
            if v not in dec.parts[j]:
                raise FWError(f"vertex {v} is not on side {j}")
            if d.p1 != 0:
                raise FWError(f"vertex {v}: gluing needs killing-free data, got p1={d.p1}")
            p2 = {}
            for l, w in d.p2.items():
                owner = dec.shadow_owner.get(l)
                p2[owner[0] if owner else l] = w

            def move(g, j=j, v=v):
                if dec.excrescent(j, g):
                    raise FWError(f"vertex {v}: jump target {g} lies on an excrescent shadow part")
                return dec.psi(j, g)

            out[v] = FWData(d.p1, p2, d.p3, d.p4.push(move))
    order = {v: k for k, v in enumerate(dec.graph.vertices)}
    return dict(sorted(out.items(), key=lambda kv: order[kv[0]]))


# --------------------------------------------------------------------------
# staged trace
# --------------------------------------------------------------------------

STAGES = ("split", "fake_cemetery", "glued", "killed", "revived", "final")


@dataclass
class TraceStage:
    label: str
    assignment: dict[str, FWData]
    space: str  # "graph" or "subgraphs"
    c0: dict[str, float]


def default_delta(graph: MetricGraph, v: str, factor: float = 0.45) -> float:
    return factor * graph.min_incident_length(v)


def resolve_deltas(graph: MetricGraph, delta: Mapping[str, float] | None = None) -> dict[str, float]:
    delta = dict(delta or {})
    out = {}
    for v in graph.vertices:
        d = delta.get(v, default_delta(graph, v))
        if not math.isfinite(d):
            d = 1.0  # star of rays: any radius works
        out[v] = d
    return out


def revival_kernels(graph: MetricGraph, fw: Mapping[str, FWData], delta: Mapping[str, float]):
    """``kappa^v = (p1 * eps_box + far part of p4) / q1`` for every vertex with ``q1 > 0``."""
    out = {}
    for v, d in fw.items():
        q1, _, far = split_local(d, graph, v, delta[v])
        if q1 == 0:
            continue
        out[v] = (point_mass(BOX, d.p1) + far) * (1 / q1 if isinstance(q1, Fraction) else 1.0 / q1)
    return out


def pipeline_trace(graph: MetricGraph, target: Mapping[str, FWData],
                   delta: Mapping[str, float] | None = None) -> list[TraceStage]:
    """Boundary data after every stage of the construction, ending at ``target``."""
    problems = check_assignment(target, graph)
    if problems:
        raise StageError("input", "; ".join(problems))
    delta = resolve_deltas(graph, delta)

    def c0_of(fw, space_graphs):
        out = {}
        for v, d in fw.items():
            s = normalization_sum(d, space_graphs[v], v)
            out[v] = float(1 / s) if s else math.inf
        return out

    split, fake = {}, {}
    for v in graph.vertices:
        try:
            q1, local, _ = split_local(target[v], graph, v, delta[v])
        except FWError as exc:
            raise StageError("split", str(exc)) from None
        d = target[v]
        split[v] = FWData(q1, d.p2, d.p3, local)
        fake[v] = FWData(q1 * 0, d.p2, d.p3, local + point_mass(fake_cemetery(v), q1))

    trace = []
    if len(graph.vertices) > 1:
        dec = peel_last(graph)
        try:
            sides_split = {j: restrict_to_side(dec, j, split) for j in SIDES}
            sides_fake = {j: restrict_to_side(dec, j, fake) for j in SIDES}
        except FWError as exc:
            raise StageError("split", str(exc)) from None
        where = {v: dec.sides[dec.side_of_vertex(v)] for v in graph.vertices}
        merged_split = {**sides_split[-1], **sides_split[1]}
        merged_fake = {**sides_fake[-1], **sides_fake[1]}
        trace.append(TraceStage("split", _ordered(graph, merged_split), "subgraphs", c0_of(merged_split, where)))
        trace.append(TraceStage("fake_cemetery", _ordered(graph, merged_fake), "subgraphs", c0_of(merged_fake, where)))
        try:
            glued = glue_transform(dec, sides_fake[-1], sides_fake[1])
        except FWError as exc:
            raise StageError("glued", str(exc)) from None
    else:
        where = {v: graph for v in graph.vertices}
        trace.append(TraceStage("split", dict(split), "graph", c0_of(split, where)))
        trace.append(TraceStage("fake_cemetery", dict(fake), "graph", c0_of(fake, where)))
        glued = dict(fake)
    full = {v: graph for v in graph.vertices}
    trace.append(TraceStage("glued", glued, "graph", c0_of(glued, full)))

    boxes = [fake_cemetery(v) for v in graph.vertices]
    killed = {v: kill_transform(d, boxes) for v, d in glued.items()}
    trace.append(TraceStage("killed", killed, "graph", c0_of(killed, full)))

    kernels = revival_kernels(graph, target, delta)
    revived = {}
    for v, d in killed.items():
        revived[v] = revive_transform(d, kernels[v]) if v in kernels else d
    trace.append(TraceStage("revived", revived, "graph", c0_of(revived, full)))

    final = {v: kill_transform(d, [BOX]) for v, d in revived.items()}
    trace.append(TraceStage("final", final, "graph", c0_of(final, full)))
    return trace


def _ordered(graph: MetricGraph, fw: Mapping[str, FWData]) -> dict[str, FWData]:
    return {v: fw[v] for v in graph.vertices if v in fw}


def assignments_equal(a: Mapping[str, FWData], b: Mapping[str, FWData], tol: float = 0.0) -> bool:
    """Equality of assignments; exact when ``tol == 0``."""
    if set(a) != set(b):
        return False
    for v in a:
        x, y = a[v], b[v]
        if tol == 0:
            if x != y:
                return False
            continue
        if abs(x.p1 - y.p1) > tol or abs(x.p3 - y.p3) > tol:
            return False
        if any(abs(x.p2.get(l, 0) - y.p2.get(l, 0)) > tol for l in set(x.p2) | set(y.p2)):
            return False
        ax, ay = x.p4.as_dict(), y.p4.as_dict()
        if any(abs(ax.get(g, 0) - ay.get(g, 0)) > tol for g in set(ax) | set(ay)):
            return False
    return True
