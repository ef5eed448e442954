"""Trajectory-level transformations and the staged construction built from them.

Every process object offers ``run(start, horizon, stream, watch=None, t0=0.0)``
returning a :class:`~fwgraph.sampler.Trajectory`. Wrappers only rewrite the
event lists of the processes they wrap, so a chain of wrappers is again a
process of the same kind.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol

from .fw import (
    FWData, FWError, JumpMeasure, StageError, TraceStage, check_assignment,
    pipeline_trace, resolve_deltas, restrict_to_side, revival_kernels, split_local,
)
from .graph import (
    BOX, SIDES, Aux, Cemetery, EdgePoint, GraphPoint, MetricGraph, SubgraphDecomposition,
    Vertex, distance, fake_cemetery, peel_last,
)
from .sampler import (
    MARK_TOL, DirectProcess, Event, PointSet, RandomStream, SamplerError, Trajectory, Watch,
    as_rng,
)


class PipelineError(RuntimeError):
    """A transformation was applied outside its preconditions."""


class ShadowJumpError(AssertionError):
    """A side process jumped onto the excrescent part of a shadow edge."""


class Process(Protocol):
    def run(self, start: GraphPoint, horizon: float, stream, watch: Watch | None = None,
            t0: float = 0.0) -> Trajectory: ...


def _trap(start: GraphPoint, horizon: float, t0: float) -> Trajectory:
    events = [Event(t0, "start", start)]
    if t0 < horizon:
        events.append(Event(horizon, "horizon", start))
    return Trajectory(events, "horizon")


# --------------------------------------------------------------------------
# killing, fake cemeteries, adjoining, revival
# --------------------------------------------------------------------------

class KilledOnSet:
    """Kill ``inner`` on first entry into the absorbing set ``F``.

    Entry has to happen by a jump or a revival; the kill event is placed at
    the point the path jumped from.
    """

    def __init__(self, inner: Process, F: Iterable[GraphPoint]):
        self.inner = inner
        self.F = frozenset(F)
        self._region = PointSet(self.F)
        self._plain = Watch(region=self._region)
        self._derived = (None, None)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_derived"] = (None, None)
        return state

    def _watch(self, watch: Watch | None) -> Watch:
        if watch is None:
            return self._plain
        if self._derived[0] is not watch:
            self._derived = (watch, watch.with_region(self._region))
        return self._derived[1]

    def run(self, start, horizon, stream, watch=None, t0=0.0):
        if start in self.F:
            return Trajectory([Event(t0, "start", start), Event(t0, "kill", Cemetery())], "killed")
        sub = self._watch(watch)
        tr = self.inner.run(start, horizon, stream, sub, t0)
        last = tr.events[-1]
        if tr.status == "stopped" and last.position in self.F:
            if last.kind not in ("jump", "revival"):
                raise PipelineError(f"absorbing set entered by a {last.kind} event at {last.position}")
            source = tr.events[-2].position
            return Trajectory(tr.events[:-1] + [Event(last.t, "kill", source)], "killed")
        return tr


class FakeCemetery:
    """Replace each death at ``v`` by a jump to the isolated point ``targets[v]``, held forever."""

    def __init__(self, inner: Process, targets: Mapping[str, Aux]):
        self.inner = inner
        self.targets = dict(targets)
        self._points = frozenset(self.targets.values())

    def run(self, start, horizon, stream, watch=None, t0=0.0):
        if start in self._points:
            return _trap(start, horizon, t0)
        tr = self.inner.run(start, horizon, stream, watch, t0)
        if not tr.killed:
            return tr
        kill = tr.events[-1]
        v = kill.position
        if not isinstance(v, Vertex) or v.id not in self.targets:
            raise PipelineError(f"death at {v} has no fake cemetery")
        box = self.targets[v.id]
        events = tr.events[:-1] + [Event(kill.t, "jump", box)]
        if watch is not None and watch.landed(box):
            return Trajectory(events, "stopped")
        events.append(Event(horizon, "horizon", box))
        return Trajectory(events, "horizon")


class Adjoined:
    """Extend the state space of ``inner`` by isolated absorbing points."""

    def __init__(self, inner: Process, points: Iterable[Aux]):
        self.inner = inner
        self.points = frozenset(points)

    def run(self, start, horizon, stream, watch=None, t0=0.0):
        if start in self.points:
            return _trap(start, horizon, t0)
        return self.inner.run(start, horizon, stream, watch, t0)


class _Kernel:
    __slots__ = ("targets", "cum")

    def __init__(self, kappa: JumpMeasure):
        m = float(kappa.mass)
        if abs(m - 1.0) > 1e-9:
            raise PipelineError(f"revival kernel has mass {m}, expected 1")
        self.targets = tuple(g for g, _ in kappa)
        acc, cum = 0.0, []
        for _, w in kappa:
            acc += float(w) / m
            cum.append(acc)
        cum[-1] = 1.0
        self.cum = tuple(cum)

    def draw(self, rng) -> GraphPoint:
        k = bisect_right(self.cum, rng.random())
        return self.targets[min(k, len(self.targets) - 1)]


class Revived:
    """Instant revival: each death at ``v`` restarts a fresh copy from a point drawn from ``kernels[v]``.

    Copy ``k`` runs on ``stream.child(k)``; revival targets are drawn from the
    parent stream. A plain numpy generator is shared by all copies instead.
    """

    def __init__(self, inner: Process, kernels: Mapping[str, JumpMeasure],
                 graph: MetricGraph | None = None, delta: Mapping[str, float] | None = None):
        self.inner = inner
        self.kernels = {v: _Kernel(k) for v, k in kernels.items()}
        if graph is not None and delta is not None:
            for v, k in kernels.items():
                near = [g for g, _ in k if distance(graph, Vertex(v), g) < delta[v]]
                if near:
                    raise PipelineError(f"vertex {v}: revival kernel charges the ball of radius {delta[v]}: {near}")

    def run(self, start, horizon, stream, watch=None, t0=0.0):
        rng = as_rng(stream)
        copy, sub_stream = 0, stream
        pos, t = start, t0
        events: list[Event] = []
        while True:
            tr = self.inner.run(pos, horizon, sub_stream, watch, t)
            events.extend(tr.events if copy == 0 else tr.events[1:])
            if not tr.killed:
                return Trajectory(events, tr.status)
            kill = events.pop()
            v = kill.position
            if not isinstance(v, Vertex) or v.id not in self.kernels:
                raise PipelineError(f"no revival kernel for a death at {v}")
            pos, t = self.kernels[v.id].draw(rng), kill.t
            events.append(Event(t, "revival", pos))
            if watch is not None and watch.landed(pos):
                return Trajectory(events, "stopped")
            copy += 1
            sub_stream = stream.child(copy) if isinstance(stream, RandomStream) else stream


# --------------------------------------------------------------------------
# gluing two sides
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferKernelSpec:
    """Revival vertex for the other side after side ``j`` dies on crossing edge ``i``."""

    targets: Mapping[tuple[str, int], str]

    @classmethod
    def of(cls, dec: SubgraphDecomposition) -> "TransferKernelSpec":
        return cls({(i, j): dec.transfer_target(j, i) for i in sorted(dec.crossing_all) for j in SIDES})

    def __call__(self, i: str, j: int) -> str:
        return self.targets[(i, j)]


class _SideRegion:
    """Caller's region pulled back to side ``j``; rejects landings on excrescent shadow parts."""

    def __init__(self, dec: SubgraphDecomposition, j: int, region):
        self.dec, self.j, self.region = dec, j, region

    def __call__(self, p):
        if self.dec.excrescent(self.j, p):
            raise ShadowJumpError(f"jump onto the excrescent shadow part at {p}")
        if self.region is None:
            return False
        return bool(self.region(self.dec.psi(self.j, p)))


class Glued:
    """Alternating copies of two side processes joined along the crossing edges.

    A side is killed when it reaches the far end of a shadow edge (the mark at
    the shadow length); the other side is then revived at the far endpoint of
    the crossing edge. All copies draw sequentially from the same stream.
    """

    def __init__(self, dec: SubgraphDecomposition, minus: Process, plus: Process):
        self.dec = dec
        self.sides = {-1: minus, 1: plus}
        self.transfer = TransferKernelSpec.of(dec)
        self._own = {j: {dec.shadow[(i, j)]: (i, dec.graph.length(i)) for i in dec.crossing_all} for j in SIDES}
        self._cache: dict = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    def _sub_watch(self, j: int, watch: Watch | None):
        key = (j, id(watch))
        hit = self._cache.get(key)
        if hit is not None and hit[0] is watch:
            return hit[1], hit[2]
        dec = self.dec
        marks: dict[str, list[float]] = {s: [r] for s, (_, r) in self._own[j].items()}
        origin: dict[tuple[str, float], EdgePoint] = {}
        vertices: frozenset[str] = frozenset()
        region = budget = None
        if watch is not None:
            side_edges = dec.sides[j].edges
            for l, xs in watch.marks.items():
                for x in xs:
                    if l in dec.crossing_all:
                        p = dec.phi(j, EdgePoint(l, x))
                    elif l in side_edges:
                        p = EdgePoint(l, x)
                    else:
                        continue
                    marks.setdefault(p.edge, []).append(p.x)
                    origin[(p.edge, p.x)] = EdgePoint(l, x)
            vertices = watch.vertices
            region = watch.region
            budget = watch.budget
        sub = Watch({s: tuple(xs) for s, xs in marks.items()}, vertices, _SideRegion(dec, j, region), budget)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = (watch, sub, origin)
        return sub, origin

    def _own_mark(self, j: int, p: GraphPoint) -> str | None:
        if isinstance(p, EdgePoint):
            own = self._own[j].get(p.edge)
            if own is not None and abs(p.x - own[1]) <= MARK_TOL:
                return own[0]
        return None

    def _psi(self, j: int, p: GraphPoint) -> GraphPoint:
        if isinstance(p, EdgePoint):
            return self.dec.psi(j, p)
        return p

    def run(self, start, horizon, stream, watch=None, t0=0.0):
        dec = self.dec
        j = dec.side_of(start)
        pos = dec.phi(j, start) if isinstance(start, (Vertex, EdgePoint)) else start
        events = [Event(t0, "start", start)]
        t = t0
        while True:
            sub, origin = self._sub_watch(j, watch)
            tr = self.sides[j].run(pos, horizon, stream, sub, t)
            body = tr.events[1:]
            last = tr.events[-1]
            if tr.status == "stopped":
                i = self._own_mark(j, last.position)
                if i is not None:
                    events.extend(Event(e.t, e.kind, self._psi(j, e.position)) for e in body[:-1])
                    target = Vertex(self.transfer(i, j))
                    t = last.t
                    events.append(Event(t, "revival", target))
                    if watch is not None and target.id in watch.vertices:
                        return Trajectory(events, "stopped")
                    j, pos = -j, target
                    continue
            for e in body:
                p = e.position
                if isinstance(p, EdgePoint):
                    p = origin.get((p.edge, p.x)) or self._psi(j, p)
                events.append(Event(e.t, e.kind, p))
            return Trajectory(events, tr.status)


# --------------------------------------------------------------------------
# the staged construction
# --------------------------------------------------------------------------

@dataclass
class StagedPipeline:
    """The processes X1 ... X5 of the construction together with their symbolic data."""

    graph: MetricGraph
    target: dict[str, FWData]
    delta: dict[str, float]
    eps: float
    stages: dict[str, Process]
    trace: list[TraceStage]
    kernels: dict[str, JumpMeasure]

    def run(self, start, horizon, stream, watch=None, t0=0.0):
        return self.stages["X5"].run(start, horizon, stream, watch, t0)


def _local_tree(h: MetricGraph, data: Mapping[str, FWData], eps: float) -> Process:
    """Recursively peel the last vertex; leaves are star processes with fake cemeteries."""
    if len(h.vertices) == 1:
        v = h.vertices[0]
        return FakeCemetery(DirectProcess(h, data, eps), {v: fake_cemetery(v)})
    dec = peel_last(h)
    minus = _local_tree(dec.sides[-1], restrict_to_side(dec, -1, data), eps)
    plus = _local_tree(dec.sides[1], restrict_to_side(dec, 1, data), eps)
    return Glued(dec, minus, plus)


def construct_paper_pipeline(graph: MetricGraph, fw: Mapping[str, FWData],
                             delta: Mapping[str, float] | None = None, eps: float = 0.01) -> StagedPipeline:
    """Build X5 = kill_{box}(revive_kappa(kill_{box^v}(adjoin_box(glue(stars))))).

    Star leaves carry the local data ``(q1, p2, p3, q4_local)`` with their
    killing turned into a jump to the vertex's fake cemetery.
    """
    fw = dict(fw)
    trace = pipeline_trace(graph, fw, delta)
    delta = resolve_deltas(graph, delta)
    if not eps < min(delta.values()):
        raise StageError("split", f"eps={eps} must be below every delta ({min(delta.values())})")
    local = {}
    for v in graph.vertices:
        q1, near, _ = split_local(fw[v], graph, v, delta[v])
        d = fw[v]
        local[v] = FWData(float(q1), {l: float(w) for l, w in d.p2.items()}, float(d.p3),
                          JumpMeasure(tuple((g, float(w)) for g, w in near)))
    problems = check_assignment(local, graph, normalized=False)
    if problems:
        raise StageError("split", "; ".join(problems))
    try:
        x1 = _local_tree(graph, local, eps)
    except (FWError, SamplerError) as exc:
        raise StageError("glued", str(exc)) from None
    x2 = Adjoined(x1, [BOX])
    x3 = KilledOnSet(x2, [fake_cemetery(v) for v in graph.vertices])
    kernels = revival_kernels(graph, fw, delta)
    kernels = {v: JumpMeasure(tuple((g, float(w)) for g, w in k)) for v, k in kernels.items()}
    try:
        x4 = Revived(x3, kernels, graph, delta)
    except PipelineError as exc:
        raise StageError("revived", str(exc)) from None
    x5 = KilledOnSet(x4, [BOX])
    stages = {"X1": x1, "X2": x2, "X3": x3, "X4": x4, "X5": x5}
    return StagedPipeline(graph, fw, delta, float(eps), stages, trace, kernels)


# functional spellings of the wrappers

def kill_on_set(p: Process, F: Iterable[GraphPoint]) -> KilledOnSet:
    return KilledOnSet(p, F)


def attach_fake_cemetery(p: Process, targets: Mapping[str, Aux]) -> FakeCemetery:
    return FakeCemetery(p, targets)


def revive_with_kernel(p: Process, kernels: Mapping[str, JumpMeasure]) -> Revived:
    return Revived(p, kernels)


def decompose_and_glue(dec: SubgraphDecomposition, minus: Process, plus: Process) -> Glued:
    return Glued(dec, minus, plus)
