"""Direct path simulation: exact interval exits inside edges, an ε-shell scheme at vertices."""
from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Union

import numpy as np

from . import kernels
from .fw import FWData, FWError, check_assignment
from .graph import (
    INF, Aux, Cemetery, EdgePoint, GraphPoint, MetricGraph,
    Vertex, distance, require_valid,
)

EVENT_KINDS = ("start", "edge_exit", "vertex_resolution", "hold", "jump", "revival", "kill", "horizon")
MARK_TOL = 1e-12


class SamplerError(ValueError):
    """Invalid sampling request or unsupported vertex data."""


# --------------------------------------------------------------------------
# randomness
# --------------------------------------------------------------------------

class RandomStream:
    """Deterministic stream addressed by ``(seed, key)``; children extend the key."""

    __slots__ = ("seed", "key", "_rng")

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._rng = None

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
            self._rng = np.random.Generator(np.random.PCG64(ss))
        return self._rng

    def child(self, i: int) -> "RandomStream":
        return RandomStream(self.seed, self.key + (int(i),))

    def __getstate__(self):
        return self.seed, self.key

    def __setstate__(self, state):
        self.seed, self.key = state
        self._rng = None

    def __repr__(self):
        return f"RandomStream({self.seed}, {self.key})"


def as_rng(stream) -> np.random.Generator:
    if isinstance(stream, RandomStream):
        return stream.rng
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected RandomStream or numpy Generator, got {type(stream).__name__}")


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------

class Event(NamedTuple):
    t: float
    kind: str
    position: GraphPoint


@dataclass
class Trajectory:
    events: list[Event]
    status: str  # "killed", "horizon" or "stopped" (a watch fired)

    @property
    def killed(self) -> bool:
        return self.status == "killed"

    @property
    def end(self) -> Event:
        return self.events[-1]

    @property
    def lifetime(self) -> float:
        return self.events[-1].t if self.killed else INF

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e.kind == kind)

    def csv_rows(self):
        for e in self.events:
            yield (repr(float(e.t)), e.kind) + location_fields(e.position)


CSV_HEADER = ("t", "kind", "location_kind", "id", "coordinate")


def location_fields(p: GraphPoint) -> tuple[str, str, str]:
    if isinstance(p, Vertex):
        return "vertex", p.id, ""
    if isinstance(p, EdgePoint):
        return "edge", p.edge, repr(float(p.x))
    if isinstance(p, Aux):
        return "aux", p.id, ""
    return "cemetery", "", ""


def trajectory_csv(traj: Trajectory) -> str:
    lines = [",".join(CSV_HEADER)]
    lines.extend(",".join(row) for row in traj.csv_rows())
    return "\n".join(lines) + "\n"


def check_trajectory(traj: Trajectory, graph: MetricGraph | None = None) -> list[str]:
    """Violations of the trajectory invariants."""
    out = []
    ev = traj.events
    if not ev or ev[0].kind != "start":
        out.append("first event is not a start event")
    for a, b in zip(ev, ev[1:]):
        if b.t < a.t:
            out.append(f"time decreases at {b}")
        if a.kind == "kill":
            out.append("events after a kill")
        if graph is not None and b.kind == "edge_exit":
            if not _same_edge(graph, a.position, b.position):
                out.append(f"diffusion between {a.position} and {b.position} leaves an edge")
    if any(e.kind not in EVENT_KINDS for e in ev):
        out.append("unknown event kind")
    if (traj.status == "killed") != (ev[-1].kind == "kill"):
        out.append("status does not match the final event")
    return out


def _same_edge(g: MetricGraph, a: GraphPoint, b: GraphPoint) -> bool:
    def edges(p):
        if isinstance(p, EdgePoint):
            return {p.edge}
        if isinstance(p, Vertex) and p.id in g.incidence:
            return set(g.edges_at(p.id))
        return set()
    return bool(edges(a) & edges(b))


# --------------------------------------------------------------------------
# watches: where a run should stop early
# --------------------------------------------------------------------------

class PointSet:
    def __init__(self, points: Iterable[GraphPoint]):
        self.points = frozenset(points)

    def __call__(self, p: GraphPoint) -> bool:
        return p in self.points


class OutsideBall:
    """Points at distance ``>= r`` from ``v`` (auxiliary points included)."""

    def __init__(self, graph: MetricGraph, v: str, r: float):
        self.graph, self.v, self.r = graph, v, r

    def __call__(self, p: GraphPoint) -> bool:
        return distance(self.graph, Vertex(self.v), p) >= self.r


class AnyOf:
    def __init__(self, *regions):
        self.regions = tuple(r for r in regions if r is not None)

    def __call__(self, p: GraphPoint) -> bool:
        return any(r(p) for r in self.regions)


@dataclass(frozen=True, eq=False)
class Watch:
    """Stopping rule for a run.

    ``marks`` are edge coordinates that diffusion may not cross; ``vertices``
    stop the run on arrival; ``region`` is tested at points reached
    discontinuously (jumps, revivals).
    """

    marks: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    vertices: frozenset[str] = frozenset()
    region: Callable[[GraphPoint], bool] | None = None
    budget: int | None = None  # maximal number of events before giving up

    def __post_init__(self):
        object.__setattr__(self, "marks", {l: tuple(sorted(xs)) for l, xs in self.marks.items() if xs})
        object.__setattr__(self, "vertices", frozenset(self.vertices))

    def on_mark(self, p: GraphPoint) -> bool:
        if isinstance(p, EdgePoint):
            ms = self.marks.get(p.edge)
            if ms:
                k = bisect_left(ms, p.x - MARK_TOL)
                return k < len(ms) and abs(ms[k] - p.x) <= MARK_TOL
        return False

    def landed(self, p: GraphPoint) -> bool:
        if isinstance(p, Vertex) and p.id in self.vertices:
            return True
        if self.on_mark(p):
            return True
        return self.region is not None and bool(self.region(p))

    def with_region(self, extra) -> "Watch":
        region = extra if self.region is None else AnyOf(extra, self.region)
        return Watch(self.marks, self.vertices, region, self.budget)


def ball_watch(graph: MetricGraph, v: str, r: float, budget: int | None = None) -> Watch:
    """Stop on leaving the open ball of radius ``r`` around ``v``."""
    if not 0 < r < graph.min_incident_length(v):
        raise SamplerError(f"ball radius {r} must be positive and below every edge length at {v}")
    marks: dict[str, list[float]] = {}
    for l in graph.edges_at(v):
        marks.setdefault(l, []).append(graph.point_at(v, l, r).x)
    return Watch({l: tuple(xs) for l, xs in marks.items()}, frozenset(), OutsideBall(graph, v, r), budget)


# --------------------------------------------------------------------------
# sampling primitives
# --------------------------------------------------------------------------

def sample_interval_exit(x: float, R: float, stream) -> tuple[float, float]:
    """Exit side (``0.0`` or ``R``) and exit time of Brownian motion from ``(0, R)`` started at ``x``."""
    if not 0 < x < R:
        raise SamplerError(f"start {x} is not inside (0, {R})")
    rng = as_rng(stream)
    side, t = kernels.interval_exit(float(x), float(R), rng.random(), rng.random())
    return (float(R) if side else 0.0), t


def sample_ball_exit_time(eps: float, stream) -> float:
    """Exit time of Brownian motion from ``(-eps, eps)`` started at 0."""
    if not eps > 0:
        raise SamplerError("eps must be positive")
    return kernels.ball_exit_time(float(eps), as_rng(stream).random())


class EdgeOutcome(NamedTuple):
    edge: str
    placement: float


class KillOutcome(NamedTuple):
    pass


class JumpOutcome(NamedTuple):
    target: GraphPoint


class TrapOutcome(NamedTuple):
    pass


Resolution = Union[EdgeOutcome, KillOutcome, JumpOutcome, TrapOutcome]


class VertexOutcome(NamedTuple):
    resolution: Resolution
    duration: float


class _VertexPlan:
    """Precomputed categorical tables for one vertex at one ε."""

    __slots__ = ("outcomes", "cum", "eps", "hold", "shell")

    def __init__(self, d: FWData, eps: float, v: str = "?"):
        P2 = float(d.P2)
        p1, p3 = float(d.p1), float(d.p3)
        self.eps = eps
        if P2 > 0:
            self.shell = True
            outs = [EdgeOutcome(l, eps) for l, w in d.p2.items() if w > 0]
            ws = [float(w) for w in d.p2.values() if w > 0]
            if p1 > 0:
                outs.append(KillOutcome())
                ws.append(eps * p1)
            for g, w in d.p4:
                outs.append(JumpOutcome(g))
                ws.append(eps * float(w))
            self.hold = eps * p3 / P2
        elif p3 > 0:
            # no reflection: exponential holding, then kill or jump
            self.shell = False
            outs, ws = [], []
            if p1 > 0:
                outs.append(KillOutcome())
                ws.append(p1)
            for g, w in d.p4:
                outs.append(JumpOutcome(g))
                ws.append(float(w))
            total = sum(ws)
            self.hold = p3 / total if total > 0 else INF
        else:
            raise SamplerError(f"vertex {v}: pure-jump vertex unsupported (sum p2 + p3 = 0)")
        total = sum(ws)
        acc, cum = 0.0, []
        for w in ws:
            acc += w
            cum.append(acc / total if total > 0 else 1.0)
        if cum:
            cum[-1] = 1.0
        self.outcomes = tuple(outs)
        self.cum = tuple(cum)

    def draw(self, rng: np.random.Generator) -> VertexOutcome:
        if not self.outcomes:
            return VertexOutcome(TrapOutcome(), INF)
        k = bisect_right(self.cum, rng.random())
        out = self.outcomes[min(k, len(self.outcomes) - 1)]
        if self.shell:
            dur = kernels.ball_exit_time(self.eps, rng.random())
            if self.hold > 0:
                dur += rng.exponential(self.hold)
        else:
            dur = rng.exponential(self.hold)
        return VertexOutcome(out, dur)


def vertex_resolution(d: FWData, eps: float, stream) -> VertexOutcome:
    """One visit of the ε-shell scheme at a vertex with data ``d``."""
    if not eps > 0:
        raise SamplerError("eps must be positive")
    return _VertexPlan(d, float(eps)).draw(as_rng(stream))


# --------------------------------------------------------------------------
# the direct process
# --------------------------------------------------------------------------

def check_epsilon(graph: MetricGraph, fw: Mapping[str, FWData], eps: float) -> None:
    if not eps > 0:
        raise SamplerError("eps must be positive")
    half = graph.min_internal_length() / 2
    if not eps < half:
        raise SamplerError(f"eps={eps} must be below half of every internal edge length ({half})")
    for v, d in fw.items():
        for g, _ in d.p4:
            dist = distance(graph, Vertex(v), g)
            if not eps < dist:
                raise SamplerError(f"vertex {v}: eps={eps} is not below the distance {dist} to jump target {g}")


class DirectProcess:
    """Brownian motion on ``graph`` with boundary data ``fw`` resolved by the ε-shell scheme.

    The data need not be normalized: the scheme only uses ratios of weights.
    """

    def __init__(self, graph: MetricGraph, fw: Mapping[str, FWData], eps: float):
        require_valid(graph)
        problems = check_assignment(fw, graph, normalized=False)
        if problems:
            raise FWError("; ".join(problems))
        eps = float(eps)
        check_epsilon(graph, fw, eps)
        self.graph = graph
        self.fw = dict(fw)
        self.eps = eps
        self.plans = {v: _VertexPlan(fw[v], eps, v) for v in graph.vertices}

    def contains(self, p: GraphPoint) -> bool:
        return isinstance(p, Aux) or self.graph.contains(p)

    def run(self, start: GraphPoint, horizon: float, stream, watch: Watch | None = None,
            t0: float = 0.0) -> Trajectory:
        g = self.graph
        rng = as_rng(stream)
        if isinstance(start, Cemetery):
            raise SamplerError("cannot start at the cemetery")
        pos = start if isinstance(start, Aux) else g.canonical(start)
        t = float(t0)
        events = [Event(t, "start", pos)]
        if t >= horizon:
            return Trajectory(events, "horizon")
        edges = g.edges
        marks = watch.marks if watch is not None else {}
        stop_vertices = watch.vertices if watch is not None else frozenset()
        budget = watch.budget if watch is not None and watch.budget else math.inf
        interval_exit = kernels.interval_exit

        while True:
            if len(events) > budget:
                raise SamplerError(f"event budget of {budget} exhausted; is a vertex trapping the path?")
            if isinstance(pos, Aux):
                events.append(Event(horizon, "horizon", pos))
                return Trajectory(events, "horizon")

            if isinstance(pos, Vertex):
                v = pos.id
                out, dur = self.plans[v].draw(rng)
                res_t = t + dur
                if isinstance(out, TrapOutcome):
                    events.append(Event(t, "hold", pos))
                    events.append(Event(horizon, "horizon", pos))
                    return Trajectory(events, "horizon")
                if res_t >= horizon:
                    events.append(Event(horizon, "horizon", pos))
                    return Trajectory(events, "horizon")
                t = res_t
                if isinstance(out, EdgeOutcome):
                    l = out.edge
                    e = edges[l]
                    ms = marks.get(l)
                    if ms:
                        hit = self._mark_within(e, v, ms)
                        if hit is not None:
                            events.append(Event(t, "vertex_resolution", EdgePoint(l, hit)))
                            return Trajectory(events, "stopped")
                    pos = g.point_at(v, l, out.placement)
                    events.append(Event(t, "vertex_resolution", pos))
                    continue
                if isinstance(out, KillOutcome):
                    events.append(Event(t, "kill", pos))
                    return Trajectory(events, "killed")
                pos = out.target
                if not isinstance(pos, Aux):
                    pos = g.canonical(pos)
                events.append(Event(t, "jump", pos))
                if watch is not None and watch.landed(pos):
                    return Trajectory(events, "stopped")
                continue

            # diffusion inside an edge up to the nearest endpoint or mark
            l, x = pos.edge, pos.x
            e = edges[l]
            R = e.length
            lo, hi = 0.0, R
            ms = marks.get(l)
            if ms:
                k = bisect_right(ms, x)
                if k > 0:
                    lo = ms[k - 1]
                if k < len(ms):
                    hi = ms[k]
            if hi == INF:
                z = rng.standard_normal()
                dt = (x - lo) ** 2 / (z * z) if z != 0.0 else INF
                c = lo
            else:
                side, dt = interval_exit(x - lo, hi - lo, rng.random(), rng.random())
                c = hi if side else lo
            if t + dt >= horizon:
                events.append(Event(horizon, "horizon", pos))
                return Trajectory(events, "horizon")
            t += dt
            if c == 0.0:
                pos = Vertex(e.tail)
            elif c == R:
                pos = Vertex(e.head)
            else:
                events.append(Event(t, "edge_exit", EdgePoint(l, c)))
                return Trajectory(events, "stopped")
            events.append(Event(t, "edge_exit", pos))
            if pos.id in stop_vertices:
                return Trajectory(events, "stopped")

    def _mark_within(self, e, v: str, ms: tuple[float, ...]) -> float | None:
        """The mark on ``e`` closest to ``v`` if it lies within the placement distance."""
        reach = self.eps + MARK_TOL
        if e.tail == v:
            return ms[0] if ms[0] <= reach else None
        return ms[-1] if e.length - ms[-1] <= reach else None


def simulate_direct(graph: MetricGraph, fw: Mapping[str, FWData], start: GraphPoint, horizon: float,
                    eps: float, stream, watch: Watch | None = None) -> Trajectory:
    return DirectProcess(graph, fw, eps).run(start, horizon, stream, watch)
