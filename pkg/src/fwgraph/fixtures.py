"""Small graphs and boundary data used by the tests, the acceptance suite and ``fwgraph verify``."""
from __future__ import annotations

from fractions import Fraction

from .fw import FWData, JumpMeasure, normalize
from .graph import EdgePoint, MetricGraph, Vertex


def interval_graph(R: float = 1.0) -> MetricGraph:
    return MetricGraph(("a", "b"), {"i": ("a", "b", R)})


def absorbing_ends() -> dict[str, FWData]:
    """Kill on arrival: no reflection, a short hold, then death."""
    return {"a": FWData(0.5, {}, 0.5), "b": FWData(0.5, {}, 0.5)}


def reflecting_ends() -> dict[str, FWData]:
    return {"a": FWData(0, {"i": 1.0}), "b": FWData(0, {"i": 1.0})}


def star_graph(n: int = 3) -> MetricGraph:
    return MetricGraph(("v",), {}, {chr(ord("a") + k): "v" for k in range(n)})


def walsh_data(weights=(0.5, 0.3, 0.2)) -> dict[str, FWData]:
    return {"v": FWData(0, dict(zip("abc", weights)))}


def half_line() -> MetricGraph:
    return MetricGraph(("v",), {}, {"a": "v"})


def elastic_data(p1: float = 0.5, p2: float = 0.5) -> dict[str, FWData]:
    return {"v": FWData(p1, {"a": p2})}


def sticky_data(p2: float = 0.5, p3: float = 0.5) -> dict[str, FWData]:
    return {"v": FWData(0, {"a": p2}, p3)}


def jump_star() -> tuple[MetricGraph, dict[str, FWData]]:
    """Two rays with one jump atom far out on the second; normalized."""
    g = MetricGraph(("v",), {}, {"a": "v", "b": "v"})
    raw = FWData(0, {"a": 0.4, "b": 0.3}, 0, JumpMeasure.of({EdgePoint("b", 2.0): 0.3}))
    d, _ = normalize(raw, g, "v")
    return g, {"v": d}


def two_vertex() -> tuple[MetricGraph, dict[str, FWData]]:
    """One internal edge of length 1 and a ray at each end, with generic data."""
    g = MetricGraph(("a", "b"), {"i": ("a", "b", 1.0)}, {"ea": "a", "eb": "b"})
    raw = {
        "a": FWData(0.1, {"i": 0.5, "ea": 0.3}, 0.2, JumpMeasure.of({EdgePoint("i", 0.1): 0.2})),
        "b": FWData(0.0, {"i": 0.6, "eb": 0.2}, 0.1, JumpMeasure.of({EdgePoint("ea", 0.5): 0.4})),
    }
    return g, {v: normalize(d, g, v)[0] for v, d in raw.items()}


# the graph of the decomposition figure: a triangle on v1, v2, v3, a multi-edge
# cluster on v4, v5, v6 and four edges between the two groups
FIG1_INTERNAL = {
    "i1": ("v1", "v2", 1.0),
    "i2": ("v2", "v3", 0.8),
    "i3": ("v3", "v1", 1.2),
    "i4": ("v1", "v6", 1.5),
    "i5": ("v6", "v1", 0.9),
    "i6": ("v3", "v6", 1.1),
    "i7": ("v4", "v3", 1.3),
    "i8": ("v4", "v5", 0.6),
    "i9": ("v4", "v5", 0.7),
    "i10": ("v4", "v5", 1.0),
    "i11": ("v4", "v6", 0.9),
}
FIG1_EXTERNAL = {
    "e1": "v1", "e2": "v2", "e3": "v2", "e4": "v4", "e5": "v4", "e6": "v5", "e7": "v5", "e8": "v6",
}


def fig1_graph() -> MetricGraph:
    return MetricGraph(("v1", "v2", "v3", "v4", "v5", "v6"), dict(FIG1_INTERNAL), dict(FIG1_EXTERNAL))


def _fig1_raw() -> dict[str, FWData]:
    F = Fraction
    return {
        "v1": FWData(0, {"i1": F(2, 10), "i3": F(1, 10), "i4": F(15, 100), "i5": F(1, 10), "e1": F(5, 100)}, F(1, 10),
                     JumpMeasure.of({EdgePoint("i4", 0.125): F(1, 10), EdgePoint("i11", 0.5): F(2, 10)})),
        "v2": FWData(F(3, 10), {"i1": F(3, 10), "i2": F(2, 10), "e2": F(1, 10), "e3": F(1, 10)}, 0),
        "v3": FWData(0, {"i2": F(1, 4), "i3": F(1, 4), "i6": F(1, 4), "i7": F(1, 4)}, 0),
        "v4": FWData(0, {"i7": F(1, 10), "i8": F(1, 10), "i9": F(1, 10), "i10": F(1, 10), "i11": F(1, 10),
                         "e4": F(1, 10), "e5": F(1, 10)}, F(1, 5), JumpMeasure.of({Vertex("v2"): F(1, 5)})),
        "v5": FWData(F(1, 10), {"i8": F(2, 10), "i9": F(2, 10), "i10": F(1, 10), "e6": F(1, 10), "e7": F(1, 10)}, 0),
        "v6": FWData(0, {"i4": F(1, 5), "i5": F(1, 5), "i6": F(1, 5), "i11": F(1, 5), "e8": F(1, 10)}, F(1, 10),
                     JumpMeasure.of({EdgePoint("i5", 0.125): F(1, 10)})),
    }


def fig1_boundary(exact: bool = False) -> dict[str, FWData]:
    """Generic data on the figure graph with local atoms and cross-subgraph jumps.

    With ``exact=True`` the weights are fractions: the floating normalization
    factor is applied and each weight is then converted exactly, so the
    normalization sum is 1 up to rounding while every later transformation is
    exact.
    """
    g = fig1_graph()
    out = {}
    for v, raw in _fig1_raw().items():
        d, _ = normalize(raw.scaled(1.0), g, v)
        if exact:
            d = FWData(Fraction(d.p1), {l: Fraction(w) for l, w in d.p2.items()}, Fraction(d.p3),
                       JumpMeasure(tuple((p, Fraction(w)) for p, w in d.p4)))
        out[v] = d
    return out
