import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from fwgraph.fixtures import fig1_boundary, fig1_graph, half_line, two_vertex
from fwgraph.fw import (
    FWData, FWError, JumpMeasure, StageError, assignments_equal, check_assignment, check_data, glue_transform,
    kill_transform, normalization_sum, normalize, pipeline_trace, point_mass, resolve_deltas, restrict_to_side,
    revival_kernels, revive_transform, split_local,
)
from fwgraph.graph import BOX, Aux, CEMETERY, EdgePoint, Vertex, decompose, fake_cemetery, peel_last


def test_normalize_exact_without_atoms():
    g = half_line()
    d, c = normalize(FWData(F(1), {"a": F(1)}, F(2)), g, "v")
    assert c == F(1, 4)
    assert d == FWData(F(1, 4), {"a": F(1, 4)}, F(1, 2))


def test_normalize_discounts_atoms_by_distance():
    g = half_line()
    raw = FWData(0, {"a": 1.0}, 0, JumpMeasure.of({EdgePoint("a", 2.0): 1.0}))
    d, c = normalize(raw, g, "v")
    assert c == pytest.approx(1 / (1 + (1 - math.exp(-2.0))))
    assert normalization_sum(d, g, "v") == pytest.approx(1.0, abs=1e-15)


def test_normalize_rejects_all_zero():
    with pytest.raises(FWError):
        normalize(FWData(0, {"a": 0}), half_line(), "v")


def test_cemetery_atoms_count_fully():
    g = half_line()
    d = FWData(0, {"a": 1.0}, 0, JumpMeasure.of({CEMETERY: 1.0}))
    assert normalization_sum(d, g, "v") == 2.0


def test_split_local_on_fig1():
    g = fig1_graph()
    d = fig1_boundary(exact=True)["v1"]
    q1, local, far = split_local(d, g, "v1", 0.405)
    assert local.targets() == [EdgePoint("i4", 0.125)]
    assert far.targets() == [EdgePoint("i11", 0.5)]
    assert q1 == d.p1 + far.mass
    with pytest.raises(FWError):
        split_local(d, g, "v1", 0.9)  # i5 has length 0.9


def test_kill_transform_moves_jumps_into_killing():
    box = fake_cemetery("v")
    d = FWData(F(1, 10), {"a": F(1, 2)}, 0, JumpMeasure.of({box: F(1, 5), EdgePoint("a", 3.0): F(1, 5)}))
    k = kill_transform(d, [box])
    assert k.p1 == F(3, 10)
    assert k.p4.targets() == [EdgePoint("a", 3.0)]
    assert kill_transform(k, [box]) == k


def test_revive_transform_turns_killing_into_jumps():
    kappa = JumpMeasure.of({Vertex("w"): F(1, 4), BOX: F(3, 4)})
    d = FWData(F(2, 5), {"a": F(3, 5)})
    r = revive_transform(d, kappa)
    assert r.p1 == 0
    assert r.p4.as_dict() == {Vertex("w"): F(1, 10), BOX: F(3, 10)}
    with pytest.raises(FWError):
        revive_transform(d, JumpMeasure.of({BOX: F(1, 2)}))
    with pytest.warns(UserWarning):
        assert revive_transform(FWData(0, {"a": 1}), kappa) == FWData(0, {"a": 1})


def test_revival_kernel_masses():
    g = fig1_graph()
    fw = fig1_boundary(exact=True)
    kernels = revival_kernels(g, fw, resolve_deltas(g))
    assert set(kernels) == {"v1", "v2", "v4", "v5"}  # v3 and v6 neither kill nor jump far
    for k in kernels.values():
        assert k.mass == 1
    assert kernels["v4"].as_dict() == {Vertex("v2"): 1}
    assert kernels["v2"].as_dict() == {BOX: 1}


def test_restrict_and_glue_round_trip_on_fig1():
    g = fig1_graph()
    dec = decompose(g, ["v1", "v2", "v3"])
    fw = {v: FWData(0, d.p2, d.p3, d.p4) for v, d in fig1_boundary(exact=True).items()}
    fw["v1"] = FWData(0, fw["v1"].p2, fw["v1"].p3, JumpMeasure.of({EdgePoint("i4", 0.125): F(1, 10)}))
    fw["v4"] = FWData(0, fw["v4"].p2, fw["v4"].p3)
    minus, plus = restrict_to_side(dec, -1, fw), restrict_to_side(dec, 1, fw)
    assert "i4^-1" in minus["v1"].p2
    assert minus["v1"].p4.targets() == [EdgePoint("i4^-1", 0.125)]
    assert glue_transform(dec, minus, plus) == fw


def test_glue_rejects_killing_and_excrescent_jumps():
    g = fig1_graph()
    dec = decompose(g, ["v1", "v2", "v3"])
    with pytest.raises(FWError):
        glue_transform(dec, {"v1": FWData(F(1, 2), {"i1": F(1, 2)})}, {})
    bad = FWData(0, {"i1": 1}, 0, JumpMeasure.of({EdgePoint("i4^-1", 5.0): 1}))
    with pytest.raises(FWError):
        glue_transform(dec, {"v1": bad}, {})


def test_restrict_rejects_jumps_to_the_other_side():
    g = fig1_graph()
    dec = decompose(g, ["v1", "v2", "v3"])
    fw = {"v1": FWData(0, {"i1": 1}, 0, JumpMeasure.of({Vertex("v5"): 1}))}
    fw.update({v: FWData(0, {g.edges_at(v)[0]: 1}) for v in g.vertices if v != "v1"})
    with pytest.raises(FWError):
        restrict_to_side(dec, -1, fw)


def test_trace_stages_on_fig1_are_exact():
    g = fig1_graph()
    fw = fig1_boundary(exact=True)
    trace = pipeline_trace(g, fw)
    assert [s.label for s in trace] == ["split", "fake_cemetery", "glued", "killed", "revived", "final"]
    assert [s.space for s in trace] == ["subgraphs", "subgraphs", "graph", "graph", "graph", "graph"]
    assert trace[-1].assignment == fw
    fake = trace[1].assignment
    assert all(d.p1 == 0 for d in fake.values())
    assert fake["v2"].p4.as_dict() == {Aux("box:v2"): fw["v2"].p1}
    assert all(d.p1 == 0 for d in trace[4].assignment.values())  # nothing dies after revival
    assert trace[-1].c0["v1"] == pytest.approx(1.0)


def test_trace_is_idempotent():
    g = fig1_graph()
    fw = fig1_boundary(exact=True)
    once = pipeline_trace(g, fw)
    twice = pipeline_trace(g, once[-1].assignment)
    assert [s.assignment for s in once] == [s.assignment for s in twice]


def test_trace_single_vertex_graph():
    g = half_line()
    fw = {"v": normalize(FWData(F(1), {"a": F(1)}, F(1)), g, "v")[0]}
    trace = pipeline_trace(g, fw)
    assert trace[0].space == "graph"
    assert trace[-1].assignment == fw


def test_trace_rejects_unnormalized_input():
    g = half_line()
    with pytest.raises(StageError):
        pipeline_trace(g, {"v": FWData(1, {"a": 1})})


def test_data_checks():
    g, fw = two_vertex()
    assert check_assignment(fw, g) == []
    bad = FWData(0, {"i": 1.0, "eb": 0.1})
    assert any("non-incident" in m for m in check_data(bad, g, "a", normalized=False))
    assert any("pure-jump" in m for m in check_data(FWData(1.0), g, "a", normalized=False))
    assert any("itself" in m for m in check_data(FWData(0, {"i": 1}, 0, {Vertex("a"): 1}), g, "a",
                                                  normalized=False))
    assert any("no boundary data" in m for m in check_assignment({"a": fw["a"]}, g))


def test_float_comparison_tolerance():
    g = fig1_graph()
    a = fig1_boundary()
    b = {v: d.scaled(1 + 1e-14) for v, d in a.items()}
    assert not assignments_equal(a, b)
    assert assignments_equal(a, b, tol=1e-12)


# --- properties ---------------------------------------------------------

FIG1 = fig1_graph()
DELTAS = resolve_deltas(FIG1)


@st.composite
def fig1_assignments(draw):
    """Random rational data on the figure graph, normalized then made exact."""
    weight = st.integers(0, 9).map(lambda k: F(k, 10))
    internal = sorted(FIG1.internal)
    out = {}
    for v in FIG1.vertices:
        p2 = {l: draw(weight) + F(1, 20) for l in FIG1.edges_at(v)}
        atoms = {}
        for _ in range(draw(st.integers(0, 2))):
            e = draw(st.sampled_from(internal))
            x = draw(st.sampled_from([0.1, 0.25, 0.5]))
            p = EdgePoint(e, x * FIG1.length(e))
            if FIG1.distance(Vertex(v), p) > 0.05:
                atoms[p] = draw(weight)
        raw = FWData(draw(weight), p2, draw(weight), JumpMeasure.of({p: w for p, w in atoms.items() if w > 0}))
        d, _ = normalize(raw.scaled(1.0), FIG1, v)
        out[v] = FWData(F(d.p1), {l: F(w) for l, w in d.p2.items()}, F(d.p3),
                        JumpMeasure(tuple((p, F(w)) for p, w in d.p4)))
    return out


@settings(max_examples=40, deadline=None)
@given(fig1_assignments())
def test_trace_closes_exactly_for_random_data(fw):
    trace = pipeline_trace(FIG1, fw, DELTAS)
    assert trace[-1].assignment == fw


@settings(max_examples=40, deadline=None)
@given(fig1_assignments(), st.integers(1, 5))
def test_restrict_then_glue_is_identity(fw, k):
    dec = decompose(FIG1, FIG1.vertices[:k])
    free = {v: FWData(0, d.p2, d.p3) for v, d in fw.items()}
    assert glue_transform(dec, restrict_to_side(dec, -1, free), restrict_to_side(dec, 1, free)) == free


@settings(max_examples=60, deadline=None)
@given(fig1_assignments())
def test_kill_then_revive_preserves_total_mass(fw):
    for v, d in fw.items():
        q1, local, far = split_local(d, FIG1, v, DELTAS[v])
        assert local.mass + far.mass == d.p4.mass
        if q1 > 0:
            kappa = (point_mass(BOX, d.p1) + far) * (1 / q1)
            back = revive_transform(FWData(q1, d.p2, d.p3, local), kappa)
            assert kill_transform(back, [BOX]) == d


def test_peel_last_is_the_trace_decomposition():
    assert peel_last(FIG1).parts[1] == {"v6"}
