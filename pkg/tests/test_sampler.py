import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fwgraph.fixtures import (
    absorbing_ends, elastic_data, fig1_boundary, fig1_graph, half_line, interval_graph, jump_star, star_graph,
    sticky_data, walsh_data,
)
from fwgraph.fw import FWData, FWError, JumpMeasure
from fwgraph.graph import Aux, EdgePoint, Vertex
from fwgraph.sampler import (
    CSV_HEADER, DirectProcess, EdgeOutcome, JumpOutcome, KillOutcome, RandomStream, SamplerError, TrapOutcome,
    Watch, ball_watch, check_epsilon, check_trajectory, sample_ball_exit_time, sample_interval_exit,
    simulate_direct, trajectory_csv, vertex_resolution,
)


def test_interval_exit_side_and_mean():
    rng = np.random.default_rng(1)
    draws = [sample_interval_exit(0.5, 1.0, rng) for _ in range(40_000)]
    t = np.array([d[1] for d in draws])
    far = np.mean([d[0] == 1.0 for d in draws])
    assert abs(far - 0.5) < 4 * 0.5 / math.sqrt(len(draws))
    assert abs(t.mean() - 0.25) < 4 * t.std() / math.sqrt(len(t))


def test_interval_exit_rejects_outside_start():
    with pytest.raises(SamplerError):
        sample_interval_exit(1.2, 1.0, np.random.default_rng(0))


def test_ball_exit_mean_and_scaling():
    rng = np.random.default_rng(2)
    t = np.array([sample_ball_exit_time(0.1, rng) for _ in range(40_000)])
    assert abs(t.mean() - 0.01) < 4 * t.std() / math.sqrt(len(t))
    # Brownian scaling: the same uniforms give times in ratio eps^2
    a = sample_ball_exit_time(0.1, RandomStream(5))
    b = sample_ball_exit_time(1.0, RandomStream(5))
    assert a == pytest.approx(0.01 * b, rel=1e-12)


def test_ball_exit_tail_frequency():
    rng = np.random.default_rng(3)
    t = np.array([sample_ball_exit_time(1.0, rng) for _ in range(40_000)])
    p = float(np.mean(t > 1.0))
    assert abs(p - 0.37078) < 4 * math.sqrt(0.37 * 0.63 / len(t))


def test_walsh_resolution_frequencies():
    rng = np.random.default_rng(4)
    d = walsh_data()["v"]
    outs = [vertex_resolution(d, 0.05, rng).resolution for _ in range(20_000)]
    assert all(isinstance(o, EdgeOutcome) and o.placement == 0.05 for o in outs)
    freq = {l: sum(o.edge == l for o in outs) / len(outs) for l in "abc"}
    for l, w in zip("abc", (0.5, 0.3, 0.2)):
        assert abs(freq[l] - w) < 4 * math.sqrt(w * (1 - w) / len(outs))


def test_elastic_and_sticky_resolution():
    rng = np.random.default_rng(5)
    kills = [isinstance(vertex_resolution(elastic_data()["v"], 0.1, rng).resolution, KillOutcome)
             for _ in range(20_000)]
    target = 0.05 / 0.55
    assert abs(np.mean(kills) - target) < 4 * math.sqrt(target * (1 - target) / len(kills))
    durs = np.array([vertex_resolution(sticky_data()["v"], 0.1, rng).duration for _ in range(20_000)])
    assert abs(durs.mean() - 0.11) < 4 * durs.std() / math.sqrt(len(durs))


def test_hold_then_jump_without_reflection():
    d = FWData(0.5, {}, 0.5)
    out = vertex_resolution(d, 0.1, np.random.default_rng(6))
    assert isinstance(out.resolution, KillOutcome)
    trap = vertex_resolution(FWData(0, {}, 1.0), 0.1, np.random.default_rng(6))
    assert isinstance(trap.resolution, TrapOutcome) and trap.duration == math.inf


def test_pure_jump_vertex_is_rejected():
    with pytest.raises(SamplerError, match="pure-jump"):
        vertex_resolution(FWData(0, {}, 0, JumpMeasure.of({Vertex("w"): 1.0})), 0.1, np.random.default_rng(0))


def test_jump_outcome_targets():
    g, fw = jump_star()
    rng = np.random.default_rng(7)
    outs = [vertex_resolution(fw["v"], 0.1, rng).resolution for _ in range(5_000)]
    jumps = [o for o in outs if isinstance(o, JumpOutcome)]
    assert jumps and all(o.target == EdgePoint("b", 2.0) for o in jumps)


def test_epsilon_constraints():
    g = fig1_graph()
    fw = fig1_boundary()
    check_epsilon(g, fw, 0.1)
    with pytest.raises(SamplerError, match="half"):
        check_epsilon(g, fw, 0.3)  # i8 has length 0.6
    with pytest.raises(SamplerError, match="jump target"):
        check_epsilon(g, fw, 0.125)  # atom at distance 0.125 from v1
    with pytest.raises(FWError):
        DirectProcess(g, {"v1": fw["v1"]}, 0.05)


def test_absorbing_interval_hits_far_end_with_probability_x():
    g = interval_graph(1.0)
    proc = DirectProcess(g, absorbing_ends(), 0.05)
    n = 20_000
    ends = [proc.run(EdgePoint("i", 0.3), math.inf, RandomStream(8, (k,))).end for k in range(n)]
    assert all(e.kind == "kill" for e in ends)
    far = np.mean([e.position == Vertex("b") for e in ends])
    assert abs(far - 0.3) < 4 * math.sqrt(0.21 / n)


def test_reflecting_star_never_dies():
    g = star_graph(3)
    proc = DirectProcess(g, walsh_data(), 0.05)
    for k in range(200):
        tr = proc.run(Vertex("v"), 2.0, RandomStream(9, (k,)))
        assert tr.status == "horizon" and tr.end.t == 2.0
        assert tr.count("kill") == 0 and tr.count("jump") == 0
        assert check_trajectory(tr, g) == []


def test_horizon_before_start():
    proc = DirectProcess(half_line(), sticky_data(), 0.1)
    tr = proc.run(Vertex("v"), 1.0, RandomStream(0), t0=1.0)
    assert [e.kind for e in tr.events] == ["start"] and tr.status == "horizon"
    tr = proc.run(Aux("box"), 1.0, RandomStream(0))
    assert [e.kind for e in tr.events] == ["start", "horizon"]


def test_ball_watch_stops_at_the_shell():
    g = fig1_graph()
    proc = DirectProcess(g, fig1_boundary(), 0.05)
    watch = ball_watch(g, "v4", 0.2)
    for k in range(300):
        tr = proc.run(Vertex("v4"), 1e6, RandomStream(10, (k,)), watch)
        assert tr.status in ("stopped", "killed")
        if tr.status == "stopped":
            assert g.distance(Vertex("v4"), tr.end.position) >= 0.2 - 1e-9
    with pytest.raises(SamplerError):
        ball_watch(g, "v4", 0.6)


def test_event_budget():
    proc = DirectProcess(star_graph(3), walsh_data(), 0.05)
    with pytest.raises(SamplerError, match="budget"):
        proc.run(Vertex("v"), 1e9, RandomStream(0), Watch(budget=10))


def test_watch_marks_and_regions():
    w = Watch(marks={"a": (0.7, 0.2)}, vertices={"v"})
    assert w.marks["a"] == (0.2, 0.7)
    assert w.on_mark(EdgePoint("a", 0.2 + 1e-13))
    assert not w.on_mark(EdgePoint("a", 0.21))
    assert w.landed(Vertex("v")) and not w.landed(Vertex("u"))
    w2 = w.with_region(lambda p: p == Vertex("u"))
    assert w2.landed(Vertex("u")) and w2.landed(Vertex("v"))


def test_same_seed_same_path_and_streams_pickle():
    g = fig1_graph()
    proc = DirectProcess(g, fig1_boundary(), 0.05)
    a = proc.run(Vertex("v1"), 3.0, RandomStream(11, (3,)))
    b = proc.run(Vertex("v1"), 3.0, pickle.loads(pickle.dumps(RandomStream(11, (3,)))))
    assert trajectory_csv(a) == trajectory_csv(b)
    c = proc.run(Vertex("v1"), 3.0, RandomStream(11, (4,)))
    assert trajectory_csv(a) != trajectory_csv(c)


def test_csv_layout():
    tr = simulate_direct(half_line(), sticky_data(), Vertex("v"), 0.5, 0.1, RandomStream(12))
    lines = trajectory_csv(tr).splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == "0.0,start,vertex,v,"
    assert lines[-1].split(",")[:2] == ["0.5", "horizon"]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["v1", "v2", "v3", "v4", "v5", "v6"]),
       st.floats(0.1, 4.0))
def test_trajectory_invariants_on_fig1(seed, v, horizon):
    g = fig1_graph()
    tr = DirectProcess(g, fig1_boundary(), 0.05).run(Vertex(v), horizon, RandomStream(seed))
    assert check_trajectory(tr, g) == []
    assert tr.end.t <= horizon
    if tr.status == "horizon":
        assert tr.end.t == horizon
