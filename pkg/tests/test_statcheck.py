import json
import math

import numpy as np
import pytest

from fwgraph.fixtures import half_line, jump_star, star_graph, sticky_data, walsh_data
from fwgraph.fw import FWData
from fwgraph.fw import JumpMeasure
from fwgraph.graph import CEMETERY, EdgePoint, Vertex
from fwgraph.kernels import conditional_time_many
from fwgraph.sampler import DirectProcess, RandomStream, SamplerError, trajectory_csv
from fwgraph.statcheck import (
    TestFunction, TestReport, boundary_functional, category_label, chi_square_two_sample, empirical_exit_law,
    exit_law_check, format_table, generator_residual, ks_two_sample, laplace_targets, run_paths, shell_exit_law,
)


def test_ks_identical_and_disjoint_samples():
    a = np.random.default_rng(0).random(2000)
    same = ks_two_sample(a, a, 0.05)
    assert same.statistic == 0.0 and same.passed
    far = ks_two_sample(a, a + 10.0, 0.05)
    assert far.statistic == 1.0 and not far.passed
    with pytest.raises(ValueError):
        ks_two_sample([], a)


def test_ks_calibration_on_ball_exit_times():
    rng = np.random.default_rng(1)
    n, reps = 10_000, 200
    passes = 0
    for _ in range(reps):
        a = 4 * 0.01 * conditional_time_many(np.full(n, 0.5), rng.random(n))
        b = 4 * 0.01 * conditional_time_many(np.full(n, 0.5), rng.random(n))
        passes += ks_two_sample(a, b, 0.05).passed
    rate = passes / reps
    assert abs(rate - 0.95) < 4 * math.sqrt(0.95 * 0.05 / reps)


def test_chi_square_two_sample():
    a = {"x": 500, "y": 300, "z": 200}
    assert chi_square_two_sample(a, a, 0.01).passed
    assert not chi_square_two_sample(a, {"x": 200, "y": 300, "z": 500}, 0.01).passed


def test_laplace_targets():
    left, right = laplace_targets(0.5, 1.0, 0.5)
    assert left == pytest.approx(0.44340, abs=1e-5) and right == pytest.approx(left)
    assert laplace_targets(0.3, 1.0, 0.0) == pytest.approx((0.7, 0.3))
    assert laplace_targets(0.999, 1.0, 1.0)[1] == pytest.approx(math.sinh(math.sqrt(2) * 0.999) / math.sinh(math.sqrt(2)))
    # small alpha approaches the hitting probabilities
    assert laplace_targets(0.3, 1.0, 1e-9) == pytest.approx((0.7, 0.3), abs=1e-8)


def test_shell_law_examples():
    probs, mean = shell_exit_law(FWData(0.5, {"a": 0.5}), 0.1)
    assert probs[("kill", None)] == pytest.approx(0.05 / 0.55)
    assert mean == pytest.approx(0.01)
    probs, mean = shell_exit_law(sticky_data()["v"], 0.1)
    assert mean == pytest.approx(0.11)
    probs, mean = shell_exit_law(FWData(0, {}, 1.0), 0.1)
    assert probs == {("horizon", None): 1.0} and mean == math.inf


def test_recovered_data_for_a_walsh_vertex():
    g = star_graph(3)
    est = empirical_exit_law(DirectProcess(g, walsh_data(), 0.05), "v", 0.05, 20_000, 2, graph=g)
    assert est.regime == "shell"
    assert sum(est.freqs.values()) == pytest.approx(1.0)
    for l, w in zip("abc", (0.5, 0.3, 0.2)):
        assert abs(est.recovered.p2[l] - w) < 4 * est.recovered_se[f"p2:{l}"]
    assert est.mean_tau == pytest.approx(0.0025, rel=0.05)


def test_jump_vertex_frequencies_match_the_shell_law():
    g, fw = jump_star()
    d = fw["v"]
    (atom, w), = list(d.p4)
    est = empirical_exit_law(DirectProcess(g, fw, 0.05), "v", 0.05, 40_000, 3, graph=g)
    probs, _ = shell_exit_law(d, 0.05)
    for cat, p in probs.items():
        assert abs(est.freqs.get(cat, 0.0) - p) < 4 * math.sqrt(p * (1 - p) / est.n)
    assert est.recovered.p4.targets() == [atom]


def test_trap_vertex_regime():
    g = half_line()
    trap = {"v": FWData(0, {}, 1.0)}
    est = empirical_exit_law(DirectProcess(g, trap, 0.1), "v", 0.1, 1000, 4, graph=g, horizon=5.0)
    assert est.regime == "trap" and est.recovered.p3 == math.inf


def test_exit_law_check_flags_wrong_reference():
    g = star_graph(3)
    proc = DirectProcess(g, walsh_data(), 0.05)
    ok = exit_law_check(proc, g, "v", walsh_data()["v"], 0.05, 20_000, 5)
    assert all(r.passed for r in ok)
    swapped = FWData(0, {"a": 0.3, "b": 0.5, "c": 0.2})
    bad = exit_law_check(proc, g, "v", swapped, 0.05, 20_000, 5)
    assert not bad[0].passed


def test_exit_law_rejects_empty_runs():
    g = star_graph(3)
    with pytest.raises(SamplerError):
        empirical_exit_law(DirectProcess(g, walsh_data(), 0.05), "v", 0.05, 0, 0, graph=g)


def test_run_paths_does_not_depend_on_workers():
    g = star_graph(3)
    proc = DirectProcess(g, walsh_data(), 0.05)
    one = run_paths(proc, Vertex("v"), 0.2, 40, 6, reduce=trajectory_csv, key=(1,))
    many = run_paths(proc, Vertex("v"), 0.2, 40, 6, reduce=trajectory_csv, key=(1,), workers=3)
    assert one == many
    assert one[5] == trajectory_csv(proc.run(Vertex("v"), 0.2, RandomStream(6, (1, 5))))


def test_test_function_evaluation():
    f = TestFunction.from_edges({"a": (1.0, 2.0, 0.5), "b": (1.0, -1.0, 0.5)}, {EdgePoint("b", 3.0): 4.0})
    assert f.vertex_curvature == 0.5
    assert f.on_edge("a", 0.1) == pytest.approx(1.0 + 0.2 + 0.0025)
    assert f.at_category(("kill", None), 0.1) == 0.0
    assert f.at_category(("jump", CEMETERY), 0.1) == 0.0
    assert f.at_category(("jump", EdgePoint("b", 3.0)), 0.1) == 4.0
    with pytest.raises(ValueError):
        f.at_category(("jump", Vertex("w")), 0.1)
    with pytest.raises(ValueError, match="discontinuous"):
        TestFunction.from_edges({"a": (1.0, 0, 0), "b": (2.0, 0, 0)})


def test_boundary_functional():
    d = FWData(0.1, {"a": 0.5, "b": 0.4}, 0.2, JumpMeasure.of({EdgePoint("b", 3.0): 0.3}))
    f = TestFunction(1.0, {"a": 1.0, "b": -1.0}, {"a": 2.0, "b": 2.0}, {EdgePoint("b", 3.0): 3.0})
    assert boundary_functional(d, f) == pytest.approx(0.1 - (0.5 - 0.4) + 0.2 - 0.3 * 2.0)


def test_residual_sign_follows_the_boundary_condition():
    g = star_graph(3)
    fw = walsh_data()
    f = TestFunction(0.0, {"a": 1.0, "b": 0.0, "c": 0.0})  # sum p2 s = 0.5
    rep = generator_residual(lambda e: DirectProcess(g, fw, e), g, f, "v", (0.1, 0.05), 20_000, 7, data=fw["v"])
    assert rep.passed
    assert rep.details["prediction"] == pytest.approx(0.5)
    assert rep.statistic > 0.4
    with pytest.raises(ValueError):
        generator_residual(lambda e: DirectProcess(g, fw, e), g, f, "v", (0.1,), 10, 7)


def test_reports_serialize():
    rep = TestReport("x", math.inf, False, p_value=0.0, ci=(0.0, 1.0), details={Vertex("v"): np.float64(1.5)})
    doc = json.loads(rep.to_json())
    assert doc["statistic"] == "inf" and doc["details"] == {"v": 1.5}
    assert "runtime" not in json.loads(rep.to_json(timings=False))
    table = format_table([rep, TestReport("y", 0.5, True, p_value=0.3)])
    assert "FAIL" in table and "PASS" in table
    assert category_label(("edge", "a")) == "edge:a" and category_label(("kill", None)) == "kill"
