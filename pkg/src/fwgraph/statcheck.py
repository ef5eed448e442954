"""Monte Carlo checks: exit laws at vertices, Laplace functionals, two-sample tests."""
from __future__ import annotations

import json
import math
import multiprocessing
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .fw import FWData
from .graph import Cemetery, EdgePoint, GraphPoint, MetricGraph, Vertex, distance
from .sampler import RandomStream, SamplerError, Trajectory, Watch, ball_watch

SAFE_HORIZON = 1e6


# --------------------------------------------------------------------------
# running many paths
# --------------------------------------------------------------------------

def _run_chunk(process, start, horizon, seed, key, watch, reduce, lo, hi):
    out = []
    for k in range(lo, hi):
        tr = process.run(start, horizon, RandomStream(seed, key + (k,)), watch)
        out.append(reduce(tr) if reduce is not None else tr)
    return out


def run_paths(process, start: GraphPoint, horizon: float, n: int, seed: int, *,
              watch: Watch | None = None, reduce: Callable[[Trajectory], Any] | None = None,
              key: tuple[int, ...] = (), workers: int = 1) -> list:
    """Run ``n`` paths, path ``k`` on ``RandomStream(seed, key + (k,))``.

    The result list is ordered by path index, so it does not depend on the
    number of workers.
    """
    if workers <= 1 or n < 2:
        return _run_chunk(process, start, horizon, seed, key, watch, reduce, 0, n)
    chunks = min(n, 4 * workers)
    bounds = np.linspace(0, n, chunks + 1).astype(int)
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futs = [pool.submit(_run_chunk, process, start, horizon, seed, key, watch, reduce, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        out = []
        for f in futs:
            out.extend(f.result())
    return out


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    name: str
    statistic: float
    passed: bool
    p_value: float | None = None
    ci: tuple[float, float] | None = None
    level: float | None = None
    sizes: tuple[int, ...] = ()
    runtime: float = 0.0
    details: dict = field(default_factory=dict)

    def to_json(self, timings: bool = True) -> str:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        if not timings:
            del d["runtime"]  # wall clock would break byte-identical reruns
        return json.dumps(_jsonable(d), sort_keys=True)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, (str, int, float, bool)) or x is None:
        return x
    return str(x)


def format_table(reports: Sequence[TestReport]) -> str:
    rows = [("test", "statistic", "p / CI", "result")]
    for r in reports:
        if r.p_value is not None:
            pc = f"p={r.p_value:.4g}"
        elif r.ci is not None:
            pc = f"[{r.ci[0]:.5g}, {r.ci[1]:.5g}]"
        else:
            pc = ""
        rows.append((r.name, f"{r.statistic:.6g}", pc, "PASS" if r.passed else "FAIL"))
    widths = [max(len(row[c]) for row in rows) for c in range(4)]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows)


# --------------------------------------------------------------------------
# exit laws from a vertex
# --------------------------------------------------------------------------

def exit_record(tr: Trajectory) -> tuple[tuple, float]:
    """``(category, exit time)``; categories are ``("edge", l)``, ``("jump", g)``, ``("kill", None)``, ``("horizon", None)``."""
    last = tr.events[-1]
    if tr.status == "killed":
        cat = ("kill", None)
    elif tr.status == "horizon":
        cat = ("horizon", None)
    elif last.kind in ("jump", "revival"):
        cat = ("jump", last.position)
    elif isinstance(last.position, EdgePoint):
        cat = ("edge", last.position.edge)
    else:
        cat = ("vertex", last.position)
    return cat, last.t - tr.events[0].t


def category_label(cat: tuple) -> str:
    kind, what = cat
    if what is None:
        return kind
    return f"{kind}:{what}"


@dataclass
class ExitLawEstimate:
    vertex: str
    eps: float
    n: int
    mean_tau: float
    se_tau: float
    freqs: dict[tuple, float]
    freq_se: dict[tuple, float]
    recovered: FWData | None
    recovered_se: dict[str, float]
    regime: str  # "shell", "hold_jump" or "trap"

    def freq(self, kind: str, what=None) -> float:
        return self.freqs.get((kind, what), 0.0)


def empirical_exit_law(process, v: str, eps: float, n: int, seed: int, *, graph: MetricGraph,
                       key: tuple[int, ...] = (), workers: int = 1,
                       horizon: float = SAFE_HORIZON, max_events: int = 100_000) -> ExitLawEstimate:
    """Exit law from the open ball of radius ``eps`` around ``v`` and the data it implies.

    Inverts the first-order ε-shell relations: reflection weights are the
    edge frequencies, killing and jump weights are frequencies over ``eps``,
    stickiness is ``(E tau - eps^2) / eps`` times the total reflection weight.
    """
    if n < 1:
        raise SamplerError("need at least one path")
    watch = ball_watch(graph, v, eps, budget=max_events)
    recs = run_paths(process, Vertex(v), horizon, n, seed, watch=watch, reduce=exit_record,
                     key=key, workers=workers)
    cats = Counter(c for c, _ in recs)
    taus = np.array([t for _, t in recs])
    freqs = {c: k / n for c, k in cats.items()}
    freq_se = {c: math.sqrt(f * (1 - f) / n) for c, f in freqs.items()}
    mean_tau = float(taus.mean())
    se_tau = float(taus.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf

    if cats.get(("horizon", None), 0) == n:
        return ExitLawEstimate(v, eps, n, mean_tau, se_tau, freqs, freq_se,
                               FWData(0, {}, math.inf), {"p3": math.inf}, "trap")
    edge_f = {c[1]: f for c, f in freqs.items() if c[0] == "edge"}
    kill_f = freqs.get(("kill", None), 0.0)
    jump_f = {c[1]: f for c, f in freqs.items() if c[0] == "jump"}
    P2 = sum(edge_f.values())
    raw_se: dict[str, float] = {}
    if P2 > 0:
        regime = "shell"
        p1 = kill_f / eps
        w = {g: f / eps for g, f in jump_f.items()}
        p3 = max(mean_tau - eps * eps, 0.0) / eps * P2
        raw_se["p1"] = freq_se.get(("kill", None), 0.0) / eps
        raw_se["p3"] = se_tau / eps * P2
        for g in w:
            raw_se[f"jump:{g}"] = freq_se[("jump", g)] / eps
    else:
        regime = "hold_jump"
        p1, w, p3 = kill_f, dict(jump_f), mean_tau
        raw_se["p1"] = freq_se.get(("kill", None), 0.0)
        raw_se["p3"] = se_tau
        for g in w:
            raw_se[f"jump:{g}"] = freq_se[("jump", g)]
    for l, f in edge_f.items():
        raw_se[f"p2:{l}"] = freq_se[("edge", l)]
    here = Vertex(v)
    total = p1 + P2 + p3 + sum(x * (1 - math.exp(-distance(graph, here, g))) for g, x in w.items())
    c = 1.0 / total
    rec = FWData(p1 * c, {l: f * c for l, f in edge_f.items()}, p3 * c, {g: x * c for g, x in w.items()})
    return ExitLawEstimate(v, eps, n, mean_tau, se_tau, freqs, freq_se, rec,
                           {k: s * c for k, s in raw_se.items()}, regime)


def shell_exit_law(d: FWData, eps: float) -> tuple[dict[tuple, float], float]:
    """Category probabilities and mean duration of one ε-shell visit with data ``d``."""
    P2 = float(d.P2)
    if P2 > 0:
        ws = {("edge", l): float(x) for l, x in d.p2.items() if x > 0}
        if d.p1 > 0:
            ws[("kill", None)] = eps * float(d.p1)
        for g, x in d.p4:
            ws[("jump", g)] = eps * float(x)
        mean = eps * eps + eps * float(d.p3) / P2
    else:
        ws = {}
        if d.p1 > 0:
            ws[("kill", None)] = float(d.p1)
        for g, x in d.p4:
            ws[("jump", g)] = float(x)
        rate = sum(ws.values())
        if rate == 0:
            return {("horizon", None): 1.0}, math.inf
        mean = float(d.p3) / rate
    z = sum(ws.values())
    return {c: x / z for c, x in ws.items()}, mean


def exit_law_check(process, graph: MetricGraph, v: str, reference: FWData, eps: float, n: int, seed: int, *,
                   level: float = 0.01, key: tuple[int, ...] = (), workers: int = 1) -> list[TestReport]:
    """Goodness of fit of the one-visit exit law against the law implied by ``reference``."""
    t0 = time.perf_counter()
    est = empirical_exit_law(process, v, eps, n, seed, graph=graph, key=key, workers=workers)
    probs, mean = shell_exit_law(reference, eps)
    cats = sorted(set(probs) | set(est.freqs), key=category_label)
    observed = np.array([est.freqs.get(c, 0.0) * n for c in cats])
    expected = np.array([probs.get(c, 0.0) * n for c in cats])
    elapsed = time.perf_counter() - t0
    out = []
    if np.any((expected == 0) & (observed > 0)):
        chi = TestReport(f"exit_law[{v}].categories", math.inf, False, 0.0, level=level, sizes=(n,),
                         runtime=elapsed, details={"unexpected": [category_label(c) for c, o, e in
                                                                  zip(cats, observed, expected) if e == 0 and o > 0]})
    else:
        keep = expected > 0
        if keep.sum() <= 1:
            chi = TestReport(f"exit_law[{v}].categories", 0.0, True, 1.0, level=level, sizes=(n,), runtime=elapsed)
        else:
            res = stats.chisquare(observed[keep], expected[keep])
            chi = TestReport(f"exit_law[{v}].categories", float(res.statistic), bool(res.pvalue >= level),
                             float(res.pvalue), level=level, sizes=(n,), runtime=elapsed,
                             details={category_label(c): [int(o), float(e)] for c, o, e in zip(cats, observed, expected)})
    out.append(chi)
    if math.isfinite(mean):
        z = abs(est.mean_tau - mean) / est.se_tau if est.se_tau > 0 else (0.0 if est.mean_tau == mean else math.inf)
        out.append(TestReport(f"exit_law[{v}].mean_time", est.mean_tau, bool(z <= 3.0),
                              ci=(est.mean_tau - 3 * est.se_tau, est.mean_tau + 3 * est.se_tau), sizes=(n,),
                              runtime=elapsed, details={"expected": mean, "z": z}))
    return out


# --------------------------------------------------------------------------
# interval functionals
# --------------------------------------------------------------------------

class _SideAndTime:
    def __init__(self, far: str):
        self.far = far

    def __call__(self, tr: Trajectory):
        last = tr.events[-1]
        if tr.status != "stopped" or not isinstance(last.position, Vertex):
            return -1, last.t
        return int(last.position.id == self.far), last.t - tr.events[0].t


def laplace_targets(x: float, R: float, alpha: float) -> tuple[float, float]:
    """``(E[e^{-alpha tau}; exit at 0], E[e^{-alpha tau}; exit at R])`` for Brownian motion from ``x``."""
    if alpha == 0:
        return 1 - x / R, x / R
    s = math.sqrt(2 * alpha)
    return math.sinh(s * (R - x)) / math.sinh(s * R), math.sinh(s * x) / math.sinh(s * R)


def interval_exits(process, graph: MetricGraph, edge: str, x: float, n: int, seed: int, *,
                   key: tuple[int, ...] = (), workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Exit sides (1 for the head) and times of paths started at ``(edge, x)`` and stopped at its endpoints."""
    e = graph.edges[edge]
    if e.external or not 0 < x < e.length:
        raise SamplerError(f"start {x} must lie inside internal edge {edge}")
    watch = Watch(vertices=frozenset({e.tail, e.head}))
    recs = run_paths(process, EdgePoint(edge, x), math.inf, n, seed, watch=watch,
                     reduce=_SideAndTime(e.head), key=key, workers=workers)
    side = np.array([s for s, _ in recs])
    tau = np.array([t for _, t in recs])
    if np.any(side < 0):
        raise SamplerError("some paths left the edge without reaching an endpoint")
    return side, tau


def laplace_exit_check(process, graph: MetricGraph, edge: str, x: float, alpha: float, n: int, seed: int, *,
                       key: tuple[int, ...] = (), workers: int = 1, samples=None) -> TestReport:
    """Both one-sided Laplace functionals of the exit time within 3 standard errors of the sinh formulas."""
    t0 = time.perf_counter()
    R = graph.length(edge)
    side, tau = samples if samples is not None else interval_exits(process, graph, edge, x, n, seed,
                                                                     key=key, workers=workers)
    n = len(tau)
    disc = np.exp(-alpha * tau)
    est, se, zs = [], [], []
    for s, target in zip((0, 1), laplace_targets(x, R, alpha)):
        vals = disc * (side == s)
        m, sd = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))
        est.append(m)
        se.append(sd)
        zs.append(abs(m - target) / sd if sd > 0 else (0.0 if m == target else math.inf))
    targets = laplace_targets(x, R, alpha)
    return TestReport(f"laplace[{edge}, x={x:g}, alpha={alpha:g}]", max(zs), bool(max(zs) <= 3.0),
                      sizes=(n,), runtime=time.perf_counter() - t0,
                      details={"estimate": est, "se": se, "target": list(targets), "z": zs})


# --------------------------------------------------------------------------
# two-sample tests
# --------------------------------------------------------------------------

def ks_two_sample(a: Sequence[float], b: Sequence[float], level: float = 0.05, name: str = "ks") -> TestReport:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value; passes iff ``p >= level``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    t0 = time.perf_counter()
    res = stats.ks_2samp(a, b, method="asymp")
    return TestReport(name, float(res.statistic), bool(res.pvalue >= level), float(res.pvalue), level=level,
                      sizes=(a.size, b.size), runtime=time.perf_counter() - t0)


def chi_square_two_sample(a: Mapping, b: Mapping, level: float = 0.05, name: str = "chi2") -> TestReport:
    """Homogeneity of two categorical count tables."""
    keys = sorted(set(a) | set(b), key=str)
    table = np.array([[a.get(k, 0) for k in keys], [b.get(k, 0) for k in keys]], float)
    table = table[:, table.sum(axis=0) > 0]
    t0 = time.perf_counter()
    if table.shape[1] <= 1:
        stat, p = 0.0, 1.0
    else:
        stat, p, _, _ = stats.chi2_contingency(table, correction=False)
    return TestReport(name, float(stat), bool(p >= level), float(p), level=level,
                      sizes=(int(table[0].sum()), int(table[1].sum())), runtime=time.perf_counter() - t0,
                      details={str(k): [int(a.get(k, 0)), int(b.get(k, 0))] for k in keys})


def backend_equivalence(proc_a, proc_b, graph: MetricGraph, v: str, radius: float, n: int, seed: int, *,
                        level: float = 0.01, workers: int = 1, key: tuple[int, ...] = ()) -> list[TestReport]:
    """KS on exit times and chi-square on exit categories from the ball of ``radius`` around ``v``."""
    watch = ball_watch(graph, v, radius)
    ra = run_paths(proc_a, Vertex(v), SAFE_HORIZON, n, seed, watch=watch, reduce=exit_record, key=key + (0,), workers=workers)
    rb = run_paths(proc_b, Vertex(v), SAFE_HORIZON, n, seed, watch=watch, reduce=exit_record, key=key + (1,), workers=workers)
    ks = ks_two_sample([t for _, t in ra], [t for _, t in rb], level, f"equivalence[{v}].exit_time")
    ca = Counter(category_label(c) for c, _ in ra)
    cb = Counter(category_label(c) for c, _ in rb)
    chi = chi_square_two_sample(ca, cb, level, f"equivalence[{v}].exit_location")
    return [ks, chi]


# --------------------------------------------------------------------------
# generator residual
# --------------------------------------------------------------------------

@dataclass
class TestFunction:
    """Piecewise quadratic near ``v``: ``value + slope_l * x + curvature_l * x^2 / 2`` at distance ``x`` on edge ``l``.

    ``elsewhere`` gives values at jump targets away from the vertex; the
    cemetery has value 0.
    """

    __test__ = False

    value: float
    slopes: Mapping[str, float] = field(default_factory=dict)
    curvatures: Mapping[str, float] = field(default_factory=dict)
    elsewhere: Mapping[GraphPoint, float] = field(default_factory=dict)

    @classmethod
    def from_edges(cls, pieces: Mapping[str, tuple[float, float, float]],
                   elsewhere: Mapping[GraphPoint, float] | None = None) -> "TestFunction":
        """Build from per-edge ``(f_l(v), f_l'(v), f_l''(v))``; the values must agree."""
        values = {p[0] for p in pieces.values()}
        if len(values) > 1:
            raise ValueError(f"test function is discontinuous at the vertex: values {sorted(values)}")
        value = values.pop() if values else 0.0
        return cls(value, {l: p[1] for l, p in pieces.items()}, {l: p[2] for l, p in pieces.items()},
                   dict(elsewhere or {}))

    @property
    def vertex_curvature(self) -> float:
        cs = set(self.curvatures.values())
        return cs.pop() if len(cs) == 1 else 0.0

    def on_edge(self, l: str, x: float) -> float:
        return self.value + self.slopes.get(l, 0.0) * x + 0.5 * self.curvatures.get(l, 0.0) * x * x

    def at_category(self, cat: tuple, r: float) -> float:
        kind, what = cat
        if kind == "edge":
            return self.on_edge(what, r)
        if kind == "kill":
            return 0.0
        if kind == "jump":
            if isinstance(what, Cemetery):
                return 0.0
            if what in self.elsewhere:
                return float(self.elsewhere[what])
            raise ValueError(f"test function has no value at jump target {what}")
        raise ValueError(f"cannot evaluate the test function on outcome {category_label(cat)}")


def boundary_functional(d: FWData, f: TestFunction) -> float:
    """``p1 f(v) - sum p2 f'_l(v) + p3 f''(v) / 2 - int (f(g) - f(v)) p4(dg)``."""
    val = float(d.p1) * f.value
    val -= sum(float(w) * f.slopes.get(l, 0.0) for l, w in d.p2.items())
    val += 0.5 * float(d.p3) * f.vertex_curvature
    for g, w in d.p4:
        val -= float(w) * (f.at_category(("jump", g), 0.0) - f.value)
    return val


def generator_residual(make_process: Callable[[float], Any], graph: MetricGraph, f: TestFunction, v: str,
                       eps_schedule: Sequence[float], n: int, seed: int, *, data: FWData | None = None,
                       workers: int = 1, key: tuple[int, ...] = ()) -> TestReport:
    """Extrapolated boundary residual of ``f`` at ``v``.

    For each ``eps`` the process ``make_process(eps)`` is run from ``v`` to
    the exit of the ball of radius ``eps`` and
    ``B(eps) = (E[f(X) - f(v)] - f''(v) E[tau] / 2) / eps`` is estimated.
    Its limit is ``-BC(f) / P2`` where ``BC`` is the boundary functional of the
    data; it is zero exactly when ``f`` satisfies the boundary condition. The
    two smallest ``eps`` are combined by Richardson extrapolation. Without
    ``data`` the prediction is 0.
    """
    t0 = time.perf_counter()
    schedule = sorted(float(e) for e in eps_schedule)
    if len(schedule) < 2:
        raise ValueError("need at least two eps values")
    c = f.vertex_curvature
    per_eps = {}
    for k, eps in enumerate(schedule):
        recs = run_paths(make_process(eps), Vertex(v), SAFE_HORIZON, n, seed, watch=ball_watch(graph, v, eps),
                         reduce=exit_record, key=key + (k,), workers=workers)
        y = np.array([f.at_category(cat, eps) - f.value - 0.5 * c * tau for cat, tau in recs])
        b = float(y.mean()) / eps
        se = float(y.std(ddof=1)) / (eps * math.sqrt(n))
        tau = np.array([t for _, t in recs])
        gen = float((y.mean() + 0.5 * c * tau.mean()) / tau.mean())
        per_eps[eps] = {"B": b, "se": se, "generator_ratio": gen}
    e1, e2 = schedule[1], schedule[0]
    b1, b2 = per_eps[e1]["B"], per_eps[e2]["B"]
    s1, s2 = per_eps[e1]["se"], per_eps[e2]["se"]
    b0 = (e1 * b2 - e2 * b1) / (e1 - e2)
    se0 = math.hypot(e1 * s2, e2 * s1) / (e1 - e2)
    pred = 0.0 if data is None else -boundary_functional(data, f) / float(data.P2)
    dev = abs(b0 - pred)
    passed = dev <= 3 * se0 + 1e-12
    return TestReport(f"generator_residual[{v}]", b0, bool(passed), ci=(b0 - 3 * se0, b0 + 3 * se0),
                      sizes=(n,) * len(schedule), runtime=time.perf_counter() - t0,
                      details={"prediction": pred, "se": se0, "per_eps": {str(e): x for e, x in per_eps.items()}})
