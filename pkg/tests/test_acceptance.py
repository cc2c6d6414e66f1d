"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  The Bitcoin Alpha check needs the public dataset file; point
``BITCOIN_ALPHA_CSV`` at it (or drop it under ``data/``) and it runs,
otherwise it is skipped with an explicit message.
"""

import gzip
import os
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from signedfj import (
    SignedDigraph,
    SinkClass,
    analyze_network,
    condense,
    influence,
    parse_edge_list,
    row_normalized,
    simulate,
    steady_state,
    strongly_connected_components,
    validate,
)
from signedfj.cli import main as cli_main
from instances import (
    micro_antagonistic,
    micro_chain,
    micro_stubborn,
    sc_antagonistic,
    sc_cooperative,
    sc_unbalanced,
    suite_instances,
    weak_sub_sink,
    weak_two_sinks,
)


@contextmanager
def criterion(tag: str, description: str):
    try:
        yield
    except Exception:
        print(f"[criterion {tag}] FAIL - {description}")
        raise
    print(f"[criterion {tag}] PASS - {description}")


# ---------------------------------------------------------------------------
# Outcome detectors
# ---------------------------------------------------------------------------

def is_consensus(values, tol=1e-8) -> bool:
    values = np.asarray(values)
    return float(values.max() - values.min()) <= tol


def is_neutral(values, tol=1e-8) -> bool:
    return float(np.max(np.abs(values))) <= tol


def is_bipartite_consensus(values, sigma, tol=1e-8) -> bool:
    """Two values of equal magnitude and opposite sign, split along sigma."""
    values = np.asarray(values)
    sigma = np.asarray(sigma, dtype=float)
    magnitude = float(np.mean(sigma * values))
    if abs(magnitude) <= 1e-3:  # degenerate split would be indistinguishable from neutral
        return False
    return bool(np.max(np.abs(values - sigma * magnitude)) <= tol)


def distinct_values(values, sep=1e-6) -> int:
    ordered = np.sort(np.asarray(values))
    return 1 + int(np.sum(np.diff(ordered) > sep))


def influential_set(graph, beta) -> set[int]:
    centrality = influence(graph, beta).centrality
    return {int(j) for j in np.flatnonzero(centrality > 1e-12)}


# ---------------------------------------------------------------------------
# Criterion 1: Bitcoin Alpha structure
# ---------------------------------------------------------------------------

def _bitcoin_alpha_path() -> Path | None:
    candidates = [os.environ.get("BITCOIN_ALPHA_CSV")]
    here = Path(__file__).resolve().parent.parent
    candidates += [
        here / "data" / "soc-sign-bitcoinalpha.csv",
        here / "data" / "soc-sign-bitcoinalpha.csv.gz",
    ]
    for cand in candidates:
        if cand and Path(cand).is_file():
            return Path(cand)
    return None


def test_criterion_1_bitcoin_alpha_structure():
    path = _bitcoin_alpha_path()
    if path is None:
        pytest.skip(
            "Bitcoin Alpha dataset not available (no network access in this "
            "environment); set BITCOIN_ALPHA_CSV or place "
            "soc-sign-bitcoinalpha.csv[.gz] under data/ to run this criterion"
        )
    with criterion("1", "Bitcoin Alpha node/edge/sign counts and condensation sinks"):
        start = time.perf_counter()
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "rt", encoding="utf-8") as fh:
            graph = parse_edge_list(fh, ignore_extra_columns=True)
        assert graph.n == 3783
        assert graph.edge_count == 24186
        assert graph.negative_edge_count == 1536
        sccs = strongly_connected_components(graph)
        dag = condense(graph, sccs)
        assert len(dag.sinks) == 502
        singles = sum(1 for cid in dag.sinks if len(sccs.components[cid]) == 1)
        assert singles == 497
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"structure pass took {elapsed:.2f}s"


def test_scale_smoke_synthetic_dataset_sized_graph():
    """Dataset-scale performance guard on a synthetic graph (not criterion 1)."""
    rng = np.random.default_rng(42)
    n, m = 3783, 24186
    lines = []
    seen = set()
    while len(lines) < m:
        s = int(rng.integers(0, n))
        t = int(rng.integers(0, n))
        if s == t or (s, t) in seen:
            continue
        seen.add((s, t))
        w = int(rng.integers(1, 11)) * (-1 if rng.random() < 0.065 else 1)
        lines.append(f"{s},{t},{w}")
    text = "\n".join(lines)
    start = time.perf_counter()
    graph = parse_edge_list(text)
    sccs = strongly_connected_components(graph)
    condense(graph, sccs)
    elapsed = time.perf_counter() - start
    assert graph.edge_count == m
    assert elapsed < 10.0, f"synthetic structure pass took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# Criteria 2 and 3: randomized oracle equivalence and the regime dichotomy
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def random_suite():
    records = []
    start = time.perf_counter()
    for graph, beta, x0 in suite_instances(200):
        report = validate(graph, beta)
        assert report.ok
        graph, beta = report.graph, report.beta
        analysis = analyze_network(graph, beta)
        closed = analysis.steady_state(x0)
        trajectory = simulate(graph, beta, x0, tol=1e-12, patience=10)
        records.append(
            {
                "n": graph.n,
                "converged": trajectory.converged,
                "iterations": trajectory.iterations_used,
                "error": float(np.max(np.abs(closed - trajectory.final))),
                "s_ns_empty": not analysis.classification.s_ns,
                "rho": analysis.spectral.spectral_radius,
                "rho_abs": analysis.spectral.spectral_radius_abs,
            }
        )
    elapsed = time.perf_counter() - start
    return records, elapsed


def test_criterion_2_oracle_equivalence(random_suite):
    records, elapsed = random_suite
    with criterion("2", "closed form matches the iteration limit on 200 random instances"):
        assert len(records) == 200
        assert all(r["converged"] for r in records), "an instance failed to converge"
        assert all(r["iterations"] <= 1_000_000 for r in records)
        worst = max(r["error"] for r in records)
        assert worst <= 1e-8, f"worst closed-form/iteration gap {worst:.3e}"
        assert elapsed < 120.0, f"suite took {elapsed:.1f}s"


def test_criterion_3_regime_dichotomy(random_suite):
    records, _ = random_suite
    with criterion("3", "spectral radius sits at 1 iff some balanced sink is stubborn-free"):
        for r in records:
            if r["s_ns_empty"]:
                assert r["rho"] < 1.0 - 1e-6, f"convergent instance with rho={r['rho']}"
            else:
                assert abs(r["rho"] - 1.0) <= 1e-6, f"semi-convergent with rho={r['rho']}"
            assert r["rho"] <= r["rho_abs"] + 1e-9


# ---------------------------------------------------------------------------
# Criterion 4: analytic micro-cases
# ---------------------------------------------------------------------------

def test_criterion_4_analytic_micro_cases():
    with criterion("4", "hand-solvable 2x2 cases: steady state, influence, centrality"):
        tol = 1e-10

        # (a) one stubborn agent in a positive pair
        graph, beta = micro_stubborn()
        result = influence(graph, beta)
        assert np.allclose(result.matrix.toarray(), [[1, 0], [1, 0]], atol=tol)
        assert np.allclose(result.centrality, [2.0, 0.0], atol=tol)
        for x1 in (1.0, -0.7, 0.25):
            x = steady_state(graph, beta, np.array([x1, 0.4]))
            assert np.allclose(x, [x1, x1], atol=tol)

        # (b) mutually negative pair: polarized split of the initial gap
        graph, beta = micro_antagonistic()
        result = influence(graph, beta)
        assert np.allclose(result.centrality, [1.0, 1.0], atol=tol)
        for x0 in (np.array([1.0, 0.0]), np.array([0.2, 0.9]), np.array([-0.5, 0.5])):
            expected = (x0[0] - x0[1]) / 2 * np.array([1.0, -1.0])
            assert np.allclose(steady_state(graph, beta, x0), expected, atol=tol)

        # (c) follower rating a single-node sink
        graph, beta = micro_chain()
        result = influence(graph, beta)
        assert np.allclose(result.matrix.toarray(), [[0, 1], [0, 1]], atol=tol)


# ---------------------------------------------------------------------------
# Criterion 5: emergent-behaviour matrix
# ---------------------------------------------------------------------------

def test_criterion_5_behaviour_matrix():
    with criterion("5", "one instance per emergent-behaviour row, detector-checked"):
        # strongly connected, unbalanced, no stubbornness: neutral, nobody influential
        g = sc_unbalanced()
        x = steady_state(g, np.zeros(3), np.array([0.8, -0.3, 0.5]))
        assert is_neutral(x)
        assert influential_set(g, np.zeros(3)) == set()

        # strongly connected with stubborn agents: disagreement, stubborn influential
        beta = np.array([0.5, 0.4, 0.0])
        x = steady_state(g, beta, np.array([0.8, -0.3, 0.5]))
        assert not is_neutral(x, tol=1e-3)
        assert distinct_values(x) >= 3
        assert influential_set(g, beta) == {0, 1}

        # strongly connected, cooperative, stubborn-free: consensus, all influential
        g = sc_cooperative()
        x = steady_state(g, np.zeros(3), np.array([0.8, -0.3, 0.5]))
        assert is_consensus(x)
        assert influential_set(g, np.zeros(3)) == {0, 1, 2}

        # strongly connected, balanced with antagonism: bipartite consensus
        g = sc_antagonistic()
        analysis = analyze_network(g, np.zeros(4))
        sigma = analysis.classification.sinks[0].bipartition
        x = analysis.steady_state(np.array([0.9, 0.1, -0.2, 0.7]))
        assert is_bipartite_consensus(x, sigma)
        assert influential_set(g, np.zeros(4)) == {0, 1, 2, 3}

        # weakly connected, all sinks unbalanced, no stubbornness: neutral
        g = weak_sub_sink()
        x = steady_state(g, np.zeros(5), np.array([0.3, -0.8, 0.6, 0.2, -0.5]))
        assert is_neutral(x)
        assert influential_set(g, np.zeros(5)) == set()

        # same topology with one stubborn leader in the unbalanced sink:
        # non-trivial limit, only the stubborn leader influential
        beta = np.zeros(5)
        beta[2] = 0.5
        x = steady_state(g, beta, np.array([0.3, -0.8, 0.6, 0.2, -0.5]))
        assert not is_neutral(x, tol=1e-3)
        assert influential_set(g, beta) == {2}

        # weakly connected, both sinks balanced and stubborn-free: the
        # cooperative sink agrees internally, the antagonistic one splits,
        # and the group as a whole disagrees
        g, beta = weak_two_sinks()
        x0 = np.array([0.3, 0.8, -0.1, 0.9, 0.4])
        analysis = analyze_network(g, beta)
        x = analysis.steady_state(x0)
        coop = next(s for s in analysis.classification.sinks
                    if s.sink_class is SinkClass.COOPERATIVE_SB)
        antag = next(s for s in analysis.classification.sinks
                     if s.sink_class is SinkClass.ANTAGONISTIC_SB)
        assert is_consensus(x[list(coop.members)])
        assert is_bipartite_consensus(x[list(antag.members)], antag.bipartition)
        assert distinct_values(x) >= 3
        assert influential_set(g, beta) == {1, 2, 3, 4}

        # a stubborn leader inside one balanced sink: it stays influential,
        # its sink partner loses all influence, the free sink keeps its own
        g, beta = weak_two_sinks(stubborn_leader=0.5)
        x = steady_state(g, beta, x0)
        assert not is_neutral(x, tol=1e-3)
        assert influential_set(g, beta) == {1, 3, 4}


# ---------------------------------------------------------------------------
# Criterion 6: leaving the convex hull of the initial opinions
# ---------------------------------------------------------------------------

def test_criterion_6_convex_hull_escape():
    with criterion("6", "antagonism pushes a final opinion outside [min x0, max x0]"):
        graph, beta = micro_antagonistic()
        x0 = np.array([1.0, 0.0])
        x = steady_state(graph, beta, x0)
        assert abs(x[1] - (-0.5)) <= 1e-10
        assert x[1] < float(x0.min())  # strictly below the hull [0, 1]
        trajectory = simulate(graph, beta, x0, tol=1e-13)
        assert trajectory.final[1] < float(x0.min())


# ---------------------------------------------------------------------------
# Criterion 7: reductions to known limits
# ---------------------------------------------------------------------------

def _positive_strongly_connected(seed: int, n: int) -> SignedDigraph:
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % n, float(rng.uniform(0.5, 1.5))) for i in range(n)]
    edges += [(i, i, 1.0) for i in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and (i, (i + 1) % n) != (i, j) and rng.random() < 0.25:
                edges.append((i, j, float(rng.uniform(0.5, 1.5))))
    dedup = {}
    for s, t, w in edges:
        dedup.setdefault((s, t), w)
    return SignedDigraph.from_edges(
        [f"n{i}" for i in range(n)], [(s, t, w) for (s, t), w in dedup.items()]
    )


def test_criterion_7_reductions():
    with criterion("7", "plain-averaging consensus and classical stubborn-limit recovered"):
        # (a) all-positive, stubborn-free, strongly connected and aperiodic:
        # every row of the influence matrix is the same left eigenvector
        g = _positive_strongly_connected(11, 8)
        theta = influence(g, np.zeros(8)).matrix.toarray()
        row_spread = float(np.max(np.abs(theta - theta[0])))
        assert row_spread <= 1e-9
        assert abs(theta[0].sum() - 1.0) <= 1e-9

        # (b) all-positive with every agent on a path to a stubborn agent:
        # the influence matrix is the classical stubborn-anchored resolvent
        edges = [
            (0, 2, 1.0), (0, 4, 1.0), (1, 0, 1.0),
            (2, 3, 1.0), (3, 2, 1.0), (2, 2, 1.0), (3, 3, 1.0),
            (4, 5, 1.0), (5, 4, 1.0), (4, 4, 1.0), (5, 5, 1.0),
        ]
        g = SignedDigraph.from_edges(list("abcdef"), edges)
        beta = np.zeros(6)
        beta[2] = 0.3
        beta[4] = 0.6
        analysis = analyze_network(g, beta)
        assert not analysis.classification.s_ns
        q = row_normalized(g).toarray()
        classical = np.linalg.solve(
            np.eye(6) - (np.eye(6) - np.diag(beta)) @ q, np.diag(beta)
        )
        theta = analysis.influence.matrix.toarray()
        assert np.max(np.abs(theta - classical)) <= 1e-9


# ---------------------------------------------------------------------------
# Scripted-modification experiment (Fig.-style qualitative behaviours)
# ---------------------------------------------------------------------------

def _modification_base() -> str:
    """All-cooperative base: two followers, three 3-cycles, one singleton."""
    lines = []
    for prefix in ("a", "b", "c"):
        trio = [f"{prefix}{i}" for i in range(3)]
        for i in range(3):
            lines.append(f"{trio[i]},{trio[(i + 1) % 3]},1")
            lines.append(f"{trio[i]},{trio[i]},1")
    lines += ["f0,f1,1", "f0,a0,1", "f1,b0,1", "f1,c0,-1", "f1,d,1"]
    return "\n".join(lines) + "\n"


def test_modification_manifest_reproduces_qualitative_behaviours(tmp_path):
    with criterion("mod", "scripted edge flips yield consensus, split, neutral, fixed sinks"):
        graph_path = tmp_path / "base.csv"
        graph_path.write_text(_modification_base(), encoding="utf-8")
        mod_dir = tmp_path / "mod"
        code = cli_main([
            "modify", "--graph", str(graph_path), "--out-dir", str(mod_dir),
            "--flip-edge", "b0,b1", "--flip-edge", "b1,b2",
            "--flip-edge", "c0,c1",
            "--set-beta", "f1=0.4",
        ])
        assert code == 0
        assert (mod_dir / "modify_manifest.json").is_file()

        graph = parse_edge_list((mod_dir / "modified_graph.csv").read_text())
        from signedfj import read_stubbornness

        beta, _ = read_stubbornness((mod_dir / "modified_beta.csv").read_text(), graph)
        report = validate(graph, beta)
        assert report.ok
        analysis = analyze_network(report.graph, report.beta)
        by_class = {}
        for sink in analysis.classification.sinks:
            by_class.setdefault(sink.sink_class, []).append(sink)
        assert len(by_class[SinkClass.COOPERATIVE_SB]) == 1
        assert len(by_class[SinkClass.ANTAGONISTIC_SB]) == 1
        assert len(by_class[SinkClass.SUB]) == 1
        assert len(by_class[SinkClass.SINGLETON_SB]) == 1

        rng = np.random.default_rng(5)
        x0 = rng.uniform(0.0, 1.0, graph.n)
        x = analysis.steady_state(x0)
        trajectory = simulate(report.graph, report.beta, x0, tol=1e-12)
        assert trajectory.converged
        assert np.max(np.abs(trajectory.final - x)) <= 1e-8

        coop = by_class[SinkClass.COOPERATIVE_SB][0]
        antag = by_class[SinkClass.ANTAGONISTIC_SB][0]
        sub = by_class[SinkClass.SUB][0]
        single = by_class[SinkClass.SINGLETON_SB][0]
        assert is_consensus(x[list(coop.members)])
        assert is_bipartite_consensus(x[list(antag.members)], antag.bipartition)
        assert is_neutral(x[list(sub.members)])
        d = single.members[0]
        assert abs(x[d] - x0[d]) <= 1e-12
