"""Exit criteria, one test per criterion at its stated tolerance.

A pass/fail line per criterion is printed in the terminal summary. The
registry-snapshot criterion runs only when BENCHCONC_SNAPSHOT_DIR names a
directory holding models.csv, benchmarks.csv and affiliations.csv
(optionally BENCHCONC_SNAPSHOT_DATE=YYYY-MM-DD).
"""
import itertools
import math
import os
import random
import time
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pytest

from benchconc import abm, analytics, cli, graph, ingest, metrics, sweep
from benchconc.abm import SimConfig
from benchconc.graph import Graph

from conftest import bench
from test_graph import betweenness_oracle, random_graph
from test_metrics import gini_oracle, hhi_oracle

acceptance = pytest.mark.acceptance
SEEDS = [abm.DEFAULT_SEED + s for s in range(20)]


@pytest.fixture(scope="module")
def default_sweep():
    t0 = time.perf_counter()
    diagram = sweep.run_sweep(sweep.default_grid())
    return diagram, time.perf_counter() - t0


@acceptance("C01", "gini/hhi match O(n^2) oracles on 1000 vectors to 1e-12 in < 5 s")
def test_c01_oracle_equivalence():
    rng = np.random.default_rng(1)
    vectors = []
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        x = rng.exponential(size=n) * rng.integers(0, 2, size=n)
        if x.sum() == 0:
            x[0] = 1.0
        vectors.append(x)
    t0 = time.perf_counter()
    for x in vectors:
        assert abs(metrics.gini(x) - gini_oracle(x)) <= 1e-12
        assert abs(metrics.hhi(x) - hhi_oracle(x)) <= 1e-12
    assert time.perf_counter() - t0 < 5


@acceptance("C02", "monopoly regime: mean final HHI >= 0.8 over 20 seeds in < 30 s")
def test_c02_monopoly():
    t0 = time.perf_counter()
    finals = [abm.final_hhi(abm.run(SimConfig(1.5, 0.0, 0.0, 0.1, 10_000, 10, s)))
              for s in SEEDS]
    elapsed = time.perf_counter() - t0
    assert np.mean(finals) >= 0.8, finals
    assert elapsed < 30


@acceptance("C03", "pluralism regime: mean steady-state HHI < 0.2 over 20 seeds in < 60 s")
def test_c03_pluralism():
    t0 = time.perf_counter()
    tails = [abm.steady_state_hhi(abm.run(SimConfig(1.5, 0.02, 1e-3, 0.1, 10_000, 1, s)))
             for s in SEEDS]
    elapsed = time.perf_counter() - t0
    assert np.mean(tails) < 0.2, tails
    assert elapsed < 60


@acceptance("C04", "default sweep: every beta row crosses HHI=0.5 within gamma in [1e-5, 1e-3]")
def test_c04_tipping_location(default_sweep):
    diagram, elapsed = default_sweep
    contour = sweep.tipping_contour(diagram)
    bad = {}
    for beta in diagram.grid.beta_values:
        found = contour.row_crossings(beta)
        if not found or not all(1e-5 <= g <= 1e-3 for g in found):
            bad[round(beta, 6)] = found
    assert elapsed < 600
    assert not bad, f"rows without an in-band crossing: {bad}"


@acceptance("C05", "beta sensitivity of the tipping line within [0.1, 10]")
def test_c05_beta_insensitivity(default_sweep):
    diagram, _ = default_sweep
    ratio = sweep.beta_sensitivity(diagram)
    assert 0.1 <= ratio <= 10


@acceptance("C06", "simulate and sweep outputs byte-identical across reruns and --jobs 1/8")
def test_c06_determinism(tmp_path, capsys):
    def go(*argv):
        assert cli.main([str(a) for a in argv]) == 0
        capsys.readouterr()

    for name in ("s1", "s2"):
        go("simulate", "--out", tmp_path / name)
    for name in ("trajectory.csv", "trajectory.config.json"):
        assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes()
    for name, jobs in (("w1", 1), ("w1b", 1), ("w8", 8)):
        go("sweep", "--jobs", jobs, "--out", tmp_path / name)
    for name in ("phase.csv", "tipping.csv"):
        ref = (tmp_path / "w1" / name).read_bytes()
        assert (tmp_path / "w1b" / name).read_bytes() == ref
        assert (tmp_path / "w8" / name).read_bytes() == ref


@acceptance("C07", "graph closed forms and Brandes vs path enumeration on 30-node graphs")
def test_c07_graph_closed_forms():
    star = Graph((0, i) for i in range(1, 8))
    assert graph.degree_centrality(star)[0] == 1.0
    assert graph.betweenness(Graph([(0, 1), (1, 2)]))[1] == 1.0
    assert set(graph.betweenness(Graph(itertools.combinations(range(7), 2))).values()) == {0.0}
    tree = Graph([(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (5, 6)])
    assert len(graph.k_core(tree, 2)) == 0
    for seed in range(5):
        g = random_graph(30, 0.1 + 0.03 * seed, seed)
        got, ref = graph.betweenness(g), betweenness_oracle(g)
        assert max(abs(got[v] - ref[v]) for v in g.nodes) <= 1e-9


@acceptance("C08", "allocation conserves mass to 1e-9 on 500 randomized fixtures, all variants")
def test_c08_conservation():
    rnd = random.Random(8)
    ref = date(2025, 1, 1)
    variants = metrics.default_variants(ref)
    for _ in range(500):
        recs = []
        for i in range(rnd.randint(1, 12)):
            affs = [(f"a{rnd.randint(0, 9)}", f"I{rnd.randint(0, 6)}", rnd.choice("ABC"))
                    for _ in range(rnd.randint(0, 5))]
            recs.append(bench(f"b{i}", rnd.randint(0, 10**5), rnd.randint(0, 10**5), affs,
                              released=ref - timedelta(days=rnd.randint(0, 3000))))
        for v in variants:
            alpha = rnd.choice((0.0, 0.25, 0.5))
            expected = math.fsum(metrics.benchmark_weight(r, v, alpha) for r in recs)
            for group_by in ("institution", "country"):
                table = metrics.allocate_authority(recs, v, alpha, group_by)
                assert abs(table.total - expected) <= 1e-9


@acceptance("C09", "jaccard/spearman hand-computed fixtures incl. 7-of-10 -> 0.538")
def test_c09_rank_stability():
    def table(names):
        return metrics.AuthorityTable({n: 100.0 - i for i, n in enumerate(names)})

    a = table([f"e{i}" for i in range(10)])
    b = table([f"e{i}" for i in range(7)] + ["x", "y", "z"])
    assert round(metrics.jaccard_top_k(a, b, 10), 3) == 0.538
    assert metrics.jaccard_top_k(a, a, 10) == 1.0
    assert metrics.jaccard_top_k(a, table([f"f{i}" for i in range(10)]), 10) == 0.0
    assert metrics.spearman_top_union(a, a, 10) == pytest.approx(1.0, abs=1e-12)
    rev = table([f"e{i}" for i in range(9, -1, -1)])
    assert metrics.spearman_top_union(a, rev, 10) == pytest.approx(-1.0, abs=1e-12)
    # union {A,B,C,E}; E is absent from p, so p ranks (1,2,3,4) and q ranks (1,4,2,3):
    # centred dot product 2, each variance sum 5
    p = metrics.AuthorityTable({"A": 4, "B": 3, "C": 2, "D": 1})
    q = metrics.AuthorityTable({"A": 9, "C": 5, "E": 3, "B": 1})
    assert metrics.spearman_top_union(p, q, 3) == pytest.approx(0.4, abs=1e-12)


@acceptance("C10", "trend fit: exact 10%/yr decline -> -0.10 +/- 1e-9, zero-width CI; constant CI holds 0")
def test_c10_trend():
    exact = metrics.ConcentrationSeries(tuple(range(2015, 2021)),
                                        tuple(0.5 * 0.9**t for t in range(6)))
    fit = metrics.trend_fit(exact)
    assert abs(fit.annual_change_rate + 0.10) <= 1e-9
    assert abs(fit.ci95[1] - fit.ci95[0]) <= 1e-9
    flat = metrics.trend_fit(metrics.ConcentrationSeries((2019, 2020, 2021, 2022), (0.2,) * 4))
    assert flat.ci95[0] <= 0 <= flat.ci95[1]


@acceptance("C11", "PCA: rank-1 -> ratio 1.0; full reconstruction <= 1e-9; ratios sum to 1")
def test_c11_pca():
    rng = np.random.default_rng(11)
    rank1 = np.outer(rng.normal(size=12), rng.normal(size=8))
    assert abs(analytics.pca(rank1).explained_variance_ratio[0] - 1.0) <= 1e-9
    x = analytics.zscore_columns(rng.normal(size=(12, 8)), [f"c{i}" for i in range(8)])
    res = analytics.pca(x)
    assert abs(res.explained_variance_ratio.sum() - 1.0) <= 1e-9
    recon = res.scores @ res.components + x.mean(axis=0)
    assert np.abs(recon - x).max() <= 1e-9


# --- data-gated ---------------------------------------------------------------------

SNAPSHOT_DIR = os.environ.get("BENCHCONC_SNAPSHOT_DIR")


@acceptance("C12", "registry snapshots reproduce the published figures (data-gated)")
@pytest.mark.skipif(not SNAPSHOT_DIR, reason="set BENCHCONC_SNAPSHOT_DIR to run")
def test_c12_snapshot_figures():
    root = Path(SNAPSHOT_DIR)
    snap = os.environ.get("BENCHCONC_SNAPSHOT_DATE")
    snap = date.fromisoformat(snap) if snap else None
    models, _ = ingest.load_models(root / "models.csv", snapshot_date=snap)
    recs, _ = ingest.load_benchmarks(root / "benchmarks.csv",
                                     affiliations_path=root / "affiliations.csv",
                                     snapshot_date=snap)
    table = metrics.allocate_authority(recs)
    failures = []

    def check(label, ok, value):
        if not ok:
            failures.append(f"{label}: {value}")

    g = metrics.gini(table.values())
    check("authority gini 0.89 +/- 0.01", abs(g - 0.89) <= 0.01, g)
    pareto = analytics.country_pareto(recs)
    check("country gini 0.889 +/- 0.005", abs(pareto.gini - 0.889) <= 0.005, pareto.gini)
    top3 = sum(s for _, s in metrics.top_shares(table, 3))
    check("top-3 share >= 0.49", top3 >= 0.49, top3)
    gr = graph.build_graph(recs)
    counts = (gr.number_of_nodes(), gr.number_of_edges())
    check("graph 2402 nodes / 4559 edges", counts == (2402, 4559), counts)
    for alpha, published in ((0.0, 0.04200946), (0.25, 0.04200146), (0.5, 0.04199466)):
        h = metrics.hhi(metrics.allocate_authority(recs, blend_alpha=alpha).values())
        check(f"HHI(alpha={alpha}) = {published}", abs(h - published) <= 1e-6, h)
    ratios = analytics.pca(analytics.derive_indicators(models)).explained_variance_ratio
    top2 = float(ratios[:2].sum())
    check("top-2 PCA ratio 0.81 +/- 0.02", abs(top2 - 0.81) <= 0.02, top2)
    assert not failures, "; ".join(failures)
