"""Tier discovery, priority propagation, distances, and the analyses."""

import numpy as np
import pytest

from conftest import eth_chain_records, rec, tok
from tokentiers.errors import NoBaseAssetsError
from tokentiers.graph import DerivationGraph, Edge, FilterParams, RULE_OBSERVED
from tokentiers.hierarchy import (
    DiscoveryParams,
    ablate_steps,
    compute_graph_distance,
    discover_tier0,
    jaccard,
    jaccard_sensitivity,
    propagate_tiers,
    run_hierarchy,
    temporal_stability,
    tier_distance_divergence,
)
from tokentiers.types import Category


def deriv_graph(weighted_pairs):
    """DerivationGraph from (src, dst, tvl) triples, symbols only."""
    nodes = set()
    edges = []
    for i, (a, b, tvl) in enumerate(weighted_pairs):
        nodes |= {tok(a), tok(b)}
        edges.append(
            Edge(tok(a), tok(b), f"p{i}", Category.OTHER, float(tvl), pool_id=f"e{i}")
        )
    return DerivationGraph(nodes, edges, [RULE_OBSERVED] * len(edges))


def full_like(deriv):
    return deriv  # discovery reads out-degree/source TVL; same graph works


class TestDiscoverTier0:
    def _run(self, records, **kw):
        return run_hierarchy(records, FilterParams(), DiscoveryParams(**kw))

    def test_strong_source_is_tier0(self):
        records = [rec("ETH", f"D{j}", tvl=8e9, pool_id=f"c{j}") for j in range(5)]
        run = self._run(records)
        assert tok("ETH") in run.discovery.tier0_set

    def test_low_out_degree_excluded(self):
        records = [
            rec("ETH", f"D{j}", tvl=8e9, pool_id=f"c{j}") for j in range(5)
        ] + [rec("SOLO", "SOLOCHILD", tvl=9e9, pool_id="solo")]
        run = self._run(records)
        assert tok("SOLO") not in run.discovery.tier0_set

    def test_low_source_tvl_excluded(self):
        records = [rec("ETH", f"D{j}", tvl=8e9, pool_id=f"c{j}") for j in range(5)]
        records += [rec("DUST", f"E{j}", tvl=10.0, pool_id=f"d{j}") for j in range(5)]
        run = self._run(records)
        assert tok("DUST") not in run.discovery.tier0_set

    def test_prefix_alias_demoted(self):
        # ETHX meets every threshold but extends ETH's symbol; demoted.
        records = [rec("ETH", f"D{j}", tvl=8e9, pool_id=f"c{j}") for j in range(4)]
        records += [rec("ETHX", f"X{j}", tvl=2e7, pool_id=f"x{j}") for j in range(4)]
        run = run_hierarchy(
            records, FilterParams(add_synthetic_names=False), DiscoveryParams()
        )
        assert tok("ETHX") not in run.discovery.tier0_set
        assert run.discovery.demotions[tok("ETHX")] == tok("ETH")
        assert run.tiers.tier[tok("ETHX")] == 1
        assert run.tiers.parent[tok("ETHX")] == tok("ETH")

    def test_demotion_respects_tvl_ratio(self):
        # Parent TVL below TVL(b)/1000: no demotion.
        records = [rec("XR", f"D{j}", tvl=3e5, pool_id=f"c{j}") for j in range(4)]
        records += [rec("XRP", f"X{j}", tvl=1e9, pool_id=f"x{j}") for j in range(4)]
        run = run_hierarchy(
            records, FilterParams(add_synthetic_names=False), DiscoveryParams()
        )
        assert tok("XRP") in run.discovery.tier0_set
        assert not run.discovery.demotions

    def test_empty_candidates_fatal_with_diagnostics(self):
        records = [rec("A", "B", tvl=10.0)]
        with pytest.raises(NoBaseAssetsError) as err:
            self._run(records)
        assert err.value.diagnostics["nodes"] == 2


class TestPropagateTiers:
    def test_three_link_chain(self):
        g = deriv_graph([("ETH", "STETH", 100), ("STETH", "ASTETH", 50)])
        tiers = propagate_tiers(g, {tok("ETH")})
        assert tiers.tier[tok("ETH")] == 0
        assert tiers.tier[tok("STETH")] == 1
        assert tiers.tier[tok("ASTETH")] == 2

    def test_unreachable_token_gets_minus_one(self):
        g = deriv_graph([("ETH", "STETH", 100), ("LONER", "ORPHAN", 5)])
        tiers = propagate_tiers(g, {tok("ETH")})
        assert tiers.tier[tok("LONER")] == -1
        assert tiers.tier[tok("ORPHAN")] == -1

    def test_diamond_prefers_high_tvl_parent(self):
        # Hand trace: A's entry (100) pops first, then X via A (100) beats
        # B (1); X fixes at tier 2 with parent A.
        g = deriv_graph(
            [("T0", "A", 100), ("T0", "B", 1), ("A", "X", 100), ("B", "X", 1)]
        )
        tiers = propagate_tiers(g, {tok("T0")})
        assert tiers.tier[tok("X")] == 2
        assert tiers.parent[tok("X")] == tok("A")

    def test_heavy_long_path_beats_light_shortcut(self):
        # First visit through the heavy chain: tier exceeds graph distance.
        g = deriv_graph([("S", "H", 1000), ("H", "X", 1000), ("S", "X", 1)])
        tiers = propagate_tiers(g, {tok("S")})
        dist = compute_graph_distance(g, {tok("S")})
        assert tiers.tier[tok("X")] == 2
        assert dist[tok("X")] == 1

    def test_parent_pointers_form_forest_with_increments(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            g, tier0 = _random_dag(rng, uniform_tvl=False)
            tiers = propagate_tiers(g, tier0)
            for t, k in tiers.tier.items():
                p = tiers.parent[t]
                if p is not None:
                    assert k == tiers.tier[p] + 1
                seen = set()
                cur = t
                while cur is not None and tiers.tier.get(cur, -1) >= 0:
                    assert cur not in seen
                    seen.add(cur)
                    if tiers.tier[cur] == 0:
                        assert cur in tiers.tier0_set or cur in tier0
                        break
                    cur = tiers.parent[cur]

    def test_edge_order_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            g, tier0 = _random_dag(rng, uniform_tvl=False)
            perm = rng.permutation(len(g.edges))
            shuffled = DerivationGraph(
                g.nodes, [g.edges[i] for i in perm], [g.rules[i] for i in perm]
            )
            a = propagate_tiers(g, tier0)
            b = propagate_tiers(shuffled, tier0)
            assert a.tier == b.tier
            assert a.parent == b.parent

    def test_demoted_tokens_seed_their_successors(self):
        g = deriv_graph([("ETHX", "CHILD", 10)])
        tiers = propagate_tiers(g, {tok("ETH2")}, {tok("ETHX"): tok("ETH2")})
        assert tiers.tier[tok("ETHX")] == 1
        assert tiers.tier[tok("CHILD")] == 2


def _random_dag(rng, n_lo=4, n_hi=12, uniform_tvl=False, p_edge=0.35):
    n = int(rng.integers(n_lo, n_hi + 1))
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                tvl = 1.0 if uniform_tvl else float(rng.integers(1, 1000))
                pairs.append((f"N{i:02d}", f"N{j:02d}", tvl))
    nodes = {tok(f"N{i:02d}") for i in range(n)}
    edges = [
        Edge(tok(a), tok(b), f"p{i}", Category.OTHER, t, pool_id=f"e{i}")
        for i, (a, b, t) in enumerate(pairs)
    ]
    g = DerivationGraph(nodes, edges, [RULE_OBSERVED] * len(edges))
    sources = {x for x in nodes if g.in_degree(x) == 0}
    return g, sources


def _bfs_oracle(g, sources):
    """All-pairs brute force: per-source hop BFS, min over sources."""
    best = {}
    for s in sources:
        dist = {s: 0}
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for e in g.out_edges(u):
                    if e.dst not in dist:
                        dist[e.dst] = dist[u] + 1
                        nxt.append(e.dst)
            frontier = nxt
        for node, d in dist.items():
            if node not in best or d < best[node]:
                best[node] = d
    return best


class TestGraphDistance:
    def test_tier0_token_distance_zero(self):
        g = deriv_graph([("ETH", "STETH", 5)])
        assert compute_graph_distance(g, {tok("ETH")})[tok("ETH")] == 0

    def test_diamond_distance_two(self):
        g = deriv_graph(
            [("T0", "A", 100), ("T0", "B", 1), ("A", "X", 100), ("B", "X", 1)]
        )
        assert compute_graph_distance(g, {tok("T0")})[tok("X")] == 2

    def test_random_dags_match_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            g, sources = _random_dag(rng)
            got = compute_graph_distance(g, sources)
            assert got == _bfs_oracle(g, sources)

    def test_distance_never_exceeds_tier(self):
        rng = np.random.default_rng(8)
        for _ in range(40):
            g, sources = _random_dag(rng)
            tiers = propagate_tiers(g, sources)
            dist = compute_graph_distance(g, sources)
            for t, k in tiers.tier.items():
                if k >= 0 and t in dist:
                    assert dist[t] <= k

    def test_uniform_tvl_degenerates_to_plain_bfs(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            g, sources = _random_dag(rng, uniform_tvl=True)
            tiers = propagate_tiers(g, sources)
            dist = compute_graph_distance(g, sources)
            for t, k in tiers.tier.items():
                if k >= 0:
                    assert k == dist[t]

    def test_tier_equals_distance_on_random_trees(self):
        rng = np.random.default_rng(10)
        for _ in range(40):
            n = int(rng.integers(3, 14))
            pairs = []
            for j in range(1, n):
                i = int(rng.integers(0, j))
                pairs.append((f"N{i:02d}", f"N{j:02d}", float(rng.integers(1, 99))))
            g = deriv_graph(pairs)
            tiers = propagate_tiers(g, {tok("N00")})
            dist = compute_graph_distance(g, {tok("N00")})
            for t, k in tiers.tier.items():
                if k >= 0:
                    assert dist[t] == k
        assert tier_distance_divergence(tiers) == 0


class TestJaccard:
    def test_self_similarity_is_one(self):
        s = {tok("A"), tok("B")}
        assert jaccard(s, set(s)) == (1.0, False)

    def test_disjoint_sets(self):
        assert jaccard({tok("A")}, {tok("B")})[0] == 0.0

    def test_two_of_four(self):
        a = {tok("X"), tok("Y"), tok("Z")}
        b = {tok("Y"), tok("Z"), tok("W")}
        assert jaccard(a, b)[0] == 0.5

    def test_symmetry(self):
        a = {tok("X"), tok("Y")}
        b = {tok("Y"), tok("W")}
        assert jaccard(a, b) == jaccard(b, a)

    def test_both_empty_degenerate(self):
        assert jaccard(set(), set()) == (1.0, True)

    def test_sensitivity_baseline_cell(self):
        records = eth_chain_records()
        run = run_hierarchy(records)
        grid = [
            DiscoveryParams(min_outdeg=d, min_src_tvl_usd=t)
            for d in (2, 3, 5)
            for t in (1.0, 1e6, 1e12)
        ]
        cells = jaccard_sensitivity(run.deriv, run.full, grid)
        by_key = {
            (c.params.min_outdeg, c.params.min_src_tvl_usd): c for c in cells
        }
        assert by_key[(3, 1e6)].jaccard == 1.0
        assert by_key[(3, 1e12)].jaccard == 0.0  # nothing survives, flagged
        assert by_key[(3, 1e12)].failed


def _rank(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _spearman_oracle(a, b):
    ra, rb = _rank(a), _rank(b)
    ra_m = sum(ra) / len(ra)
    rb_m = sum(rb) / len(rb)
    num = sum((x - ra_m) * (y - rb_m) for x, y in zip(ra, rb))
    den = (
        sum((x - ra_m) ** 2 for x in ra) * sum((y - rb_m) ** 2 for y in rb)
    ) ** 0.5
    return num / den


class TestTemporalStability:
    def test_identical_snapshot_perfect_agreement(self):
        records = eth_chain_records()
        baseline = run_hierarchy(records).tiers
        (row,) = temporal_stability([("2025Q4", records)], baseline)
        assert row.agreement_pct == 100.0
        assert row.spearman_rho == pytest.approx(1.0)
        assert not row.flagged

    def test_one_tier_shift_among_ten_common_gives_ninety(self):
        # Trim one USDC filler so the shared universe is exactly 10 tokens
        # (5 hierarchy tokens + 5 LPs); USDC still has out-degree 3.
        base_records = [r for r in eth_chain_records() if r.pool_id != "dex-usdc-2"]
        baseline = run_hierarchy(base_records).tiers
        assert len(baseline.tier) == 10
        # Same universe, but ASTETH now derives from ETH instead of STETH:
        # exactly one common token shifts a tier.
        drifted = [r for r in base_records if r.pool_id != "aave-steth"] + [
            rec(
                "STETH",
                protocol="aave",
                category=Category.LENDING,
                tvl=4e6,
                pool_id="aave-steth",
            ),
            rec(
                "ETH",
                "ASTETH",
                protocol="shortcut",
                category=Category.OTHER,
                tvl=9e6,
                pool_id="drift",
            ),
        ]
        (row,) = temporal_stability([("drift", drifted)], baseline)
        assert row.agreement_pct == pytest.approx(90.0)

    def test_drift_rho_matches_rank_formula(self):
        base_records = eth_chain_records()
        run0 = run_hierarchy(base_records)
        drifted = [r for r in base_records if r.pool_id != "aave-steth"] + [
            rec("ETH", "ASTETH", protocol="newproto", tvl=4e6, pool_id="drift")
        ]
        run1 = run_hierarchy(drifted)
        (row,) = temporal_stability([("drift", drifted)], run0.tiers)
        common = sorted(set(run0.tiers.tier) & set(run1.tiers.tier))
        want = _spearman_oracle(
            [run0.tiers.tier[t] for t in common],
            [run1.tiers.tier[t] for t in common],
        )
        assert row.spearman_rho == pytest.approx(want, abs=1e-12)

    def test_failed_snapshot_flagged_not_fatal(self):
        records = eth_chain_records()
        baseline = run_hierarchy(records).tiers
        weak = [rec("A", "B", tvl=5.0, pool_id="w")]
        (row,) = temporal_stability([("weak", weak)], baseline)
        assert row.flagged


class TestAblation:
    def test_disabling_reversal_severs_eth_chain(self):
        records = eth_chain_records()
        core = [tok("ETH"), tok("STETH"), tok("ASTETH"), tok("USDC")]
        rows = ablate_steps(records, core)
        by_toggle = {r.toggle: r for r in rows}
        row = by_toggle["reverse_wrappers"]
        changed = {t.symbol for t, _, _ in row.core_changes}
        assert {"ETH", "STETH", "ASTETH"} <= changed
        assert "USDC" not in changed
        new_tiers = {t.symbol: new for t, _, new in row.core_changes}
        assert new_tiers["STETH"] == -1

    def test_vacuous_step_changes_nothing(self):
        records = eth_chain_records()
        rows = ablate_steps(records, [tok("ETH")])
        by_toggle = {r.toggle: r for r in rows}
        # No CDP edges configured: toggling the step off is a no-op.
        assert by_toggle["add_cdp_edges"].affected_share == 0.0
        assert by_toggle["add_cdp_edges"].core_changes == ()

    def test_per_step_counts_on_hand_traced_fixture(self):
        records = eth_chain_records()
        rows = ablate_steps(records, [tok("ETH"), tok("USDC")])
        by_toggle = {r.toggle: r for r in rows}
        assert len(rows) == 7
        # Hand trace on the 10-token universe (ETH, STETH, ASTETH, USDC,
        # AUSDC, 6 LPs): dropping the DEX filter admits LP edges, so the 6
        # LP tokens become mapped; core tokens keep their tiers.
        assert by_toggle["drop_dex"].core_changes == ()
        assert by_toggle["drop_dex"].affected_share == pytest.approx(6 / 11)
        # Cross-collateral / base-to-base / protection never fire here.
        for toggle in ("drop_cross_collateral", "drop_base_to_base", "protect_tier0"):
            assert by_toggle[toggle].affected_share == 0.0

    def test_sensitivity_and_divergence_on_eth_chain(self):
        run = run_hierarchy(eth_chain_records())
        assert tier_distance_divergence(run.tiers) == 0
