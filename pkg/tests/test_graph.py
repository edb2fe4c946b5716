"""Full-graph construction, derivation filtering, and cycle detection."""

import numpy as np
import pytest

from conftest import rec, tok
from tokentiers.exports import graph_csv
from tokentiers.graph import (
    CdpEdge,
    DerivationGraph,
    Edge,
    FilterParams,
    Provenance,
    RULE_CDP,
    RULE_OBSERVED,
    RULE_REVERSED,
    RULE_SYNTHETIC,
    TokenGraph,
    build_derivation_graph,
    build_full_graph,
    detect_cycles,
)
from tokentiers.types import Category

ALL_OFF = FilterParams(
    drop_dex=False,
    drop_cross_collateral=False,
    drop_base_to_base=False,
    reverse_wrappers=False,
    protect_tier0=False,
    add_cdp_edges=False,
    add_synthetic_names=False,
)


class TestBuildFullGraph:
    def test_lending_pool_infers_receipt(self, fig1_records):
        g = build_full_graph(fig1_records)
        assert g.node_count == 2
        assert g.edge_count == 1
        (e,) = g.edges
        assert e.src.symbol == "USDC"
        assert e.dst.symbol == "AUSDC"
        assert e.tvl_usd == 3.8e9

    def test_input_equals_output_gives_no_edge(self):
        g = build_full_graph([rec("ETH", "ETH", tvl=100.0)])
        assert g.edge_count == 0
        assert g.node_count == 1

    def test_dex_pool_without_output_adds_nodes_only(self):
        # 5 pools, one a 2-input DEX pool without output: its two inputs
        # become nodes but it emits no edges.
        records = [
            rec("A", "B", tvl=10, pool_id="w1"),
            rec("B", "C", tvl=10, pool_id="w2"),
            rec("C", "D", tvl=10, pool_id="w3"),
            rec("D", "E", tvl=10, pool_id="w4"),
            rec(["X", "Y"], category=Category.DEX, tvl=50, pool_id="dexp"),
        ]
        g = build_full_graph(records)
        assert tok("X") in g.nodes and tok("Y") in g.nodes
        assert not [e for e in g.edges if e.pool_id == "dexp"]
        assert g.edge_count == 4

    def test_multi_pair_pool_splits_tvl_equally(self):
        g = build_full_graph(
            [rec(["USDC", "WETH"], "LPX", category=Category.DEX, tvl=100.0)]
        )
        assert g.edge_count == 2
        assert all(e.tvl_usd == 50.0 for e in g.edges)

    def test_total_edge_tvl_conserves_pool_tvl(self):
        rng = np.random.default_rng(11)
        records = []
        emitted_total = 0.0
        for i in range(60):
            n_inputs = int(rng.integers(1, 4))
            inputs = [f"T{i}N{j}" for j in range(n_inputs)]
            tvl = float(rng.uniform(0, 1e6))
            records.append(rec(inputs, f"OUT{i}", tvl=tvl, pool_id=f"r{i}"))
            emitted_total += tvl
        g = build_full_graph(records)
        assert sum(e.tvl_usd for e in g.edges) == pytest.approx(emitted_total, rel=1e-12)

    def test_never_creates_self_edges(self):
        records = [
            rec(["A", "B"], "A", tvl=30.0),
            rec("C", "C", tvl=10.0),
            rec("USDC", protocol="aave", category=Category.LENDING, tvl=5.0),
        ]
        g = build_full_graph(records)
        assert all(e.src != e.dst for e in g.edges)

    def test_unregistered_lending_protocol_skips_edge(self):
        g = build_full_graph(
            [rec("USDC", protocol="mysteryfi", category=Category.LENDING, tvl=10.0)]
        )
        assert g.edge_count == 0
        assert g.node_count == 1

    def test_inferred_receipt_reuses_existing_node(self):
        records = [
            rec("USDC", protocol="aave", category=Category.LENDING, tvl=10.0),
            rec(tok("AUSDC", address="0xaa"), tvl=5.0, protocol="other"),
        ]
        g = build_full_graph(records)
        assert g.node_count == 2
        receipts = [e.dst for e in g.edges]
        assert receipts[0].address == "0xaa"


class TestDerivationSteps:
    def test_identity_pass_through_when_all_off(self):
        records = [
            rec(["A", "B"], "LP1", category=Category.DEX, tvl=10),
            rec("C", "D", category=Category.LENDING, tvl=20),
        ]
        full = build_full_graph(records)
        deriv = build_derivation_graph(full, ALL_OFF)
        assert deriv.nodes == full.nodes
        assert sorted(map(repr, deriv.edges)) == sorted(map(repr, full.edges))
        assert set(deriv.rules) == {RULE_OBSERVED}

    def test_step_a_drops_dex_edges(self):
        full = build_full_graph(
            [rec(["A", "B"], "LP1", category=Category.DEX, tvl=10), rec("C", "D", tvl=5)]
        )
        deriv = build_derivation_graph(full, FilterParams())
        assert all(e.category is not Category.DEX for e in deriv.edges)

    def test_step_b_suppresses_cross_collateral(self):
        # Output B also appears among the pool's inputs: edge A->B suppressed.
        full = build_full_graph([rec(["A", "B"], "B", tvl=10, pool_id="cc")])
        assert full.edge_count == 1 and full.edges[0].cross_collateral
        deriv = build_derivation_graph(full, FilterParams())
        assert deriv.edge_count == 0
        kept = build_derivation_graph(full, ALL_OFF)
        assert kept.edge_count == 1

    def test_step_c_drops_base_to_base_lending(self):
        records = [rec("USDC", "USDT", category=Category.LENDING, tvl=5e6, pool_id="bb")]
        # Give both endpoints significant-base credentials.
        for i, base in enumerate(("USDC", "USDT")):
            for j in range(3):
                records.append(
                    rec(base, f"LP{i}{j}", category=Category.OTHER, tvl=1e6)
                )
        full = build_full_graph(records)
        deriv = build_derivation_graph(full, FilterParams(add_synthetic_names=False))
        assert not [e for e in deriv.edges if e.pool_id == "bb"]

    def test_step_d_reverses_wrapper_pair_to_single_edge(self):
        records = [
            rec("ETH", "WETH", protocol="wrapper", tvl=10, pool_id="wrap"),
            rec("WETH", "ETH", protocol="wrapper", tvl=10, pool_id="unwrap"),
        ]
        full = build_full_graph(records)
        deriv = build_derivation_graph(
            full, FilterParams(add_synthetic_names=False, protect_tier0=False)
        )
        assert deriv.edge_count == 1
        (e,) = deriv.edges
        assert (e.src.symbol, e.dst.symbol) == ("ETH", "WETH")

    def test_step_d_lone_antiedge_gets_reversed_provenance(self):
        full = build_full_graph([rec("WETH", "ETH", tvl=10)])
        deriv = build_derivation_graph(
            full, FilterParams(add_synthetic_names=False, protect_tier0=False)
        )
        (e,) = deriv.edges
        assert e.provenance is Provenance.REVERSED
        assert deriv.rules == (RULE_REVERSED,)
        assert (e.src.symbol, e.dst.symbol) == ("ETH", "WETH")

    def test_step_d_skipped_without_prefixes(self):
        full = build_full_graph([rec("WETH", "ETH", tvl=10)])
        deriv = build_derivation_graph(
            full,
            FilterParams(
                wrapper_prefixes=(), add_synthetic_names=False, protect_tier0=False
            ),
        )
        (e,) = deriv.edges
        assert (e.src.symbol, e.dst.symbol) == ("WETH", "ETH")

    def test_step_e_protects_strong_base_candidates(self):
        records = [rec("XRP", "USDC", tvl=5e6, pool_id="weird")]
        for j in range(3):
            records.append(rec("USDC", f"LP{j}", tvl=1e6))
        full = build_full_graph(records)
        deriv = build_derivation_graph(full, FilterParams(add_synthetic_names=False))
        assert not [e for e in deriv.edges if e.pool_id == "weird"]
        # Name-related incoming edges survive protection.
        records2 = [rec("AUSDC", "USDC", tvl=5e6, pool_id="related")]
        for j in range(3):
            records2.append(rec("USDC", f"LP{j}", tvl=1e6))
        full2 = build_full_graph(records2)
        deriv2 = build_derivation_graph(
            full2, FilterParams(add_synthetic_names=False, reverse_wrappers=False)
        )
        assert [e for e in deriv2.edges if e.pool_id == "related"]

    def test_step_f_adds_configured_cdp_edge(self):
        records = [rec("ETH", tvl=10), rec("DAI", tvl=10)]
        full = build_full_graph(records)
        params = FilterParams(
            cdp_edges=(CdpEdge("ETH", "DAI", "makerdao"),), add_synthetic_names=False
        )
        deriv = build_derivation_graph(full, params)
        cdp = [e for e in deriv.edges if e.provenance is Provenance.CDP_MINT]
        assert len(cdp) == 1
        assert (cdp[0].src.symbol, cdp[0].dst.symbol) == ("ETH", "DAI")
        assert deriv.rules[deriv.edges.index(cdp[0])] == RULE_CDP

    def test_step_f_skips_chains_missing_either_token(self):
        full = build_full_graph([rec("ETH", tvl=10)])
        params = FilterParams(cdp_edges=(CdpEdge("ETH", "DAI", "makerdao"),))
        deriv = build_derivation_graph(full, params)
        assert not [e for e in deriv.edges if e.provenance is Provenance.CDP_MINT]

    def test_step_g_synthetic_edge_via_prefix_strip(self):
        full = build_full_graph([rec("WSTETH", tvl=10), rec("STETH", tvl=10)])
        deriv = build_derivation_graph(full, FilterParams())
        synth = [e for e in deriv.edges if e.provenance is Provenance.SYNTHETIC_NAME]
        pairs = {(e.src.symbol, e.dst.symbol) for e in synth}
        assert ("STETH", "WSTETH") in pairs
        assert synth[0].tvl_usd == 0.0

    def test_step_g_most_specific_parent_wins(self):
        full = build_full_graph(
            [rec("WSTETH", tvl=1), rec("STETH", tvl=1), rec("ETH", tvl=1)]
        )
        deriv = build_derivation_graph(full, FilterParams())
        parents = {
            e.dst.symbol: e.src.symbol
            for e in deriv.edges
            if e.provenance is Provenance.SYNTHETIC_NAME
        }
        assert parents["WSTETH"] == "STETH"
        assert parents["STETH"] == "ETH"

    def test_step_g_skips_tokens_with_existing_creator(self):
        records = [
            rec("STETH", "WSTETH", protocol="wrapcontract", tvl=10),
            rec("ETH", tvl=1),
        ]
        full = build_full_graph(records)
        deriv = build_derivation_graph(full, FilterParams())
        synth_dsts = {
            e.dst.symbol
            for e in deriv.edges
            if e.provenance is Provenance.SYNTHETIC_NAME
        }
        assert "WSTETH" not in synth_dsts

    def test_step_g_requires_same_chain(self):
        full = build_full_graph(
            [rec("STETH", tvl=1), rec("ETH", tvl=1, chain="Arbitrum")]
        )
        deriv = build_derivation_graph(full, FilterParams())
        assert not [e for e in deriv.edges if e.provenance is Provenance.SYNTHETIC_NAME]

    def test_audit_trail_is_total_and_closed(self):
        records = [
            rec("ETH", "WETH", tvl=10),
            rec("WETH", "ETH", tvl=10),
            rec("USDC", protocol="aave", category=Category.LENDING, tvl=10),
            rec("WSTETH", tvl=1),
            rec("STETH", tvl=1),
            rec("DAI", tvl=1),
        ]
        full = build_full_graph(records)
        params = FilterParams(cdp_edges=(CdpEdge("ETH", "DAI", "makerdao"),))
        deriv = build_derivation_graph(full, params)
        assert len(deriv.rules) == deriv.edge_count
        assert set(deriv.rules) <= {
            RULE_OBSERVED,
            RULE_REVERSED,
            RULE_CDP,
            RULE_SYNTHETIC,
        }

    def test_rerun_is_byte_identical(self):
        records = [
            rec("ETH", "WETH", tvl=10),
            rec("USDC", protocol="aave", category=Category.LENDING, tvl=10),
            rec("WSTETH", tvl=1),
            rec("STETH", tvl=1),
        ]
        full = build_full_graph(records)
        a = build_derivation_graph(full, FilterParams())
        b = build_derivation_graph(build_full_graph(records), FilterParams())
        assert graph_csv(a, a.rules) == graph_csv(b, b.rules)


def _scc_oracle(nodes, edges):
    """Brute-force SCCs from mutual reachability by path enumeration."""
    reach = {n: {n} for n in nodes}
    changed = True
    while changed:
        changed = False
        for a, b in edges:
            for src in nodes:
                if b not in reach[src] and a in reach[src]:
                    reach[src].add(b)
                    changed = True
        for a, b in edges:
            add = reach[b] - reach[a]
            if add:
                reach[a] |= add
                changed = True
    comps = set()
    for n in nodes:
        comp = frozenset(m for m in nodes if m in reach[n] and n in reach[m])
        if len(comp) > 1:
            comps.add(comp)
    return comps


def _graph_from_pairs(pairs):
    nodes = {tok(a) for a, _ in pairs} | {tok(b) for _, b in pairs}
    edges = [
        Edge(tok(a), tok(b), "proto", Category.OTHER, 1.0, pool_id=f"e{i}")
        for i, (a, b) in enumerate(pairs)
    ]
    return TokenGraph(nodes, edges)


class TestDetectCycles:
    def test_acyclic_gives_empty_list(self):
        g = _graph_from_pairs([("A", "B"), ("B", "C"), ("A", "C")])
        assert detect_cycles(g) == []

    def test_minimal_two_cycle(self):
        g = _graph_from_pairs([("A", "B"), ("B", "A")])
        (cycle,) = detect_cycles(g)
        assert {t.symbol for t in cycle.members} == {"A", "B"}
        assert cycle.tvl_usd == 2.0
        assert cycle.edge_count == 2

    def test_three_sccs_match_brute_force_oracle(self):
        pairs = [
            ("A", "B"), ("B", "A"),            # SCC of 2
            ("C", "D"), ("D", "C"),            # SCC of 2
            ("E", "F"), ("F", "G"), ("G", "E"),  # SCC of 3
            ("B", "C"), ("D", "E"), ("G", "H"),  # acyclic glue
        ]
        g = _graph_from_pairs(pairs)
        got = {frozenset(t.symbol for t in c.members) for c in detect_cycles(g)}
        want = {
            frozenset(s) for s in _scc_oracle(
                {a for a, _ in pairs} | {b for _, b in pairs},
                pairs,
            )
        }
        assert got == want
        assert len(got) == 3

    def test_random_graphs_match_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(3, 9))
            names = [f"N{i}" for i in range(n)]
            pairs = []
            for a in names:
                for b in names:
                    if a != b and rng.random() < 0.25:
                        pairs.append((a, b))
            if not pairs:
                continue
            g = _graph_from_pairs(pairs)
            got = {frozenset(t.symbol for t in c.members) for c in detect_cycles(g)}
            want = {
                frozenset(s)
                for s in _scc_oracle(set(names) & (
                    {a for a, _ in pairs} | {b for _, b in pairs}
                ), pairs)
            }
            assert got == want
