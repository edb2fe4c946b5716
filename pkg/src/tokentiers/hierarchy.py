"""Tier discovery and propagation over the derivation graph.

Tier assignment and graph distance are deliberately different procedures:
tiers come from first-visit TVL-priority traversal, distances from plain
multi-source BFS. They agree on trees and on uniform-TVL DAGs but are
allowed to diverge elsewhere; :func:`tier_distance_divergence` counts the
disagreements instead of reconciling them.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field, replace

from .errors import NoBaseAssetsError
from .graph import (
    DerivationGraph,
    Edge,
    FilterParams,
    TokenGraph,
    build_derivation_graph,
    build_full_graph,
)
from .ingest import resolve_identity
from .types import PoolRecord, TokenRef


@dataclass(frozen=True)
class DiscoveryParams:
    """Thresholds for Tier-0 discovery."""

    min_outdeg: int = 3
    min_src_tvl_usd: float = 1e6
    demotion_ratio: float = 1000.0

    def __post_init__(self):
        if self.min_outdeg <= 0 or self.min_src_tvl_usd <= 0 or self.demotion_ratio <= 0:
            raise ValueError("discovery parameters must be strictly positive")


@dataclass(frozen=True)
class DiscoveryResult:
    tier0_set: frozenset[TokenRef]
    demotions: dict[TokenRef, TokenRef]
    log: tuple[str, ...]


@dataclass(frozen=True)
class TierAssignment:
    """Token tiers with parent pointers and BFS graph distances.

    ``tier`` maps every derivation-graph node to an integer >= 0 or -1
    (unmapped). ``parent_edge`` records the edge whose first visit fixed a
    token's tier (None for Tier-0 tokens and demoted candidates).
    """

    tier: dict[TokenRef, int]
    parent: dict[TokenRef, TokenRef | None]
    parent_edge: dict[TokenRef, Edge | None]
    tier0_set: frozenset[TokenRef]
    graph_distance: dict[TokenRef, int] = field(default_factory=dict)

    def mapped_tokens(self) -> list[TokenRef]:
        return [t for t, k in self.tier.items() if k >= 0]


def discover_tier0(
    deriv: DerivationGraph,
    full: TokenGraph,
    p: DiscoveryParams,
) -> DiscoveryResult:
    """Find Tier-0 candidates and demote name-alias candidates.

    Candidates have zero in-degree in the derivation graph, out-degree in
    the full graph >= min_outdeg, and source TVL >= min_src_tvl_usd. A
    candidate b whose symbol extends another same-chain candidate a (a is
    a prefix or suffix of b) is demoted to Tier 1 under a when a's source
    TVL is at least TVL(b) / demotion_ratio. Smaller-TVL candidates are
    demoted first and demoted tokens cannot act as parents.
    """
    candidates = []
    n_indeg = n_outdeg = n_tvl = 0
    for n in sorted(deriv.nodes):
        if deriv.in_degree(n) != 0:
            n_indeg += 1
            continue
        if full.out_degree(n) < p.min_outdeg:
            n_outdeg += 1
            continue
        if full.source_tvl(n) < p.min_src_tvl_usd:
            n_tvl += 1
            continue
        candidates.append(n)
    if not candidates:
        raise NoBaseAssetsError(
            "no Tier-0 candidates survived discovery thresholds",
            diagnostics={
                "nodes": len(deriv.nodes),
                "failed_in_degree": n_indeg,
                "failed_out_degree": n_outdeg,
                "failed_source_tvl": n_tvl,
            },
        )

    src_tvl = {c: full.source_tvl(c) for c in candidates}
    demotions: dict[TokenRef, TokenRef] = {}
    log: list[str] = []
    # Ascending TVL: aliases settle under larger survivors first.
    for b in sorted(candidates, key=lambda c: (src_tvl[c], c)):
        best = None
        for a in candidates:
            if a == b or a in demotions or a.chain != b.chain:
                continue
            sym_a, sym_b = a.symbol, b.symbol
            if sym_a == sym_b or not (
                sym_b.startswith(sym_a) or sym_b.endswith(sym_a)
            ):
                continue
            if src_tvl[a] < src_tvl[b] / p.demotion_ratio:
                continue
            if best is None or (src_tvl[a], a) > (src_tvl[best], best):
                best = a
        if best is not None:
            demotions[b] = best
            log.append(f"demoted {b} to tier 1 under {best}")

    tier0 = frozenset(c for c in candidates if c not in demotions)
    return DiscoveryResult(tier0_set=tier0, demotions=demotions, log=tuple(log))


def _edge_sort_key(e: Edge):
    return (-e.tvl_usd, e.dst.symbol, e.dst.chain, e.protocol, e.provenance.value)


def propagate_tiers(
    deriv: DerivationGraph,
    tier0: frozenset[TokenRef] | set[TokenRef],
    demotions: dict[TokenRef, TokenRef] | None = None,
) -> TierAssignment:
    """First-visit TVL-priority traversal from the Tier-0 set.

    The queue is ordered by descending edge TVL; among equal-TVL entries,
    earlier canonical insertion wins, with successors enqueued in
    (TVL desc, symbol asc, chain asc) order. This keeps the traversal
    deterministic and independent of input edge ordering, and degenerates
    to plain BFS when all edge TVLs are equal. Unreached tokens get -1.
    """
    demotions = demotions or {}
    tier: dict[TokenRef, int] = {}
    parent: dict[TokenRef, TokenRef | None] = {}
    parent_edge: dict[TokenRef, Edge | None] = {}
    for t in tier0:
        tier[t] = 0
        parent[t] = None
        parent_edge[t] = None
    for b, a in demotions.items():
        tier[b] = 1
        parent[b] = a
        parent_edge[b] = None

    heap: list[tuple[float, int, int]] = []
    entries: list[tuple[Edge, TokenRef]] = []
    counter = 0

    def push_successors(x: TokenRef):
        nonlocal counter
        for e in sorted(deriv.out_edges(x), key=_edge_sort_key):
            entries.append((e, x))
            heapq.heappush(heap, (-e.tvl_usd, counter, len(entries) - 1))
            counter += 1

    for x in sorted(tier):
        push_successors(x)

    while heap:
        _, _, idx = heapq.heappop(heap)
        e, x = entries[idx]
        y = e.dst
        if y in tier:
            continue
        tier[y] = tier[x] + 1
        parent[y] = x
        parent_edge[y] = e
        push_successors(y)

    for n in deriv.nodes:
        if n not in tier:
            tier[n] = -1
            parent[n] = None
            parent_edge[n] = None

    return TierAssignment(
        tier=tier,
        parent=parent,
        parent_edge=parent_edge,
        tier0_set=frozenset(tier0),
    )


def compute_graph_distance(
    deriv: DerivationGraph,
    tier0: frozenset[TokenRef] | set[TokenRef],
) -> dict[TokenRef, int]:
    """TVL-agnostic multi-source BFS hop count from the Tier-0 set.

    Unreachable tokens are absent from the returned map.
    """
    dist: dict[TokenRef, int] = {t: 0 for t in tier0}
    queue = deque(sorted(tier0))
    while queue:
        x = queue.popleft()
        for e in sorted(deriv.out_edges(x), key=_edge_sort_key):
            if e.dst not in dist:
                dist[e.dst] = dist[x] + 1
                queue.append(e.dst)
    return dist


def tier_distance_divergence(tiers: TierAssignment) -> int:
    """Count mapped tokens whose tier differs from their graph distance."""
    count = 0
    for tok, k in tiers.tier.items():
        d = tiers.graph_distance.get(tok)
        if k >= 0 and d is not None and k != d:
            count += 1
    return count


def jaccard(a: set, b: set) -> tuple[float, bool]:
    """Jaccard similarity with the degenerate empty-union convention.

    Returns (value, degenerate_flag); both sets empty gives 1.0, flagged.
    """
    union = len(a | b)
    if union == 0:
        return 1.0, True
    return len(a & b) / union, False


@dataclass(frozen=True)
class SensitivityCell:
    params: "DiscoveryParams"
    jaccard: float
    tier0_count: int
    degenerate: bool = False
    failed: bool = False


def jaccard_sensitivity(
    deriv: DerivationGraph,
    full: TokenGraph,
    grid: list[DiscoveryParams],
    baseline: DiscoveryParams | None = None,
) -> list[SensitivityCell]:
    """Tier-0 set Jaccard similarity against the baseline, per grid cell.

    The baseline cell evaluates to 1.0 by construction. Cells whose
    discovery fails are reported with an empty set and flagged.
    """
    baseline = baseline or DiscoveryParams()
    base_set = set(discover_tier0(deriv, full, baseline).tier0_set)
    cells = []
    for params in grid:
        failed = False
        try:
            cell_set = set(discover_tier0(deriv, full, params).tier0_set)
        except NoBaseAssetsError:
            cell_set = set()
            failed = True
        value, degenerate = jaccard(base_set, cell_set)
        cells.append(
            SensitivityCell(
                params=params,
                jaccard=value,
                tier0_count=len(cell_set),
                degenerate=degenerate,
                failed=failed,
            )
        )
    return cells


@dataclass(frozen=True)
class HierarchyRun:
    """One end-to-end discovery run: records in, tier assignment out."""

    records: tuple[PoolRecord, ...]
    full: TokenGraph
    deriv: DerivationGraph
    discovery: DiscoveryResult
    tiers: TierAssignment


def run_hierarchy(
    records: list[PoolRecord],
    filter_params: FilterParams | None = None,
    discovery_params: DiscoveryParams | None = None,
    receipt_registry: dict[str, str] | None = None,
    resolve: bool = True,
) -> HierarchyRun:
    """Resolve identities, build both graphs, discover and propagate tiers."""
    fp = filter_params or FilterParams()
    dp = discovery_params or DiscoveryParams()
    if resolve:
        _, records = resolve_identity(list(records))
    full = build_full_graph(records, receipt_registry)
    deriv = build_derivation_graph(full, fp)
    discovery = discover_tier0(deriv, full, dp)
    tiers = propagate_tiers(deriv, discovery.tier0_set, discovery.demotions)
    tiers = replace(
        tiers, graph_distance=compute_graph_distance(deriv, discovery.tier0_set)
    )
    return HierarchyRun(
        records=tuple(records), full=full, deriv=deriv, discovery=discovery, tiers=tiers
    )


@dataclass(frozen=True)
class StabilityRow:
    label: str
    pools: int
    tier0_count: int
    agreement_pct: float
    spearman_rho: float
    flagged: bool = False
    note: str = ""


def temporal_stability(
    snapshots: list[tuple[str, list[PoolRecord]]],
    baseline: TierAssignment,
    filter_params: FilterParams | None = None,
    discovery_params: DiscoveryParams | None = None,
) -> list[StabilityRow]:
    """Re-run discovery independently per snapshot and compare to baseline.

    Agreement is the share of common tokens (present in both runs) whose
    tier matches exactly; Spearman rho is rank correlation over the same
    tokens. A snapshot with no discoverable Tier-0 set yields a flagged
    row instead of failing the whole analysis.
    """
    from scipy import stats

    rows = []
    for label, records in snapshots:
        pools = len({r.pool_id for r in records})
        try:
            run = run_hierarchy(records, filter_params, discovery_params)
        except NoBaseAssetsError as exc:
            rows.append(
                StabilityRow(
                    label=label,
                    pools=pools,
                    tier0_count=0,
                    agreement_pct=math.nan,
                    spearman_rho=math.nan,
                    flagged=True,
                    note=str(exc),
                )
            )
            continue
        common = sorted(set(run.tiers.tier) & set(baseline.tier))
        if not common:
            rows.append(
                StabilityRow(
                    label=label,
                    pools=pools,
                    tier0_count=len(run.discovery.tier0_set),
                    agreement_pct=math.nan,
                    spearman_rho=math.nan,
                    flagged=True,
                    note="no common tokens",
                )
            )
            continue
        base_t = [baseline.tier[t] for t in common]
        snap_t = [run.tiers.tier[t] for t in common]
        agree = sum(1 for a, b in zip(base_t, snap_t) if a == b) / len(common)
        if len(set(base_t)) < 2 or len(set(snap_t)) < 2:
            rho = 1.0 if base_t == snap_t else math.nan
            flagged = base_t != snap_t
            note = "constant tiers" if flagged else ""
        else:
            rho = float(stats.spearmanr(base_t, snap_t).statistic)
            flagged, note = False, ""
        rows.append(
            StabilityRow(
                label=label,
                pools=pools,
                tier0_count=len(run.discovery.tier0_set),
                agreement_pct=100.0 * agree,
                spearman_rho=rho,
                flagged=flagged,
                note=note,
            )
        )
    return rows


@dataclass(frozen=True)
class AblationRow:
    step: str
    toggle: str
    core_changes: tuple[tuple[TokenRef, int, int], ...]
    affected_share: float
    failed: bool = False


def ablate_steps(
    records: list[PoolRecord],
    core_tokens: list[TokenRef],
    filter_params: FilterParams | None = None,
    discovery_params: DiscoveryParams | None = None,
) -> list[AblationRow]:
    """Leave-one-step-out ablation of the derivation filter chain.

    For each filter step toggled off, the full pipeline re-runs and tiers
    are compared to the baseline run: which designated core tokens moved,
    and what fraction of all tokens was reassigned. A run whose discovery
    fails counts every baseline-mapped token as affected.
    """
    fp = filter_params or FilterParams()
    baseline = run_hierarchy(records, fp, discovery_params)
    base_tier = baseline.tiers.tier
    rows = []
    for step, toggle in FilterParams.STEP_TOGGLES:
        if not getattr(fp, toggle):
            continue
        try:
            run = run_hierarchy(records, fp.without_step(toggle), discovery_params)
            new_tier = run.tiers.tier
            failed = False
        except NoBaseAssetsError:
            new_tier = {}
            failed = True
        universe = set(base_tier) | set(new_tier)
        changed = {
            t for t in universe if base_tier.get(t, -1) != new_tier.get(t, -1)
        }
        core_changes = tuple(
            (t, base_tier.get(t, -1), new_tier.get(t, -1))
            for t in core_tokens
            if base_tier.get(t, -1) != new_tier.get(t, -1)
        )
        rows.append(
            AblationRow(
                step=step,
                toggle=toggle,
                core_changes=core_changes,
                affected_share=len(changed) / len(universe) if universe else 0.0,
                failed=failed,
            )
        )
    return rows
