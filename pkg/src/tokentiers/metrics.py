"""Layering multiplier, its decomposition, and embedded-yield correction.

The multiplier is total mapped TVL over Tier-0 TVL; its excess over one is
allocated to protocol groups by their share of tier-increasing edge TVL.
Embedded yield is the recursive sum of creation yields along a token's
parent chain, added to reported APY to obtain corrected APY.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InternalError, UndefinedMultiplierError
from .graph import DerivationGraph, Edge, build_full_graph
from .hierarchy import TierAssignment
from .types import (
    Category,
    DECOMPOSITION_GROUPS,
    GROUP_OTHER,
    PoolRecord,
    TokenRef,
    category_group,
)


def token_tvl_attribution(
    records: list[PoolRecord],
    tiers: TierAssignment | None = None,
) -> dict[TokenRef, float]:
    """Attribute each pool's TVL to its input tokens in equal shares."""
    out: dict[TokenRef, float] = {}
    for rec in records:
        share = rec.tvl_usd / len(rec.input_tokens)
        for tok in rec.input_tokens:
            out[tok] = out.get(tok, 0.0) + share
    return out


@dataclass(frozen=True)
class MultiplierReport:
    lm: float
    tvl_mapped: float
    tvl_tier0: float
    tvl_unmapped: float
    tier_shares: dict[int, float]
    decomposition: dict[str, float] = field(default_factory=dict)
    diagnostics: tuple[str, ...] = ()


def layering_multiplier(
    attribution: dict[TokenRef, float],
    tiers: TierAssignment,
) -> MultiplierReport:
    """System-wide layering multiplier: mapped TVL over Tier-0 TVL.

    Tokens with tier -1 are excluded from both sums; their TVL is reported
    separately as ``tvl_unmapped``. Raises when Tier-0 TVL is zero.
    """
    mapped = 0.0
    tier0 = 0.0
    unmapped = 0.0
    by_tier: dict[int, float] = {}
    for tok, tvl in attribution.items():
        k = tiers.tier.get(tok, -1)
        if k < 0:
            unmapped += tvl
            continue
        mapped += tvl
        by_tier[k] = by_tier.get(k, 0.0) + tvl
        if k == 0:
            tier0 += tvl
    if tier0 <= 0:
        raise UndefinedMultiplierError(
            "layering multiplier undefined: no Tier-0 token has positive TVL"
        )
    shares = {k: v / mapped for k, v in sorted(by_tier.items())}
    return MultiplierReport(
        lm=mapped / tier0,
        tvl_mapped=mapped,
        tvl_tier0=tier0,
        tvl_unmapped=unmapped,
        tier_shares=shares,
    )


def tier_increasing_edges(
    deriv: DerivationGraph, tiers: TierAssignment
) -> list[Edge]:
    """Edges whose destination sits exactly one tier above their source."""
    out = []
    for e in deriv.edges:
        ks, kd = tiers.tier.get(e.src, -1), tiers.tier.get(e.dst, -1)
        if ks >= 0 and kd == ks + 1:
            out.append(e)
    return out


def decompose_multiplier(
    deriv: DerivationGraph,
    tiers: TierAssignment,
    lm: float,
) -> tuple[dict[str, float], tuple[str, ...]]:
    """Allocate the multiplier's excess over one across protocol groups.

    Group weights are shares of tier-increasing edge TVL; contributions sum
    to lm - 1 exactly. When no tier-increasing TVL exists but lm > 1, the
    excess cannot be allocated and a diagnostic is returned alongside a
    zero decomposition.
    """
    by_group = {g: 0.0 for g in DECOMPOSITION_GROUPS}
    total = 0.0
    for e in tier_increasing_edges(deriv, tiers):
        by_group[category_group(e.category)] += e.tvl_usd
        total += e.tvl_usd
    diagnostics: tuple[str, ...] = ()
    if total <= 0:
        if lm > 1:
            diagnostics = (
                "no tier-increasing edge TVL while lm > 1; excess unallocated",
            )
        return {g: 0.0 for g in DECOMPOSITION_GROUPS}, diagnostics
    excess = lm - 1.0
    return {g: (v / total) * excess for g, v in by_group.items()}, diagnostics


@dataclass(frozen=True)
class TransitionRow:
    from_tier: int
    to_tier: int
    tvl_usd: float
    shares: dict[str, float]

    @property
    def label(self) -> str:
        return f"T{self.from_tier}->T{self.to_tier}"


def tier_transition_table(
    deriv: DerivationGraph,
    tiers: TierAssignment,
) -> list[TransitionRow]:
    """Per-transition edge TVL with protocol-group shares of each row.

    Transitions with no edge TVL are omitted.
    """
    buckets: dict[int, dict[str, float]] = {}
    for e in tier_increasing_edges(deriv, tiers):
        k = tiers.tier[e.src]
        row = buckets.setdefault(k, {g: 0.0 for g in DECOMPOSITION_GROUPS})
        row[category_group(e.category)] += e.tvl_usd
    rows = []
    for k in sorted(buckets):
        total = sum(buckets[k].values())
        if total <= 0:
            continue
        shares = {g: v / total for g, v in buckets[k].items()}
        rows.append(
            TransitionRow(from_tier=k, to_tier=k + 1, tvl_usd=total, shares=shares)
        )
    return rows


@dataclass(frozen=True)
class EmbeddedYieldTable:
    """Creation yields per hierarchy edge and cumulative embedded yield.

    ``embedded`` is zero for Tier-0 tokens and, for every mapped non-base
    token, the parent's embedded yield plus the parent-edge creation yield
    (zero when unmatched, making the correction conservative).
    """

    creation_yield: dict[tuple[TokenRef, TokenRef], float]
    embedded: dict[TokenRef, float]
    match_rate: float
    matched_edges: int
    eligible_edges: int
    match_chain_len: dict[TokenRef, int] = field(default_factory=dict)

    def embedded_for(self, token: TokenRef) -> float:
        return self.embedded.get(token, 0.0)


def build_embedded_yields(
    deriv: DerivationGraph,
    tiers: TierAssignment,
    records: list[PoolRecord],
) -> EmbeddedYieldTable:
    """Match creation yields to hierarchy edges and accumulate them.

    For each mapped non-base token the hierarchy edge is parent -> token.
    Its creation yield is the APY of the best-matching single-input,
    non-DEX pool issuing the token (explicit output or inferred lending
    receipt), preferring the highest-TVL match. DEX parent edges are
    excluded from the match-rate denominator.
    """
    # Candidate creation pools per issued token: single-input, non-DEX.
    single_input = [
        r
        for r in records
        if len(r.input_tokens) == 1
        and r.category is not Category.DEX
        and r.apy_total is not None
    ]
    pool_apy: dict[str, tuple[float, float]] = {}
    for r in single_input:
        best = pool_apy.get(r.pool_id)
        if best is None or r.tvl_usd > best[0]:
            pool_apy[r.pool_id] = (r.tvl_usd, r.apy_total)
    issuer: dict[TokenRef, tuple[float, float]] = {}  # token -> (tvl, apy)
    pool_graph = build_full_graph(single_input)
    for e in sorted(pool_graph.edges, key=lambda e: (e.pool_id, e.dst)):
        hit = pool_apy.get(e.pool_id)
        if hit is None:
            continue
        best = issuer.get(e.dst)
        if best is None or e.tvl_usd > best[0]:
            issuer[e.dst] = (e.tvl_usd, hit[1])

    creation: dict[tuple[TokenRef, TokenRef], float] = {}
    matched = 0
    eligible = 0
    for tok in sorted(tiers.tier):
        if tiers.tier[tok] <= 0:
            continue
        parent = tiers.parent.get(tok)
        if parent is None:
            continue
        edge = tiers.parent_edge.get(tok)
        is_dex = edge is not None and edge.category is Category.DEX
        if not is_dex:
            eligible += 1
        hit = issuer.get(tok)
        if hit is not None:
            creation[(parent, tok)] = hit[1]
            if not is_dex:
                matched += 1

    embedded: dict[TokenRef, float] = {}
    chain_len: dict[TokenRef, int] = {}
    for tok in tiers.tier:
        if tiers.tier[tok] == 0:
            embedded[tok] = 0.0
            chain_len[tok] = 0
    for tok in sorted(tiers.tier):
        if tiers.tier[tok] <= 0 or tok in embedded:
            continue
        # Walk up to a known ancestor, then unwind.
        path = []
        cur = tok
        seen = set()
        while cur not in embedded:
            if cur in seen:
                raise InternalError(f"cyclic parent chain at {cur}")
            seen.add(cur)
            parent = tiers.parent.get(cur)
            if parent is None:
                # Demoted candidates have a parent but no edge; true roots
                # without parents anchor at zero.
                embedded[cur] = 0.0
                chain_len[cur] = 0
                break
            path.append(cur)
            cur = parent
        for node in reversed(path):
            parent = tiers.parent[node]
            cy = creation.get((parent, node), 0.0)
            embedded[node] = embedded[parent] + cy
            chain_len[node] = chain_len.get(parent, 0) + (
                1 if (parent, node) in creation else 0
            )

    return EmbeddedYieldTable(
        creation_yield=creation,
        embedded=embedded,
        match_rate=matched / eligible if eligible else 0.0,
        matched_edges=matched,
        eligible_edges=eligible,
        match_chain_len=chain_len,
    )


def corrected_apy(pool: PoolRecord, embedded: EmbeddedYieldTable) -> float | None:
    """Reported APY plus the primary input token's embedded yield."""
    if pool.apy_total is None:
        return None
    return pool.apy_total + embedded.embedded_for(pool.primary_token)


def multiplier_series(
    records: list[PoolRecord],
    deriv: DerivationGraph,
    tiers: TierAssignment,
) -> list[tuple[str, MultiplierReport]]:
    """Monthly multiplier reports with decomposition, tiers held fixed."""
    by_month: dict[str, list[PoolRecord]] = {}
    for r in records:
        by_month.setdefault(r.month, []).append(r)
    series = []
    for month in sorted(by_month):
        attribution = token_tvl_attribution(by_month[month], tiers)
        try:
            report = layering_multiplier(attribution, tiers)
        except UndefinedMultiplierError:
            continue
        decomposition, diags = decompose_multiplier(deriv, tiers, report.lm)
        report = MultiplierReport(
            lm=report.lm,
            tvl_mapped=report.tvl_mapped,
            tvl_tier0=report.tvl_tier0,
            tvl_unmapped=report.tvl_unmapped,
            tier_shares=report.tier_shares,
            decomposition=decomposition,
            diagnostics=diags,
        )
        series.append((month, report))
    return series
