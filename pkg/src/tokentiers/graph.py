"""Token graph construction and the derivation-graph filter chain.

The full graph holds one directed edge per (input, output) pair a pool
implies. The derivation graph keeps only genuine "deposit asset, issue
claim" relationships: trading edges dropped, wrapper edges reversed into
creation direction, CDP mints and name-derived edges added. Every
derivation edge records which rule admitted it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .errors import NoRuleError
from .ingest import infer_receipt_token
from .types import Category, PoolRecord, TokenRef


class Provenance(enum.Enum):
    OBSERVED = "Observed"
    REVERSED = "Reversed"
    CDP_MINT = "CdpMint"
    SYNTHETIC_NAME = "SyntheticName"


RULE_OBSERVED = "observed-kept"
RULE_REVERSED = "reversed"
RULE_CDP = "cdp-config"
RULE_SYNTHETIC = "synthetic-name"


@dataclass(frozen=True)
class Edge:
    """Directed token transformation src -> dst mediated by a protocol."""

    src: TokenRef
    dst: TokenRef
    protocol: str
    category: Category
    tvl_usd: float
    provenance: Provenance = Provenance.OBSERVED
    pool_id: str = ""
    cross_collateral: bool = False

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("self-edges are not allowed")
        if self.tvl_usd < 0:
            raise ValueError("edge tvl_usd must be nonnegative")


class TokenGraph:
    """Immutable directed multigraph over canonical token refs."""

    def __init__(self, nodes, edges):
        self.nodes: frozenset[TokenRef] = frozenset(nodes)
        self.edges: tuple[Edge, ...] = tuple(edges)
        for e in self.edges:
            if e.src not in self.nodes or e.dst not in self.nodes:
                raise ValueError(f"edge endpoint not in node set: {e.src}->{e.dst}")
        self._out: dict[TokenRef, list[Edge]] = {}
        self._in: dict[TokenRef, list[Edge]] = {}
        for e in self.edges:
            self._out.setdefault(e.src, []).append(e)
            self._in.setdefault(e.dst, []).append(e)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def out_edges(self, ref: TokenRef) -> list[Edge]:
        return self._out.get(ref, [])

    def in_edges(self, ref: TokenRef) -> list[Edge]:
        return self._in.get(ref, [])

    def out_degree(self, ref: TokenRef) -> int:
        return len(self._out.get(ref, []))

    def in_degree(self, ref: TokenRef) -> int:
        return len(self._in.get(ref, []))

    def source_tvl(self, ref: TokenRef) -> float:
        """Sum of TVL on outgoing edges; the Tier-0 discovery TVL notion."""
        return sum(e.tvl_usd for e in self._out.get(ref, []))


class DerivationGraph(TokenGraph):
    """Token graph plus a per-edge audit rule (total, one rule per edge)."""

    def __init__(self, nodes, edges, rules):
        super().__init__(nodes, edges)
        self.rules: tuple[str, ...] = tuple(rules)
        if len(self.rules) != len(self.edges):
            raise ValueError("one audit rule required per edge")

    def edges_with_rules(self) -> list[tuple[Edge, str]]:
        return list(zip(self.edges, self.rules))


@dataclass(frozen=True)
class CdpEdge:
    """Configured CDP mint: collateral symbol -> minted symbol via protocol."""

    collateral: str
    minted: str
    protocol: str

    def __post_init__(self):
        object.__setattr__(self, "collateral", self.collateral.strip().upper())
        object.__setattr__(self, "minted", self.minted.strip().upper())
        object.__setattr__(self, "protocol", self.protocol.strip().lower())


@dataclass(frozen=True)
class FilterParams:
    """Toggles and thresholds for derivation-graph construction.

    One boolean per filter step so the leave-one-step-out ablation can
    disable each independently. ``min_outdeg`` / ``min_src_tvl_usd`` define
    "significant base candidates" for the base-to-base and protection
    steps, mirroring the discovery thresholds.
    """

    drop_dex: bool = True                # (a)
    drop_cross_collateral: bool = True   # (b)
    drop_base_to_base: bool = True       # (c)
    reverse_wrappers: bool = True        # (d)
    protect_tier0: bool = True           # (e)
    add_cdp_edges: bool = True           # (f)
    add_synthetic_names: bool = True     # (g)
    min_outdeg: int = 3
    min_src_tvl_usd: float = 1e6
    wrapper_prefixes: tuple[str, ...] = ("WST", "W", "ST")
    cdp_edges: tuple[CdpEdge, ...] = ()
    strip_min_core: int = 2
    lcs_min_len: int = 3
    lcs_min_frac: float = 0.6

    STEP_TOGGLES = (
        ("a", "drop_dex"),
        ("b", "drop_cross_collateral"),
        ("c", "drop_base_to_base"),
        ("d", "reverse_wrappers"),
        ("e", "protect_tier0"),
        ("f", "add_cdp_edges"),
        ("g", "add_synthetic_names"),
    )

    def without_step(self, toggle: str) -> "FilterParams":
        return replace(self, **{toggle: False})


def build_full_graph(
    records: list[PoolRecord],
    receipt_registry: dict[str, str] | None = None,
) -> TokenGraph:
    """Build the full token graph from identity-resolved pool records.

    Each pool contributes one edge per valid (input, output) pair with
    input != output; a pool's TVL is split equally across the pairs it
    emits. Lending pools without an explicit output get their inferred
    receipt token as output. Pools without any output contribute nodes
    only.
    """
    # Inferred receipt refs resolve to an existing same-(symbol, chain) node
    # when one appears explicitly anywhere in the records, so tier keys stay
    # canonical.
    explicit: dict[tuple[str, str], TokenRef] = {}
    for rec in records:
        for tok in rec.input_tokens:
            existing = explicit.get(tok.key())
            if existing is None or tok < existing:
                explicit[tok.key()] = tok
        if rec.output_token is not None:
            tok = rec.output_token
            existing = explicit.get(tok.key())
            if existing is None or tok < existing:
                explicit[tok.key()] = tok

    def receipt_for(rec: PoolRecord, tok: TokenRef) -> TokenRef | None:
        try:
            ref = infer_receipt_token(rec.protocol, rec.category, tok, receipt_registry)
        except NoRuleError:
            return None
        return explicit.get(ref.key(), ref)

    nodes: set[TokenRef] = set()
    edges: list[Edge] = []
    for rec in records:
        nodes.update(rec.input_tokens)
        input_keys = {t.key() for t in rec.input_tokens}
        if rec.output_token is not None:
            nodes.add(rec.output_token)
            pairs = [
                (tok, rec.output_token)
                for tok in rec.input_tokens
                if tok != rec.output_token
            ]
            cross = rec.output_token.key() in input_keys and len(input_keys) > 1
        elif rec.category is Category.LENDING:
            # Inferred receipts pair positionally with their deposit token.
            pairs = []
            for tok in rec.input_tokens:
                receipt = receipt_for(rec, tok)
                if receipt is not None and tok != receipt:
                    nodes.add(receipt)
                    pairs.append((tok, receipt))
            cross = False
        else:
            continue
        if not pairs:
            continue
        share = rec.tvl_usd / len(pairs)
        for src, dst in pairs:
            edges.append(
                Edge(
                    src=src,
                    dst=dst,
                    protocol=rec.protocol,
                    category=rec.category,
                    tvl_usd=share,
                    provenance=Provenance.OBSERVED,
                    pool_id=rec.pool_id,
                    cross_collateral=cross,
                )
            )
    return TokenGraph(nodes, edges)


def _strip_wrapper(symbol: str, prefixes: tuple[str, ...], min_core: int) -> list[str]:
    """All cores obtained by stripping one known prefix, longest core first."""
    cores = []
    for p in prefixes:
        if symbol.startswith(p) and len(symbol) - len(p) >= min_core:
            cores.append(symbol[len(p):])
    return sorted(set(cores), key=lambda c: (-len(c), c))


def name_related(a: TokenRef, b: TokenRef, params: FilterParams) -> bool:
    """True when two same-chain symbols are containment- or wrapper-related."""
    if a.chain != b.chain:
        return False
    sa, sb = a.symbol, b.symbol
    shorter, longer = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if len(shorter) >= 2 and shorter in longer:
        return True
    for sym, other in ((sa, sb), (sb, sa)):
        if other in _strip_wrapper(sym, params.wrapper_prefixes, params.strip_min_core):
            return True
    return False


def build_derivation_graph(full: TokenGraph, params: FilterParams) -> DerivationGraph:
    """Filter the full graph into the derivation graph, step by step.

    Steps, applied in fixed order and individually toggleable:
      (a) drop trading (DEX) edges
      (b) drop per-pool cross-collateral edges
      (c) drop lending edges between two significant base candidates
      (d) reverse wrapper edges into creation direction
      (e) drop non-name-related incoming edges to strong base candidates
      (f) add configured CDP minting edges
      (g) add synthetic name-containment edges for orphan tokens
    """
    strong_base = {
        n
        for n in full.nodes
        if full.out_degree(n) >= params.min_outdeg
        and full.source_tvl(n) >= params.min_src_tvl_usd
    }

    kept: list[tuple[Edge, str]] = []
    for e in full.edges:
        if params.drop_dex and e.category is Category.DEX:
            continue
        if params.drop_cross_collateral and e.cross_collateral:
            continue
        if (
            params.drop_base_to_base
            and e.category is Category.LENDING
            and e.src in strong_base
            and e.dst in strong_base
        ):
            continue
        kept.append((e, RULE_OBSERVED))

    if params.reverse_wrappers and params.wrapper_prefixes:
        by_key: dict[tuple[str, str], set[TokenRef]] = {}
        for n in full.nodes:
            by_key.setdefault((n.symbol, n.chain), set()).add(n)
        reoriented: list[tuple[Edge, str]] = []
        seen_pairs: set[tuple] = set()
        for e, rule in kept:
            cores = _strip_wrapper(
                e.src.symbol, params.wrapper_prefixes, params.strip_min_core
            )
            if e.dst.symbol in cores:
                # Edge points wrapped -> underlying; flip to creation order.
                flipped = replace(
                    e, src=e.dst, dst=e.src, provenance=Provenance.REVERSED
                )
                key = (flipped.src, flipped.dst, flipped.protocol)
                if key in seen_pairs:
                    continue
                seen_pairs.add(key)
                reoriented.append((flipped, RULE_REVERSED))
            else:
                seen_pairs.add((e.src, e.dst, e.protocol))
                reoriented.append((e, rule))
        kept = reoriented

    if params.protect_tier0:
        kept = [
            (e, rule)
            for e, rule in kept
            if e.dst not in strong_base or name_related(e.src, e.dst, params)
        ]

    nodes = set(full.nodes)
    edges = [e for e, _ in kept]
    rules = [rule for _, rule in kept]

    if params.add_cdp_edges and params.cdp_edges:
        by_symbol: dict[tuple[str, str], TokenRef] = {}
        for n in sorted(nodes):
            by_symbol.setdefault((n.symbol, n.chain), n)
        chains = sorted({n.chain for n in nodes})
        existing = {(e.src, e.dst) for e in edges}
        for cdp in params.cdp_edges:
            for chain in chains:
                col = by_symbol.get((cdp.collateral, chain))
                mint = by_symbol.get((cdp.minted, chain))
                if col is None or mint is None or col == mint:
                    continue
                if (col, mint) in existing:
                    continue
                edge = Edge(
                    src=col,
                    dst=mint,
                    protocol=cdp.protocol,
                    category=Category.CDP,
                    tvl_usd=0.0,
                    provenance=Provenance.CDP_MINT,
                )
                edges.append(edge)
                rules.append(RULE_CDP)
                existing.add((col, mint))

    if params.add_synthetic_names:
        incoming = {e.dst for e in edges}
        by_symbol_chain: dict[str, dict[str, TokenRef]] = {}
        for n in nodes:
            by_symbol_chain.setdefault(n.chain, {}).setdefault(n.symbol, n)
        linked = {(e.src, e.dst) for e in edges} | {(e.dst, e.src) for e in edges}
        for child in sorted(nodes):
            if child in incoming:
                continue
            parent = _best_name_parent(child, by_symbol_chain[child.chain], params)
            if parent is None or (parent, child) in linked:
                continue
            edge = Edge(
                src=parent,
                dst=child,
                protocol="name-match",
                category=Category.OTHER,
                tvl_usd=0.0,
                provenance=Provenance.SYNTHETIC_NAME,
            )
            edges.append(edge)
            rules.append(RULE_SYNTHETIC)

    return DerivationGraph(nodes, edges, rules)


def _best_name_parent(
    child: TokenRef,
    same_chain: dict[str, TokenRef],
    params: FilterParams,
) -> TokenRef | None:
    """Most specific name-derived parent for an orphan token, if any.

    Candidates come from wrapper-prefix stripping (core >= strip_min_core),
    composite-name parts, and contained-substring matching (core >=
    lcs_min_len and >= lcs_min_frac of itself, i.e. plain containment).
    The longest core wins; prefix-strip matches break length ties.
    """
    sym = child.symbol
    candidates: list[tuple[int, int, str]] = []
    for core in _strip_wrapper(sym, params.wrapper_prefixes, params.strip_min_core):
        if core != sym and core in same_chain:
            candidates.append((len(core), 1, core))
    for part in _composite_parts(sym):
        if part != sym and len(part) >= params.strip_min_core and part in same_chain:
            candidates.append((len(part), 0, part))
    # Containment: the contained core is the whole shorter symbol, so the
    # lcs_min_frac share condition is met by construction; length gates it.
    min_len = max(params.lcs_min_len, 1)
    for other_sym in same_chain:
        if other_sym == sym or len(other_sym) < min_len:
            continue
        if other_sym in sym:
            candidates.append((len(other_sym), 0, other_sym))
    if not candidates:
        return None
    candidates.sort(key=lambda c: (-c[0], -c[1], c[2]))
    return same_chain[candidates[0][2]]


def _composite_parts(symbol: str) -> list[str]:
    parts, current = [], []
    for ch in symbol:
        if ch.isalnum():
            current.append(ch)
        elif current:
            parts.append("".join(current))
            current = []
    if current:
        parts.append("".join(current))
    return parts if len(parts) > 1 else []


@dataclass(frozen=True)
class CycleReport:
    """One strongly connected component of size > 1."""

    members: tuple[TokenRef, ...]
    tvl_usd: float
    edge_count: int


def detect_cycles(g: TokenGraph) -> list[CycleReport]:
    """All SCCs of size > 1, with summed TVL over intra-component edges.

    Detection only; tier propagation resolves cycles by first visit.
    Iterative Tarjan, deterministic output order.
    """
    order = sorted(g.nodes)
    index_of = {n: i for i, n in enumerate(order)}
    succ: list[list[int]] = [[] for _ in order]
    for e in g.edges:
        succ[index_of[e.src]].append(index_of[e.dst])
    for lst in succ:
        lst.sort()

    n = len(order)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    sccs: list[list[int]] = []
    counter = 0

    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while pi < len(succ[v]):
                w = succ[v][pi]
                pi += 1
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                if len(comp) > 1:
                    sccs.append(comp)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])

    reports = []
    for comp in sccs:
        members = frozenset(order[i] for i in comp)
        tvl = sum(
            e.tvl_usd for e in g.edges if e.src in members and e.dst in members
        )
        count = sum(1 for e in g.edges if e.src in members and e.dst in members)
        reports.append(
            CycleReport(members=tuple(sorted(members)), tvl_usd=tvl, edge_count=count)
        )
    reports.sort(key=lambda r: (-r.tvl_usd, r.members))
    return reports
