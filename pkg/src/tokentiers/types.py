"""Core domain types: token identities, pool records, categories.

All types here are immutable after construction and safe to share across
threads. Token symbols are stored uppercased for matching; the original
spelling of a pool's composite symbol survives on ``PoolRecord.raw_symbol``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone


class Category(enum.Enum):
    """Protocol category used for edge filtering and decomposition."""

    LENDING = "Lending"
    LIQUID_STAKING = "LiquidStaking"
    RESTAKING = "Restaking"
    DEX = "DEX"
    CDP = "CDP"
    YIELD_AGGREGATOR = "YieldAggregator"
    DERIVATIVES = "Derivatives"
    OTHER = "Other"


_CATEGORY_ALIASES = {
    "lending": Category.LENDING,
    "liquidstaking": Category.LIQUID_STAKING,
    "liquid-staking": Category.LIQUID_STAKING,
    "liquid staking": Category.LIQUID_STAKING,
    "restaking": Category.RESTAKING,
    "dex": Category.DEX,
    "dexes": Category.DEX,
    "cdp": Category.CDP,
    "yieldaggregator": Category.YIELD_AGGREGATOR,
    "yield-aggregator": Category.YIELD_AGGREGATOR,
    "yield": Category.YIELD_AGGREGATOR,
    "derivatives": Category.DERIVATIVES,
    "other": Category.OTHER,
}

# Groups used by the multiplier decomposition and transition tables.
GROUP_LENDING = "lending"
GROUP_STAKING = "staking"
GROUP_DEX = "dex"
GROUP_OTHER = "other"
DECOMPOSITION_GROUPS = (GROUP_LENDING, GROUP_STAKING, GROUP_DEX, GROUP_OTHER)


def parse_category(text: str) -> Category:
    """Parse a category label, case-insensitively, with common aliases."""
    key = text.strip().lower()
    if key not in _CATEGORY_ALIASES:
        from .errors import ConfigError

        raise ConfigError(f"unknown protocol category: {text!r}")
    return _CATEGORY_ALIASES[key]


def category_group(category: Category) -> str:
    """Collapse fine categories into lending/staking/dex/other."""
    if category is Category.LENDING:
        return GROUP_LENDING
    if category in (Category.LIQUID_STAKING, Category.RESTAKING):
        return GROUP_STAKING
    if category is Category.DEX:
        return GROUP_DEX
    return GROUP_OTHER


@dataclass(frozen=True, order=True)
class TokenRef:
    """Canonical token identity: uppercase symbol, chain, optional address.

    Structural equality compares all three fields. The looser matching rule
    (same address+chain merge even when one side lacks an address) is what
    identity resolution implements; use :func:`refs_match` for that
    predicate. Hash-consistent ``__eq__`` cannot express it directly.
    """

    symbol: str
    chain: str
    address: str | None = field(default=None, compare=True)

    def __post_init__(self):
        if not self.symbol.strip():
            raise ValueError("token symbol must be non-empty")
        object.__setattr__(self, "symbol", self.symbol.strip().upper())
        object.__setattr__(self, "chain", self.chain.strip())
        if self.address is not None:
            object.__setattr__(self, "address", self.address.strip().lower())

    def key(self) -> tuple[str, str]:
        return (self.symbol, self.chain)

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return f"{self.symbol}@{self.chain}"


def refs_match(a: TokenRef, b: TokenRef) -> bool:
    """Spec equality: (address, chain) when both addresses present, else
    (symbol, chain)."""
    if a.chain != b.chain:
        return False
    if a.address is not None and b.address is not None:
        return a.address == b.address
    return a.symbol == b.symbol


@dataclass(frozen=True)
class PoolRecord:
    """One pool observation from a snapshot export.

    ``apy_total`` is ``None`` when the source row had no yield figure; such
    rows still feed the token graph but are dropped by the panel filters.
    Rows whose base/reward decomposition disagrees with the total by more
    than 0.01pp are kept with ``apy_inconsistent`` set.
    """

    pool_id: str
    protocol: str
    category: Category
    chain: str
    input_tokens: tuple[TokenRef, ...]
    output_token: TokenRef | None
    tvl_usd: float
    apy_total: float | None
    apy_base: float | None
    apy_reward: float | None
    is_stablecoin: bool
    observed_at: datetime
    raw_symbol: str = ""
    apy_inconsistent: bool = False

    def __post_init__(self):
        if self.tvl_usd < 0:
            raise ValueError("tvl_usd must be nonnegative")
        if not self.input_tokens:
            raise ValueError("input_tokens must contain at least one token")
        keys = [t.key() for t in self.input_tokens]
        if len(set(keys)) != len(keys):
            raise ValueError("input_tokens contains duplicates")
        if self.observed_at.tzinfo is None:
            object.__setattr__(
                self, "observed_at", self.observed_at.replace(tzinfo=timezone.utc)
            )

    @property
    def primary_token(self) -> TokenRef:
        """First-listed input token; the pool's hierarchical anchor."""
        return self.input_tokens[0]

    @property
    def month(self) -> str:
        """Calendar month key (UTC), e.g. ``2025-03``."""
        ts = self.observed_at.astimezone(timezone.utc)
        return f"{ts.year:04d}-{ts.month:02d}"


APY_DECOMPOSITION_TOLERANCE = 0.01


def apy_decomposition_consistent(
    total: float | None, base: float | None, reward: float | None
) -> bool:
    """True unless total and both parts are present and disagree by > 0.01pp."""
    if total is None or base is None or reward is None:
        return True
    return abs(total - (base + reward)) <= APY_DECOMPOSITION_TOLERANCE
