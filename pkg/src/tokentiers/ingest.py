"""Snapshot parsing, receipt-token inference, and identity resolution.

The snapshot schema mirrors a DefiLlama-style yields export, one object per
line (NDJSON) or one row per line (CSV with header):

    pool, project, chain, symbol, underlyingTokens, outputToken,
    tvlUsd, apy, apyBase, apyReward, stablecoin, timestamp

``symbol`` may be composite ("USDC-WETH"); it splits on ``-`` into the
ordered input-token list. ``underlyingTokens`` optionally carries contract
addresses aligned with the symbol parts (JSON list, or ``|``-separated in
CSV). ``outputToken`` is the issued token's symbol when the source knows it.
Malformed rows are reported as diagnostics and never abort the parse.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from .errors import ConfigError, DataError, EmptyInputError, NoRuleError
from .types import (
    Category,
    PoolRecord,
    TokenRef,
    apy_decomposition_consistent,
    parse_category,
)


@dataclass(frozen=True)
class Diagnostic:
    """One rejected or ambiguous row: (line, pool_id, reason)."""

    line: int
    pool_id: str
    reason: str


@dataclass(frozen=True)
class CategoryMap:
    """Total protocol -> category map; unknown protocols default to Other."""

    entries: dict[str, Category]

    def category_for(self, protocol: str) -> Category:
        return self.entries.get(protocol.strip().lower(), Category.OTHER)


def load_category_map(source) -> CategoryMap:
    """Load a two-column ``protocol,category`` CSV.

    Duplicate protocols with conflicting categories are a fatal config
    error; duplicate consistent rows are tolerated.
    """
    text = _read_text(source)
    entries: dict[str, Category] = {}
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) < 2:
            raise ConfigError(f"category map line {lineno}: expected 'protocol,category'")
        protocol = row[0].strip().lower()
        if lineno == 1 and protocol == "protocol":
            continue
        category = parse_category(row[1])
        if protocol in entries and entries[protocol] is not category:
            raise ConfigError(
                f"category map line {lineno}: conflicting category for {protocol!r}"
            )
        entries[protocol] = category
    return CategoryMap(entries)


# Best-effort reconstruction of receipt-token naming conventions. Keyed by
# protocol family; versioned slugs ("aave-v3") normalize to the family.
DEFAULT_RECEIPT_PREFIXES: dict[str, str] = {
    "aave": "A",
    "compound": "C",
    "spark": "SP",
}


def _protocol_family(protocol: str) -> str:
    slug = protocol.strip().lower()
    for sep in ("-v", "_v"):
        if sep in slug:
            head, _, tail = slug.rpartition(sep)
            if head and tail[:1].isdigit():
                slug = head
                break
    return slug


def load_receipt_registry(source) -> dict[str, str]:
    """Load an editable ``protocol,prefix`` CSV registry."""
    text = _read_text(source)
    registry: dict[str, str] = {}
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) < 2:
            raise ConfigError(f"receipt registry line {lineno}: expected 'protocol,prefix'")
        if lineno == 1 and row[0].strip().lower() == "protocol":
            continue
        registry[row[0].strip().lower()] = row[1].strip().upper()
    return registry


def infer_receipt_token(
    protocol: str,
    category: Category,
    input_token: TokenRef,
    registry: dict[str, str] | None = None,
) -> TokenRef:
    """Derive the receipt token a protocol issues against a deposit.

    Pure and deterministic: ``(aave, Lending, USDC) -> AUSDC`` on the same
    chain. Raises :class:`NoRuleError` when the protocol has no registered
    prefix, in which case the caller skips edge synthesis.
    """
    if category not in (Category.LENDING, Category.CDP):
        raise NoRuleError(f"receipt inference not applicable to category {category.value}")
    table = DEFAULT_RECEIPT_PREFIXES if registry is None else registry
    family = _protocol_family(protocol)
    prefix = table.get(family)
    if prefix is None:
        raise NoRuleError(f"no receipt-naming rule for protocol {protocol!r}")
    return TokenRef(symbol=prefix + input_token.symbol, chain=input_token.chain)


def parse_snapshot(
    source,
    format: str,
    category_map: CategoryMap | None = None,
) -> tuple[list[PoolRecord], list[Diagnostic]]:
    """Parse an NDJSON or CSV snapshot into validated pool records.

    Every well-formed row becomes a :class:`PoolRecord` (order preserved);
    malformed rows become diagnostics. Raises :class:`EmptyInputError` when
    no row survives.
    """
    if format not in ("json", "csv"):
        raise ConfigError(f"unknown snapshot format: {format!r}")
    cmap = category_map or CategoryMap({})
    text = _read_text(source)

    records: list[PoolRecord] = []
    diagnostics: list[Diagnostic] = []
    for lineno, row in _iter_rows(text, format):
        if isinstance(row, Diagnostic):
            diagnostics.append(row)
            continue
        try:
            records.append(_row_to_record(row, cmap))
        except _RowError as exc:
            diagnostics.append(Diagnostic(lineno, str(row.get("pool", "")), str(exc)))
    if not records:
        raise EmptyInputError("snapshot contained zero valid records")
    return records, diagnostics


class _RowError(ValueError):
    pass


def _iter_rows(text: str, format: str):
    if format == "json":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, Diagnostic(lineno, "", f"invalid JSON: {exc.msg}")
                continue
            if not isinstance(obj, dict):
                yield lineno, Diagnostic(lineno, "", "row is not an object")
                continue
            yield lineno, obj
    else:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None:
            return
        for lineno, raw in enumerate(reader, start=2):
            row = {k: v for k, v in raw.items() if k is not None and v not in (None, "")}
            if row.get("underlyingTokens"):
                row["underlyingTokens"] = row["underlyingTokens"].split("|")
            yield lineno, row


def _require(row: dict, key: str) -> str:
    value = row.get(key)
    if value is None or (isinstance(value, str) and not value.strip()):
        raise _RowError(f"missing {key}")
    return str(value).strip()


def _opt_float(row: dict, key: str) -> float | None:
    value = row.get(key)
    if value is None or value == "":
        return None
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise _RowError(f"non-numeric {key}")
    if out != out:  # NaN in source treated as missing
        return None
    return out


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if value is None or value == "":
        return False
    text = str(value).strip().lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise _RowError(f"invalid boolean: {value!r}")


def _parse_timestamp(value) -> datetime:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return datetime.fromtimestamp(float(value), tz=timezone.utc)
    text = str(value).strip()
    if not text:
        raise _RowError("missing timestamp")
    if text.isdigit():
        return datetime.fromtimestamp(int(text), tz=timezone.utc)
    try:
        out = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise _RowError(f"invalid timestamp: {value!r}")
    if out.tzinfo is None:
        out = out.replace(tzinfo=timezone.utc)
    return out.astimezone(timezone.utc)


def _row_to_record(row: dict, cmap: CategoryMap) -> PoolRecord:
    pool_id = _require(row, "pool")
    protocol = _require(row, "project").lower()
    chain = _require(row, "chain")
    raw_symbol = _require(row, "symbol")

    parts = [p.strip() for p in raw_symbol.split("-") if p.strip()]
    if not parts:
        raise _RowError("empty symbol")
    addresses = row.get("underlyingTokens")
    if addresses is not None:
        if not isinstance(addresses, list):
            raise _RowError("underlyingTokens must be a list")
        if len(addresses) != len(parts):
            raise _RowError("underlying address count mismatch")
    else:
        addresses = [None] * len(parts)
    inputs = []
    for sym, addr in zip(parts, addresses):
        addr = addr.strip().lower() if isinstance(addr, str) and addr.strip() else None
        inputs.append(TokenRef(symbol=sym, chain=chain, address=addr))
    keys = [t.key() for t in inputs]
    if len(set(keys)) != len(keys):
        raise _RowError("duplicate input tokens")

    output = None
    out_sym = row.get("outputToken")
    if out_sym not in (None, ""):
        out_addr = row.get("outputTokenAddress")
        out_addr = str(out_addr).strip().lower() if out_addr not in (None, "") else None
        output = TokenRef(symbol=str(out_sym), chain=chain, address=out_addr)

    tvl = _opt_float(row, "tvlUsd")
    if tvl is None:
        raise _RowError("missing tvlUsd")
    if tvl < 0:
        raise _RowError("negative TVL")

    apy_total = _opt_float(row, "apy")
    apy_base = _opt_float(row, "apyBase")
    apy_reward = _opt_float(row, "apyReward")
    inconsistent = not apy_decomposition_consistent(apy_total, apy_base, apy_reward)

    stable = _parse_bool(row.get("stablecoin"))
    observed = _parse_timestamp(row.get("timestamp"))

    return PoolRecord(
        pool_id=pool_id,
        protocol=protocol,
        category=cmap.category_for(protocol),
        chain=chain,
        input_tokens=tuple(inputs),
        output_token=output,
        tvl_usd=tvl,
        apy_total=apy_total,
        apy_base=apy_base,
        apy_reward=apy_reward,
        is_stablecoin=stable,
        observed_at=observed,
        raw_symbol=raw_symbol,
        apy_inconsistent=inconsistent,
    )


@dataclass(frozen=True)
class IdentityTable:
    """Canonical token table produced by :func:`resolve_identity`."""

    canonical: tuple[TokenRef, ...]
    diagnostics: tuple[Diagnostic, ...]


def resolve_identity(
    records: list[PoolRecord],
) -> tuple[IdentityTable, list[PoolRecord]]:
    """Merge token identities and remap every record to canonical refs.

    Tokens sharing (address, chain) merge regardless of symbol spelling;
    tokens sharing a symbol across chains stay distinct. A (symbol, chain)
    pair backed by conflicting addresses yields an ambiguity diagnostic and
    both address-qualified nodes are kept. Idempotent.
    """
    # First pass: address inventory per (symbol, chain).
    addr_by_key: dict[tuple[str, str], set[str]] = {}
    for rec in records:
        for ref in _record_refs(rec):
            if ref.address is not None:
                addr_by_key.setdefault(ref.key(), set()).add(ref.address)

    diagnostics: list[Diagnostic] = []
    ambiguous = {key for key, addrs in addr_by_key.items() if len(addrs) > 1}
    for key in sorted(ambiguous):
        diagnostics.append(
            Diagnostic(0, "", f"ambiguous addresses for {key[0]}@{key[1]}; kept distinct")
        )

    canonical: dict[tuple, TokenRef] = {}

    def canon(ref: TokenRef) -> TokenRef:
        key = ref.key()
        if ref.address is not None:
            ckey = ("addr", ref.chain, ref.address)
        elif key in addr_by_key and key not in ambiguous:
            ckey = ("addr", ref.chain, next(iter(addr_by_key[key])))
        else:
            ckey = ("sym", ref.chain, ref.symbol)
        if ckey not in canonical:
            if ckey[0] == "addr":
                canonical[ckey] = TokenRef(ref.symbol, ref.chain, ckey[2])
            else:
                canonical[ckey] = TokenRef(ref.symbol, ref.chain)
        return canonical[ckey]

    remapped: list[PoolRecord] = []
    for rec in records:
        inputs = tuple(canon(t) for t in rec.input_tokens)
        output = canon(rec.output_token) if rec.output_token is not None else None
        remapped.append(replace(rec, input_tokens=inputs, output_token=output))

    table = IdentityTable(
        canonical=tuple(sorted(canonical.values())),
        diagnostics=tuple(diagnostics),
    )
    return table, remapped


def _record_refs(rec: PoolRecord):
    yield from rec.input_tokens
    if rec.output_token is not None:
        yield rec.output_token


def _read_text(source) -> str:
    """Accept a Path, file-like object, bytes, or literal text content."""
    from pathlib import Path

    if isinstance(source, Path):
        try:
            return source.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"unreadable source {source}: {exc}") from exc
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    if isinstance(source, bytes):
        return source.decode("utf-8")
    return str(source)
