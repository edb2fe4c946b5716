"""Shared fixture builders for the test suite."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from tokentiers.types import Category, PoolRecord, TokenRef

CHAIN = "Ethereum"
TS = datetime(2025, 10, 15, 12, 0, tzinfo=timezone.utc)


def tok(symbol: str, chain: str = CHAIN, address: str | None = None) -> TokenRef:
    return TokenRef(symbol, chain, address)


_serial = [0]


def rec(
    inputs,
    output=None,
    *,
    protocol="testproto",
    category=Category.OTHER,
    tvl=1e6,
    apy=2.0,
    apy_base=None,
    apy_reward=None,
    stable=False,
    chain=CHAIN,
    pool_id=None,
    observed=TS,
) -> PoolRecord:
    if pool_id is None:
        _serial[0] += 1
        pool_id = f"pool{_serial[0]:04d}"
    if isinstance(inputs, (str, TokenRef)):
        inputs = [inputs]
    in_refs = tuple(t if isinstance(t, TokenRef) else tok(t, chain) for t in inputs)
    out_ref = None
    if output is not None:
        out_ref = output if isinstance(output, TokenRef) else tok(output, chain)
    return PoolRecord(
        pool_id=pool_id,
        protocol=protocol,
        category=category,
        chain=chain,
        input_tokens=in_refs,
        output_token=out_ref,
        tvl_usd=tvl,
        apy_total=apy,
        apy_base=apy_base,
        apy_reward=apy_reward,
        is_stablecoin=stable,
        observed_at=observed,
        raw_symbol="-".join(t.symbol for t in in_refs),
    )


@pytest.fixture
def fig1_records():
    """One lending pool: USDC deposited into aave, receipt aUSDC inferred."""
    return [
        rec("USDC", protocol="aave", category=Category.LENDING, tvl=3.8e9, apy=2.5)
    ]


def eth_chain_records():
    """Staking chain that exists only through wrapper-edge reversal.

    Observed pools give STETH -> ETH (an unstake route); reversal flips it
    into the creation direction ETH -> STETH, and an aave pool derives
    ASTETH from STETH. A separate USDC branch survives any ablation so
    discovery never comes up empty. Zero-TVL DEX pools supply out-degree.
    """
    rows = [
        rec(
            "STETH",
            "ETH",
            protocol="unstake-router",
            category=Category.OTHER,
            tvl=2e6,
            pool_id="unstake",
        ),
        rec(
            "STETH",
            protocol="aave",
            category=Category.LENDING,
            tvl=4e6,
            pool_id="aave-steth",
        ),
        rec(
            "USDC",
            protocol="aave",
            category=Category.LENDING,
            tvl=9e6,
            pool_id="aave-usdc",
        ),
    ]
    for i, base in enumerate(("ETH", "USDC")):
        for j in range(3):
            rows.append(
                rec(
                    base,
                    f"LP{i}{j}",
                    protocol=f"dex{i}{j}",
                    category=Category.DEX,
                    tvl=2e6,
                    pool_id=f"dex-{base}-{j}".lower(),
                )
            )
    return rows


def geometric_records(decay: float = 0.5, depth: int = 4, base_tvl: float = 1e8):
    """Chain fixture whose layering multiplier is the geometric series.

    Holder pools carry base_tvl * decay^k at tier k; creation-edge pools
    carry epsilon TVL so their attribution is negligible against the
    1e-9 tolerance but still satisfies a tiny discovery threshold.
    """
    eps = 1e-4
    chain = ["BASE"] + [f"D{k}" for k in range(1, depth + 1)]
    rows = []
    yields = [3.2, 1.0, 0.7, 0.4, 0.9][:depth]
    for k in range(depth):
        rows.append(
            rec(
                chain[k],
                chain[k + 1],
                protocol=f"maker{k}",
                category=Category.LIQUID_STAKING,
                tvl=eps,
                apy=yields[k],
                pool_id=f"mk{k}",
            )
        )
    for k, sym in enumerate(chain):
        rows.append(
            rec(
                sym,
                protocol=f"holder{k}",
                category=Category.OTHER,
                tvl=base_tvl * decay**k,
                apy=1.0,
                pool_id=f"hold{k}",
            )
        )
    return rows
