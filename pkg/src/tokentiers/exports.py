"""Serialization of every pipeline artifact to documented CSV/JSON formats.

All writers are deterministic: rows are sorted canonically, floats use
shortest round-trip repr, and the run manifest contains no wall-clock
state, so identical inputs yield byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

from .econ import (
    AttritionReport,
    EventWindow,
    PanelObservation,
    PlaceboResult,
    RegressionResult,
    RegressionSpec,
    RollingPoint,
)
from .hierarchy import (
    AblationRow,
    DiscoveryResult,
    SensitivityCell,
    StabilityRow,
    TierAssignment,
)
from .graph import CycleReport, TokenGraph
from .ingest import Diagnostic
from .metrics import EmbeddedYieldTable, MultiplierReport
from .types import DECOMPOSITION_GROUPS, PoolRecord


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value != value:  # NaN
            return ""
        return repr(value)
    return str(value)


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def simple_csv(header: list[str], rows: list[list]) -> str:
    """Plain CSV with the package's deterministic value formatting."""
    return _csv(header, rows)


def write_text(path: Path, content: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")
    return path


# ---------------------------------------------------------------- records


def record_to_row(rec: PoolRecord) -> dict:
    row = {
        "pool": rec.pool_id,
        "project": rec.protocol,
        "chain": rec.chain,
        "symbol": rec.raw_symbol or "-".join(t.symbol for t in rec.input_tokens),
        "tvlUsd": rec.tvl_usd,
        "stablecoin": rec.is_stablecoin,
        "timestamp": rec.observed_at.isoformat().replace("+00:00", "Z"),
    }
    addresses = [t.address for t in rec.input_tokens]
    if any(a is not None for a in addresses):
        row["underlyingTokens"] = [a or "" for a in addresses]
    if rec.output_token is not None:
        row["outputToken"] = rec.output_token.symbol
        if rec.output_token.address:
            row["outputTokenAddress"] = rec.output_token.address
    if rec.apy_total is not None:
        row["apy"] = rec.apy_total
    if rec.apy_base is not None:
        row["apyBase"] = rec.apy_base
    if rec.apy_reward is not None:
        row["apyReward"] = rec.apy_reward
    return row


def records_to_ndjson(records: list[PoolRecord]) -> str:
    lines = [json.dumps(record_to_row(r), sort_keys=True) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


def diagnostics_csv(diags: list[Diagnostic]) -> str:
    return _csv(
        ["line", "pool_id", "reason"], [[d.line, d.pool_id, d.reason] for d in diags]
    )


def category_map_csv(rows: list[tuple[str, str]]) -> str:
    return _csv(["protocol", "category"], [list(r) for r in rows])


# ------------------------------------------------------------------ graph


def graph_csv(graph: TokenGraph, rules: tuple[str, ...] | None = None) -> str:
    header = [
        "src_symbol",
        "src_chain",
        "dst_symbol",
        "dst_chain",
        "protocol",
        "category",
        "tvl_usd",
        "provenance",
        "rule",
    ]
    indexed = list(enumerate(graph.edges))
    indexed.sort(key=lambda p: (p[1].src, p[1].dst, p[1].protocol, p[0]))
    rows = []
    for i, e in indexed:
        rows.append(
            [
                e.src.symbol,
                e.src.chain,
                e.dst.symbol,
                e.dst.chain,
                e.protocol,
                e.category.value,
                e.tvl_usd,
                e.provenance.value,
                rules[i] if rules is not None else "",
            ]
        )
    return _csv(header, rows)


def cycles_csv(reports: list[CycleReport]) -> str:
    rows = [
        [
            ";".join(f"{t.symbol}@{t.chain}" for t in r.members),
            len(r.members),
            r.edge_count,
            r.tvl_usd,
        ]
        for r in reports
    ]
    return _csv(["members", "size", "edges", "tvl_usd"], rows)


# ------------------------------------------------------------------ tiers


def tiers_csv(tiers: TierAssignment) -> str:
    header = ["symbol", "chain", "tier", "parent_symbol", "graph_distance", "tier0_flag"]
    rows = []
    for tok in sorted(tiers.tier):
        parent = tiers.parent.get(tok)
        rows.append(
            [
                tok.symbol,
                tok.chain,
                tiers.tier[tok],
                parent.symbol if parent is not None else "",
                tiers.graph_distance.get(tok),
                int(tok in tiers.tier0_set),
            ]
        )
    return _csv(header, rows)


def demotions_csv(discovery: DiscoveryResult) -> str:
    rows = [
        [b.symbol, b.chain, a.symbol, a.chain]
        for b, a in sorted(discovery.demotions.items())
    ]
    return _csv(["demoted_symbol", "demoted_chain", "parent_symbol", "parent_chain"], rows)


def distance_csv(distances: dict) -> str:
    rows = [
        [tok.symbol, tok.chain, hops] for tok, hops in sorted(distances.items())
    ]
    return _csv(["symbol", "chain", "graph_distance"], rows)


def sensitivity_csv(cells: list[SensitivityCell]) -> str:
    """Matrix shaped rows = min out-degree, columns = TVL threshold."""
    outdegs = sorted({c.params.min_outdeg for c in cells})
    tvls = sorted({c.params.min_src_tvl_usd for c in cells})
    lookup = {(c.params.min_outdeg, c.params.min_src_tvl_usd): c for c in cells}
    header = ["min_outdeg"] + [f"tvl_{_fmt(t)}" for t in tvls]
    rows = []
    for d in outdegs:
        row: list = [d]
        for t in tvls:
            cell = lookup.get((d, t))
            row.append(cell.jaccard if cell is not None else None)
        rows.append(row)
    return _csv(header, rows)


def stability_csv(rows: list[StabilityRow]) -> str:
    header = ["label", "pools", "tier0_count", "agreement_pct", "spearman_rho", "flagged", "note"]
    return _csv(
        header,
        [
            [r.label, r.pools, r.tier0_count, r.agreement_pct, r.spearman_rho, int(r.flagged), r.note]
            for r in rows
        ],
    )


def ablation_csv(rows: list[AblationRow]) -> str:
    header = ["step", "toggle", "core_tier_changes", "n_core_changed", "affected_share", "failed"]
    out = []
    for r in rows:
        changes = ";".join(
            f"{tok.symbol}@{tok.chain}:{old}->{new}" for tok, old, new in r.core_changes
        )
        out.append(
            [r.step, r.toggle, changes, len(r.core_changes), r.affected_share, int(r.failed)]
        )
    return _csv(header, out)


# ---------------------------------------------------------------- metrics


def multiplier_csv(series: list[tuple[str, MultiplierReport]]) -> str:
    header = (
        ["period", "lm", "tvl_mapped", "tvl_tier0"]
        + [f"share_t{k}" for k in range(5)]
        + [f"dlm_{g}" for g in DECOMPOSITION_GROUPS]
    )
    rows = []
    for period, rep in series:
        shares = dict(rep.tier_shares)
        bundled = [shares.get(k, 0.0) for k in range(4)]
        bundled.append(sum(v for k, v in shares.items() if k >= 4))
        rows.append(
            [period, rep.lm, rep.tvl_mapped, rep.tvl_tier0]
            + bundled
            + [rep.decomposition.get(g, 0.0) for g in DECOMPOSITION_GROUPS]
        )
    return _csv(header, rows)


def embedded_csv(embedded: EmbeddedYieldTable, tiers: TierAssignment) -> str:
    header = ["symbol", "chain", "tier", "embedded_pct", "match_chain_len"]
    rows = []
    for tok in sorted(embedded.embedded):
        rows.append(
            [
                tok.symbol,
                tok.chain,
                tiers.tier.get(tok, -1),
                embedded.embedded[tok],
                embedded.match_chain_len.get(tok, 0),
            ]
        )
    return _csv(header, rows)


def transitions_csv(rows) -> str:
    header = ["transition", "tvl_usd"] + [f"share_{g}" for g in DECOMPOSITION_GROUPS]
    return _csv(
        header,
        [
            [r.label, r.tvl_usd] + [r.shares.get(g, 0.0) for g in DECOMPOSITION_GROUPS]
            for r in rows
        ],
    )


# ------------------------------------------------------------------- econ


def panel_csv(panel: list[PanelObservation]) -> str:
    header = [
        "pool_id",
        "period",
        "apy",
        "apy_corrected",
        "apy_base",
        "apy_reward",
        "log_tvl",
        "tier",
        "graph_distance",
        "is_stablecoin",
        "protocol_type",
        "chain",
    ]
    rows = [
        [
            o.pool_id,
            o.period,
            o.apy,
            o.apy_corrected,
            o.apy_base,
            o.apy_reward,
            o.log_tvl,
            o.tier,
            o.graph_distance,
            o.is_stablecoin,
            o.protocol_type,
            o.chain,
        ]
        for o in panel
    ]
    return _csv(header, rows)


def attrition_json(report: AttritionReport) -> str:
    return json.dumps(report.__dict__, sort_keys=True, indent=2) + "\n"


def results_csv(
    results: list[tuple[RegressionSpec, RegressionResult | None, str]]
) -> str:
    header = ["spec", "regressor", "coef", "se", "stars", "r2", "n", "clusters", "note"]
    rows: list[list] = []
    for spec, res, note in results:
        if res is None:
            rows.append([spec.name, "", None, None, "", None, None, None, note])
            continue
        for name in res.coefficients:
            rows.append(
                [
                    spec.name,
                    name,
                    res.coefficients[name],
                    res.clustered_se[name],
                    res.stars(name),
                    res.r_squared,
                    res.n_obs,
                    res.n_clusters,
                    ";".join(res.notes),
                ]
            )
    return _csv(header, rows)


def placebo_json(result: PlaceboResult) -> str:
    payload = {
        "spec": result.spec_name,
        "target": result.target,
        "observed_coef": result.observed_coef,
        "percentile": result.percentile,
        "one_sided_p": result.one_sided_p,
        "direction": result.direction,
        "n_perm": result.n_perm,
        "n_failed": result.n_failed,
        "perm_mean": result.perm_mean,
        "perm_sd": result.perm_sd,
        "quantiles": result.quantiles,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def rolling_csv(points: list[RollingPoint]) -> str:
    header = ["period", "coef", "se", "ci_low", "ci_high", "n_obs"]
    return _csv(
        header,
        [[p.period, p.coef, p.se, p.ci_low, p.ci_high, p.n_obs] for p in points],
    )


def events_csv(
    rows: list[tuple[EventWindow, RegressionResult | None, str]],
    target: str = "tier",
) -> str:
    header = ["label", "start", "end", "coef", "se", "stars", "n", "clusters", "note"]
    out: list[list] = []
    for win, res, note in rows:
        if res is None or target not in res.coefficients:
            out.append([win.label, win.start, win.end, None, None, "", None, None, note or "no estimate"])
            continue
        out.append(
            [
                win.label,
                win.start,
                win.end,
                res.coefficients[target],
                res.clustered_se[target],
                res.stars(target),
                res.n_obs,
                res.n_clusters,
                note,
            ]
        )
    return _csv(header, out)


def collinearity_json(report) -> str:
    payload = {
        "pearson_tier_distance": report.pearson_tier_distance,
        "vif": report.vif,
        "flags": list(report.flags),
    }
    return json.dumps(payload, sort_keys=True, indent=2, default=str) + "\n"


# --------------------------------------------------------------- manifest


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def param_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def manifest_json(
    command: str,
    config: dict,
    inputs: dict[str, Path],
    seed: int | None,
) -> str:
    from . import __version__

    payload = {
        "command": command,
        "config": {k: str(v) if isinstance(v, Path) else v for k, v in sorted(config.items())},
        "param_hash": param_hash(config),
        "inputs": {
            name: {"path": str(p), "sha256": file_sha256(p)}
            for name, p in sorted(inputs.items())
            if p is not None and Path(p).exists()
        },
        "seed": seed,
        "version": __version__,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
