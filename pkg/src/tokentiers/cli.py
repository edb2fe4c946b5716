"""Command-line entry point wiring config, pipeline stages, and reports.

Every subcommand reads a flat ``key = value`` config file (INI style, no
section header required), applies ``--set key=value`` overrides, writes its
artifacts into the output directory, and drops a ``<command>_manifest.json``
recording inputs, the parameter hash, and the seed. Outputs are
byte-identical across reruns with identical config and seed.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from pathlib import Path

from . import econ, exports, hierarchy, metrics, synth
from .econ import EventWindow, PanelOptions, RegressionSpec
from .errors import ConfigError, DataError, InternalError, TokenTiersError
from .graph import CdpEdge, FilterParams, detect_cycles
from .hierarchy import DiscoveryParams
from .ingest import load_category_map, load_receipt_registry, parse_snapshot
from .types import Category, TokenRef

SUBCOMMANDS = (
    "ingest",
    "graph",
    "tiers",
    "distance",
    "multiplier",
    "embed-yield",
    "panel",
    "regress",
    "placebo",
    "rolling",
    "events",
    "sensitivity",
    "stability",
    "ablate",
    "synth",
    "verify",
    "report",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors map to exit code 1, not 2
        raise ConfigError(message)


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "1", "yes", "on"):
        return True
    if value in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"invalid boolean: {text!r}")


class RunConfig:
    """Flat key/value run configuration with typed accessors."""

    def __init__(self, values: dict[str, str], base_dir: Path):
        self.values = values
        self.base_dir = base_dir

    @classmethod
    def load(cls, path: Path | None, overrides: list[str]) -> "RunConfig":
        values: dict[str, str] = {}
        base = Path.cwd()
        if path is not None:
            if not Path(path).exists():
                raise ConfigError(f"config file not found: {path}")
            parser = configparser.ConfigParser(interpolation=None)
            text = Path(path).read_text(encoding="utf-8")
            if not text.lstrip().startswith("["):
                text = "[run]\n" + text
            try:
                parser.read_string(text)
            except configparser.Error as exc:
                raise ConfigError(f"bad config file: {exc}")
            for section in parser.sections():
                for key, value in parser.items(section):
                    values[key.strip()] = value.strip()
            base = Path(path).resolve().parent
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, _, value = item.partition("=")
            values[key.strip()] = value.strip()
        return cls(values, base)

    def has(self, key: str) -> bool:
        return key in self.values and self.values[key] != ""

    def str_(self, key: str, default: str | None = None) -> str:
        if self.has(key):
            return self.values[key]
        if default is None:
            raise ConfigError(f"missing required config key: {key}")
        return default

    def int_(self, key: str, default: int) -> int:
        try:
            return int(float(self.values[key])) if self.has(key) else default
        except ValueError:
            raise ConfigError(f"config key {key} must be an integer")

    def float_(self, key: str, default: float) -> float:
        try:
            return float(self.values[key]) if self.has(key) else default
        except ValueError:
            raise ConfigError(f"config key {key} must be a number")

    def bool_(self, key: str, default: bool) -> bool:
        return _parse_bool(self.values[key]) if self.has(key) else default

    def path(self, key: str) -> Path:
        raw = Path(self.str_(key))
        return raw if raw.is_absolute() else self.base_dir / raw

    def opt_path(self, key: str) -> Path | None:
        return self.path(key) if self.has(key) else None

    def list_(self, key: str, default: str = "") -> list[str]:
        raw = self.values.get(key, default)
        return [part.strip() for part in raw.split(",") if part.strip()]


def _load_cdp_edges(path: Path) -> tuple[CdpEdge, ...]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "collateral":
                continue
            if len(row) < 3:
                raise ConfigError(f"cdp edges line {lineno}: expected collateral,minted,protocol")
            rows.append(CdpEdge(row[0], row[1], row[2]))
    return tuple(rows)


def _load_event_windows(path: Path) -> list[EventWindow]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "label":
                continue
            if len(row) < 3:
                raise ConfigError(f"event windows line {lineno}: expected label,start_date,end_date")
            out.append(EventWindow(row[0].strip(), row[1].strip(), row[2].strip()))
    return out


def _filter_params(cfg: RunConfig) -> FilterParams:
    cdp: tuple[CdpEdge, ...] = ()
    cdp_path = cfg.opt_path("cdp_edges")
    if cdp_path is not None:
        cdp = _load_cdp_edges(cdp_path)
    prefixes = tuple(p.upper() for p in cfg.list_("wrapper_prefixes", "WST,W,ST"))
    return FilterParams(
        drop_dex=cfg.bool_("drop_dex", True),
        drop_cross_collateral=cfg.bool_("drop_cross_collateral", True),
        drop_base_to_base=cfg.bool_("drop_base_to_base", True),
        reverse_wrappers=cfg.bool_("reverse_wrappers", True),
        protect_tier0=cfg.bool_("protect_tier0", True),
        add_cdp_edges=cfg.bool_("add_cdp_edges", True),
        add_synthetic_names=cfg.bool_("add_synthetic_names", True),
        min_outdeg=cfg.int_("min_outdeg", 3),
        min_src_tvl_usd=cfg.float_("min_src_tvl_usd", 1e6),
        wrapper_prefixes=prefixes,
        cdp_edges=cdp,
        strip_min_core=cfg.int_("strip_min_core", 2),
        lcs_min_len=cfg.int_("lcs_min_len", 3),
        lcs_min_frac=cfg.float_("lcs_min_frac", 0.6),
    )


def _discovery_params(cfg: RunConfig) -> DiscoveryParams:
    return DiscoveryParams(
        min_outdeg=cfg.int_("min_outdeg", 3),
        min_src_tvl_usd=cfg.float_("min_src_tvl_usd", 1e6),
        demotion_ratio=cfg.float_("demotion_ratio", 1000.0),
    )


def _panel_options(cfg: RunConfig) -> PanelOptions:
    return PanelOptions(
        aggregator=cfg.str_("aggregator", "mean"),
        min_tvl_usd=cfg.float_("panel_min_tvl_usd", 1000.0),
        apy_max=cfg.float_("apy_max", 100.0),
        winsor_lo=cfg.float_("winsor_lo", 0.01),
        winsor_hi=cfg.float_("winsor_hi", 0.99),
        max_tier=cfg.int_("max_tier", 3),
    )


def _synth_config(cfg: RunConfig, seed: int) -> synth.SynthConfig:
    mix: dict[Category, float] | None = None
    if cfg.has("synth_category_mix"):
        mix = {}
        for part in cfg.list_("synth_category_mix"):
            name, _, weight = part.partition(":")
            from .types import parse_category

            mix[parse_category(name)] = float(weight)
    kwargs = dict(
        n_base_tokens=cfg.int_("synth_n_base", 3),
        max_depth=cfg.int_("synth_max_depth", 3),
        tvl_decay=cfg.float_("synth_decay", 0.5),
        creation_yield_range=(
            cfg.float_("synth_yield_lo", 0.5),
            cfg.float_("synth_yield_hi", 6.0),
        ),
        true_tier_coef=cfg.float_("synth_tier_coef", -0.5),
        true_distance_coef=cfg.float_("synth_distance_coef", 0.0),
        noise_sd=cfg.float_("synth_noise_sd", 1.0),
        n_months=cfg.int_("synth_months", 6),
        seed=seed,
        branching=(cfg.int_("synth_branch_min", 1), cfg.int_("synth_branch_max", 2)),
        max_tokens=cfg.int_("synth_max_tokens", 200),
        diamond_rate=cfg.float_("synth_diamond_rate", 0.0),
        base_tvl_usd=cfg.float_("synth_base_tvl", 1e8),
        start_month=cfg.str_("synth_start_month", "2024-01"),
    )
    if mix is not None:
        kwargs["category_mix"] = mix
    return synth.SynthConfig(**kwargs)


class Stage:
    """Shared lazily-computed pipeline state for one CLI invocation."""

    def __init__(self, cfg: RunConfig, out: Path, seed: int):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self._cache: dict[str, object] = {}

    def snapshot_paths(self) -> list[Path]:
        paths = [
            (self.cfg.base_dir / p if not Path(p).is_absolute() else Path(p))
            for p in self.cfg.list_("snapshot")
        ]
        if not paths:
            raise ConfigError("missing required config key: snapshot")
        for p in paths:
            if not p.exists():
                raise ConfigError(f"snapshot not found: {p}")
        return paths

    def ingested(self):
        if "ingested" in self._cache:
            return self._cache["ingested"]
        fmt = self.cfg.str_("format", "json")
        cmap_path = self.cfg.opt_path("category_map")
        cmap = load_category_map(cmap_path) if cmap_path is not None else None
        records, diags = [], []
        for path in self.snapshot_paths():
            recs, ds = parse_snapshot(path, fmt, cmap)
            records.extend(recs)
            diags.extend(ds)
        from .ingest import resolve_identity

        table, resolved = resolve_identity(records)
        diags.extend(table.diagnostics)
        self._cache["ingested"] = (resolved, diags, table)
        return self._cache["ingested"]

    def registry(self) -> dict[str, str] | None:
        path = self.cfg.opt_path("receipt_registry")
        return load_receipt_registry(path) if path is not None else None

    def run(self) -> hierarchy.HierarchyRun:
        if "run" not in self._cache:
            records, _, _ = self.ingested()
            self._cache["run"] = hierarchy.run_hierarchy(
                records,
                _filter_params(self.cfg),
                _discovery_params(self.cfg),
                self.registry(),
                resolve=False,
            )
        return self._cache["run"]

    def embedded(self):
        if "embedded" not in self._cache:
            run = self.run()
            self._cache["embedded"] = metrics.build_embedded_yields(
                run.deriv, run.tiers, list(run.records)
            )
        return self._cache["embedded"]

    def panel(self):
        if "panel" not in self._cache:
            run = self.run()
            self._cache["panel"] = econ.build_panel(
                list(run.records), run.tiers, self.embedded(), _panel_options(self.cfg)
            )
        return self._cache["panel"]

    def write(self, name: str, content: str) -> Path:
        return exports.write_text(self.out / name, content)

    def manifest(self, command: str):
        inputs = {}
        for key in ("category_map", "cdp_edges", "event_windows", "receipt_registry"):
            p = self.cfg.opt_path(key)
            if p is not None:
                inputs[key] = p
        if self.cfg.has("snapshot"):
            for i, p in enumerate(self.snapshot_paths()):
                inputs[f"snapshot_{i}"] = p
        content = exports.manifest_json(
            command, dict(self.cfg.values), inputs, self.seed
        )
        self.write(f"{command.replace('-', '_')}_manifest.json", content)


def _spec_by_name(name: str) -> RegressionSpec:
    for spec in econ.default_specification_suite():
        if spec.name == name:
            return spec
    raise ConfigError(f"unknown regression spec: {name!r}")


def _core_tokens(cfg: RunConfig) -> list[TokenRef]:
    tokens = []
    for part in cfg.list_("core_tokens"):
        sym, _, chain = part.partition("@")
        if not sym or not chain:
            raise ConfigError(f"core_tokens entries must look like SYM@chain: {part!r}")
        tokens.append(TokenRef(sym, chain))
    return tokens


def _cmd_ingest(stage: Stage):
    records, diags, table = stage.ingested()
    stage.write("records.ndjson", exports.records_to_ndjson(records))
    stage.write("diagnostics.csv", exports.diagnostics_csv(diags))
    rows = [[t.symbol, t.chain, t.address or ""] for t in table.canonical]
    stage.write(
        "tokens.csv",
        exports.simple_csv(["symbol", "chain", "address"], rows),
    )
    print(f"ingest: {len(records)} records, {len(diags)} diagnostics")


def _cmd_graph(stage: Stage):
    run = stage.run()
    stage.write("full_edges.csv", exports.graph_csv(run.full))
    stage.write("deriv_edges.csv", exports.graph_csv(run.deriv, run.deriv.rules))
    cycles = detect_cycles(run.deriv)
    stage.write("cycles.csv", exports.cycles_csv(cycles))
    print(
        f"graph: {run.full.node_count} nodes, {run.full.edge_count} edges"
        f" (derivation: {run.deriv.edge_count} edges, {len(cycles)} cycles)"
    )


def _cmd_tiers(stage: Stage):
    run = stage.run()
    stage.write("tiers.csv", exports.tiers_csv(run.tiers))
    stage.write("demotions.csv", exports.demotions_csv(run.discovery))
    mapped = sum(1 for k in run.tiers.tier.values() if k >= 0)
    print(
        f"tiers: {len(run.discovery.tier0_set)} tier-0 tokens,"
        f" {mapped}/{len(run.tiers.tier)} mapped,"
        f" divergence={hierarchy.tier_distance_divergence(run.tiers)}"
    )


def _cmd_distance(stage: Stage):
    run = stage.run()
    stage.write("distances.csv", exports.distance_csv(run.tiers.graph_distance))
    print(f"distance: {len(run.tiers.graph_distance)} tokens reachable")


def _cmd_multiplier(stage: Stage):
    run = stage.run()
    series = metrics.multiplier_series(list(run.records), run.deriv, run.tiers)
    attribution = metrics.token_tvl_attribution(list(run.records), run.tiers)
    overall = metrics.layering_multiplier(attribution, run.tiers)
    decomposition, diags = metrics.decompose_multiplier(run.deriv, run.tiers, overall.lm)
    overall = metrics.MultiplierReport(
        lm=overall.lm,
        tvl_mapped=overall.tvl_mapped,
        tvl_tier0=overall.tvl_tier0,
        tvl_unmapped=overall.tvl_unmapped,
        tier_shares=overall.tier_shares,
        decomposition=decomposition,
        diagnostics=diags,
    )
    stage.write(
        "multiplier.csv", exports.multiplier_csv(series + [("all", overall)])
    )
    table = metrics.tier_transition_table(run.deriv, run.tiers)
    stage.write("transitions.csv", exports.transitions_csv(table))
    print(f"multiplier: lm={overall.lm:.4f} over {len(series)} periods")


def _cmd_embed_yield(stage: Stage):
    run = stage.run()
    table = stage.embedded()
    stage.write("embedded.csv", exports.embedded_csv(table, run.tiers))
    print(
        f"embed-yield: matched {table.matched_edges}/{table.eligible_edges}"
        f" edges (rate {table.match_rate:.3f})"
    )


def _cmd_panel(stage: Stage):
    panel, attrition = stage.panel()
    stage.write("panel.csv", exports.panel_csv(panel))
    stage.write("attrition.json", exports.attrition_json(attrition))
    print(f"panel: {attrition.rows_out} rows (from {attrition.rows_in})")


def _cmd_regress(stage: Stage):
    panel, _ = stage.panel()
    results = econ.run_specification_suite(panel)
    stage.write("results.csv", exports.results_csv(results))
    fitted = sum(1 for _, res, _ in results if res is not None)
    print(f"regress: {fitted}/{len(results)} specifications fitted")


def _cmd_placebo(stage: Stage):
    panel, _ = stage.panel()
    spec = _spec_by_name(stage.cfg.str_("placebo_spec", "t4_baseline"))
    if stage.cfg.has("placebo_target"):
        from dataclasses import replace

        spec = replace(spec, target=stage.cfg.str_("placebo_target"))
    result = econ.permutation_placebo(
        panel, spec, stage.cfg.int_("n_perm", 1000), stage.seed
    )
    stage.write("placebo.json", exports.placebo_json(result))
    print(
        f"placebo: observed {result.observed_coef:.4f} at percentile"
        f" {result.percentile:.1f} (one-sided p={result.one_sided_p:.4f})"
    )


def _cmd_rolling(stage: Stage):
    panel, _ = stage.panel()
    spec = _spec_by_name(stage.cfg.str_("rolling_spec", "t4_baseline"))
    points = econ.rolling_coefficients(panel, spec, stage.cfg.int_("window", 12))
    stage.write("rolling.csv", exports.rolling_csv(points))
    print(f"rolling: {len(points)} window estimates")


def _cmd_events(stage: Stage):
    panel, _ = stage.panel()
    path = stage.cfg.opt_path("event_windows")
    if path is None:
        raise ConfigError("events requires the event_windows config key")
    windows = _load_event_windows(path)
    rows = econ.event_window_regressions(
        panel, windows, include_time_fe=stage.cfg.bool_("event_time_fe", True)
    )
    stage.write("events.csv", exports.events_csv(rows))
    print(f"events: {len(rows)} windows")


def _cmd_sensitivity(stage: Stage):
    run = stage.run()
    outdegs = [int(float(x)) for x in stage.cfg.list_("grid_outdeg", "2,3,5,7,10")]
    tvls = [float(x) for x in stage.cfg.list_("grid_tvl", "1,1e5,1e6,1e7,1e8")]
    grid = [
        DiscoveryParams(
            min_outdeg=d,
            min_src_tvl_usd=t,
            demotion_ratio=stage.cfg.float_("demotion_ratio", 1000.0),
        )
        for d in outdegs
        for t in tvls
    ]
    cells = hierarchy.jaccard_sensitivity(
        run.deriv, run.full, grid, _discovery_params(stage.cfg)
    )
    stage.write("sensitivity.csv", exports.sensitivity_csv(cells))
    print(f"sensitivity: {len(cells)} cells")


def _cmd_stability(stage: Stage):
    run = stage.run()
    fmt = stage.cfg.str_("format", "json")
    cmap_path = stage.cfg.opt_path("category_map")
    cmap = load_category_map(cmap_path) if cmap_path is not None else None
    snapshots = []
    for part in stage.cfg.list_("stability_snapshots"):
        label, _, raw = part.partition("=")
        if not raw:
            raise ConfigError(
                "stability_snapshots entries must look like label=path"
            )
        path = Path(raw)
        if not path.is_absolute():
            path = stage.cfg.base_dir / path
        records, _ = parse_snapshot(path, fmt, cmap)
        snapshots.append((label.strip(), records))
    if not snapshots:
        raise ConfigError("stability requires the stability_snapshots config key")
    rows = hierarchy.temporal_stability(
        snapshots, run.tiers, _filter_params(stage.cfg), _discovery_params(stage.cfg)
    )
    stage.write("stability.csv", exports.stability_csv(rows))
    print(f"stability: {len(rows)} snapshots")


def _cmd_ablate(stage: Stage):
    records, _, _ = stage.ingested()
    core = _core_tokens(stage.cfg)
    if not core:
        raise ConfigError("ablate requires the core_tokens config key")
    rows = hierarchy.ablate_steps(
        records, core, _filter_params(stage.cfg), _discovery_params(stage.cfg)
    )
    stage.write("ablation.csv", exports.ablation_csv(rows))
    print(f"ablate: {len(rows)} steps evaluated")


def _cmd_synth(stage: Stage):
    cfg = _synth_config(stage.cfg, stage.seed)
    records, truth = synth.generate_ecosystem(cfg)
    stage.write("synth_snapshot.ndjson", exports.records_to_ndjson(records))
    stage.write(
        "synth_categories.csv",
        exports.category_map_csv(synth.category_rows(records)),
    )
    tier_rows = [
        [tok.symbol, tok.chain, truth.tier[tok], truth.distance.get(tok)]
        for tok in sorted(truth.tier)
    ]
    stage.write(
        "truth_tiers.csv",
        exports.simple_csv(["symbol", "chain", "tier", "graph_distance"], tier_rows),
    )
    yield_rows = [
        [p.symbol, c.symbol, y]
        for (p, c), y in sorted(truth.creation_yield.items())
    ]
    stage.write(
        "truth_yields.csv",
        exports.simple_csv(["parent_symbol", "child_symbol", "creation_yield"], yield_rows),
    )
    stage.write(
        "truth_coefs.json",
        json.dumps(truth.panel_coefs, sort_keys=True, indent=2) + "\n",
    )
    print(f"synth: {len(records)} records, {len(truth.tier)} tokens (seed {stage.seed})")


def _cmd_verify(stage: Stage):
    cfg = _synth_config(stage.cfg, stage.seed)
    records, truth = synth.generate_ecosystem(cfg)
    report = synth.verify_recovery(
        records, truth, _filter_params(stage.cfg), _discovery_params(stage.cfg)
    )
    payload = {
        "tier_match_rate": report.tier_match_rate,
        "distance_match_rate": report.distance_match_rate,
        "creation_yield_match_rate": report.creation_yield_match_rate,
        "lm_recovered": report.lm_recovered,
        "lm_truth": report.lm_truth,
        "lm_abs_error": report.lm_abs_error,
        "coef_z": report.coef_z,
        "tier0_expected": report.tier0_expected,
        "tier0_found": report.tier0_found,
        "divergent_tokens": report.divergent_tokens,
        "notes": list(report.notes),
    }
    stage.write("recovery.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(
        f"verify: tier match {report.tier_match_rate:.3f},"
        f" lm error {report.lm_abs_error:.2e}"
    )


def _cmd_report(stage: Stage):
    run = stage.run()
    cycles = detect_cycles(run.deriv)
    attribution = metrics.token_tvl_attribution(list(run.records), run.tiers)
    overall = metrics.layering_multiplier(attribution, run.tiers)
    decomposition, _ = metrics.decompose_multiplier(run.deriv, run.tiers, overall.lm)
    table = stage.embedded()
    panel, attrition = stage.panel()
    results = econ.run_specification_suite(panel)
    key_coefs = {}
    for spec, res, _ in results:
        if res is None:
            continue
        if spec.name in ("t4_baseline", "t4_both_fe", "t5_dist_orig", "t5_joint_corr"):
            target = spec.target_regressor
            if target in res.coefficients:
                key_coefs[spec.name] = {
                    "regressor": target,
                    "coef": res.coefficients[target],
                    "se": res.clustered_se[target],
                    "n": res.n_obs,
                }
    sane = 1.0 <= overall.lm <= 20.0
    payload = {
        "nodes": run.full.node_count,
        "edges": run.full.edge_count,
        "derivation_edges": run.deriv.edge_count,
        "cycles": len(cycles),
        "tier0_count": len(run.discovery.tier0_set),
        "mapped_tokens": sum(1 for k in run.tiers.tier.values() if k >= 0),
        "total_tokens": len(run.tiers.tier),
        "tier_distance_divergence": hierarchy.tier_distance_divergence(run.tiers),
        "lm": overall.lm,
        "lm_within_sanity_band": sane,
        "tvl_mapped": overall.tvl_mapped,
        "tvl_tier0": overall.tvl_tier0,
        "tvl_unmapped": overall.tvl_unmapped,
        "tier_shares": {str(k): v for k, v in overall.tier_shares.items()},
        "decomposition": decomposition,
        "embedded_match_rate": table.match_rate,
        "panel_rows": attrition.rows_out,
        "key_coefficients": key_coefs,
    }
    stage.write("report.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")
    lines = [
        f"nodes={payload['nodes']} edges={payload['edges']} cycles={payload['cycles']}",
        f"tier0={payload['tier0_count']} mapped={payload['mapped_tokens']}/{payload['total_tokens']}",
        f"lm={overall.lm:.4f} (sanity band 1..20: {'ok' if sane else 'OUT OF BAND'})",
        "decomposition: "
        + " ".join(f"{g}={v:.4f}" for g, v in decomposition.items()),
        f"embedded match rate={table.match_rate:.3f} panel rows={attrition.rows_out}",
    ]
    for name, info in key_coefs.items():
        lines.append(
            f"{name}: {info['regressor']}={info['coef']:.4f} (se {info['se']:.4f}, n {info['n']})"
        )
    text = "\n".join(lines) + "\n"
    stage.write("report.txt", text)
    print(text, end="")


_HANDLERS = {
    "ingest": _cmd_ingest,
    "graph": _cmd_graph,
    "tiers": _cmd_tiers,
    "distance": _cmd_distance,
    "multiplier": _cmd_multiplier,
    "embed-yield": _cmd_embed_yield,
    "panel": _cmd_panel,
    "regress": _cmd_regress,
    "placebo": _cmd_placebo,
    "rolling": _cmd_rolling,
    "events": _cmd_events,
    "sensitivity": _cmd_sensitivity,
    "stability": _cmd_stability,
    "ablate": _cmd_ablate,
    "synth": _cmd_synth,
    "verify": _cmd_verify,
    "report": _cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tokentiers", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig.load(args.config, args.overrides)
        if args.out is not None:
            cfg.values["out"] = str(args.out)
        if args.seed is not None:
            cfg.values["seed"] = str(args.seed)
        out = Path(cfg.str_("out", "out"))
        if not out.is_absolute():
            out = (
                Path.cwd() / out
                if args.out is not None
                else cfg.base_dir / out
            )
        seed = cfg.int_("seed", 0)
        stage = Stage(cfg, out, seed)
        _HANDLERS[args.command](stage)
        stage.manifest(args.command)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except TokenTiersError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
