"""Token-level credit hierarchy analytics for DeFi pool snapshots."""

__version__ = "0.1.0"

from .types import Category, PoolRecord, TokenRef
from .ingest import (
    CategoryMap,
    Diagnostic,
    infer_receipt_token,
    load_category_map,
    parse_snapshot,
    resolve_identity,
)
from .graph import (
    CdpEdge,
    DerivationGraph,
    Edge,
    FilterParams,
    TokenGraph,
    build_derivation_graph,
    build_full_graph,
    detect_cycles,
)
from .hierarchy import (
    DiscoveryParams,
    TierAssignment,
    compute_graph_distance,
    discover_tier0,
    jaccard_sensitivity,
    propagate_tiers,
    run_hierarchy,
    temporal_stability,
    ablate_steps,
)
from .metrics import (
    EmbeddedYieldTable,
    MultiplierReport,
    build_embedded_yields,
    corrected_apy,
    decompose_multiplier,
    layering_multiplier,
    tier_transition_table,
    token_tvl_attribution,
)
from .econ import (
    EventWindow,
    PanelObservation,
    PanelOptions,
    RegressionResult,
    RegressionSpec,
    build_panel,
    collinearity_report,
    event_window_regressions,
    fit_panel_ols,
    permutation_placebo,
    rolling_coefficients,
    run_specification_suite,
    winsorize,
)
from .synth import GroundTruth, SynthConfig, generate_ecosystem, verify_recovery

__all__ = [
    "Category",
    "PoolRecord",
    "TokenRef",
    "CategoryMap",
    "Diagnostic",
    "infer_receipt_token",
    "load_category_map",
    "parse_snapshot",
    "resolve_identity",
    "CdpEdge",
    "DerivationGraph",
    "Edge",
    "FilterParams",
    "TokenGraph",
    "build_derivation_graph",
    "build_full_graph",
    "detect_cycles",
    "DiscoveryParams",
    "TierAssignment",
    "compute_graph_distance",
    "discover_tier0",
    "jaccard_sensitivity",
    "propagate_tiers",
    "run_hierarchy",
    "temporal_stability",
    "ablate_steps",
    "EmbeddedYieldTable",
    "MultiplierReport",
    "build_embedded_yields",
    "corrected_apy",
    "decompose_multiplier",
    "layering_multiplier",
    "tier_transition_table",
    "token_tvl_attribution",
    "EventWindow",
    "PanelObservation",
    "PanelOptions",
    "RegressionResult",
    "RegressionSpec",
    "build_panel",
    "collinearity_report",
    "event_window_regressions",
    "fit_panel_ols",
    "permutation_placebo",
    "rolling_coefficients",
    "run_specification_suite",
    "winsorize",
    "GroundTruth",
    "SynthConfig",
    "generate_ecosystem",
    "verify_recovery",
]
