"""Pool-month panel construction and the regression suite.

Fixed effects are absorbed by iterated within-demeaning; inference uses
CR1 pool-clustered sandwich errors with the G/(G-1) * (N-1)/(N-K)
small-sample factor, where K counts both kept regressors and absorbed
fixed-effect parameters so results match an explicit dummy-variable fit.
Reported R-squared is the within (post-absorption) flavor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import linalg as sla
from scipy import stats

from .errors import DataError
from .metrics import EmbeddedYieldTable
from .hierarchy import TierAssignment
from .types import PoolRecord

DEMEAN_TOL = 1e-10
DEMEAN_MAX_SWEEPS = 200


@dataclass(frozen=True)
class PanelOptions:
    """Filters and aggregation choices for panel construction."""

    aggregator: str = "mean"  # mean | last | tvl-weighted
    min_tvl_usd: float = 1000.0
    apy_max: float = 100.0
    winsor_lo: float = 0.01
    winsor_hi: float = 0.99
    max_tier: int = 3

    def __post_init__(self):
        if self.aggregator not in ("mean", "last", "tvl-weighted"):
            raise ValueError(f"unknown aggregator: {self.aggregator!r}")
        if not (0 <= self.winsor_lo < self.winsor_hi <= 1):
            raise ValueError("winsor percentiles must satisfy 0 <= lo < hi <= 1")


@dataclass(frozen=True)
class PanelObservation:
    pool_id: str
    period: str  # YYYY-MM
    apy: float
    apy_corrected: float
    apy_base: float | None
    apy_reward: float | None
    log_tvl: float
    tier: int
    graph_distance: int | None
    is_stablecoin: int
    protocol_type: str
    chain: str


@dataclass(frozen=True)
class AttritionReport:
    rows_in: int
    dropped_missing: int
    dropped_tvl: int
    dropped_apy_range: int
    dropped_tier: int
    rows_out: int

    def total_dropped(self) -> int:
        return (
            self.dropped_missing
            + self.dropped_tvl
            + self.dropped_apy_range
            + self.dropped_tier
        )


def winsorize(values, p_lo: float, p_hi: float) -> np.ndarray:
    """Clamp tails at linear-interpolation empirical quantiles."""
    if not (0 <= p_lo < p_hi <= 1):
        raise ValueError("require 0 <= p_lo < p_hi <= 1")
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return arr.copy()
    lo = np.quantile(arr, p_lo)
    hi = np.quantile(arr, p_hi)
    return np.clip(arr, lo, hi)


def build_panel(
    records: list[PoolRecord],
    tiers: TierAssignment,
    embedded: EmbeddedYieldTable | None = None,
    opts: PanelOptions | None = None,
) -> tuple[list[PanelObservation], AttritionReport]:
    """Aggregate snapshots into pool-month rows and apply baseline filters.

    Filter order: drop missing APY/TVL, TVL floor, APY range, winsorize,
    tier range. Corrected APY is the winsorized APY plus the primary
    token's embedded yield, so the additivity identity holds row by row.
    Raises with the attrition detail when nothing survives.
    """
    opts = opts or PanelOptions()
    if not records:
        raise DataError("no records supplied to build_panel")

    rows = []
    for i, r in enumerate(records):
        rows.append(
            {
                "pool_id": r.pool_id,
                "period": r.month,
                "order": i,
                "apy": np.nan if r.apy_total is None else r.apy_total,
                "apy_base": np.nan if r.apy_base is None else r.apy_base,
                "apy_reward": np.nan if r.apy_reward is None else r.apy_reward,
                "tvl": r.tvl_usd,
            }
        )
    raw = pd.DataFrame(rows)

    meta: dict[str, dict] = {}
    for r in records:
        if r.pool_id not in meta:
            tok = r.primary_token
            dist = tiers.graph_distance.get(tok)
            meta[r.pool_id] = {
                "tier": tiers.tier.get(tok, -1),
                "graph_distance": dist,
                "is_stablecoin": int(r.is_stablecoin),
                "protocol_type": r.category.value,
                "chain": r.chain,
                "embedded": 0.0 if embedded is None else embedded.embedded_for(tok),
            }

    def _agg(group: pd.DataFrame) -> pd.Series:
        group = group.sort_values("order")
        if opts.aggregator == "last":
            valid = group.dropna(subset=["apy"])
            apy = valid["apy"].iloc[-1] if len(valid) else np.nan
            tvl = group["tvl"].iloc[-1]
        elif opts.aggregator == "tvl-weighted":
            valid = group.dropna(subset=["apy"])
            w = valid["tvl"].to_numpy()
            apy = (
                float(np.average(valid["apy"], weights=w))
                if len(valid) and w.sum() > 0
                else (valid["apy"].mean() if len(valid) else np.nan)
            )
            tvl = group["tvl"].mean()
        else:
            apy = group["apy"].mean()
            tvl = group["tvl"].mean()
        return pd.Series(
            {
                "apy": apy,
                "apy_base": group["apy_base"].mean(),
                "apy_reward": group["apy_reward"].mean(),
                "tvl": tvl,
            }
        )

    monthly = (
        raw.groupby(["pool_id", "period"], sort=True)
        .apply(_agg, include_groups=False)
        .reset_index()
    )

    rows_in = len(monthly)
    missing = monthly["apy"].isna() | monthly["tvl"].isna()
    monthly = monthly[~missing]
    dropped_missing = int(missing.sum())

    low_tvl = monthly["tvl"] < opts.min_tvl_usd
    monthly = monthly[~low_tvl]
    dropped_tvl = int(low_tvl.sum())

    out_of_range = (monthly["apy"] < 0) | (monthly["apy"] >= opts.apy_max)
    monthly = monthly[~out_of_range]
    dropped_apy = int(out_of_range.sum())

    if len(monthly):
        monthly = monthly.assign(
            apy=winsorize(monthly["apy"].to_numpy(), opts.winsor_lo, opts.winsor_hi)
        )

    tier_col = monthly["pool_id"].map(lambda p: meta[p]["tier"])
    bad_tier = (tier_col < 0) | (tier_col > opts.max_tier)
    monthly = monthly[~bad_tier]
    dropped_tier = int(bad_tier.sum())

    report = AttritionReport(
        rows_in=rows_in,
        dropped_missing=dropped_missing,
        dropped_tvl=dropped_tvl,
        dropped_apy_range=dropped_apy,
        dropped_tier=dropped_tier,
        rows_out=len(monthly),
    )
    if not len(monthly):
        raise DataError(f"panel empty after filters: {report}")

    panel = []
    for _, row in monthly.iterrows():
        m = meta[row["pool_id"]]
        apy = float(row["apy"])
        panel.append(
            PanelObservation(
                pool_id=row["pool_id"],
                period=row["period"],
                apy=apy,
                apy_corrected=apy + m["embedded"],
                apy_base=None if pd.isna(row["apy_base"]) else float(row["apy_base"]),
                apy_reward=None
                if pd.isna(row["apy_reward"])
                else float(row["apy_reward"]),
                log_tvl=float(np.log(row["tvl"])),
                tier=int(m["tier"]),
                graph_distance=m["graph_distance"],
                is_stablecoin=m["is_stablecoin"],
                protocol_type=m["protocol_type"],
                chain=m["chain"],
            )
        )
    return panel, report


def panel_frame(panel) -> pd.DataFrame:
    """Panel rows as a DataFrame with tier dummies precomputed."""
    if isinstance(panel, pd.DataFrame):
        df = panel.copy()
    else:
        df = pd.DataFrame(
            {
                "pool_id": [o.pool_id for o in panel],
                "period": [o.period for o in panel],
                "apy": [o.apy for o in panel],
                "apy_corrected": [o.apy_corrected for o in panel],
                "apy_base": [np.nan if o.apy_base is None else o.apy_base for o in panel],
                "apy_reward": [
                    np.nan if o.apy_reward is None else o.apy_reward for o in panel
                ],
                "log_tvl": [o.log_tvl for o in panel],
                "tier": [o.tier for o in panel],
                "graph_distance": [
                    np.nan if o.graph_distance is None else float(o.graph_distance)
                    for o in panel
                ],
                "is_stablecoin": [o.is_stablecoin for o in panel],
                "protocol_type": [o.protocol_type for o in panel],
                "chain": [o.chain for o in panel],
            }
        )
    for k in (1, 2, 3):
        if f"tier_{k}" not in df.columns and "tier" in df.columns:
            if k < 3:
                df[f"tier_{k}"] = (df["tier"] == k).astype(float)
            else:
                df["tier_3"] = (df["tier"] >= 3).astype(float)
    return df


@dataclass(frozen=True)
class RegressionSpec:
    """One estimating equation: dependent, regressors, FE dims, clustering."""

    name: str
    dependent: str
    regressors: tuple[str, ...]
    fe_dims: tuple[str, ...] = ("period",)
    cluster_dim: str = "pool_id"
    subset: tuple[str, str] | None = None  # (column, value)
    target: str | None = None

    @property
    def target_regressor(self) -> str:
        return self.target or self.regressors[0]


@dataclass(frozen=True)
class RegressionResult:
    spec_name: str
    coefficients: dict[str, float]
    clustered_se: dict[str, float]
    t_stats: dict[str, float]
    p_values: dict[str, float]
    r_squared: float
    n_obs: int
    n_clusters: int
    fe_absorbed: tuple[str, ...]
    dropped: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    def stars(self, name: str) -> str:
        p = self.p_values.get(name, 1.0)
        if p < 0.01:
            return "***"
        if p < 0.05:
            return "**"
        if p < 0.1:
            return "*"
        return ""


def _demean(mat: np.ndarray, code_list: list[np.ndarray]) -> np.ndarray:
    """Iterated within-transformation across one or more FE dimensions."""
    out = mat.astype(float, copy=True)
    if not code_list:
        return out
    counts = [np.bincount(codes).astype(float) for codes in code_list]
    for _ in range(DEMEAN_MAX_SWEEPS):
        worst = 0.0
        for codes, cnt in zip(code_list, counts):
            sums = np.zeros((len(cnt), out.shape[1]))
            np.add.at(sums, codes, out)
            means = sums / cnt[:, None]
            out -= means[codes]
            worst = max(worst, float(np.abs(means).max(initial=0.0)))
        if worst < DEMEAN_TOL:
            break
    return out


def fit_panel_ols(panel, spec: RegressionSpec) -> RegressionResult:
    """Within-estimator OLS with CR1 cluster-robust standard errors.

    Degenerate (single-level) FE dimensions are skipped; regressors that
    are collinear after absorption are dropped with a note. Raises on
    fewer than two clusters or singular normal equations.
    """
    df = panel_frame(panel)
    notes: list[str] = []
    if spec.subset is not None:
        col, value = spec.subset
        df = df[df[col] == value]
    missing_cols = [c for c in (spec.dependent, *spec.regressors) if c not in df.columns]
    if missing_cols:
        raise DataError(f"spec {spec.name}: missing columns {missing_cols}")
    use_cols = [spec.dependent, *spec.regressors]
    before = len(df)
    df = df.dropna(subset=use_cols)
    if len(df) < before:
        notes.append(f"dropped {before - len(df)} rows with missing values")
    if not len(df):
        raise DataError(f"spec {spec.name}: no usable observations")

    fe_dims = []
    code_list = []
    absorbed_df = 0
    for dim in spec.fe_dims:
        codes, levels = pd.factorize(df[dim], sort=True)
        if len(levels) < 2:
            notes.append(f"fe dim {dim} degenerate (single level); dropped")
            continue
        fe_dims.append(dim)
        code_list.append(codes)
        absorbed_df += len(levels) - 1
    if fe_dims:
        absorbed_df += 1  # the common intercept the transformations absorb

    names = list(spec.regressors)
    y = df[spec.dependent].to_numpy(float)
    X = df[names].to_numpy(float)
    if not fe_dims:
        names = ["const", *names]
        X = np.column_stack([np.ones(len(df)), X])

    stacked = _demean(np.column_stack([y, X]), code_list)
    y_t, X_t = stacked[:, 0], stacked[:, 1:]

    # Collinearity: explicit zero-variance screen, then pivoted-QR rank.
    kept = list(range(len(names)))
    for j in range(len(names)):
        col = X_t[:, j]
        if names[j] != "const" and float(np.ptp(col)) < 1e-12:
            kept.remove(j)
            notes.append(f"dropped collinear regressor {names[j]} (no variation)")
    if not kept:
        raise DataError(f"spec {spec.name}: all regressors degenerate")
    Xk = X_t[:, kept]
    _, R, piv = sla.qr(Xk, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag.max(initial=0.0) * max(Xk.shape) * np.finfo(float).eps
    rank = int((diag > tol).sum()) if diag.size else 0
    if rank < Xk.shape[1]:
        discard = sorted(piv[rank:], reverse=True)
        for local in discard:
            notes.append(f"dropped collinear regressor {names[kept[local]]}")
            kept.pop(local)
        Xk = X_t[:, kept]
    kept_names = [names[j] for j in kept]

    xtx = Xk.T @ Xk
    cond = np.linalg.cond(xtx) if xtx.size else 0.0
    if not np.isfinite(cond) or cond > 1e14:
        raise DataError(f"spec {spec.name}: singular normal equations (cond={cond:.3g})")
    beta = np.linalg.solve(xtx, Xk.T @ y_t)
    resid = y_t - Xk @ beta

    clusters, _ = pd.factorize(df[spec.cluster_dim], sort=True)
    G = int(clusters.max()) + 1 if len(clusters) else 0
    if G < 2:
        raise DataError(f"spec {spec.name}: need at least 2 clusters, have {G}")
    n, k = Xk.shape
    K = k + absorbed_df
    if n <= K:
        raise DataError(f"spec {spec.name}: insufficient degrees of freedom")

    H = np.zeros((G, k))
    np.add.at(H, clusters, Xk * resid[:, None])
    bread = np.linalg.inv(xtx)
    meat = H.T @ H
    c = (G / (G - 1)) * ((n - 1) / (n - K))
    V = c * bread @ meat @ bread
    se = np.sqrt(np.maximum(np.diag(V), 0.0))

    tss = float(np.sum((y_t - y_t.mean()) ** 2))
    rss = float(np.sum(resid**2))
    r2 = 0.0 if tss <= 0 else 1.0 - rss / tss

    coeffs = dict(zip(kept_names, map(float, beta)))
    ses = dict(zip(kept_names, map(float, se)))
    tstats = {}
    pvals = {}
    for name in kept_names:
        if ses[name] > 0:
            t = coeffs[name] / ses[name]
            p = 2 * float(stats.t.sf(abs(t), G - 1))
        else:
            t, p = math.inf if coeffs[name] else 0.0, 0.0 if coeffs[name] else 1.0
        tstats[name] = t
        pvals[name] = p

    dropped = tuple(n0 for n0 in names if n0 not in kept_names and n0 != "const")
    return RegressionResult(
        spec_name=spec.name,
        coefficients=coeffs,
        clustered_se=ses,
        t_stats=tstats,
        p_values=pvals,
        r_squared=r2,
        n_obs=n,
        n_clusters=G,
        fe_absorbed=tuple(fe_dims),
        dropped=dropped,
        notes=tuple(notes),
    )


CONTROLS = ("log_tvl", "is_stablecoin")


def default_specification_suite() -> list[RegressionSpec]:
    """The declared estimating equations: headline tables of the analysis."""
    specs = [
        RegressionSpec("t4_baseline", "apy", ("tier", *CONTROLS), ("period",)),
        RegressionSpec(
            "t4_protocol_fe", "apy", ("tier", *CONTROLS), ("period", "protocol_type")
        ),
        RegressionSpec("t4_chain_fe", "apy", ("tier", *CONTROLS), ("period", "chain")),
        RegressionSpec(
            "t4_both_fe", "apy", ("tier", *CONTROLS), ("period", "protocol_type", "chain")
        ),
        RegressionSpec(
            "t4_tier_dummies",
            "apy",
            ("tier_1", "tier_2", "tier_3", *CONTROLS),
            ("period", "protocol_type", "chain"),
            target="tier_2",
        ),
    ]
    for dep, tag in (("apy", "orig"), ("apy_corrected", "corr")):
        specs.append(
            RegressionSpec(f"t5_tier_{tag}", dep, ("tier", *CONTROLS), ("period",))
        )
        specs.append(
            RegressionSpec(
                f"t5_tier_{tag}_fullfe",
                dep,
                ("tier", *CONTROLS),
                ("period", "protocol_type", "chain"),
            )
        )
        specs.append(
            RegressionSpec(
                f"t5_dist_{tag}", dep, ("graph_distance", *CONTROLS), ("period",)
            )
        )
        specs.append(
            RegressionSpec(
                f"t5_dist_{tag}_fullfe",
                dep,
                ("graph_distance", *CONTROLS),
                ("period", "protocol_type", "chain"),
            )
        )
        specs.append(
            RegressionSpec(
                f"t5_joint_{tag}",
                dep,
                ("tier", "graph_distance", *CONTROLS),
                ("period", "protocol_type", "chain"),
            )
        )
    for ptype in ("Lending", "DEX", "LiquidStaking", "YieldAggregator"):
        for var in ("graph_distance", "tier"):
            specs.append(
                RegressionSpec(
                    f"t6_{ptype.lower()}_{var}",
                    "apy",
                    (var, *CONTROLS),
                    ("period", "protocol_type", "chain"),
                    subset=("protocol_type", ptype),
                )
            )
    specs.extend(
        [
            RegressionSpec(
                "t11_dist_baseline", "apy", ("graph_distance", *CONTROLS), ("period",)
            ),
            RegressionSpec(
                "t11_dist_protocol_fe",
                "apy",
                ("graph_distance", *CONTROLS),
                ("period", "protocol_type"),
            ),
            RegressionSpec(
                "t11_dist_chain_fe",
                "apy",
                ("graph_distance", *CONTROLS),
                ("period", "chain"),
            ),
            RegressionSpec(
                "t11_dist_both_fe",
                "apy",
                ("graph_distance", *CONTROLS),
                ("period", "protocol_type", "chain"),
            ),
        ]
    )
    return specs


def run_specification_suite(
    panel,
    specs: list[RegressionSpec] | None = None,
) -> list[tuple[RegressionSpec, RegressionResult | None, str]]:
    """Fit every declared specification; skipped specs carry a diagnostic."""
    df = panel_frame(panel)
    out = []
    for spec in specs if specs is not None else default_specification_suite():
        missing = [
            c
            for c in (spec.dependent, *spec.regressors)
            if c not in df.columns or df[c].notna().sum() == 0
        ]
        if missing:
            out.append((spec, None, f"skipped: columns unavailable {missing}"))
            continue
        try:
            out.append((spec, fit_panel_ols(df, spec), ""))
        except DataError as exc:
            out.append((spec, None, f"skipped: {exc}"))
    return out


@dataclass(frozen=True)
class PlaceboResult:
    spec_name: str
    target: str
    observed_coef: float
    percentile: float
    one_sided_p: float
    n_perm: int
    n_failed: int
    direction: str
    quantiles: dict[str, float]
    perm_mean: float
    perm_sd: float


def permutation_placebo(
    panel,
    spec: RegressionSpec,
    n_perm: int,
    seed: int,
) -> PlaceboResult:
    """Randomization inference: permute the target labels across pools.

    All observations of a pool move together. The one-sided p-value is the
    share of permuted coefficients at least as extreme as the observed one,
    in the observed direction. Replicate r draws its sub-seed from
    (seed, r), so results are identical under any execution order.
    """
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    df = panel_frame(panel)
    target = spec.target_regressor
    observed = fit_panel_ols(df, spec)
    if target not in observed.coefficients:
        raise DataError(f"target regressor {target} absent from observed fit")
    obs = observed.coefficients[target]

    pools = sorted(df["pool_id"].unique())
    if len(pools) < 2:
        raise DataError("placebo requires at least 2 distinct pools")
    base_value = {p: df.loc[df["pool_id"] == p, target].iloc[0] for p in pools}
    values = np.array([base_value[p] for p in pools])

    draws = []
    failed = 0
    for r in range(n_perm):
        rng = np.random.default_rng([seed, r])
        shuffled = values[rng.permutation(len(pools))]
        remap = dict(zip(pools, shuffled))
        perm_df = df.assign(**{target: df["pool_id"].map(remap)})
        try:
            res = fit_panel_ols(perm_df, spec)
            draws.append(res.coefficients[target])
        except (DataError, KeyError):
            failed += 1
    if not draws:
        raise DataError("all permutation replicates failed")
    arr = np.array(draws)
    if obs < 0:
        p = float(np.mean(arr <= obs))
        direction = "negative"
    else:
        p = float(np.mean(arr >= obs))
        direction = "positive"
    qs = {
        f"q{int(q * 1000) / 10:g}": float(np.quantile(arr, q))
        for q in (0.01, 0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975, 0.99)
    }
    return PlaceboResult(
        spec_name=spec.name,
        target=target,
        observed_coef=float(obs),
        percentile=100.0 * float(np.mean(arr <= obs)),
        one_sided_p=p,
        n_perm=len(arr),
        n_failed=failed,
        direction=direction,
        quantiles=qs,
        perm_mean=float(arr.mean()),
        perm_sd=float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
    )


@dataclass(frozen=True)
class RollingPoint:
    period: str
    coef: float
    se: float
    ci_low: float
    ci_high: float
    n_obs: int


def rolling_coefficients(
    panel,
    spec: RegressionSpec,
    window: int,
) -> list[RollingPoint]:
    """Refit the spec on each trailing window of periods; 95% normal CIs.

    Windows whose fit fails leave a gap rather than aborting the series.
    Points are labeled by window end period.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    df = panel_frame(panel)
    periods = sorted(df["period"].unique())
    target = spec.target_regressor
    points = []
    for end in range(window - 1, len(periods)):
        span = set(periods[end - window + 1 : end + 1])
        sub = df[df["period"].isin(span)]
        try:
            res = fit_panel_ols(sub, spec)
            coef = res.coefficients[target]
            se = res.clustered_se[target]
        except (DataError, KeyError):
            continue
        points.append(
            RollingPoint(
                period=periods[end],
                coef=float(coef),
                se=float(se),
                ci_low=float(coef - 1.96 * se),
                ci_high=float(coef + 1.96 * se),
                n_obs=res.n_obs,
            )
        )
    return points


@dataclass(frozen=True)
class EventWindow:
    label: str
    start: str  # ISO date or YYYY-MM
    end: str

    def months(self) -> tuple[str, str]:
        return self.start[:7], self.end[:7]


def event_window_regressions(
    panel,
    windows: list[EventWindow],
    spec: RegressionSpec | None = None,
    include_time_fe: bool = True,
) -> list[tuple[EventWindow, RegressionResult | None, str]]:
    """Refit the baseline spec on each event window's subsample."""
    df = panel_frame(panel)
    base = spec or RegressionSpec("event", "apy", ("tier", *CONTROLS), ("period",))
    if not include_time_fe:
        base = replace(base, fe_dims=tuple(d for d in base.fe_dims if d != "period"))
    out = []
    for win in windows:
        lo, hi = win.months()
        sub = df[(df["period"] >= lo) & (df["period"] <= hi)]
        if not len(sub):
            out.append((win, None, "empty window"))
            continue
        try:
            res = fit_panel_ols(sub, replace(base, name=f"event_{win.label}"))
            out.append((win, res, ""))
        except DataError as exc:
            out.append((win, None, str(exc)))
    return out


@dataclass(frozen=True)
class CollinearityReport:
    pearson_tier_distance: float
    vif: dict[str, dict[str, float]]
    flags: tuple[str, ...]


def collinearity_report(panel) -> CollinearityReport:
    """Pearson r between tier and graph distance plus per-spec VIFs.

    VIF_j comes from the auxiliary regression of regressor j on the other
    regressors of the spec (with intercept). Zero-variance columns are
    flagged rather than reported with an unbounded value.
    """
    df = panel_frame(panel)
    both = df.dropna(subset=["tier", "graph_distance"])
    flags: list[str] = []
    if len(both) < 2:
        r = math.nan
        flags.append("insufficient rows with both tier and graph_distance")
    elif both["tier"].std() == 0 or both["graph_distance"].std() == 0:
        r = math.nan
        flags.append("zero-variance column in pearson computation")
    else:
        r = float(np.corrcoef(both["tier"], both["graph_distance"])[0, 1])

    model_sets = {
        "tier_single": ("tier", *CONTROLS),
        "distance_single": ("graph_distance", *CONTROLS),
        "joint": ("tier", "graph_distance", *CONTROLS),
    }
    vif: dict[str, dict[str, float]] = {}
    for model, cols in model_sets.items():
        cols = [c for c in cols if c in df.columns]
        sub = df.dropna(subset=cols)
        vif[model] = {}
        for j, col in enumerate(cols):
            yv = sub[col].to_numpy(float)
            if np.ptp(yv) < 1e-12 or len(sub) < len(cols) + 1:
                vif[model][col] = math.inf
                flags.append(f"{model}:{col} zero variance; VIF unbounded")
                continue
            others = [c for c in cols if c != col]
            Xa = np.column_stack(
                [np.ones(len(sub))] + [sub[c].to_numpy(float) for c in others]
            )
            beta, *_ = np.linalg.lstsq(Xa, yv, rcond=None)
            resid = yv - Xa @ beta
            tss = float(np.sum((yv - yv.mean()) ** 2))
            r2 = 0.0 if tss <= 0 else 1.0 - float(np.sum(resid**2)) / tss
            vif[model][col] = math.inf if r2 >= 1.0 else 1.0 / (1.0 - r2)
    return CollinearityReport(
        pearson_tier_distance=r, vif=vif, flags=tuple(flags)
    )
