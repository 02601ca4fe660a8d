//! End-to-end pipeline: prices → statistics → DFA → local optima → global
//! optima and Pareto weight, for every sampling interval, then averages.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dfa::{estimate_hurst, DfaConfig, DfaError, DfaResult};
use crate::pareto::{pareto_weight_with, ParetoSolution};
use crate::returns::{
    compute_returns, covariance_matrix, mean_returns, parse_price_panel, portfolio_hurst, portfolio_return,
    portfolio_variance, AssetPanel, CovarianceMode, DateRange, ReturnsError, StatisticsBundle, WeightVector,
};
use crate::simplex::{
    average_local_weights, effective_subspace_membership, global_optimum, grid_pareto_maximizer, local_optima,
    mean_and_spread, AveragedTriangle, GlobalOptimum, HeronMode, OptimalTriangle, SimplexError, SimplexGrid,
    DEFAULT_POINT_CEILING,
};

/// Smallest accepted grid resolution.
pub const MIN_GRID_RESOLUTION: u32 = 10;

/// Tolerance for effective-subspace membership tests.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    pub date_range: Option<DateRange>,
    pub intervals: Vec<usize>,
    pub grid_resolution: u32,
    pub dfa: DfaConfig,
    pub covariance_mode: CovarianceMode,
    pub risk_aversion: f64,
    pub heron_mode: HeronMode,
    /// Keep every k-th grid point in the investing-space file.
    pub investing_space_stride: usize,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            date_range: None,
            intervals: (1..=10).collect(),
            grid_resolution: 100,
            dfa: DfaConfig::default(),
            covariance_mode: CovarianceMode::default(),
            risk_aversion: 1.0,
            heron_mode: HeronMode::default(),
            investing_space_stride: 1,
            output_dir: PathBuf::from("report"),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AnalysisError::Config(m));
        if self.intervals.is_empty() {
            return bad("at least one interval is required".into());
        }
        if let Some(t) = self.intervals.iter().find(|t| **t == 0) {
            return bad(format!("interval {t} must be at least 1 day"));
        }
        let mut sorted = self.intervals.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.intervals.len() {
            return bad("intervals must not repeat".into());
        }
        if self.grid_resolution < MIN_GRID_RESOLUTION {
            return bad(format!(
                "grid resolution {} is below the minimum of {MIN_GRID_RESOLUTION}",
                self.grid_resolution
            ));
        }
        if !(self.risk_aversion > 0.0 && self.risk_aversion.is_finite()) {
            return bad(format!("risk aversion must be positive, got {}", self.risk_aversion));
        }
        if self.investing_space_stride == 0 {
            return bad("investing-space stride must be at least 1".into());
        }
        if self.dfa.poly_order == 0 {
            return bad("DFA polynomial order must be at least 1".into());
        }
        Ok(())
    }
}

/// Errors tagged with the pipeline stage that raised them.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("[config] {0}")]
    Config(String),
    #[error("[ingest] {0}")]
    Ingest(#[source] ReturnsError),
    #[error("[statistics] τ = {interval}: {source}")]
    Statistics {
        interval: usize,
        #[source]
        source: ReturnsError,
    },
    #[error("[dfa] τ = {interval}, asset '{asset}': {source}")]
    Dfa {
        interval: usize,
        asset: String,
        #[source]
        source: DfaError,
    },
    #[error("[simplex] {context}: {source}")]
    Simplex {
        context: String,
        #[source]
        source: SimplexError,
    },
    #[error("[output] {context}: {source}")]
    Output {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl AnalysisError {
    pub fn stage(&self) -> &'static str {
        match self {
            AnalysisError::Config(_) => "config",
            AnalysisError::Ingest(_) => "ingest",
            AnalysisError::Statistics { .. } => "statistics",
            AnalysisError::Dfa { .. } => "dfa",
            AnalysisError::Simplex { .. } => "simplex",
            AnalysisError::Output { .. } => "output",
        }
    }
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

/// How a reported weight was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Exhaustive lattice search.
    Grid,
    /// Closed-form geometry or KKT solution.
    Analytic,
    /// Lattice search standing in for an infeasible closed form.
    Numerical,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Grid => "grid",
            Method::Analytic => "analytic",
            Method::Numerical => "numerical",
        })
    }
}

/// A weight with its daily-equivalent mean return and volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub label: String,
    pub method: Method,
    pub weight: WeightVector,
    /// `wᵀR / τ`.
    pub daily_mean_return: f64,
    /// `sqrt(wᵀCw)` at the sampling interval.
    pub volatility: f64,
    pub mean_hurst: f64,
}

impl WeightRow {
    pub fn evaluate(label: &str, method: Method, weight: WeightVector, stats: &StatisticsBundle) -> Self {
        let tau = stats.interval_days() as f64;
        let ret = portfolio_return(&weight, stats).expect("dimensions checked upstream");
        let var = portfolio_variance(&weight, stats).expect("dimensions checked upstream");
        let hurst = portfolio_hurst(&weight, stats).expect("dimensions checked upstream");
        Self {
            label: label.to_string(),
            method,
            weight,
            daily_mean_return: ret / tau,
            volatility: var.max(0.0).sqrt(),
            mean_hurst: hurst,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticsSummary {
    pub mean_returns: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub hurst: Vec<f64>,
}

impl StatisticsSummary {
    fn from_bundle(stats: &StatisticsBundle) -> Self {
        let c = stats.covariance();
        Self {
            mean_returns: stats.mean_returns().iter().copied().collect(),
            covariance: (0..c.nrows()).map(|i| c.row(i).iter().copied().collect()).collect(),
            hurst: stats.hurst().iter().copied().collect(),
        }
    }

    /// Rebuilds the bundle this summary was taken from.
    pub fn to_bundle(&self, interval_days: usize) -> Result<StatisticsBundle, ReturnsError> {
        let n = self.mean_returns.len();
        let cov = nalgebra::DMatrix::from_fn(n, n, |i, j| self.covariance[i][j]);
        StatisticsBundle::new(
            nalgebra::DVector::from_vec(self.mean_returns.clone()),
            cov,
            nalgebra::DVector::from_vec(self.hurst.clone()),
            interval_days,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetDfa {
    pub asset: String,
    pub result: DfaResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoOutcome {
    /// `None` when neither the closed form nor the lattice yields a weight.
    pub method: Option<Method>,
    /// The closed-form solution, including infeasible ones.
    pub solution: Option<ParetoSolution>,
    pub row: Option<WeightRow>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBlock {
    pub interval_days: usize,
    pub periods: usize,
    pub statistics: StatisticsSummary,
    pub dfa: Vec<AssetDfa>,
    pub grid_resolution: u32,
    pub triangle: OptimalTriangle,
    pub global: GlobalOptimum,
    /// Rows for `w_R`, `w_sigma`, `w_H`.
    pub local_rows: Vec<WeightRow>,
    /// Rows for centroid, incenter (when defined) and Fermat point.
    pub global_rows: Vec<WeightRow>,
    pub pareto: ParetoOutcome,
}

impl IntervalBlock {
    pub fn bundle(&self) -> Result<StatisticsBundle, ReturnsError> {
        self.statistics.to_bundle(self.interval_days)
    }

    /// Local rows, global rows and the Pareto row, in table order.
    pub fn all_rows(&self) -> impl Iterator<Item = &WeightRow> {
        self.local_rows
            .iter()
            .chain(&self.global_rows)
            .chain(self.pareto.row.as_ref())
    }
}

/// Mean of one labelled row across intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRow {
    pub label: String,
    /// Intervals contributing to the average.
    pub intervals: Vec<usize>,
    pub weight: WeightVector,
    pub weight_std_dev: Vec<f64>,
    pub weight_std_err: Vec<f64>,
    /// Mean of the per-interval daily mean returns.
    pub daily_mean_return: f64,
    pub daily_mean_return_std_dev: f64,
    pub daily_mean_return_std_err: f64,
    /// Whether the averaged weight lies in every interval's triangle; `None`
    /// when some triangle is degenerate.
    pub in_effective_subspace: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedBlock {
    pub intervals: Vec<usize>,
    pub triangle: AveragedTriangle,
    pub local_rows: Vec<AveragedRow>,
    pub global_rows: Vec<AveragedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config: AnalysisConfig,
    /// SHA-256 of the input file bytes.
    pub data_sha256: String,
    pub observations: usize,
    pub first_date: String,
    pub last_date: String,
    pub return_units: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub assets: Vec<String>,
    pub blocks: Vec<IntervalBlock>,
    pub averaged: Option<AveragedBlock>,
    pub provenance: Provenance,
}

pub const LOCAL_LABELS: [&str; 3] = ["w_R", "w_sigma", "w_H"];
pub const PARETO_LABEL: &str = "pareto";

/// Loads the configured input and runs the full analysis.
pub fn run_analysis(config: &AnalysisConfig) -> Result<AnalysisReport> {
    config.validate()?;
    let bytes = std::fs::read(&config.input).map_err(|e| AnalysisError::Ingest(ReturnsError::Io(e)))?;
    let panel = parse_price_panel(bytes.as_slice(), config.date_range).map_err(AnalysisError::Ingest)?;
    analyze_panel(&panel, config, &hex::encode(Sha256::digest(&bytes)))
}

/// Runs the analysis on an already loaded panel.
pub fn analyze_panel(panel: &AssetPanel, config: &AnalysisConfig, fingerprint: &str) -> Result<AnalysisReport> {
    config.validate()?;
    let mut notes = vec![
        "daily mean return is the per-interval mean return divided by the interval in days".to_string(),
        "volatility is the standard deviation of the per-interval return".to_string(),
    ];

    let (grid, grid_note) = fit_grid(panel.n_assets(), config.grid_resolution)?;
    notes.extend(grid_note);

    let blocks: Vec<IntervalBlock> = config
        .intervals
        .par_iter()
        .map(|&tau| interval_block(panel, config, &grid, tau))
        .collect::<Result<_>>()?;

    let averaged = (blocks.len() > 1).then(|| averaged_block(&blocks)).transpose()?;

    let dates = panel.dates();
    Ok(AnalysisReport {
        assets: panel.asset_ids().to_vec(),
        blocks,
        averaged,
        provenance: Provenance {
            tool: "triplet".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            data_sha256: fingerprint.to_string(),
            observations: panel.len(),
            first_date: dates.first().map(|d| d.to_string()).unwrap_or_default(),
            last_date: dates.last().map(|d| d.to_string()).unwrap_or_default(),
            return_units: "log return".into(),
            notes,
        },
    })
}

/// Largest resolution not above the requested one whose grid fits the
/// point ceiling.
fn fit_grid(n: usize, requested: u32) -> Result<(SimplexGrid, Option<String>)> {
    let mut q = requested;
    loop {
        match SimplexGrid::with_ceiling(n, q, DEFAULT_POINT_CEILING) {
            Ok(grid) => {
                let note = (q != requested).then(|| {
                    format!(
                        "grid resolution reduced from {requested} to {q} to stay within {DEFAULT_POINT_CEILING} points"
                    )
                });
                return Ok((grid, note));
            }
            Err(SimplexError::GridTooLarge { .. }) if q > 1 => q -= 1,
            Err(source) => {
                return Err(AnalysisError::Simplex {
                    context: "grid".into(),
                    source,
                })
            }
        }
    }
}

fn interval_block(
    panel: &AssetPanel,
    config: &AnalysisConfig,
    grid: &SimplexGrid,
    tau: usize,
) -> Result<IntervalBlock> {
    let stat_err = |source| AnalysisError::Statistics { interval: tau, source };
    let rm = compute_returns(panel, tau).map_err(stat_err)?;
    let mean = mean_returns(&rm).map_err(stat_err)?;
    let cov = covariance_matrix(&rm, config.covariance_mode).map_err(stat_err)?;

    let dfa: Vec<AssetDfa> = panel
        .asset_ids()
        .iter()
        .enumerate()
        .map(|(i, asset)| {
            estimate_hurst(&rm.asset_returns(i), &config.dfa)
                .map(|result| AssetDfa {
                    asset: asset.clone(),
                    result,
                })
                .map_err(|source| AnalysisError::Dfa {
                    interval: tau,
                    asset: asset.clone(),
                    source,
                })
        })
        .collect::<Result<_>>()?;
    let hurst = nalgebra::DVector::from_iterator(dfa.len(), dfa.iter().map(|d| d.result.hurst));
    let stats = StatisticsBundle::new(mean, cov, hurst, tau).map_err(stat_err)?;

    let simplex_err = |source| AnalysisError::Simplex {
        context: format!("τ = {tau}"),
        source,
    };
    let triangle = local_optima(&stats, grid).map_err(simplex_err)?;
    let global = global_optimum(&triangle, grid, config.heron_mode).map_err(simplex_err)?;

    let local_rows = LOCAL_LABELS
        .iter()
        .zip(triangle.vertices())
        .map(|(label, w)| WeightRow::evaluate(label, Method::Grid, w.clone(), &stats))
        .collect();
    let mut global_rows = vec![WeightRow::evaluate(
        "centroid",
        Method::Analytic,
        global.centroid.clone(),
        &stats,
    )];
    if let Some(ic) = &global.incenter {
        global_rows.push(WeightRow::evaluate("incenter", Method::Analytic, ic.clone(), &stats));
    }
    global_rows.push(WeightRow::evaluate(
        "fermat",
        Method::Grid,
        global.fermat.clone(),
        &stats,
    ));

    let pareto = pareto_outcome(&stats, grid, config.risk_aversion).map_err(simplex_err)?;

    Ok(IntervalBlock {
        interval_days: tau,
        periods: rm.n_periods(),
        statistics: StatisticsSummary::from_bundle(&stats),
        dfa,
        grid_resolution: grid.resolution(),
        triangle,
        global,
        local_rows,
        global_rows,
        pareto,
    })
}

fn pareto_outcome(stats: &StatisticsBundle, grid: &SimplexGrid, gamma: f64) -> Result<ParetoOutcome, SimplexError> {
    let mut notes = Vec::new();
    let solution = match pareto_weight_with(stats, gamma) {
        Ok(sol) => Some(sol),
        Err(e) => {
            notes.push(format!("closed form unavailable: {e}"));
            None
        }
    };
    if let Some(sol) = &solution {
        if !sol.kkt_residuals.is_satisfied() {
            notes.push(format!(
                "closed form misses the KKT tolerance (largest residual {:e})",
                sol.kkt_residuals.max_residual()
            ));
        }
        if sol.feasible_on_simplex {
            if let Ok(w) = WeightVector::new(sol.weight.clone()) {
                let row = WeightRow::evaluate(PARETO_LABEL, Method::Analytic, w, stats);
                return Ok(ParetoOutcome {
                    method: Some(Method::Analytic),
                    solution,
                    row: Some(row),
                    notes,
                });
            }
        }
        notes.push("closed form has negative weights; using the lattice maximizer".into());
    }
    match grid_pareto_maximizer(stats, grid, gamma)? {
        Some((w, _)) => Ok(ParetoOutcome {
            method: Some(Method::Numerical),
            solution,
            row: Some(WeightRow::evaluate(PARETO_LABEL, Method::Numerical, w, stats)),
            notes,
        }),
        None => {
            notes.push("no lattice point satisfies the Hurst constraint".into());
            Ok(ParetoOutcome {
                method: None,
                solution,
                row: None,
                notes,
            })
        }
    }
}

fn spread(values: &[f64]) -> (f64, f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    };
    (mean, sd, sd / k.sqrt())
}

fn average_rows(blocks: &[IntervalBlock], label: &str, triangles: &[OptimalTriangle]) -> Result<Option<AveragedRow>> {
    let picked: Vec<(usize, &WeightRow)> = blocks
        .iter()
        .filter_map(|b| b.all_rows().find(|r| r.label == label).map(|r| (b.interval_days, r)))
        .collect();
    if picked.is_empty() {
        return Ok(None);
    }
    let err = |source| AnalysisError::Simplex {
        context: format!("averaging {label}"),
        source,
    };
    let weights: Vec<&WeightVector> = picked.iter().map(|(_, r)| &r.weight).collect();
    let (weight, weight_std_dev) = mean_and_spread(&weights).map_err(err)?;
    let root = (picked.len() as f64).sqrt();
    let dmr: Vec<f64> = picked.iter().map(|(_, r)| r.daily_mean_return).collect();
    let (daily_mean_return, daily_mean_return_std_dev, daily_mean_return_std_err) = spread(&dmr);
    let in_effective_subspace = effective_subspace_membership(&weight, triangles, MEMBERSHIP_TOLERANCE).ok();
    Ok(Some(AveragedRow {
        label: label.to_string(),
        intervals: picked.iter().map(|(t, _)| *t).collect(),
        weight_std_err: weight_std_dev.iter().map(|s| s / root).collect(),
        weight,
        weight_std_dev,
        daily_mean_return,
        daily_mean_return_std_dev,
        daily_mean_return_std_err,
        in_effective_subspace,
    }))
}

fn averaged_block(blocks: &[IntervalBlock]) -> Result<AveragedBlock> {
    let triangles: Vec<OptimalTriangle> = blocks.iter().map(|b| b.triangle.clone()).collect();
    let triangle = average_local_weights(&triangles).map_err(|source| AnalysisError::Simplex {
        context: "averaging".into(),
        source,
    })?;
    let collect = |labels: &[&str]| -> Result<Vec<AveragedRow>> {
        let mut rows = Vec::new();
        for label in labels {
            rows.extend(average_rows(blocks, label, &triangles)?);
        }
        Ok(rows)
    };
    Ok(AveragedBlock {
        intervals: blocks.iter().map(|b| b.interval_days).collect(),
        triangle,
        local_rows: collect(&LOCAL_LABELS)?,
        global_rows: collect(&["centroid", "incenter", "fermat", PARETO_LABEL])?,
    })
}
