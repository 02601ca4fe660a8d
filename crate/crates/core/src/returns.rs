//! Price panels, per-interval log returns and the portfolio-level statistics
//! built on top of them.
//!
//! A panel holds `N` aligned price series of `M + 1` observations. Returns are
//! taken over a stride of `τ` trading days starting from the first date, which
//! yields `floor(M / τ)` log returns per asset; any tail shorter than `τ` is
//! dropped.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum number of aligned observations accepted by the loader.
pub const MIN_OBSERVATIONS: usize = 30;

/// Tolerance on `Σ w_i = 1` for every weight vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Most negative eigenvalue still accepted as positive semi-definite.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ReturnsError {
    #[error("failed to read price file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed price file: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("price file has no asset columns")]
    NoAssets,
    #[error("non-positive price {value} for asset {asset} on {date}")]
    NonPositivePrice { asset: String, date: NaiveDate, value: f64 },
    #[error("date {0} appears more than once")]
    DuplicateDate(NaiveDate),
    #[error("no dates with a complete set of prices")]
    EmptyIntersection,
    #[error("need at least {required} aligned observations, got {actual}")]
    InsufficientObservations { required: usize, actual: usize },
    #[error("interval of {interval} days does not fit a series of {available} price steps")]
    IntervalTooLarge { interval: usize, available: usize },
    #[error("interval must be a positive number of days")]
    ZeroInterval,
    #[error("need at least {required} returns, got {actual}")]
    TooFewReturns { required: usize, actual: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("covariance matrix is not symmetric")]
    NotSymmetric,
    #[error("covariance matrix is not positive semi-definite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("Hurst exponent {value} of asset {index} is outside (0, 1)")]
    HurstOutOfRange { index: usize, value: f64 },
    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),
    #[error("invalid panel: {0}")]
    InvalidPanel(String),
}

pub type Result<T, E = ReturnsError> = std::result::Result<T, E>;

/// Aligned, dated price series for `N` assets.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetPanel {
    asset_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: Vec<Vec<f64>>,
}

impl AssetPanel {
    /// Builds a panel from one price row per asset. Rows must share the date
    /// axis, dates must be strictly increasing and every price positive.
    pub fn new(asset_ids: Vec<String>, dates: Vec<NaiveDate>, prices: Vec<Vec<f64>>) -> Result<Self> {
        if asset_ids.is_empty() {
            return Err(ReturnsError::NoAssets);
        }
        if prices.len() != asset_ids.len() {
            return Err(ReturnsError::DimensionMismatch {
                expected: asset_ids.len(),
                actual: prices.len(),
            });
        }
        if dates.len() < 3 {
            return Err(ReturnsError::InsufficientObservations {
                required: 3,
                actual: dates.len(),
            });
        }
        for pair in dates.windows(2) {
            if pair[1] <= pair[0] {
                return Err(ReturnsError::InvalidPanel(format!(
                    "dates not strictly increasing at {}",
                    pair[1]
                )));
            }
        }
        for (id, row) in asset_ids.iter().zip(&prices) {
            if row.len() != dates.len() {
                return Err(ReturnsError::DimensionMismatch {
                    expected: dates.len(),
                    actual: row.len(),
                });
            }
            if let Some((k, &value)) = row.iter().enumerate().find(|(_, p)| !(**p > 0.0 && p.is_finite())) {
                return Err(ReturnsError::NonPositivePrice {
                    asset: id.clone(),
                    date: dates[k],
                    value,
                });
            }
        }
        Ok(Self {
            asset_ids,
            dates,
            prices,
        })
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self, asset: usize) -> &[f64] {
        &self.prices[asset]
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    /// Number of observations, `M + 1`.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Inclusive date bounds applied after alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl DateRange {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.from.is_none_or(|f| date >= f) && self.to.is_none_or(|t| date <= t)
    }
}

/// Reads a `date,<asset>,...` CSV file into an aligned panel.
pub fn load_price_panel(path: &Path, date_range: Option<DateRange>) -> Result<AssetPanel> {
    let file = std::fs::File::open(path)?;
    parse_price_panel(file, date_range)
}

/// Same as [`load_price_panel`] for any reader.
///
/// Dates with a blank price in any column are dropped, never interpolated.
/// A price that is present but zero or negative is an error.
pub fn parse_price_panel<R: Read>(reader: R, date_range: Option<DateRange>) -> Result<AssetPanel> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = csv.headers()?.clone();
    if headers.len() < 2 {
        return Err(ReturnsError::NoAssets);
    }
    let asset_ids: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let n = asset_ids.len();

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let raw_date = record.get(0).unwrap_or("");
        if raw_date.is_empty() {
            continue;
        }
        let date = parse_date(raw_date).ok_or_else(|| ReturnsError::Parse {
            line,
            message: format!("invalid date '{raw_date}'"),
        })?;
        if record.len() > n + 1 {
            return Err(ReturnsError::Parse {
                line,
                message: format!("expected {} fields, found {}", n + 1, record.len()),
            });
        }

        let mut complete = true;
        let mut prices = Vec::with_capacity(n);
        for (j, id) in asset_ids.iter().enumerate() {
            let cell = record.get(j + 1).unwrap_or("");
            if cell.is_empty() {
                complete = false;
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| ReturnsError::Parse {
                line,
                message: format!("invalid price '{cell}' for {id}"),
            })?;
            if !(value > 0.0 && value.is_finite()) {
                return Err(ReturnsError::NonPositivePrice {
                    asset: id.clone(),
                    date,
                    value,
                });
            }
            prices.push(value);
        }
        if complete {
            rows.push((date, prices));
        }
    }

    rows.sort_by_key(|(d, _)| *d);
    if let Some(pair) = rows.windows(2).find(|p| p[0].0 == p[1].0) {
        return Err(ReturnsError::DuplicateDate(pair[0].0));
    }
    if let Some(range) = date_range {
        rows.retain(|(d, _)| range.contains(*d));
    }
    if rows.is_empty() {
        return Err(ReturnsError::EmptyIntersection);
    }
    if rows.len() < MIN_OBSERVATIONS {
        return Err(ReturnsError::InsufficientObservations {
            required: MIN_OBSERVATIONS,
            actual: rows.len(),
        });
    }

    let dates = rows.iter().map(|(d, _)| *d).collect();
    let prices = (0..n).map(|j| rows.iter().map(|(_, p)| p[j]).collect()).collect();
    AssetPanel::new(asset_ids, dates, prices)
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok().or_else(|| {
        raw.get(..10)
            .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
    })
}

/// `N × M` matrix of log returns over a fixed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    returns: DMatrix<f64>,
    interval_days: usize,
}

impl ReturnMatrix {
    pub fn new(returns: DMatrix<f64>, interval_days: usize) -> Result<Self> {
        if interval_days == 0 {
            return Err(ReturnsError::ZeroInterval);
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(ReturnsError::InvalidPanel("non-finite return".into()));
        }
        Ok(Self { returns, interval_days })
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn interval_days(&self) -> usize {
        self.interval_days
    }

    pub fn n_assets(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.returns.ncols()
    }

    pub fn asset_returns(&self, asset: usize) -> Vec<f64> {
        self.returns.row(asset).iter().copied().collect()
    }
}

/// Log returns sampled every `interval_days` observations from the first date.
pub fn compute_returns(panel: &AssetPanel, interval_days: usize) -> Result<ReturnMatrix> {
    if interval_days == 0 {
        return Err(ReturnsError::ZeroInterval);
    }
    let steps = panel.len() - 1;
    if interval_days > steps {
        return Err(ReturnsError::IntervalTooLarge {
            interval: interval_days,
            available: steps,
        });
    }
    let periods = steps / interval_days;
    let returns = DMatrix::from_fn(panel.n_assets(), periods, |i, k| {
        let p = panel.prices(i);
        (p[(k + 1) * interval_days] / p[k * interval_days]).ln()
    });
    ReturnMatrix::new(returns, interval_days)
}

/// Per-asset time mean of the returns.
pub fn mean_returns(rm: &ReturnMatrix) -> Result<DVector<f64>> {
    let m = rm.n_periods();
    if m == 0 {
        return Err(ReturnsError::TooFewReturns { required: 1, actual: 0 });
    }
    Ok(DVector::from_fn(rm.n_assets(), |i, _| {
        rm.returns.row(i).sum() / m as f64
    }))
}

/// Normalizer used by [`covariance_matrix`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    /// Divide by `M`.
    Population,
    /// Divide by `M - 1`.
    #[default]
    Sample,
}

impl FromStr for CovarianceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "population" => Ok(Self::Population),
            "sample" => Ok(Self::Sample),
            other => Err(format!(
                "unknown covariance mode '{other}' (expected sample|population)"
            )),
        }
    }
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Population => "population",
            Self::Sample => "sample",
        })
    }
}

/// Covariance of the return rows. Only the upper triangle is accumulated and
/// then mirrored, so the result is exactly symmetric.
pub fn covariance_matrix(rm: &ReturnMatrix, mode: CovarianceMode) -> Result<DMatrix<f64>> {
    let m = rm.n_periods();
    if m < 2 {
        return Err(ReturnsError::TooFewReturns { required: 2, actual: m });
    }
    let n = rm.n_assets();
    let means = mean_returns(rm)?;
    let centered = DMatrix::from_fn(n, m, |i, k| rm.returns[(i, k)] - means[i]);
    let norm = match mode {
        CovarianceMode::Population => m as f64,
        CovarianceMode::Sample => (m - 1) as f64,
    };
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s = centered.row(i).dot(&centered.row(j)) / norm;
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    Ok(cov)
}

/// Mean-return vector, covariance and Hurst vector for one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticsBundle {
    mean_returns: DVector<f64>,
    covariance: DMatrix<f64>,
    hurst: DVector<f64>,
    interval_days: usize,
}

impl StatisticsBundle {
    pub fn new(
        mean_returns: DVector<f64>,
        covariance: DMatrix<f64>,
        hurst: DVector<f64>,
        interval_days: usize,
    ) -> Result<Self> {
        let n = mean_returns.len();
        if n == 0 {
            return Err(ReturnsError::NoAssets);
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(ReturnsError::DimensionMismatch {
                expected: n,
                actual: covariance.nrows().max(covariance.ncols()),
            });
        }
        if hurst.len() != n {
            return Err(ReturnsError::DimensionMismatch {
                expected: n,
                actual: hurst.len(),
            });
        }
        if interval_days == 0 {
            return Err(ReturnsError::ZeroInterval);
        }
        if covariance != covariance.transpose() {
            return Err(ReturnsError::NotSymmetric);
        }
        let min_eig = SymmetricEigen::new(covariance.clone()).eigenvalues.min();
        if min_eig.is_nan() || min_eig < -PSD_TOLERANCE {
            return Err(ReturnsError::NotPositiveSemidefinite(min_eig));
        }
        if let Some((index, &value)) = hurst.iter().enumerate().find(|(_, h)| !(**h > 0.0 && **h < 1.0)) {
            return Err(ReturnsError::HurstOutOfRange { index, value });
        }
        Ok(Self {
            mean_returns,
            covariance,
            hurst,
            interval_days,
        })
    }

    pub fn mean_returns(&self) -> &DVector<f64> {
        &self.mean_returns
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn hurst(&self) -> &DVector<f64> {
        &self.hurst
    }

    pub fn interval_days(&self) -> usize {
        self.interval_days
    }

    pub fn n_assets(&self) -> usize {
        self.mean_returns.len()
    }

    /// Copy with a different return vector; the other fields are already valid.
    pub fn with_mean_returns(&self, mean_returns: DVector<f64>) -> Result<Self> {
        Self::new(
            mean_returns,
            self.covariance.clone(),
            self.hurst.clone(),
            self.interval_days,
        )
    }
}

/// A point on the probability simplex: non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(ReturnsError::InvalidWeights("empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(ReturnsError::InvalidWeights(format!(
                "entry {w} is negative or not finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(ReturnsError::InvalidWeights(format!("entries sum to {sum}")));
        }
        Ok(Self(weights))
    }

    /// Unit vector selecting a single asset.
    pub fn vertex(dimension: usize, asset: usize) -> Self {
        assert!(asset < dimension, "vertex index out of range");
        let mut w = vec![0.0; dimension];
        w[asset] = 1.0;
        Self(w)
    }

    pub fn equal(dimension: usize) -> Self {
        assert!(dimension > 0, "empty weight vector");
        Self(vec![1.0 / dimension as f64; dimension])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = ReturnsError;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, w) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            match f.precision() {
                Some(p) => write!(f, "{w:.p$}")?,
                None => write!(f, "{w}")?,
            }
        }
        write!(f, ")")
    }
}

fn check_dimension(w: &WeightVector, stats: &StatisticsBundle) -> Result<()> {
    if w.len() != stats.n_assets() {
        return Err(ReturnsError::DimensionMismatch {
            expected: stats.n_assets(),
            actual: w.len(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `wᵀR`.
pub fn portfolio_return(w: &WeightVector, stats: &StatisticsBundle) -> Result<f64> {
    check_dimension(w, stats)?;
    Ok(dot(w.as_slice(), &stats.mean_returns))
}

/// `wᵀCw`, clamped at zero when rounding pushes it slightly negative.
pub fn portfolio_variance(w: &WeightVector, stats: &StatisticsBundle) -> Result<f64> {
    check_dimension(w, stats)?;
    Ok(quadratic_form(w.as_slice(), &stats.covariance))
}

pub(crate) fn quadratic_form(w: &[f64], c: &DMatrix<f64>) -> f64 {
    let n = w.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += c[(i, j)] * w[j];
        }
        acc += w[i] * row;
    }
    if (-1e-12..0.0).contains(&acc) {
        0.0
    } else {
        acc
    }
}

/// `wᵀH`: the weighted mean of the asset Hurst exponents, not the Hurst
/// exponent of the mixed return series.
pub fn portfolio_hurst(w: &WeightVector, stats: &StatisticsBundle) -> Result<f64> {
    check_dimension(w, stats)?;
    Ok(dot(w.as_slice(), &stats.hurst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn csv_with_rows(header: &str, rows: &[String]) -> String {
        let mut s = String::from(header);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn dated_rows(n: usize, f: impl Fn(usize) -> String) -> Vec<String> {
        let start = date("2020-01-01");
        (0..n)
            .map(|k| format!("{},{}", start + chrono::Duration::days(k as i64), f(k)))
            .collect()
    }

    fn panel_1d(prices: Vec<f64>) -> AssetPanel {
        let start = date("2020-01-01");
        let dates = (0..prices.len())
            .map(|k| start + chrono::Duration::days(k as i64))
            .collect();
        AssetPanel::new(vec!["A".into()], dates, vec![prices]).unwrap()
    }

    fn bundle(r: &[f64], c: DMatrix<f64>, h: &[f64]) -> StatisticsBundle {
        StatisticsBundle::new(DVector::from_column_slice(r), c, DVector::from_column_slice(h), 1).unwrap()
    }

    #[test]
    fn loads_three_column_file() {
        let rows = dated_rows(40, |k| format!("{},{},{}", 10.0 + k as f64, 20.0, 30.5));
        let panel = parse_price_panel(csv_with_rows("date,A,B,C", &rows).as_bytes(), None).unwrap();
        assert_eq!(panel.n_assets(), 3);
        assert_eq!(panel.len(), 40);
        assert_eq!(panel.asset_ids(), ["A", "B", "C"]);
    }

    #[test]
    fn missing_cell_drops_that_date() {
        let rows = dated_rows(40, |k| {
            if k == 7 {
                "1.0,,2.0".into()
            } else {
                "1.0,1.5,2.0".into()
            }
        });
        let panel = parse_price_panel(csv_with_rows("date,A,B,C", &rows).as_bytes(), None).unwrap();
        assert_eq!(panel.len(), 39);
        assert!(!panel
            .dates()
            .contains(&(date("2020-01-01") + chrono::Duration::days(7))));
    }

    #[test]
    fn zero_price_is_rejected() {
        let rows = dated_rows(40, |k| if k == 3 { "0,1".into() } else { "1,1".into() });
        let err = parse_price_panel(csv_with_rows("date,A,B", &rows).as_bytes(), None).unwrap_err();
        assert!(matches!(err, ReturnsError::NonPositivePrice { ref asset, .. } if asset == "A"));
        assert!(err.to_string().contains("non-positive price"));
    }

    #[test]
    fn rows_are_sorted_and_filtered() {
        let mut rows = dated_rows(60, |k| format!("{}", 1.0 + k as f64));
        rows.reverse();
        let range = DateRange {
            from: Some(date("2020-01-11")),
            to: Some(date("2020-02-19")),
        };
        let panel = parse_price_panel(csv_with_rows("date,A", &rows).as_bytes(), Some(range)).unwrap();
        assert_eq!(panel.dates().first(), Some(&date("2020-01-11")));
        assert_eq!(panel.dates().last(), Some(&date("2020-02-19")));
        assert_eq!(panel.len(), 40);
        assert!(panel.prices(0).windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn empty_intersection_and_short_files() {
        let rows = dated_rows(40, |_| "1,".into());
        let err = parse_price_panel(csv_with_rows("date,A,B", &rows).as_bytes(), None).unwrap_err();
        assert!(matches!(err, ReturnsError::EmptyIntersection));

        let rows = dated_rows(10, |_| "1,2".into());
        let err = parse_price_panel(csv_with_rows("date,A,B", &rows).as_bytes(), None).unwrap_err();
        assert!(matches!(
            err,
            ReturnsError::InsufficientObservations {
                required: 30,
                actual: 10
            }
        ));
    }

    #[test]
    fn malformed_input_reports_parse_errors() {
        let rows = dated_rows(40, |k| if k == 5 { "abc".into() } else { "1".into() });
        let err = parse_price_panel(csv_with_rows("date,A", &rows).as_bytes(), None).unwrap_err();
        assert!(matches!(err, ReturnsError::Parse { .. }));

        let mut rows = dated_rows(40, |_| "1".into());
        rows[2] = "not-a-date,1".into();
        let err = parse_price_panel(csv_with_rows("date,A", &rows).as_bytes(), None).unwrap_err();
        assert!(matches!(err, ReturnsError::Parse { .. }));

        let mut rows = dated_rows(40, |_| "1".into());
        rows[3] = rows[2].clone();
        let err = parse_price_panel(csv_with_rows("date,A", &rows).as_bytes(), None).unwrap_err();
        assert!(matches!(err, ReturnsError::DuplicateDate(_)));
    }

    #[test]
    fn single_step_log_return() {
        let rm = compute_returns(&panel_1d(vec![100.0, 110.0, 121.0]), 1).unwrap();
        assert_abs_diff_eq!(rm.returns()[(0, 0)], 1.1f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(rm.returns()[(0, 0)], 0.09531, epsilon = 1e-5);
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let rm = compute_returns(&panel_1d(vec![42.0; 12]), 1).unwrap();
        assert!(rm.returns().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn strided_returns() {
        // 100 -> 110 -> 121 sampled every two steps from (100, 105, 110, 121, x).
        let rm = compute_returns(&panel_1d(vec![100.0, 105.0, 110.0, 115.5, 121.0]), 2).unwrap();
        assert_eq!(rm.n_periods(), 2);
        assert_abs_diff_eq!(rm.returns()[(0, 0)], 1.1f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(rm.returns()[(0, 1)], 1.1f64.ln(), epsilon = 1e-15);

        // (100,105,110,121) has M = 3 steps: τ = 2 keeps one return, tail dropped.
        let rm = compute_returns(&panel_1d(vec![100.0, 105.0, 110.0, 121.0]), 2).unwrap();
        assert_eq!(rm.n_periods(), 1);
        assert_abs_diff_eq!(rm.returns()[(0, 0)], 1.1f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn interval_larger_than_series() {
        let err = compute_returns(&panel_1d(vec![1.0, 2.0, 3.0]), 3).unwrap_err();
        assert!(matches!(
            err,
            ReturnsError::IntervalTooLarge {
                interval: 3,
                available: 2
            }
        ));
        assert!(matches!(
            compute_returns(&panel_1d(vec![1.0, 2.0, 3.0]), 0),
            Err(ReturnsError::ZeroInterval)
        ));
    }

    #[test]
    fn means() {
        let rm = ReturnMatrix::new(DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, 0.0, 0.0, 0.0]), 1).unwrap();
        let r = mean_returns(&rm).unwrap();
        assert_abs_diff_eq!(r[0], 0.2, epsilon = 1e-15);
        assert_eq!(r[1], 0.0);

        let rm = ReturnMatrix::new(DMatrix::from_row_slice(1, 2, &[0.01, -0.03]), 1).unwrap();
        assert_abs_diff_eq!(mean_returns(&rm).unwrap()[0], -0.01, epsilon = 1e-15);
    }

    #[test]
    fn covariance_examples() {
        let x = [0.01, -0.02, 0.03, 0.005];
        let rm = ReturnMatrix::new(DMatrix::from_fn(2, 4, |_, k| x[k]), 1).unwrap();
        let c = covariance_matrix(&rm, CovarianceMode::Sample).unwrap();
        assert!(c.iter().all(|v| (v - c[(0, 0)]).abs() < 1e-18));

        let rm = ReturnMatrix::new(DMatrix::from_fn(2, 4, |i, k| if i == 0 { x[k] } else { -x[k] }), 1).unwrap();
        let c = covariance_matrix(&rm, CovarianceMode::Sample).unwrap();
        assert_abs_diff_eq!(c[(0, 1)], -c[(0, 0)], epsilon = 1e-18);

        let rm = ReturnMatrix::new(DMatrix::from_row_slice(2, 2, &[0.1, -0.1, 0.2, -0.2]), 1).unwrap();
        let c = covariance_matrix(&rm, CovarianceMode::Sample).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.02, 0.04, 0.04, 0.08]);
        assert!((c - expected).amax() < 1e-15);

        let c = covariance_matrix(&rm, CovarianceMode::Population).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.01, 0.02, 0.02, 0.04]);
        assert!((c - expected).amax() < 1e-15);
    }

    #[test]
    fn covariance_needs_two_periods() {
        let rm = ReturnMatrix::new(DMatrix::from_row_slice(1, 1, &[0.1]), 1).unwrap();
        assert!(matches!(
            covariance_matrix(&rm, CovarianceMode::Sample),
            Err(ReturnsError::TooFewReturns { required: 2, actual: 1 })
        ));
    }

    #[test]
    fn portfolio_scalars() {
        let s = bundle(&[0.1, 0.2, 0.3], DMatrix::identity(3, 3), &[0.4, 0.5, 0.6]);
        for i in 0..3 {
            let e = WeightVector::vertex(3, i);
            assert_eq!(portfolio_return(&e, &s).unwrap(), s.mean_returns()[i]);
            assert_eq!(portfolio_variance(&e, &s).unwrap(), 1.0);
            assert_eq!(portfolio_hurst(&e, &s).unwrap(), s.hurst()[i]);
        }
        assert_abs_diff_eq!(
            portfolio_return(&WeightVector::equal(3), &s).unwrap(),
            0.2,
            epsilon = 1e-15
        );

        let s = bundle(&[0.1, 0.2], DMatrix::identity(2, 2), &[0.5, 0.7]);
        let w = WeightVector::new(vec![0.4, 0.6]).unwrap();
        assert_abs_diff_eq!(portfolio_return(&w, &s).unwrap(), 0.16, epsilon = 1e-15);
        assert_abs_diff_eq!(
            portfolio_variance(&WeightVector::equal(2), &s).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            portfolio_hurst(&WeightVector::equal(2), &s).unwrap(),
            0.6,
            epsilon = 1e-15
        );

        let s = bundle(
            &[0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[0.02, 0.04, 0.04, 0.08]),
            &[0.4, 0.6],
        );
        assert_abs_diff_eq!(
            portfolio_variance(&WeightVector::equal(2), &s).unwrap(),
            0.045,
            epsilon = 1e-15
        );
        let w = WeightVector::new(vec![0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(portfolio_hurst(&w, &s).unwrap(), 0.55, epsilon = 1e-15);

        let err = portfolio_return(&WeightVector::equal(3), &s).unwrap_err();
        assert!(matches!(
            err,
            ReturnsError::DimensionMismatch { expected: 2, actual: 3 }
        ));
    }

    #[test]
    fn weight_vector_invariants() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.5 + 5e-10]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.1, -0.1]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
        let json = serde_json::to_string(&WeightVector::equal(2)).unwrap();
        assert_eq!(json, "[0.5,0.5]");
        assert!(serde_json::from_str::<WeightVector>("[0.7,0.7]").is_err());
    }

    #[test]
    fn bundle_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            StatisticsBundle::new(DVector::zeros(2), bad, DVector::from_element(2, 0.5), 1),
            Err(ReturnsError::NotSymmetric)
        ));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            StatisticsBundle::new(DVector::zeros(2), indefinite, DVector::from_element(2, 0.5), 1),
            Err(ReturnsError::NotPositiveSemidefinite(_))
        ));
        assert!(matches!(
            StatisticsBundle::new(
                DVector::zeros(2),
                DMatrix::identity(2, 2),
                DVector::from_column_slice(&[0.5, 1.0]),
                1
            ),
            Err(ReturnsError::HurstOutOfRange { index: 1, .. })
        ));
    }

    fn simplex_point(raw: &[f64]) -> WeightVector {
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let head: f64 = w[..w.len() - 1].iter().sum();
        *w.last_mut().unwrap() = (1.0 - head).max(0.0);
        WeightVector::new(w).unwrap()
    }

    proptest! {
        #[test]
        fn resampling_count(m in 2usize..200, tau in 1usize..12) {
            prop_assume!(tau <= m);
            let prices: Vec<f64> = (0..=m).map(|k| 100.0 + (k as f64).sin()).collect();
            let rm = compute_returns(&panel_1d(prices), tau).unwrap();
            prop_assert_eq!(rm.n_periods(), m / tau);
        }

        #[test]
        fn estimated_covariance_is_symmetric_psd(
            data in proptest::collection::vec(-0.05f64..0.05, 4 * 25),
            raws in proptest::collection::vec(proptest::collection::vec(0.001f64..1.0, 4), 1000),
        ) {
            let rm = ReturnMatrix::new(DMatrix::from_row_slice(4, 25, &data), 1).unwrap();
            let c = covariance_matrix(&rm, CovarianceMode::Sample).unwrap();
            prop_assert_eq!((&c - c.transpose()).amax(), 0.0);
            for raw in &raws {
                let w = simplex_point(raw);
                prop_assert!(quadratic_form(w.as_slice(), &c) >= -1e-10);
            }
        }

        #[test]
        fn portfolio_return_is_linear(
            r in proptest::collection::vec(-0.1f64..0.1, 3),
            a in proptest::collection::vec(0.01f64..1.0, 3),
            b in proptest::collection::vec(0.01f64..1.0, 3),
            alpha in 0.0f64..=1.0,
        ) {
            let s = bundle(&r, DMatrix::identity(3, 3), &[0.5, 0.5, 0.5]);
            let (w1, w2) = (simplex_point(&a), simplex_point(&b));
            let mix: Vec<f64> = w1.as_slice().iter().zip(w2.as_slice()).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
            let mixed = portfolio_return(&WeightVector::new(mix).unwrap(), &s).unwrap();
            let expected = alpha * portfolio_return(&w1, &s).unwrap() + (1.0 - alpha) * portfolio_return(&w2, &s).unwrap();
            prop_assert!((mixed - expected).abs() <= 1e-12);
        }
    }
}
