//! Synthetic price panels driven by fractional Gaussian noise.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, Weekday};

use crate::dfa::{generate_fbm_increments, DfaError};
use crate::returns::{AssetPanel, ReturnsError};

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error(transparent)]
    Noise(#[from] DfaError),
    #[error(transparent)]
    Panel(#[from] ReturnsError),
    #[error("failed to write panel: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
}

/// One simulated asset: log price increments `drift + volatility·x_t`, with
/// `x` unit-variance fGn of the given Hurst exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticAsset {
    pub name: String,
    pub hurst: f64,
    pub drift: f64,
    pub volatility: f64,
}

impl SyntheticAsset {
    pub fn new(name: &str, hurst: f64, drift: f64, volatility: f64) -> Self {
        Self {
            name: name.to_string(),
            hurst,
            drift,
            volatility,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub assets: Vec<SyntheticAsset>,
    /// Number of business days, including the first price.
    pub length: usize,
    pub start: NaiveDate,
    pub initial_price: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            assets: vec![
                SyntheticAsset::new("ALPHA", 0.52, 2e-3, 0.020),
                SyntheticAsset::new("BETA", 0.55, 1e-4, 0.008),
                SyntheticAsset::new("GAMMA", 0.66, 2e-4, 0.010),
            ],
            length: 1293,
            start: NaiveDate::from_ymd_opt(2013, 1, 4).expect("valid date"),
            initial_price: 100.0,
            seed: 20130104,
        }
    }
}

/// Consecutive weekdays starting at `start` (moved forward off a weekend).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

pub fn synthetic_panel(spec: &SyntheticSpec) -> Result<AssetPanel, SyntheticError> {
    if spec.assets.is_empty() {
        return Err(SyntheticError::Invalid("no assets".into()));
    }
    if !(spec.initial_price > 0.0 && spec.initial_price.is_finite()) {
        return Err(SyntheticError::Invalid(format!("initial price {}", spec.initial_price)));
    }
    let steps = spec.length.saturating_sub(1);
    let mut series = Vec::with_capacity(spec.assets.len());
    for (i, asset) in spec.assets.iter().enumerate() {
        let noise = generate_fbm_increments(asset.hurst, steps.max(2), spec.seed.wrapping_add(i as u64))?;
        let mut log_p = spec.initial_price.ln();
        let mut prices = Vec::with_capacity(spec.length);
        prices.push(spec.initial_price);
        for x in noise.iter().take(steps) {
            log_p += asset.drift + asset.volatility * x;
            prices.push(log_p.exp());
        }
        series.push(prices);
    }
    let names = spec.assets.iter().map(|a| a.name.clone()).collect();
    Ok(AssetPanel::new(names, business_days(spec.start, spec.length), series)?)
}

/// Writes `date,<asset>,...` rows with six decimals.
pub fn write_panel_csv<W: Write>(panel: &AssetPanel, out: W) -> Result<(), SyntheticError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(panel.asset_ids().iter().cloned());
    w.write_record(&header).map_err(std::io::Error::from)?;
    for (t, date) in panel.dates().iter().enumerate() {
        let mut rec = vec![date.to_string()];
        rec.extend((0..panel.n_assets()).map(|i| format!("{:.6}", panel.prices(i)[t])));
        w.write_record(&rec).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::returns::parse_price_panel;

    #[test]
    fn weekdays_only() {
        let days = business_days(NaiveDate::from_ymd_opt(2013, 1, 4).unwrap(), 6);
        let expected = [
            "2013-01-04",
            "2013-01-07",
            "2013-01-08",
            "2013-01-09",
            "2013-01-10",
            "2013-01-11",
        ];
        let got: Vec<String> = days.iter().map(|d| d.to_string()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn panel_shape_and_determinism() {
        let spec = SyntheticSpec {
            length: 200,
            ..SyntheticSpec::default()
        };
        let a = synthetic_panel(&spec).unwrap();
        let b = synthetic_panel(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        assert_eq!(a.n_assets(), 3);
        assert_eq!(a.prices(0)[0], 100.0);
    }

    #[test]
    fn csv_round_trip() {
        let spec = SyntheticSpec {
            length: 60,
            ..SyntheticSpec::default()
        };
        let panel = synthetic_panel(&spec).unwrap();
        let mut buf = Vec::new();
        write_panel_csv(&panel, &mut buf).unwrap();
        let back = parse_price_panel(buf.as_slice(), None).unwrap();
        assert_eq!(back.asset_ids(), panel.asset_ids());
        assert_eq!(back.dates(), panel.dates());
        for i in 0..3 {
            for (x, y) in back.prices(i).iter().zip(panel.prices(i)) {
                assert!((x - y).abs() <= 5e-7);
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = SyntheticSpec::default();
        spec.assets.clear();
        assert!(synthetic_panel(&spec).is_err());
        let mut spec = SyntheticSpec::default();
        spec.assets[0].hurst = 1.2;
        assert!(synthetic_panel(&spec).is_err());
    }
}
