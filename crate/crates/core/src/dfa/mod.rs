//! Detrended fluctuation analysis (DFA-λ) and Hurst-exponent estimation.
//!
//! The estimator follows the usual five steps:
//!
//! 1. integrate the de-meaned series into a profile `X(j)`;
//! 2. cut the profile into `floor(M / s)` non-overlapping windows of length `s`,
//!    discarding the remainder;
//! 3. fit an order-λ polynomial to every window and take the mean squared
//!    residual `f_ν(s)`;
//! 4. average over windows and take the square root, `F(s)`;
//! 5. regress `ln F(s)` on `ln s`; the slope is `H` and the intercept `ln C`.

mod fbm;

pub use fbm::generate_fbm_increments;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DfaError {
    #[error("series too short: need at least {required} points, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },
    #[error("invalid scale {scale}: {reason}")]
    InvalidScale { scale: usize, reason: String },
    #[error("window of {window} points cannot be detrended with a degree-{order} polynomial")]
    DegenerateFit { window: usize, order: usize },
    #[error("degenerate series: every detrended fluctuation is zero at scale {scale}")]
    DegenerateSeries { scale: usize },
    #[error("need at least 3 scale points for the log-log fit, got {0}")]
    TooFewScales(usize),
    #[error("fluctuation at scale {scale} is not positive ({value})")]
    NonPositiveFluctuation { scale: f64, value: f64 },
    #[error("Hurst exponent {0} outside (0, 1)")]
    InvalidHurst(f64),
    #[error("invalid DFA configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = DfaError> = std::result::Result<T, E>;

/// Persistence regime implied by a Hurst exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    AntiPersistent,
    RandomWalk,
    Persistent,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AntiPersistent => "anti-persistent",
            Self::RandomWalk => "random-walk",
            Self::Persistent => "persistent",
        })
    }
}

pub fn classify_regime(hurst: f64) -> Regime {
    if (hurst - 0.5).abs() <= 1e-12 {
        Regime::RandomWalk
    } else if hurst < 0.5 {
        Regime::AntiPersistent
    } else {
        Regime::Persistent
    }
}

/// Window sizes and detrending order.
///
/// When `scales` is set it is used verbatim; otherwise `scale_count`
/// logarithmically spaced integer scales from `min_scale` to `max_scale`
/// (default: a quarter of the series length) are generated and deduplicated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DfaConfig {
    pub poly_order: usize,
    pub min_scale: usize,
    pub max_scale: Option<usize>,
    pub scale_count: usize,
    pub scales: Option<Vec<usize>>,
}

impl Default for DfaConfig {
    fn default() -> Self {
        Self {
            poly_order: 1,
            min_scale: 5,
            max_scale: None,
            scale_count: 20,
            scales: None,
        }
    }
}

impl DfaConfig {
    /// Concrete scale list for a series of `len` points.
    pub fn resolve_scales(&self, len: usize) -> Result<Vec<usize>> {
        if self.poly_order == 0 {
            return Err(DfaError::InvalidConfig("polynomial order must be at least 1".into()));
        }
        let scales = match &self.scales {
            Some(explicit) => explicit.clone(),
            None => {
                let min = self.min_scale;
                let max = self.max_scale.unwrap_or(len / 4);
                if 4 * min > len {
                    return Err(DfaError::SeriesTooShort {
                        required: 4 * min,
                        actual: len,
                    });
                }
                if max < min {
                    return Err(DfaError::InvalidConfig(format!(
                        "max scale {max} below min scale {min}"
                    )));
                }
                log_spaced_scales(min, max, self.scale_count)
            }
        };
        let Some(&smallest) = scales.first() else {
            return Err(DfaError::TooFewScales(0));
        };
        if 4 * smallest > len {
            return Err(DfaError::SeriesTooShort {
                required: 4 * smallest,
                actual: len,
            });
        }
        for pair in scales.windows(2) {
            if pair[1] <= pair[0] {
                return Err(DfaError::InvalidScale {
                    scale: pair[1],
                    reason: "scales must be strictly increasing".into(),
                });
            }
        }
        for &s in &scales {
            if s < self.poly_order + 2 {
                return Err(DfaError::InvalidScale {
                    scale: s,
                    reason: format!("must be at least poly_order + 2 = {}", self.poly_order + 2),
                });
            }
            if s > len / 4 {
                return Err(DfaError::InvalidScale {
                    scale: s,
                    reason: format!("exceeds a quarter of the series length ({})", len / 4),
                });
            }
        }
        Ok(scales)
    }
}

fn log_spaced_scales(min: usize, max: usize, count: usize) -> Vec<usize> {
    if count <= 1 || min == max {
        return vec![min];
    }
    let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
    let mut scales: Vec<usize> = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            ((lo + t * (hi - lo)).exp().round() as usize).clamp(min, max)
        })
        .collect();
    scales.dedup();
    scales
}

/// Cumulative sum of the de-meaned series.
pub fn profile_series(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 4 {
        return Err(DfaError::SeriesTooShort {
            required: 4,
            actual: x.len(),
        });
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    Ok(x.iter()
        .scan(0.0, |acc, v| {
            *acc += v - mean;
            Some(*acc)
        })
        .collect())
}

/// Non-overlapping windows of exactly `s` points; the remainder is dropped.
pub fn segment_profile(profile: &[f64], s: usize) -> Result<Vec<&[f64]>> {
    if s < 2 {
        return Err(DfaError::InvalidScale {
            scale: s,
            reason: "window must hold at least 2 points".into(),
        });
    }
    if s > profile.len() {
        return Err(DfaError::InvalidScale {
            scale: s,
            reason: format!("longer than the profile ({} points)", profile.len()),
        });
    }
    Ok(profile.chunks_exact(s).collect())
}

/// Least-squares polynomial detrending for a fixed window length.
///
/// The design matrix only depends on `(s, λ)`, so its thin QR factor is
/// computed once and reused for every window: the residual is `y - Q Qᵀ y`.
#[derive(Debug, Clone)]
pub struct Detrender {
    window: usize,
    order: usize,
    q: DMatrix<f64>,
}

impl Detrender {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window < order + 1 || window < 2 {
            return Err(DfaError::DegenerateFit { window, order });
        }
        // Index 1..s mapped onto [-1, 1]; spans the same polynomial space.
        let half = (window - 1) as f64 / 2.0;
        let design = DMatrix::from_fn(window, order + 1, |k, p| ((k as f64 - half) / half).powi(p as i32));
        let qr = design.qr();
        let r = qr.r();
        let scale = r.diagonal().amax();
        if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
            return Err(DfaError::DegenerateFit { window, order });
        }
        Ok(Self {
            window,
            order,
            q: qr.q(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Mean squared residual of the polynomial fit, `f_ν(s)`.
    pub fn fluctuation(&self, window: &[f64]) -> f64 {
        debug_assert_eq!(window.len(), self.window);
        let y = DVector::from_column_slice(window);
        let coeffs = self.q.tr_mul(&y);
        let fitted = &self.q * coeffs;
        (y - fitted).norm_squared() / self.window as f64
    }
}

/// `f_ν(s)` for a single window.
pub fn detrended_fluctuation(window: &[f64], poly_order: usize) -> Result<f64> {
    Ok(Detrender::new(window.len(), poly_order)?.fluctuation(window))
}

/// `F(s)` from the per-window fluctuations: square root of their mean.
pub fn root_mean_fluctuation(fluctuations: &[f64]) -> f64 {
    (fluctuations.iter().sum::<f64>() / fluctuations.len() as f64).sqrt()
}

/// `F(s)` for one scale of a profile.
pub fn fluctuation_function(profile: &[f64], s: usize, poly_order: usize) -> Result<f64> {
    let windows = segment_profile(profile, s)?;
    let detrender = Detrender::new(s, poly_order)?;
    let fs: Vec<f64> = windows.iter().map(|w| detrender.fluctuation(w)).collect();
    let f = root_mean_fluctuation(&fs);
    let magnitude = profile.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if magnitude == 0.0 || f <= 1e-13 * magnitude {
        return Err(DfaError::DegenerateSeries { scale: s });
    }
    Ok(f)
}

/// One point of the fluctuation function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationPoint {
    pub scale: f64,
    pub fluctuation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaResult {
    pub hurst: f64,
    /// `ln C` of `F(s) = C s^H`.
    pub intercept: f64,
    pub fluctuations: Vec<FluctuationPoint>,
    pub fit_r2: f64,
    pub regime: Regime,
}

impl DfaResult {
    pub fn prefactor(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Ordinary least squares of `ln F` against `ln s`.
pub fn fit_hurst(points: &[FluctuationPoint]) -> Result<DfaResult> {
    if points.len() < 3 {
        return Err(DfaError::TooFewScales(points.len()));
    }
    if let Some(p) = points
        .iter()
        .find(|p| p.fluctuation.is_nan() || p.fluctuation <= 0.0 || p.scale.is_nan() || p.scale <= 0.0)
    {
        return Err(DfaError::NonPositiveFluctuation {
            scale: p.scale,
            value: p.fluctuation,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.scale.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.fluctuation.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(DfaError::InvalidConfig("all scales identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let fit_r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    if !slope.is_finite() {
        return Err(DfaError::InvalidHurst(slope));
    }
    Ok(DfaResult {
        hurst: slope,
        intercept,
        fluctuations: points.to_vec(),
        fit_r2,
        regime: classify_regime(slope),
    })
}

/// Full DFA pipeline: profile, per-scale fluctuation, log-log fit.
pub fn estimate_hurst(x: &[f64], config: &DfaConfig) -> Result<DfaResult> {
    let scales = config.resolve_scales(x.len())?;
    let profile = profile_series(x)?;
    let points = scales
        .par_iter()
        .map(|&s| {
            fluctuation_function(&profile, s, config.poly_order).map(|f| FluctuationPoint {
                scale: s as f64,
                fluctuation: f,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fit_hurst(&points)
}
