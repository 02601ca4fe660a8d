//! Exact fractional Gaussian noise by circulant embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{DfaError, Result};

/// Autocovariance of unit-variance fGn at lag `k`.
pub(crate) fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let k = k as f64;
    let h2 = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Stationary Gaussian increments of a fractional Brownian motion with unit
/// variance and autocovariance `½(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})`.
///
/// The covariance is embedded in a circulant matrix of size `2·length`, whose
/// eigenvalues are non-negative for every `H ∈ (0, 1)`. The same seed always
/// yields the same series.
pub fn generate_fbm_increments(hurst: f64, length: usize, seed: u64) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(DfaError::InvalidHurst(hurst));
    }
    if length < 2 {
        return Err(DfaError::SeriesTooShort {
            required: 2,
            actual: length,
        });
    }

    let m = 2 * length;
    let mut row: Vec<Complex64> = (0..m)
        .map(|j| {
            let lag = if j <= length { j } else { m - j };
            Complex64::new(fgn_autocovariance(hurst, lag), 0.0)
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);

    let peak = row.iter().fold(0.0_f64, |acc, c| acc.max(c.re.abs()));
    let mut scales = Vec::with_capacity(m);
    for eig in &row {
        let lambda = eig.re;
        if lambda < -1e-10 * peak {
            return Err(DfaError::InvalidConfig(format!(
                "circulant embedding not positive semi-definite (eigenvalue {lambda:e})"
            )));
        }
        scales.push((lambda.max(0.0) / m as f64).sqrt());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<Complex64> = scales
        .iter()
        .map(|s| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * *s
        })
        .collect();
    fft.process(&mut w);

    // Real and imaginary parts are two independent draws; keep the real one.
    Ok(w.into_iter().take(length).map(|c| c.re).collect())
}
