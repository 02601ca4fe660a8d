//! Exhaustive search over a regular lattice on the probability simplex, and
//! the triangle geometry built from its three local optima.

mod geometry;

pub use geometry::*;

use rayon::prelude::*;
use thiserror::Error;

use crate::returns::{quadratic_form, ReturnsError, StatisticsBundle, WeightVector};

/// Default cap on the number of lattice points.
pub const DEFAULT_POINT_CEILING: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum SimplexError {
    #[error("simplex grid with dimension {dimension} and resolution {resolution} has {count} points, above the ceiling of {ceiling}")]
    GridTooLarge {
        dimension: usize,
        resolution: u32,
        count: u128,
        ceiling: u64,
    },
    #[error("invalid simplex grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("triangle is degenerate (coincident or collinear vertices)")]
    DegenerateTriangle,
    #[error("Heron radicand is negative ({radicand:e}) with s = {semi_perimeter}")]
    NegativeRadicand { semi_perimeter: f64, radicand: f64 },
    #[error("Heron factor s − {side} = {factor:e} is not positive (s = {semi_perimeter}, radicand = {radicand:e})")]
    InvalidHeronFactor {
        semi_perimeter: f64,
        side: f64,
        factor: f64,
        radicand: f64,
    },
    #[error("no triangles to average")]
    EmptyTriangleList,
    #[error(transparent)]
    Weights(#[from] ReturnsError),
}

pub type Result<T, E = SimplexError> = std::result::Result<T, E>;

/// Number of compositions of `q` into `n` non-negative parts, `C(q+n−1, n−1)`.
pub fn composition_count(dimension: usize, resolution: u32) -> Option<u128> {
    if dimension == 0 {
        return Some(0);
    }
    let k = dimension as u128 - 1;
    let q = resolution as u128;
    let k = k.min(q);
    let top = q + dimension as u128 - 1;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(top - i)? / (i + 1);
    }
    Some(acc)
}

/// All weight vectors with entries in `{0, 1/q, …, 1}` summing to one.
///
/// Points are never stored; they are generated as integer compositions of
/// `q` in lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimplexGrid {
    dimension: usize,
    resolution: u32,
    count: u64,
}

/// Builds a grid under the default point ceiling.
pub fn enumerate_simplex(dimension: usize, resolution: u32) -> Result<SimplexGrid> {
    SimplexGrid::with_ceiling(dimension, resolution, DEFAULT_POINT_CEILING)
}

impl SimplexGrid {
    pub fn with_ceiling(dimension: usize, resolution: u32, ceiling: u64) -> Result<Self> {
        if dimension == 0 {
            return Err(SimplexError::InvalidGrid("dimension must be at least 1".into()));
        }
        if resolution == 0 {
            return Err(SimplexError::InvalidGrid("resolution must be at least 1".into()));
        }
        let too_large = |count| SimplexError::GridTooLarge {
            dimension,
            resolution,
            count,
            ceiling,
        };
        let count = composition_count(dimension, resolution).ok_or(too_large(u128::MAX))?;
        if count > ceiling as u128 {
            return Err(too_large(count));
        }
        Ok(Self {
            dimension,
            resolution,
            count: count as u64,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    /// Lattice spacing `1/q`.
    pub fn step(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn len(&self) -> usize {
        self.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Integer compositions in lexicographic order.
    pub fn compositions(&self) -> Compositions {
        Compositions::new(self.resolution, self.dimension)
    }

    pub fn points(&self) -> impl Iterator<Item = WeightVector> + '_ {
        self.compositions().map(|c| self.weight(&c))
    }

    fn scale(&self, parts: &[u32], out: &mut [f64]) {
        let q = self.resolution as f64;
        for (o, &c) in out.iter_mut().zip(parts) {
            *o = c as f64 / q;
        }
    }

    fn weight(&self, parts: &[u32]) -> WeightVector {
        let mut w = vec![0.0; self.dimension];
        self.scale(parts, &mut w);
        WeightVector::new(w).expect("lattice point lies on the simplex")
    }

    /// Lattice point maximizing `f`, skipping points where `f` is `None`.
    ///
    /// Ties go to the lexicographically smallest composition, so the result
    /// does not depend on how the work is split across threads.
    pub fn argmax<F>(&self, f: F) -> Option<(WeightVector, f64)>
    where
        F: Fn(&[f64]) -> Option<f64> + Sync,
    {
        let q = self.resolution;
        let n = self.dimension;
        let chunk_best = |first: u32| -> Option<(Vec<u32>, f64)> {
            let mut parts = vec![0u32; n];
            let mut w = vec![0.0; n];
            let mut best: Option<(Vec<u32>, f64)> = None;
            parts[0] = first;
            let tails: Box<dyn Iterator<Item = Vec<u32>>> = if n == 1 {
                if first == q {
                    Box::new(std::iter::once(Vec::new()))
                } else {
                    Box::new(std::iter::empty())
                }
            } else {
                Box::new(Compositions::new(q - first, n - 1))
            };
            for tail in tails {
                parts[1..].copy_from_slice(&tail);
                self.scale(&parts, &mut w);
                if let Some(v) = f(&w) {
                    if best.as_ref().is_none_or(|(_, b)| v > *b) {
                        best = Some((parts.clone(), v));
                    }
                }
            }
            best
        };
        let per_chunk: Vec<Option<(Vec<u32>, f64)>> = (0..=q).into_par_iter().map(chunk_best).collect();
        per_chunk
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<(Vec<u32>, f64)>, cand| match acc {
                Some(a) if a.1 >= cand.1 => Some(a),
                _ => Some(cand),
            })
            .map(|(parts, v)| (self.weight(&parts), v))
    }
}

/// Compositions of `total` into `parts` non-negative integers, lexicographic.
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Option<Vec<u32>>,
}

impl Compositions {
    pub fn new(total: u32, parts: usize) -> Self {
        let current = (parts > 0).then(|| {
            let mut c = vec![0; parts];
            c[parts - 1] = total;
            c
        });
        Self { current }
    }
}

impl Iterator for Compositions {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let out = self.current.clone()?;
        let c = self.current.as_mut().expect("checked above");
        let p = c.len();
        let mut tail = c[p - 1];
        let mut advanced = false;
        for i in (0..p.saturating_sub(1)).rev() {
            if tail > 0 {
                c[i] += 1;
                for x in &mut c[i + 1..p - 1] {
                    *x = 0;
                }
                c[p - 1] = tail - 1;
                advanced = true;
                break;
            }
            tail += c[i];
        }
        if !advanced {
            self.current = None;
        }
        Some(out)
    }
}

fn check_grid(stats: &StatisticsBundle, grid: &SimplexGrid) -> Result<()> {
    if grid.dimension() != stats.n_assets() {
        return Err(SimplexError::DimensionMismatch {
            expected: stats.n_assets(),
            actual: grid.dimension(),
        });
    }
    Ok(())
}

fn dot(w: &[f64], v: &nalgebra::DVector<f64>) -> f64 {
    w.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// Grid maximizers of return and Hurst exponent and grid minimizer of variance.
pub fn local_optima(stats: &StatisticsBundle, grid: &SimplexGrid) -> Result<OptimalTriangle> {
    check_grid(stats, grid)?;
    let (w_r, _) = grid
        .argmax(|w| Some(dot(w, stats.mean_returns())))
        .expect("grid is non-empty");
    let (w_sigma, _) = grid
        .argmax(|w| Some(-quadratic_form(w, stats.covariance())))
        .expect("grid is non-empty");
    let (w_h, _) = grid.argmax(|w| Some(dot(w, stats.hurst()))).expect("grid is non-empty");
    OptimalTriangle::new(w_r, w_sigma, w_h, Some(stats.interval_days()))
}

/// Grid maximizer of `wᵀR − γ wᵀCw` subject to `wᵀH ≥ ½`; `None` when no
/// lattice point satisfies the constraint.
pub fn grid_pareto_maximizer(
    stats: &StatisticsBundle,
    grid: &SimplexGrid,
    risk_aversion: f64,
) -> Result<Option<(WeightVector, f64)>> {
    check_grid(stats, grid)?;
    Ok(grid.argmax(|w| {
        (dot(w, stats.hurst()) >= crate::pareto::HURST_FLOOR)
            .then(|| dot(w, stats.mean_returns()) - risk_aversion * quadratic_form(w, stats.covariance()))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    pub(crate) fn random_stats(rng: &mut ChaCha8Rng, n: usize) -> StatisticsBundle {
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = a.transpose() * &a + DMatrix::identity(n, n) * 0.1;
        let c = (&c + c.transpose()) / 2.0;
        let r = DVector::from_fn(n, |_, _| rng.random_range(-0.05..0.05));
        let h = DVector::from_fn(n, |_, _| rng.random_range(0.3..0.7));
        StatisticsBundle::new(r, c, h, 1).unwrap()
    }

    #[test]
    fn two_assets_two_steps() {
        let grid = enumerate_simplex(2, 2).unwrap();
        let pts: Vec<Vec<f64>> = grid.points().map(|w| w.into_inner()).collect();
        assert_eq!(pts, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_eq!(grid.len(), 3);
    }

    #[test]
    fn point_counts() {
        assert_eq!(enumerate_simplex(3, 2).unwrap().points().count(), 6);
        let grid = enumerate_simplex(3, 100).unwrap();
        assert_eq!(grid.len(), 5151);
        assert_eq!(grid.points().count(), 5151);
        assert_eq!(enumerate_simplex(1, 7).unwrap().points().count(), 1);
    }

    #[test]
    fn ceiling_guard() {
        assert!(matches!(
            enumerate_simplex(10, 100),
            Err(SimplexError::GridTooLarge { .. })
        ));
        assert!(SimplexGrid::with_ceiling(3, 100, 5150).is_err());
        assert!(SimplexGrid::with_ceiling(3, 100, 5151).is_ok());
        assert!(enumerate_simplex(0, 10).is_err());
        assert!(enumerate_simplex(3, 0).is_err());
    }

    #[test]
    fn enumeration_is_lexicographic_and_exact() {
        let grid = enumerate_simplex(4, 9).unwrap();
        let all: Vec<Vec<u32>> = grid.compositions().collect();
        assert!(all.windows(2).all(|p| p[0] < p[1]));
        assert!(all.iter().all(|c| c.iter().sum::<u32>() == 9));
        assert_eq!(all.len() as u64, binomial(12, 3));
    }

    #[test]
    fn argmax_prefers_lexicographically_smallest_on_ties() {
        let grid = enumerate_simplex(3, 10).unwrap();
        let (w, v) = grid.argmax(|_| Some(1.0)).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(v, 1.0);
        let (w, _) = grid.argmax(|w| Some(w[0] + w[1])).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.0, 0.0]);
        assert!(grid.argmax(|_| None).is_none());
    }

    #[test]
    fn linear_objectives_peak_at_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = enumerate_simplex(3, 100).unwrap();
        for _ in 0..50 {
            let s = random_stats(&mut rng, 3);
            let tri = local_optima(&s, &grid).unwrap();
            let best_r = s.mean_returns().argmax().0;
            let best_h = s.hurst().argmax().0;
            assert_eq!(tri.w_r, WeightVector::vertex(3, best_r));
            assert_eq!(tri.w_h, WeightVector::vertex(3, best_h));
        }
    }

    #[test]
    fn minimum_variance_matches_analytic_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let grid = enumerate_simplex(3, 100).unwrap();
        let mut checked = 0;
        while checked < 20 {
            let s = random_stats(&mut rng, 3);
            let ones = DVector::from_element(3, 1.0);
            let x = s.covariance().clone().lu().solve(&ones).unwrap();
            let analytic = &x / x.sum();
            if analytic.iter().any(|v| *v < 0.0) {
                continue;
            }
            let tri = local_optima(&s, &grid).unwrap();
            let var = |w: &[f64]| quadratic_form(w, s.covariance());
            // The grid point can never beat the continuous minimum.
            assert!(var(tri.w_sigma.as_slice()) >= var(analytic.as_slice()) - 1e-15);
            checked += 1;
        }
    }

    #[test]
    fn pareto_maximizer_respects_hurst_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = enumerate_simplex(3, 50).unwrap();
        for _ in 0..20 {
            let s = random_stats(&mut rng, 3);
            if let Some((w, _)) = grid_pareto_maximizer(&s, &grid, 1.0).unwrap() {
                assert!(dot(w.as_slice(), s.hurst()) >= 0.5);
            } else {
                assert!(s.hurst().max() < 0.5);
            }
        }
        let low = StatisticsBundle::new(
            DVector::from_element(3, 0.0),
            DMatrix::identity(3, 3),
            DVector::from_element(3, 0.4),
            1,
        )
        .unwrap();
        assert!(grid_pareto_maximizer(&low, &grid, 1.0).unwrap().is_none());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_stats(&mut rng, 3);
        let grid = enumerate_simplex(4, 10).unwrap();
        assert!(matches!(
            local_optima(&s, &grid),
            Err(SimplexError::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn count_matches_binomial(n in 1usize..6, q in 1u32..25) {
            let grid = enumerate_simplex(n, q).unwrap();
            let expected = binomial(q as u64 + n as u64 - 1, n as u64 - 1);
            prop_assert_eq!(grid.len() as u64, expected);
            prop_assert_eq!(grid.compositions().count() as u64, expected);
        }

        #[test]
        fn parallel_argmax_matches_sequential_scan(seed in any::<u64>(), n in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coef: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |w: &[f64]| Some(-(w.iter().zip(&coef).map(|(a, b)| (a - b).powi(2)).sum::<f64>()));
            let grid = enumerate_simplex(n, 12).unwrap();
            let mut best: Option<(WeightVector, f64)> = None;
            for w in grid.points() {
                let v = f(w.as_slice()).unwrap();
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((w, v));
                }
            }
            prop_assert_eq!(grid.argmax(f), best);
        }
    }
}
