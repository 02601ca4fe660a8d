//! Closed-form Pareto weight of the return / variance / Hurst model.
//!
//! The problem is
//!
//! ```text
//! maximize  wᵀR − γ wᵀCw
//! subject to wᵀH ≥ ½,  1ᵀw = 1
//! ```
//!
//! Stationarity gives `w = (2γ)⁻¹ C⁻¹(R + λ₁H + λ₂1)`. When the Hurst
//! constraint binds, `(λ₁, λ₂)` solve `Q λ = (α, β)` with
//!
//! ```text
//! Q = [[HᵀC⁻¹H, HᵀC⁻¹1], [1ᵀC⁻¹H, 1ᵀC⁻¹1]],  α = γ − HᵀC⁻¹R,  β = 2γ − 1ᵀC⁻¹R
//! ```
//!
//! When it does not bind, `λ₁ = 0` and only the budget fixes `λ₂`. Both cases
//! are resolved here; nonnegativity of the weights is *not* imposed and is
//! reported through [`ParetoSolution::feasible_on_simplex`].
//!
//! All products with `C⁻¹` go through a Cholesky solve.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::returns::{quadratic_form, StatisticsBundle};

/// Largest covariance condition number accepted.
pub const MAX_CONDITION: f64 = 1e12;

/// Level of the Hurst constraint `wᵀH ≥ ½`.
pub const HURST_FLOOR: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParetoError {
    #[error("covariance matrix is singular or ill-conditioned (condition number {condition:e})")]
    SingularCovariance { condition: f64 },
    #[error("multiplier system is singular (det Q = {det:e}); H is parallel to the budget vector")]
    SingularQ { det: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("risk aversion must be positive and finite, got {0}")]
    InvalidRiskAversion(f64),
}

pub type Result<T, E = ParetoError> = std::result::Result<T, E>;

/// The 2×2 matrix of quadratic forms in `C⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QMatrix {
    pub entries: Matrix2<f64>,
    pub det: f64,
}

impl QMatrix {
    pub fn h_h(&self) -> f64 {
        self.entries[(0, 0)]
    }

    pub fn h_one(&self) -> f64 {
        self.entries[(0, 1)]
    }

    pub fn one_h(&self) -> f64 {
        self.entries[(1, 0)]
    }

    pub fn one_one(&self) -> f64 {
        self.entries[(1, 1)]
    }

    fn is_singular(&self) -> bool {
        let scale = self.h_h().abs() * self.one_one().abs() + self.h_one().abs() * self.one_h().abs();
        scale == 0.0 || self.det.abs() <= 1e-12 * scale
    }
}

/// `C⁻¹` applied to `R`, `H` and `1`, shared by every stage of the solve.
struct Solved {
    r: DVector<f64>,
    h: DVector<f64>,
    one: DVector<f64>,
}

fn factor(covariance: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let eig = SymmetricEigen::new(covariance.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(ParetoError::SingularCovariance { condition });
    }
    Cholesky::new(covariance.clone()).ok_or(ParetoError::SingularCovariance { condition })
}

fn solve_all(stats: &StatisticsBundle) -> Result<Solved> {
    let chol = factor(stats.covariance())?;
    let n = stats.n_assets();
    Ok(Solved {
        r: chol.solve(stats.mean_returns()),
        h: chol.solve(stats.hurst()),
        one: chol.solve(&DVector::from_element(n, 1.0)),
    })
}

fn q_from(stats: &StatisticsBundle, solved: &Solved) -> QMatrix {
    let h = stats.hurst();
    let h_h = h.dot(&solved.h);
    let h_one = h.dot(&solved.one);
    let one_h = solved.h.sum();
    let one_one = solved.one.sum();
    QMatrix {
        entries: Matrix2::new(h_h, h_one, one_h, one_one),
        det: h_h * one_one - h_one * one_h,
    }
}

/// Builds `Q` with one linear solve per right-hand side.
pub fn assemble_q(stats: &StatisticsBundle) -> Result<QMatrix> {
    let solved = solve_all(stats)?;
    Ok(q_from(stats, &solved))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(ParetoError::InvalidRiskAversion(gamma))
    }
}

fn multipliers_from(stats: &StatisticsBundle, solved: &Solved, q: &QMatrix, gamma: f64) -> Result<(f64, f64)> {
    if q.is_singular() {
        return Err(ParetoError::SingularQ { det: q.det });
    }
    let alpha = gamma - stats.hurst().dot(&solved.r);
    let beta = 2.0 * gamma - solved.r.sum();
    // Adjugate form of Q⁻¹(α, β)ᵀ.
    let lambda1 = (alpha * q.one_one() - beta * q.h_one()) / q.det;
    let lambda2 = (-alpha * q.one_h() + beta * q.h_h()) / q.det;
    Ok((lambda1, lambda2))
}

/// Multipliers of the fully binding system, unit risk aversion.
pub fn lagrange_multipliers(stats: &StatisticsBundle, q: &QMatrix) -> Result<(f64, f64)> {
    lagrange_multipliers_with(stats, q, 1.0)
}

pub fn lagrange_multipliers_with(stats: &StatisticsBundle, q: &QMatrix, risk_aversion: f64) -> Result<(f64, f64)> {
    check_gamma(risk_aversion)?;
    let solved = solve_all(stats)?;
    multipliers_from(stats, &solved, q, risk_aversion)
}

/// Residuals of the Kuhn-Tucker conditions for a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max |R − 2γCw + λ₁H + λ₂1|`.
    pub stationarity: f64,
    /// `wᵀH − ½`; negative means the Hurst constraint is violated.
    pub hurst_slack: f64,
    /// `|1ᵀw − 1|`.
    pub budget: f64,
    /// `|λ₁ (wᵀH − ½)|`.
    pub complementary_slackness: f64,
    /// `λ₁`; must not be negative.
    pub dual: f64,
    pub tolerance: f64,
    pub stationarity_ok: bool,
    pub primal_ok: bool,
    pub budget_ok: bool,
    pub slackness_ok: bool,
    pub dual_ok: bool,
}

impl KktReport {
    pub fn is_satisfied(&self) -> bool {
        self.stationarity_ok && self.primal_ok && self.budget_ok && self.slackness_ok && self.dual_ok
    }

    /// Largest residual magnitude across all conditions.
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .max((-self.hurst_slack).max(0.0))
            .max(self.budget)
            .max(self.complementary_slackness)
            .max((-self.dual).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSolution {
    /// Raw closed-form weight; entries may be negative.
    pub weight: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub constraint_active: bool,
    pub kkt_residuals: KktReport,
    pub feasible_on_simplex: bool,
    /// `R(w) − γσ²(w)`.
    pub objective: f64,
    pub risk_aversion: f64,
}

/// Pareto weight with unit risk aversion.
pub fn pareto_weight(stats: &StatisticsBundle) -> Result<ParetoSolution> {
    pareto_weight_with(stats, 1.0)
}

/// Solves the KKT system, first with the Hurst constraint slack and, if that
/// violates `wᵀH ≥ ½`, with it binding.
pub fn pareto_weight_with(stats: &StatisticsBundle, risk_aversion: f64) -> Result<ParetoSolution> {
    check_gamma(risk_aversion)?;
    let gamma = risk_aversion;
    let n = stats.n_assets();

    if n == 1 {
        // The budget alone pins the weight.
        let lambda2 = 2.0 * gamma * stats.covariance()[(0, 0)] - stats.mean_returns()[0];
        return Ok(finish(stats, vec![1.0], 0.0, lambda2, false, gamma));
    }

    let solved = solve_all(stats)?;
    let q = q_from(stats, &solved);

    let mut lambda2 = (2.0 * gamma - solved.r.sum()) / q.one_one();
    let mut w: DVector<f64> = (&solved.r + &solved.one * lambda2) / (2.0 * gamma);
    let budget_gap = 1.0 - accurate_dot(w.as_slice(), &vec![1.0; n]);
    w += &solved.one * (budget_gap / q.one_one());
    lambda2 += 2.0 * gamma * budget_gap / q.one_one();
    if accurate_dot(w.as_slice(), stats.hurst().as_slice()) - HURST_FLOOR >= -1e-12 {
        return Ok(finish(stats, w.iter().copied().collect(), 0.0, lambda2, false, gamma));
    }

    let (mut lambda1, mut lambda2) = multipliers_from(stats, &solved, &q, gamma)?;
    let mut w: DVector<f64> = (&solved.r + &solved.h * lambda1 + &solved.one * lambda2) / (2.0 * gamma);
    // Large multipliers amplify rounding in the equality residuals; one
    // correction step inside the span of C⁻¹H and C⁻¹1 keeps stationarity.
    for _ in 0..2 {
        let e_h = HURST_FLOOR - accurate_dot(w.as_slice(), stats.hurst().as_slice());
        let e_b = 1.0 - accurate_dot(w.as_slice(), &vec![1.0; n]);
        let d1 = (e_h * q.one_one() - e_b * q.h_one()) / q.det;
        let d2 = (-e_h * q.one_h() + e_b * q.h_h()) / q.det;
        w += &solved.h * d1 + &solved.one * d2;
        lambda1 += 2.0 * gamma * d1;
        lambda2 += 2.0 * gamma * d2;
    }
    Ok(finish(
        stats,
        w.iter().copied().collect(),
        lambda1,
        lambda2,
        true,
        gamma,
    ))
}

/// Dot product with error-free products and compensated summation.
pub(crate) fn accurate_dot(a: &[f64], b: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    let mut add = |x: f64| {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    };
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let e = x.mul_add(*y, -p);
        add(p);
        add(e);
    }
    sum + comp
}

fn finish(
    stats: &StatisticsBundle,
    weight: Vec<f64>,
    lambda1: f64,
    lambda2: f64,
    constraint_active: bool,
    risk_aversion: f64,
) -> ParetoSolution {
    let objective = dot(&weight, stats.mean_returns()) - risk_aversion * quadratic_form(&weight, stats.covariance());
    let feasible_on_simplex = weight.iter().all(|w| *w >= -1e-9);
    let mut solution = ParetoSolution {
        weight,
        lambda1,
        lambda2,
        constraint_active,
        kkt_residuals: empty_report(),
        feasible_on_simplex,
        objective,
        risk_aversion,
    };
    solution.kkt_residuals = kkt_verify(&solution, stats, 1e-9);
    solution
}

fn empty_report() -> KktReport {
    KktReport {
        stationarity: 0.0,
        hurst_slack: 0.0,
        budget: 0.0,
        complementary_slackness: 0.0,
        dual: 0.0,
        tolerance: 0.0,
        stationarity_ok: false,
        primal_ok: false,
        budget_ok: false,
        slackness_ok: false,
        dual_ok: false,
    }
}

fn dot(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Evaluates every Kuhn-Tucker condition. Never fails: a mismatched solution
/// simply shows up as large residuals.
pub fn kkt_verify(solution: &ParetoSolution, stats: &StatisticsBundle, tol: f64) -> KktReport {
    let n = stats.n_assets();
    if solution.weight.len() != n {
        return KktReport {
            stationarity: f64::INFINITY,
            hurst_slack: f64::NEG_INFINITY,
            budget: f64::INFINITY,
            complementary_slackness: f64::INFINITY,
            dual: solution.lambda1,
            tolerance: tol,
            ..empty_report()
        };
    }
    let w = DVector::from_column_slice(&solution.weight);
    let gradient = stats.mean_returns() - stats.covariance() * &w * (2.0 * solution.risk_aversion)
        + stats.hurst() * solution.lambda1
        + DVector::from_element(n, solution.lambda2);
    let stationarity = gradient.amax();
    let hurst_slack = accurate_dot(w.as_slice(), stats.hurst().as_slice()) - HURST_FLOOR;
    let budget = (accurate_dot(w.as_slice(), &vec![1.0; n]) - 1.0).abs();
    let complementary_slackness = (solution.lambda1 * hurst_slack).abs();
    let dual = solution.lambda1;
    KktReport {
        stationarity,
        hurst_slack,
        budget,
        complementary_slackness,
        dual,
        tolerance: tol,
        stationarity_ok: stationarity <= tol,
        primal_ok: hurst_slack >= -tol,
        budget_ok: budget <= tol,
        slackness_ok: complementary_slackness <= tol,
        dual_ok: dual >= -tol,
    }
}
