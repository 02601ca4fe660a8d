//! Portfolio selection on the return / volatility / Hurst-exponent triplet.
//!
//! The modules follow the data flow: [`returns`] turns prices into mean
//! returns and covariance, [`dfa`] estimates Hurst exponents, [`pareto`]
//! solves the constrained mean-variance problem in closed form, [`simplex`]
//! searches the weight simplex and builds the optimal triangle, and
//! [`analysis`] with [`report`] runs the whole pipeline.

pub mod analysis;
pub mod dfa;
pub mod pareto;
pub mod report;
pub mod returns;
pub mod simplex;
pub mod synthetic;
