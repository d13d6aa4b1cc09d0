//! Finality bounds, Monte Carlo finality estimates, finality tables and the
//! borrow-power attack calculator.

pub mod borrow;
pub mod bound;
pub mod finality;
pub mod quadrature;
pub mod stats;

pub use borrow::{borrow_power_gains, optimal_c, BorrowPolicy, BorrowPowerGains, BorrowPowerInstance, OptimalC};
pub use bound::{bernstein_tail, epsilon_cp, eta_bound, solve_k, BoundParams, LifetimeBounds};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no honest advantage: r_a = {r_a} leaves the honest side without positive drift")]
    NoHonestAdvantage { r_a: f64 },
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("trials too few for target: {trials} trials cannot resolve eta = {target}")]
    TrialsTooFew { trials: u64, target: f64 },
    #[error("adversary abstains: v + t = {} >= 1", v + t)]
    AdversaryAbstains { v: f64, t: f64 },
    #[error("no k up to {k_cap} reaches eta = {target} with confidence")]
    Unresolved { k_cap: u64, target: f64 },
}

impl AnalysisError {
    pub(crate) fn invalid(field: &'static str, reason: String) -> Self {
        AnalysisError::Invalid { field, reason }
    }
}
