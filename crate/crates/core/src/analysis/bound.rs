//! Concentration-bound finality calculator.
//!
//! The per-slot advantage of the honest side is `X = W_H - W_A` with
//! `W ~ CDF x^alpha`. Bernstein's inequality on the mean of `M` such slots,
//! summed over every `M >= k`, bounds the probability that a fork started at
//! a fixed point ever catches up after `k` or more blocks.

use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Bound inputs and derived constants for one `(r_a, s)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub alpha_a: f64,
    pub alpha_h: f64,
    /// Honest drift per slot.
    pub lambda: f64,
    pub k_bound: f64,
    pub sigma_sq: f64,
    /// Exponential rate of the bound.
    pub c: f64,
}

/// `E[W]` for `W ~ CDF x^alpha`.
pub fn power_mean(alpha: f64) -> f64 {
    alpha / (alpha + 1.0)
}

/// `Var[W]` for `W ~ CDF x^alpha`.
pub fn power_variance(alpha: f64) -> f64 {
    alpha / (alpha + 2.0) - power_mean(alpha).powi(2)
}

impl BoundParams {
    /// Parameters for adversary stake `r_a` under scale factor `s`.
    pub fn new(r_a: f64, s: f64) -> Result<Self, AnalysisError> {
        if !(r_a > 0.0) {
            return Err(AnalysisError::invalid("r_a", format!("must be positive, got {r_a}")));
        }
        if r_a >= 0.5 {
            return Err(AnalysisError::NoHonestAdvantage { r_a });
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(AnalysisError::invalid("s", format!("must be positive, got {s}")));
        }
        Self::from_alphas(s * r_a, s * (1.0 - r_a))
    }

    pub fn from_alphas(alpha_a: f64, alpha_h: f64) -> Result<Self, AnalysisError> {
        let lambda = power_mean(alpha_h) - power_mean(alpha_a);
        if !(lambda > 0.0) {
            return Err(AnalysisError::NoHonestAdvantage { r_a: alpha_a / (alpha_a + alpha_h) });
        }
        let k_bound = 1.0 + lambda;
        let sigma_sq = power_variance(alpha_a) + power_variance(alpha_h);
        let c = lambda * lambda / (2.0 * (sigma_sq + k_bound * lambda / 3.0));
        Ok(BoundParams { alpha_a, alpha_h, lambda, k_bound, sigma_sq, c })
    }

    /// Standard deviation of `W_A - W_H` for one slot.
    pub fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }
}

/// Bernstein tail for a single horizon: `P(sum_{1..m} (W_A - W_H) >= 0)` is
/// at most `exp(-m lambda^2 / 2 / (sigma^2 + K lambda / 3))`.
pub fn bernstein_tail(bp: &BoundParams, m: u64) -> f64 {
    (-(m as f64) * bp.lambda * bp.lambda / 2.0 / (bp.sigma_sq + bp.k_bound * bp.lambda / 3.0)).exp()
}

/// Per-fork-point violation bound `e^{-ck} / (1 - e^{-c})`.
pub fn eta_bound(bp: &BoundParams, k: u64) -> f64 {
    (-bp.c * k as f64).exp() / -(-bp.c).exp_m1()
}

/// Lifetime bounds derived from `eta_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeBounds {
    /// Common-prefix violation probability over the lifetime.
    pub epsilon_cp: f64,
    /// Persistence/liveness failure probability, twice `epsilon_cp`.
    pub epsilon_lp: f64,
    /// Chain-quality failure probability, equal to `epsilon_cp`.
    pub chain_quality: f64,
}

pub fn epsilon_cp(bp: &BoundParams, k: u64, lifetime_slots: u64) -> Result<LifetimeBounds, AnalysisError> {
    if lifetime_slots == 0 {
        return Err(AnalysisError::invalid("lifetime_slots", "must be at least 1".into()));
    }
    let cp = lifetime_slots as f64 * eta_bound(bp, k);
    Ok(LifetimeBounds { epsilon_cp: cp, epsilon_lp: 2.0 * cp, chain_quality: cp })
}

/// Smallest `k >= 1` with `eta_bound(k) <= eta_target`.
pub fn solve_k(bp: &BoundParams, eta_target: f64) -> Result<u64, AnalysisError> {
    if !(eta_target > 0.0 && eta_target < 1.0) {
        return Err(AnalysisError::invalid("eta", format!("must lie in (0, 1), got {eta_target}")));
    }
    let closed = (-(eta_target * -(-bp.c).exp_m1()).ln() / bp.c).ceil();
    let mut k = if closed.is_finite() && closed >= 1.0 { closed as u64 } else { 1 };
    // Guard against rounding at the boundary.
    while eta_bound(bp, k) > eta_target {
        k += 1;
    }
    while k > 1 && eta_bound(bp, k - 1) <= eta_target {
        k -= 1;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let bp = BoundParams::new(0.1, 8.0).unwrap();
        assert!((bp.lambda - 0.433_604_336_043_360_4).abs() < 1e-14);
        assert!((bp.sigma_sq - 0.099_822_456_252_807_41).abs() < 1e-14);
        assert!((bp.k_bound - 1.433_604_336_043_360_4).abs() < 1e-14);
        assert!((bp.c - 0.306_181_575_420_687_66).abs() < 1e-14);
        assert!((eta_bound(&bp, 15) - 0.038_389_973_554_936_03).abs() < 1e-14);
        assert_eq!(solve_k(&bp, 0.05).unwrap(), 15);
        assert!(eta_bound(&bp, 14) > 0.05);
    }

    #[test]
    fn other_stakes() {
        for (r, lambda, sigma_sq, c) in [
            (0.2, 0.249_480_249_48, 0.079_659_747_02, 0.169_530_800_34),
            (0.3, 0.142_602_495_54, 0.064_100_216_42, 0.085_866_812_29),
            (0.45, 0.032_206_119_16, 0.053_957_589_91, 0.007_973_975_41),
        ] {
            let bp = BoundParams::new(r, 8.0).unwrap();
            assert!((bp.lambda - lambda).abs() < 1e-10, "{r}");
            assert!((bp.sigma_sq - sigma_sq).abs() < 1e-10, "{r}");
            assert!((bp.c - c).abs() < 1e-10, "{r}");
        }
    }

    #[test]
    fn no_advantage() {
        assert!(matches!(BoundParams::new(0.5, 8.0), Err(AnalysisError::NoHonestAdvantage { .. })));
        assert!(BoundParams::new(0.7, 8.0).is_err());
    }

    #[test]
    fn geometric_structure() {
        let bp = BoundParams::new(0.25, 8.0).unwrap();
        for k in 1..50 {
            let r = eta_bound(&bp, k + 1) / eta_bound(&bp, k);
            assert!((r - (-bp.c).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn lifetime_and_solver_edges() {
        let bp = BoundParams::new(0.2, 8.0).unwrap();
        let one = epsilon_cp(&bp, 10, 1).unwrap();
        assert_eq!(one.epsilon_cp, eta_bound(&bp, 10));
        let two = epsilon_cp(&bp, 10, 2).unwrap();
        assert_eq!(two.epsilon_cp, 2.0 * one.epsilon_cp);
        assert_eq!(two.epsilon_lp, 2.0 * two.epsilon_cp);
        assert_eq!(two.chain_quality, two.epsilon_cp);
        let strong = BoundParams::from_alphas(0.01, 100.0).unwrap();
        let b1 = eta_bound(&strong, 1);
        assert!(b1 < 1.0);
        assert_eq!(solve_k(&strong, b1).unwrap(), 1);
        assert_eq!(solve_k(&strong, (b1 + 1.0) / 2.0).unwrap(), 1);
        assert!(solve_k(&bp, 0.0).is_err());
    }
}
