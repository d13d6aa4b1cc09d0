//! Block power and chain power.
//!
//! A block's power is its normalized VRF output pushed through the inverse
//! CDF of `x^alpha`, where `alpha` is the publisher's stake power. The maximum
//! of independent draws with stake powers `a1` and `a2` has CDF
//! `x^(a1 + a2)`, so splitting stake across identities changes nothing.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::BlockHeader;
use crate::primitives::Digest;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("vrf value does not fit in {kappa} bits")]
    ValueTooLarge { kappa: u32 },
    #[error("kappa must be a positive multiple of 8, got {0}")]
    BadKappa(u32),
    #[error("invalid stake {0}: must satisfy 0 < r <= 1")]
    InvalidStake(f64),
    #[error("scale factor must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("value {0} lies outside [0, 1]")]
    OutsideUnitInterval(f64),
    #[error("stake power must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("density argument must satisfy 0 < x <= 1, got {0}")]
    OutsideDensitySupport(f64),
}

/// Stake power `alpha = r * s`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct StakePower {
    alpha: f64,
}

impl StakePower {
    pub fn new(stake: f64, scale: f64) -> Result<Self, PowerError> {
        if !(stake > 0.0 && stake <= 1.0) {
            return Err(PowerError::InvalidStake(stake));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(PowerError::InvalidScale(scale));
        }
        Ok(StakePower { alpha: stake * scale })
    }

    pub fn from_alpha(alpha: f64) -> Result<Self, PowerError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PowerError::NonPositiveAlpha(alpha));
        }
        Ok(StakePower { alpha })
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }

    /// Maps a uniform variate to a block power with CDF `x^alpha`.
    pub fn power_of(self, u: f64) -> f64 {
        power_from_uniform(u, self.alpha)
    }
}

/// A block power in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerValue(f64);

impl PowerValue {
    pub fn new(value: f64) -> Result<Self, PowerError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(PowerError::OutsideUnitInterval(value));
        }
        Ok(PowerValue(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Compensated (Neumaier) running sum of block powers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainPower {
    sum: f64,
    comp: f64,
}

impl ChainPower {
    pub const ZERO: ChainPower = ChainPower { sum: 0.0, comp: 0.0 };

    pub fn add(self, x: f64) -> ChainPower {
        let t = self.sum + x;
        let comp = if self.sum.abs() >= x.abs() {
            self.comp + ((self.sum - t) + x)
        } else {
            self.comp + ((x - t) + self.sum)
        };
        ChainPower { sum: t, comp }
    }

    pub fn value(self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for ChainPower {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        iter.into_iter().fold(ChainPower::ZERO, ChainPower::add)
    }
}

/// Total order used by chain selection: more power wins, and on exactly equal
/// power the lexicographically smaller hash wins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRank {
    pub power: f64,
    pub hash: Digest,
}

impl PowerRank {
    pub fn new(power: f64, hash: Digest) -> Self {
        PowerRank { power, hash }
    }
}

impl Eq for PowerRank {}

impl Ord for PowerRank {
    fn cmp(&self, other: &Self) -> Ordering {
        self.power.total_cmp(&other.power).then_with(|| other.hash.cmp(&self.hash))
    }
}

impl PartialOrd for PowerRank {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn ldexp(mut x: f64, mut e: i32) -> f64 {
    while e < -1000 {
        x *= f64::powi(2.0, -1000);
        e += 1000;
    }
    while e > 1000 {
        x *= f64::powi(2.0, 1000);
        e -= 1000;
    }
    x * f64::powi(2.0, e)
}

/// Interprets `sigma_uro` as a big-endian unsigned integer and divides it by
/// `2^kappa`. The result is truncated toward zero, so a value below `2^kappa`
/// never maps to exactly 1.
pub fn normalize_vrf(sigma_uro: &[u8], kappa: u32) -> Result<f64, PowerError> {
    if kappa == 0 || kappa % 8 != 0 {
        return Err(PowerError::BadKappa(kappa));
    }
    let width = (kappa / 8) as usize;
    let n = sigma_uro.len();
    let Some(first) = sigma_uro.iter().position(|&b| b != 0) else {
        return Ok(0.0);
    };
    if n - first > width {
        return Err(PowerError::ValueTooLarge { kappa });
    }
    let mut window = [0u8; 16];
    let take = (n - first).min(16);
    window[..take].copy_from_slice(&sigma_uro[first..first + take]);
    let w = u128::from_be_bytes(window);
    let lz = w.leading_zeros();
    let mantissa = ((w << lz) >> 75) as u64;
    // Weight of the window's top bit relative to 2^kappa.
    let offset = (n - width) as i32 * 8;
    let exp = -53 - 8 * first as i32 - lz as i32 + offset;
    Ok(ldexp(mantissa as f64, exp))
}

/// Pushes `u` through a target inverse CDF.
pub fn histogram_match<F: Fn(f64) -> f64>(u: f64, target_inverse_cdf: F) -> Result<f64, PowerError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(PowerError::OutsideUnitInterval(u));
    }
    Ok(target_inverse_cdf(u))
}

/// `u^(1/alpha)`: the inverse CDF of `x^alpha` evaluated at `u`.
#[inline]
pub fn power_from_uniform(u: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        u
    } else {
        u.powf(1.0 / alpha)
    }
}

/// Block power of a raw VRF value for a publisher with stake `stake` under
/// scale factor `scale`.
pub fn block_power(sigma_uro: &[u8], kappa: u32, stake: f64, scale: f64) -> Result<PowerValue, PowerError> {
    let alpha = StakePower::new(stake, scale)?;
    let u = normalize_vrf(sigma_uro, kappa)?;
    Ok(PowerValue(alpha.power_of(u)))
}

/// Block power of a header, using the stake it declares.
pub fn header_power(header: &BlockHeader, scale: f64) -> Result<PowerValue, PowerError> {
    block_power(&header.vrf.uniform_output, header.vrf.kappa, header.publisher_stake.as_f64(), scale)
}

/// Sum of block powers over a chain, null blocks included.
pub fn chain_power(chain: &crate::chain::Chain) -> ChainPower {
    chain.power_sum()
}

/// The density `alpha * x^(alpha - 1)`.
pub fn sybil_pdf(alpha: f64, x: f64) -> Result<f64, PowerError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(PowerError::NonPositiveAlpha(alpha));
    }
    if !(x > 0.0 && x <= 1.0) {
        return Err(PowerError::OutsideDensitySupport(x));
    }
    Ok(alpha * x.powf(alpha - 1.0))
}

/// Probability that a draw with CDF `x^alpha_1` beats one with CDF `x^alpha_2`.
pub fn win_probability(alpha_1: f64, alpha_2: f64) -> Result<f64, PowerError> {
    for a in [alpha_1, alpha_2] {
        if !(a > 0.0 && a.is_finite()) {
            return Err(PowerError::NonPositiveAlpha(a));
        }
    }
    Ok(alpha_1 / (alpha_1 + alpha_2))
}
