//! Borrow-power attack calculator.
//!
//! The adversary leads the honest chain by `t` and holds a block of power
//! `v` for the current slot. It shows its chain to honest nodes with stake
//! power `c`; those nodes build on it with best block `w ~ CDF x^c` while
//! the rest build on the honest chain with best block `u ~ CDF x^a`. The
//! expected gain in lead relative to not attacking splits into five case
//! integrals. Inner integrals are closed-form; outer ones are numeric after
//! substituting `z = x^alpha`, which removes the density entirely.

use serde::{Deserialize, Serialize};

use super::quadrature::integrate;
use super::AnalysisError;

/// Absolute tolerance for each outer integral.
pub const GAIN_TOLERANCE: f64 = 1e-8;

/// One attack situation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorrowPowerInstance {
    /// Honest stake power not shown the adversary chain.
    pub a: f64,
    /// Honest stake power shown the adversary chain.
    pub c_frac: f64,
    /// Adversary block power this slot.
    pub v: f64,
    /// Adversary chain-power lead.
    pub t: f64,
}

impl BorrowPowerInstance {
    pub fn new(a: f64, c_frac: f64, v: f64, t: f64) -> Result<Self, AnalysisError> {
        let inst = BorrowPowerInstance { a, c_frac, v, t };
        inst.check()?;
        Ok(inst)
    }

    fn check(&self) -> Result<(), AnalysisError> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(AnalysisError::invalid("a", format!("must be positive, got {}", self.a)));
        }
        if !(self.c_frac > 0.0 && self.c_frac.is_finite()) {
            return Err(AnalysisError::invalid("c_frac", format!("must be positive, got {}", self.c_frac)));
        }
        if !(self.v > 0.0 && self.v < 1.0) {
            return Err(AnalysisError::invalid("v", format!("must lie in (0, 1), got {}", self.v)));
        }
        if !(self.t >= 0.0 && self.t < 1.0) {
            return Err(AnalysisError::invalid("t", format!("must lie in [0, 1), got {}", self.t)));
        }
        if self.v + self.t >= 1.0 {
            return Err(AnalysisError::AdversaryAbstains { v: self.v, t: self.t });
        }
        Ok(())
    }
}

/// The five case terms and the resulting expected gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorrowPowerGains {
    pub c1_h: f64,
    pub c4_h: f64,
    pub c5_h: f64,
    pub c5_a: f64,
    pub c6_a: f64,
    pub f_eag: f64,
}

impl BorrowPowerGains {
    pub fn terms(&self) -> [f64; 5] {
        [self.c1_h, self.c4_h, self.c5_h, self.c5_a, self.c6_a]
    }
}

#[inline]
fn pw(x: f64, p: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

/// `P(p <= X <= q)` for `X ~ CDF x^alpha`.
#[inline]
fn mass(alpha: f64, p: f64, q: f64) -> f64 {
    pw(q, alpha) - pw(p, alpha)
}

/// `E[X; p <= X <= q]` for `X ~ CDF x^alpha`.
#[inline]
fn first_moment(alpha: f64, p: f64, q: f64) -> f64 {
    alpha / (alpha + 1.0) * (pw(q, alpha + 1.0) - pw(p, alpha + 1.0))
}

/// `E[g(X); lo <= X <= hi]` for `X ~ CDF x^alpha`, via `z = x^alpha`.
fn outer<G: Fn(f64) -> f64>(alpha: f64, lo: f64, hi: f64, g: G) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let inv = 1.0 / alpha;
    integrate(|z| g(pw(z, inv)), pw(lo, alpha), pw(hi, alpha), GAIN_TOLERANCE).value
}

/// Evaluates the five case integrals and `f_eag = (c5_a + c6_a) - (c1_h + c4_h + c5_h)`.
pub fn borrow_power_gains(inst: &BorrowPowerInstance) -> Result<BorrowPowerGains, AnalysisError> {
    inst.check()?;
    let BorrowPowerInstance { a, c_frac: c, v, t } = *inst;

    // Case 1: the shown nodes' block w is weaker than v; honest utility when
    // the unshown block u trails w + t.
    let c1_h = outer(c, 0.0, v, |w| t * pw(w, a) + (w + t) * mass(a, w, w + t) - first_moment(a, w, w + t));

    // Case 4: u at most v + t and w at least v.
    let i4_low = t * (1.0 - pw(v, c));
    let c4_low = i4_low * pw(v, a);
    let c4_high = outer(a, v, v + t, |u| {
        t * (1.0 - pw(u, c)) + (t - u) * mass(c, v, u) + first_moment(c, v, u)
    });
    let c4_h = c4_low + c4_high;

    // Case 5, honest part: u beyond v + t.
    let c5_h = outer(a, v + t, 1.0, |u| {
        (t - u) * mass(c, u - t, u) + first_moment(c, u - t, u) + t * (1.0 - pw(u, c))
    });

    // Case 5, adversary part: u between v + t and w + t.
    let vt = v + t;
    let c5_inner = |hi: f64| first_moment(a, vt, hi) - vt * mass(a, vt, hi);
    let c5_a = outer(c, v, 1.0 - t, |w| c5_inner(w + t)) + outer(c, (1.0 - t).max(v), 1.0, |_| c5_inner(1.0));

    // Case 6: u beyond w + t, the adversary keeps the borrowed block.
    let c6_a = outer(c, v, 1.0 - t, |w| (w - v) * (1.0 - pw(w + t, a)));

    let f_eag = (c5_a + c6_a) - (c1_h + c4_h + c5_h);
    Ok(BorrowPowerGains { c1_h, c4_h, c5_h, c5_a, c6_a, f_eag })
}

/// Best split of honest stake power for the adversary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalC {
    pub c: f64,
    pub gain: f64,
}

fn gain_at(alpha_h: f64, c: f64, v: f64, t: f64) -> f64 {
    let inst = BorrowPowerInstance { a: alpha_h - c, c_frac: c, v, t };
    borrow_power_gains(&inst).map(|g| g.f_eag).unwrap_or(f64::NEG_INFINITY)
}

/// Grid points used to seed the optimizer.
pub const OPTIMAL_C_GRID: usize = 64;

/// Maximizes `f_eag(alpha_h - c, c, v, t)` over `c` in `(0, alpha_h)`: a
/// 64-point grid locates the best bracket, golden-section search refines it.
pub fn optimal_c(alpha_h: f64, v: f64, t: f64) -> Result<OptimalC, AnalysisError> {
    if !(alpha_h > 0.0 && alpha_h.is_finite()) {
        return Err(AnalysisError::invalid("alpha_h", format!("must be positive, got {alpha_h}")));
    }
    BorrowPowerInstance { a: alpha_h / 2.0, c_frac: alpha_h / 2.0, v, t }.check()?;
    let n = OPTIMAL_C_GRID;
    let step = alpha_h / n as f64;
    let grid: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let c = (i as f64 + 0.5) * step;
            (c, gain_at(alpha_h, c, v, t))
        })
        .collect();
    let (best_i, &(best_c, best_g)) =
        grid.iter().enumerate().max_by(|x, y| x.1 .1.total_cmp(&y.1 .1)).expect("non-empty grid");
    let lo = if best_i == 0 { step * 1e-3 } else { grid[best_i - 1].0 };
    let hi = if best_i == n - 1 { alpha_h * (1.0 - 1e-6) } else { grid[best_i + 1].0 };
    let (c, g) = golden_max(|c| gain_at(alpha_h, c, v, t), lo, hi, 1e-7 * alpha_h);
    if g >= best_g {
        Ok(OptimalC { c, gain: g })
    } else {
        Ok(OptimalC { c: best_c, gain: best_g })
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// One cell of the gain-by-split surface at fixed lead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitGainCell {
    pub c: f64,
    pub v: f64,
    pub gain: f64,
}

/// Gain over a `(c, v)` grid at lead `t`.
pub fn split_gain_surface(alpha_h: f64, t: f64, c_values: &[f64], v_values: &[f64]) -> Vec<SplitGainCell> {
    use rayon::prelude::*;
    let cells: Vec<(f64, f64)> = v_values.iter().flat_map(|&v| c_values.iter().map(move |&c| (c, v))).collect();
    cells
        .par_iter()
        .map(|&(c, v)| SplitGainCell { c, v, gain: gain_at(alpha_h, c, v, t) })
        .collect()
}

/// One cell of the optimal-gain surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalGainCell {
    pub v: f64,
    pub t: f64,
    pub c_opt: f64,
    pub gain: f64,
}

/// Optimal gain over a `(v, t)` grid. Cells with `v + t >= 1` report zero
/// gain: the adversary abstains there.
pub fn optimal_gain_surface(alpha_h: f64, v_values: &[f64], t_values: &[f64]) -> Vec<OptimalGainCell> {
    use rayon::prelude::*;
    let cells: Vec<(f64, f64)> = t_values.iter().flat_map(|&t| v_values.iter().map(move |&v| (v, t))).collect();
    cells
        .par_iter()
        .map(|&(v, t)| match optimal_c(alpha_h, v, t) {
            Ok(o) => OptimalGainCell { v, t, c_opt: o.c, gain: o.gain },
            Err(_) => OptimalGainCell { v, t, c_opt: 0.0, gain: 0.0 },
        })
        .collect()
}

/// Precomputed attack policy on a regular `(v, t)` grid. Lookups return the
/// nearest grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorrowPolicy {
    pub alpha_h: f64,
    pub resolution: usize,
    cells: Vec<OptimalGainCell>,
}

impl BorrowPolicy {
    /// Builds the policy on cell centres `(i + 0.5) / resolution`.
    pub fn build(alpha_h: f64, resolution: usize) -> Result<Self, AnalysisError> {
        if resolution == 0 {
            return Err(AnalysisError::invalid("resolution", "must be positive".into()));
        }
        let axis: Vec<f64> = (0..resolution).map(|i| (i as f64 + 0.5) / resolution as f64).collect();
        // t also needs the zero-lead row.
        let mut t_axis = vec![0.0];
        t_axis.extend_from_slice(&axis[..resolution - 1]);
        let cells = optimal_gain_surface(alpha_h, &axis, &t_axis);
        Ok(BorrowPolicy { alpha_h, resolution, cells })
    }

    /// Best split for `(v, t)`, or `None` when attacking is not expected to
    /// pay.
    pub fn lookup(&self, v: f64, t: f64) -> Option<OptimalC> {
        if !(v > 0.0 && t >= 0.0 && v + t < 1.0) {
            return None;
        }
        let n = self.resolution;
        let vi = ((v * n as f64).floor() as usize).min(n - 1);
        let ti = if t == 0.0 { 0 } else { ((t * n as f64 + 0.5).floor() as usize).clamp(1, n - 1) };
        let cell = self.cells[ti * n + vi];
        (cell.gain > 0.0).then_some(OptimalC { c: cell.c_opt, gain: cell.gain })
    }

    pub fn cells(&self) -> &[OptimalGainCell] {
        &self.cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent high-precision quadrature of the same case regions.
    const ORACLE: [([f64; 4], [f64; 6]); 3] = [
        (
            [2.0, 1.5, 0.3, 0.2],
            [0.002_888_845_260_441_53, 0.040_719_179_337_302_7, 0.064_679_105_339_029_9, 0.097_913_601_760_109_1, 0.040_608_099_522_24, 0.030_234_571_345_574_9],
        ),
        (
            [4.4, 1.0, 0.5, 0.1],
            [0.000_757_862_151_005_234, 0.005_170_210_622_744_33, 0.017_590_434_225_464_2, 0.045_755_596_970_283_8, 0.033_760_600_413_143_1, 0.055_997_690_384_213_1],
        ),
        ([0.7, 3.0, 0.2, 0.0], [0.0, 0.0, 0.0, 0.138_778_594_277_559, 0.074_174_822_867_577_6, 0.212_953_417_145_136]),
    ];

    #[test]
    fn matches_reference_values() {
        for (inst, want) in ORACLE {
            let g = borrow_power_gains(&BorrowPowerInstance::new(inst[0], inst[1], inst[2], inst[3]).unwrap()).unwrap();
            let got = [g.c1_h, g.c4_h, g.c5_h, g.c5_a, g.c6_a, g.f_eag];
            for (i, (x, y)) in got.iter().zip(want).enumerate() {
                assert!((x - y).abs() < 5e-8, "instance {inst:?} term {i}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn recombination_is_exact() {
        let g = borrow_power_gains(&BorrowPowerInstance::new(3.0, 1.4, 0.45, 0.3).unwrap()).unwrap();
        assert_eq!(g.f_eag, (g.c5_a + g.c6_a) - (g.c1_h + g.c4_h + g.c5_h));
    }

    #[test]
    fn abstains_when_lead_saturates() {
        let e = BorrowPowerInstance::new(2.0, 2.0, 0.6, 0.4).unwrap_err();
        assert!(matches!(e, AnalysisError::AdversaryAbstains { .. }));
        assert!(e.to_string().contains("adversary abstains"));
        assert!(optimal_c(4.4, 0.7, 0.5).is_err());
    }

    #[test]
    fn vanishing_coalition() {
        // With no lead every term vanishes; with a lead only case 1 survives.
        let g = borrow_power_gains(&BorrowPowerInstance::new(4.0, 1e-9, 0.3, 0.0).unwrap()).unwrap();
        for x in g.terms() {
            assert!(x.abs() < 1e-6, "{g:?}");
        }
        let (a, t) = (4.0, 0.2);
        let g = borrow_power_gains(&BorrowPowerInstance::new(a, 1e-9, 0.3, t).unwrap()).unwrap();
        assert!((g.c1_h - t.powf(a + 1.0) / (a + 1.0)).abs() < 1e-6);
        for x in &g.terms()[1..] {
            assert!(x.abs() < 1e-6, "{g:?}");
        }
    }

    #[test]
    fn optimum_dominates_samples() {
        let (ah, v, t) = (4.4, 0.3, 0.1);
        let o = optimal_c(ah, v, t).unwrap();
        assert!(o.c > 0.0 && o.c < ah);
        for c in [ah / 2.0, ah / 64.0, ah * 0.9] {
            assert!(o.gain >= gain_at(ah, c, v, t) - 1e-12);
        }
    }

    #[test]
    fn policy_lookup() {
        let p = BorrowPolicy::build(4.4, 4).unwrap();
        assert!(p.lookup(0.9, 0.5).is_none());
        let hit = p.lookup(0.2, 0.0).unwrap();
        assert!(hit.gain > 0.0);
    }
}
