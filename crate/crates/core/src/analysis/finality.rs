//! Confirmation depth and time-to-finality estimates.

use serde::{Deserialize, Serialize};

use super::bound::{eta_bound, solve_k, BoundParams};
use super::AnalysisError;
use crate::simnet::race::{race_for_stake, run_race, RaceCurve};

/// Minimum trial count accepted by the Monte Carlo estimators.
pub const MIN_TRIALS: u64 = 10_000;
/// Expected number of violations at the target needed to resolve it.
pub const MIN_EXPECTED_HITS: f64 = 10.0;

/// Monte Carlo confirmation depth for one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloK {
    pub k: u64,
    pub eta_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    /// Depth the analytic bound requires for the same target.
    pub k_bound: u64,
}

fn check_trials(trials: u64, target: f64) -> Result<(), AnalysisError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(AnalysisError::invalid("eta", format!("must lie in (0, 1), got {target}")));
    }
    if trials < MIN_TRIALS || (trials as f64) * target < MIN_EXPECTED_HITS {
        return Err(AnalysisError::TrialsTooFew { trials, target });
    }
    Ok(())
}

/// Depth searched for a target: the bound's answer with head room, since
/// the Wilson upper limit can sit above the target where the bound is tight.
fn k_cap_for(k_bound: u64) -> u64 {
    k_bound + (k_bound / 4).max(5)
}

fn pick(curve: &RaceCurve, target: f64, k_bound: u64) -> Result<MonteCarloK, AnalysisError> {
    let cap = k_cap_for(k_bound);
    let k = curve.k_star(target, cap).ok_or(AnalysisError::Unresolved { k_cap: cap, target })?;
    let (lo, hi) = curve.wilson(k);
    Ok(MonteCarloK { k, eta_hat: curve.eta_hat(k), ci_low: lo, ci_high: hi, trials: curve.trials, k_bound })
}

/// Smallest depth whose estimated violation probability is confidently at
/// most `eta_target`.
pub fn monte_carlo_k(r_a: f64, s: f64, eta_target: f64, trials: u64, seed: u64) -> Result<MonteCarloK, AnalysisError> {
    Ok(monte_carlo_ks(r_a, s, &[eta_target], trials, seed)?.remove(0))
}

/// As [`monte_carlo_k`] for several targets sharing one race.
pub fn monte_carlo_ks(
    r_a: f64,
    s: f64,
    targets: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<MonteCarloK>, AnalysisError> {
    let bp = BoundParams::new(r_a, s)?;
    let mut k_bounds = Vec::with_capacity(targets.len());
    for &t in targets {
        check_trials(trials, t)?;
        k_bounds.push(solve_k(&bp, t)?);
    }
    let cap = k_bounds.iter().copied().map(k_cap_for).max().unwrap_or(1);
    let curve = run_race(&race_for_stake(r_a, s, cap, trials, seed));
    targets.iter().zip(k_bounds).map(|(&t, kb)| pick(&curve, t, kb)).collect()
}

/// Full violation-probability curve for `k = 1..=k_max`.
pub fn eta_curve(r_a: f64, s: f64, k_max: u64, trials: u64, seed: u64) -> Result<RaceCurve, AnalysisError> {
    BoundParams::new(r_a, s)?;
    if trials < MIN_TRIALS {
        return Err(AnalysisError::TrialsTooFew { trials, target: 0.0 });
    }
    Ok(run_race(&race_for_stake(r_a, s, k_max, trials, seed)))
}

/// One point of a scale-factor sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub s: f64,
    pub k: u64,
    pub eta_hat: f64,
    pub ci_high: f64,
    pub k_bound: u64,
}

/// Monte Carlo depth for each scale factor. All values share one seed, so
/// the races see common random numbers.
pub fn s_sweep(r_a: f64, eta_target: f64, s_values: &[f64], trials: u64, seed: u64) -> Result<Vec<SweepPoint>, AnalysisError> {
    if s_values.is_empty() {
        return Err(AnalysisError::invalid("s_values", "must not be empty".into()));
    }
    s_values
        .iter()
        .map(|&s| {
            let m = monte_carlo_k(r_a, s, eta_target, trials, seed)?;
            Ok(SweepPoint { s, k: m.k, eta_hat: m.eta_hat, ci_high: m.ci_high, k_bound: m.k_bound })
        })
        .collect()
}

/// Elbow check on a sweep sorted by `s`: depth never rises with `s`, and the
/// gain from `s = 8` to `s = 16` stays under `max_gain` (relative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowCheck {
    pub non_increasing: bool,
    /// `(k(8) - k(16)) / k(8)` when both are present.
    pub gain_8_to_16: Option<f64>,
    pub holds: bool,
}

pub fn elbow_check(points: &[SweepPoint], max_gain: f64) -> ElbowCheck {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.s.total_cmp(&b.s));
    let non_increasing = sorted.windows(2).all(|w| w[1].k <= w[0].k);
    let at = |s: f64| sorted.iter().find(|p| p.s == s).map(|p| p.k as f64);
    let gain_8_to_16 = match (at(8.0), at(16.0)) {
        (Some(k8), Some(k16)) => Some((k8 - k16) / k8),
        _ => None,
    };
    let holds = non_increasing && gain_8_to_16.is_none_or(|g| g < max_gain);
    ElbowCheck { non_increasing, gain_8_to_16, holds }
}

/// Throughput from block size, slot length and chain growth.
pub fn tps(tpb: f64, t_sl: f64, zeta: f64) -> Result<f64, AnalysisError> {
    if !(tpb > 0.0) {
        return Err(AnalysisError::invalid("tpb", format!("must be positive, got {tpb}")));
    }
    if !(t_sl > 0.0) {
        return Err(AnalysisError::invalid("t_sl", format!("must be positive, got {t_sl}")));
    }
    if !(0.0..=1.0).contains(&zeta) {
        return Err(AnalysisError::invalid("zeta", format!("must lie in [0, 1], got {zeta}")));
    }
    Ok(tpb * zeta / t_sl)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMethod {
    Bound,
    MonteCarlo,
}

impl TableMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TableMethod::Bound => "bound",
            TableMethod::MonteCarlo => "monte_carlo",
        }
    }
}

/// Default adversary stakes for the finality table.
pub const DEFAULT_TABLE_STAKES: [f64; 5] = [0.10, 0.15, 0.20, 0.25, 0.30];
/// Extra rows enabled by `--deep`.
pub const DEEP_TABLE_STAKES: [f64; 6] = [0.35, 0.40, 0.45, 0.46, 0.47, 0.48];
/// Confidence columns, as `1 - eta`.
pub const TABLE_CONFIDENCES: [f64; 4] = [0.95, 0.99, 0.995, 0.999];

/// Published time-to-finality figures (minutes) for other protocols, used as
/// fixed reference columns. Index order follows [`TABLE_CONFIDENCES`].
pub struct ReferenceRow {
    pub r_a: f64,
    pub bitcoin: [Option<f64>; 4],
    pub praos_v1: [Option<f64>; 4],
}

macro_rules! refrow {
    ($r:expr, [$($b:expr),*], [$($v:expr),*]) => {
        ReferenceRow { r_a: $r, bitcoin: [$($b),*], praos_v1: [$($v),*] }
    };
}

pub const REFERENCE_ROWS: [ReferenceRow; 11] = [
    refrow!(0.10, [Some(30.0), Some(40.0), Some(40.0), Some(50.0)], [Some(4.0), Some(6.0), Some(8.0), Some(10.0)]),
    refrow!(0.15, [Some(30.0), Some(40.0), Some(60.0), Some(80.0)], [Some(5.0), Some(10.0), Some(11.0), Some(16.0)]),
    refrow!(0.20, [Some(50.0), Some(70.0), Some(80.0), Some(110.0)], [Some(8.0), Some(14.0), Some(17.0), Some(24.0)]),
    refrow!(0.25, [Some(60.0), Some(100.0), Some(120.0), Some(150.0)], [Some(13.0), Some(23.0), Some(27.0), Some(37.0)]),
    refrow!(0.30, [Some(100.0), Some(160.0), Some(180.0), Some(240.0)], [Some(22.0), Some(38.0), Some(46.0), Some(63.0)]),
    refrow!(0.35, [Some(170.0), Some(270.0), Some(310.0), Some(410.0)], [Some(42.0), Some(74.0), Some(88.0), Some(121.0)]),
    refrow!(0.40, [Some(360.0), Some(580.0), Some(670.0), Some(890.0)], [Some(105.0), Some(183.0), Some(217.0), Some(296.0)]),
    refrow!(0.45, [Some(1370.0), Some(2200.0), Some(2560.0), Some(3400.0)], [Some(486.0), Some(831.0), Some(980.0), Some(1327.0)]),
    refrow!(0.46, [Some(2110.0), Some(3400.0), Some(3960.0), Some(5260.0)], [Some(794.0), Some(1347.0), Some(1586.0), Some(2143.0)]),
    refrow!(0.47, [Some(3710.0), Some(5970.0), Some(6950.0), Some(8330.0)], [Some(1487.0), Some(2506.0), Some(2946.0), Some(3969.0)]),
    refrow!(0.48, [Some(8030.0), None, None, None], [Some(3588.0), Some(5991.0), Some(7028.0), Some(9438.0)]),
];

/// Published QuickSync time-to-finality figures (minutes), for comparison
/// in reports.
pub const PUBLISHED_QS_MINUTES: [(f64, [f64; 4]); 11] = [
    (0.10, [2.0, 2.0, 3.0, 4.0]),
    (0.15, [2.0, 4.0, 4.0, 6.0]),
    (0.20, [3.0, 5.0, 6.0, 8.0]),
    (0.25, [4.0, 8.0, 10.0, 13.0]),
    (0.30, [8.0, 13.0, 15.0, 21.0]),
    (0.35, [14.0, 24.0, 28.0, 38.0]),
    (0.40, [31.0, 55.0, 66.0, 90.0]),
    (0.45, [127.0, 226.0, 268.0, 361.0]),
    (0.46, [203.0, 355.0, 428.0, 584.0]),
    (0.47, [362.0, 632.0, 747.0, 1041.0]),
    (0.48, [826.0, 1434.0, 1680.0, 2335.0]),
];

fn reference_for(r_a: f64) -> Option<&'static ReferenceRow> {
    REFERENCE_ROWS.iter().find(|r| (r.r_a - r_a).abs() < 1e-9)
}

/// One table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalityCell {
    pub confidence: f64,
    pub k: u64,
    pub minutes: f64,
    pub k_bound: u64,
    pub eta_hat: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalityRow {
    pub r_a: f64,
    pub cells: Vec<FinalityCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalityTable {
    pub method: TableMethod,
    pub s: f64,
    pub t_sl: f64,
    pub confidences: Vec<f64>,
    pub rows: Vec<FinalityRow>,
}

/// Options for the Monte Carlo method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub trials: u64,
    pub seed: u64,
}

/// Time-to-finality table, rows by adversary stake and columns by
/// confidence `1 - eta`. Minutes are `k * t_sl / 60`.
pub fn finality_table(
    r_a_list: &[f64],
    confidence_list: &[f64],
    s: f64,
    t_sl: f64,
    method: TableMethod,
    mc: McOptions,
) -> Result<FinalityTable, AnalysisError> {
    if r_a_list.is_empty() || confidence_list.is_empty() {
        return Err(AnalysisError::invalid("grid", "rows and columns must be non-empty".into()));
    }
    if !(t_sl > 0.0) {
        return Err(AnalysisError::invalid("t_sl", format!("must be positive, got {t_sl}")));
    }
    let targets: Vec<f64> = confidence_list.iter().map(|c| 1.0 - c).collect();
    let mut rows = Vec::with_capacity(r_a_list.len());
    for &r_a in r_a_list {
        let bp = BoundParams::new(r_a, s)?;
        let cells = match method {
            TableMethod::Bound => confidence_list
                .iter()
                .zip(&targets)
                .map(|(&conf, &eta)| {
                    let k = solve_k(&bp, eta)?;
                    Ok(FinalityCell {
                        confidence: conf,
                        k,
                        minutes: k as f64 * t_sl / 60.0,
                        k_bound: k,
                        eta_hat: None,
                        ci_high: None,
                    })
                })
                .collect::<Result<Vec<_>, AnalysisError>>()?,
            TableMethod::MonteCarlo => monte_carlo_ks(r_a, s, &targets, mc.trials, mc.seed)?
                .into_iter()
                .zip(confidence_list)
                .map(|(m, &conf)| FinalityCell {
                    confidence: conf,
                    k: m.k,
                    minutes: m.k as f64 * t_sl / 60.0,
                    k_bound: m.k_bound,
                    eta_hat: Some(m.eta_hat),
                    ci_high: Some(m.ci_high),
                })
                .collect(),
        };
        rows.push(FinalityRow { r_a, cells });
    }
    Ok(FinalityTable { method, s, t_sl, confidences: confidence_list.to_vec(), rows })
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

impl FinalityTable {
    /// CSV with one row per stake: finality minutes for each confidence,
    /// the matching depths, bound depths and fixed reference columns.
    pub fn to_csv(&self) -> String {
        let mut head = vec!["r_a".to_string(), "method".to_string()];
        for prefix in ["qs_min", "k", "k_bound", "btc_min", "praos_v1_min"] {
            for c in &self.confidences {
                head.push(format!("{prefix}_{}", fmt_num(*c)));
            }
        }
        let mut out = head.join(",");
        out.push('\n');
        for row in &self.rows {
            let mut f = vec![fmt_num(row.r_a), self.method.as_str().to_string()];
            f.extend(row.cells.iter().map(|c| fmt_num(c.minutes)));
            f.extend(row.cells.iter().map(|c| c.k.to_string()));
            f.extend(row.cells.iter().map(|c| c.k_bound.to_string()));
            let reference = reference_for(row.r_a);
            for pick in [|r: &ReferenceRow| r.bitcoin, |r: &ReferenceRow| r.praos_v1] {
                for c in &self.confidences {
                    let idx = TABLE_CONFIDENCES.iter().position(|x| (x - c).abs() < 1e-12);
                    f.push(fmt_opt(reference.zip(idx).and_then(|(r, i)| pick(r)[i])));
                }
            }
            out.push_str(&f.join(","));
            out.push('\n');
        }
        out
    }
}

/// Bound value for a depth, re-exported for report code.
pub fn bound_eta(r_a: f64, s: f64, k: u64) -> Result<f64, AnalysisError> {
    Ok(eta_bound(&BoundParams::new(r_a, s)?, k))
}
