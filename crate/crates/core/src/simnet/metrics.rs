//! Ledger-property metrics computed from a finished trace.

use serde::{Deserialize, Serialize};

use super::config::Strategy;
use super::trace::{Publisher, SimTrace};
use crate::analysis::stats::{wilson, Z95};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: u64,
    pub slots: u64,
    /// Blocks on the final honest chain per slot.
    pub zeta: f64,
    /// Smallest honest fraction over any window of `k` consecutive blocks.
    pub upsilon_worst: f64,
    /// Common-prefix events at depth `k`. For fork-building strategies these
    /// are attempts that held a chain at least `k` blocks deep and more
    /// powerful than the honest chain (checked from the attack depth on).
    /// For strategies that publish openly, a run of `k` adversary blocks on
    /// the final chain is such a chain, and each maximal run counts once.
    pub cp_violations: u64,
    /// Confirmed blocks dropped by honest nodes, summed over nodes.
    pub finality_violations: u64,
    pub fork_attempts: u64,
    pub fork_successes: u64,
    pub eta_hat: Option<f64>,
    pub eta_ci_low: Option<f64>,
    pub eta_ci_high: Option<f64>,
    pub tps_observed: f64,
    pub null_blocks: u64,
    pub adversary_blocks: u64,
    /// Slots whose delivery left honest nodes on different chains.
    pub divergent_slots: u64,
    pub adoptions: u64,
}

pub const METRICS_CSV_HEADER: &str = "seed,param_hash,version,k,slots,zeta,upsilon_worst,cp_violations,\
finality_violations,fork_attempts,fork_successes,eta_hat,eta_ci_low,eta_ci_high,tps_observed,null_blocks,\
adversary_blocks,divergent_slots,adoptions";

/// Honest fraction of the least honest `k`-block window. A chain shorter than
/// `k` is treated as one window.
pub fn upsilon_worst(publishers: &[Publisher], k: u64) -> f64 {
    if publishers.is_empty() {
        return 1.0;
    }
    let w = (k.max(1) as usize).min(publishers.len());
    let honest: Vec<u32> = publishers.iter().map(|p| (*p == Publisher::Honest) as u32).collect();
    let mut count: u32 = honest[..w].iter().sum();
    let mut worst = count;
    for i in w..honest.len() {
        count = count + honest[i] - honest[i - w];
        worst = worst.min(count);
    }
    worst as f64 / w as f64
}

/// Maximal runs of at least `k` consecutive adversary blocks.
pub fn adversary_runs(publishers: &[Publisher], k: u64) -> u64 {
    let mut runs = 0;
    let mut len = 0u64;
    for p in publishers.iter().chain(std::iter::once(&Publisher::Honest)) {
        if *p == Publisher::Adversary {
            len += 1;
        } else {
            runs += (len >= k.max(1)) as u64;
            len = 0;
        }
    }
    runs
}

pub fn measure(trace: &SimTrace, k: u64) -> MetricsReport {
    let cfg = &trace.meta.config;
    let slots = trace.slots.len() as u64;
    let zeta = if slots == 0 { 0.0 } else { trace.final_chain.len() as f64 / slots as f64 };
    let publishers: Vec<Publisher> = trace.final_chain.iter().map(|b| b.publisher).collect();
    let tracks_forks = matches!(cfg.strategy, Strategy::PrivateFork { .. } | Strategy::BorrowPower { .. });
    let f = &trace.forks;
    let attempts = f.resolved();
    let (eta_hat, lo, hi) = if attempts > 0 {
        let (lo, hi) = wilson(f.succeeded, attempts, Z95);
        (Some(f.succeeded as f64 / attempts as f64), Some(lo), Some(hi))
    } else {
        (None, None, None)
    };
    MetricsReport {
        k,
        slots,
        zeta,
        upsilon_worst: upsilon_worst(&publishers, k),
        cp_violations: if tracks_forks {
            trace.slots.iter().flat_map(|r| &r.e1_depths).filter(|d| **d >= k).count() as u64
        } else {
            adversary_runs(&publishers, k)
        },
        finality_violations: trace.slots.iter().map(|r| r.finality_violations as u64).sum(),
        fork_attempts: attempts,
        fork_successes: f.succeeded,
        eta_hat,
        eta_ci_low: lo,
        eta_ci_high: hi,
        tps_observed: cfg.tpb as f64 * zeta / cfg.params.slot_length_seconds,
        null_blocks: trace.final_chain.iter().filter(|b| b.null).count() as u64,
        adversary_blocks: publishers.iter().filter(|p| **p == Publisher::Adversary).count() as u64,
        divergent_slots: trace.slots.iter().filter(|r| !r.unanimous).count() as u64,
        adoptions: trace.slots.iter().map(|r| r.adoptions as u64).sum(),
    }
}

impl MetricsReport {
    pub fn to_json(&self, trace: &SimTrace) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            seed: u64,
            param_hash: &'a str,
            version: &'a str,
            #[serde(flatten)]
            metrics: &'a MetricsReport,
        }
        let m = &trace.meta;
        serde_json::to_string_pretty(&Out { seed: m.seed, param_hash: &m.param_hash, version: &m.version, metrics: self })
            .expect("metrics serialize")
    }

    /// Header plus one summary row.
    pub fn to_csv(&self, trace: &SimTrace) -> String {
        let o = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let m = &trace.meta;
        format!(
            "{METRICS_CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            m.seed,
            m.param_hash,
            m.version,
            self.k,
            self.slots,
            self.zeta,
            self.upsilon_worst,
            self.cp_violations,
            self.finality_violations,
            self.fork_attempts,
            self.fork_successes,
            o(self.eta_hat),
            o(self.eta_ci_low),
            o(self.eta_ci_high),
            self.tps_observed,
            self.null_blocks,
            self.adversary_blocks,
            self.divergent_slots,
            self.adoptions,
        )
    }
}
