//! Per-slot simulation records and their export formats.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::primitives::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Publisher {
    Honest,
    Adversary,
}

impl Publisher {
    pub fn as_str(self) -> &'static str {
        match self {
            Publisher::Honest => "honest",
            Publisher::Adversary => "adversary",
        }
    }
}

/// State at the end of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub epoch: u64,
    /// Best chain held by any honest node.
    pub tip: Digest,
    pub height: u64,
    pub honest_power: f64,
    /// Largest adversary block power this slot.
    pub adversary_block_power: Option<f64>,
    /// Power of the adversary's strongest withheld chain.
    pub adversary_private_power: Option<f64>,
    pub honest_published: u32,
    pub adversary_published: u32,
    /// Publisher of the block every honest node received this slot.
    pub winner: Publisher,
    pub winner_power: f64,
    /// The delivered block was published without data.
    pub null_block: bool,
    /// All honest nodes held one chain right after delivery.
    pub unanimous: bool,
    /// Honest nodes that switched to a chain the adversary showed them.
    pub adoptions: u32,
    /// Confirmed blocks dropped by honest nodes.
    pub finality_violations: u32,
    /// Fork depth of a chain revealed to every honest node.
    pub reveal_depth: Option<u64>,
    /// Fork depths of attempts that this slot first held a chain at least
    /// the attack depth long and more powerful than the honest chain.
    pub e1_depths: Vec<u64>,
    /// Honest stake power shown the adversary chain before building.
    pub borrowed_power: Option<f64>,
}

/// Summary of one block of the final honest chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainBlock {
    pub slot: u64,
    pub hash: Digest,
    pub publisher: Publisher,
    pub block_power: f64,
    pub null: bool,
    pub prev_null: bool,
}

/// Outcome counts for fork attempts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkStats {
    pub started: u64,
    pub succeeded: u64,
    pub abandoned: u64,
    pub truncated: u64,
    /// Dropped because a reveal orphaned their origin.
    pub censored: u64,
    /// Still running at the horizon.
    pub open: u64,
    pub borrow_slots: u64,
}

impl ForkStats {
    pub fn resolved(&self) -> u64 {
        self.succeeded + self.abandoned + self.truncated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub version: String,
    pub seed: u64,
    pub param_hash: String,
    pub strategy: String,
    pub attack_depth: u64,
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub meta: TraceMeta,
    pub slots: Vec<SlotRecord>,
    pub final_chain: Vec<ChainBlock>,
    pub forks: ForkStats,
}

pub const SLOT_CSV_HEADER: &str = "slot,epoch,tip,height,honest_power,adversary_block_power,adversary_private_power,\
honest_published,adversary_published,winner,winner_power,null_block,unanimous,adoptions,finality_violations,\
reveal_depth,e1_events,borrowed_power";

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl SimTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    /// One row per slot; the first two lines are `#` comments carrying the
    /// seed, parameter hash and version.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let m = &self.meta;
        let _ = writeln!(out, "# quicksync {} seed={} param_hash={}", m.version, m.seed, m.param_hash);
        let _ = writeln!(out, "# strategy={} attack_depth={}", m.strategy, m.attack_depth);
        out.push_str(SLOT_CSV_HEADER);
        out.push('\n');
        for r in &self.slots {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.slot,
                r.epoch,
                r.tip,
                r.height,
                r.honest_power,
                opt(r.adversary_block_power),
                opt(r.adversary_private_power),
                r.honest_published,
                r.adversary_published,
                r.winner.as_str(),
                r.winner_power,
                r.null_block,
                r.unanimous,
                r.adoptions,
                r.finality_violations,
                opt(r.reveal_depth),
                r.e1_depths.len(),
                opt(r.borrowed_power),
            );
        }
        out
    }
}
