//! Slot-synchronous network simulator, adversary strategies, ledger metrics
//! and the abstract power race used for finality estimates.

pub mod config;
pub mod engine;
pub mod metrics;
pub mod race;
mod strategy;
pub mod trace;

pub use config::{Activity, SimConfig, SimConfigError, Strategy};
pub use engine::{run, SimError};
pub use metrics::{measure, MetricsReport};
pub use strategy::{sybil_effective_powers, DEFAULT_BORROW_RESOLUTION};
pub use trace::{ChainBlock, ForkStats, Publisher, SimTrace, SlotRecord};
