//! QuickSync: a block-power proof-of-stake protocol model.
//!
//! The crate is layered bottom-up:
//!
//! * [`primitives`]: simulation-grade VRF, evolving keys, hashing, Merkle roots
//!   and the per-epoch beacon.
//! * [`chain`]: headers, blocks, persistent chains and stake snapshots.
//! * [`power`]: block power, chain power and the Sybil-resistant density.
//! * [`node`]: the honest node state machine.
//! * [`simnet`]: a slot-synchronous simulator with adversary strategies.
//! * [`analysis`]: finality bounds, Monte Carlo estimators and attack
//!   calculators.

pub mod analysis;
pub mod chain;
pub mod node;
pub mod power;
pub mod primitives;
pub mod simnet;
