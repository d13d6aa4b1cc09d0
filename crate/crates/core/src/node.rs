//! Honest node state machine: chain selection, block building, the
//! best-header download schedule, confirmation and adoption.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Block, BlockData, BlockHeader, Chain, ChainError, Stake, Tx};
use crate::power::{header_power, PowerError, PowerRank};
use crate::primitives::{vrf_eval, Digest, EpochSeed, KeyPair, PrimitiveError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeError {
    #[error("no valid chain for slot {0}")]
    NoValidChain(u64),
    #[error("held chain has length {len}, slot {slot} needs {}", slot - 1)]
    WrongChainLength { len: u64, slot: u64 },
    #[error(transparent)]
    Key(#[from] PrimitiveError),
    #[error("offered chain forks below checkpoint {checkpoint} (common prefix {common})")]
    CheckpointConflict { checkpoint: u64, common: u64 },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// Chain selection: among chains of length `slot - 1`, the most powerful,
/// with the smaller tip hash breaking exact ties.
pub fn select_chain<'a, I>(view: I, slot: u64) -> Result<&'a Chain, NodeError>
where
    I: IntoIterator<Item = &'a Chain>,
{
    let want = slot.checked_sub(1).ok_or(NodeError::NoValidChain(slot))?;
    view.into_iter()
        .filter(|c| c.len() == want)
        .max_by_key(|c| c.rank())
        .ok_or(NodeError::NoValidChain(slot))
}

/// What a node does with its data download when a header arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownloadAction {
    Start,
    Preempt,
    Ignore,
}

/// Per-slot download schedule: only the data of the best header seen so far
/// is ever fetched.
#[derive(Debug, Clone, Default)]
pub struct DownloadStack {
    best_known: Option<PowerRank>,
    in_progress: Option<(Digest, f64)>,
    completed: HashSet<Digest>,
}

impl DownloadStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_known(&self) -> Option<PowerRank> {
        self.best_known
    }

    /// Header hash and fraction downloaded, if a download is running.
    pub fn in_progress(&self) -> Option<(Digest, f64)> {
        self.in_progress
    }

    pub fn is_completed(&self, hash: &Digest) -> bool {
        self.completed.contains(hash)
    }

    /// Offers a header whose power under the node's scale factor is known.
    pub fn offer_ranked(&mut self, rank: PowerRank) -> DownloadAction {
        if self.best_known.is_some_and(|b| rank <= b) {
            return DownloadAction::Ignore;
        }
        self.best_known = Some(rank);
        let action = if self.in_progress.is_some() { DownloadAction::Preempt } else { DownloadAction::Start };
        self.in_progress = Some((rank.hash, 0.0));
        action
    }

    pub fn offer_header(&mut self, h: &BlockHeader, scale: f64) -> Result<DownloadAction, PowerError> {
        let p = header_power(h, scale)?.value();
        Ok(self.offer_ranked(PowerRank::new(p, h.hash())))
    }

    /// Advances the running download. Returns the hash once it completes.
    pub fn progress(&mut self, fraction: f64) -> Option<Digest> {
        let (hash, done) = self.in_progress.as_mut()?;
        *done = (*done + fraction).min(1.0);
        if *done >= 1.0 {
            let h = *hash;
            self.completed.insert(h);
            self.in_progress = None;
            return Some(h);
        }
        None
    }

    /// Clears the per-slot best header. Completed downloads are kept.
    pub fn reset_slot(&mut self) {
        self.best_known = None;
        self.in_progress = None;
    }
}

/// Result of offering a chain to a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adoption {
    pub adopted: bool,
    pub violation: bool,
    /// Blocks of the previously held chain that were replaced.
    pub fork_depth: u64,
}

/// One honest stakeholder.
#[derive(Debug, Clone)]
pub struct NodeState {
    keys: KeyPair,
    stake: Stake,
    confirm_depth: u64,
    known: Vec<Chain>,
    held: Chain,
    confirmed: u64,
    checkpoint: u64,
    late_data: HashSet<Digest>,
    violations: u64,
    pub download: DownloadStack,
}

impl NodeState {
    pub fn new(keys: KeyPair, stake: Stake, genesis_chain: Chain, confirm_depth: u64) -> Self {
        NodeState {
            keys,
            stake,
            confirm_depth,
            known: vec![genesis_chain.clone()],
            held: genesis_chain,
            confirmed: 0,
            checkpoint: 0,
            late_data: HashSet::new(),
            violations: 0,
            download: DownloadStack::new(),
        }
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn stake(&self) -> Stake {
        self.stake
    }

    pub fn held(&self) -> &Chain {
        &self.held
    }

    pub fn known_chains(&self) -> &[Chain] {
        &self.known
    }

    /// Length of the confirmed prefix of the held chain.
    pub fn confirmed(&self) -> u64 {
        self.confirmed
    }

    pub fn checkpoint(&self) -> u64 {
        self.checkpoint
    }

    /// Freezes the first `len` blocks of the held chain.
    pub fn set_checkpoint(&mut self, len: u64) {
        self.checkpoint = len.min(self.held.len());
    }

    pub fn violations(&self) -> u64 {
        self.violations
    }

    /// Evolves the node's key to `slot`, destroying earlier slot keys.
    pub fn advance_key(&mut self, slot: u64) -> Result<(), NodeError> {
        self.keys = self.keys.evolve(slot)?;
        Ok(())
    }

    /// Whether the node holds the data of `block`.
    pub fn has_data(&self, block: &Block) -> bool {
        block.data().is_some() || self.late_data.contains(&block.hash())
    }

    /// Records data that arrived after its header. Headers built earlier keep
    /// their null flags.
    pub fn receive_block_data(&mut self, block_hash: Digest) {
        self.late_data.insert(block_hash);
    }

    /// Re-runs chain selection over the known chains for `slot`.
    pub fn select(&mut self, slot: u64) -> Result<&Chain, NodeError> {
        let best = select_chain(&self.known, slot)?.clone();
        if best != self.held {
            self.switch_to(best);
        }
        Ok(&self.held)
    }

    /// Builds this node's block for `slot` on the held chain.
    pub fn build_block(&self, slot: u64, txs: Vec<Tx>, seed: &EpochSeed, kappa: u32) -> Result<Block, NodeError> {
        if self.held.len() + 1 != slot {
            return Err(NodeError::WrongChainLength { len: self.held.len(), slot });
        }
        let vrf = vrf_eval(self.keys.slot_key(), slot, seed, kappa)?;
        let prev_null = self.held.tip().is_some_and(|b| !self.has_data(b));
        let data = BlockData::new(txs);
        let header = BlockHeader {
            publisher_key: self.keys.public_key(),
            publisher_stake: self.stake,
            slot,
            prev_hash: self.held.tip_hash(),
            prev_null,
            vrf,
            data_root: data.root(),
        };
        Ok(Block::new(header, data)?)
    }

    /// Confirms blocks up to depth `k` below the tip. Returns the newly
    /// confirmed blocks in slot order.
    pub fn confirm(&mut self) -> Vec<Block> {
        let target = self.held.len().saturating_sub(self.confirm_depth);
        if target <= self.confirmed {
            return Vec::new();
        }
        let mut out: Vec<Block> = self
            .held
            .iter_rev()
            .skip((self.held.len() - target) as usize)
            .take((target - self.confirmed) as usize)
            .cloned()
            .collect();
        out.reverse();
        self.confirmed = target;
        out
    }

    /// Offers a chain. The node keeps it as a candidate and switches to it if
    /// it is longer than the held chain, or equally long and more powerful.
    /// A violation is flagged when the switch drops a confirmed block.
    pub fn adopt(&mut self, offered: &Chain) -> Result<Adoption, NodeError> {
        let common = offered.common_prefix_len(&self.held);
        if common < self.checkpoint {
            return Err(NodeError::CheckpointConflict { checkpoint: self.checkpoint, common });
        }
        let better = offered.len() > self.held.len()
            || (offered.len() == self.held.len() && offered.rank() > self.held.rank());
        if offered.len() >= self.held.len() && !self.known.iter().any(|c| c == offered) {
            self.known.push(offered.clone());
        }
        if !better {
            return Ok(Adoption { adopted: false, violation: false, fork_depth: 0 });
        }
        let fork_depth = self.held.len() - common;
        let violation = self.switch_to(offered.clone());
        Ok(Adoption { adopted: true, violation, fork_depth })
    }

    fn switch_to(&mut self, chain: Chain) -> bool {
        let common = chain.common_prefix_len(&self.held);
        let violation = common < self.confirmed;
        if violation {
            self.violations += 1;
            self.confirmed = common;
        }
        self.held = chain;
        let len = self.held.len();
        self.known.retain(|c| c.len() >= len);
        violation
    }
}
