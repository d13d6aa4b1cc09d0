//! The slot loop.
//!
//! Each slot runs in this order:
//!
//! 1. epoch rollover: a new context is derived from the honest chain;
//! 2. the adversary may show a chain to part of the honest stake;
//! 3. an activity subset of honest nodes selects a chain and builds;
//! 4. the adversary may publish blocks of its own;
//! 5. published blocks are validated best-first and the winning chain is
//!    delivered to every honest node;
//! 6. the adversary reacts to the delivered chain (private forks, reveals,
//!    withheld data);
//! 7. honest nodes confirm.
//!
//! With the slot length equal to the delivery bound, every honest node sees
//! the best published chain before the next slot starts.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::{SimConfig, SimConfigError};
use super::strategy::Adversary;
use super::trace::{ChainBlock, ForkStats, Publisher, SimTrace, SlotRecord, TraceMeta};
use crate::analysis::AnalysisError;
use crate::chain::{Block, Chain, ChainError, EpochContext, GenesisBlock, ProtocolParams, Stake, StakeMap, Tx};
use crate::node::{NodeError, NodeState};
use crate::power::{header_power, PowerError, PowerRank};
use crate::primitives::{Beacon, KeyPair, KeyRegistry, PrimitiveError, PublicKey};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] SimConfigError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("no valid block published in slot {0}")]
    EmptySlot(u64),
}

/// Offset separating adversary identity indices from honest ones.
pub(crate) const ADVERSARY_INDEX_BASE: u64 = 1 << 32;

/// The single synthetic transaction a block carries.
pub(crate) fn synthetic_tx(slot: u64, who: u64) -> Tx {
    let mut tx = Vec::with_capacity(16);
    tx.extend_from_slice(&slot.to_be_bytes());
    tx.extend_from_slice(&who.to_be_bytes());
    tx
}

/// A block published in the current slot, with the chain it extends.
#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub parent: Chain,
    pub block: Block,
    pub rank: PowerRank,
    pub publisher: Publisher,
}

impl Candidate {
    pub fn new(parent: &Chain, block: Block, publisher: Publisher, scale: f64) -> Result<Self, SimError> {
        let bp = header_power(block.header(), scale)?.value();
        let rank = PowerRank::new(parent.power_sum().add(bp).value(), block.hash());
        Ok(Candidate { parent: parent.clone(), block, rank, publisher })
    }
}

/// Shared simulation state handed to the adversary.
pub(crate) struct Net {
    pub params: ProtocolParams,
    pub genesis: Arc<GenesisBlock>,
    pub registry: KeyRegistry,
    pub beacon: Beacon,
    pub nodes: Vec<NodeState>,
    /// Stake power of each honest node.
    pub honest_alpha: Vec<f64>,
    pub rng: ChaCha8Rng,
    contexts: BTreeMap<u64, EpochContext>,
}

impl Net {
    pub fn ctx(&self, slot: u64) -> &EpochContext {
        let epoch = self.params.epoch_of(slot);
        self.contexts.get(&epoch).expect("context derived at epoch rollover")
    }

    /// Longest, then most powerful, chain held by an honest node.
    pub fn reference(&self) -> &Chain {
        self.nodes
            .iter()
            .map(|n| n.held())
            .max_by(|a, b| a.len().cmp(&b.len()).then(a.rank().cmp(&b.rank())))
            .expect("at least one honest node")
    }

    /// Offers `chain` to the listed nodes and returns how many switched.
    pub fn show(&mut self, who: &[usize], chain: &Chain, rec: &mut SlotRecord) -> Result<u32, SimError> {
        let mut adopted = 0;
        for &i in who {
            let a = self.nodes[i].adopt(chain)?;
            adopted += a.adopted as u32;
            rec.finality_violations += a.violation as u32;
        }
        rec.adoptions += adopted;
        Ok(adopted)
    }

    pub fn show_all(&mut self, chain: &Chain, rec: &mut SlotRecord) -> Result<u32, SimError> {
        let all: Vec<usize> = (0..self.nodes.len()).collect();
        self.show(&all, chain, rec)
    }

    pub fn extend(&self, parent: &Chain, block: Block) -> Result<Chain, SimError> {
        let slot = block.slot();
        Ok(parent.extend(block, self.ctx(slot), &self.registry)?)
    }

    /// Random partition of the honest nodes into `groups` non-empty parts.
    pub fn partition(&mut self, groups: usize) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.nodes.len()).collect();
        idx.shuffle(&mut self.rng);
        let g = groups.clamp(1, idx.len());
        let mut out = vec![Vec::new(); g];
        for (j, i) in idx.into_iter().enumerate() {
            out[j % g].push(i);
        }
        out
    }
}

/// Runs a validated configuration to the horizon. Deterministic in the
/// configuration.
pub fn run(cfg: &SimConfig) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    let params = cfg.params.clone();
    let n_honest = cfg.honest_stakes.len();
    let identities = if cfg.adversary_stake > 0.0 { cfg.strategy.identities() as usize } else { 0 };

    let mut weights = cfg.honest_stakes.clone();
    weights.extend(std::iter::repeat_n(cfg.adversary_stake / identities.max(1) as f64, identities));
    let stakes = Stake::apportion(&weights)?;
    let honest_keys: Vec<KeyPair> = (0..n_honest as u64).map(|i| KeyPair::derive(cfg.rng_seed, i)).collect();
    let adversary_keys: Vec<KeyPair> =
        (0..identities as u64).map(|j| KeyPair::derive(cfg.rng_seed, ADVERSARY_INDEX_BASE + j)).collect();

    let mut registry = KeyRegistry::new();
    let mut map = StakeMap::new();
    for (k, s) in honest_keys.iter().chain(&adversary_keys).zip(&stakes) {
        registry.register(k)?;
        map.insert(k.public_key(), *s);
    }
    let genesis = Arc::new(GenesisBlock::new(params.clone(), map)?);
    let g = Chain::genesis_only(genesis.clone());
    let nodes: Vec<NodeState> = honest_keys
        .iter()
        .zip(&stakes)
        .map(|(k, s)| NodeState::new(k.clone(), *s, g.clone(), params.confirm_depth))
        .collect();
    let honest_alpha: Vec<f64> = stakes[..n_honest].iter().map(|s| s.as_f64() * params.scale_factor).collect();
    let adversary_set: HashSet<PublicKey> = adversary_keys.iter().map(|k| k.public_key()).collect();
    let adversary_ids = adversary_keys.into_iter().zip(stakes[n_honest..].iter().copied()).collect();

    let mut net = Net {
        params: params.clone(),
        genesis,
        registry,
        beacon: Beacon::new(cfg.rng_seed),
        nodes,
        honest_alpha,
        rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
        contexts: BTreeMap::new(),
    };
    let mut adversary = Adversary::new(cfg, adversary_ids)?;
    let r_h = stakes[..n_honest].iter().map(|s| s.as_f64()).sum::<f64>();

    let mut slots = Vec::with_capacity(cfg.horizon_slots as usize);
    for slot in 1..=cfg.horizon_slots {
        let epoch = params.epoch_of(slot);
        if !net.contexts.contains_key(&epoch) {
            let ctx = EpochContext::derive(net.reference(), &net.beacon, epoch)?;
            net.contexts.insert(epoch, ctx);
        }
        let mut rec = SlotRecord {
            slot,
            epoch,
            tip: net.genesis.hash(),
            height: 0,
            honest_power: 0.0,
            adversary_block_power: None,
            adversary_private_power: None,
            honest_published: 0,
            adversary_published: 0,
            winner: Publisher::Honest,
            winner_power: 0.0,
            null_block: false,
            unanimous: true,
            adoptions: 0,
            finality_violations: 0,
            reveal_depth: None,
            e1_depths: Vec::new(),
            borrowed_power: None,
        };

        adversary.before_build(&mut net, slot, &mut rec)?;

        let active = active_subset(&mut net, cfg.activity.fraction(slot) * r_h);
        let mut candidates = Vec::with_capacity(active.len() + 1);
        for i in active {
            let seed = net.ctx(slot).seed.clone();
            let node = &mut net.nodes[i];
            node.select(slot)?;
            node.advance_key(slot)?;
            let block = node.build_block(slot, vec![synthetic_tx(slot, i as u64)], &seed, params.kappa)?;
            candidates.push(Candidate::new(node.held(), block, Publisher::Honest, params.scale_factor)?);
        }
        rec.honest_published = candidates.len() as u32;
        let published = adversary.publish(&mut net, slot, &mut rec)?;
        rec.adversary_published += published.len() as u32;
        candidates.extend(published);

        // Best first; losing headers are never validated.
        candidates.sort_by(|a, b| b.rank.cmp(&a.rank));
        let mut delivered = None;
        for c in &candidates {
            if let Ok(chain) = net.extend(&c.parent, c.block.clone()) {
                delivered = Some((chain, c.publisher));
                break;
            }
        }
        let (best, winner) = delivered.ok_or(SimError::EmptySlot(slot))?;
        rec.winner = winner;
        rec.winner_power = best.tip_block_power().unwrap_or(0.0);
        rec.null_block = best.tip().is_some_and(|b| b.is_null());
        for node in net.nodes.iter_mut() {
            let a = node.adopt(&best)?;
            rec.finality_violations += a.violation as u32;
        }
        rec.unanimous = net.nodes.windows(2).all(|w| w[0].held() == w[1].held());

        adversary.after_delivery(&mut net, slot, &best, &candidates, &mut rec)?;

        for node in net.nodes.iter_mut() {
            node.confirm();
        }
        let reference = net.reference();
        rec.tip = reference.tip_hash();
        rec.height = reference.len();
        rec.honest_power = reference.power();
        slots.push(rec);
    }

    let final_chain = net
        .reference()
        .iter_rev()
        .zip(net.reference().block_powers_rev())
        .map(|(b, p)| ChainBlock {
            slot: b.slot(),
            hash: b.hash(),
            publisher: if adversary_set.contains(&b.header().publisher_key) {
                Publisher::Adversary
            } else {
                Publisher::Honest
            },
            block_power: p,
            null: b.is_null(),
            prev_null: b.header().prev_null,
        })
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let mut forks = ForkStats::default();
    adversary.finish(&mut forks);
    Ok(SimTrace {
        meta: TraceMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.rng_seed,
            param_hash: cfg.param_hash(),
            strategy: cfg.strategy.name().to_string(),
            attack_depth: cfg.strategy.depth(&params),
            config: cfg.clone(),
        },
        slots,
        final_chain,
        forks,
    })
}

/// Honest nodes online this slot: a random subset whose stake reaches
/// `target`, never empty.
fn active_subset(net: &mut Net, target: f64) -> Vec<usize> {
    let n = net.nodes.len();
    let total: f64 = net.nodes.iter().map(|x| x.stake().as_f64()).sum();
    if target >= total - 1e-12 {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut net.rng);
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in idx {
        if acc >= target - 1e-12 && !out.is_empty() {
            break;
        }
        acc += net.nodes[i].stake().as_f64();
        out.push(i);
    }
    out.sort_unstable();
    out
}
