//! Adversary strategies.
//!
//! The adversary is rushing: it sees every block published in a slot before
//! it acts, and it can show chains to any subset of honest nodes at the slot
//! boundary. Its stake is held by one identity (by the Sybil identity this
//! has the same per-slot power law as any split of it), except under
//! `sybil_split`.

use std::collections::VecDeque;
use std::sync::Arc;

use super::config::{SimConfig, Strategy};
use super::engine::{synthetic_tx, Candidate, Net, SimError, ADVERSARY_INDEX_BASE};
use super::race::{default_m_max, ABANDON_SIGMAS};
use super::trace::{ForkStats, Publisher, SlotRecord};
use crate::analysis::bound::power_variance;
use crate::analysis::BorrowPolicy;
use crate::chain::{Block, BlockData, BlockHeader, Chain, Stake};
use crate::power::block_power;
use crate::primitives::{vrf_eval, Beacon, Digest, EpochSeed, KeyPair, VrfOutput};

/// Grid resolution of the borrow-power policy when none is configured.
pub const DEFAULT_BORROW_RESOLUTION: usize = 16;

/// One adversary key with its stake.
#[derive(Debug, Clone)]
pub(crate) struct Identity {
    keys: KeyPair,
    stake: Stake,
}

impl Identity {
    /// VRF output and block power for `slot`. Evolves the key, so slots must
    /// be visited in order.
    fn eval(&mut self, slot: u64, seed: &EpochSeed, kappa: u32, scale: f64) -> Result<(VrfOutput, f64), SimError> {
        self.keys = self.keys.evolve(slot)?;
        let vrf = vrf_eval(self.keys.slot_key(), slot, seed, kappa)?;
        let p = block_power(&vrf.uniform_output, kappa, self.stake.as_f64(), scale)?.value();
        Ok((vrf, p))
    }

    fn block(&self, slot: u64, vrf: VrfOutput, parent: &Chain, variant: u64, with_data: bool) -> Result<Block, SimError> {
        let data = BlockData::new(vec![synthetic_tx(slot, ADVERSARY_INDEX_BASE + variant)]);
        let header = BlockHeader {
            publisher_key: self.keys.public_key(),
            publisher_stake: self.stake,
            slot,
            prev_hash: parent.tip_hash(),
            prev_null: false,
            vrf,
            data_root: data.root(),
        };
        if with_data {
            Ok(Block::new(header, data)?)
        } else {
            Ok(Block::header_only(header))
        }
    }
}

fn eval_for(net: &Net, id: &mut Identity, slot: u64) -> Result<(VrfOutput, f64), SimError> {
    let seed = net.ctx(slot).seed.clone();
    id.eval(slot, &seed, net.params.kappa, net.params.scale_factor)
}

/// Per-slot standard deviation of the power difference.
fn race_sigma(net: &Net, adversary: &Identity) -> f64 {
    let alpha_a = adversary.stake.as_f64() * net.params.scale_factor;
    let alpha_h: f64 = net.honest_alpha.iter().sum();
    (power_variance(alpha_a) + power_variance(alpha_h)).sqrt()
}

pub(crate) enum Adversary {
    Idle,
    PrivateFork(PrivateFork),
    SplitN { id: Identity, subsets: usize },
    Borrow(Box<Borrow>),
    MissingData { id: Identity, release_after: Option<u64>, pending: VecDeque<(u64, Digest)> },
    Sybil { ids: Vec<Identity> },
}

impl Adversary {
    pub fn new(cfg: &SimConfig, keys: Vec<(KeyPair, Stake)>) -> Result<Self, SimError> {
        let mut ids: Vec<Identity> = keys.into_iter().map(|(keys, stake)| Identity { keys, stake }).collect();
        if ids.is_empty() {
            return Ok(Adversary::Idle);
        }
        let depth = cfg.strategy.depth(&cfg.params);
        Ok(match &cfg.strategy {
            Strategy::None => Adversary::Idle,
            Strategy::PrivateFork { passive, .. } => Adversary::PrivateFork(PrivateFork {
                id: ids.remove(0),
                passive: *passive,
                depth,
                m_max: default_m_max(depth),
                vrfs: VecDeque::new(),
                attempts: Vec::new(),
                stats: ForkStats::default(),
            }),
            Strategy::SplitN { subsets } => Adversary::SplitN { id: ids.remove(0), subsets: *subsets },
            Strategy::BorrowPower { resolution, .. } => {
                let alpha_h = cfg.honest_total() * cfg.params.scale_factor;
                let policy = BorrowPolicy::build(alpha_h, resolution.unwrap_or(DEFAULT_BORROW_RESOLUTION))?;
                Adversary::Borrow(Box::new(Borrow {
                    id: ids.remove(0),
                    depth,
                    m_max: default_m_max(depth),
                    policy: Arc::new(policy),
                    attempt: None,
                    own: None,
                    stats: ForkStats::default(),
                }))
            }
            Strategy::MissingData { release_after } => {
                Adversary::MissingData { id: ids.remove(0), release_after: *release_after, pending: VecDeque::new() }
            }
            Strategy::SybilSplit { .. } => Adversary::Sybil { ids },
        })
    }

    pub fn before_build(&mut self, net: &mut Net, slot: u64, rec: &mut SlotRecord) -> Result<(), SimError> {
        if let Adversary::Borrow(b) = self {
            b.before_build(net, slot, rec)?;
        }
        Ok(())
    }

    /// Blocks the adversary publishes alongside the honest ones.
    pub fn publish(&mut self, net: &mut Net, slot: u64, rec: &mut SlotRecord) -> Result<Vec<Candidate>, SimError> {
        let scale = net.params.scale_factor;
        match self {
            Adversary::MissingData { id, pending, .. } => {
                let parent = net.reference().clone();
                let (vrf, p) = eval_for(net, id, slot)?;
                rec.adversary_block_power = Some(p);
                let block = id.block(slot, vrf, &parent, 0, false)?;
                pending.push_back((slot, block.hash()));
                Ok(vec![Candidate::new(&parent, block, Publisher::Adversary, scale)?])
            }
            Adversary::Sybil { ids } => {
                let parent = net.reference().clone();
                let mut out = Vec::with_capacity(ids.len());
                let mut best = 0.0f64;
                for (j, id) in ids.iter_mut().enumerate() {
                    let (vrf, p) = eval_for(net, id, slot)?;
                    best = best.max(p);
                    let block = id.block(slot, vrf, &parent, j as u64, true)?;
                    out.push(Candidate::new(&parent, block, Publisher::Adversary, scale)?);
                }
                rec.adversary_block_power = Some(best);
                Ok(out)
            }
            _ => Ok(Vec::new()),
        }
    }

    pub fn after_delivery(
        &mut self,
        net: &mut Net,
        slot: u64,
        best: &Chain,
        published: &[Candidate],
        rec: &mut SlotRecord,
    ) -> Result<(), SimError> {
        match self {
            Adversary::Idle | Adversary::Sybil { .. } => Ok(()),
            Adversary::PrivateFork(pf) => pf.after_delivery(net, slot, best, rec),
            Adversary::Borrow(b) => b.after_delivery(net, slot, best, published, rec),
            Adversary::SplitN { id, subsets } => {
                let parent = best.truncate(slot - 1);
                let (vrf, p) = eval_for(net, id, slot)?;
                rec.adversary_block_power = Some(p);
                let groups = net.partition(*subsets);
                rec.adversary_published += groups.len() as u32;
                for (j, group) in groups.iter().enumerate() {
                    let variant = net.extend(&parent, id.block(slot, vrf.clone(), &parent, j as u64, true)?)?;
                    net.show(group, &variant, rec)?;
                }
                Ok(())
            }
            Adversary::MissingData { release_after, pending, .. } => {
                if let Some(r) = *release_after {
                    while pending.front().is_some_and(|(s, _)| s + r <= slot) {
                        let (_, hash) = pending.pop_front().expect("checked non-empty");
                        for node in net.nodes.iter_mut() {
                            node.receive_block_data(hash);
                        }
                    }
                } else {
                    pending.clear();
                }
                Ok(())
            }
        }
    }

    pub fn finish(&self, stats: &mut ForkStats) {
        match self {
            Adversary::PrivateFork(pf) => {
                *stats = pf.stats;
                stats.open = pf.attempts.len() as u64;
            }
            Adversary::Borrow(b) => {
                *stats = b.stats;
                stats.open = b.attempt.is_some() as u64;
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Attempt {
    /// Length of the shared prefix; the fork's first block is at `origin + 1`.
    origin: u64,
    /// Private chain power minus honest chain power.
    lead: f64,
}

/// A fork attempt starts at every slot. Attempts run concurrently; the
/// adversary's block for a slot is the same on every branch since its VRF
/// does not depend on the parent.
pub(crate) struct PrivateFork {
    id: Identity,
    passive: bool,
    depth: u64,
    m_max: u64,
    /// Stored VRF outputs of recent slots; the key itself has moved on.
    vrfs: VecDeque<(u64, VrfOutput)>,
    attempts: Vec<Attempt>,
    stats: ForkStats,
}

impl PrivateFork {
    fn after_delivery(&mut self, net: &mut Net, slot: u64, best: &Chain, rec: &mut SlotRecord) -> Result<(), SimError> {
        let (vrf, p) = eval_for(net, &mut self.id, slot)?;
        rec.adversary_block_power = Some(p);
        self.vrfs.push_back((slot, vrf));
        while self.vrfs.front().is_some_and(|(s, _)| s + self.m_max < slot) {
            self.vrfs.pop_front();
        }
        let honest = best.tip_block_power().unwrap_or(0.0);
        self.attempts.push(Attempt { origin: slot - 1, lead: 0.0 });
        self.stats.started += 1;
        for a in &mut self.attempts {
            a.lead += p - honest;
        }

        if self.passive {
            let depth = self.depth;
            let stats = &mut self.stats;
            self.attempts.retain(|a| {
                let hit = a.lead > 0.0 && slot - a.origin >= depth;
                if hit {
                    stats.succeeded += 1;
                    rec.e1_depths.push(slot - a.origin);
                }
                !hit
            });
        }
        let held = net.reference().clone();
        let mut ready: Vec<usize> =
            (0..self.attempts.len()).filter(|&i| self.ready(self.attempts[i], slot)).collect();
        ready.sort_by_key(|&i| self.attempts[i].origin);
        let mut revealed = None;
        for &i in &ready {
            let chain = self.materialize(net, &held, self.attempts[i].origin, slot)?;
            if chain.rank() > held.rank() {
                revealed = Some((self.attempts[i], chain));
                break;
            }
        }
        if let Some((r, chain)) = revealed {
            net.show_all(&chain, rec)?;
            rec.reveal_depth = Some(slot - r.origin);
            let mut kept = Vec::with_capacity(self.attempts.len());
            for a in self.attempts.drain(..) {
                if a.lead > 0.0 && slot - a.origin >= self.depth {
                    self.stats.succeeded += 1;
                    rec.e1_depths.push(slot - a.origin);
                } else if a.origin < r.origin {
                    kept.push(Attempt { origin: a.origin, lead: a.lead - r.lead });
                } else {
                    self.stats.censored += 1;
                }
            }
            self.attempts = kept;
        }

        let floor = -ABANDON_SIGMAS * race_sigma(net, &self.id);
        let m_max = self.m_max;
        let stats = &mut self.stats;
        self.attempts.retain(|a| {
            if a.lead < floor {
                stats.abandoned += 1;
                false
            } else if slot - a.origin >= m_max {
                stats.truncated += 1;
                false
            } else {
                true
            }
        });
        let held_power = net.reference().power();
        rec.adversary_private_power = self.attempts.iter().map(|a| held_power + a.lead).max_by(f64::total_cmp);
        Ok(())
    }

    fn ready(&self, a: Attempt, slot: u64) -> bool {
        a.lead > 0.0 && slot - a.origin >= self.depth
    }

    /// Builds the withheld chain of an attempt from the stored VRF outputs.
    fn materialize(&self, net: &Net, held: &Chain, origin: u64, slot: u64) -> Result<Chain, SimError> {
        let mut chain = held.truncate(origin);
        for (s, vrf) in &self.vrfs {
            if *s > origin && *s <= slot {
                chain = net.extend(&chain, self.id.block(*s, vrf.clone(), &chain, 0, true)?)?;
            }
        }
        Ok(chain)
    }
}

/// Borrow-power attack with a multi-node honest population: one fork attempt
/// at a time. While its withheld chain leads, the adversary shows it to the
/// honest nodes whose combined stake power best matches the policy's split,
/// then keeps whichever chain on its branch ends the slot strongest.
pub(crate) struct Borrow {
    id: Identity,
    depth: u64,
    m_max: u64,
    policy: Arc<BorrowPolicy>,
    attempt: Option<BorrowAttempt>,
    own: Option<VrfOutput>,
    stats: ForkStats,
}

#[derive(Debug, Clone)]
pub(crate) struct BorrowAttempt {
    chain: Chain,
    /// Common prefix with the honest chain at the end of the last slot.
    origin: u64,
}

impl Borrow {
    fn before_build(&mut self, net: &mut Net, slot: u64, rec: &mut SlotRecord) -> Result<(), SimError> {
        let (vrf, v) = eval_for(net, &mut self.id, slot)?;
        rec.adversary_block_power = Some(v);
        self.own = Some(vrf);
        let Some(att) = &self.attempt else { return Ok(()) };
        let lead = att.chain.power() - net.reference().power();
        if lead < 0.0 {
            return Ok(());
        }
        let Some(opt) = self.policy.lookup(v, lead) else { return Ok(()) };
        let chosen = greedy_subset(&net.honest_alpha, opt.c);
        if chosen.is_empty() {
            return Ok(());
        }
        rec.borrowed_power = Some(chosen.iter().map(|&i| net.honest_alpha[i]).sum());
        self.stats.borrow_slots += 1;
        let chain = att.chain.clone();
        net.show(&chosen, &chain, rec)?;
        Ok(())
    }

    fn after_delivery(
        &mut self,
        net: &mut Net,
        slot: u64,
        best: &Chain,
        published: &[Candidate],
        rec: &mut SlotRecord,
    ) -> Result<(), SimError> {
        let vrf = self.own.take().expect("evaluated before building");
        let parent_of_best = best.truncate(slot - 1);
        let private = match self.attempt.take() {
            Some(att) => {
                // The delivered block extends the withheld branch: honest nodes
                // replaced `slot - 1 - origin` blocks by building on it.
                let replaced = slot - 1 - att.origin;
                if parent_of_best == att.chain && replaced >= self.depth {
                    self.stats.succeeded += 1;
                    rec.e1_depths.push(replaced);
                    return Ok(());
                }
                let own = net.extend(&att.chain, self.id.block(slot, vrf, &att.chain, 0, true)?)?;
                let mut keep = own;
                for c in published {
                    if c.parent == att.chain && c.block.hash() != best.tip_hash() && c.rank > keep.rank() {
                        keep = net.extend(&c.parent, c.block.clone())?;
                    }
                }
                keep
            }
            None => {
                self.stats.started += 1;
                net.extend(&parent_of_best, self.id.block(slot, vrf, &parent_of_best, 0, true)?)?
            }
        };
        let held = net.reference().clone();
        let origin = private.common_prefix_len(&held);
        let forked = slot - origin;
        if forked >= self.depth && private.rank() > held.rank() {
            net.show_all(&private, rec)?;
            rec.reveal_depth = Some(forked);
            rec.e1_depths.push(forked);
            self.stats.succeeded += 1;
            return Ok(());
        }
        if private.power() - held.power() < -ABANDON_SIGMAS * race_sigma(net, &self.id) {
            self.stats.abandoned += 1;
            return Ok(());
        }
        if forked >= self.m_max {
            self.stats.truncated += 1;
            return Ok(());
        }
        rec.adversary_private_power = Some(private.power());
        self.attempt = Some(BorrowAttempt { chain: private, origin });
        Ok(())
    }
}

/// Indices of nodes whose stake powers sum closest to `target`, chosen
/// greedily from the largest stake down.
pub(crate) fn greedy_subset(alphas: &[f64], target: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]).then(a.cmp(&b)));
    let mut sum = 0.0;
    let mut out = Vec::new();
    for i in order {
        if (sum + alphas[i] - target).abs() < (sum - target).abs() {
            sum += alphas[i];
            out.push(i);
        }
    }
    out.sort_unstable();
    out
}

/// Effective per-slot block power of an adversary whose stake `r_a` is split
/// over `parts` equal identities: the largest of their VRF-derived powers.
pub fn sybil_effective_powers(r_a: f64, parts: u32, scale: f64, kappa: u32, slots: u64, seed: u64) -> Result<Vec<f64>, SimError> {
    if parts == 0 {
        return Err(SimError::Config(super::config::SimConfigError::Invalid {
            field: "adversary.parts",
            reason: "must be at least 1".into(),
        }));
    }
    let stake = Stake::from_fraction(r_a / parts as f64)?;
    let mut ids: Vec<Identity> = (0..parts as u64)
        .map(|j| Identity { keys: KeyPair::derive(seed, ADVERSARY_INDEX_BASE + j), stake })
        .collect();
    let beacon = Beacon::new(seed);
    let mut out = Vec::with_capacity(slots as usize);
    let mut seed_cache = beacon.seed(0);
    for slot in 1..=slots {
        let epoch = (slot - 1) / 100;
        if seed_cache.epoch != epoch {
            seed_cache = beacon.seed(epoch);
        }
        let mut best = 0.0f64;
        for id in ids.iter_mut() {
            best = best.max(id.eval(slot, &seed_cache, kappa, scale)?.1);
        }
        out.push(best);
    }
    Ok(out)
}
