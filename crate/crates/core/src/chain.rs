//! Ledger data model: headers, blocks, persistent chains and epoch contexts.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power::{header_power, ChainPower, PowerRank};
use crate::primitives::{
    check_kappa, empty_merkle_root, merkle_root, tagged_hash, Beacon, Digest, EpochSeed, KeyRegistry, PublicKey,
    VrfOutput,
};

/// Fixed-point denominator for stakes: twelve fractional decimal digits.
pub const STAKE_UNIT: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("invalid header: {0}")]
    Header(#[from] HeaderFault),
    #[error("block data does not match header data root")]
    DataRootMismatch,
    #[error("snapshot unavailable for epoch {epoch}: chain has {len} blocks, needs {needed}")]
    SnapshotUnavailable { epoch: u64, len: u64, needed: u64 },
    #[error("stakes sum to {0}, expected 1")]
    StakeSum(f64),
    #[error("stake {0} outside (0, 1]")]
    StakeRange(f64),
    #[error("invalid protocol parameter {field}: {reason}")]
    Param { field: &'static str, reason: String },
    #[error("epoch context for epoch {ctx} used for slot {slot} in epoch {expected}")]
    WrongEpoch { ctx: u64, slot: u64, expected: u64 },
}

/// Why a header failed structural validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderFault {
    #[error("slot gap")]
    SlotGap,
    #[error("broken link")]
    BrokenLink,
    #[error("unknown publisher")]
    UnknownPublisher,
    #[error("stake mismatch")]
    StakeMismatch,
    #[error("bad vrf")]
    BadVrf,
}

/// Relative stake in fixed point with twelve decimal digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Stake(u64);

impl Stake {
    pub const ONE: Stake = Stake(STAKE_UNIT);

    pub fn from_units(units: u64) -> Self {
        Stake(units)
    }

    /// Rounds `r` to the nearest representable stake.
    pub fn from_fraction(r: f64) -> Result<Self, ChainError> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(ChainError::StakeRange(r));
        }
        Ok(Stake((r * STAKE_UNIT as f64).round() as u64))
    }

    pub fn units(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / STAKE_UNIT as f64
    }

    /// Splits one unit of stake in proportion to `weights` with the
    /// largest-remainder method, so the parts sum to exactly one.
    pub fn apportion(weights: &[f64]) -> Result<Vec<Stake>, ChainError> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) || !(total > 0.0) {
            return Err(ChainError::StakeRange(weights.iter().cloned().fold(f64::NAN, f64::min)));
        }
        let exact: Vec<f64> = weights.iter().map(|w| w / total * STAKE_UNIT as f64).collect();
        let mut units: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
        let assigned: u64 = units.iter().sum();
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let missing = STAKE_UNIT.saturating_sub(assigned) as usize;
        for &i in order.iter().cycle().take(missing) {
            units[i] += 1;
        }
        if units.contains(&0) {
            return Err(ChainError::StakeRange(0.0));
        }
        Ok(units.into_iter().map(Stake).collect())
    }
}

impl fmt::Debug for Stake {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Stake({}.{:012})", self.0 / STAKE_UNIT, self.0 % STAKE_UNIT)
    }
}

impl fmt::Display for Stake {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:012}", self.0 / STAKE_UNIT, self.0 % STAKE_UNIT)
    }
}

impl Serialize for Stake {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Stake {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = f64::deserialize(d)?;
        Stake::from_fraction(r).map_err(serde::de::Error::custom)
    }
}

/// Genesis-level protocol constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    pub scale_factor: f64,
    pub slot_length_seconds: f64,
    pub epoch_length_slots: u64,
    pub kappa: u32,
    pub confirm_depth: u64,
    pub lifetime_slots: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            scale_factor: 8.0,
            slot_length_seconds: 40.0,
            epoch_length_slots: 100,
            kappa: 256,
            confirm_depth: 6,
            lifetime_slots: 10_000,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ChainError> {
        fn bad(field: &'static str, reason: &str) -> ChainError {
            ChainError::Param { field, reason: reason.to_string() }
        }
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return Err(bad("scale_factor", "must be positive"));
        }
        if !(self.slot_length_seconds > 0.0 && self.slot_length_seconds.is_finite()) {
            return Err(bad("slot_length_seconds", "must be positive"));
        }
        if self.epoch_length_slots == 0 {
            return Err(bad("epoch_length_slots", "must be positive"));
        }
        if check_kappa(self.kappa).is_err() {
            return Err(bad("kappa", "must be a positive multiple of 8 no larger than 4096"));
        }
        if self.confirm_depth == 0 {
            return Err(bad("confirm_depth", "must be positive"));
        }
        if self.lifetime_slots == 0 {
            return Err(bad("lifetime_slots", "must be positive"));
        }
        Ok(())
    }

    /// Non-fatal configuration concerns.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.scale_factor <= 4.0 {
            out.push(format!(
                "scale_factor {} is at or below 4; finality degrades noticeably for small s",
                self.scale_factor
            ));
        }
        out
    }

    /// Epoch containing `slot`. Slot 0 (genesis) and slots `1..=R` are epoch 0.
    pub fn epoch_of(&self, slot: u64) -> u64 {
        slot.saturating_sub(1) / self.epoch_length_slots
    }

    /// Time to finality for depth `k` in seconds.
    pub fn finality_seconds(&self, k: u64) -> f64 {
        k as f64 * self.slot_length_seconds
    }
}

pub type StakeMap = BTreeMap<PublicKey, Stake>;

/// Chain origin: protocol parameters plus the initial stake distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenesisBlock {
    params: ProtocolParams,
    initial_stakes: Arc<StakeMap>,
    hash: Digest,
}

impl GenesisBlock {
    pub fn new(params: ProtocolParams, initial_stakes: StakeMap) -> Result<Self, ChainError> {
        params.validate()?;
        let total: u64 = initial_stakes.values().map(|s| s.0).sum();
        if total.abs_diff(STAKE_UNIT) > 1 {
            return Err(ChainError::StakeSum(total as f64 / STAKE_UNIT as f64));
        }
        if let Some(s) = initial_stakes.values().find(|s| s.0 == 0) {
            return Err(ChainError::StakeRange(s.as_f64()));
        }
        let mut bytes = serde_json::to_vec(&params).expect("params serialize");
        for (pk, st) in &initial_stakes {
            bytes.extend_from_slice(pk.0.as_bytes());
            bytes.extend_from_slice(&st.0.to_be_bytes());
        }
        let hash = tagged_hash("quicksync/genesis", &[&bytes]);
        Ok(GenesisBlock { params, initial_stakes: Arc::new(initial_stakes), hash })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn initial_stakes(&self) -> &Arc<StakeMap> {
        &self.initial_stakes
    }

    pub fn hash(&self) -> Digest {
        self.hash
    }
}

/// Per-epoch pseudo-genesis: seed randomness and the stake snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochContext {
    pub epoch: u64,
    pub seed: EpochSeed,
    pub stakes: Arc<StakeMap>,
}

impl EpochContext {
    /// Builds the context for `epoch` from the chain the caller holds.
    pub fn derive(chain: &Chain, beacon: &Beacon, epoch: u64) -> Result<Self, ChainError> {
        Ok(EpochContext { epoch, seed: beacon.seed(epoch), stakes: snapshot_stakes(chain, epoch)? })
    }

    pub fn stake_of(&self, pk: &PublicKey) -> Option<Stake> {
        self.stakes.get(pk).copied()
    }
}

/// Stake distribution in force during `epoch`: the ledger state at the last
/// block of epoch `epoch - 2`. Transactions are opaque and never move stake,
/// so every available snapshot equals the genesis distribution.
pub fn snapshot_stakes(chain: &Chain, epoch: u64) -> Result<Arc<StakeMap>, ChainError> {
    if epoch >= 2 {
        let needed = (epoch - 1) * chain.genesis.params.epoch_length_slots;
        if chain.len() < needed {
            return Err(ChainError::SnapshotUnavailable { epoch, len: chain.len(), needed });
        }
    }
    Ok(chain.genesis.initial_stakes.clone())
}

/// Block header in wire order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub publisher_key: PublicKey,
    pub publisher_stake: Stake,
    pub slot: u64,
    pub prev_hash: Digest,
    pub prev_null: bool,
    pub vrf: VrfOutput,
    pub data_root: Digest,
}

impl BlockHeader {
    /// Canonical byte encoding used for hashing. The VRF proof is not part of
    /// it: the output alone is bound to the key, slot and seed.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 + 8 + 32 + 1 + self.vrf.uniform_output.len() + 32);
        out.extend_from_slice(self.publisher_key.0.as_bytes());
        out.extend_from_slice(&self.publisher_stake.units().to_be_bytes());
        out.extend_from_slice(&self.slot.to_be_bytes());
        out.extend_from_slice(self.prev_hash.as_bytes());
        out.push(self.prev_null as u8);
        out.extend_from_slice(&self.vrf.uniform_output);
        out.extend_from_slice(self.data_root.as_bytes());
        out
    }

    pub fn hash(&self) -> Digest {
        tagged_hash("quicksync/header", &[&self.canonical_bytes()])
    }
}

pub type Tx = Vec<u8>;

/// Ordered opaque transactions with their Merkle root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockData {
    txs: Arc<Vec<Tx>>,
    root: Digest,
}

impl BlockData {
    pub fn new(txs: Vec<Tx>) -> Self {
        let root = merkle_root(&txs);
        BlockData { txs: Arc::new(txs), root }
    }

    pub fn txs(&self) -> &[Tx] {
        &self.txs
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn is_empty(&self) -> bool {
        self.root == empty_merkle_root()
    }
}

/// A header plus, when the holder has it, the block data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    header: Arc<BlockHeader>,
    data: Option<BlockData>,
    hash: Digest,
}

impl Block {
    pub fn new(header: BlockHeader, data: BlockData) -> Result<Self, ChainError> {
        if header.data_root != data.root {
            return Err(ChainError::DataRootMismatch);
        }
        let hash = header.hash();
        Ok(Block { header: Arc::new(header), data: Some(data), hash })
    }

    /// A block known only by its header.
    pub fn header_only(header: BlockHeader) -> Self {
        let hash = header.hash();
        Block { header: Arc::new(header), data: None, hash }
    }

    /// The same block with its data stripped.
    pub fn without_data(&self) -> Self {
        Block { header: self.header.clone(), data: None, hash: self.hash }
    }

    /// Attaches late-arriving data to a header-only block.
    pub fn with_data(&self, data: BlockData) -> Result<Self, ChainError> {
        if self.header.data_root != data.root {
            return Err(ChainError::DataRootMismatch);
        }
        Ok(Block { header: self.header.clone(), data: Some(data), hash: self.hash })
    }

    pub fn header(&self) -> &BlockHeader {
        &self.header
    }

    pub fn data(&self) -> Option<&BlockData> {
        self.data.as_ref()
    }

    pub fn is_null(&self) -> bool {
        self.data.is_none()
    }

    pub fn hash(&self) -> Digest {
        self.hash
    }

    pub fn slot(&self) -> u64 {
        self.header.slot
    }
}

/// Slot and hash of the block a header must extend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParentRef {
    pub slot: u64,
    pub hash: Digest,
}

/// Structural validity of `h` as the successor of `prev` within epoch `ctx`.
/// Checks run in order: slot succession, hash link, publisher stake, VRF.
pub fn validate_header(
    h: &BlockHeader,
    ctx: &EpochContext,
    prev: ParentRef,
    registry: &KeyRegistry,
) -> Result<(), HeaderFault> {
    if h.slot != prev.slot + 1 {
        return Err(HeaderFault::SlotGap);
    }
    if h.prev_hash != prev.hash {
        return Err(HeaderFault::BrokenLink);
    }
    match ctx.stake_of(&h.publisher_key) {
        None => return Err(HeaderFault::UnknownPublisher),
        Some(s) if s != h.publisher_stake => return Err(HeaderFault::StakeMismatch),
        Some(_) => {}
    }
    if !registry.vrf_verify(&h.vrf, &h.publisher_key, h.slot, &ctx.seed) {
        return Err(HeaderFault::BadVrf);
    }
    Ok(())
}

struct Link {
    block: Block,
    block_power: f64,
    cumulative: ChainPower,
    len: u64,
    parent: Option<Arc<Link>>,
}

impl Drop for Link {
    // Unlink iteratively so dropping a long unshared chain cannot overflow the stack.
    fn drop(&mut self) {
        let mut next = self.parent.take();
        while let Some(arc) = next {
            match Arc::try_unwrap(arc) {
                Ok(mut link) => next = link.parent.take(),
                Err(_) => break,
            }
        }
    }
}

/// Persistent chain. Extending returns a new value that shares structure
/// with the original; nothing reachable from a `Chain` is ever mutated.
/// Every chain is valid by construction because `extend` validates.
#[derive(Clone)]
pub struct Chain {
    genesis: Arc<GenesisBlock>,
    tip: Option<Arc<Link>>,
}

impl fmt::Debug for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chain")
            .field("len", &self.len())
            .field("power", &self.power())
            .field("tip", &self.tip_hash())
            .finish()
    }
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.tip_hash() == other.tip_hash() && self.genesis.hash == other.genesis.hash
    }
}

impl Eq for Chain {}

impl Chain {
    pub fn genesis_only(genesis: Arc<GenesisBlock>) -> Self {
        Chain { genesis, tip: None }
    }

    pub fn genesis(&self) -> &Arc<GenesisBlock> {
        &self.genesis
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.genesis.params
    }

    pub fn len(&self) -> u64 {
        self.tip.as_ref().map_or(0, |l| l.len)
    }

    pub fn is_empty(&self) -> bool {
        self.tip.is_none()
    }

    pub fn power_sum(&self) -> ChainPower {
        self.tip.as_ref().map_or(ChainPower::ZERO, |l| l.cumulative)
    }

    pub fn power(&self) -> f64 {
        self.power_sum().value()
    }

    pub fn tip(&self) -> Option<&Block> {
        self.tip.as_ref().map(|l| &l.block)
    }

    /// Hash of the tip header, or the genesis hash for an empty chain.
    pub fn tip_hash(&self) -> Digest {
        self.tip.as_ref().map_or(self.genesis.hash, |l| l.block.hash)
    }

    pub fn tip_block_power(&self) -> Option<f64> {
        self.tip.as_ref().map(|l| l.block_power)
    }

    pub fn parent_ref(&self) -> ParentRef {
        ParentRef { slot: self.len(), hash: self.tip_hash() }
    }

    pub fn rank(&self) -> PowerRank {
        PowerRank::new(self.power(), self.tip_hash())
    }

    /// Appends `block` after validating it against the tip.
    pub fn extend(&self, block: Block, ctx: &EpochContext, registry: &KeyRegistry) -> Result<Chain, ChainError> {
        let expected = self.genesis.params.epoch_of(block.slot());
        if block.slot() == self.len() + 1 && ctx.epoch != expected {
            return Err(ChainError::WrongEpoch { ctx: ctx.epoch, slot: block.slot(), expected });
        }
        validate_header(block.header(), ctx, self.parent_ref(), registry)?;
        if let Some(d) = &block.data {
            if d.root != block.header.data_root {
                return Err(ChainError::DataRootMismatch);
            }
        }
        let bp = header_power(block.header(), self.genesis.params.scale_factor)
            .expect("validated header has in-range stake and vrf")
            .value();
        Ok(self.push(block, bp))
    }

    fn push(&self, block: Block, block_power: f64) -> Chain {
        let link = Link {
            block,
            block_power,
            cumulative: self.power_sum().add(block_power),
            len: self.len() + 1,
            parent: self.tip.clone(),
        };
        Chain { genesis: self.genesis.clone(), tip: Some(Arc::new(link)) }
    }

    fn links_rev(&self) -> impl Iterator<Item = &Link> {
        std::iter::successors(self.tip.as_deref(), |l| l.parent.as_deref())
    }

    /// Blocks from tip back to slot 1.
    pub fn iter_rev(&self) -> impl Iterator<Item = &Block> {
        self.links_rev().map(|l| &l.block)
    }

    /// Block powers from tip back to slot 1.
    pub fn block_powers_rev(&self) -> impl Iterator<Item = f64> + '_ {
        self.links_rev().map(|l| l.block_power)
    }

    /// Blocks in slot order.
    pub fn blocks(&self) -> Vec<Block> {
        let mut v: Vec<Block> = self.iter_rev().cloned().collect();
        v.reverse();
        v
    }

    /// Block at slot position `l` (1-based).
    pub fn block_at(&self, l: u64) -> Option<&Block> {
        if l == 0 || l > self.len() {
            return None;
        }
        self.links_rev().nth((self.len() - l) as usize).map(|x| &x.block)
    }

    /// The prefix of length `n`.
    pub fn truncate(&self, n: u64) -> Chain {
        if n >= self.len() {
            return self.clone();
        }
        let tip = if n == 0 {
            None
        } else {
            let mut cur = self.tip.clone();
            while let Some(l) = cur.as_ref() {
                if l.len == n {
                    break;
                }
                cur = l.parent.clone();
            }
            cur
        };
        Chain { genesis: self.genesis.clone(), tip }
    }

    /// Length of the longest common prefix of two chains.
    pub fn common_prefix_len(&self, other: &Chain) -> u64 {
        let mut a = self.tip.as_ref();
        let mut b = other.tip.as_ref();
        while let (Some(x), Some(y)) = (a, b) {
            if x.len > y.len {
                a = x.parent.as_ref();
            } else if y.len > x.len {
                b = y.parent.as_ref();
            } else if Arc::ptr_eq(x, y) || x.block.hash == y.block.hash {
                return x.len;
            } else {
                a = x.parent.as_ref();
                b = y.parent.as_ref();
            }
        }
        0
    }

    /// Re-runs header validation on every link. `ctx_for_slot` supplies the
    /// epoch context for each slot.
    pub fn revalidate<F>(&self, registry: &KeyRegistry, mut ctx_for_slot: F) -> Result<(), ChainError>
    where
        F: FnMut(u64) -> EpochContext,
    {
        let mut prev = ParentRef { slot: 0, hash: self.genesis.hash };
        for block in self.blocks() {
            let ctx = ctx_for_slot(block.slot());
            validate_header(block.header(), &ctx, prev, registry)?;
            prev = ParentRef { slot: block.slot(), hash: block.hash() };
        }
        Ok(())
    }

    pub fn export(&self) -> ChainExport {
        let mut blocks: Vec<BlockExport> = self
            .links_rev()
            .map(|l| BlockExport {
                slot: l.block.slot(),
                hash: l.block.hash,
                publisher: l.block.header.publisher_key,
                prev_hash: l.block.header.prev_hash,
                prev_null: l.block.header.prev_null,
                has_data: l.block.data.is_some(),
                block_power: l.block_power,
            })
            .collect();
        blocks.reverse();
        ChainExport { genesis: self.genesis.hash, len: self.len(), power: self.power(), blocks }
    }
}

/// JSON form of a chain for trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainExport {
    pub genesis: Digest,
    pub len: u64,
    pub power: f64,
    pub blocks: Vec<BlockExport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockExport {
    pub slot: u64,
    pub hash: Digest,
    pub publisher: PublicKey,
    pub prev_hash: Digest,
    pub prev_null: bool,
    pub has_data: bool,
    pub block_power: f64,
}
