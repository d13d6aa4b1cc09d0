//! Simulation-grade cryptographic substrate.
//!
//! The VRF is a keyed hash over `(slot_key, slot, seed)` with a second keyed
//! hash as its proof. Verification recomputes both through a [`KeyRegistry`]
//! that the simulator populates once per identity. Slot keys evolve forward
//! only, so a [`KeyPair`] evolved to slot `l` cannot evaluate the VRF for any
//! earlier slot.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Default VRF output width in bits.
pub const DEFAULT_KAPPA: u32 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrimitiveError {
    #[error("key not evolved to slot {requested} (key is at slot {key_slot})")]
    KeyNotEvolved { key_slot: u64, requested: u64 },
    #[error("cannot rewind key from slot {from} to slot {to}")]
    CannotRewind { from: u64, to: u64 },
    #[error("kappa must be a positive multiple of 8 no larger than 4096, got {0}")]
    BadKappa(u32),
    #[error("public key {0} is already registered to a different secret")]
    Conflict(PublicKey),
}

/// A 32-byte SHA-256 digest. Orders lexicographically by bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Digest(out))
    }
}

/// Public identifier of a stakeholder.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(pub Digest);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.0.to_hex()[..16])
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Domain-separated SHA-256 over a sequence of byte strings.
pub fn tagged_hash(tag: &str, parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag.as_bytes());
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

fn slot_key_bytes(master_secret: &[u8; 32], slot: u64) -> [u8; 32] {
    tagged_hash("quicksync/slot-key", &[master_secret, &slot.to_be_bytes()]).0
}

/// Secret key material valid for exactly one slot.
#[derive(Clone, PartialEq, Eq)]
pub struct SlotKey {
    slot: u64,
    bytes: [u8; 32],
}

impl SlotKey {
    pub fn slot(&self) -> u64 {
        self.slot
    }
}

impl fmt::Debug for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlotKey").field("slot", &self.slot).finish_non_exhaustive()
    }
}

/// A stakeholder's forward-evolving key pair.
#[derive(Clone)]
pub struct KeyPair {
    public_key: PublicKey,
    master_secret: [u8; 32],
    current: SlotKey,
}

impl KeyPair {
    /// Creates a key pair positioned at slot 0.
    pub fn from_secret(master_secret: [u8; 32]) -> Self {
        let public_key = PublicKey(tagged_hash("quicksync/public-key", &[&master_secret]));
        KeyPair {
            public_key,
            master_secret,
            current: SlotKey { slot: 0, bytes: slot_key_bytes(&master_secret, 0) },
        }
    }

    /// Derives a key pair from a simulation seed and an identity index.
    pub fn derive(sim_seed: u64, index: u64) -> Self {
        let secret = tagged_hash(
            "quicksync/identity",
            &[&sim_seed.to_be_bytes(), &index.to_be_bytes()],
        );
        Self::from_secret(secret.0)
    }

    pub fn public_key(&self) -> PublicKey {
        self.public_key
    }

    pub fn key_slot_index(&self) -> u64 {
        self.current.slot
    }

    pub fn slot_key(&self) -> &SlotKey {
        &self.current
    }

    /// Moves the key forward to `to_slot`. The returned pair holds no key
    /// material for earlier slots.
    pub fn evolve(&self, to_slot: u64) -> Result<KeyPair, PrimitiveError> {
        if to_slot < self.current.slot {
            return Err(PrimitiveError::CannotRewind { from: self.current.slot, to: to_slot });
        }
        if to_slot == self.current.slot {
            return Ok(self.clone());
        }
        Ok(KeyPair {
            public_key: self.public_key,
            master_secret: self.master_secret,
            current: SlotKey { slot: to_slot, bytes: slot_key_bytes(&self.master_secret, to_slot) },
        })
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &self.public_key)
            .field("key_slot_index", &self.current.slot)
            .finish_non_exhaustive()
    }
}

/// Randomness shared by every slot of an epoch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpochSeed {
    pub epoch: u64,
    pub seed: Digest,
}

/// Trusted per-epoch randomness source standing in for a multiparty beacon.
#[derive(Clone)]
pub struct Beacon {
    root: [u8; 32],
}

impl Beacon {
    pub fn new(sim_seed: u64) -> Self {
        Beacon { root: tagged_hash("quicksync/beacon-root", &[&sim_seed.to_be_bytes()]).0 }
    }

    pub fn seed(&self, epoch: u64) -> EpochSeed {
        EpochSeed {
            epoch,
            seed: tagged_hash("quicksync/beacon-epoch", &[&self.root, &epoch.to_be_bytes()]),
        }
    }
}

impl fmt::Debug for Beacon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Beacon { .. }")
    }
}

/// VRF evaluation result: a kappa-bit unsigned integer (big-endian) and its
/// proof.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VrfOutput {
    #[serde(with = "hex_bytes")]
    pub uniform_output: Box<[u8]>,
    pub proof: Digest,
    pub kappa: u32,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Box<[u8]>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map(Vec::into_boxed_slice).map_err(serde::de::Error::custom)
    }
}

pub fn check_kappa(kappa: u32) -> Result<(), PrimitiveError> {
    if kappa == 0 || kappa % 8 != 0 || kappa > 4096 {
        return Err(PrimitiveError::BadKappa(kappa));
    }
    Ok(())
}

fn vrf_output_bytes(key: &[u8; 32], slot: u64, seed: &EpochSeed, kappa: u32) -> Box<[u8]> {
    let n = (kappa / 8) as usize;
    let mut out = Vec::with_capacity(n.max(32));
    let mut block = 0u32;
    while out.len() < n {
        let d = tagged_hash(
            "quicksync/vrf-output",
            &[key, &slot.to_be_bytes(), seed.seed.as_bytes(), &seed.epoch.to_be_bytes(), &block.to_be_bytes()],
        );
        out.extend_from_slice(&d.0);
        block += 1;
    }
    out.truncate(n);
    out.into_boxed_slice()
}

fn vrf_proof(key: &[u8; 32], slot: u64, seed: &EpochSeed, output: &[u8]) -> Digest {
    tagged_hash(
        "quicksync/vrf-proof",
        &[key, &slot.to_be_bytes(), seed.seed.as_bytes(), &seed.epoch.to_be_bytes(), output],
    )
}

/// Evaluates the VRF. `slot_key` must have been evolved to exactly `slot`.
pub fn vrf_eval(
    slot_key: &SlotKey,
    slot: u64,
    seed: &EpochSeed,
    kappa: u32,
) -> Result<VrfOutput, PrimitiveError> {
    check_kappa(kappa)?;
    if slot_key.slot != slot {
        return Err(PrimitiveError::KeyNotEvolved { key_slot: slot_key.slot, requested: slot });
    }
    let uniform_output = vrf_output_bytes(&slot_key.bytes, slot, seed, kappa);
    let proof = vrf_proof(&slot_key.bytes, slot, seed, &uniform_output);
    Ok(VrfOutput { uniform_output, proof, kappa })
}

/// Write-once map from public key to the secret the verifier recomputes from.
#[derive(Default, Clone)]
pub struct KeyRegistry {
    secrets: HashMap<PublicKey, [u8; 32]>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a key pair. Registering the same pair twice is a no-op.
    pub fn register(&mut self, kp: &KeyPair) -> Result<(), PrimitiveError> {
        match self.secrets.get(&kp.public_key) {
            Some(s) if *s == kp.master_secret => Ok(()),
            Some(_) => Err(PrimitiveError::Conflict(kp.public_key)),
            None => {
                self.secrets.insert(kp.public_key, kp.master_secret);
                Ok(())
            }
        }
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.secrets.contains_key(pk)
    }

    pub fn len(&self) -> usize {
        self.secrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.secrets.is_empty()
    }

    /// True iff `output` is exactly what `vrf_eval` yields for the key behind
    /// `public_key` at `(slot, seed)`.
    pub fn vrf_verify(&self, output: &VrfOutput, public_key: &PublicKey, slot: u64, seed: &EpochSeed) -> bool {
        let Some(secret) = self.secrets.get(public_key) else {
            return false;
        };
        if check_kappa(output.kappa).is_err() || output.uniform_output.len() as u32 * 8 != output.kappa {
            return false;
        }
        let key = slot_key_bytes(secret, slot);
        let expected = vrf_output_bytes(&key, slot, seed, output.kappa);
        expected == output.uniform_output && vrf_proof(&key, slot, seed, &expected) == output.proof
    }
}

impl fmt::Debug for KeyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyRegistry").field("keys", &self.secrets.len()).finish()
    }
}

/// Merkle root over ordered items.
///
/// Leaves are `H(0x00 || item)`, inner nodes `H(0x01 || left || right)`; an odd
/// node is promoted unchanged. The empty list maps to [`empty_merkle_root`].
pub fn merkle_root<T: AsRef<[u8]>>(items: &[T]) -> Digest {
    if items.is_empty() {
        return empty_merkle_root();
    }
    let mut level: Vec<Digest> = items.iter().map(|i| merkle_leaf(i.as_ref())).collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            match pair {
                [l, r] => next.push(tagged_hash("quicksync/merkle", &[&[1u8], &l.0, &r.0])),
                [single] => next.push(*single),
                _ => unreachable!(),
            }
        }
        level = next;
    }
    level[0]
}

pub fn merkle_leaf(item: &[u8]) -> Digest {
    tagged_hash("quicksync/merkle", &[&[0u8], item])
}

/// Sentinel root for empty block data. Distinct from every leaf and inner node.
pub fn empty_merkle_root() -> Digest {
    tagged_hash("quicksync/merkle-empty", &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed() -> EpochSeed {
        Beacon::new(11).seed(0)
    }

    #[test]
    fn vrf_is_deterministic() {
        let kp = KeyPair::derive(1, 1).evolve(5).unwrap();
        let a = vrf_eval(kp.slot_key(), 5, &seed(), 256).unwrap();
        let b = vrf_eval(kp.slot_key(), 5, &seed(), 256).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.uniform_output.len(), 32);
    }

    #[test]
    fn vrf_differs_across_slots() {
        let kp = KeyPair::derive(1, 1);
        let a = vrf_eval(kp.evolve(5).unwrap().slot_key(), 5, &seed(), 256).unwrap();
        let b = vrf_eval(kp.evolve(6).unwrap().slot_key(), 6, &seed(), 256).unwrap();
        assert_ne!(a.uniform_output, b.uniform_output);
    }

    #[test]
    fn vrf_rejects_unevolved_key() {
        let kp = KeyPair::derive(1, 1);
        let err = vrf_eval(kp.slot_key(), 3, &seed(), 256).unwrap_err();
        assert_eq!(err, PrimitiveError::KeyNotEvolved { key_slot: 0, requested: 3 });
        assert!(err.to_string().contains("key not evolved to slot"));
    }

    #[test]
    fn verify_round_trip_and_tampering() {
        let kp = KeyPair::derive(9, 2);
        let mut reg = KeyRegistry::new();
        reg.register(&kp).unwrap();
        let kp3 = kp.evolve(3).unwrap();
        let out = vrf_eval(kp3.slot_key(), 3, &seed(), 256).unwrap();
        assert!(reg.vrf_verify(&out, &kp.public_key(), 3, &seed()));

        let mut flipped = out.clone();
        flipped.uniform_output[7] ^= 0x10;
        assert!(!reg.vrf_verify(&flipped, &kp.public_key(), 3, &seed()));

        assert!(!reg.vrf_verify(&out, &kp.public_key(), 4, &seed()));
        assert!(!reg.vrf_verify(&out, &kp.public_key(), 3, &Beacon::new(11).seed(1)));

        let other = KeyPair::derive(9, 3);
        reg.register(&other).unwrap();
        assert!(!reg.vrf_verify(&out, &other.public_key(), 3, &seed()));
        let unknown = KeyPair::derive(9, 4);
        assert!(!reg.vrf_verify(&out, &unknown.public_key(), 3, &seed()));
    }

    #[test]
    fn evolve_is_forward_only() {
        let kp = KeyPair::derive(3, 0);
        let same = kp.evolve(0).unwrap();
        assert_eq!(same.key_slot_index(), 0);
        assert_eq!(same.slot_key(), kp.slot_key());

        let kp3 = kp.evolve(3).unwrap();
        assert_eq!(kp3.key_slot_index(), 3);
        assert_eq!(kp3.evolve(1).unwrap_err(), PrimitiveError::CannotRewind { from: 3, to: 1 });
        // The evolved pair cannot evaluate any earlier slot.
        for l in 0..3 {
            assert!(vrf_eval(kp3.slot_key(), l, &seed(), 256).is_err());
        }
    }

    #[test]
    fn registry_is_write_once() {
        let kp = KeyPair::derive(1, 1);
        let mut reg = KeyRegistry::new();
        reg.register(&kp).unwrap();
        reg.register(&kp).unwrap();
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn kappa_variants() {
        let kp = KeyPair::derive(1, 1).evolve(2).unwrap();
        let out = vrf_eval(kp.slot_key(), 2, &seed(), 512).unwrap();
        assert_eq!(out.uniform_output.len(), 64);
        let short = vrf_eval(kp.slot_key(), 2, &seed(), 64).unwrap();
        assert_eq!(&short.uniform_output[..], &out.uniform_output[..8]);
        assert!(vrf_eval(kp.slot_key(), 2, &seed(), 12).is_err());
    }

    #[test]
    fn merkle_cases() {
        assert_eq!(merkle_root::<&[u8]>(&[]), empty_merkle_root());
        assert_eq!(merkle_root(&[b"tx_a"]), merkle_leaf(b"tx_a"));
        assert_ne!(merkle_root(&[b"tx_a", b"tx_b"]), merkle_root(&[b"tx_b", b"tx_a"]));
        // Promoting the odd node avoids the duplicate-last-leaf collision.
        assert_ne!(merkle_root(&[b"a", b"b", b"c"]), merkle_root(&[b"a", b"b", b"c", b"c"]));
        assert_ne!(merkle_root(&[b""]), empty_merkle_root());
    }

    #[test]
    fn beacon_determinism() {
        let b = Beacon::new(42);
        assert_eq!(b.seed(0), b.seed(0));
        assert_ne!(b.seed(0).seed, b.seed(1).seed);
        assert_ne!(Beacon::new(43).seed(0).seed, b.seed(0).seed);
    }
}
