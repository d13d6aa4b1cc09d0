use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quicksync::analysis::stats::ks_one_sample;
use quicksync::chain::{
    Block, BlockData, BlockHeader, Chain, EpochContext, GenesisBlock, ParentRef, ProtocolParams, Stake, StakeMap,
};
use quicksync::node::{select_chain, DownloadAction, DownloadStack};
use quicksync::power::{block_power, normalize_vrf, power_from_uniform, PowerRank};
use quicksync::primitives::{vrf_eval, Beacon, Digest, KeyPair, KeyRegistry};

struct Net {
    genesis: Arc<GenesisBlock>,
    keys: Vec<KeyPair>,
    registry: KeyRegistry,
    beacon: Beacon,
}

impl Net {
    fn new(n: usize, seed: u64) -> Self {
        let keys: Vec<KeyPair> = (0..n as u64).map(|i| KeyPair::derive(seed, i)).collect();
        let stakes = Stake::apportion(&vec![1.0; n]).unwrap();
        let map: StakeMap = keys.iter().map(|k| k.public_key()).zip(stakes).collect();
        let params = ProtocolParams { epoch_length_slots: 5, ..ProtocolParams::default() };
        let mut registry = KeyRegistry::new();
        for k in &keys {
            registry.register(k).unwrap();
        }
        Net { genesis: Arc::new(GenesisBlock::new(params, map).unwrap()), keys, registry, beacon: Beacon::new(seed) }
    }

    fn ctx(&self, slot: u64) -> EpochContext {
        let ep = self.genesis.params().epoch_of(slot);
        EpochContext { epoch: ep, seed: self.beacon.seed(ep), stakes: self.genesis.initial_stakes().clone() }
    }

    fn block(&self, who: usize, parent: ParentRef, tx: &[u8]) -> Block {
        let slot = parent.slot + 1;
        let kp = self.keys[who].evolve(slot).unwrap();
        let ctx = self.ctx(slot);
        let vrf = vrf_eval(kp.slot_key(), slot, &ctx.seed, 256).unwrap();
        let data = BlockData::new(vec![tx.to_vec()]);
        let h = BlockHeader {
            publisher_key: kp.public_key(),
            publisher_stake: ctx.stake_of(&kp.public_key()).unwrap(),
            slot,
            prev_hash: parent.hash,
            prev_null: false,
            vrf,
            data_root: data.root(),
        };
        Block::new(h, data).unwrap()
    }

    fn grow(&self, chain: &Chain, who: usize) -> Chain {
        let b = self.block(who, chain.parent_ref(), &chain.len().to_be_bytes());
        chain.extend(b, &self.ctx(chain.len() + 1), &self.registry).unwrap()
    }
}

#[test]
fn vrf_outputs_are_uniform() {
    let beacon = Beacon::new(3);
    let mut xs: Vec<f64> = (0..100_000u64)
        .map(|i| {
            let kp = KeyPair::derive(17, i).evolve(1 + i % 50).unwrap();
            let slot = kp.key_slot_index();
            let out = vrf_eval(kp.slot_key(), slot, &beacon.seed(0), 256).unwrap();
            normalize_vrf(&out.uniform_output, 256).unwrap()
        })
        .collect();
    // Critical value at significance 0.01.
    let d = ks_one_sample(&mut xs, |x| x);
    assert!(d < 1.628 / (xs.len() as f64).sqrt(), "KS {d}");
}

#[test]
fn block_power_follows_its_cdf() {
    let alpha = 2.4;
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let n = 1_000_000;
    let mut xs: Vec<f64> = (0..n)
        .map(|_| {
            let bytes: [u8; 32] = r.random();
            block_power(&bytes, 256, alpha / 8.0, 8.0).unwrap().value()
        })
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let want = alpha / (alpha + 1.0);
    let sd = (alpha / (alpha + 2.0) - want * want).sqrt();
    assert!((mean - want).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean}");
    let d = ks_one_sample(&mut xs, |x| x.powf(alpha));
    assert!(d < 0.002, "KS {d}");
}

#[test]
fn evolved_key_cannot_sign_the_past() {
    let kp = KeyPair::derive(1, 0).evolve(10).unwrap();
    let seed = Beacon::new(1).seed(0);
    for slot in 0..10 {
        assert!(vrf_eval(kp.slot_key(), slot, &seed, 256).is_err());
        assert!(kp.evolve(slot).is_err());
    }
}

#[test]
fn honest_views_agree() {
    let net = Net::new(4, 9);
    let g = Chain::genesis_only(net.genesis.clone());
    let mut chains = vec![g.clone()];
    let base = net.grow(&g, 0);
    for who in 0..4 {
        chains.push(net.grow(&base, who));
    }
    let want = select_chain(&chains, 3).unwrap().tip_hash();
    let mut shuffled = chains.clone();
    shuffled.reverse();
    assert_eq!(select_chain(&shuffled, 3).unwrap().tip_hash(), want);
    // Adding nothing better leaves the choice alone.
    let held = select_chain(&chains, 3).unwrap().clone();
    let mut view = vec![held.clone()];
    view.extend(chains.iter().filter(|c| c.rank() < held.rank()).cloned());
    assert_eq!(select_chain(&view, 3).unwrap().tip_hash(), held.tip_hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn extends_count_and_revalidate(seed in 0u64..1000, picks in prop::collection::vec(0usize..3, 1..30)) {
        let net = Net::new(3, seed);
        let mut c = Chain::genesis_only(net.genesis.clone());
        let mut prefixes = vec![c.clone()];
        for &who in &picks {
            c = net.grow(&c, who);
            prefixes.push(c.clone());
        }
        prop_assert_eq!(c.len(), picks.len() as u64);
        prop_assert!(c.revalidate(&net.registry, |s| net.ctx(s)).is_ok());
        prop_assert!(c.revalidate(&net.registry, |s| net.ctx(s)).is_ok());
        // Extending never disturbs the chains it was built from.
        for (i, p) in prefixes.iter().enumerate() {
            prop_assert_eq!(p.len(), i as u64);
            prop_assert_eq!(&c.truncate(i as u64), p);
        }
        let sum: f64 = c.block_powers_rev().sum();
        prop_assert!((sum - c.power()).abs() <= 1e-12 * sum.max(1.0));
    }

    #[test]
    fn block_power_is_monotone(u in 1e-6f64..0.999, du in 1e-6f64..1e-3, a in 0.01f64..20.0, da in 1e-3f64..5.0) {
        let v = (u + du).min(1.0 - 1e-9);
        prop_assert!(power_from_uniform(v, a) > power_from_uniform(u, a));
        prop_assert!(power_from_uniform(u, a + da) > power_from_uniform(u, a));
    }

    #[test]
    fn download_never_targets_a_worse_header(powers in prop::collection::vec((0.0f64..1.0, any::<[u8; 32]>()), 1..40)) {
        let mut s = DownloadStack::new();
        let mut best: Option<PowerRank> = None;
        for (p, h) in powers {
            let rank = PowerRank::new(p, Digest(h));
            let act = s.offer_ranked(rank);
            if best.is_some_and(|b| rank <= b) {
                prop_assert_eq!(act, DownloadAction::Ignore);
            } else {
                best = Some(rank);
            }
            prop_assert_eq!(s.in_progress().map(|x| x.0), best.map(|b| b.hash));
        }
    }
}
