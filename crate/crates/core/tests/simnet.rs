use quicksync::chain::ProtocolParams;
use quicksync::simnet::race::{race_for_stake, run_race};
use quicksync::simnet::{measure, run, Publisher, SimConfig, SimConfigError, SimError, Strategy};

fn cfg(nodes: usize, r_a: f64, strategy: Strategy, slots: u64, seed: u64) -> SimConfig {
    SimConfig::equal_split(nodes, r_a, strategy, slots, seed)
}

fn private_fork(depth: u64, passive: bool) -> Strategy {
    Strategy::PrivateFork { depth: Some(depth), passive }
}

#[test]
fn honest_run_grows_one_block_per_slot() {
    let t = run(&cfg(10, 0.0, Strategy::None, 100, 1)).unwrap();
    assert_eq!(t.final_chain.len(), 100);
    assert_eq!(t.slots.len(), 100);
    for (i, r) in t.slots.iter().enumerate() {
        assert_eq!(r.slot, i as u64 + 1);
        assert_eq!(r.height, r.slot);
        assert!(r.unanimous);
    }
    let m = measure(&t, 6);
    assert_eq!(m.zeta, 1.0);
    assert_eq!(m.cp_violations, 0);
    assert_eq!(m.finality_violations, 0);
    assert_eq!(m.tps_observed, 50.0);
}

#[test]
fn lone_node_publishes_everything() {
    let t = run(&cfg(1, 0.0, Strategy::None, 50, 2)).unwrap();
    assert!(t.final_chain.iter().all(|b| b.publisher == Publisher::Honest));
    assert_eq!(measure(&t, 6).upsilon_worst, 1.0);
}

#[test]
fn runs_are_reproducible() {
    for s in [Strategy::None, private_fork(3, false), Strategy::SplitN { subsets: 3 }] {
        let c = cfg(5, 0.3, s, 300, 11);
        assert_eq!(run(&c).unwrap().to_json(), run(&c).unwrap().to_json());
    }
    let a = run(&cfg(5, 0.3, Strategy::None, 50, 1)).unwrap();
    let b = run(&cfg(5, 0.3, Strategy::None, 50, 2)).unwrap();
    assert_ne!(a.final_chain, b.final_chain);
}

#[test]
fn low_activity_keeps_growth() {
    let mut c = cfg(20, 0.2, Strategy::None, 500, 3);
    c.activity.r_active = 0.05;
    let t = run(&c).unwrap();
    assert_eq!(measure(&t, 6).zeta, 1.0);
    assert!(t.slots.iter().all(|r| r.honest_published >= 1));
    assert!(t.slots.iter().any(|r| r.honest_published < 20));
    c.activity.mask = Some(vec![1.0, 0.05, 0.5]);
    assert_eq!(measure(&run(&c).unwrap(), 6).zeta, 1.0);
}

#[test]
fn invalid_config_fails_before_running() {
    let mut c = cfg(4, 0.6, Strategy::None, 10, 1);
    assert!(matches!(run(&c), Err(SimError::Config(SimConfigError::HonestMajority { .. }))));
    c.allow_dishonest_majority = true;
    assert!(run(&c).is_ok());
    let mut c = cfg(4, 0.2, Strategy::None, 10, 1);
    c.params = ProtocolParams { kappa: 7, ..ProtocolParams::default() };
    assert!(matches!(run(&c), Err(SimError::Config(_))));
}

#[test]
fn private_fork_rates() {
    let shallow = measure(&run(&cfg(10, 0.45, private_fork(2, false), 10_000, 5)).unwrap(), 2);
    let deep = measure(&run(&cfg(10, 0.45, private_fork(30, false), 10_000, 5)).unwrap(), 30);
    assert!(shallow.eta_hat.unwrap() > 0.0);
    assert!(shallow.cp_violations > 0);
    assert!(deep.eta_hat.unwrap() < shallow.eta_hat.unwrap());
    // Reveals of depth k or more drop confirmed blocks.
    assert!(deep.finality_violations > 0);

    let none = run(&cfg(10, 0.0, private_fork(2, false), 2_000, 5)).unwrap();
    let m = measure(&none, 2);
    assert_eq!(m.fork_successes, 0);
    assert_eq!(m.cp_violations, 0);
}

#[test]
fn passive_private_fork_matches_power_race() {
    // Sliding-origin attempts overlap, so the spread across seeds is used
    // rather than a binomial interval.
    let (r_a, k) = (0.3, 6);
    let race = run_race(&race_for_stake(r_a, 8.0, k, 200_000, 1)).eta_hat(k);
    let etas: Vec<f64> = (0..8)
        .map(|seed| measure(&run(&cfg(4, r_a, private_fork(k, true), 10_000, 100 + seed)).unwrap(), k).eta_hat.unwrap())
        .collect();
    let n = etas.len() as f64;
    let mean = etas.iter().sum::<f64>() / n;
    let sd = (etas.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - race).abs() < 4.0 * sd / n.sqrt() + 0.005, "sim {mean} race {race} sd {sd}");
}

#[test]
fn passive_adversary_never_touches_honest_nodes() {
    let t = run(&cfg(5, 0.4, private_fork(3, true), 2_000, 8)).unwrap();
    let m = measure(&t, 3);
    assert!(m.fork_successes > 0);
    assert_eq!(m.adoptions, 0);
    assert_eq!(m.finality_violations, 0);
    assert!(t.final_chain.iter().all(|b| b.publisher == Publisher::Honest));
}

#[test]
fn split_n_reconverges() {
    for subsets in [2, 7] {
        let t = run(&cfg(7, 0.4, Strategy::SplitN { subsets }, 400, 21)).unwrap();
        let m = measure(&t, 6);
        assert_eq!(m.divergent_slots, 0);
        assert!(m.adoptions > 0);
        for r in &t.slots {
            // Variants only win where the adversary block beats the honest one.
            if r.adoptions > 0 {
                assert!(r.adversary_block_power.unwrap() >= r.winner_power);
            }
        }
    }
}

#[test]
fn weak_split_is_ignored() {
    let t = run(&cfg(6, 0.01, Strategy::SplitN { subsets: 3 }, 200, 4)).unwrap();
    for r in &t.slots {
        if r.adversary_block_power.unwrap() < r.winner_power {
            assert_eq!(r.adoptions, 0);
        }
    }
}

#[test]
fn missing_data_keeps_growth_and_counts_null_power() {
    let t = run(&cfg(6, 0.3, Strategy::MissingData { release_after: None }, 300, 6)).unwrap();
    let m = measure(&t, 6);
    assert_eq!(m.zeta, 1.0);
    assert!(m.null_blocks > 0);
    let total: f64 = t.final_chain.iter().map(|b| b.block_power).sum();
    let last = t.slots.last().unwrap().honest_power;
    assert!((total - last).abs() < 1e-9 * last);
    // Honest builders flag a parent they hold no data for; the adversary
    // always has its own data.
    for w in t.final_chain.windows(2) {
        let expect = w[0].null && w[1].publisher == Publisher::Honest;
        assert_eq!(w[1].prev_null, expect, "slot {}", w[1].slot);
    }
}

#[test]
fn released_data_clears_later_null_flags() {
    let t = run(&cfg(6, 0.3, Strategy::MissingData { release_after: Some(0) }, 300, 6)).unwrap();
    assert!(t.final_chain.iter().any(|b| b.null));
    assert!(t.final_chain.iter().all(|b| !b.prev_null));
}

#[test]
fn sybil_split_publishes_honestly() {
    let r_a = 0.3;
    let slots = 3000;
    let t = run(&cfg(5, r_a, Strategy::SybilSplit { parts: 16 }, slots, 9)).unwrap();
    let m = measure(&t, 6);
    assert_eq!(m.divergent_slots, 0);
    assert_eq!(m.zeta, 1.0);
    let rate = m.adversary_blocks as f64 / slots as f64;
    let se = (r_a * (1.0 - r_a) / slots as f64).sqrt();
    assert!((rate - r_a).abs() < 3.0 * se, "{rate}");
}

#[test]
fn chain_quality_follows_from_no_violation() {
    for (s, r_a) in [
        (Strategy::None, 0.3),
        (Strategy::SybilSplit { parts: 4 }, 0.2),
        (Strategy::MissingData { release_after: None }, 0.3),
        (private_fork(6, true), 0.2),
    ] {
        let t = run(&cfg(5, r_a, s, 1000, 12)).unwrap();
        for k in [2u64, 4, 6] {
            let m = measure(&t, k);
            if m.cp_violations == 0 {
                assert!(m.upsilon_worst >= 1.0 / k as f64);
            }
        }
    }
}

#[test]
fn borrow_power_multi_node() {
    let c = cfg(10, 0.45, Strategy::BorrowPower { depth: Some(4), resolution: Some(8) }, 3000, 13);
    let t = run(&c).unwrap();
    assert!(t.forks.borrow_slots > 0);
    assert!(t.slots.iter().filter_map(|r| r.borrowed_power).all(|c| c > 0.0 && c < 8.0));
    let m = measure(&t, 4);
    assert_eq!(m.zeta, 1.0);
    assert!(m.eta_hat.is_some());
}

#[test]
fn exports_have_stable_shape() {
    let t = run(&cfg(3, 0.2, private_fork(3, false), 40, 1)).unwrap();
    let csv = t.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# quicksync "));
    assert!(lines[0].contains(&t.meta.param_hash));
    assert_eq!(lines[2], quicksync::simnet::trace::SLOT_CSV_HEADER);
    assert_eq!(lines.len(), 3 + 40);
    let cols = lines[2].split(',').count();
    assert!(lines[3..].iter().all(|l| l.split(',').count() == cols));
    let m = measure(&t, 3);
    let json: serde_json::Value = serde_json::from_str(&m.to_json(&t)).unwrap();
    assert_eq!(json["seed"], 1);
    assert_eq!(json["zeta"], 1.0);
    let back: quicksync::simnet::SimTrace = serde_json::from_str(&t.to_json()).unwrap();
    assert_eq!(back, t);
}
