mod common;

use proptest::prelude::*;

use quicksync::analysis::borrow::optimal_c;
use quicksync::analysis::finality::{
    eta_curve, finality_table, monte_carlo_k, tps, McOptions, TableMethod, DEFAULT_TABLE_STAKES, TABLE_CONFIDENCES,
};
use quicksync::analysis::{
    bernstein_tail, borrow_power_gains, epsilon_cp, eta_bound, solve_k, AnalysisError, BorrowPowerInstance, BoundParams,
};
use quicksync::power::win_probability;

#[test]
fn chernoff_oracle_reference() {
    // Independent scipy evaluation at r_a = 0.3, s = 8.
    assert!((common::chernoff_rate(2.4, 5.6) - 0.167_580_166).abs() < 1e-6);
}

#[test]
fn decay_rate_sits_between_bound_and_chernoff() {
    let (r_a, s) = (0.3, 8.0);
    let curve = eta_curve(r_a, s, 40, 1_000_000, 31).unwrap();
    // Least-squares slope of log eta over the estimable tail.
    let pts: Vec<(f64, f64)> = (10..=30).map(|k| (k as f64, curve.eta_hat(k).ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let bp = BoundParams::new(r_a, s).unwrap();
    let rate = common::chernoff_rate(bp.alpha_a, bp.alpha_h);
    assert!(-slope > bp.c, "slope {slope} vs bound rate {}", bp.c);
    assert!((-slope - rate).abs() < 0.25 * rate, "slope {slope} vs chernoff {rate}");
}

#[test]
fn bound_cells_dominate_monte_carlo_cells() {
    let mc = McOptions { trials: 100_000, seed: 5 };
    let b = finality_table(&DEFAULT_TABLE_STAKES, &TABLE_CONFIDENCES, 8.0, 40.0, TableMethod::Bound, mc).unwrap();
    let m = finality_table(&DEFAULT_TABLE_STAKES, &TABLE_CONFIDENCES, 8.0, 40.0, TableMethod::MonteCarlo, mc).unwrap();
    for (rb, rm) in b.rows.iter().zip(&m.rows) {
        for (cb, cm) in rb.cells.iter().zip(&rm.cells) {
            assert!(cb.minutes >= cm.minutes, "r_a {} conf {}", rb.r_a, cb.confidence);
            assert_eq!(cb.k, cm.k_bound);
        }
    }
    let csv = m.to_csv();
    assert_eq!(csv.lines().count(), 1 + DEFAULT_TABLE_STAKES.len());
    assert!(csv.starts_with("r_a,method,qs_min_0.95,"));
    assert!(finality_table(&[], &TABLE_CONFIDENCES, 8.0, 40.0, TableMethod::Bound, mc).is_err());
}

#[test]
fn monte_carlo_k_respects_limits() {
    let m = monte_carlo_k(0.2, 8.0, 0.01, 100_000, 3).unwrap();
    assert!(m.k <= m.k_bound);
    assert!(m.ci_high <= 0.01);
    assert!(matches!(monte_carlo_k(0.2, 8.0, 1e-4, 20_000, 3), Err(AnalysisError::TrialsTooFew { .. })));
    assert!(matches!(monte_carlo_k(0.5, 8.0, 0.01, 100_000, 3), Err(AnalysisError::NoHonestAdvantage { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bernstein_sum_is_eta_bound(r_a in 0.05f64..0.45, s in 1.0f64..32.0, k in 1u64..60) {
        let bp = BoundParams::new(r_a, s).unwrap();
        let mut sum = 0.0;
        let mut m = k;
        loop {
            let term = bernstein_tail(&bp, m);
            sum += term;
            if term < 1e-16 * sum {
                break;
            }
            m += 1;
        }
        let eta = eta_bound(&bp, k);
        prop_assert!((sum - eta).abs() <= 1e-9 * eta, "{sum} vs {eta}");
        // |W_A - W_H| never exceeds the Bernstein range constant.
        prop_assert!(bp.k_bound >= 1.0);
    }

    #[test]
    fn solve_k_is_minimal(r_a in 0.05f64..0.45, s in 1.0f64..32.0, log_eta in -12.0f64..-0.1) {
        let eta = log_eta.exp();
        let bp = BoundParams::new(r_a, s).unwrap();
        let k = solve_k(&bp, eta).unwrap();
        prop_assert!(eta_bound(&bp, k) <= eta);
        prop_assert!(k == 1 || eta_bound(&bp, k - 1) > eta);
        let life = epsilon_cp(&bp, k, 1000).unwrap();
        prop_assert_eq!(life.epsilon_lp, 2.0 * life.epsilon_cp);
    }

    #[test]
    fn drift_and_rate_fall_with_adversary_stake(r in 0.01f64..0.44, dr in 0.001f64..0.05, s in 1.0f64..32.0) {
        let lo = BoundParams::new(r, s).unwrap();
        let hi = BoundParams::new(r + dr, s).unwrap();
        prop_assert!(hi.lambda < lo.lambda);
        prop_assert!(hi.c < lo.c);
    }

    #[test]
    fn tps_scales_linearly(tpb in 1.0f64..1e5, t_sl in 0.1f64..600.0, zeta in 0.01f64..1.0, a in 0.1f64..10.0) {
        let base = tps(tpb, t_sl, zeta).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs();
        prop_assert!(close(tps(a * tpb, t_sl, zeta).unwrap(), a * base));
        prop_assert!(close(tps(tpb, t_sl, zeta / a.max(1.0)).unwrap(), base / a.max(1.0)));
        prop_assert!(close(tps(tpb, a * t_sl, zeta).unwrap(), base / a));
    }

    #[test]
    fn sybil_cdf_identity(a1 in 0.01f64..16.0, a2 in 0.01f64..16.0) {
        for i in 1..=1000 {
            let x = i as f64 / 1000.0;
            prop_assert!((x.powf(a1) * x.powf(a2) - x.powf(a1 + a2)).abs() < 1e-9);
        }
        let p = win_probability(a1, a2).unwrap() + win_probability(a2, a1).unwrap();
        prop_assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn borrow_gain_recombines(ah in 1.0f64..8.0, cf in 0.05f64..0.95, v in 0.05f64..0.9, tf in 0.0f64..0.95) {
        let t = tf * (1.0 - v);
        let g = borrow_power_gains(&BorrowPowerInstance::new(ah * (1.0 - cf), ah * cf, v, t).unwrap()).unwrap();
        prop_assert_eq!(g.f_eag, (g.c5_a + g.c6_a) - (g.c1_h + g.c4_h + g.c5_h));
        for x in g.terms() {
            prop_assert!(x.is_finite() && x >= -1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimal_c_beats_its_neighbours(v in 0.05f64..0.8, tf in 0.0f64..0.8) {
        let ah = 4.4;
        let t = tf * (1.0 - v);
        let o = optimal_c(ah, v, t).unwrap();
        for c in [0.25 * ah, 0.5 * ah, 0.75 * ah] {
            let g = borrow_power_gains(&BorrowPowerInstance::new(ah - c, c, v, t).unwrap()).unwrap();
            prop_assert!(o.gain >= g.f_eag - 1e-9);
        }
    }
}
