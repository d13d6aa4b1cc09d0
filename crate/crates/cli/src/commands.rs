use std::fs;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use quicksync::analysis::borrow::{optimal_gain_surface, split_gain_surface, OptimalGainCell, SplitGainCell};
use quicksync::analysis::finality::{
    self, elbow_check, McOptions, SweepPoint, TableMethod, DEEP_TABLE_STAKES, DEFAULT_TABLE_STAKES, TABLE_CONFIDENCES,
};
use quicksync::analysis::stats::{ks_one_sample, ks_two_sample};
use quicksync::analysis::{eta_bound, solve_k, AnalysisError, BorrowPolicy, BoundParams};
use quicksync::simnet::race::{race_for_stake, run_race, RaceMode};
use quicksync::simnet::{measure, run, sybil_effective_powers, SimConfig, DEFAULT_BORROW_RESOLUTION};

use crate::error::CliError;
use crate::output::{emit, write, Stamp};
use crate::{BoundArgs, Common, Format};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_TRIALS: u64 = 100_000;

fn read_config(c: &Common) -> Result<Option<String>, CliError> {
    match &c.config {
        None => Ok(None),
        Some(p) => fs::read_to_string(p).map(Some).map_err(|source| CliError::ReadConfig { path: p.clone(), source }),
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn simulate(c: &Common) -> Result<(), CliError> {
    let text = read_config(c)?.ok_or_else(|| bad("simulate needs --config"))?;
    let mut cfg = SimConfig::from_toml(&text)?;
    if let Some(seed) = c.seed {
        cfg.rng_seed = seed;
    }
    let trace = run(&cfg)?;
    let metrics = measure(&trace, trace.meta.attack_depth);
    match c.format {
        Format::Csv => {
            write(&c.out, "trace.csv", &trace.to_csv())?;
            write(&c.out, "metrics.csv", &metrics.to_csv(&trace))?;
        }
        Format::Json => write(&c.out, "trace.json", &(trace.to_json() + "\n"))?,
    }
    write(&c.out, "metrics.json", &(metrics.to_json(&trace) + "\n"))
}

/// Optional config for the analysis commands. Every section and field has
/// a default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalysisFile {
    seed: Option<u64>,
    trials: Option<u64>,
    #[serde(default)]
    finality_table: TableSection,
    #[serde(default)]
    s_sweep: SweepSection,
    #[serde(default)]
    borrow_power: BorrowSection,
    #[serde(default)]
    sybil_check: SybilSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
enum MethodChoice {
    Bound,
    MonteCarlo,
    #[default]
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TableSection {
    r_a: Vec<f64>,
    confidences: Vec<f64>,
    method: MethodChoice,
    s: f64,
    t_sl: f64,
}

impl Default for TableSection {
    fn default() -> Self {
        TableSection {
            r_a: DEFAULT_TABLE_STAKES.to_vec(),
            confidences: TABLE_CONFIDENCES.to_vec(),
            method: MethodChoice::Both,
            s: 8.0,
            t_sl: 40.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SweepSection {
    r_a: f64,
    eta: f64,
    s: Vec<f64>,
    max_gain: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { r_a: 0.3, eta: 0.01, s: vec![2.0, 4.0, 8.0, 16.0], max_gain: 0.10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BorrowSection {
    /// Adversary stake; the honest stake power is `s * (1 - r_a)`.
    r_a: f64,
    s: f64,
    /// Points per axis of the gain surfaces.
    grid: usize,
    /// Policy resolution for the finality comparison.
    resolution: usize,
    k: Vec<u64>,
}

impl Default for BorrowSection {
    fn default() -> Self {
        BorrowSection { r_a: 0.45, s: 8.0, grid: 20, resolution: DEFAULT_BORROW_RESOLUTION, k: vec![5, 10, 20] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SybilSection {
    r_a: f64,
    s: f64,
    kappa: u32,
    parts: Vec<u32>,
    slots: u64,
}

impl Default for SybilSection {
    fn default() -> Self {
        SybilSection { r_a: 0.3, s: 8.0, kappa: 256, parts: vec![1, 2, 4, 16], slots: 100_000 }
    }
}

struct Resolved {
    file: AnalysisFile,
    seed: u64,
    trials: u64,
}

fn analysis_inputs(c: &Common) -> Result<Resolved, CliError> {
    let file: AnalysisFile = match read_config(c)? {
        None => AnalysisFile::default(),
        Some(t) => toml::from_str(&t).map_err(|e| bad(format!("config parse error: {e}")))?,
    };
    let seed = c.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let trials = c.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
    Ok(Resolved { file, seed, trials })
}

#[derive(Serialize)]
struct TableOut {
    tables: Vec<finality::FinalityTable>,
}

pub fn finality_table(c: &Common) -> Result<(), CliError> {
    let Resolved { file, seed, trials } = analysis_inputs(c)?;
    let mut sec = file.finality_table;
    if c.deep {
        for r in DEEP_TABLE_STAKES {
            if !sec.r_a.iter().any(|x| (x - r).abs() < 1e-12) {
                sec.r_a.push(r);
            }
        }
    }
    if sec.r_a.is_empty() || sec.confidences.is_empty() {
        return Err(bad("finality table grid is empty"));
    }
    let methods: &[TableMethod] = match sec.method {
        MethodChoice::Bound => &[TableMethod::Bound],
        MethodChoice::MonteCarlo => &[TableMethod::MonteCarlo],
        MethodChoice::Both => &[TableMethod::Bound, TableMethod::MonteCarlo],
    };
    let mc = McOptions { trials, seed };
    let tables = methods
        .iter()
        .map(|&m| finality::finality_table(&sec.r_a, &sec.confidences, sec.s, sec.t_sl, m, mc))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::new();
    for (i, t) in tables.iter().enumerate() {
        let body = t.to_csv();
        let skip = if i == 0 { 0 } else { 1 };
        for line in body.lines().skip(skip) {
            csv.push_str(line);
            csv.push('\n');
        }
    }
    let stamp = Stamp::new(seed, &(&sec, trials));
    emit(&c.out, "finality_table", c.format, &stamp, &csv, &TableOut { tables })
}

#[derive(Serialize)]
struct SweepOut {
    r_a: f64,
    eta: f64,
    trials: u64,
    points: Vec<SweepPoint>,
    non_increasing: bool,
    gain_8_to_16: Option<f64>,
    elbow_holds: bool,
}

pub fn s_sweep(c: &Common) -> Result<(), CliError> {
    let Resolved { file, seed, trials } = analysis_inputs(c)?;
    let sec = file.s_sweep;
    if sec.s.is_empty() {
        return Err(bad("s_sweep.s is empty"));
    }
    let points = finality::s_sweep(sec.r_a, sec.eta, &sec.s, trials, seed)?;
    let elbow = elbow_check(&points, sec.max_gain);
    let mut csv = String::from("s,k,eta_hat,ci_high,k_bound\n");
    for p in &points {
        csv.push_str(&format!("{},{},{},{},{}\n", p.s, p.k, p.eta_hat, p.ci_high, p.k_bound));
    }
    let out = SweepOut {
        r_a: sec.r_a,
        eta: sec.eta,
        trials,
        points,
        non_increasing: elbow.non_increasing,
        gain_8_to_16: elbow.gain_8_to_16,
        elbow_holds: elbow.holds,
    };
    let stamp = Stamp::new(seed, &(&sec, trials));
    emit(&c.out, "s_sweep", c.format, &stamp, &csv, &out)
}

#[derive(Debug, Clone, Copy, Serialize)]
struct EffectRow {
    r_a: f64,
    k: u64,
    eta_private: f64,
    eta_borrow: f64,
    bound: f64,
    borrow_slots: u64,
}

pub fn borrow_power(c: &Common) -> Result<(), CliError> {
    let Resolved { file, seed, trials } = analysis_inputs(c)?;
    let sec = file.borrow_power;
    if sec.grid < 2 || sec.resolution < 2 {
        return Err(bad("borrow_power.grid and borrow_power.resolution must be at least 2"));
    }
    let bp = BoundParams::new(sec.r_a, sec.s)?;
    let alpha_h = bp.alpha_h;
    let n = sec.grid;
    let axis: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let t_axis: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let c_axis: Vec<f64> = (1..=n).map(|i| alpha_h * i as f64 / (n + 1) as f64).collect();
    let stamp = Stamp::new(seed, &(&sec, trials));

    let optimal: Vec<OptimalGainCell> = optimal_gain_surface(alpha_h, &axis, &t_axis);
    let mut csv = String::from("v,t,c_opt,gain\n");
    for x in &optimal {
        csv.push_str(&format!("{},{},{},{}\n", x.v, x.t, x.c_opt, x.gain));
    }
    emit(&c.out, "borrow_optimal", c.format, &stamp, &csv, &serde_json::json!({ "alpha_h": alpha_h, "cells": optimal }))?;

    let split: Vec<SplitGainCell> = split_gain_surface(alpha_h, 0.0, &c_axis, &axis);
    let mut csv = String::from("c,v,gain\n");
    for x in &split {
        csv.push_str(&format!("{},{},{}\n", x.c, x.v, x.gain));
    }
    emit(&c.out, "borrow_split", c.format, &stamp, &csv, &serde_json::json!({ "alpha_h": alpha_h, "t": 0.0, "cells": split }))?;

    let k_cap = sec.k.iter().copied().max().ok_or_else(|| bad("borrow_power.k is empty"))?;
    let policy = Arc::new(BorrowPolicy::build(alpha_h, sec.resolution)?);
    let cfg = race_for_stake(sec.r_a, sec.s, k_cap, trials, seed);
    let plain = run_race(&cfg);
    let borrowed = run_race(&cfg.with_mode(RaceMode::BorrowIdealized(policy)));
    let rows: Vec<EffectRow> = sec
        .k
        .iter()
        .map(|&k| EffectRow {
            r_a: sec.r_a,
            k,
            eta_private: plain.eta_hat(k),
            eta_borrow: borrowed.eta_hat(k),
            bound: eta_bound(&bp, k),
            borrow_slots: borrowed.borrow_slots,
        })
        .collect();
    let mut csv = String::from("r_a,k,eta_private,eta_borrow,bound,borrow_slots\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{},{}\n", r.r_a, r.k, r.eta_private, r.eta_borrow, r.bound, r.borrow_slots));
    }
    emit(&c.out, "borrow_effect", c.format, &stamp, &csv, &serde_json::json!({ "trials": trials, "rows": rows }))
}

#[derive(Debug, Clone, Copy, Serialize)]
struct SybilRow {
    parts: u32,
    slots: u64,
    alpha: f64,
    ks_vs_single: f64,
    ks_vs_cdf: f64,
}

pub fn sybil_check(c: &Common) -> Result<(), CliError> {
    let Resolved { file, seed, .. } = analysis_inputs(c)?;
    let sec = file.sybil_check;
    if sec.parts.is_empty() {
        return Err(bad("sybil_check.parts is empty"));
    }
    let alpha = sec.r_a * sec.s;
    let mut single = sybil_effective_powers(sec.r_a, 1, sec.s, sec.kappa, sec.slots, seed)?;
    single.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    for (i, &m) in sec.parts.iter().enumerate() {
        // Each split draws from its own seed so the comparison is between
        // independent samples.
        let mut xs = sybil_effective_powers(sec.r_a, m, sec.s, sec.kappa, sec.slots, seed + 1 + i as u64)?;
        let ks_vs_cdf = ks_one_sample(&mut xs, |x| x.powf(alpha));
        let ks_vs_single = ks_two_sample(&mut xs, &mut single);
        rows.push(SybilRow { parts: m, slots: sec.slots, alpha, ks_vs_single, ks_vs_cdf });
    }
    let mut csv = String::from("parts,slots,alpha,ks_vs_single,ks_vs_cdf\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.parts, r.slots, r.alpha, r.ks_vs_single, r.ks_vs_cdf));
    }
    let stamp = Stamp::new(seed, &sec);
    emit(&c.out, "sybil_check", c.format, &stamp, &csv, &serde_json::json!({ "rows": rows }))
}

#[derive(Serialize)]
struct BoundOut {
    r_a: f64,
    s: f64,
    #[serde(flatten)]
    params: BoundParams,
    k: Option<u64>,
    eta: Option<f64>,
}

pub fn bound(b: &BoundArgs) -> Result<(), CliError> {
    let params = BoundParams::new(b.r_a, b.s)?;
    let (k, eta) = match (b.k, b.eta) {
        (Some(k), _) => {
            if k == 0 {
                return Err(AnalysisError::Invalid { field: "k", reason: "must be at least 1".into() }.into());
            }
            (Some(k), Some(eta_bound(&params, k)))
        }
        (None, Some(eta)) => (Some(solve_k(&params, eta)?), Some(eta)),
        (None, None) => (None, None),
    };
    let out = BoundOut { r_a: b.r_a, s: b.s, params, k, eta };
    match b.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&out).expect("bound serializes")),
        Format::Csv => {
            let o = |x: Option<String>| x.unwrap_or_default();
            println!("r_a,s,alpha_a,alpha_h,lambda,k_bound,sigma_sq,c,k,eta");
            println!(
                "{},{},{},{},{},{},{},{},{},{}",
                b.r_a,
                b.s,
                params.alpha_a,
                params.alpha_h,
                params.lambda,
                params.k_bound,
                params.sigma_sq,
                params.c,
                o(k.map(|x| x.to_string())),
                o(eta.map(|x| x.to_string())),
            );
        }
    }
    Ok(())
}
