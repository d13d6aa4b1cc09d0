//! Simulation configuration and its TOML form.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::chain::{ChainError, ProtocolParams};

/// Nominal transactions per block.
pub const DEFAULT_TPB: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("honest majority violated: r_h = {r_h} < 0.5 (set allow_dishonest_majority to override)")]
    HonestMajority { r_h: f64 },
    #[error(transparent)]
    Params(#[from] ChainError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SimConfigError {
    SimConfigError::Invalid { field, reason: reason.into() }
}

/// Adversary behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    #[default]
    None,
    /// Withholds forks started at every slot and reveals one once it is at
    /// least `depth` blocks deep and more powerful than the honest chain.
    /// A passive adversary only records such chains and never reveals.
    PrivateFork {
        depth: Option<u64>,
        #[serde(default)]
        passive: bool,
    },
    /// Shows same-power variants of its block to disjoint honest subsets.
    SplitN { subsets: usize },
    /// Private fork that lends its chain to part of the honest stake while ahead.
    BorrowPower { depth: Option<u64>, resolution: Option<usize> },
    /// Publishes headers but withholds block data, optionally releasing it
    /// `release_after` slots later.
    MissingData { release_after: Option<u64> },
    /// Splits the adversary stake into `parts` identities that publish honestly.
    SybilSplit { parts: u32 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::PrivateFork { .. } => "private_fork",
            Strategy::SplitN { .. } => "split_n",
            Strategy::BorrowPower { .. } => "borrow_power",
            Strategy::MissingData { .. } => "missing_data",
            Strategy::SybilSplit { .. } => "sybil_split",
        }
    }

    /// Attack depth, falling back to the confirmation depth.
    pub fn depth(&self, params: &ProtocolParams) -> u64 {
        match self {
            Strategy::PrivateFork { depth, .. } | Strategy::BorrowPower { depth, .. } => {
                depth.unwrap_or(params.confirm_depth)
            }
            _ => params.confirm_depth,
        }
    }

    /// Number of adversary identities registered at genesis.
    pub fn identities(&self) -> u32 {
        match self {
            Strategy::SybilSplit { parts } => *parts,
            _ => 1,
        }
    }
}

/// Fraction of honest stake online each slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activity {
    pub r_active: f64,
    /// Optional per-slot fractions, repeated cyclically; overrides `r_active`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<f64>>,
}

impl Default for Activity {
    fn default() -> Self {
        Activity { r_active: 1.0, mask: None }
    }
}

impl Activity {
    pub fn fraction(&self, slot: u64) -> f64 {
        match &self.mask {
            Some(m) if !m.is_empty() => m[((slot - 1) % m.len() as u64) as usize],
            _ => self.r_active,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ProtocolParams,
    /// Relative stake of each honest node.
    pub honest_stakes: Vec<f64>,
    pub adversary_stake: f64,
    pub strategy: Strategy,
    pub horizon_slots: u64,
    pub activity: Activity,
    pub rng_seed: u64,
    pub tpb: u64,
    pub allow_dishonest_majority: bool,
}

impl SimConfig {
    /// `honest_nodes` equal honest stakeholders sharing `1 - r_a`.
    pub fn equal_split(honest_nodes: usize, r_a: f64, strategy: Strategy, horizon_slots: u64, rng_seed: u64) -> Self {
        let each = (1.0 - r_a) / honest_nodes.max(1) as f64;
        SimConfig {
            params: ProtocolParams::default(),
            honest_stakes: vec![each; honest_nodes],
            adversary_stake: r_a,
            strategy,
            horizon_slots,
            activity: Activity::default(),
            rng_seed,
            tpb: DEFAULT_TPB,
            allow_dishonest_majority: false,
        }
    }

    pub fn honest_total(&self) -> f64 {
        self.honest_stakes.iter().sum()
    }

    pub fn validate(&self) -> Result<(), SimConfigError> {
        self.params.validate()?;
        if self.honest_stakes.is_empty() {
            return Err(invalid("honest_stakes", "at least one honest node is required"));
        }
        if let Some(r) = self.honest_stakes.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(invalid("honest_stakes", format!("{r} outside (0, 1]")));
        }
        if !(0.0..1.0).contains(&self.adversary_stake) {
            return Err(invalid("adversary_stake", format!("{} outside [0, 1)", self.adversary_stake)));
        }
        let r_h = self.honest_total();
        if (r_h + self.adversary_stake - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "honest_stakes",
                format!("honest {r_h} plus adversary {} must sum to 1", self.adversary_stake),
            ));
        }
        if r_h < 0.5 && !self.allow_dishonest_majority {
            return Err(SimConfigError::HonestMajority { r_h });
        }
        if self.horizon_slots == 0 {
            return Err(invalid("horizon_slots", "must be positive"));
        }
        if self.tpb == 0 {
            return Err(invalid("tpb", "must be positive"));
        }
        let fractions: Vec<f64> = match &self.activity.mask {
            Some(m) if m.is_empty() => return Err(invalid("activity.mask", "must not be empty")),
            Some(m) => m.clone(),
            None => vec![self.activity.r_active],
        };
        if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(invalid("activity", format!("active fraction {f} outside (0, 1]")));
        }
        match &self.strategy {
            Strategy::PrivateFork { depth: Some(0), .. } | Strategy::BorrowPower { depth: Some(0), .. } => {
                return Err(invalid("adversary.depth", "must be positive"));
            }
            Strategy::BorrowPower { resolution: Some(r), .. } if *r < 2 => {
                return Err(invalid("adversary.resolution", "must be at least 2"));
            }
            Strategy::SplitN { subsets } if *subsets < 1 => {
                return Err(invalid("adversary.subsets", "must be at least 1"));
            }
            Strategy::SybilSplit { parts } if *parts < 1 => {
                return Err(invalid("adversary.parts", "must be at least 1"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn param_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Parses and validates the TOML form (see [`ConfigFile`]).
    pub fn from_toml(text: &str) -> Result<Self, SimConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| SimConfigError::Parse(e.to_string()))?;
        let cfg = file.into_config()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// On-disk layout:
///
/// ```toml
/// seed = 7
/// horizon_slots = 1000
/// tpb = 2000
/// allow_dishonest_majority = false
///
/// [params]            # any ProtocolParams field
/// scale_factor = 8.0
///
/// [stakes]
/// adversary = 0.2
/// honest = [0.4, 0.4] # or: honest_nodes = 10 (equal split)
///
/// [adversary]
/// strategy = "private_fork"
/// depth = 6
///
/// [activity]
/// r_active = 1.0
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub seed: u64,
    pub horizon_slots: u64,
    #[serde(default = "default_tpb")]
    pub tpb: u64,
    #[serde(default)]
    pub allow_dishonest_majority: bool,
    #[serde(default)]
    pub params: ProtocolParams,
    pub stakes: StakesSection,
    #[serde(default)]
    pub adversary: Strategy,
    #[serde(default)]
    pub activity: Activity,
}

fn default_tpb() -> u64 {
    DEFAULT_TPB
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StakesSection {
    #[serde(default)]
    pub adversary: f64,
    pub honest: Option<Vec<f64>>,
    pub honest_nodes: Option<usize>,
}

impl ConfigFile {
    pub fn into_config(self) -> Result<SimConfig, SimConfigError> {
        let r_a = self.stakes.adversary;
        let honest_stakes = match (self.stakes.honest, self.stakes.honest_nodes) {
            (Some(list), None) => list,
            (None, Some(n)) if n > 0 => vec![(1.0 - r_a) / n as f64; n],
            (None, Some(_)) => return Err(invalid("stakes.honest_nodes", "must be positive")),
            (Some(_), Some(_)) => return Err(invalid("stakes", "give either honest or honest_nodes, not both")),
            (None, None) => return Err(invalid("stakes", "missing honest or honest_nodes")),
        };
        Ok(SimConfig {
            params: self.params,
            honest_stakes,
            adversary_stake: r_a,
            strategy: self.adversary,
            horizon_slots: self.horizon_slots,
            activity: self.activity,
            rng_seed: self.seed,
            tpb: self.tpb,
            allow_dishonest_majority: self.allow_dishonest_majority,
        })
    }
}
