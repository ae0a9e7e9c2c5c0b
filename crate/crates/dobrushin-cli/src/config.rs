//! Run configurations. A config is loaded from JSON (or from a previous
//! run's manifest), every omitted default is expanded on load, and the
//! expanded record is what gets echoed and hashed.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dobrushin::ising::ChainParams;
use dobrushin::lattice::BoxDims;
use dobrushin::stats::{EventKind, Observable};
use dobrushin::Face;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// The box of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BoxSpec {
    /// `Λ_{n,m,h}`; `m` defaults to `n`, `h_cap` to `4⌈log(2n)/β⌉ + 8`.
    Lambda {
        n: u32,
        m: Option<u32>,
        h_cap: Option<u32>,
    },
    /// Inclusive cell index ranges.
    General { x: [i32; 2], y: [i32; 2], z: [i32; 2] },
}

impl BoxSpec {
    fn expand(&mut self, beta: f64) {
        if let BoxSpec::Lambda { n, m, h_cap } = self {
            m.get_or_insert(*n);
            h_cap.get_or_insert_with(|| BoxDims::default_h_cap(*n, beta));
        }
    }

    pub fn dims(&self) -> Result<BoxDims, CliError> {
        match *self {
            BoxSpec::Lambda { n, m, h_cap } => {
                BoxDims::lambda(n, m.unwrap_or(n), h_cap.unwrap_or(1)).map_err(CliError::invalid)
            }
            BoxSpec::General { x, y, z } => {
                BoxDims::general((x[0], x[1]), (y[0], y[1]), (z[0], z[1])).map_err(CliError::invalid)
            }
        }
    }
}

/// A heat-bath chain with replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(rename = "box")]
    pub dims: BoxSpec,
    pub beta: f64,
    /// Total sweeps per replica, including burn-in.
    pub sweeps: u64,
    /// Defaults to `20·(2n+1)`, capped at `sweeps`.
    pub burn_in: Option<u64>,
    /// Defaults to 1.
    pub thin: Option<u64>,
    pub seed: u64,
    /// Defaults to 1.
    pub replicas: Option<u64>,
}

impl ChainSpec {
    fn expand(&mut self) -> Result<(), CliError> {
        self.dims.expand(self.beta);
        let dims = self.dims.dims()?;
        self.burn_in
            .get_or_insert(ChainParams::default_burn_in(&dims).min(self.sweeps));
        self.thin.get_or_insert(1);
        self.replicas.get_or_insert(1);
        if self.replicas == Some(0) {
            return Err(CliError::Invalid("replicas must be at least 1".into()));
        }
        self.params()?.validate().map_err(CliError::invalid)
    }

    /// Parameters of replica 0.
    pub fn params(&self) -> Result<ChainParams, CliError> {
        Ok(ChainParams {
            dims: self.dims.dims()?,
            beta: self.beta,
            sweeps: self.sweeps,
            burn_in: self.burn_in.unwrap_or(0),
            thin: self.thin.unwrap_or(1),
            seed: self.seed,
            replica: 0,
        })
    }

    pub fn replicas(&self) -> u64 {
        self.replicas.unwrap_or(1)
    }
}

/// `sample`: run a chain and store its snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub chain: ChainSpec,
}

/// `decompose`: decompose stored snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    pub snapshot: PathBuf,
    /// Footprint faces `[i, j]` (the face above cell `(i, j, 0)`) whose
    /// pillars are decomposed.
    pub faces: Vec<[i32; 2]>,
}

/// `psi`: apply the map Ψ to stored snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiConfig {
    pub snapshot: PathBuf,
    pub x: [i32; 2],
    /// Increment index `t`; exactly one of `t` and `height` is given.
    pub t: Option<usize>,
    /// Target height `ℓ` (`t = τ(ℓ)`).
    pub height: Option<i32>,
    /// Also write the output interfaces. Defaults to false.
    pub dump_interfaces: Option<bool>,
}

/// One event query of an `events` task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub kind: EventKind,
    pub x: [i32; 2],
    pub h: i32,
}

/// A statistical task of `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Events {
        queries: Vec<EventSpec>,
    },
    AlphaTable {
        h_max: i32,
        /// Slack of the sup-form rate; defaults to 0.
        sup_slack: Option<f64>,
    },
    MaxDist {},
    Submult {
        h1: i32,
        h2: i32,
        x: [i32; 2],
        x1: [i32; 2],
        x2: [i32; 2],
        /// Desk-scale stand-in for `ε_β`; defaults to 0.25.
        slack: Option<f64>,
    },
    CountZ {
        h: i32,
    },
    Correlation {
        observable: Observable,
        distances: Vec<i32>,
        /// Defaults to false.
        shuffled_null: Option<bool>,
    },
    Cond {
        h: i32,
        x: [i32; 2],
    },
}

impl TaskSpec {
    /// Output table stem; also the uniqueness key of a task.
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Events { .. } => "events",
            TaskSpec::AlphaTable { .. } => "alpha_table",
            TaskSpec::MaxDist {} => "max_dist",
            TaskSpec::Submult { .. } => "submult",
            TaskSpec::CountZ { .. } => "count_z",
            TaskSpec::Correlation { .. } => "correlation",
            TaskSpec::Cond { .. } => "cond",
        }
    }

    fn expand(&mut self) {
        match self {
            TaskSpec::AlphaTable { sup_slack, .. } => {
                sup_slack.get_or_insert(0.0);
            }
            TaskSpec::Submult { slack, .. } => {
                slack.get_or_insert(0.25);
            }
            TaskSpec::Correlation { shuffled_null, .. } => {
                shuffled_null.get_or_insert(false);
            }
            _ => {}
        }
    }
}

/// `estimate`: run statistical tasks on one chain specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub chain: ChainSpec,
    /// Margin of the interior region; defaults to `⌈log² n⌉ ∨ 1`.
    pub margin: Option<u32>,
    /// Batch-means batches; defaults to 32.
    pub batches: Option<usize>,
    pub tasks: Vec<TaskSpec>,
}

/// `multiscale`: compare `M_n` with the maximum of `κ` draws of `M_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiscaleConfig {
    pub n: u32,
    pub l: u32,
    pub beta: f64,
    /// Truncation height of both boxes; defaults to the large box's default.
    pub h_cap: Option<u32>,
    /// Kept samples per side.
    pub samples: u64,
    /// Defaults to 1.
    pub thin: Option<u64>,
    /// Defaults to `20·(2n+1)` for the large box and is used for both.
    pub burn_in: Option<u64>,
    pub seed: u64,
    /// Seed of the small-box replicas; defaults to `seed + 1`.
    pub small_seed: Option<u64>,
    /// Defaults to 32.
    pub batches: Option<usize>,
}

/// Checks available to `report`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    LowerBound,
    Submult,
    SuperAdditivity,
    MedianBracket,
    Multiscale,
}

/// `report`: evaluate checks on tables written by `estimate`/`multiscale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Directory holding the input tables.
    pub inputs: PathBuf,
    pub beta: f64,
    pub n: i32,
    pub checks: Vec<CheckName>,
    /// Factor of the lower bound `c·e^{−(4β+e^{−4β})h}`; defaults to 0.5.
    pub lower_bound_factor: Option<f64>,
    /// Slack of the sub-multiplicativity ratio; defaults to 0.25.
    pub submult_slack: Option<f64>,
    /// Slack of the super-additivity band; defaults to 0.5.
    pub super_slack: Option<f64>,
    /// Tolerance on the KS distance; defaults to 0.10.
    pub ks_tolerance: Option<f64>,
}

/// Configs that expand their defaults on load.
pub trait Expand: Serialize + DeserializeOwned {
    fn expand(&mut self) -> Result<(), CliError>;
    /// The seed recorded in outputs (0 when the command is not random).
    fn seed(&self) -> u64 {
        0
    }
}

impl Expand for SampleConfig {
    fn expand(&mut self) -> Result<(), CliError> {
        self.chain.expand()
    }
    fn seed(&self) -> u64 {
        self.chain.seed
    }
}

impl Expand for DecomposeConfig {
    fn expand(&mut self) -> Result<(), CliError> {
        Ok(())
    }
}

impl Expand for PsiConfig {
    fn expand(&mut self) -> Result<(), CliError> {
        if self.t.is_some() == self.height.is_some() {
            return Err(CliError::Invalid("exactly one of `t` and `height` must be given".into()));
        }
        if self.t == Some(0) || self.height.is_some_and(|h| h < 1) {
            return Err(CliError::Invalid("`t` and `height` must be at least 1".into()));
        }
        self.dump_interfaces.get_or_insert(false);
        Ok(())
    }
}

impl Expand for EstimateConfig {
    fn expand(&mut self) -> Result<(), CliError> {
        self.chain.expand()?;
        let dims = self.chain.dims.dims()?;
        self.margin
            .get_or_insert_with(|| dobrushin::stats::default_margin(dims.n().max(dims.m())));
        self.batches.get_or_insert(dobrushin::stats::DEFAULT_BATCHES);
        let mut names = BTreeSet::new();
        for t in &mut self.tasks {
            t.expand();
            if !names.insert(t.name()) {
                return Err(CliError::Invalid(format!("task `{}` appears twice", t.name())));
            }
        }
        if self.tasks.is_empty() {
            return Err(CliError::Invalid("no tasks given".into()));
        }
        Ok(())
    }
    fn seed(&self) -> u64 {
        self.chain.seed
    }
}

impl Expand for MultiscaleConfig {
    fn expand(&mut self) -> Result<(), CliError> {
        if self.l == 0 || self.n < self.l {
            return Err(CliError::Invalid(format!("need 1 ≤ l ≤ n, got l = {}, n = {}", self.l, self.n)));
        }
        self.h_cap
            .get_or_insert_with(|| BoxDims::default_h_cap(self.n, self.beta));
        self.thin.get_or_insert(1);
        let nx = 2 * self.n as u64 + 1;
        self.burn_in.get_or_insert(20 * nx);
        self.small_seed.get_or_insert(self.seed.wrapping_add(1));
        self.batches.get_or_insert(dobrushin::stats::DEFAULT_BATCHES);
        if self.thin == Some(0) {
            return Err(CliError::Invalid("thin must be at least 1".into()));
        }
        Ok(())
    }
    fn seed(&self) -> u64 {
        self.seed
    }
}

impl Expand for ReportConfig {
    fn expand(&mut self) -> Result<(), CliError> {
        self.lower_bound_factor.get_or_insert(0.5);
        self.submult_slack.get_or_insert(0.25);
        self.super_slack.get_or_insert(0.5);
        self.ks_tolerance.get_or_insert(0.10);
        if self.checks.is_empty() {
            return Err(CliError::Invalid("no checks given".into()));
        }
        Ok(())
    }
}

/// The footprint face above cell `(i, j, 0)`.
pub fn face(ij: [i32; 2]) -> Face {
    Face::l0(ij[0], ij[1])
}

/// Load a config of type `C` from a JSON file, or from the `config` member
/// of a manifest written by the same command. Errors name the offending
/// field path and the line/column.
pub fn load<C: Expand>(path: &Path, command: &str) -> Result<C, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |message: String| CliError::Config {
        path: path.to_path_buf(),
        message,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let mut config: C = if let Some(inner) = value.get("manifest_version") {
        let _ = inner;
        let cmd = value.get("command").and_then(|c| c.as_str()).unwrap_or_default();
        if cmd != command {
            return Err(bad(format!("manifest was written by `{cmd}`, not `{command}`")));
        }
        let cfg = value
            .get("config")
            .ok_or_else(|| bad("manifest has no `config` member".into()))?;
        serde_path_to_error::deserialize(cfg.clone())
            .map_err(|e| bad(format!("field `{}`: {}", e.path(), e.inner())))?
    } else {
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| bad(format!("field `{}`: {}", e.path(), e.inner())))?
    };
    config.expand().map_err(|e| match e {
        CliError::Invalid(m) => bad(m),
        other => other,
    })?;
    Ok(config)
}

/// Canonical JSON of an expanded config.
pub fn canonical_json<C: Serialize>(config: &C) -> String {
    serde_json::to_string(config).expect("configs serialize")
}

/// SHA-256 of the canonical JSON, hex encoded.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    hex(&Sha256::digest(canonical_json(config).as_bytes()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
