use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use lpsketch::rng::hash_words;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Median,
    Kcost,
    Medoid,
    Distsim,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReducerChoice {
    Passthrough,
    Uniform,
    Sensitivity,
}

impl ReducerChoice {
    pub fn name(self) -> &'static str {
        match self {
            ReducerChoice::Passthrough => "passthrough",
            ReducerChoice::Uniform => "uniform",
            ReducerChoice::Sensitivity => "sensitivity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionChoice {
    RoundRobin,
    Contiguous,
    /// One machine index per line in `partition_file`.
    File,
}

/// Everything a run depends on. Written to and read from TOML, and echoed
/// into every result line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    pub k: usize,
    pub seed: u64,
    pub capacity: usize,
    pub reducer: ReducerChoice,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub machines: usize,
    pub partition: PartitionChoice,
    pub partition_file: Option<PathBuf>,
    pub budget_bytes: Option<u64>,
    pub compare_oracle: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Median,
            p: 1.0,
            eps: 0.25,
            delta: 0.2,
            k: 1,
            seed: 0,
            capacity: 14,
            reducer: ReducerChoice::Sensitivity,
            input: None,
            output: None,
            machines: 1,
            partition: PartitionChoice::RoundRobin,
            partition_file: None,
            budget_bytes: None,
            compare_oracle: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Stable hash of the TOML rendering.
    pub fn hash(&self) -> anyhow::Result<u64> {
        let text = self.to_toml()?;
        let words: Vec<u64> = text
            .as_bytes()
            .chunks(8)
            .map(|c| {
                let mut b = [0u8; 8];
                b[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(b)
            })
            .chain([text.len() as u64])
            .collect();
        Ok(hash_words(&words))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(1.0..=2.0).contains(&self.p) {
            bail!("p must lie in [1, 2], got {}", self.p);
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            bail!("eps must lie in (0, 1), got {}", self.eps);
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail!("delta must lie in (0, 1), got {}", self.delta);
        }
        if self.k == 0 || self.capacity == 0 || self.machines == 0 {
            bail!("k, capacity and machines must be positive");
        }
        Ok(())
    }
}
