//! Declarative experiment description, read from and echoed to TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Direction, Protocol, SynthConfig};
use crate::domainness::AttributionScore;
use crate::error::{Error, Result};
use crate::model::{FusionMode, LoadConfig, TrainConfig};
use crate::nets::discriminator::DiscConfig;
use crate::nets::pretrain::PretrainConfig;
use crate::nets::TrunkConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Synth(SynthConfig),
    Dir { root: PathBuf, side: usize },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth(SynthConfig::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelPreset {
    Load,
    BaselinePlain,
}

impl ModelPreset {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelPreset::Load => "load",
            ModelPreset::BaselinePlain => "baseline-plain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub steps: usize,
    pub lr: f32,
    pub weight_decay: f32,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 0.5,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub direction: Direction,
    pub protocol: Protocol,
    pub model: ModelPreset,
    pub repeats: usize,
    /// One seed per repeat; empty means `0..repeats`.
    pub seeds: Vec<u64>,
    /// Sub-target categories; empty means the default subset.
    pub sub_categories: Vec<usize>,
    /// Fraction of source images used for training.
    pub train_fraction: f64,
    pub score: AttributionScore,
    /// Pick each test image's generic domain from the discriminator's own
    /// prediction instead of its known domain.
    pub predicted_generic: bool,
    pub data: DataSource,
    pub trunk: TrunkConfig,
    pub pretrain: PretrainConfig,
    pub discriminator: DiscConfig,
    pub load: LoadConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            direction: Direction::OneToTwo,
            protocol: Protocol::WholeTarget,
            model: ModelPreset::Load,
            repeats: 5,
            seeds: Vec::new(),
            sub_categories: Vec::new(),
            train_fraction: 0.8,
            score: AttributionScore::Logit,
            predicted_generic: false,
            data: DataSource::default(),
            trunk: TrunkConfig::desk(),
            pretrain: PretrainConfig::default(),
            discriminator: DiscConfig::default(),
            load: LoadConfig::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The effective configuration, every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Short content hash of the effective configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repeats as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn sub_categories(&self) -> Option<&[usize]> {
        match self.protocol {
            Protocol::SubTarget if !self.sub_categories.is_empty() => Some(&self.sub_categories),
            _ => None,
        }
    }

    /// Fusion mode actually used: the plain baseline never fuses.
    pub fn fusion(&self) -> FusionMode {
        match self.model {
            ModelPreset::Load => self.load.fusion,
            ModelPreset::BaselinePlain => FusionMode::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.repeats {
            return Err(Error::Config(format!(
                "{} seeds given for {} repeats",
                self.seeds.len(),
                self.repeats
            )));
        }
        if self.protocol == Protocol::WholeTarget && !self.sub_categories.is_empty() {
            return Err(Error::Config("sub_categories requires protocol = \"sub-target\"".into()));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        self.trunk.validate()?;
        let side = match &self.data {
            DataSource::Synth(s) => {
                s.validate()?;
                s.side
            }
            DataSource::Dir { side, .. } => *side,
        };
        if side != self.trunk.side {
            return Err(Error::Config(format!(
                "image side {side} differs from trunk input side {}",
                self.trunk.side
            )));
        }
        let u = self.trunk.out_side()?;
        if self.load.pooled == 0 || self.load.pooled > u {
            return Err(Error::Config(format!(
                "pooled side {} must lie in 1..={u} (trunk output side)",
                self.load.pooled
            )));
        }
        Ok(())
    }
}
