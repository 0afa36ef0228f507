//! Pooled-side / hidden-width presets for the pooling ablation.

use super::config::{ExperimentConfig, ModelPreset};
use super::pipeline::{RunReport, Runner};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AblationPreset {
    pub pooled: usize,
    /// Hidden width as a multiple of the configured width.
    pub hidden_scale: usize,
}

/// `6×6` with doubled hidden layers, then `4×4` and `3×3` at the base width,
/// mirroring 4096 against 2048 units on the reference trunk.
pub const ABLATION_PRESETS: [AblationPreset; 3] = [
    AblationPreset { pooled: 6, hidden_scale: 2 },
    AblationPreset { pooled: 4, hidden_scale: 1 },
    AblationPreset { pooled: 3, hidden_scale: 1 },
];

impl AblationPreset {
    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        c.model = ModelPreset::Load;
        c.load.pooled = self.pooled;
        c.load.hidden = cfg.load.hidden.map(|h| h * self.hidden_scale);
        c
    }

    pub fn label(&self, cfg: &ExperimentConfig) -> String {
        let h = cfg.load.hidden[0] * self.hidden_scale;
        format!("p{}x{}/fc{h}", self.pooled, self.pooled)
    }
}

/// One LoAd run per preset, every run under the same seeds.
pub fn ablate_pooling(runner: &mut Runner, cfg: &ExperimentConfig) -> Result<Vec<(AblationPreset, RunReport)>> {
    let u = cfg.trunk.out_side()?;
    if let Some(p) = ABLATION_PRESETS.iter().find(|p| p.pooled > u) {
        return Err(Error::Config(format!(
            "pooled side {} exceeds trunk output side {u}",
            p.pooled
        )));
    }
    ABLATION_PRESETS
        .iter()
        .map(|p| Ok((*p, runner.run(&p.apply(cfg))?)))
        .collect()
}
