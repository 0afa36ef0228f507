//! Two-domain labelled image collections and the protocol splits over them.

pub mod imagedir;
pub mod manifest;
pub mod splits;
pub mod synth;

use std::fmt;

use loadnet_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::pnm::Pnm;

pub use splits::{make_splits, DatasetSplit, Direction, Protocol};
pub use synth::{ShiftMode, SynthConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Domain {
    pub fn other(self) -> Self {
        match self {
            Domain::One => Domain::Two,
            Domain::Two => Domain::One,
        }
    }

    /// 1 or 2.
    pub fn label(self) -> u8 {
        match self {
            Domain::One => 1,
            Domain::Two => 2,
        }
    }

    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            1 => Ok(Domain::One),
            2 => Ok(Domain::Two),
            _ => Err(Error::Config(format!("domain label must be 1 or 2, found {label}"))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Pixel-space box, half-open: `x0 <= x < x1`, `y0 <= y < y1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 && x < self.x1 as f64 && y >= self.y0 as f64 && y < self.y1 as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    /// 8-bit RGB pixels, `side × side`.
    pub pixels: Pnm,
    pub category: usize,
    pub instance: usize,
    pub domain: Domain,
    /// Ground-truth object box; synthetic data only.
    pub bbox: Option<BBox>,
}

impl LabeledImage {
    /// `[3, side, side]` with values in `[0, 1]`.
    pub fn tensor(&self) -> Tensor {
        self.pixels.to_tensor()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub categories: usize,
    pub side: usize,
    pub images: Vec<LabeledImage>,
}

impl Dataset {
    pub fn indices_of(&self, domain: Domain) -> Vec<usize> {
        (0..self.images.len())
            .filter(|&i| self.images[i].domain == domain)
            .collect()
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.images.iter().position(|im| im.id == id)
    }

    pub fn tensors(&self, indices: &[usize]) -> Vec<Tensor> {
        indices.iter().map(|&i| self.images[i].tensor()).collect()
    }
}
