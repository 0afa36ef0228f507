//! Protocol roles: source train/test, target adaptation pool, target test.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Domain};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "1->2")]
    OneToTwo,
    #[serde(rename = "2->1")]
    TwoToOne,
}

impl Direction {
    pub fn source(self) -> Domain {
        match self {
            Direction::OneToTwo => Domain::One,
            Direction::TwoToOne => Domain::Two,
        }
    }

    pub fn target(self) -> Domain {
        self.source().other()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::OneToTwo => "1->2",
            Direction::TwoToOne => "2->1",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    WholeTarget,
    SubTarget,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::WholeTarget => "whole-target",
            Protocol::SubTarget => "sub-target",
        }
    }
}

/// Image indices into a [`Dataset`] for each protocol role.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub direction: Direction,
    pub protocol: Protocol,
    pub source_train: Vec<usize>,
    pub source_test: Vec<usize>,
    pub target_adapt: Vec<usize>,
    pub target_test: Vec<usize>,
}

/// Default sub-target categories: the first `floor(8K / 15)`, kept strictly
/// inside `1..K`. Eight of fifteen at the default category count.
pub fn default_sub_categories(k: usize) -> Vec<usize> {
    let n = (8 * k / 15).clamp(1, k.saturating_sub(1).max(1));
    (0..n).collect()
}

/// Source images are split per category into `train_fraction` / rest
/// (rounded), so every category appears in both parts when it has at least
/// two images.
pub fn make_splits<R: Rng + ?Sized>(
    data: &Dataset,
    direction: Direction,
    protocol: Protocol,
    sub_categories: Option<&[usize]>,
    train_fraction: f64,
    rng: &mut R,
) -> Result<DatasetSplit> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let k = data.categories;
    let subset = match (protocol, sub_categories) {
        (Protocol::WholeTarget, Some(_)) => {
            return Err(Error::Config("sub categories given for a whole-target protocol".into()))
        }
        (Protocol::WholeTarget, None) => None,
        (Protocol::SubTarget, given) => {
            let mut s = given.map_or_else(|| default_sub_categories(k), <[usize]>::to_vec);
            s.sort_unstable();
            s.dedup();
            if s.is_empty() || s.len() >= k || s.iter().any(|&c| c >= k) {
                return Err(Error::Config(format!(
                    "sub categories {s:?} must be a non-empty strict subset of 0..{k}"
                )));
            }
            Some(s)
        }
    };

    let mut source_train = Vec::new();
    let mut source_test = Vec::new();
    let source = data.indices_of(direction.source());
    for c in 0..k {
        let mut idx: Vec<usize> = source.iter().copied().filter(|&i| data.images[i].category == c).collect();
        idx.shuffle(rng);
        let n_train = (idx.len() as f64 * train_fraction).round() as usize;
        source_test.extend_from_slice(&idx[n_train..]);
        idx.truncate(n_train);
        source_train.extend(idx);
    }
    source_train.sort_unstable();
    source_test.sort_unstable();

    let target_test = data.indices_of(direction.target());
    let target_adapt = match &subset {
        None => target_test.clone(),
        Some(s) => target_test
            .iter()
            .copied()
            .filter(|&i| s.binary_search(&data.images[i].category).is_ok())
            .collect(),
    };
    Ok(DatasetSplit {
        direction,
        protocol,
        source_train,
        source_test,
        target_adapt,
        target_test,
    })
}
