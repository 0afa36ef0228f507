//! SGD with momentum, optional Nesterov lookahead and coupled weight decay.

use std::collections::{BTreeMap, BTreeSet};

use loadnet_tensor::Tensor;
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};

/// Parameter names excluded from optimizer updates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrozenMask {
    names: BTreeSet<String>,
}

impl FrozenMask {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f32,
    pub weight_decay: f32,
    pub momentum: f32,
    pub nesterov: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            weight_decay: 5e-4,
            momentum: 0.9,
            nesterov: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: BTreeMap<String, Tensor>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            velocity: BTreeMap::new(),
        }
    }

    pub fn velocity(&self, name: &str) -> Option<&Tensor> {
        self.velocity.get(name)
    }

    /// One update of every unmasked parameter that has a gradient:
    ///
    /// ```text
    /// g <- grad + wd * p
    /// v <- mu * v + g
    /// p <- p - lr * (g + mu * v)   (nesterov)
    /// p <- p - lr * v              (otherwise)
    /// ```
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
        mask: &FrozenMask,
    ) -> Result<()> {
        let SgdConfig {
            lr,
            weight_decay: wd,
            momentum: mu,
            nesterov,
        } = self.config;
        for (name, grad) in grads {
            if mask.contains(name) {
                continue;
            }
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Config(format!("gradient for unknown parameter `{name}`")))?;
            if p.dims() != grad.dims() {
                return Err(Error::Config(format!(
                    "gradient for `{name}` has dims {:?}, parameter has {:?}",
                    grad.dims(),
                    p.dims()
                )));
            }
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.dims()).expect("positive extents"));
            for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(grad.data()) {
                let g = *gv + wd * *pv;
                *vv = mu * *vv + g;
                *pv -= if nesterov { lr * (g + mu * *vv) } else { lr * *vv };
            }
        }
        Ok(())
    }
}
