//! Stand-in for ImageNet pretraining: the trunk is trained as a source object
//! classifier (trunk, global average pool, linear to K) and then frozen.

use loadnet_tensor::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_linear, trunk, FrozenMask, ParamStore, Sgd, SgdConfig, TrunkConfig};
use crate::error::{Error, Result};

const HEAD: &str = "pretrain.fc";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            sgd: SgdConfig {
                lr: 0.005,
                ..SgdConfig::default()
            },
        }
    }
}

/// Returns the trained `trunk.*` parameters and the per-epoch mean loss.
pub fn pretrain_trunk<R: Rng + ?Sized>(
    trunk_cfg: &TrunkConfig,
    images: &[&Tensor],
    labels: &[usize],
    categories: usize,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<(ParamStore, Vec<f32>)> {
    if images.len() != labels.len() || images.is_empty() {
        return Err(Error::Data("pretraining needs one label per image and at least one image".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut params = ParamStore::new();
    trunk_cfg.init(&mut params, rng)?;
    init_linear(&mut params, HEAD, trunk_cfg.maps(), categories, rng);
    let mask = FrozenMask::default();
    let mut opt = Sgd::new(cfg.sgd);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&Tensor> = batch.iter().map(|&i| images[i]).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::new();
            let bound = params.bind(&mut g, &mask);
            let x = g.constant(Tensor::stack(&xs)?);
            let f = trunk_cfg.forward(&mut g, &bound, x)?;
            let f = g.global_avg_pool(f)?;
            let z = g.linear(f, bound.var(&format!("{HEAD}.weight")), bound.var(&format!("{HEAD}.bias")))?;
            let loss = g.softmax_cross_entropy(z, &ys)?;
            total += g.value(loss).item()? * batch.len() as f32;
            let mut grads = g.backward(loss)?;
            opt.step(&mut params, &bound.gradients(&mut grads), &mask)?;
        }
        curve.push(total / images.len() as f32);
    }
    let mut trunk_params = ParamStore::new();
    trunk_params.extend_prefixed(&params, trunk::PREFIX);
    Ok((trunk_params, curve))
}
