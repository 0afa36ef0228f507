#![allow(dead_code)]

use loadnet::data::{Domain, SynthConfig};
use loadnet::model::{FusionMode, LoadConfig, LoadModel};
use loadnet::nets::{ConvSpec, Discriminator, ParamStore, PoolSpec, TrunkConfig};
use loadnet_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform<T: loadnet_tensor::Scalar>(dims: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<T> {
    let mut r = rng(seed);
    Tensor::from_fn(dims, |_| T::from_f64_lossy(r.gen_range(lo..hi))).unwrap()
}

/// 3×12×12 inputs to 4 maps of 6×6.
pub fn tiny_trunk() -> TrunkConfig {
    TrunkConfig {
        in_channels: 3,
        side: 12,
        layers: vec![
            ConvSpec {
                out_channels: 3,
                kernel: 3,
                stride: 1,
                pad: 1,
                pool: Some(PoolSpec { window: 2, stride: 2 }),
            },
            ConvSpec {
                out_channels: 4,
                kernel: 3,
                stride: 1,
                pad: 1,
                pool: None,
            },
        ],
    }
}

pub fn trunk_params(cfg: &TrunkConfig, seed: u64) -> ParamStore {
    let mut p = ParamStore::new();
    cfg.init(&mut p, &mut rng(seed)).unwrap();
    p
}

/// A discriminator with a random (non-zero) head.
pub fn random_discriminator(cfg: &TrunkConfig, seed: u64) -> Discriminator {
    let mut d = Discriminator::new(cfg.clone(), &trunk_params(cfg, seed)).unwrap();
    let n = cfg.maps();
    d.params.insert("disc.weight", uniform(&[1, n], -1.0, 1.0, seed ^ 0xd15c));
    d.params.insert("disc.bias", uniform(&[1], -0.5, 0.5, seed ^ 0xb1a5));
    d
}

/// A classifier with every layer, including the output layer, random.
pub fn random_model(cfg: &TrunkConfig, fusion: FusionMode, pooled: usize, seed: u64) -> LoadModel {
    let config = LoadConfig {
        pooled,
        hidden: [6, 5],
        fusion,
        dropout: 0.5,
    };
    let mut m = LoadModel::new(cfg.clone(), &trunk_params(cfg, seed), config, 3, &mut rng(seed + 1)).unwrap();
    m.params.insert("fc2.weight", uniform(&[3, 5], -1.0, 1.0, seed ^ 0xfc2));
    m.params.insert("fc2.bias", uniform(&[3], -0.5, 0.5, seed ^ 0xfc3));
    m
}

pub fn small_synth(frames: usize) -> SynthConfig {
    SynthConfig {
        categories: 4,
        instances: 4,
        instances_domain_one: 2,
        frames,
        side: 32,
        ..SynthConfig::default()
    }
}

pub fn other(d: Domain) -> Domain {
    d.other()
}
