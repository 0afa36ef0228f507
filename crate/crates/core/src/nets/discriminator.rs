//! Domain discriminator: trunk, global average pool, one logit.
//!
//! A positive logit favours domain one. Training sees domain labels only;
//! the example type has no field that could carry an object category.

use std::collections::BTreeMap;

use loadnet_tensor::{Graph, Result as TensorResult, Scalar, Tensor, Var};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{names_with_prefix, trunk, Bound, FrozenMask, ParamStore, Sgd, SgdConfig, TrunkConfig};
use crate::data::Domain;
use crate::error::{Error, Result};

pub const WEIGHT: &str = "disc.weight";
pub const BIAS: &str = "disc.bias";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    /// Update the trunk as well as the head.
    pub train_trunk: bool,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            sgd: SgdConfig::default(),
            train_trunk: false,
        }
    }
}

/// One discriminator training example: an input and its domain, nothing else.
///
/// `input` is an image `[C, side, side]` when the trunk is trained, and may be
/// the precomputed trunk output `[N, u, u]` when it is frozen.
#[derive(Clone, Copy, Debug)]
pub struct DomainExample<'a> {
    pub input: &'a Tensor,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T: Scalar = f32> {
    pub trunk: TrunkConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Discriminator<T> {
    /// `[B, N, u, v]` trunk output to `[B, 1]` logits.
    pub fn head(g: &mut Graph<T>, bound: &Bound, features: Var) -> TensorResult<Var> {
        let pooled = g.global_avg_pool(features)?;
        g.linear(pooled, bound.var(WEIGHT), bound.var(BIAS))
    }

    pub fn cast<U: Scalar>(&self) -> Discriminator<U> {
        Discriminator {
            trunk: self.trunk.clone(),
            params: self.params.cast(),
        }
    }
}

impl Discriminator {
    /// Head initialised at zero so the untrained model is uninformative.
    pub fn new(trunk: TrunkConfig, trunk_params: &ParamStore) -> Result<Self> {
        let n = trunk.maps();
        let mut params = ParamStore::new();
        params.extend_prefixed(trunk_params, trunk::PREFIX);
        params.expect_dims(&trunk.param_dims())?;
        params.insert(WEIGHT, Tensor::zeros(&[1, n])?);
        params.insert(BIAS, Tensor::zeros(&[1])?);
        Ok(Self { trunk, params })
    }

    pub fn from_params(trunk: TrunkConfig, params: ParamStore) -> Result<Self> {
        let mut expected = trunk.param_dims();
        expected.push((WEIGHT.into(), vec![1, trunk.maps()]));
        expected.push((BIAS.into(), vec![1]));
        params.expect_dims(&expected)?;
        Ok(Self { trunk, params })
    }

    pub fn frozen_mask(&self, train_trunk: bool) -> FrozenMask {
        if train_trunk {
            FrozenMask::default()
        } else {
            FrozenMask::from_names(names_with_prefix(&self.params, trunk::PREFIX))
        }
    }

    /// Logits for a batch of trunk outputs `[N, u, u]`.
    pub fn logits_from_features(&self, features: &[&Tensor]) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, &FrozenMask::from_names(self.params.names()));
        let x = g.constant(Tensor::stack(features)?);
        let z = Self::head(&mut g, &bound, x)?;
        Ok(g.value(z).data().to_vec())
    }

    pub fn logits_from_images(&self, images: &[&Tensor]) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, &FrozenMask::from_names(self.params.names()));
        let x = g.constant(Tensor::stack(images)?);
        let f = self.trunk.forward(&mut g, &bound, x)?;
        let z = Self::head(&mut g, &bound, f)?;
        Ok(g.value(z).data().to_vec())
    }

    /// Minibatch training with balanced domains.
    ///
    /// Each epoch keeps every example of the larger domain and draws the
    /// smaller domain with replacement up to the same count. `audit` receives
    /// the example indices of every batch before it is used.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        examples: &[DomainExample],
        cfg: &DiscConfig,
        rng: &mut R,
        mut audit: impl FnMut(&[usize]),
    ) -> Result<Vec<f32>> {
        let by_domain: [Vec<usize>; 2] = [Domain::One, Domain::Two]
            .map(|d| (0..examples.len()).filter(|&i| examples[i].domain == d).collect());
        if by_domain.iter().any(Vec::is_empty) {
            return Err(Error::Data("discriminator training needs examples of both domains".into()));
        }
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let expected = if cfg.train_trunk {
            [self.trunk.in_channels, self.trunk.side, self.trunk.side]
        } else {
            let u = self.trunk.out_side()?;
            [self.trunk.maps(), u, u]
        };
        if let Some(bad) = examples.iter().find(|e| e.input.dims() != expected) {
            return Err(Error::Data(format!(
                "discriminator input has dims {:?}, expected {expected:?}",
                bad.input.dims()
            )));
        }
        let mask = self.frozen_mask(cfg.train_trunk);
        let mut opt = Sgd::new(cfg.sgd);
        let mut curve = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            let order = balanced_epoch(&by_domain, rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                audit(batch);
                let inputs: Vec<&Tensor> = batch.iter().map(|&i| examples[i].input).collect();
                let targets: Vec<f32> = batch.iter().map(|&i| target(examples[i].domain)).collect();
                let mut g = Graph::new();
                let bound = self.params.bind(&mut g, &mask);
                let x = g.constant(Tensor::stack(&inputs)?);
                let f = if cfg.train_trunk {
                    self.trunk.forward(&mut g, &bound, x)?
                } else {
                    x
                };
                let z = Self::head(&mut g, &bound, f)?;
                let loss = g.sigmoid_bce(z, &targets)?;
                total += g.value(loss).item()? * batch.len() as f32;
                let mut grads = g.backward(loss)?;
                let grads: BTreeMap<_, _> = bound.gradients(&mut grads);
                opt.step(&mut self.params, &grads, &mask)?;
            }
            curve.push(total / order.len() as f32);
        }
        Ok(curve)
    }

    pub fn accuracy_from_features(&self, examples: &[DomainExample]) -> Result<f64> {
        let mut correct = 0;
        for chunk in examples.chunks(256) {
            let inputs: Vec<&Tensor> = chunk.iter().map(|e| e.input).collect();
            let z = self.logits_from_features(&inputs)?;
            correct += z
                .iter()
                .zip(chunk)
                .filter(|(z, e)| (**z > 0.0) == (e.domain == Domain::One))
                .count();
        }
        Ok(correct as f64 / examples.len().max(1) as f64)
    }
}

/// BCE target: 1 for domain one.
pub fn target(d: Domain) -> f32 {
    match d {
        Domain::One => 1.0,
        Domain::Two => 0.0,
    }
}

fn balanced_epoch<R: Rng + ?Sized>(by_domain: &[Vec<usize>; 2], rng: &mut R) -> Vec<usize> {
    let (big, small) = if by_domain[0].len() >= by_domain[1].len() {
        (&by_domain[0], &by_domain[1])
    } else {
        (&by_domain[1], &by_domain[0])
    };
    let mut order = big.clone();
    order.extend((0..big.len()).map(|_| small[rng.gen_range(0..small.len())]));
    order.shuffle(rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_trunk() -> (TrunkConfig, ParamStore) {
        let cfg = TrunkConfig {
            in_channels: 3,
            side: 8,
            layers: vec![super::super::ConvSpec {
                out_channels: 4,
                kernel: 3,
                stride: 1,
                pad: 1,
                pool: None,
            }],
        };
        let mut p = ParamStore::new();
        cfg.init(&mut p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (cfg, p)
    }

    #[test]
    fn untrained_head_is_uninformative() {
        let (cfg, p) = tiny_trunk();
        let d = Discriminator::new(cfg, &p).unwrap();
        let img = Tensor::full(&[3, 8, 8], 0.3).unwrap();
        let z = d.logits_from_images(&[&img, &img]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn balanced_epoch_equalises_domains() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let by = [vec![0, 1, 2, 3, 4, 5], vec![6, 7]];
        let order = balanced_epoch(&by, &mut rng);
        assert_eq!(order.len(), 12);
        assert_eq!(order.iter().filter(|&&i| i >= 6).count(), 6);
        for i in 0..6 {
            assert!(order.contains(&i));
        }
    }

    #[test]
    fn separates_black_from_white() {
        let (cfg, p) = tiny_trunk();
        let mut d = Discriminator::new(cfg, &p).unwrap();
        let black = Tensor::zeros(&[3, 8, 8]).unwrap();
        let white = Tensor::ones(&[3, 8, 8]).unwrap();
        let examples: Vec<_> = (0..16)
            .map(|i| DomainExample {
                input: if i % 2 == 0 { &black } else { &white },
                domain: if i % 2 == 0 { Domain::One } else { Domain::Two },
            })
            .collect();
        let dc = DiscConfig {
            epochs: 60,
            batch_size: 8,
            sgd: SgdConfig { lr: 0.05, ..SgdConfig::default() },
            train_trunk: true,
        };
        d.train(&examples, &dc, &mut ChaCha8Rng::seed_from_u64(2), |_| {}).unwrap();
        let z = d.logits_from_images(&[&black, &white]).unwrap();
        assert!(z[0] > 0.0 && z[1] < 0.0, "{z:?}");
    }
}
