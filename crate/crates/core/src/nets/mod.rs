//! Parameter storage, the convolutional trunk, the domain discriminator and
//! the optimizer.

pub mod discriminator;
pub mod optim;
pub mod pretrain;
pub mod trunk;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use loadnet_tensor::{Gradients, Graph, Scalar, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};
use crate::formats::checkpoint;

pub use discriminator::Discriminator;
pub use optim::{FrozenMask, Sgd, SgdConfig};
pub use trunk::{ConvSpec, PoolSpec, TrunkConfig};

/// Named parameter tensors, ordered by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    params: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("parameter `{name}` is missing")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Copies every parameter whose name starts with `prefix` from `other`.
    pub fn extend_prefixed(&mut self, other: &Self, prefix: &str) {
        for (k, v) in &other.params {
            if k.starts_with(prefix) {
                self.params.insert(k.clone(), v.clone());
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Records every parameter on `g`. Frozen parameters become constants so
    /// backward never spends work on them.
    pub fn bind(&self, g: &mut Graph<T>, frozen: &FrozenMask) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(name, value)| {
                let v = if frozen.contains(name) {
                    g.constant(value.clone())
                } else {
                    g.param(value.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }
}

impl ParamStore<f32> {
    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, self.iter())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self {
            params: checkpoint::load(path)?.into_iter().collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::encode(self.iter())
    }
}

impl<T: Scalar> ParamStore<T> {
    /// Fails unless every name in `names` is present with the given dims.
    pub fn expect_dims(&self, expected: &[(String, Vec<usize>)]) -> Result<()> {
        for (name, dims) in expected {
            let t = self.get(name)?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has dims {:?}, expected {dims:?}",
                    t.dims()
                )));
            }
        }
        Ok(())
    }
}

/// Graph variables for a bound [`ParamStore`].
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` was not bound"))
    }

    /// Points `name` at another variable, e.g. one a gradient check perturbs.
    pub fn set(&mut self, name: &str, var: Var) {
        self.vars.insert(name.to_string(), var);
    }

    /// Gradients of every trainable bound parameter, keyed by name.
    pub fn gradients<T: Scalar>(&self, grads: &mut Gradients<T>) -> BTreeMap<String, Tensor<T>> {
        self.vars
            .iter()
            .filter_map(|(name, v)| grads.take(*v).map(|g| (name.clone(), g)))
            .collect()
    }
}

/// Uniform weights in `±sqrt(6 / fan_in)`.
pub fn he_uniform<R: Rng + ?Sized>(dims: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt() as f32;
    Tensor::from_fn(dims, |_| rng.gen_range(-bound..=bound)).expect("positive extents")
}

/// Adds a `[out, in]` linear layer under `name.weight` / `name.bias`.
pub fn init_linear<R: Rng + ?Sized>(params: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) {
    params.insert(format!("{name}.weight"), he_uniform(&[output, input], input, rng));
    params.insert(format!("{name}.bias"), Tensor::zeros(&[output]).expect("positive extent"));
}

/// Names of all parameters in `params` starting with `prefix`.
pub fn names_with_prefix<T: Scalar>(params: &ParamStore<T>, prefix: &str) -> BTreeSet<String> {
    params.names().filter(|n| n.starts_with(prefix)).map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn he_uniform_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = he_uniform(&[64, 24], 24, &mut rng);
        let bound = (6.0f32 / 24.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        assert!(t.max_abs() > 0.9 * bound);
    }

    #[test]
    fn frozen_parameters_bind_as_constants() {
        let mut p = ParamStore::<f32>::new();
        p.insert("a", Tensor::ones(&[2]).unwrap());
        p.insert("b", Tensor::ones(&[2]).unwrap());
        let mask = FrozenMask::from_names(["a"]);
        let mut g = Graph::new();
        let bound = p.bind(&mut g, &mask);
        assert!(!g.requires_grad(bound.var("a")));
        assert!(g.requires_grad(bound.var("b")));
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = ParamStore::new();
        init_linear(&mut p, "fc", 7, 3, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        p.save(&path).unwrap();
        assert_eq!(ParamStore::load(&path).unwrap(), p);
    }
}
