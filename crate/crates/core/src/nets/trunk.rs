//! Convolutional trunk shared by the discriminator and the classifier.
//!
//! Every convolution is followed by ReLU and, optionally, a max pool.

use loadnet_tensor::{conv_output_extent, Graph, Result as TensorResult, Scalar, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{he_uniform, Bound, FrozenMask, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub pool: Option<PoolSpec>,
}

impl ConvSpec {
    const fn new(out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            out_channels,
            kernel,
            stride,
            pad,
            pool: None,
        }
    }

    const fn pooled(self, window: usize, stride: usize) -> Self {
        Self {
            pool: Some(PoolSpec { window, stride }),
            ..self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrunkConfig {
    pub in_channels: usize,
    pub side: usize,
    pub layers: Vec<ConvSpec>,
}

impl TrunkConfig {
    /// 64-pixel inputs to 32 maps of 13×13.
    pub fn desk() -> Self {
        Self {
            in_channels: 3,
            side: 64,
            layers: vec![
                ConvSpec::new(16, 5, 2, 2).pooled(3, 2),
                ConvSpec::new(24, 3, 1, 0),
                ConvSpec::new(32, 3, 1, 1),
            ],
        }
    }

    /// AlexNet convolutional stack: 227-pixel inputs to 256 maps of 13×13.
    pub fn reference() -> Self {
        Self {
            in_channels: 3,
            side: 227,
            layers: vec![
                ConvSpec::new(96, 11, 4, 0).pooled(3, 2),
                ConvSpec::new(256, 5, 1, 2).pooled(3, 2),
                ConvSpec::new(384, 3, 1, 1),
                ConvSpec::new(384, 3, 1, 1),
                ConvSpec::new(256, 3, 1, 1),
            ],
        }
    }

    /// Spatial side after every layer, or `None` if some layer does not fit.
    fn propagate(&self, side: usize) -> Option<usize> {
        let mut s = side;
        for l in &self.layers {
            s = conv_output_extent(s, l.kernel, l.stride, l.pad)?;
            if let Some(p) = l.pool {
                if p.window > s {
                    return None;
                }
                s = (s - p.window) / p.stride + 1;
            }
        }
        Some(s)
    }

    pub fn min_side(&self) -> Option<usize> {
        (1..=4096).find(|&s| self.propagate(s).is_some())
    }

    /// Number of output maps `N`.
    pub fn maps(&self) -> usize {
        self.layers.last().map_or(self.in_channels, |l| l.out_channels)
    }

    /// Output side `u = v`.
    pub fn out_side(&self) -> Result<usize> {
        self.validate()?;
        Ok(self.propagate(self.side).expect("validated"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.in_channels == 0 {
            return Err(Error::Config("trunk needs input channels and at least one layer".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.out_channels == 0 || l.kernel == 0 || l.stride == 0 {
                return Err(Error::Config(format!("trunk layer {i} has a zero extent")));
            }
            if l.pool.is_some_and(|p| p.window == 0 || p.stride == 0) {
                return Err(Error::Config(format!("trunk layer {i} has a zero pool extent")));
            }
        }
        if self.propagate(self.side).is_none() {
            let min = self
                .min_side()
                .map_or_else(|| "none below 4096".to_string(), |m| m.to_string());
            return Err(Error::Config(format!(
                "input side {} is too small for the trunk; minimum side is {min}",
                self.side
            )));
        }
        Ok(())
    }

    /// Parameter names and dims, in layer order.
    pub fn param_dims(&self) -> Vec<(String, Vec<usize>)> {
        let mut cin = self.in_channels;
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((weight(i), vec![l.out_channels, cin, l.kernel, l.kernel]));
            out.push((bias(i), vec![l.out_channels]));
            cin = l.out_channels;
        }
        out
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamStore, rng: &mut R) -> Result<()> {
        self.validate()?;
        for (name, dims) in self.param_dims() {
            let t = if dims.len() == 4 {
                let fan_in = dims[1] * dims[2] * dims[3];
                he_uniform(&dims, fan_in, rng)
            } else {
                Tensor::zeros(&dims)?
            };
            params.insert(name, t);
        }
        Ok(())
    }

    /// `[B, C, side, side] -> [B, N, u, u]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> TensorResult<Var> {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = g.conv2d(h, bound.var(&weight(i)), bound.var(&bias(i)), l.stride, l.pad)?;
            h = g.relu(h)?;
            if let Some(p) = l.pool {
                h = g.max_pool2d(h, p.window, p.stride)?;
            }
        }
        Ok(h)
    }
}

impl TrunkConfig {
    /// Trunk outputs `[N, u, u]` for each `[C, side, side]` image, evaluated
    /// in chunks of `batch`.
    pub fn features(&self, params: &ParamStore, images: &[&Tensor], batch: usize) -> Result<Vec<Tensor>> {
        let mask = FrozenMask::from_names(params.names());
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(batch.max(1)) {
            let mut g = Graph::new();
            let bound = params.bind(&mut g, &mask);
            let x = g.constant(Tensor::stack(chunk)?);
            let y = self.forward(&mut g, &bound, x)?;
            let y = g.value(y);
            for i in 0..chunk.len() {
                out.push(y.index_first(i)?);
            }
        }
        Ok(out)
    }
}

pub const PREFIX: &str = "trunk.";

fn weight(i: usize) -> String {
    format!("trunk.conv{i}.weight")
}

fn bias(i: usize) -> String {
    format!("trunk.conv{i}.bias")
}
