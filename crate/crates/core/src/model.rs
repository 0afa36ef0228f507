//! The LoAd classifier: frozen trunk output `C` is duplicated, one copy is
//! fused with per-map domainness activations `W`, both copies are max-pooled
//! to `p × p`, concatenated and classified by three fully connected layers.

use std::collections::BTreeMap;

use loadnet_tensor::{softmax_rows, Graph, Result as TensorResult, Scalar, Tensor, Var};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::domainness::DomainnessCache;
use crate::error::{Error, Result};
use crate::nets::{init_linear, names_with_prefix, trunk, Bound, FrozenMask, ParamStore, Sgd, SgdConfig, TrunkConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// `M = C ⊙ W`
    Mul,
    /// `M = C ⊙ (W + 1)`
    MulPlusOne,
    /// No fused branch: a plain classifier on pooled `C`.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    /// Pooled side `p`.
    pub pooled: usize,
    /// Widths of the two hidden fully connected layers.
    pub hidden: [usize; 2],
    pub fusion: FusionMode,
    pub dropout: f64,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            pooled: 3,
            hidden: [256, 256],
            fusion: FusionMode::Mul,
            dropout: 0.6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            sgd: SgdConfig::default(),
        }
    }
}

const FC: [&str; 3] = ["fc0", "fc1", "fc2"];

#[derive(Clone, Debug, PartialEq)]
pub struct LoadModel<T: Scalar = f32> {
    pub trunk: TrunkConfig,
    pub config: LoadConfig,
    pub categories: usize,
    pub params: ParamStore<T>,
}

/// One training or evaluation input: trunk output, its label, and the domain
/// whose bundle supplies `W` (the image's generic domain).
#[derive(Clone, Copy, Debug)]
pub struct LoadExample<'a> {
    pub id: &'a str,
    pub features: &'a Tensor,
    pub category: usize,
    pub generic: Domain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f32>,
}

impl<T: Scalar> LoadModel<T> {
    pub fn branches(&self) -> usize {
        if self.config.fusion == FusionMode::None {
            1
        } else {
            2
        }
    }

    /// Input width of the first fully connected layer.
    pub fn fc_input_width(&self) -> usize {
        self.branches() * self.trunk.maps() * self.config.pooled * self.config.pooled
    }

    pub fn cast<U: Scalar>(&self) -> LoadModel<U> {
        LoadModel {
            trunk: self.trunk.clone(),
            config: self.config.clone(),
            categories: self.categories,
            params: self.params.cast(),
        }
    }

    /// Last hidden layer `[B, hidden[1]]` from trunk output `c`
    /// (`[B, N, u, v]`) and, for fused modes, the fusion tensor `w` of the
    /// same dims, already shifted by one in `mul-plus-one` mode. `w` should be
    /// a graph constant.
    pub fn hidden<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        c: Var,
        w: Option<Var>,
        training: bool,
        rng: &mut R,
    ) -> TensorResult<Var> {
        let p = self.config.pooled;
        let pooled_c = g.adaptive_max_pool2d(c, p, p)?;
        let features = match (self.config.fusion, w) {
            (FusionMode::None, _) => pooled_c,
            (_, Some(w)) => {
                let m = g.mul(c, w)?;
                let pooled_m = g.adaptive_max_pool2d(m, p, p)?;
                g.concat_channels(pooled_c, pooled_m)?
            }
            (_, None) => {
                return Err(loadnet_tensor::TensorError::InvalidArgument {
                    op: "load_head",
                    detail: "fused modes need domainness activations".into(),
                })
            }
        };
        let mut h = g.flatten(features)?;
        for name in &FC[..2] {
            h = g.linear(h, bound.var(&format!("{name}.weight")), bound.var(&format!("{name}.bias")))?;
            h = g.relu(h)?;
            h = g.dropout(h, self.config.dropout, training, rng)?;
        }
        Ok(h)
    }

    /// Logits `[B, K]`; arguments as for [`hidden`](Self::hidden).
    pub fn head<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        c: Var,
        w: Option<Var>,
        training: bool,
        rng: &mut R,
    ) -> TensorResult<Var> {
        let h = self.hidden(g, bound, c, w, training, rng)?;
        g.linear(h, bound.var("fc2.weight"), bound.var("fc2.bias"))
    }

    /// Full forward from images `[B, 3, side, side]`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        images: Var,
        w: Option<Var>,
        training: bool,
        rng: &mut R,
    ) -> TensorResult<Var> {
        let c = self.trunk.forward(g, bound, images)?;
        self.head(g, bound, c, w, training, rng)
    }

    pub fn trunk_mask(&self) -> FrozenMask {
        FrozenMask::from_names(names_with_prefix(&self.params, trunk::PREFIX))
    }
}

impl LoadModel {
    /// Copies the frozen trunk and initialises the head; the output layer
    /// starts at zero so initial scores are uniform.
    pub fn new<R: Rng + ?Sized>(
        trunk_cfg: TrunkConfig,
        trunk_params: &ParamStore,
        config: LoadConfig,
        categories: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if categories < 2 {
            return Err(Error::Config(format!("need at least two categories, found {categories}")));
        }
        let u = trunk_cfg.out_side()?;
        if config.pooled == 0 || config.pooled > u {
            return Err(Error::Config(format!(
                "pooled side {} must lie in 1..={u} (trunk output side)",
                config.pooled
            )));
        }
        if config.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        let mut params = ParamStore::new();
        params.extend_prefixed(trunk_params, trunk::PREFIX);
        params.expect_dims(&trunk_cfg.param_dims())?;
        let mut model = Self {
            trunk: trunk_cfg,
            config,
            categories,
            params,
        };
        let [h0, h1] = model.config.hidden;
        let input = model.fc_input_width();
        init_linear(&mut model.params, FC[0], input, h0, rng);
        init_linear(&mut model.params, FC[1], h0, h1, rng);
        model.params.insert(format!("{}.weight", FC[2]), Tensor::zeros(&[categories, h1])?);
        model.params.insert(format!("{}.bias", FC[2]), Tensor::zeros(&[categories])?);
        Ok(model)
    }

    /// Fusion input for one example, or `None` when the mode needs none.
    fn fusion_input(&self, ex: &LoadExample, bundles: Option<&DomainnessCache>) -> Option<Tensor> {
        let w = &bundles?.get(ex.id, ex.generic)?.activations;
        Some(match self.config.fusion {
            FusionMode::None => return None,
            FusionMode::Mul => w.clone(),
            FusionMode::MulPlusOne => w.map(|v| v + 1.0),
        })
    }

    fn check_bundles(&self, examples: &[LoadExample], bundles: Option<&DomainnessCache>) -> Result<()> {
        if self.config.fusion == FusionMode::None {
            return Ok(());
        }
        let missing: Vec<String> = examples
            .iter()
            .filter(|e| bundles.and_then(|b| b.get(e.id, e.generic)).is_none())
            .map(|e| e.id.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingBundles(missing))
        }
    }

    fn batch_inputs(
        &self,
        g: &mut Graph,
        batch: &[&LoadExample],
        bundles: Option<&DomainnessCache>,
    ) -> Result<(Var, Option<Var>)> {
        let feats: Vec<&Tensor> = batch.iter().map(|e| e.features).collect();
        let c = g.constant(Tensor::stack(&feats)?);
        let w = if self.config.fusion == FusionMode::None {
            None
        } else {
            let ws: Vec<Tensor> = batch
                .iter()
                .map(|e| self.fusion_input(e, bundles).expect("bundles checked"))
                .collect();
            let refs: Vec<&Tensor> = ws.iter().collect();
            Some(g.constant(Tensor::stack(&refs)?))
        };
        Ok((c, w))
    }

    /// Softmax training on labelled source examples with the trunk frozen.
    /// Returns the mean training loss of every epoch.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        examples: &[LoadExample],
        bundles: Option<&DomainnessCache>,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<Vec<f32>> {
        self.check_bundles(examples, bundles)?;
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if let Some(bad) = examples.iter().find(|e| e.category >= self.categories) {
            return Err(Error::Data(format!("category {} of `{}` out of range", bad.category, bad.id)));
        }
        let mask = self.trunk_mask();
        let mut opt = Sgd::new(cfg.sgd);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut curve = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&LoadExample> = chunk.iter().map(|&i| &examples[i]).collect();
                let labels: Vec<usize> = batch.iter().map(|e| e.category).collect();
                let mut g = Graph::new();
                let bound = self.params.bind(&mut g, &mask);
                let (c, w) = self.batch_inputs(&mut g, &batch, bundles)?;
                let z = self.head(&mut g, &bound, c, w, true, rng)?;
                let loss = g.softmax_cross_entropy(z, &labels)?;
                total += g.value(loss).item()? * batch.len() as f32;
                let mut grads = g.backward(loss)?;
                let grads: BTreeMap<_, _> = bound.gradients(&mut grads);
                opt.step(&mut self.params, &grads, &mask)?;
            }
            curve.push(total / examples.len().max(1) as f32);
        }
        Ok(curve)
    }

    /// Mean evaluation-mode loss over `examples` (no dropout).
    pub fn loss(&self, examples: &[LoadExample], bundles: Option<&DomainnessCache>) -> Result<f32> {
        self.check_bundles(examples, bundles)?;
        let batch: Vec<&LoadExample> = examples.iter().collect();
        let labels: Vec<usize> = batch.iter().map(|e| e.category).collect();
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, &FrozenMask::from_names(self.params.names()));
        let (c, w) = self.batch_inputs(&mut g, &batch, bundles)?;
        let z = self.head(&mut g, &bound, c, w, false, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        let loss = g.softmax_cross_entropy(z, &labels)?;
        Ok(g.value(loss).item()?)
    }

    /// Argmax of softmax scores; ties go to the lowest category index.
    pub fn predict(&self, examples: &[LoadExample], bundles: Option<&DomainnessCache>) -> Result<Vec<Prediction>> {
        self.check_bundles(examples, bundles)?;
        let frozen = FrozenMask::from_names(self.params.names());
        let mut out = Vec::with_capacity(examples.len());
        let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
        for chunk in examples.chunks(256) {
            let batch: Vec<&LoadExample> = chunk.iter().collect();
            let mut g = Graph::new();
            let bound = self.params.bind(&mut g, &frozen);
            let (c, w) = self.batch_inputs(&mut g, &batch, bundles)?;
            let z = self.head(&mut g, &bound, c, w, false, &mut no_rng)?;
            let probs = softmax_rows(g.value(z).data(), self.categories);
            for scores in probs.chunks(self.categories) {
                let label = argmax(scores);
                out.push(Prediction {
                    label,
                    scores: scores.to_vec(),
                });
            }
        }
        Ok(out)
    }

    /// Fraction of examples whose prediction equals their category.
    pub fn accuracy(&self, examples: &[LoadExample], bundles: Option<&DomainnessCache>) -> Result<f64> {
        let preds = self.predict(examples, bundles)?;
        let correct = preds.iter().zip(examples).filter(|(p, e)| p.label == e.category).count();
        Ok(correct as f64 / examples.len().max(1) as f64)
    }

    /// Activations of the last hidden layer (evaluation mode), one row per
    /// example.
    pub fn penultimate(&self, examples: &[LoadExample], bundles: Option<&DomainnessCache>) -> Result<Vec<Vec<f32>>> {
        self.check_bundles(examples, bundles)?;
        let frozen = FrozenMask::from_names(self.params.names());
        let mut out = Vec::with_capacity(examples.len());
        let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
        for chunk in examples.chunks(256) {
            let batch: Vec<&LoadExample> = chunk.iter().collect();
            let mut g = Graph::new();
            let bound = self.params.bind(&mut g, &frozen);
            let (c, w) = self.batch_inputs(&mut g, &batch, bundles)?;
            let h = self.hidden(&mut g, &bound, c, w, false, &mut no_rng)?;
            let width = g.dims(h)[1];
            out.extend(g.value(h).data().chunks(width).map(<[f32]>::to_vec));
        }
        Ok(out)
    }
}

fn argmax(scores: &[f32]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.25, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.2, 0.2]), 0);
    }
}
