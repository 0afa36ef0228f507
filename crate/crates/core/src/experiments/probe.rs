//! Domain-shift probe: a linear classifier on penultimate activations of a
//! source-trained network, scored on held-out source and on target.

use loadnet_tensor::{softmax_rows, Graph, Tensor};

use super::config::{ExperimentConfig, ProbeConfig};
use super::pipeline::{rng, Runner, Stream};
use crate::error::{Error, Result};
use crate::model::{FusionMode, LoadExample, LoadModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeOutcome {
    pub seed: u64,
    /// Held-out source accuracy.
    pub source_acc: f64,
    /// Accuracy on every target image.
    pub target_acc: f64,
}

impl ProbeOutcome {
    /// `S→S − S→T` in percentage points.
    pub fn gap(&self) -> f64 {
        100.0 * (self.source_acc - self.target_acc)
    }
}

/// Multinomial logistic regression on standardised features, trained by
/// full-batch gradient descent.
#[derive(Clone, Debug)]
pub struct LinearProbe {
    mean: Vec<f32>,
    scale: Vec<f32>,
    weight: Tensor,
    bias: Tensor,
    categories: usize,
}

impl LinearProbe {
    pub fn fit(rows: &[Vec<f32>], labels: &[usize], categories: usize, cfg: &ProbeConfig) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || d == 0 || rows.len() != labels.len() {
            return Err(Error::Data("probe needs one label per non-empty feature row".into()));
        }
        let n = rows.len() as f32;
        let mean: Vec<f32> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f32>() / n).collect();
        let scale: Vec<f32> = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f32>() / n;
                if var > 1e-12 {
                    1.0 / var.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let mut probe = Self {
            mean,
            scale,
            weight: Tensor::zeros(&[categories, d])?,
            bias: Tensor::zeros(&[categories])?,
            categories,
        };
        let x = probe.standardise(rows)?;
        for _ in 0..cfg.steps {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let w = g.param(probe.weight.clone());
            let b = g.param(probe.bias.clone());
            let z = g.linear(xv, w, b)?;
            let loss = g.softmax_cross_entropy(z, labels)?;
            let grads = g.backward(loss)?;
            let (gw, gb) = (grads.get(w).expect("param"), grads.get(b).expect("param"));
            for (p, gr) in probe.weight.data_mut().iter_mut().zip(gw.data()) {
                *p -= cfg.lr * (gr + cfg.weight_decay * *p);
            }
            for (p, gr) in probe.bias.data_mut().iter_mut().zip(gb.data()) {
                *p -= cfg.lr * gr;
            }
            g.value(loss).ensure_finite("probe loss")?;
        }
        Ok(probe)
    }

    fn standardise(&self, rows: &[Vec<f32>]) -> Result<Tensor> {
        let d = self.mean.len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::Data(format!("probe row of width {} for {d} features", r.len())));
            }
            data.extend(r.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) * s));
        }
        Ok(Tensor::new(&[rows.len(), d], data)?)
    }

    pub fn predict(&self, rows: &[Vec<f32>]) -> Result<Vec<usize>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.standardise(rows)?;
        let mut g = Graph::new();
        let (xv, w, b) = (g.constant(x), g.constant(self.weight.clone()), g.constant(self.bias.clone()));
        let z = g.linear(xv, w, b)?;
        Ok(softmax_rows(g.value(z).data(), self.categories)
            .chunks(self.categories)
            .map(|s| {
                (0..s.len()).fold(0, |best, i| if s[i] > s[best] { i } else { best })
            })
            .collect())
    }

    pub fn accuracy(&self, rows: &[Vec<f32>], labels: &[usize]) -> Result<f64> {
        let p = self.predict(rows)?;
        Ok(p.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len().max(1) as f64)
    }
}

/// Trains the plain classifier on source-train, then fits the probe on its
/// penultimate activations of the same images.
pub fn probe_shift(runner: &mut Runner, cfg: &ExperimentConfig, seed: u64) -> Result<ProbeOutcome> {
    cfg.validate()?;
    let prep = runner.prepare(cfg, seed)?;
    let data = &prep.dataset;
    let split = &prep.base_split;
    let k = data.categories;
    let mut counts = vec![0usize; k];
    for &i in &split.source_train {
        counts[data.images[i].category] += 1;
    }
    if let Some((c, n)) = counts.iter().enumerate().find(|(_, &n)| n < k) {
        return Err(Error::Data(format!(
            "category {c} has {n} source training images; the probe needs at least {k} per category"
        )));
    }
    let examples = |idx: &[usize]| -> Vec<LoadExample> {
        idx.iter()
            .map(|&i| LoadExample {
                id: &data.images[i].id,
                features: &prep.features[i],
                category: data.images[i].category,
                generic: data.images[i].domain,
            })
            .collect()
    };
    let (train, source_test, target) = (
        examples(&split.source_train),
        examples(&split.source_test),
        examples(&split.target_test),
    );
    let mut load = cfg.load.clone();
    load.fusion = FusionMode::None;
    let mut r = rng(seed, Stream::Probe);
    let mut model = LoadModel::new(cfg.trunk.clone(), &prep.trunk_params, load, k, &mut r)?;
    model.train(&train, None, &cfg.train, &mut r)?;
    let labels = |ex: &[LoadExample]| ex.iter().map(|e| e.category).collect::<Vec<_>>();
    let probe = LinearProbe::fit(&model.penultimate(&train, None)?, &labels(&train), k, &cfg.probe)?;
    Ok(ProbeOutcome {
        seed,
        source_acc: probe.accuracy(&model.penultimate(&source_test, None)?, &labels(&source_test))?,
        target_acc: probe.accuracy(&model.penultimate(&target, None)?, &labels(&target))?,
    })
}
