//! One adaptation run: per repeat, data, trunk pretraining, discriminator,
//! domainness bundles, classifier training and evaluation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;

use loadnet_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig, ModelPreset};
use super::metrics::{MetricsRecord, RepeatOutcome};
use crate::data::imagedir::load_image_dir;
use crate::data::synth::synth_dataset;
use crate::data::{make_splits, Dataset, DatasetSplit, Domain, Protocol};
use crate::domainness::{self, DomainnessCache};
use crate::error::{Error, Result, StageExt};
use crate::model::{FusionMode, LoadExample, LoadModel};
use crate::nets::discriminator::DomainExample;
use crate::nets::pretrain::pretrain_trunk;
use crate::nets::{Discriminator, ParamStore};

/// Independent random streams of one repeat.
#[derive(Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Pretrain = 2,
    Discriminator = 3,
    Classifier = 4,
    Probe = 5,
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

/// Everything a repeat needs that does not depend on protocol or model:
/// the data, the source partition, the frozen trunk and its outputs.
pub struct Prepared {
    pub dataset: Dataset,
    pub base_split: DatasetSplit,
    pub trunk_params: ParamStore,
    /// Trunk output `[N, u, u]` of every image, indexed like `dataset.images`.
    pub features: Vec<Tensor>,
    pub pretrain_curve: Vec<f32>,
}

/// Image indices of every discriminator batch, in training order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditLog {
    pub batches: Vec<Vec<usize>>,
}

impl AuditLog {
    /// One line per batch: the image ids, space separated.
    pub fn render(&self, data: &Dataset) -> String {
        let mut out = String::new();
        for b in &self.batches {
            let ids: Vec<&str> = b.iter().map(|&i| data.images[i].id.as_str()).collect();
            out.push_str(&ids.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Artifacts of one completed repeat, kept in memory for inspection.
pub struct RepeatArtifacts {
    pub outcome: RepeatOutcome,
    pub split: DatasetSplit,
    pub discriminator: Option<Discriminator>,
    pub bundles: Option<DomainnessCache>,
    pub model: LoadModel,
    pub audit: AuditLog,
}

pub struct RunReport {
    pub record: MetricsRecord,
    /// Repeats that failed, with stage-tagged errors.
    pub failures: Vec<Error>,
}

#[derive(Default)]
pub struct Runner {
    prepared: HashMap<String, Rc<Prepared>>,
    /// When set, repeats write to `<root>/<config hash>/<repeat>/`.
    pub run_root: Option<PathBuf>,
    pub verbose: bool,
}

fn key_of(parts: &[String]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Runner {
    pub fn new() -> Self {
        Self::default()
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// The images of repeat seed `seed`: synthetic data is regenerated per
    /// seed, a directory is read as is.
    pub fn dataset(&self, cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
        match &cfg.data {
            DataSource::Synth(s) => {
                let mut s = s.clone();
                s.seed = s.seed.wrapping_add(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                synth_dataset(&s)
            }
            DataSource::Dir { root, side } => load_image_dir(root, *side),
        }
    }

    /// Data, source partition and pretrained trunk for `seed`, memoised.
    pub fn prepare(&mut self, cfg: &ExperimentConfig, seed: u64) -> Result<Rc<Prepared>> {
        let key = key_of(&[
            toml::to_string(&cfg.data).expect("serialisable"),
            toml::to_string(&cfg.trunk).expect("serialisable"),
            toml::to_string(&cfg.pretrain).expect("serialisable"),
            cfg.train_fraction.to_string(),
            cfg.direction.as_str().into(),
            seed.to_string(),
        ]);
        if let Some(p) = self.prepared.get(&key) {
            return Ok(p.clone());
        }
        let dataset = self.dataset(cfg, seed)?;
        let base_split = make_splits(
            &dataset,
            cfg.direction,
            Protocol::WholeTarget,
            None,
            cfg.train_fraction,
            &mut rng(seed, Stream::Split),
        )?;
        let train_images = dataset.tensors(&base_split.source_train);
        let refs: Vec<&Tensor> = train_images.iter().collect();
        let labels: Vec<usize> = base_split.source_train.iter().map(|&i| dataset.images[i].category).collect();
        let started = Instant::now();
        let (trunk_params, pretrain_curve) = pretrain_trunk(
            &cfg.trunk,
            &refs,
            &labels,
            dataset.categories,
            &cfg.pretrain,
            &mut rng(seed, Stream::Pretrain),
        )?;
        self.log(format!(
            "seed {seed}: trunk pretrained in {:.1}s, loss {:?}",
            started.elapsed().as_secs_f64(),
            pretrain_curve
        ));
        let mut features = Vec::with_capacity(dataset.images.len());
        for chunk in dataset.images.chunks(64) {
            let ts: Vec<Tensor> = chunk.iter().map(|im| im.tensor()).collect();
            let refs: Vec<&Tensor> = ts.iter().collect();
            features.extend(cfg.trunk.features(&trunk_params, &refs, 64)?);
        }
        let p = Rc::new(Prepared {
            dataset,
            base_split,
            trunk_params,
            features,
            pretrain_curve,
        });
        self.prepared.insert(key, p.clone());
        Ok(p)
    }

    fn repeat_dir(&self, cfg: &ExperimentConfig, repeat: usize) -> Option<PathBuf> {
        self.run_root
            .as_ref()
            .map(|r| r.join(cfg.hash()).join(repeat.to_string()))
    }

    /// Trains and evaluates one repeat.
    pub fn run_repeat(&mut self, cfg: &ExperimentConfig, repeat: usize, seed: u64) -> Result<RepeatArtifacts> {
        let started = Instant::now();
        let prep = self.prepare(cfg, seed).stage("prepare", repeat)?;
        let data = &prep.dataset;
        let split = make_splits(
            data,
            cfg.direction,
            cfg.protocol,
            cfg.sub_categories(),
            cfg.train_fraction,
            &mut rng(seed, Stream::Split),
        )
        .stage("split", repeat)?;
        let dir = self.repeat_dir(cfg, repeat);
        let (source, target) = (cfg.direction.source(), cfg.direction.target());

        let fusion = cfg.fusion();
        let mut audit = AuditLog::default();
        let (disc, bundles, generic_of_target) = if fusion == FusionMode::None {
            (None, None, vec![source; split.target_test.len()])
        } else {
            let disc = self
                .train_discriminator(cfg, &prep, &split, seed, &mut audit)
                .stage("train-domain", repeat)?;
            let generic_of_target: Vec<Domain> = if cfg.predicted_generic {
                let feats: Vec<&Tensor> = split.target_test.iter().map(|&i| &prep.features[i]).collect();
                let mut out = Vec::with_capacity(feats.len());
                for chunk in feats.chunks(256) {
                    let z = disc.logits_from_features(chunk).stage("maps", repeat)?;
                    out.extend(z.iter().map(|z| if *z > 0.0 { Domain::Two } else { Domain::One }));
                }
                out
            } else {
                vec![source; split.target_test.len()]
            };
            let mut cache = match &dir {
                Some(d) => DomainnessCache::on_disk(&disc, &d.join("bundles")),
                None => DomainnessCache::new(&disc),
            };
            let wanted = split
                .source_train
                .iter()
                .chain(&split.source_test)
                .map(|&i| (i, target))
                .chain(split.target_test.iter().copied().zip(generic_of_target.iter().copied()));
            for (i, generic) in wanted {
                let id = &data.images[i].id;
                cache
                    .get_or_compute(id, generic, || {
                        domainness::bundle(&disc, &prep.features[i], generic, cfg.score)
                    })
                    .stage("maps", repeat)?;
            }
            (Some(disc), Some(cache), generic_of_target)
        };

        let examples = |idx: &[usize], generic: &dyn Fn(usize) -> Domain| -> Vec<LoadExample> {
            idx.iter()
                .enumerate()
                .map(|(k, &i)| LoadExample {
                    id: &data.images[i].id,
                    features: &prep.features[i],
                    category: data.images[i].category,
                    generic: generic(k),
                })
                .collect()
        };
        let train_ex = examples(&split.source_train, &|_| target);
        let source_test_ex = examples(&split.source_test, &|_| target);
        let target_ex = examples(&split.target_test, &|k| generic_of_target[k]);

        let mut crng = rng(seed, Stream::Classifier);
        let mut load_cfg = cfg.load.clone();
        load_cfg.fusion = fusion;
        let mut model = LoadModel::new(cfg.trunk.clone(), &prep.trunk_params, load_cfg, data.categories, &mut crng)
            .stage("train-load", repeat)?;
        let curve = model
            .train(&train_ex, bundles.as_ref(), &cfg.train, &mut crng)
            .stage("train-load", repeat)?;
        self.log(format!("repeat {repeat}: classifier loss {:?}", curve));
        let source_test_acc = model.accuracy(&source_test_ex, bundles.as_ref()).stage("evaluate", repeat)?;
        let target_acc = model.accuracy(&target_ex, bundles.as_ref()).stage("evaluate", repeat)?;

        let disc_accuracy = match &disc {
            Some(d) => {
                let ex: Vec<DomainExample> = split
                    .source_test
                    .iter()
                    .chain(&split.target_test)
                    .map(|&i| DomainExample {
                        input: &prep.features[i],
                        domain: data.images[i].domain,
                    })
                    .collect();
                Some(d.accuracy_from_features(&ex).stage("evaluate", repeat)?)
            }
            None => None,
        };
        let outcome = RepeatOutcome {
            repeat,
            seed,
            source_test_acc,
            target_acc,
            seconds: started.elapsed().as_secs_f64(),
            disc_accuracy,
        };
        if let Some(dir) = &dir {
            self.write_repeat(cfg, dir, &outcome, disc.as_ref(), &model, &audit, data)
                .stage("write", repeat)?;
        }
        Ok(RepeatArtifacts {
            outcome,
            split,
            discriminator: disc,
            bundles,
            model,
            audit,
        })
    }

    /// Trains on every source image plus the target adaptation pool, using
    /// domain labels only.
    pub fn train_discriminator(
        &self,
        cfg: &ExperimentConfig,
        prep: &Prepared,
        split: &DatasetSplit,
        seed: u64,
        audit: &mut AuditLog,
    ) -> Result<Discriminator> {
        let data = &prep.dataset;
        let mut disc = Discriminator::new(cfg.trunk.clone(), &prep.trunk_params)?;
        let pool: Vec<usize> = split
            .source_train
            .iter()
            .chain(&split.source_test)
            .chain(&split.target_adapt)
            .copied()
            .collect();
        let images: Vec<Tensor>;
        let inputs: Vec<&Tensor> = if cfg.discriminator.train_trunk {
            images = data.tensors(&pool);
            images.iter().collect()
        } else {
            pool.iter().map(|&i| &prep.features[i]).collect()
        };
        let examples: Vec<DomainExample> = pool
            .iter()
            .zip(&inputs)
            .map(|(&i, input)| DomainExample {
                input,
                domain: data.images[i].domain,
            })
            .collect();
        let curve = disc.train(&examples, &cfg.discriminator, &mut rng(seed, Stream::Discriminator), |batch| {
            audit.batches.push(batch.iter().map(|&k| pool[k]).collect())
        })?;
        self.log(format!("discriminator loss {:?}", curve));
        Ok(disc)
    }

    #[allow(clippy::too_many_arguments)]
    fn write_repeat(
        &self,
        cfg: &ExperimentConfig,
        dir: &Path,
        outcome: &RepeatOutcome,
        disc: Option<&Discriminator>,
        model: &LoadModel,
        audit: &AuditLog,
        data: &Dataset,
    ) -> Result<()> {
        if let Some(d) = disc {
            d.params.save(&dir.join("discriminator.ckpt"))?;
            crate::formats::write_atomic(&dir.join("discriminator_batches.log"), audit.render(data).as_bytes())?;
        }
        model.params.save(&dir.join("classifier.ckpt"))?;
        let record = MetricsRecord::new(cfg, vec![outcome.clone()]);
        super::metrics::write_metrics(&[record], &dir.join("metrics.csv"))
    }

    /// All repeats of `cfg`. A failing repeat is reported and skipped; the
    /// others still run.
    pub fn run(&mut self, cfg: &ExperimentConfig) -> Result<RunReport> {
        cfg.validate()?;
        let mut outcomes = Vec::new();
        let mut failures = Vec::new();
        for (repeat, seed) in cfg.seeds().into_iter().enumerate() {
            match self.run_repeat(cfg, repeat, seed) {
                Ok(a) => {
                    self.log(format!(
                        "{} repeat {repeat} (seed {seed}): source {:.2}% target {:.2}%",
                        cfg.model.as_str(),
                        100.0 * a.outcome.source_test_acc,
                        100.0 * a.outcome.target_acc
                    ));
                    outcomes.push(a.outcome)
                }
                Err(e) => failures.push(e),
            }
        }
        Ok(RunReport {
            record: MetricsRecord::new(cfg, outcomes),
            failures,
        })
    }
}

/// Same configuration with the model preset switched.
pub fn with_model(cfg: &ExperimentConfig, model: ModelPreset) -> ExperimentConfig {
    ExperimentConfig {
        model,
        ..cfg.clone()
    }
}
