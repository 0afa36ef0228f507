use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use loadnet::data::manifest::{self, ManifestRecord};
use loadnet::data::{make_splits, Protocol};
use loadnet::domainness::{self, cache::escape_id, render_map};
use loadnet::experiments::pipeline::{rng, Stream};
use loadnet::experiments::{
    ablate_pooling, probe_shift, write_metrics, AuditLog, ExperimentConfig, MetricsRecord, Runner,
};
use loadnet::formats::write_atomic;
use loadnet::nets::discriminator::DomainExample;
use loadnet::nets::{Discriminator, ParamStore};
use loadnet::Error;

#[derive(Parser)]
#[command(name = "loadnet", version, about = "Domainness-map guided domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Base seed; repeats use consecutive seeds from here.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    repeats: Option<usize>,
    /// Overwrite a completed run.
    #[arg(long, global = true)]
    force: bool,
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    WholeTarget,
    SubTarget,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset as PPM folders plus a manifest.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train the domain discriminator and save its checkpoint.
    TrainDomain {
        #[command(flatten)]
        common: Common,
    },
    /// Export domain-specific and domain-generic maps for some images.
    Maps {
        #[command(flatten)]
        common: Common,
        /// Image ids, as listed in the dataset manifest.
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Train and evaluate the classifier for one seed.
    TrainLoad {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
    },
    /// Every repeat of an experiment, with a metrics table.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// Run the three pooling presets instead of the configured one.
        #[arg(long)]
        ablate_pooling: bool,
    },
    /// Same as `run --ablate-pooling`.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
    },
    /// Linear probe on classifier features: source vs target accuracy.
    Probe {
        #[command(flatten)]
        common: Common,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn classify(e: Error) -> Failure {
    let code = if e.is_numeric() {
        3
    } else if e.is_data() {
        2
    } else {
        1
    };
    Failure { code, err: e.into() }
}

fn usage(err: anyhow::Error) -> Failure {
    Failure { code: 1, err }
}

type Outcome = Result<(), Failure>;

fn config(common: &Common, protocol: Option<ProtocolArg>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| usage(e.into()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = common.repeats {
        cfg.repeats = n;
        cfg.seeds.clear();
    }
    if let Some(s) = common.seed {
        cfg.seeds = (0..cfg.repeats as u64).map(|k| s.wrapping_add(k)).collect();
    }
    if let Some(p) = protocol {
        cfg.protocol = match p {
            ProtocolArg::WholeTarget => Protocol::WholeTarget,
            ProtocolArg::SubTarget => Protocol::SubTarget,
        };
        if cfg.protocol == Protocol::WholeTarget {
            cfg.sub_categories.clear();
        }
    }
    cfg.validate().map_err(|e| usage(e.into()))?;
    Ok(cfg)
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds()[0]
}

fn runner(common: &Common) -> Runner {
    let mut r = Runner::new();
    r.verbose = common.verbose;
    r
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| classify(Error::io(dir, e)))
}

/// Errors out when `marker` exists and `--force` was not given.
fn guard(marker: &Path, force: bool) -> Outcome {
    if marker.exists() && !force {
        return Err(usage(anyhow::anyhow!(
            "{} already exists; pass --force to overwrite",
            marker.display()
        )));
    }
    Ok(())
}

fn echo_config(dir: &Path, cfg: &ExperimentConfig) -> Outcome {
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes()).map_err(classify)
}

fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn cmd_synth(common: &Common) -> Outcome {
    let cfg = config(common, None)?;
    let out = &common.out;
    let manifest_path = out.join("manifest.tsv");
    guard(&manifest_path, common.force)?;
    let data = runner(common).dataset(&cfg, first_seed(&cfg)).map_err(classify)?;
    let mut records = Vec::with_capacity(data.images.len());
    for (n, im) in data.images.iter().enumerate() {
        let rel = format!(
            "domain{}/c{:03}/i{:03}/{:05}.ppm",
            im.domain, im.category, im.instance, n
        );
        let path = out.join(&rel);
        create_dir(path.parent().expect("nested path"))?;
        im.pixels.save(&path).map_err(classify)?;
        records.push(ManifestRecord {
            path: rel,
            domain: im.domain,
            category: im.category,
            instance: im.instance,
        });
    }
    manifest::write(&manifest_path, &records).map_err(classify)?;
    echo_config(out, &cfg)?;
    println!("wrote {} images to {}", records.len(), out.display());
    Ok(())
}

fn cmd_train_domain(common: &Common) -> Outcome {
    let cfg = config(common, None)?;
    let out = &common.out;
    let ckpt = out.join("discriminator.ckpt");
    guard(&ckpt, common.force)?;
    create_dir(out)?;
    let seed = first_seed(&cfg);
    let mut runner = runner(common);
    let prep = runner.prepare(&cfg, seed).map_err(classify)?;
    let split = make_splits(
        &prep.dataset,
        cfg.direction,
        cfg.protocol,
        cfg.sub_categories(),
        cfg.train_fraction,
        &mut rng(seed, Stream::Split),
    )
    .map_err(classify)?;
    let mut audit = AuditLog::default();
    let disc = runner
        .train_discriminator(&cfg, &prep, &split, seed, &mut audit)
        .map_err(classify)?;
    let held_out: Vec<DomainExample> = split
        .source_test
        .iter()
        .chain(&split.target_test)
        .map(|&i| DomainExample {
            input: &prep.features[i],
            domain: prep.dataset.images[i].domain,
        })
        .collect();
    let acc = disc.accuracy_from_features(&held_out).map_err(classify)?;
    write_atomic(&out.join("discriminator_batches.log"), audit.render(&prep.dataset).as_bytes())
        .map_err(classify)?;
    echo_config(out, &cfg)?;
    disc.params.save(&ckpt).map_err(classify)?;
    println!("domain accuracy {} on {} held-out images", percent(acc), held_out.len());
    println!("saved {}", ckpt.display());
    Ok(())
}

fn cmd_maps(common: &Common, ids: &[String]) -> Outcome {
    let cfg = config(common, None)?;
    let out = &common.out;
    let ckpt = out.join("discriminator.ckpt");
    let params = ParamStore::load(&ckpt)
        .with_context(|| "run `train-domain` with the same --out first")
        .map_err(|err| Failure { code: 2, err })?;
    let disc = Discriminator::from_params(cfg.trunk.clone(), params).map_err(classify)?;
    let data = runner(common).dataset(&cfg, first_seed(&cfg)).map_err(classify)?;
    let mut picked = Vec::with_capacity(ids.len());
    for id in ids {
        let i = data
            .find(id)
            .ok_or_else(|| classify(Error::Data(format!("unknown image id `{id}`"))))?;
        picked.push(i);
    }
    let dir = out.join("maps");
    create_dir(&dir)?;
    let images = data.tensors(&picked);
    let refs: Vec<_> = images.iter().collect();
    let features = cfg.trunk.features(&disc.params, &refs, 64).map_err(classify)?;
    for (&i, f) in picked.iter().zip(&features) {
        let im = &data.images[i];
        for (kind, domain) in [("specific", im.domain), ("generic", im.domain.other())] {
            let b = domainness::bundle(&disc, f, domain, cfg.score).map_err(classify)?;
            let stem = format!("{}.{kind}", escape_id(&im.id));
            render_map(
                &b.heatmap,
                &im.pixels,
                &dir.join(format!("{stem}.pgm")),
                &dir.join(format!("{stem}.ppm")),
            )
            .map_err(classify)?;
        }
        println!("{}: maps written", im.id);
    }
    Ok(())
}

fn report_failures(failures: &[Error]) -> Outcome {
    for f in failures {
        eprintln!("error: {f}");
    }
    match failures.iter().find(|e| e.is_numeric()).or(failures.first()) {
        Some(e) => Err(Failure {
            code: if e.is_numeric() { 3 } else if e.is_data() { 2 } else { 1 },
            err: anyhow::anyhow!("{} repeat(s) failed", failures.len()),
        }),
        None => Ok(()),
    }
}

fn cmd_train_load(common: &Common, protocol: Option<ProtocolArg>) -> Outcome {
    let cfg = config(common, protocol)?;
    let dir = common.out.join(cfg.hash()).join("0");
    guard(&dir.join("metrics.csv"), common.force)?;
    create_dir(&dir)?;
    echo_config(&dir, &cfg)?;
    let mut runner = runner(common);
    runner.run_root = Some(common.out.clone());
    let a = runner.run_repeat(&cfg, 0, first_seed(&cfg)).map_err(classify)?;
    println!(
        "{} {}: source-test {} target {}",
        cfg.model.as_str(),
        cfg.protocol.as_str(),
        percent(a.outcome.source_test_acc),
        percent(a.outcome.target_acc)
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn summary(record: &MetricsRecord) -> String {
    format!(
        "target {} ± {}, source-test {} ± {} over {} repeat(s)",
        percent(record.mean_target()),
        percent(record.std_target()),
        percent(record.mean_source()),
        percent(record.std_source()),
        record.repeats.len()
    )
}

fn cmd_run(common: &Common, protocol: Option<ProtocolArg>) -> Outcome {
    let cfg = config(common, protocol)?;
    let dir = common.out.join(cfg.hash());
    let table = dir.join("metrics.csv");
    guard(&table, common.force)?;
    create_dir(&dir)?;
    echo_config(&dir, &cfg)?;
    let mut runner = runner(common);
    runner.run_root = Some(common.out.clone());
    let report = runner.run(&cfg).map_err(classify)?;
    write_metrics(std::slice::from_ref(&report.record), &table).map_err(classify)?;
    println!("{} {}: {}", cfg.model.as_str(), cfg.protocol.as_str(), summary(&report.record));
    println!("wrote {}", table.display());
    report_failures(&report.failures)
}

fn cmd_ablate(common: &Common, protocol: Option<ProtocolArg>) -> Outcome {
    let cfg = config(common, protocol)?;
    let table = common.out.join(format!("ablation-{}.csv", cfg.hash()));
    guard(&table, common.force)?;
    create_dir(&common.out)?;
    let mut runner = runner(common);
    runner.run_root = Some(common.out.clone());
    let results = ablate_pooling(&mut runner, &cfg).map_err(classify)?;
    let mut failures = Vec::new();
    let mut records = Vec::new();
    for (preset, report) in results {
        let applied = preset.apply(&cfg);
        let dir = common.out.join(applied.hash());
        create_dir(&dir)?;
        echo_config(&dir, &applied)?;
        println!("{} [{}]: {}", preset.label(&cfg), applied.hash(), summary(&report.record));
        records.push(report.record);
        failures.extend(report.failures);
    }
    write_metrics(&records, &table).map_err(classify)?;
    println!("wrote {}", table.display());
    report_failures(&failures)
}

fn cmd_probe(common: &Common) -> Outcome {
    let cfg = config(common, None)?;
    let table = common.out.join(format!("probe-{}.csv", cfg.hash()));
    guard(&table, common.force)?;
    create_dir(&common.out)?;
    let mut runner = runner(common);
    let mut csv = String::from("seed,source_acc,target_acc,gap\n");
    let (mut s, mut t) = (0.0, 0.0);
    let seeds = cfg.seeds();
    for &seed in &seeds {
        let p = probe_shift(&mut runner, &cfg, seed).map_err(classify)?;
        csv.push_str(&format!(
            "{seed},{:.4},{:.4},{:.4}\n",
            100.0 * p.source_acc,
            100.0 * p.target_acc,
            p.gap()
        ));
        println!("seed {seed}: S->S {} S->T {}", percent(p.source_acc), percent(p.target_acc));
        s += p.source_acc;
        t += p.target_acc;
    }
    let n = seeds.len() as f64;
    println!("mean S->S {} S->T {}", percent(s / n), percent(t / n));
    echo_config(&common.out, &cfg)?;
    write_atomic(&table, csv.as_bytes()).map_err(classify)?;
    println!("wrote {}", table.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Synth { common } => cmd_synth(common),
        Command::TrainDomain { common } => cmd_train_domain(common),
        Command::Maps { common, ids } => cmd_maps(common, ids),
        Command::TrainLoad { common, protocol } => cmd_train_load(common, *protocol),
        Command::Run {
            common,
            protocol,
            ablate_pooling: false,
        } => cmd_run(common, *protocol),
        Command::Run { common, protocol, .. } | Command::Ablate { common, protocol } => {
            cmd_ablate(common, *protocol)
        }
        Command::Probe { common } => cmd_probe(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_flag_gives_consecutive_seeds() {
        let cli = Cli::try_parse_from(["loadnet", "run", "--seed", "7", "--repeats", "3"]).unwrap();
        let Command::Run { common, .. } = cli.command else { panic!() };
        assert_eq!(config(&common, None).ok().unwrap().seeds, vec![7, 8, 9]);
    }

    #[test]
    fn errors_map_to_exit_codes() {
        assert_eq!(classify(Error::Data("x".into())).code, 2);
        assert_eq!(classify(Error::format("a.ppm", "bad")).code, 2);
        assert_eq!(classify(Error::Config("x".into())).code, 1);
    }
}
