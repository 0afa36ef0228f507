//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use loadnet::data::{make_splits, Protocol, ShiftMode, SynthConfig};
use loadnet::domainness::{self, AttributionScore};
use loadnet::experiments::pipeline::{rng as stream_rng, with_model, Stream};
use loadnet::experiments::*;
use loadnet::formats::{checkpoint, pnm::Pnm};
use loadnet::model::{FusionMode, LoadModel};
use loadnet::nets::{FrozenMask, ParamStore, TrunkConfig};
use loadnet::data::Domain;
use loadnet_tensor::{adaptive_pool_plan, grad_check, Graph, Result as TResult, Tensor, Var};
use rand::Rng;

const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const GRADCAM_TOL: f64 = 1e-3;
const SUMMATION_TOL: f64 = 1e-6;
const SHIFT_MIN_GAP: f64 = 15.0;
const CONTROL_MAX_GAP: f64 = 5.0;
const SHIFT_BUDGET: Duration = Duration::from_secs(180);
const BENEFIT_MIN_POINTS: f64 = 3.0;
const BENEFIT_BUDGET: Duration = Duration::from_secs(600);
const SUB_TARGET_MAX_POINTS: f64 = 5.0;
const ABLATION_WIDTHS: [usize; 3] = [2304, 1024, 576];
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Frames per instance for the measured criteria: 1800 images in all.
const FRAMES: usize = 12;

type Verdict = Result<String, String>;

fn pass_if(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn translation(frames: usize) -> ExperimentConfig {
    ExperimentConfig {
        repeats: SEEDS.len(),
        seeds: SEEDS.to_vec(),
        data: DataSource::Synth(SynthConfig {
            frames,
            ..SynthConfig::default()
        }),
        ..ExperimentConfig::default()
    }
}

/// Reduced epochs for criteria that test machinery rather than accuracy.
fn quick(frames: usize) -> ExperimentConfig {
    let mut cfg = translation(frames);
    cfg.pretrain.epochs = 4;
    cfg.discriminator.epochs = 8;
    cfg.train.epochs = 8;
    cfg
}

// ---------------------------------------------------------------- AC1

fn random64(dims: &[usize], seed: u64) -> Tensor<f64> {
    uniform(dims, -1.0, 1.0, seed)
}

fn away_from_zero(dims: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(dims, |_| {
        let m = r.gen_range(0.05..1.0);
        if r.gen::<bool>() {
            m
        } else {
            -m
        }
    })
    .unwrap()
}

fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> TResult<Var> {
    let r = g.constant(random64(g.dims(y), seed ^ 0x5eed));
    let p = g.mul(y, r)?;
    g.sum(p)
}

type Case = (&'static str, Tensor<f64>, Box<dyn Fn(&mut Graph<f64>, Var) -> TResult<Var>>);

fn op_cases(seed: u64) -> Vec<Case> {
    let s = seed;
    let x4 = random64(&[2, 2, 6, 5], s);
    let k = random64(&[3, 2, 3, 3], s + 1);
    let kb = random64(&[3], s + 2);
    let (stride, pad) = [(1, 0), (2, 1), (1, 1)][s as usize % 3];
    let w = random64(&[4, 5], s + 3);
    let b = random64(&[4], s + 4);
    let other = random64(&[2, 3], s + 5);
    let labels: Vec<usize> = (0..4).map(|i| (i + s as usize) % 5).collect();
    let targets: Vec<f64> = (0..6).map(|i| ((i + s as usize) % 2) as f64).collect();
    let (k1, kb1, x1, kb2, x2, k2) = (k.clone(), kb.clone(), x4.clone(), kb.clone(), x4.clone(), k.clone());
    let (w1, b1, x5, b2, x6, w2) = (
        w.clone(),
        b.clone(),
        random64(&[3, 5], s + 6),
        b.clone(),
        random64(&[3, 5], s + 6),
        w.clone(),
    );
    let (o1, o2, o3) = (other.clone(), other.clone(), random64(&[2, 3, 3, 3], s + 7));
    vec![
        ("conv2d/input", x4.clone(), Box::new(move |g, v| {
            let (kv, bv) = (g.constant(k1.clone()), g.constant(kb1.clone()));
            let y = g.conv2d(v, kv, bv, stride, pad)?;
            project(g, y, s)
        })),
        ("conv2d/kernel", k.clone(), Box::new(move |g, v| {
            let (xv, bv) = (g.constant(x1.clone()), g.constant(kb2.clone()));
            let y = g.conv2d(xv, v, bv, stride, pad)?;
            project(g, y, s)
        })),
        ("conv2d/bias", kb.clone(), Box::new(move |g, v| {
            let (xv, kv) = (g.constant(x2.clone()), g.constant(k2.clone()));
            let y = g.conv2d(xv, kv, v, stride, pad)?;
            project(g, y, s)
        })),
        ("relu", away_from_zero(&[3, 7], s), Box::new(move |g, v| {
            let y = g.relu(v)?;
            project(g, y, s)
        })),
        ("sigmoid", random64(&[4, 3], s), Box::new(move |g, v| {
            let y = g.sigmoid(v)?;
            project(g, y, s)
        })),
        ("scale", random64(&[4, 3], s), Box::new(move |g, v| {
            let y = g.scale(v, -1.75)?;
            project(g, y, s)
        })),
        ("max_pool2d", random64(&[2, 2, 6, 6], s), Box::new(move |g, v| {
            let y = g.max_pool2d(v, 2, 2)?;
            project(g, y, s)
        })),
        ("adaptive_max_pool2d", random64(&[1, 2, 13, 13], s), Box::new(move |g, v| {
            let y = g.adaptive_max_pool2d(v, 3, 3)?;
            project(g, y, s)
        })),
        ("global_avg_pool", random64(&[2, 3, 4, 5], s), Box::new(move |g, v| {
            let y = g.global_avg_pool(v)?;
            project(g, y, s)
        })),
        ("linear/input", x5.clone(), Box::new(move |g, v| {
            let (wv, bv) = (g.constant(w1.clone()), g.constant(b1.clone()));
            let y = g.linear(v, wv, bv)?;
            project(g, y, s)
        })),
        ("linear/weight", w.clone(), Box::new(move |g, v| {
            let (xv, bv) = (g.constant(x6.clone()), g.constant(b2.clone()));
            let y = g.linear(xv, v, bv)?;
            project(g, y, s)
        })),
        ("linear/bias", b.clone(), Box::new({
            let x = x5.clone();
            move |g, v| {
                let (xv, wv) = (g.constant(x.clone()), g.constant(w2.clone()));
                let y = g.linear(xv, wv, v)?;
                project(g, y, s)
            }
        })),
        ("mul", random64(&[2, 3], s + 8), Box::new(move |g, v| {
            let o = g.constant(o1.clone());
            let y = g.mul(v, o)?;
            project(g, y, s)
        })),
        ("add", random64(&[2, 3], s + 9), Box::new(move |g, v| {
            let o = g.constant(o2.clone());
            let y = g.add(v, o)?;
            project(g, y, s)
        })),
        ("concat_channels", random64(&[2, 2, 3, 3], s + 10), Box::new(move |g, v| {
            let o = g.constant(o3.clone());
            let y = g.concat_channels(v, o)?;
            project(g, y, s)
        })),
        ("reshape+flatten", random64(&[2, 3, 2, 2], s + 11), Box::new(move |g, v| {
            let y = g.reshape(v, &[2, 2, 3, 2])?;
            let y = g.flatten(y)?;
            project(g, y, s)
        })),
        ("dropout", random64(&[5, 8], s + 12), Box::new(move |g, v| {
            let y = g.dropout(v, 0.6, true, &mut rng(s))?;
            project(g, y, s)
        })),
        ("softmax_cross_entropy", random64(&[4, 5], s + 13).map(|v| 3.0 * v), Box::new(move |g, v| {
            g.softmax_cross_entropy(v, &labels)
        })),
        ("sigmoid_bce", random64(&[6, 1], s + 14).map(|v| 4.0 * v), Box::new(move |g, v| {
            g.sigmoid_bce(v, &targets)
        })),
    ]
}

fn composed_load_cases(seed: u64) -> Vec<Case> {
    let modes = [FusionMode::Mul, FusionMode::MulPlusOne, FusionMode::None];
    let fusion = modes[seed as usize % 3];
    let model = random_model(&tiny_trunk(), fusion, 2 + seed as usize % 2, seed).cast::<f64>();
    let images = random64(&[2, 3, 12, 12], seed + 10);
    let w: Tensor<f64> = uniform(&[2, 4, 6, 6], 0.0, 1.0, seed + 20);
    let labels = [seed as usize % 3, (seed as usize + 1) % 3];
    let fc0 = model.params.get("fc0.weight").unwrap().clone();
    let forward = move |g: &mut Graph<f64>, x: Option<Var>, p: Option<Var>| -> TResult<Var> {
        let mut bound = model.params.bind(g, &FrozenMask::from_names(model.params.names()));
        if let Some(p) = p {
            bound.set("fc0.weight", p);
        }
        let x = x.unwrap_or_else(|| g.constant(images.clone()));
        let wv = (fusion != FusionMode::None).then(|| g.constant(w.clone()));
        let z = model.forward(g, &bound, x, wv, seed % 2 == 0, &mut rng(seed))?;
        g.softmax_cross_entropy(z, &labels)
    };
    let f1 = std::rc::Rc::new(forward);
    let f2 = f1.clone();
    let images = random64(&[2, 3, 12, 12], seed + 10);
    vec![
        ("load_forward/images", images, Box::new(move |g, v| f1(g, Some(v), None))),
        ("load_forward/fc0", fc0, Box::new(move |g, v| f2(g, None, Some(v)))),
    ]
}

fn ac1() -> Verdict {
    let started = Instant::now();
    let mut checks = 0;
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    for seed in 0..GRAD_SEEDS {
        for (name, x, f) in op_cases(seed).into_iter().chain(composed_load_cases(seed)) {
            let r = grad_check(|g, v| f(g, v), &x, GRAD_TOL).map_err(|e| format!("{name}: {e}"))?;
            checks += 1;
            if r.max_rel_error > worst.0 {
                worst = (r.max_rel_error, name.to_string());
            }
            if !r.passed {
                failures.push(format!("{name}@{seed}"));
            }
        }
    }
    let t = started.elapsed();
    pass_if(
        failures.is_empty() && t < GRAD_BUDGET,
        format!(
            "{checks} checks over {GRAD_SEEDS} seeds, worst rel err {:.2e} ({}), {:.1}s; failing: {failures:?}",
            worst.0,
            worst.1,
            t.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- AC2

fn ac2() -> Verdict {
    let trunk = tiny_trunk();
    let h = 1e-5;
    let mut worst_fd = 0.0f64;
    let mut worst_sum = 0.0f64;
    for seed in 0..GRAD_SEEDS {
        let disc = random_discriminator(&trunk, seed).cast::<f64>();
        let f: Tensor<f64> = uniform(&[4, 6, 6], 0.0, 2.0, seed + 100);
        let dw = disc.params.get("disc.weight").unwrap().data().to_vec();
        let db = disc.params.get("disc.bias").unwrap().data()[0];
        // logit oracle: bias + Σ_n w_n · mean(F^n)
        let y = |f: &Tensor<f64>| db + (0..4).map(|n| dw[n] * f.data()[n * 36..(n + 1) * 36].iter().sum::<f64>() / 36.0).sum::<f64>();
        for c in [Domain::One, Domain::Two] {
            let sign = if c == Domain::One { 1.0 } else { -1.0 };
            let b = domainness::bundle(&disc, &f, c, AttributionScore::Logit).map_err(|e| e.to_string())?;
            for n in 0..4 {
                let mut acc = 0.0;
                for j in 0..36 {
                    let (mut p, mut q) = (f.clone(), f.clone());
                    p.data_mut()[n * 36 + j] += h;
                    q.data_mut()[n * 36 + j] -= h;
                    acc += (y(&p) - y(&q)) / (2.0 * h);
                }
                let fd = sign * acc / 36.0;
                let rel = (b.weights[n] - fd).abs() / fd.abs().max(b.weights[n].abs()).max(1e-8);
                worst_fd = worst_fd.max(rel);
            }
        }
        // direct summation on signed random fixtures
        let feats: Tensor<f64> = uniform(&[5, 4, 3], -1.0, 1.0, seed + 200);
        let w: Vec<f64> = uniform::<f64>(&[5], -1.0, 1.0, seed + 300).into_data();
        let heat = domainness::heatmap(&w, &feats).map_err(|e| e.to_string())?;
        let act = domainness::per_map_activations(&w, &feats).map_err(|e| e.to_string())?;
        for p in 0..12 {
            let mut s = 0.0;
            for n in 0..5 {
                let term = w[n] * feats.data()[n * 12 + p];
                s += term;
                worst_sum = worst_sum.max((act.data()[n * 12 + p] - term.max(0.0)).abs());
            }
            worst_sum = worst_sum.max((heat.data()[p] - s.max(0.0)).abs());
        }
    }
    pass_if(
        worst_fd < GRADCAM_TOL && worst_sum <= SUMMATION_TOL,
        format!("weights vs finite differences max rel err {worst_fd:.2e}; H and W vs direct summation max abs err {worst_sum:.1e}"),
    )
}

// ---------------------------------------------------------------- AC3

fn ac3() -> Verdict {
    let mut bad = Vec::new();
    for input in 1..=64 {
        for out in 1..=input {
            let p = adaptive_pool_plan(input, out).map_err(|e| e.to_string())?;
            if p.stride * (out - 1) + p.window < input || p.window > input || p.stride != input / out {
                bad.push((input, out));
            }
        }
    }
    let a = adaptive_pool_plan(13, 3).map_err(|e| e.to_string())?;
    let b = adaptive_pool_plan(6, 3).map_err(|e| e.to_string())?;
    let exact = (a.window, a.stride) == (5, 4) && (b.window, b.stride) == (2, 2);
    pass_if(
        bad.is_empty() && exact,
        format!(
            "coverage violations {}; (13,3) -> window {} stride {}; (6,3) -> window {} stride {}",
            bad.len(),
            a.window,
            a.stride,
            b.window,
            b.stride
        ),
    )
}

// ---------------------------------------------------------------- AC4

fn probe_means(cfg: &ExperimentConfig) -> Result<(f64, f64), String> {
    let mut runner = Runner::new();
    let mut s = 0.0;
    let mut t = 0.0;
    for &seed in &SEEDS {
        let p = probe_shift(&mut runner, cfg, seed).map_err(|e| e.to_string())?;
        s += p.source_acc;
        t += p.target_acc;
    }
    let n = SEEDS.len() as f64;
    Ok((100.0 * s / n, 100.0 * t / n))
}

fn ac4() -> Verdict {
    let started = Instant::now();
    let shifted = translation(FRAMES);
    let mut control = translation(FRAMES);
    if let DataSource::Synth(s) = &mut control.data {
        s.mode = ShiftMode::Identical;
    }
    let (ss, st) = probe_means(&shifted)?;
    let (cs, ct) = probe_means(&control)?;
    let t = started.elapsed();
    pass_if(
        ss - st >= SHIFT_MIN_GAP && (cs - ct).abs() < CONTROL_MAX_GAP && t < SHIFT_BUDGET,
        format!(
            "translation S->S {ss:.2} S->T {st:.2} (gap {:.2}); identical control {cs:.2} vs {ct:.2} (gap {:.2}); {:.0}s",
            ss - st,
            cs - ct,
            t.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- AC5, AC6

struct Adaptation {
    runner: Runner,
    load: MetricsRecord,
}

fn ac5(state: &mut Option<Adaptation>) -> Verdict {
    let started = Instant::now();
    let mut runner = Runner::new();
    let cfg = translation(FRAMES);
    let base = runner.run(&with_model(&cfg, ModelPreset::BaselinePlain)).map_err(|e| e.to_string())?;
    let load = runner.run(&cfg).map_err(|e| e.to_string())?;
    let t = started.elapsed();
    if let Some(e) = base.failures.iter().chain(&load.failures).next() {
        return Err(e.to_string());
    }
    let (b, l) = (100.0 * base.record.mean_target(), 100.0 * load.record.mean_target());
    let verdict = pass_if(
        l >= b && l - b >= BENEFIT_MIN_POINTS && t < BENEFIT_BUDGET,
        format!(
            "target accuracy LoAd {l:.2} ± {:.2} vs baseline {b:.2} ± {:.2} (difference {:+.2}); source-test {:.2} vs {:.2}; {:.0}s",
            100.0 * load.record.std_target(),
            100.0 * base.record.std_target(),
            l - b,
            100.0 * load.record.mean_source(),
            100.0 * base.record.mean_source(),
            t.as_secs_f64()
        ),
    );
    *state = Some(Adaptation {
        runner,
        load: load.record,
    });
    verdict
}

fn ac6(state: &mut Option<Adaptation>) -> Verdict {
    let Some(Adaptation { runner, load }) = state else {
        return Err("whole-target runs unavailable".into());
    };
    let mut cfg = translation(FRAMES);
    cfg.protocol = Protocol::SubTarget;
    let sub = runner.run(&cfg).map_err(|e| e.to_string())?;
    if let Some(e) = sub.failures.first() {
        return Err(e.to_string());
    }
    let (w, s) = (100.0 * load.mean_target(), 100.0 * sub.record.mean_target());
    pass_if(
        (w - s).abs() <= SUB_TARGET_MAX_POINTS,
        format!("LoAd whole-target {w:.2} vs sub-target {s:.2} (difference {:.2})", w - s),
    )
}

// ---------------------------------------------------------------- AC7

fn ac7() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = quick(3);
    cfg.seeds = vec![0, 1];
    cfg.repeats = 2;
    let results = ablate_pooling(&mut Runner::new(), &cfg).map_err(|e| e.to_string())?;
    let desk = TrunkConfig::desk();
    let trunk_params = trunk_params(&desk, 0);
    let mut widths = Vec::new();
    for (preset, _) in &results {
        let c = preset.apply(&cfg);
        let m = LoadModel::new(desk.clone(), &trunk_params, c.load.clone(), 15, &mut rng(0)).map_err(|e| e.to_string())?;
        widths.push(m.fc_input_width());
    }
    let seeds: BTreeSet<Vec<u64>> = results
        .iter()
        .map(|(_, r)| r.record.repeats.iter().map(|x| x.seed).collect())
        .collect();
    let hashes: BTreeSet<String> = results.iter().map(|(_, r)| r.record.config_hash.clone()).collect();
    let path = dir.path().join("ablation.csv");
    let records: Vec<MetricsRecord> = results.iter().map(|(_, r)| r.record.clone()).collect();
    write_metrics(&records, &path).map_err(|e| e.to_string())?;
    let rows = read_metrics(&path).map_err(|e| e.to_string())?;
    let table: Vec<String> = results
        .iter()
        .map(|(p, r)| format!("{} {:.2}", p.label(&cfg), 100.0 * r.record.mean_target()))
        .collect();
    pass_if(
        widths == ABLATION_WIDTHS && seeds.len() == 1 && hashes.len() == 3 && rows.len() == 9,
        format!("FC input widths {widths:?}; {} CSV rows; {}", rows.len(), table.join(", ")),
    )
}

// ---------------------------------------------------------------- AC8

fn ac8() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = quick(2);
    let run = || -> Result<(Vec<u64>, Vec<u8>), String> {
        let mut runner = Runner::new();
        let a = runner.run_repeat(&cfg, 0, 11).map_err(|e| e.to_string())?;
        let o = &a.outcome;
        Ok((
            vec![o.source_test_acc.to_bits(), o.target_acc.to_bits()],
            a.model.params.to_bytes(),
        ))
    };
    let (m1, c1) = run()?;
    let (m2, c2) = run()?;
    let metrics_same = m1 == m2 && c1 == c2;

    let mut store = ParamStore::new();
    store.insert("a", uniform(&[3, 4, 5], -1e3, 1e3, 1));
    store.insert("b.c", Tensor::new(&[2], vec![f32::MIN_POSITIVE, -0.0]).unwrap());
    let path = dir.path().join("m.ckpt");
    store.save(&path).map_err(|e| e.to_string())?;
    let back = ParamStore::load(&path).map_err(|e| e.to_string())?;
    let ckpt_same = back.to_bytes() == store.to_bytes()
        && back.iter().zip(store.iter()).all(|((_, x), (_, y))| {
            x.data().iter().map(|v| v.to_bits()).eq(y.data().iter().map(|v| v.to_bits()))
        });

    let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    let crc_caught = checkpoint::decode(&bytes, &path).is_err();

    let mut r = rng(5);
    let gray = Pnm::gray(7, 5, (0..35).map(|_| r.gen()).collect());
    let color = Pnm::rgb(6, 4, (0..72).map(|_| r.gen()).collect());
    let pnm_same = [gray, color].iter().all(|p| {
        let enc = p.encode();
        Pnm::decode(&enc, &path).map(|d| d == *p && d.encode() == enc).unwrap_or(false)
    });
    pass_if(
        metrics_same && ckpt_same && crc_caught && pnm_same,
        format!("repeat metrics+weights identical {metrics_same}; checkpoint bitwise {ckpt_same}; CRC corruption detected {crc_caught}; PGM/PPM bitwise {pnm_same}"),
    )
}

// ---------------------------------------------------------------- AC9

fn ac9() -> Verdict {
    let mut runner = Runner::new();
    let mut cfg = quick(2);
    cfg.protocol = Protocol::SubTarget;
    let prep = runner.prepare(&cfg, 0).map_err(|e| e.to_string())?;
    let split = make_splits(&prep.dataset, cfg.direction, cfg.protocol, None, cfg.train_fraction, &mut stream_rng(0, Stream::Split))
        .map_err(|e| e.to_string())?;
    let allowed: BTreeSet<usize> = loadnet::data::splits::default_sub_categories(prep.dataset.categories)
        .into_iter()
        .collect();

    // same split, every category label permuted: the discriminator must not notice
    let mut relabelled = Prepared {
        dataset: prep.dataset.clone(),
        base_split: prep.base_split.clone(),
        trunk_params: prep.trunk_params.clone(),
        features: prep.features.clone(),
        pretrain_curve: prep.pretrain_curve.clone(),
    };
    let k = relabelled.dataset.categories;
    for im in &mut relabelled.dataset.images {
        im.category = (im.category * 7 + 5) % k;
    }
    let (mut a, mut b) = (AuditLog::default(), AuditLog::default());
    let d1 = runner.train_discriminator(&cfg, &prep, &split, 0, &mut a).map_err(|e| e.to_string())?;
    let d2 = runner.train_discriminator(&cfg, &relabelled, &split, 0, &mut b).map_err(|e| e.to_string())?;
    let label_blind = d1.params.to_bytes() == d2.params.to_bytes() && a == b;

    let target = cfg.direction.target();
    let leaked: Vec<&str> = a
        .batches
        .iter()
        .flatten()
        .map(|&i| &prep.dataset.images[i])
        .filter(|im| im.domain == target && !allowed.contains(&im.category))
        .map(|im| im.id.as_str())
        .collect();
    let logged = a.batches.iter().map(Vec::len).sum::<usize>();
    pass_if(
        label_blind && leaked.is_empty() && logged > 0,
        format!(
            "discriminator unchanged under category permutation {label_blind}; {logged} logged batch entries, {} from excluded categories",
            leaked.len()
        ),
    )
}

fn main() {
    let mut adaptation = None;
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut Option<Adaptation>) -> Verdict>)> = vec![
        ("gradient checks", Box::new(|_| ac1())),
        ("domainness oracles", Box::new(|_| ac2())),
        ("adaptive pooling", Box::new(|_| ac3())),
        ("shift existence", Box::new(|_| ac4())),
        ("adaptation benefit", Box::new(ac5)),
        ("sub-target robustness", Box::new(ac6)),
        ("pooling ablation", Box::new(|_| ac7())),
        ("determinism and formats", Box::new(|_| ac8())),
        ("protocol audits", Box::new(|_| ac9())),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(|| run(&mut adaptation)))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied()))));
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("AC{} {tag} {name}: {detail}", i + 1);
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
