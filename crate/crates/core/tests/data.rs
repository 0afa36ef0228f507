//! Dataset generation, protocol splits and manifests at full default scale.

mod common;

use std::collections::BTreeSet;

use common::*;
use loadnet::data::manifest::{self, ManifestRecord};
use loadnet::data::synth::synth_dataset;
use loadnet::data::{make_splits, Dataset, Direction, Domain, Protocol, ShiftMode, SynthConfig};
use proptest::prelude::*;

fn categories(d: &Dataset, idx: &[usize]) -> BTreeSet<usize> {
    idx.iter().map(|&i| d.images[i].category).collect()
}

fn histogram(d: &Dataset, idx: &[usize]) -> Vec<usize> {
    let mut h = vec![0; d.categories];
    for &i in idx {
        h[d.images[i].category] += 1;
    }
    h
}

#[test]
fn default_dataset_counts_and_protocol_splits() {
    let data = synth_dataset(&SynthConfig::default()).unwrap();
    assert_eq!(data.indices_of(Domain::One).len(), 4500);
    assert_eq!(data.indices_of(Domain::Two).len(), 3000);
    assert!(data
        .images
        .iter()
        .all(|im| im.pixels.width == 64 && im.pixels.height == 64 && im.pixels.channels == 3));

    let whole = make_splits(&data, Direction::OneToTwo, Protocol::WholeTarget, None, 0.8, &mut rng(0)).unwrap();
    assert_eq!((whole.source_train.len(), whole.source_test.len()), (3600, 900));
    assert_eq!(whole.target_adapt.len(), 3000);
    assert_eq!(whole.target_test.len(), 3000);
    assert_eq!(histogram(&data, &whole.source_train), vec![240; 15]);
    assert_eq!(histogram(&data, &whole.source_test), vec![60; 15]);

    let sub = make_splits(&data, Direction::OneToTwo, Protocol::SubTarget, None, 0.8, &mut rng(0)).unwrap();
    assert_eq!(categories(&data, &sub.target_adapt), (0..8).collect());
    assert_eq!(histogram(&data, &sub.target_adapt)[..8], [200; 8]);
    assert_eq!(categories(&data, &sub.target_test).len(), 15);
    assert_eq!(sub.source_train, whole.source_train);

    let reverse = make_splits(&data, Direction::TwoToOne, Protocol::WholeTarget, None, 0.8, &mut rng(0)).unwrap();
    assert_eq!((reverse.source_train.len(), reverse.source_test.len()), (2400, 600));
    assert_eq!(reverse.target_test.len(), 4500);
}

#[test]
fn every_box_contains_nine_tenths_of_the_glyph() {
    for mode in [ShiftMode::Translation, ShiftMode::Scale] {
        let cfg = SynthConfig {
            mode,
            frames: 3,
            ..SynthConfig::default()
        };
        for c in 0..cfg.categories {
            for inst in 0..cfg.instances {
                for frame in 0..cfg.frames {
                    let f = loadnet::data::synth::render_frame(&cfg, c, inst, frame);
                    assert!(f.glyph_pixels_in_box * 10 >= f.glyph_pixels * 9, "{mode:?} {c} {inst} {frame}");
                    assert!(f.bbox.x1 <= 64 && f.bbox.y1 <= 64);
                }
            }
        }
    }
}

#[test]
fn pixels_stay_in_unit_range() {
    let data = synth_dataset(&small_synth(2)).unwrap();
    for im in &data.images {
        let t = im.tensor();
        assert!(t.data().iter().all(|x| (0.0..=1.0).contains(x)));
    }
}

#[test]
fn scale_mode_separates_glyph_extent() {
    let cfg = SynthConfig {
        mode: ShiftMode::Scale,
        frames: 4,
        ..SynthConfig::default()
    };
    let data = synth_dataset(&cfg).unwrap();
    let width = |d: Domain| -> Vec<usize> {
        data.indices_of(d)
            .iter()
            .map(|&i| {
                let b = data.images[i].bbox.unwrap();
                b.x1 - b.x0
            })
            .collect()
    };
    let far = *width(Domain::One).iter().max().unwrap();
    let close = *width(Domain::Two).iter().min().unwrap();
    assert!(far < close, "far {far} close {close}");
}

#[test]
fn manifest_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![
        ManifestRecord {
            path: "1/c000/i000/f000.ppm".into(),
            domain: Domain::One,
            category: 0,
            instance: 0,
        },
        ManifestRecord {
            path: "2/c014/i009/f049.ppm".into(),
            domain: Domain::Two,
            category: 14,
            instance: 149,
        },
    ];
    let path = dir.path().join("manifest.tsv");
    manifest::write(&path, &records).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().next().unwrap().split('\t').count(), 4);
    assert_eq!(manifest::read(&path).unwrap(), records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn split_invariants(seed in 0u64..1000, frames in 1usize..4, fraction in 0.2f64..0.9, sub_mask in 1u32..15) {
        let data = synth_dataset(&SynthConfig { frames, seed, ..small_synth(1) }).unwrap();
        let sub: Vec<usize> = (0..4).filter(|c| sub_mask & (1 << c) != 0).collect();
        prop_assume!(sub.len() < 4);
        for dir in [Direction::OneToTwo, Direction::TwoToOne] {
            let a = make_splits(&data, dir, Protocol::SubTarget, Some(&sub), fraction, &mut rng(seed)).unwrap();
            let b = make_splits(&data, dir, Protocol::SubTarget, Some(&sub), fraction, &mut rng(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            let train: BTreeSet<usize> = a.source_train.iter().copied().collect();
            prop_assert!(a.source_test.iter().all(|i| !train.contains(i)));
            prop_assert_eq!(a.source_train.len() + a.source_test.len(), data.indices_of(dir.source()).len());
            prop_assert!(a.source_train.iter().chain(&a.source_test).all(|&i| data.images[i].domain == dir.source()));
            prop_assert!(a.target_test.iter().all(|&i| data.images[i].domain == dir.target()));
            prop_assert_eq!(categories(&data, &a.target_adapt), sub.iter().copied().collect::<BTreeSet<_>>());
            prop_assert_eq!(categories(&data, &a.target_test).len(), 4);
            let test: BTreeSet<usize> = a.target_test.iter().copied().collect();
            prop_assert!(a.target_adapt.iter().all(|i| test.contains(i)));
        }
    }
}
