//! Per-run accuracy records and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use super::config::ExperimentConfig;
use crate::data::{Direction, Protocol};
use crate::error::{Error, Result};
use crate::formats::write_atomic;

pub const HEADER: &str = "config_hash,direction,protocol,repeat,seed,source_test_acc,target_acc,seconds";

#[derive(Clone, Debug, PartialEq)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    /// Fractions in `[0, 1]`.
    pub source_test_acc: f64,
    pub target_acc: f64,
    pub seconds: f64,
    /// Held-out domain accuracy of the discriminator, when one was trained.
    pub disc_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub config_hash: String,
    pub direction: Direction,
    pub protocol: Protocol,
    pub repeats: Vec<RepeatOutcome>,
}

fn mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    if n == 0 {
        return f64::NAN;
    }
    xs.sum::<f64>() / n as f64
}

/// Population standard deviation, so a single repeat has spread zero.
fn std(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(xs.clone());
    mean(xs.map(|x| (x - m) * (x - m))).sqrt()
}

impl MetricsRecord {
    pub fn new(cfg: &ExperimentConfig, repeats: Vec<RepeatOutcome>) -> Self {
        Self {
            config_hash: cfg.hash(),
            direction: cfg.direction,
            protocol: cfg.protocol,
            repeats,
        }
    }

    pub fn mean_target(&self) -> f64 {
        mean(self.repeats.iter().map(|r| r.target_acc))
    }

    pub fn std_target(&self) -> f64 {
        std(self.repeats.iter().map(|r| r.target_acc))
    }

    pub fn mean_source(&self) -> f64 {
        mean(self.repeats.iter().map(|r| r.source_test_acc))
    }

    pub fn std_source(&self) -> f64 {
        std(self.repeats.iter().map(|r| r.source_test_acc))
    }

    pub fn mean_seconds(&self) -> f64 {
        mean(self.repeats.iter().map(|r| r.seconds))
    }
}

/// Header, then per record one row per repeat and a `mean` row.
pub fn render_metrics(records: &[MetricsRecord]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in records {
        let (dir, proto) = (r.direction.as_str(), r.protocol.as_str());
        for x in &r.repeats {
            let _ = writeln!(
                out,
                "{},{dir},{proto},{},{},{:.4},{:.4},{:.3}",
                r.config_hash,
                x.repeat,
                x.seed,
                100.0 * x.source_test_acc,
                100.0 * x.target_acc,
                x.seconds
            );
        }
        if !r.repeats.is_empty() {
            let _ = writeln!(
                out,
                "{},{dir},{proto},mean,,{:.4},{:.4},{:.3}",
                r.config_hash,
                100.0 * r.mean_source(),
                100.0 * r.mean_target(),
                r.mean_seconds()
            );
        }
    }
    out
}

pub fn write_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    write_atomic(path, render_metrics(records).as_bytes())
}

/// One parsed CSV row; `repeat` and `seed` are `None` on summary rows.
/// Accuracies are in percent as printed.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub config_hash: String,
    pub direction: String,
    pub protocol: String,
    pub repeat: Option<usize>,
    pub seed: Option<u64>,
    pub source_test_acc: f64,
    pub target_acc: f64,
    pub seconds: f64,
}

pub fn parse_metrics(text: &str, path: &Path) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::format(path, "missing or unexpected metrics header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| Error::format(path, format!("line {}: {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad("expected 8 columns"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("malformed number"));
            Ok(MetricsRow {
                config_hash: f[0].into(),
                direction: f[1].into(),
                protocol: f[2].into(),
                repeat: match f[3] {
                    "mean" => None,
                    s => Some(s.parse().map_err(|_| bad("malformed repeat"))?),
                },
                seed: match f[4] {
                    "" => None,
                    s => Some(s.parse().map_err(|_| bad("malformed seed"))?),
                },
                source_test_acc: num(f[5])?,
                target_acc: num(f[6])?,
                seconds: num(f[7])?,
            })
        })
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(accs: &[f64]) -> MetricsRecord {
        MetricsRecord::new(
            &ExperimentConfig::default(),
            accs.iter()
                .enumerate()
                .map(|(i, &a)| RepeatOutcome {
                    repeat: i,
                    seed: 10 + i as u64,
                    source_test_acc: 0.9,
                    target_acc: a,
                    seconds: 1.5,
                    disc_accuracy: None,
                })
                .collect(),
        )
    }

    #[test]
    fn single_repeat_has_zero_spread() {
        assert_eq!(record(&[0.4]).std_target(), 0.0);
    }

    #[test]
    fn spread_matches_hand_value() {
        let r = record(&[0.2, 0.4]);
        assert!((r.mean_target() - 0.3).abs() < 1e-12);
        assert!((r.std_target() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_records_give_header_only() {
        assert_eq!(render_metrics(&[]), format!("{HEADER}\n"));
    }

    #[test]
    fn csv_roundtrips_to_four_decimals() {
        let r = record(&[0.123456, 0.5, 0.75]);
        let rows = parse_metrics(&render_metrics(&[r.clone()]), Path::new("m.csv")).unwrap();
        assert_eq!(rows.len(), 4);
        for (row, x) in rows.iter().zip(&r.repeats) {
            assert_eq!(row.repeat, Some(x.repeat));
            assert_eq!(row.seed, Some(x.seed));
            assert_eq!(row.target_acc, (100.0 * x.target_acc * 1e4).round() / 1e4);
        }
        let summary = &rows[3];
        assert_eq!((summary.repeat, summary.seed), (None, None));
        assert!((summary.target_acc - 100.0 * r.mean_target()).abs() < 5e-5);
    }

    #[test]
    fn malformed_rows_rejected() {
        let p = Path::new("m.csv");
        assert!(parse_metrics("a,b\n", p).is_err());
        assert!(parse_metrics(&format!("{HEADER}\nx,1->2,whole-target,0,1,x,2,3\n"), p).is_err());
    }
}
