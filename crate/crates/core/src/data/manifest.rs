//! Tab-separated dataset manifest: `path`, `domain`, `category`, `instance`.

use std::fmt::Write as _;
use std::path::Path;

use super::Domain;
use crate::error::{Error, Result};
use crate::formats::write_atomic;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: String,
    pub domain: Domain,
    pub category: usize,
    pub instance: usize,
}

pub fn encode(records: &[ManifestRecord]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{}\t{}\t{}\t{}", r.path, r.domain, r.category, r.instance).unwrap();
    }
    out
}

pub fn decode(text: &str, path: &Path) -> Result<Vec<ManifestRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, line)| {
            let bad = |what: &str| Error::format(path, format!("line {}: {what}", n + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            let domain = f[1].parse::<u8>().ok().and_then(|d| Domain::from_label(d).ok());
            Ok(ManifestRecord {
                path: f[0].to_string(),
                domain: domain.ok_or_else(|| bad("domain must be 1 or 2"))?,
                category: f[2].parse().map_err(|_| bad("bad category"))?,
                instance: f[3].parse().map_err(|_| bad("bad instance"))?,
            })
        })
        .collect()
}

pub fn write(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    write_atomic(path, encode(records).as_bytes())
}

pub fn read(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(&text, path)
}
