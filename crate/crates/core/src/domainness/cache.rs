//! Bundle store keyed by image id and attributed domain, bound to one
//! discriminator checkpoint.
//!
//! On disk every bundle is a checkpoint-encoded file under
//! `<root>/<checkpoint sha256>/`, written via a temporary file and a rename.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use loadnet_tensor::Tensor;
use sha2::{Digest, Sha256};

use super::DomainnessBundle;
use crate::data::Domain;
use crate::error::{Error, Result};
use crate::formats::checkpoint;
use crate::nets::Discriminator;

pub fn checkpoint_hash(disc: &Discriminator) -> String {
    hex(&Sha256::digest(disc.params.to_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// File-name-safe encoding of an image id: `[A-Za-z0-9_.-]` kept, every other
/// byte written as `%XX`.
pub fn escape_id(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-') || (b == b'.' && !out.is_empty()) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub struct DomainnessCache {
    provenance: String,
    dir: Option<PathBuf>,
    memory: HashMap<(String, Domain), DomainnessBundle>,
}

impl DomainnessCache {
    /// In-memory cache for the given discriminator.
    pub fn new(disc: &Discriminator) -> Self {
        Self {
            provenance: checkpoint_hash(disc),
            dir: None,
            memory: HashMap::new(),
        }
    }

    /// Cache that also persists bundles under `root`.
    pub fn on_disk(disc: &Discriminator, root: &Path) -> Self {
        let provenance = checkpoint_hash(disc);
        Self {
            dir: Some(root.join(&provenance)),
            provenance,
            memory: HashMap::new(),
        }
    }

    /// Hex SHA-256 of the discriminator checkpoint bytes.
    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.memory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memory.is_empty()
    }

    pub fn path_for(&self, id: &str, domain: Domain) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{}.d{domain}.bundle", escape_id(id))))
    }

    pub fn get(&self, id: &str, domain: Domain) -> Option<&DomainnessBundle> {
        self.memory.get(&(id.to_string(), domain))
    }

    pub fn insert(&mut self, id: &str, bundle: DomainnessBundle) -> Result<()> {
        if let Some(path) = self.path_for(id, bundle.domain) {
            let w = Tensor::new(&[bundle.weights.len()], bundle.weights.clone())?;
            let tensors = [
                ("weights", &w),
                ("heatmap", &bundle.heatmap),
                ("activations", &bundle.activations),
            ];
            checkpoint::save(&path, tensors)?;
        }
        self.memory.insert((id.to_string(), bundle.domain), bundle);
        Ok(())
    }

    /// Returns the cached bundle, reading it from disk if needed, or computes
    /// and stores it.
    pub fn get_or_compute(
        &mut self,
        id: &str,
        domain: Domain,
        compute: impl FnOnce() -> Result<DomainnessBundle>,
    ) -> Result<&DomainnessBundle> {
        let key = (id.to_string(), domain);
        if !self.memory.contains_key(&key) {
            match self.read_disk(id, domain)? {
                Some(b) => {
                    self.memory.insert(key.clone(), b);
                }
                None => {
                    let b = compute()?;
                    if b.domain != domain {
                        return Err(Error::Data(format!(
                            "bundle computed for domain {} stored under domain {domain}",
                            b.domain
                        )));
                    }
                    self.insert(id, b)?;
                }
            }
        }
        Ok(&self.memory[&key])
    }

    fn read_disk(&self, id: &str, domain: Domain) -> Result<Option<DomainnessBundle>> {
        let Some(path) = self.path_for(id, domain) else {
            return Ok(None);
        };
        if !path.exists() {
            return Ok(None);
        }
        let mut tensors: HashMap<String, Tensor> = checkpoint::load(&path)?.into_iter().collect();
        let mut take = |name: &str| {
            tensors
                .remove(name)
                .ok_or_else(|| Error::format(&path, format!("bundle is missing `{name}`")))
        };
        Ok(Some(DomainnessBundle {
            domain,
            weights: take("weights")?.into_data(),
            heatmap: take("heatmap")?,
            activations: take("activations")?,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_is_injective_on_separators() {
        assert_eq!(escape_id("d1-c000-i001-f002"), "d1-c000-i001-f002");
        assert_eq!(escape_id("left/cup/a/0.ppm"), "left%2Fcup%2Fa%2F0.ppm");
        assert_eq!(escape_id(".."), "%2E.");
        assert_ne!(escape_id("a/b"), escape_id("a%2Fb"));
    }
}
