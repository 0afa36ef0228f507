//! Ingestion of `root/<domain>/<category>/<instance>/*.ppm` folders.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use loadnet_tensor::{bilinear_upsample, Tensor};

use super::{Dataset, Domain, LabeledImage};
use crate::error::{Error, Result};
use crate::formats::pnm::Pnm;

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn ppm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Resamples each channel of an RGB image to `side × side`.
pub fn resize(img: &Pnm, side: usize) -> Result<Pnm> {
    if img.width == side && img.height == side {
        return Ok(img.clone());
    }
    let t = img.to_tensor();
    let plane = img.width * img.height;
    let mut data = Vec::with_capacity(3 * side * side);
    for c in 0..3 {
        let ch = Tensor::new(&[img.height, img.width], t.data()[c * plane..(c + 1) * plane].to_vec())?;
        data.extend_from_slice(bilinear_upsample(&ch, side, side)?.data());
    }
    Pnm::from_tensor(&Tensor::new(&[3, side, side], data)?)
}

/// Loads every PPM under `root`. Domain directories are taken in name order
/// (first is domain one); category indices follow sorted category names.
pub fn load_image_dir(root: &Path, side: usize) -> Result<Dataset> {
    let domains = subdirs(root)?;
    if domains.len() != 2 {
        return Err(Error::format(
            root,
            format!("expected exactly two domain directories, found {}", domains.len()),
        ));
    }
    let mut category_names = BTreeMap::new();
    for d in &domains {
        for c in subdirs(d)? {
            category_names.insert(name(&c), 0usize);
        }
    }
    if category_names.len() < 2 {
        return Err(Error::format(root, "need at least two category directories"));
    }
    for (i, v) in category_names.values_mut().enumerate() {
        *v = i;
    }
    let mut instance_ids: BTreeMap<(usize, String), usize> = BTreeMap::new();
    let mut images = Vec::new();
    for (d, domain) in domains.iter().zip([Domain::One, Domain::Two]) {
        for cdir in subdirs(d)? {
            let category = category_names[&name(&cdir)];
            let instances = subdirs(&cdir)?;
            if instances.is_empty() {
                return Err(Error::format(&cdir, "category directory has no instance directories"));
            }
            for idir in instances {
                let next = instance_ids.len();
                let instance = *instance_ids.entry((category, name(&idir))).or_insert(next);
                let files = ppm_files(&idir)?;
                if files.is_empty() {
                    return Err(Error::format(&idir, "instance directory has no .ppm images"));
                }
                for f in files {
                    let img = Pnm::load(&f)?;
                    if img.channels != 3 {
                        return Err(Error::format(&f, "expected an RGB (P6) image"));
                    }
                    let id = f
                        .strip_prefix(root)
                        .unwrap_or(&f)
                        .to_string_lossy()
                        .replace('\\', "/");
                    images.push(LabeledImage {
                        id,
                        pixels: resize(&img, side)?,
                        category,
                        instance,
                        domain,
                        bbox: None,
                    });
                }
            }
        }
    }
    Ok(Dataset {
        categories: category_names.len(),
        side,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tree(root: &Path, images_per_instance: usize) {
        for d in ["left", "right"] {
            for c in ["cup", "pen"] {
                let dir = root.join(d).join(c).join("a");
                fs::create_dir_all(&dir).unwrap();
                for k in 0..images_per_instance {
                    Pnm::rgb(4, 3, vec![k as u8 * 40; 36]).save(&dir.join(format!("{k}.ppm"))).unwrap();
                }
            }
        }
    }

    #[test]
    fn loads_labels_from_layout() {
        let tmp = tempfile::tempdir().unwrap();
        write_tree(tmp.path(), 3);
        let d = load_image_dir(tmp.path(), 8).unwrap();
        assert_eq!(d.images.len(), 12);
        assert_eq!(d.categories, 2);
        assert_eq!(d.indices_of(Domain::One).len(), 6);
        let pen = d.images.iter().find(|i| i.id == "right/pen/a/2.ppm").unwrap();
        assert_eq!((pen.domain, pen.category), (Domain::Two, 1));
        assert_eq!((pen.pixels.width, pen.pixels.height), (8, 8));
        assert!(pen.pixels.pixels.iter().all(|&v| v == 80));
    }

    #[test]
    fn empty_category_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        write_tree(tmp.path(), 1);
        fs::create_dir_all(tmp.path().join("left/bowl")).unwrap();
        let err = load_image_dir(tmp.path(), 8).unwrap_err().to_string();
        assert!(err.contains("bowl"), "{err}");
    }

    #[test]
    fn wrong_domain_count_and_maxval_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_tree(tmp.path(), 1);
        fs::create_dir_all(tmp.path().join("third")).unwrap();
        assert!(load_image_dir(tmp.path(), 8).is_err());
        fs::remove_dir(tmp.path().join("third")).unwrap();
        fs::write(tmp.path().join("left/cup/a/0.ppm"), b"P6\n1 1\n1023\n\0\0\0\0\0\0").unwrap();
        let err = load_image_dir(tmp.path(), 8).unwrap_err().to_string();
        assert!(err.contains("maxval"), "{err}");
    }
}
