//! Map export: max-normalised grayscale PGM plus a 50% overlay PPM.

use std::path::Path;

use loadnet_tensor::{bilinear_upsample, Tensor};

use crate::error::{Error, Result};
use crate::formats::pnm::{quantize, Pnm};

/// `map / max(map)`, or all zeros when the map has no positive entry.
pub fn normalize(map: &Tensor) -> Tensor {
    let max = map.data().iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        map.map(|v| v / max)
    } else {
        map.map(|_| 0.0)
    }
}

/// Grayscale map at image resolution and the overlay
/// `0.5 · (image + m · (1 - image))`, i.e. half-intensity blend toward white
/// in proportion to the map.
pub fn render(map: &Tensor, image: &Pnm) -> Result<(Pnm, Pnm)> {
    if map.data().iter().any(|v| *v < 0.0) {
        return Err(Error::Data("domainness maps must be nonnegative".into()));
    }
    if image.channels != 3 {
        return Err(Error::Data("overlay base must be an RGB image".into()));
    }
    let up = bilinear_upsample(&normalize(map), image.height, image.width)?;
    let gray = Pnm::gray(image.width, image.height, up.data().iter().map(|m| quantize(*m)).collect());
    let overlay = image
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let m = up.data()[i / 3];
            let x = p as f32 / 255.0;
            quantize(0.5 * (x + m * (1.0 - x)))
        })
        .collect();
    Ok((gray, Pnm::rgb(image.width, image.height, overlay)))
}

pub fn render_map(map: &Tensor, image: &Pnm, pgm_path: &Path, ppm_path: &Path) -> Result<()> {
    let (gray, overlay) = render(map, image)?;
    gray.save(pgm_path)?;
    overlay.save(ppm_path)
}
