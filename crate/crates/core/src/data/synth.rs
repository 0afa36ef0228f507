//! Procedural two-domain glyph images.
//!
//! Each category is a coloured polygon or ellipse; each instance perturbs its
//! category's shape and colour; each frame jitters pose and position. The two
//! domains differ where the objects sit (translation mode) or how large they
//! appear (scale mode), and in background texture and illumination.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BBox, Dataset, Domain, LabeledImage};
use crate::error::{Error, Result};
use crate::formats::pnm::{quantize, Pnm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    /// Domain one in the left half, domain two in the right half.
    Translation,
    /// Domain one far (small), domain two close (large).
    Scale,
    /// Control: domain two holds fresh frames of domain one's instances,
    /// rendered with domain one's layout and style.
    Identical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Texture {
    Stripes,
    Checker,
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainStyle {
    pub texture: Texture,
    /// Pattern period in pixels.
    pub period: f64,
    pub amplitude: f64,
    pub tint: [f64; 3],
    /// Added after contrast scaling around mid-gray.
    pub brightness: f64,
    pub contrast: f64,
}

impl DomainStyle {
    pub fn default_one() -> Self {
        Self {
            texture: Texture::Stripes,
            period: 8.0,
            amplitude: 0.3,
            tint: [0.35, 0.45, 0.30],
            brightness: 0.0,
            contrast: 1.0,
        }
    }

    pub fn default_two() -> Self {
        Self {
            texture: Texture::Checker,
            period: 6.0,
            amplitude: 0.3,
            tint: [0.45, 0.40, 0.52],
            brightness: 0.12,
            contrast: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub mode: ShiftMode,
    pub categories: usize,
    pub instances: usize,
    /// Instances per category assigned to domain one; the rest go to domain two.
    pub instances_domain_one: usize,
    pub frames: usize,
    pub side: usize,
    pub style_one: DomainStyle,
    pub style_two: DomainStyle,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            mode: ShiftMode::Translation,
            categories: 15,
            instances: 10,
            instances_domain_one: 6,
            frames: 50,
            side: 64,
            style_one: DomainStyle::default_one(),
            style_two: DomainStyle::default_two(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.categories == 0 || self.instances == 0 || self.frames == 0 {
            return Err(Error::Config(
                "categories, instances and frames must all be positive".into(),
            ));
        }
        if self.categories < 2 {
            return Err(Error::Config("at least two categories are required".into()));
        }
        if self.instances_domain_one == 0 || self.instances_domain_one >= self.instances {
            return Err(Error::Config(format!(
                "instance split {}/{} leaves a domain without instances",
                self.instances_domain_one,
                self.instances.saturating_sub(self.instances_domain_one)
            )));
        }
        if self.side < 16 {
            return Err(Error::Config(format!("image side {} is below 16", self.side)));
        }
        Ok(())
    }

    pub fn domain_of_instance(&self, instance_in_category: usize) -> Domain {
        if instance_in_category < self.instances_domain_one {
            Domain::One
        } else {
            Domain::Two
        }
    }

    fn style(&self, d: Domain) -> &DomainStyle {
        match (self.mode, d) {
            (ShiftMode::Identical, _) | (_, Domain::One) => &self.style_one,
            (_, Domain::Two) => &self.style_two,
        }
    }
}

/// Stable 64-bit mix of a seed and a tuple of indices.
fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h = h.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Ellipse,
    Polygon { vertices: usize, star: bool },
}

/// Fixed per-category appearance.
#[derive(Clone, Copy, Debug)]
struct Glyph {
    shape: Shape,
    hue: f64,
    aspect: f64,
}

fn category_glyph(seed: u64, category: usize) -> Glyph {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, &[1, category as u64]));
    let shape = match category % 5 {
        0 => Shape::Ellipse,
        1 => Shape::Polygon { vertices: 3, star: false },
        2 => Shape::Polygon { vertices: 4, star: false },
        3 => Shape::Polygon { vertices: 6, star: false },
        _ => Shape::Polygon { vertices: 5, star: true },
    };
    // golden-ratio hue spacing keeps neighbouring categories apart
    let hue = (category as f64 * 0.618_033_988_75).fract();
    Glyph {
        shape,
        hue,
        aspect: rng.gen_range(0.7..1.0),
    }
}

/// Per-instance perturbation of a category glyph.
#[derive(Clone, Debug)]
struct InstanceStyle {
    glyph: Glyph,
    aspect: f64,
    rotation: f64,
    hue: f64,
    radius_jitter: Vec<f64>,
}

fn instance_style(seed: u64, category: usize, instance: usize) -> InstanceStyle {
    let glyph = category_glyph(seed, category);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, &[2, category as u64, instance as u64]));
    let n = match glyph.shape {
        Shape::Ellipse => 0,
        Shape::Polygon { vertices, star } => vertices * if star { 2 } else { 1 },
    };
    InstanceStyle {
        glyph,
        aspect: glyph.aspect * rng.gen_range(0.85..1.15),
        rotation: rng.gen_range(0.0..TAU),
        hue: (glyph.hue + rng.gen_range(-0.04..0.04) + 1.0).fract(),
        radius_jitter: (0..n).map(|_| rng.gen_range(0.92..1.08)).collect(),
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h * 6.0;
    let i = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Placed glyph geometry in pixel coordinates.
struct Placed {
    cx: f64,
    cy: f64,
    /// Semi-axes for ellipses, circumradius scales for polygons.
    rx: f64,
    ry: f64,
    rotation: f64,
    /// Polygon vertices, empty for ellipses.
    vertices: Vec<(f64, f64)>,
}

impl Placed {
    fn new(style: &InstanceStyle, cx: f64, cy: f64, radius: f64, rotation: f64) -> Self {
        let (rx, ry) = (radius, radius * style.aspect);
        let vertices = match style.glyph.shape {
            Shape::Ellipse => Vec::new(),
            Shape::Polygon { star, .. } => {
                let n = style.radius_jitter.len();
                (0..n)
                    .map(|k| {
                        let a = TAU * k as f64 / n as f64;
                        let r = style.radius_jitter[k] * if star && k % 2 == 1 { 0.45 } else { 1.0 };
                        let (lx, ly) = (r * rx * a.cos(), r * ry * a.sin());
                        let (s, c) = rotation.sin_cos();
                        (cx + c * lx - s * ly, cy + s * lx + c * ly)
                    })
                    .collect()
            }
        };
        Self {
            cx,
            cy,
            rx,
            ry,
            rotation,
            vertices,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        if self.vertices.is_empty() {
            let (s, c) = self.rotation.sin_cos();
            let (dx, dy) = (x - self.cx, y - self.cy);
            let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
            (lx / self.rx).powi(2) + (ly / self.ry).powi(2) <= 1.0
        } else {
            // even-odd ray casting
            let v = &self.vertices;
            let mut inside = false;
            let mut j = v.len() - 1;
            for i in 0..v.len() {
                let ((xi, yi), (xj, yj)) = (v[i], v[j]);
                if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                    inside = !inside;
                }
                j = i;
            }
            inside
        }
    }

    /// Analytic extent, clipped to the image.
    fn bbox(&self, side: usize) -> BBox {
        let (x0, y0, x1, y1) = if self.vertices.is_empty() {
            let (s, c) = self.rotation.sin_cos();
            let hx = ((self.rx * c).powi(2) + (self.ry * s).powi(2)).sqrt();
            let hy = ((self.rx * s).powi(2) + (self.ry * c).powi(2)).sqrt();
            (self.cx - hx, self.cy - hy, self.cx + hx, self.cy + hy)
        } else {
            self.vertices.iter().fold(
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
                |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
            )
        };
        let clip = |v: f64| v.clamp(0.0, side as f64) as usize;
        BBox {
            x0: clip(x0.floor()),
            y0: clip(y0.floor()),
            x1: clip(x1.ceil()),
            y1: clip(y1.ceil()),
        }
    }
}

fn texture(style: &DomainStyle, x: f64, y: f64, phase: (f64, f64)) -> f64 {
    let w = TAU / style.period;
    match style.texture {
        Texture::Stripes => (w * y + phase.0).sin(),
        Texture::Checker => (w * x + phase.0).sin().signum() * (w * y + phase.1).sin().signum(),
        Texture::Diagonal => (w * (x + y) / 2f64.sqrt() + phase.0).sin(),
    }
}

/// One rendered frame and the ground-truth glyph mask count inside its box.
pub struct Frame {
    pub pixels: Pnm,
    pub bbox: BBox,
    pub glyph_pixels: usize,
    pub glyph_pixels_in_box: usize,
}

pub fn render_frame(cfg: &SynthConfig, category: usize, instance: usize, frame: usize) -> Frame {
    let domain = cfg.domain_of_instance(instance);
    let look = match (cfg.mode, domain) {
        (ShiftMode::Identical, Domain::Two) => instance % cfg.instances_domain_one,
        _ => instance,
    };
    let style = instance_style(cfg.seed, category, look);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(
        cfg.seed,
        &[3, category as u64, instance as u64, frame as u64],
    ));
    let s = cfg.side as f64;
    let layout = if cfg.mode == ShiftMode::Identical { Domain::One } else { domain };
    let (radius, cx, cy) = match (cfg.mode, layout) {
        (ShiftMode::Scale, d) => {
            // glyph diameter as a fraction of the side
            let frac = match d {
                Domain::One => rng.gen_range(0.15..0.25),
                Domain::Two => rng.gen_range(0.55..0.75),
            };
            let r = frac * s / 2.0;
            let cx = rng.gen_range(r..=s - r);
            let cy = rng.gen_range(r..=s - r);
            (r, cx, cy)
        }
        (_, d) => {
            let r = s * rng.gen_range(0.15..0.18);
            let cx = match d {
                Domain::One => s * rng.gen_range(0.20..0.30),
                Domain::Two => s * rng.gen_range(0.70..0.80),
            };
            (r, cx, s * rng.gen_range(0.25..0.75))
        }
    };
    let rotation = style.rotation + rng.gen_range(-0.25..0.25);
    let placed = Placed::new(&style, cx, cy, radius, rotation);
    let bbox = placed.bbox(cfg.side);
    let bg_style = cfg.style(domain);
    let phase = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
    let color = hsv_to_rgb(style.hue, 0.85, 0.95);

    let n = cfg.side;
    let mut pixels = Vec::with_capacity(n * n * 3);
    let (mut glyph_pixels, mut glyph_pixels_in_box) = (0, 0);
    for py in 0..n {
        for px in 0..n {
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            let rgb = if placed.contains(x, y) {
                glyph_pixels += 1;
                if bbox.contains(x, y) {
                    glyph_pixels_in_box += 1;
                }
                color
            } else {
                let t = 1.0 + bg_style.amplitude * texture(bg_style, x, y, phase);
                bg_style.tint.map(|c| c * t)
            };
            for c in rgb {
                let v = (c - 0.5) * bg_style.contrast + 0.5 + bg_style.brightness;
                pixels.push(quantize(v as f32));
            }
        }
    }
    Frame {
        pixels: Pnm::rgb(n, n, pixels),
        bbox,
        glyph_pixels,
        glyph_pixels_in_box,
    }
}

pub fn image_id(domain: Domain, category: usize, instance: usize, frame: usize) -> String {
    format!("d{domain}-c{category:03}-i{instance:03}-f{frame:03}")
}

/// Every frame of every instance, ordered by domain, category, instance, frame.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut images = Vec::new();
    for domain in [Domain::One, Domain::Two] {
        for category in 0..cfg.categories {
            for inst in (0..cfg.instances).filter(|&i| cfg.domain_of_instance(i) == domain) {
                for frame in 0..cfg.frames {
                    let f = render_frame(cfg, category, inst, frame);
                    images.push(LabeledImage {
                        id: image_id(domain, category, inst, frame),
                        pixels: f.pixels,
                        category,
                        instance: category * cfg.instances + inst,
                        domain,
                        bbox: Some(f.bbox),
                    });
                }
            }
        }
    }
    Ok(Dataset {
        categories: cfg.categories,
        side: cfg.side,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small() -> SynthConfig {
        SynthConfig {
            categories: 4,
            instances: 5,
            instances_domain_one: 3,
            frames: 2,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn counts_follow_instance_split() {
        let d = synth_dataset(&small()).unwrap();
        assert_eq!(d.indices_of(Domain::One).len(), 4 * 3 * 2);
        assert_eq!(d.indices_of(Domain::Two).len(), 4 * 2 * 2);
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(synth_dataset(&small()).unwrap(), synth_dataset(&small()).unwrap());
        let mut other = small();
        other.seed = 1;
        assert_ne!(synth_dataset(&small()).unwrap(), synth_dataset(&other).unwrap());
    }

    #[test]
    fn instance_sets_are_disjoint() {
        let d = synth_dataset(&small()).unwrap();
        let set = |dom| -> BTreeSet<usize> {
            d.images.iter().filter(|i| i.domain == dom).map(|i| i.instance).collect()
        };
        assert!(set(Domain::One).is_disjoint(&set(Domain::Two)));
    }

    #[test]
    fn boxes_contain_the_glyph() {
        for mode in [ShiftMode::Translation, ShiftMode::Scale] {
            let cfg = SynthConfig { mode, ..small() };
            for c in 0..cfg.categories {
                for i in 0..cfg.instances {
                    let f = render_frame(&cfg, c, i, 0);
                    assert!(f.glyph_pixels > 0);
                    assert!(f.glyph_pixels_in_box as f64 >= 0.9 * f.glyph_pixels as f64);
                }
            }
        }
    }

    #[test]
    fn translation_places_domains_in_opposite_halves() {
        let cfg = small();
        let half = cfg.side / 2;
        for c in 0..cfg.categories {
            for i in 0..cfg.instances {
                let b = render_frame(&cfg, c, i, 1).bbox;
                match cfg.domain_of_instance(i) {
                    Domain::One => assert!(b.x1 <= half + 2, "{b:?}"),
                    Domain::Two => assert!(b.x0 + 2 >= half, "{b:?}"),
                }
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            SynthConfig { categories: 0, ..small() },
            SynthConfig { frames: 0, ..small() },
            SynthConfig { instances_domain_one: 5, ..small() },
            SynthConfig { side: 8, ..small() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
