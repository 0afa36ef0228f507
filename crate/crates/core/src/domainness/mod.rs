//! Gradient-weighted domainness maps from a trained domain discriminator.
//!
//! For trunk output `F` (`N` maps of `u × v`) and domain score `y^c`:
//!
//! ```text
//! w_n = 1/(u v) · Σ_ij ∂y^c/∂F^n_ij
//! H   = ReLU(Σ_n w_n F^n)             heatmap
//! W_n = ReLU(w_n F^n)                  per-map activations
//! ```
//!
//! The discriminator has one logit `z` favouring domain one, so the two
//! scores are `y^1 = s(z)` and `y^2 = -s(z)` (logit) or `1 - σ(z)`
//! (probability); either way `w^2 = -w^1`.

pub mod cache;
pub mod render;

use loadnet_tensor::{Graph, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::nets::{Discriminator, FrozenMask};

pub use cache::DomainnessCache;
pub use render::render_map;

/// Which discriminator output is differentiated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionScore {
    /// The pre-sigmoid logit; attributions scale linearly with the head.
    #[default]
    Logit,
    /// The sigmoid probability.
    Probability,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainnessBundle<T: Scalar = f32> {
    /// Domain the maps are attributed to.
    pub domain: Domain,
    /// `w`, one entry per map.
    pub weights: Vec<T>,
    /// `H`, `[u, v]`.
    pub heatmap: Tensor<T>,
    /// `W`, `[N, u, v]`.
    pub activations: Tensor<T>,
}

fn feature_dims<T: Scalar>(features: &Tensor<T>) -> Result<(usize, usize)> {
    match features.dims() {
        &[n, u, v] => Ok((n, u * v)),
        d => Err(Error::Data(format!("trunk output must be [N, u, v], found {d:?}"))),
    }
}

/// `w^c` for trunk output `features` (`[N, u, v]`), where `score` maps a
/// `[1, N, u, v]` graph variable to the scalar `y^1`.
pub fn gradcam_weights<T, S>(features: &Tensor<T>, c: Domain, score: S) -> Result<Vec<T>>
where
    T: Scalar,
    S: Fn(&mut Graph<T>, Var) -> loadnet_tensor::Result<Var>,
{
    let (n, plane) = feature_dims(features)?;
    let mut dims = vec![1];
    dims.extend_from_slice(features.dims());
    let mut g = Graph::new();
    let f = g.param(features.clone().reshape(&dims)?);
    let y = score(&mut g, f)?;
    let grads = g.backward(y)?;
    let z = T::from_usize(plane).unwrap();
    let sign = match c {
        Domain::One => T::one(),
        Domain::Two => -T::one(),
    };
    Ok(match grads.get(f) {
        Some(grad) => grad
            .data()
            .chunks(plane)
            .map(|m| sign * m.iter().copied().sum::<T>() / z)
            .collect(),
        None => vec![T::zero(); n],
    })
}

/// `ReLU(Σ_n w_n F^n)`, `[u, v]`.
pub fn heatmap<T: Scalar>(weights: &[T], features: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, plane) = feature_dims(features)?;
    check_weights(weights, n)?;
    let mut acc = vec![T::zero(); plane];
    for (w, map) in weights.iter().zip(features.data().chunks(plane)) {
        for (a, f) in acc.iter_mut().zip(map) {
            *a += *w * *f;
        }
    }
    let data = acc.into_iter().map(|v| v.max(T::zero())).collect();
    Ok(Tensor::new(&features.dims()[1..], data)?)
}

/// `ReLU(w_n F^n)` for every map, `[N, u, v]`.
pub fn per_map_activations<T: Scalar>(weights: &[T], features: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, plane) = feature_dims(features)?;
    check_weights(weights, n)?;
    let data = features
        .data()
        .chunks(plane)
        .zip(weights)
        .flat_map(|(map, w)| map.iter().map(move |f| (*w * *f).max(T::zero())))
        .collect();
    Ok(Tensor::new(features.dims(), data)?)
}

fn check_weights<T>(weights: &[T], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Data(format!("{} weights for {n} feature maps", weights.len())));
    }
    Ok(())
}

/// The complete bundle for an arbitrary score function.
pub fn bundle_with<T, S>(features: &Tensor<T>, c: Domain, score: S) -> Result<DomainnessBundle<T>>
where
    T: Scalar,
    S: Fn(&mut Graph<T>, Var) -> loadnet_tensor::Result<Var>,
{
    let weights = gradcam_weights(features, c, score)?;
    Ok(DomainnessBundle {
        domain: c,
        heatmap: heatmap(&weights, features)?,
        activations: per_map_activations(&weights, features)?,
        weights,
    })
}

/// Discriminator score `y^1` as a graph function of the trunk output.
pub fn discriminator_score<'a, T: Scalar>(
    disc: &'a Discriminator<T>,
    kind: AttributionScore,
) -> impl Fn(&mut Graph<T>, Var) -> loadnet_tensor::Result<Var> + 'a {
    move |g, f| {
        let frozen = FrozenMask::from_names(disc.params.names());
        let bound = disc.params.bind(g, &frozen);
        let z = Discriminator::head(g, &bound, f)?;
        let y = match kind {
            AttributionScore::Logit => z,
            AttributionScore::Probability => g.sigmoid(z)?,
        };
        g.sum(y)
    }
}

/// Bundle attributed to domain `c` for one trunk output `[N, u, v]`.
pub fn bundle<T: Scalar>(
    disc: &Discriminator<T>,
    features: &Tensor<T>,
    c: Domain,
    kind: AttributionScore,
) -> Result<DomainnessBundle<T>> {
    let u = disc.trunk.out_side()?;
    let expected = [disc.trunk.maps(), u, u];
    if features.dims() != expected {
        return Err(Error::Data(format!(
            "trunk output has dims {:?}, discriminator expects {expected:?}",
            features.dims()
        )));
    }
    bundle_with(features, c, discriminator_score(disc, kind))
}

/// The domain-generic bundle of an image from `own` domain: attributed to the
/// other domain. The same-domain bundle is the domain-specific one.
pub fn domain_generic_bundle<T: Scalar>(
    disc: &Discriminator<T>,
    features: &Tensor<T>,
    own: Domain,
    kind: AttributionScore,
) -> Result<DomainnessBundle<T>> {
    bundle(disc, features, own.other(), kind)
}

/// Intensity-weighted centre of a `[u, v]` map in pixel coordinates of a
/// `side × side` image, or `None` for an all-zero map.
pub fn center_of_mass(map: &Tensor, side: usize) -> Option<(f64, f64)> {
    let [u, v] = map.dims() else { return None };
    let (u, v) = (*u, *v);
    let total: f64 = map.data().iter().map(|&x| x as f64).sum();
    if total <= 0.0 {
        return None;
    }
    let (mut sy, mut sx) = (0.0, 0.0);
    for (i, &m) in map.data().iter().enumerate() {
        sy += (i / v) as f64 * m as f64;
        sx += (i % v) as f64 * m as f64;
    }
    // corner-aligned: map cell 0 sits on pixel centre 0.5, cell u-1 on side-0.5
    let to_px = |c: f64, extent: usize| {
        if extent == 1 {
            side as f64 / 2.0
        } else {
            0.5 + c * (side as f64 - 1.0) / (extent - 1) as f64
        }
    };
    Some((to_px(sx / total, v), to_px(sy / total, u)))
}
