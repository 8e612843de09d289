//! Synthetic correlated-attribute datasets.
//!
//! Each sample draws a latent vector `z ~ N(0, I)`. Attribute `i` is
//! `1[wᵢᵀz + σε > tᵢ]` with fresh `ε ~ N(0, 1)`, so attributes that share
//! latents are correlated. The image draws one disc per latent in its own
//! grid cell; the disc's radius and brightness grow with `sigmoid(z_j)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use tenscorr_core::Matrix;
use tenscorr_mtcn::Images;

use crate::dataset::{AttributeDataset, Split};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeRule {
    pub name: String,
    pub weights: Vec<f64>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Standard deviation of additive pixel noise before clamping to [0, 1].
    pub pixel_noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub latent_dim: usize,
    pub attributes: Vec<AttributeRule>,
    /// `σ` of the label rule.
    pub label_noise: f64,
    pub render: RenderSpec,
    /// Leading fraction of samples tagged train; the rest are test.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Five attributes over three latents at 32×32×3, every attribute
    /// sharing a latent with another.
    fn default() -> Self {
        let rule = |name: &str, weights: [f64; 3], threshold: f64| AttributeRule {
            name: name.into(),
            weights: weights.to_vec(),
            threshold,
        };
        SynthSpec {
            latent_dim: 3,
            attributes: vec![
                rule("a0", [1.0, 0.0, 0.0], 0.5),
                rule("a1", [1.0, 0.5, 0.0], -0.3),
                rule("a2", [0.0, 1.0, -1.0], 0.0),
                rule("a3", [0.0, 0.0, 1.0], 0.7),
                rule("a4", [0.7, 0.0, 0.7], 0.0),
            ],
            label_noise: 0.2,
            render: RenderSpec {
                height: 32,
                width: 32,
                channels: 3,
                pixel_noise: 0.05,
            },
            train_fraction: 0.7,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("synthetic spec: {m}")));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if self.attributes.len() < 2 {
            return bad("need at least two attributes".into());
        }
        for a in &self.attributes {
            if a.weights.len() != self.latent_dim {
                return bad(format!(
                    "attribute `{}` has {} weights for {} latents",
                    a.name,
                    a.weights.len(),
                    self.latent_dim
                ));
            }
            if !a
                .weights
                .iter()
                .chain([&a.threshold])
                .all(|v| v.is_finite())
            {
                return bad(format!("attribute `{}` has a non-finite rule", a.name));
            }
        }
        let shares = |a: &AttributeRule, b: &AttributeRule| {
            a.weights
                .iter()
                .zip(&b.weights)
                .any(|(x, y)| *x != 0.0 && *y != 0.0)
        };
        let k = self.attributes.len();
        if !(0..k).any(|i| (i + 1..k).any(|j| shares(&self.attributes[i], &self.attributes[j]))) {
            return bad("no two attributes share a latent".into());
        }
        if !(self.label_noise >= 0.0 && self.label_noise.is_finite()) {
            return bad(format!(
                "label_noise {} must be finite and ≥ 0",
                self.label_noise
            ));
        }
        let r = &self.render;
        if r.height < 4 || r.width < 4 || r.channels == 0 {
            return bad(format!(
                "image {}×{}×{} too small",
                r.height, r.width, r.channels
            ));
        }
        if !(r.pixel_noise >= 0.0 && r.pixel_noise.is_finite()) {
            return bad(format!(
                "pixel_noise {} must be finite and ≥ 0",
                r.pixel_noise
            ));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return bad(format!(
                "train_fraction {} outside [0, 1]",
                self.train_fraction
            ));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws one disc per latent into `img` (`H × W × C`, channels fastest).
fn render(r: &RenderSpec, z: &[f64], img: &mut [f64]) {
    let d = z.len();
    let grid = (d as f64).sqrt().ceil() as usize;
    let (ch, cw) = (r.height as f64 / grid as f64, r.width as f64 / grid as f64);
    let max_radius = 0.5 * ch.min(cw) - 0.5;
    for (j, &zj) in z.iter().enumerate() {
        let s = sigmoid(zj);
        let (cy, cx) = (
            ((j / grid) as f64 + 0.5) * ch,
            ((j % grid) as f64 + 0.5) * cw,
        );
        let radius = max_radius * (0.25 + 0.75 * s);
        for y in 0..r.height {
            for x in 0..r.width {
                let dist = ((y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2)).sqrt();
                // One-pixel antialiased edge.
                let cover = (radius - dist + 0.5).clamp(0.0, 1.0);
                if cover == 0.0 {
                    continue;
                }
                for c in 0..r.channels {
                    let tint = if c == j % r.channels { 1.0 } else { 0.4 };
                    img[(y * r.width + x) * r.channels + c] += cover * s * tint;
                }
            }
        }
    }
}

/// `n` samples from `spec`; identical for identical specs.
pub fn generate_synthetic(spec: &SynthSpec, n: usize) -> Result<AttributeDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Invalid("synthetic dataset needs n ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let r = &spec.render;
    let per = r.height * r.width * r.channels;
    let k = spec.attributes.len();
    let mut pixels = vec![0.0; n * per];
    let mut labels = Vec::with_capacity(n * k);
    for i in 0..n {
        let z: Vec<f64> = (0..spec.latent_dim).map(|_| normal()).collect();
        for a in &spec.attributes {
            let s: f64 = a.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>()
                + spec.label_noise * normal();
            labels.push((s > a.threshold) as u8 as f64);
        }
        let img = &mut pixels[i * per..(i + 1) * per];
        render(r, &z, img);
        for p in img.iter_mut() {
            *p = (*p + r.pixel_noise * normal()).clamp(0.0, 1.0);
        }
    }
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    let splits = (0..n)
        .map(|i| {
            if i < n_train {
                Split::Train
            } else {
                Split::Test
            }
        })
        .collect();
    let width = n.to_string().len();
    AttributeDataset::new(
        (0..n).map(|i| format!("s{i:0width$}")).collect(),
        Images::new(n, r.height, r.width, r.channels, pixels)?,
        Matrix::from_vec(n, k, labels)?,
        spec.attributes.iter().map(|a| a.name.clone()).collect(),
        splits,
    )
}
