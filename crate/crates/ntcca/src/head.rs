//! Linear multi-attribute output layer trained on projected features with
//! the network frozen.
//!
//! The objective is `Σ_i C_i + γ Φ(W)`: per-attribute binary cross-entropy
//! of `sigmoid(z·W + b)` averaged over samples, plus `Φ(W) = ‖W‖²_F`.
//! Training is full-batch gradient descent from `W = 0, b = 0`. A step
//! that would raise the objective is retried at half the rate, so the
//! objective never increases.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tenscorr_core::io::{read_matrix, read_tensor, write_matrix, write_tensor};
use tenscorr_core::{DenseTensor, Mat, Matrix};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    SquaredFrobenius,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once the objective reaches this value; `None` means
    /// `1e-3 · K`.
    pub min_loss: Option<f64>,
    pub gamma: f64,
    pub regularizer: Regularizer,
    /// Train on per-feature standardized inputs and fold the scaling back
    /// into `W` and `b` afterwards. The objective (and `γ`) then apply in
    /// standardized coordinates.
    pub standardize: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            learning_rate: 0.05,
            max_iterations: 10_000,
            min_loss: None,
            gamma: 1e-3,
            regularizer: Regularizer::SquaredFrobenius,
            standardize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizationHead {
    /// `dim(z) × K`
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub config: HeadConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    LossBelowMinimum,
    IterationLimit,
    /// The rate was halved below `1e-30` without finding a non-increasing
    /// step: a stationary point to working precision.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct HeadReport {
    pub head: GeneralizationHead,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn check_shapes(z: &Mat, w: &Mat, bias: &[f64]) -> Result<()> {
    if z.cols() != w.rows() || w.cols() != bias.len() {
        return Err(Error::Shape(format!(
            "features {:?}, weights {:?}, bias {}",
            z.shape(),
            w.shape(),
            bias.len()
        )));
    }
    Ok(())
}

fn logits(z: &Mat, w: &Mat, bias: &[f64]) -> Result<Mat> {
    let mut y = z.matmul(w)?;
    let k = bias.len();
    for (i, v) in y.as_mut_slice().iter_mut().enumerate() {
        *v += bias[i % k];
    }
    Ok(y)
}

/// Objective value for the given parameters. Cross-entropy is evaluated
/// from logits, `−[y ln σ(s) + (1−y) ln(1−σ(s))] = softplus(s) − y s`.
pub fn objective(z: &Mat, labels: &Mat, w: &Mat, bias: &[f64], gamma: f64) -> Result<f64> {
    check_shapes(z, w, bias)?;
    let s = logits(z, w, bias)?;
    let n = z.rows() as f64;
    let ce: f64 = s
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .map(|(&s, &y)| softplus(s) - y * s)
        .sum::<f64>()
        / n;
    let reg: f64 = w.as_slice().iter().map(|x| x * x).sum();
    Ok(ce + gamma * reg)
}

fn gradient(z: &Mat, labels: &Mat, w: &Mat, bias: &[f64], gamma: f64) -> Result<(Mat, Vec<f64>)> {
    let s = logits(z, w, bias)?;
    let n = z.rows() as f64;
    let k = bias.len();
    let r = Matrix::from_fn(z.rows(), k, |i, j| {
        (sigmoid(s[(i, j)]) - labels[(i, j)]) / n
    });
    let mut gw = z.transpose().matmul(&r)?;
    for (g, x) in gw.as_mut_slice().iter_mut().zip(w.as_slice()) {
        *g += 2.0 * gamma * x;
    }
    let mut gb = vec![0.0; k];
    for i in 0..z.rows() {
        for (g, v) in gb.iter_mut().zip(r.row(i)) {
            *g += v;
        }
    }
    Ok((gw, gb))
}

fn standardizer(z: &Mat) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (z.rows() as f64, z.cols());
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for i in 0..z.rows() {
        for (m, v) in mean.iter_mut().zip(z.row(i)) {
            *m += v / n;
        }
    }
    for i in 0..z.rows() {
        for j in 0..d {
            sd[j] += (z[(i, j)] - mean[j]).powi(2) / n;
        }
    }
    // Constant features keep unit scale.
    let sd = sd
        .into_iter()
        .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, sd)
}

/// Trains the head on projected features `z` (`N × dim`) and 0/1 labels
/// (`N × K`).
pub fn train_generalization_head(z: &Mat, labels: &Mat, cfg: &HeadConfig) -> Result<HeadReport> {
    if z.rows() == 0 {
        return Err(Error::InvalidArgument(
            "no training samples for the head".into(),
        ));
    }
    if labels.rows() != z.rows() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} label rows",
            z.rows(),
            labels.rows()
        )));
    }
    if labels.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("head features".into()));
    }
    if !(cfg.learning_rate > 0.0 && cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need learning rate > 0 and finite γ ≥ 0, got {} and {}",
            cfg.learning_rate, cfg.gamma
        )));
    }
    let k = labels.cols();
    let min_loss = cfg.min_loss.unwrap_or(1e-3 * k as f64);
    let (mean, sd) = if cfg.standardize {
        standardizer(z)
    } else {
        (vec![0.0; z.cols()], vec![1.0; z.cols()])
    };
    let zs = Matrix::from_fn(z.rows(), z.cols(), |i, j| (z[(i, j)] - mean[j]) / sd[j]);

    let mut w = Matrix::zeros(z.cols(), k);
    let mut b = vec![0.0; k];
    let mut eta = cfg.learning_rate;
    let mut cur = objective(&zs, labels, &w, &b, cfg.gamma)?;
    let initial = cur;
    let mut t = 0;
    let stop = loop {
        if !cur.is_finite() {
            return Err(Error::NonFinite(format!("head objective at iteration {t}")));
        }
        if cur <= min_loss {
            break StopReason::LossBelowMinimum;
        }
        if t >= cfg.max_iterations {
            break StopReason::IterationLimit;
        }
        let (gw, gb) = gradient(&zs, labels, &w, &b, cfg.gamma)?;
        let accepted = loop {
            let mut w2 = w.clone();
            for (x, g) in w2.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *x -= eta * g;
            }
            let b2: Vec<f64> = b.iter().zip(&gb).map(|(x, g)| x - eta * g).collect();
            let next = objective(&zs, labels, &w2, &b2, cfg.gamma)?;
            if next <= cur {
                break Some((w2, b2, next));
            }
            eta *= 0.5;
            if eta < 1e-30 {
                break None;
            }
        };
        match accepted {
            Some((w2, b2, next)) => {
                w = w2;
                b = b2;
                cur = next;
                t += 1;
            }
            None => break StopReason::Stalled,
        }
    };

    // Fold the standardization into the returned parameters.
    for j in 0..z.cols() {
        for c in 0..k {
            w.as_mut_slice()[j * k + c] /= sd[j];
        }
    }
    for (c, bc) in b.iter_mut().enumerate() {
        for j in 0..z.cols() {
            *bc -= mean[j] * w[(j, c)];
        }
    }
    Ok(HeadReport {
        head: GeneralizationHead {
            weights: w,
            bias: b,
            config: cfg.clone(),
        },
        initial_loss: initial,
        final_loss: cur,
        iterations: t,
        stop,
    })
}

impl GeneralizationHead {
    pub fn attributes(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `sigmoid(Z·W + b)` for every row of `z`.
    pub fn probabilities(&self, z: &Mat) -> Result<Mat> {
        check_shapes(z, &self.weights, &self.bias)?;
        let mut s = logits(z, &self.weights, &self.bias)?;
        s.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok(s)
    }
}

/// Attribute decisions for one projected vector: positive when the
/// probability is at least `threshold`.
pub fn predict_attributes(
    z: &[f64],
    head: &GeneralizationHead,
    threshold: f64,
) -> Result<Vec<bool>> {
    let row = Matrix::from_vec(1, z.len(), z.to_vec())?;
    Ok(head
        .probabilities(&row)?
        .as_slice()
        .iter()
        .map(|&p| p >= threshold)
        .collect())
}

pub const HEAD_VERSION: &str = "tenscorr-ntcca-head 1";

#[derive(Serialize, Deserialize)]
struct HeadMeta {
    version: String,
    config: HeadConfig,
}

pub fn save_head(dir: impl AsRef<Path>, head: &GeneralizationHead) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = HeadMeta {
        version: HEAD_VERSION.into(),
        config: head.config.clone(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Persist {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    fs::write(dir.join("head.toml"), text)?;
    write_matrix(dir.join("weights"), &head.weights)?;
    write_tensor(
        dir.join("bias"),
        &DenseTensor::new(vec![head.bias.len()], head.bias.clone())?,
    )?;
    Ok(())
}

pub fn load_head(dir: impl AsRef<Path>) -> Result<GeneralizationHead> {
    let dir = dir.as_ref();
    let bad = |reason: String| Error::Persist {
        path: dir.display().to_string(),
        reason,
    };
    let meta: HeadMeta = toml::from_str(&fs::read_to_string(dir.join("head.toml"))?)
        .map_err(|e| bad(e.to_string()))?;
    if meta.version != HEAD_VERSION {
        return Err(bad(format!("unsupported version `{}`", meta.version)));
    }
    let weights = read_matrix(dir.join("weights"))?;
    let bias = read_tensor::<f64>(dir.join("bias"))?.into_data();
    if weights.cols() != bias.len() {
        return Err(bad(format!(
            "weights {:?} and bias of length {} disagree",
            weights.shape(),
            bias.len()
        )));
    }
    Ok(GeneralizationHead {
        weights,
        bias,
        config: meta.config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_at_zero_is_k_ln2() {
        let z = Matrix::from_fn(4, 3, |i, j| (i + j) as f64);
        let y = Matrix::from_fn(4, 2, |i, j| ((i + j) % 2) as f64);
        let v = objective(&z, &y, &Matrix::zeros(3, 2), &[0.0, 0.0], 1.0).unwrap();
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let z = Matrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y = Matrix::from_fn(5, 2, |i, j| ((i + 2 * j) % 2) as f64);
        let w = Matrix::from_fn(3, 2, |i, j| 0.1 * (i as f64) - 0.2 * (j as f64));
        let b = vec![0.3, -0.1];
        let (gw, gb) = gradient(&z, &y, &w, &b, 0.5).unwrap();
        let h = 1e-6;
        for e in 0..6 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp.as_mut_slice()[e] += h;
            wm.as_mut_slice()[e] -= h;
            let fd = (objective(&z, &y, &wp, &b, 0.5).unwrap()
                - objective(&z, &y, &wm, &b, 0.5).unwrap())
                / (2.0 * h);
            assert!((fd - gw.as_slice()[e]).abs() < 1e-8);
        }
        for c in 0..2 {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[c] += h;
            bm[c] -= h;
            let fd = (objective(&z, &y, &w, &bp, 0.5).unwrap()
                - objective(&z, &y, &w, &bm, 0.5).unwrap())
                / (2.0 * h);
            assert!((fd - gb[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn standardized_training_predicts_like_raw_coordinates() {
        let z = Matrix::from_fn(40, 2, |i, j| {
            if j == 0 {
                100.0 + i as f64
            } else {
                ((i * 13) % 7) as f64
            }
        });
        let y = Matrix::from_fn(40, 1, |i, _| (i >= 20) as u8 as f64);
        let cfg = HeadConfig {
            standardize: true,
            max_iterations: 500,
            ..HeadConfig::default()
        };
        let rep = train_generalization_head(&z, &y, &cfg).unwrap();
        let p = rep.head.probabilities(&z).unwrap();
        let correct = (0..40)
            .filter(|&i| (p[(i, 0)] >= 0.5) == (y[(i, 0)] == 1.0))
            .count();
        assert!(correct >= 38, "{correct}");
    }
}
