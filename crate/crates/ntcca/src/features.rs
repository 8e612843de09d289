//! Per-image feature tensors and their grouping into views.

use serde::{Deserialize, Serialize};
use tenscorr_core::{DenseTensor, Mat, Matrix, Tensor};

use crate::error::{Error, Result};

/// Largest supported number of views. The covariance tensor has order
/// equal to the number of views.
pub const MAX_GROUPS: usize = 8;

/// The `K·L` C9 maps of one image stacked into a `(κ, κ, K·L)` tensor.
/// Map `l` of subnetwork `k` (both 0-based) is slice `k·L + l` of the third
/// mode.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    tensor: Tensor,
    subnetworks: usize,
    maps: usize,
}

impl FeatureTensor {
    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn subnetworks(&self) -> usize {
        self.subnetworks
    }

    /// Maps per subnetwork, `L`.
    pub fn maps(&self) -> usize {
        self.maps
    }

    pub fn kappa(&self) -> usize {
        self.tensor.shape()[0]
    }

    /// Map `p` (0-based, subnetwork-major) as a `κ × κ` matrix.
    pub fn map(&self, p: usize) -> Mat {
        let k = self.kappa();
        let total = self.subnetworks * self.maps;
        Matrix::from_fn(k, k, |a, b| self.tensor.data()[(a * k + b) * total + p])
    }

    pub fn is_zero(&self) -> bool {
        self.tensor.data().iter().all(|&v| v == 0.0)
    }
}

/// Stacks per-subnetwork `(L, κ, κ)` map tensors, subnetwork-major.
pub fn build_feature_tensor(maps: &[Tensor]) -> Result<FeatureTensor> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("no subnetwork maps".into()))?;
    let shape = first.shape().to_vec();
    if shape.len() != 3 || shape[1] != shape[2] {
        return Err(Error::Shape(format!(
            "subnetwork maps must be (L, κ, κ), got {shape:?}"
        )));
    }
    if let Some((i, m)) = maps
        .iter()
        .enumerate()
        .find(|(_, m)| m.shape() != shape.as_slice())
    {
        return Err(Error::Shape(format!(
            "ragged maps: subnetwork {i} has shape {:?}, subnetwork 0 has {shape:?}",
            m.shape()
        )));
    }
    let (l, kappa) = (shape[0], shape[1]);
    let total = maps.len() * l;
    let mut data = vec![0.0; kappa * kappa * total];
    for (k, m) in maps.iter().enumerate() {
        for li in 0..l {
            let p = k * l + li;
            for cell in 0..kappa * kappa {
                data[cell * total + p] = m.data()[li * kappa * kappa + cell];
            }
        }
    }
    Ok(FeatureTensor {
        tensor: DenseTensor::new(vec![kappa, kappa, total], data)?,
        subnetworks: maps.len(),
        maps: l,
    })
}

/// Assignment of the `K·L` maps to views. A view's data for one image is
/// the average of its member maps; a map may belong to several views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub groups: Vec<Vec<usize>>,
}

impl Grouping {
    /// One view per subnetwork, averaging its `L` maps.
    pub fn by_subnetwork(subnetworks: usize, maps: usize) -> Self {
        Grouping {
            groups: (0..subnetworks)
                .map(|k| (k * maps..(k + 1) * maps).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn validate(&self, total_maps: usize) -> Result<()> {
        if self.groups.len() < 2 || self.groups.len() > MAX_GROUPS {
            return Err(Error::InvalidArgument(format!(
                "{} views requested; between 2 and {MAX_GROUPS} are supported",
                self.groups.len()
            )));
        }
        for (g, members) in self.groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidArgument(format!("view {g} has no maps")));
            }
            if let Some(&p) = members.iter().find(|&&p| p >= total_maps) {
                return Err(Error::InvalidArgument(format!(
                    "view {g} names map {p}, but only {total_maps} exist"
                )));
            }
        }
        Ok(())
    }

    /// The `κ × κ` view matrices of one image; the `κ` columns are that
    /// view's samples.
    pub fn views(&self, f: &FeatureTensor) -> Result<Vec<Mat>> {
        self.validate(f.subnetworks() * f.maps())?;
        Ok(self
            .groups
            .iter()
            .map(|members| {
                let mut acc = Matrix::zeros(f.kappa(), f.kappa());
                for &p in members {
                    let m = f.map(p);
                    for (a, v) in acc.as_mut_slice().iter_mut().zip(m.as_slice()) {
                        *a += v;
                    }
                }
                acc.scale(1.0 / members.len() as f64);
                acc
            })
            .collect())
    }
}
