//! Parameter storage. Gradients use the same layout as the parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arch::{ArchitectureSpec, ConvSpec};
use crate::error::{Error, Result};

/// Weights `[out, in, k, k]` and one bias per output channel, or for dense
/// layers weights `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Param {
    fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        let out = shape[0];
        Param {
            shape,
            w: vec![0.0; n],
            b: vec![0.0; out],
        }
    }

    fn conv(spec: &ConvSpec, in_channels: usize) -> Self {
        Self::zeros(vec![
            spec.out_channels,
            in_channels,
            spec.kernel,
            spec.kernel,
        ])
    }

    fn dense(out: usize, inp: usize) -> Self {
        Self::zeros(vec![out, inp])
    }

    /// Inputs feeding one output unit.
    pub fn fan_in(&self) -> usize {
        self.shape[1..].iter().product()
    }
}

/// One subnetwork: the S4→C5 kernels, S6→C7 kernels (applied to the fused
/// sum when C7 fuses), N8→C9 kernels (likewise at C9), then C9→F10, F10→F11
/// and F11→output.
#[derive(Clone, Debug, PartialEq)]
pub struct SubnetParams {
    pub c5: Param,
    pub c7: Param,
    pub c9: Param,
    pub f10: Param,
    pub f11: Param,
    pub out: Param,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    /// Input→C1 and S2→C3, shared by every subnetwork.
    pub c1: Param,
    pub c3: Param,
    pub subnets: Vec<SubnetParams>,
}

/// Same layout as the parameters.
pub type Gradients = NetworkState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    /// Zero-mean Gaussian weights with a fixed standard deviation.
    Gaussian { std: f64 },
    /// Zero-mean Gaussian with variance `2 / fan_in` per layer.
    He,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Gaussian { std: 0.01 }
    }
}

impl NetworkState {
    pub fn zeros(arch: &ArchitectureSpec) -> Result<Self> {
        let s = arch.shapes()?;
        let sub = SubnetParams {
            c5: Param::conv(&arch.c5, s.s4[0]),
            c7: Param::conv(&arch.c7, s.s6[0]),
            c9: Param::conv(&arch.c9, s.c7[0]),
            f10: Param::dense(arch.f10_units, s.c9_len()),
            f11: Param::dense(arch.f11_units, arch.f10_units),
            out: Param::dense(1, arch.f11_units),
        };
        Ok(NetworkState {
            c1: Param::conv(&arch.c1, s.input[0]),
            c3: Param::conv(&arch.c3, s.s2[0]),
            subnets: vec![sub; arch.subnetworks],
        })
    }

    /// Random weights, zero biases. Layers are filled in [`Self::params`]
    /// order from one seeded stream.
    pub fn init(arch: &ArchitectureSpec, scheme: InitScheme, seed: u64) -> Result<Self> {
        let mut state = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, p) in state.params_mut() {
            let std = match scheme {
                InitScheme::Gaussian { std } => std,
                InitScheme::He => (2.0 / p.fan_in() as f64).sqrt(),
            };
            let normal = Normal::new(0.0, std)
                .map_err(|e| Error::InvalidArgument(format!("init std for {name}: {e}")))?;
            for w in &mut p.w {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(state)
    }

    pub fn subnetworks(&self) -> usize {
        self.subnets.len()
    }

    /// Named parameter blocks in a fixed order: trunk first, then each
    /// subnetwork from C5 to the output.
    pub fn params(&self) -> Vec<(String, &Param)> {
        let mut v = vec![("c1".to_string(), &self.c1), ("c3".to_string(), &self.c3)];
        for (i, s) in self.subnets.iter().enumerate() {
            for (n, p) in [
                ("c5", &s.c5),
                ("c7", &s.c7),
                ("c9", &s.c9),
                ("f10", &s.f10),
                ("f11", &s.f11),
                ("out", &s.out),
            ] {
                v.push((format!("sub{i}.{n}"), p));
            }
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut v = vec![
            ("c1".to_string(), &mut self.c1),
            ("c3".to_string(), &mut self.c3),
        ];
        for (i, s) in self.subnets.iter_mut().enumerate() {
            for (n, p) in [
                ("c5", &mut s.c5),
                ("c7", &mut s.c7),
                ("c9", &mut s.c9),
                ("f10", &mut s.f10),
                ("f11", &mut s.f11),
                ("out", &mut s.out),
            ] {
                v.push((format!("sub{i}.{n}"), p));
            }
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.params()
            .iter()
            .map(|(_, p)| p.w.len() + p.b.len())
            .sum()
    }

    /// Same architecture with every value zeroed.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, p) in z.params_mut() {
            p.w.fill(0.0);
            p.b.fill(0.0);
        }
        z
    }

    pub fn is_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|(_, p)| p.w.iter().chain(&p.b).all(|x| x.is_finite()))
    }

    /// `self += s · other`; layouts must match.
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        let theirs = other.params();
        for ((_, a), (_, b)) in self.params_mut().into_iter().zip(theirs) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += s * y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += s * y;
            }
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        let a = self.params();
        let b = other.params();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|((na, pa), (nb, pb))| na == nb && pa.shape == pb.shape)
    }

    /// FNV-1a over the bit patterns of every value, in [`Self::params`]
    /// order. Equal states hash equal; used to check a network was left
    /// untouched.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, p) in self.params() {
            for x in p.w.iter().chain(&p.b) {
                for byte in x.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn max_abs(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|(_, p)| p.w.iter().chain(&p.b))
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}
