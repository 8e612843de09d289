//! Layer configuration and forward shape inference.
//!
//! Layer names follow the network diagram: C1, S2, C3, S4 form the shared
//! trunk; every subnetwork owns C5, S6, C7, N8, C9, F10, F11 and a single
//! sigmoid output. An S layer is max pooling followed by local response
//! normalization; N8 is normalization alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Max pooling. Padded cells never win the max.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Cross-channel local response normalization:
/// `y_c = x_c · (k + α/n · Σ_{c' near c} x_{c'}²)^{-β}` with `n = local_size`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrnSpec {
    pub local_size: usize,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub k: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionLayer {
    C7,
    C9,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    /// One subnetwork per attribute.
    pub subnetworks: usize,
    pub c1: ConvSpec,
    pub s2_pool: PoolSpec,
    pub s2_norm: LrnSpec,
    pub c3: ConvSpec,
    pub s4_pool: PoolSpec,
    pub s4_norm: LrnSpec,
    pub c5: ConvSpec,
    pub s6_pool: PoolSpec,
    pub s6_norm: LrnSpec,
    pub c7: ConvSpec,
    pub n8_norm: LrnSpec,
    pub c9: ConvSpec,
    pub f10_units: usize,
    pub f11_units: usize,
    /// Drop probability applied after the F10 and F11 activations in
    /// training mode.
    pub dropout: f64,
    /// Layers whose input is the sum of the previous-layer maps of every
    /// subnetwork. At C7 the summed maps are the S6 outputs (after their
    /// normalization); at C9 they are the N8 outputs.
    pub fusion: Vec<FusionLayer>,
}

/// Channel-height-width extents of one activation.
pub type Chw = [usize; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Shapes {
    pub input: Chw,
    pub c1: Chw,
    pub s2: Chw,
    pub c3: Chw,
    pub s4: Chw,
    pub c5: Chw,
    pub s6: Chw,
    pub c7: Chw,
    pub c9: Chw,
}

impl Shapes {
    /// Side length κ of one C9 map.
    pub fn kappa(&self) -> usize {
        self.c9[1]
    }

    /// Number L of C9 maps per subnetwork.
    pub fn maps(&self) -> usize {
        self.c9[0]
    }

    pub fn c9_len(&self) -> usize {
        self.c9.iter().product()
    }
}

fn conv_out(layer: &str, input: Chw, c: &ConvSpec) -> Result<Chw> {
    if c.kernel == 0 || c.stride == 0 || c.out_channels == 0 {
        return Err(Error::Arch(format!(
            "{layer}: kernel, stride and channels must be positive"
        )));
    }
    let mut out = [c.out_channels, 0, 0];
    for d in 0..2 {
        let padded = input[d + 1] + 2 * c.pad;
        if padded < c.kernel {
            return Err(Error::Arch(format!(
                "{layer}: kernel {} exceeds padded input extent {padded}",
                c.kernel
            )));
        }
        out[d + 1] = (padded - c.kernel) / c.stride + 1;
    }
    Ok(out)
}

fn pool_out(layer: &str, input: Chw, p: &PoolSpec) -> Result<Chw> {
    if p.kernel == 0 || p.stride == 0 {
        return Err(Error::Arch(format!(
            "{layer}: kernel and stride must be positive"
        )));
    }
    if p.pad >= p.kernel {
        return Err(Error::Arch(format!(
            "{layer}: pad {} must be smaller than kernel {}",
            p.pad, p.kernel
        )));
    }
    let as_conv = ConvSpec {
        out_channels: input[0],
        kernel: p.kernel,
        stride: p.stride,
        pad: p.pad,
    };
    conv_out(layer, input, &as_conv)
}

fn check_lrn(layer: &str, n: &LrnSpec) -> Result<()> {
    if n.local_size == 0 || n.local_size % 2 == 0 {
        return Err(Error::Arch(format!("{layer}: local_size must be odd")));
    }
    if !(n.k > 0.0 && n.alpha >= 0.0 && n.beta >= 0.0) {
        return Err(Error::Arch(format!(
            "{layer}: need k > 0, alpha >= 0, beta >= 0"
        )));
    }
    Ok(())
}

impl ArchitectureSpec {
    /// Forward shape inference; fails on the first layer that does not fit.
    pub fn shapes(&self) -> Result<Shapes> {
        if self.subnetworks == 0 {
            return Err(Error::Arch("at least one subnetwork is required".into()));
        }
        if self.input_height == 0 || self.input_width == 0 || self.input_channels == 0 {
            return Err(Error::Arch("input extents must be positive".into()));
        }
        if self.f10_units == 0 || self.f11_units == 0 {
            return Err(Error::Arch(
                "fully-connected widths must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Arch(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        for (i, f) in self.fusion.iter().enumerate() {
            if self.fusion[..i].contains(f) {
                return Err(Error::Arch(format!("fusion layer {f:?} listed twice")));
            }
        }
        for (name, n) in [
            ("S2", &self.s2_norm),
            ("S4", &self.s4_norm),
            ("S6", &self.s6_norm),
            ("N8", &self.n8_norm),
        ] {
            check_lrn(name, n)?;
        }
        let input = [self.input_channels, self.input_height, self.input_width];
        let c1 = conv_out("C1", input, &self.c1)?;
        let s2 = pool_out("S2", c1, &self.s2_pool)?;
        let c3 = conv_out("C3", s2, &self.c3)?;
        let s4 = pool_out("S4", c3, &self.s4_pool)?;
        let c5 = conv_out("C5", s4, &self.c5)?;
        let s6 = pool_out("S6", c5, &self.s6_pool)?;
        let c7 = conv_out("C7", s6, &self.c7)?;
        let c9 = conv_out("C9", c7, &self.c9)?;
        if c9[1] != c9[2] {
            return Err(Error::Arch(format!(
                "C9 maps must be square, got {}x{}",
                c9[1], c9[2]
            )));
        }
        Ok(Shapes {
            input,
            c1,
            s2,
            c3,
            s4,
            c5,
            s6,
            c7,
            c9,
        })
    }

    pub fn fuses(&self, layer: FusionLayer) -> bool {
        self.fusion.contains(&layer)
    }

    /// Full-scale layer parameters: 224×224 RGB input, F10/F11 with 4098
    /// units, fusion at C7 and C9.
    pub fn full_scale(subnetworks: usize) -> Self {
        let norm = |alpha| LrnSpec {
            local_size: 5,
            alpha,
            beta: 0.75,
            k: 1.0,
        };
        let pool = PoolSpec {
            kernel: 3,
            stride: 2,
            pad: 0,
        };
        let conv = |out_channels, kernel, stride, pad| ConvSpec {
            out_channels,
            kernel,
            stride,
            pad,
        };
        ArchitectureSpec {
            input_height: 224,
            input_width: 224,
            input_channels: 3,
            subnetworks,
            c1: conv(96, 5, 2, 0),
            s2_pool: pool,
            s2_norm: norm(0.1),
            c3: conv(256, 3, 1, 0),
            s4_pool: pool,
            s4_norm: norm(0.1),
            c5: conv(384, 3, 1, 1),
            s6_pool: pool,
            s6_norm: norm(0.1),
            c7: conv(384, 3, 1, 0),
            n8_norm: norm(0.01),
            c9: conv(256, 3, 1, 0),
            f10_units: 4098,
            f11_units: 4098,
            dropout: 0.5,
            fusion: vec![FusionLayer::C7, FusionLayer::C9],
        }
    }

    /// Desk-scale network: 32×32×3 input, five subnetworks, channel counts
    /// one eighth of full scale, 128-unit fully-connected layers. Pads keep
    /// the chain consistent down to 2×2 C9 maps.
    pub fn desk() -> Self {
        let full = Self::full_scale(5);
        let pool = PoolSpec {
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let conv = |out_channels, kernel, stride| ConvSpec {
            out_channels,
            kernel,
            stride,
            pad: kernel / 2,
        };
        ArchitectureSpec {
            input_height: 32,
            input_width: 32,
            c1: conv(12, 5, 2),
            s2_pool: pool,
            c3: conv(32, 3, 1),
            s4_pool: pool,
            c5: conv(48, 3, 1),
            s6_pool: pool,
            c7: conv(48, 3, 1),
            c9: conv(32, 3, 1),
            f10_units: 128,
            f11_units: 128,
            ..full
        }
    }

    /// Small network for finite-difference checks: 16×16×3 input, three
    /// subnetworks, unit C1 stride so C9 maps stay 2×2, no dropout.
    pub fn toy() -> Self {
        let desk = Self::desk();
        let conv = |out_channels, kernel, stride| ConvSpec {
            out_channels,
            kernel,
            stride,
            pad: kernel / 2,
        };
        ArchitectureSpec {
            input_height: 16,
            input_width: 16,
            subnetworks: 3,
            c1: conv(4, 5, 1),
            c3: conv(5, 3, 1),
            c5: conv(6, 3, 1),
            c7: conv(6, 3, 1),
            c9: conv(4, 3, 1),
            f10_units: 8,
            f11_units: 6,
            dropout: 0.0,
            ..desk
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Arch(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let a: Self = toml::from_str(text).map_err(|e| Error::Arch(e.to_string()))?;
        a.shapes()?;
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_chain() {
        let s = ArchitectureSpec::desk().shapes().unwrap();
        assert_eq!(s.c1, [12, 16, 16]);
        assert_eq!(s.s2, [12, 8, 8]);
        assert_eq!(s.s4, [32, 4, 4]);
        assert_eq!(s.s6, [48, 2, 2]);
        assert_eq!(s.c9, [32, 2, 2]);
        assert_eq!((s.kappa(), s.maps()), (2, 32));
    }

    #[test]
    fn full_scale_chain_is_consistent() {
        let s = ArchitectureSpec::full_scale(40).shapes().unwrap();
        assert_eq!(s.c1, [96, 110, 110]);
        assert_eq!(s.maps(), 256);
    }

    #[test]
    fn toy_chain() {
        let s = ArchitectureSpec::toy().shapes().unwrap();
        assert_eq!(s.s2, [4, 8, 8]);
        assert_eq!(s.c9, [4, 2, 2]);
    }

    #[test]
    fn rejects_oversized_kernel() {
        let mut a = ArchitectureSpec::toy();
        a.c9.kernel = 7;
        a.c9.pad = 0;
        assert!(matches!(a.shapes(), Err(Error::Arch(m)) if m.starts_with("C9")));
    }

    #[test]
    fn rejects_duplicate_fusion() {
        let mut a = ArchitectureSpec::toy();
        a.fusion = vec![FusionLayer::C9, FusionLayer::C9];
        assert!(a.shapes().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let a = ArchitectureSpec::desk();
        assert_eq!(
            ArchitectureSpec::from_toml(&a.to_toml().unwrap()).unwrap(),
            a
        );
    }
}
