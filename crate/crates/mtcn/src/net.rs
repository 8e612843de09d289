//! Forward pass, loss and backpropagation.
//!
//! Samples are independent, so batches fan out over fixed chunks of
//! [`CHUNK`] samples; per-chunk gradients are summed in chunk order, which
//! keeps results bit-identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tenscorr_core::{DenseTensor, Mat, Matrix, Tensor};

use crate::arch::{ArchitectureSpec, Chw, FusionLayer, LrnSpec, PoolSpec, Shapes};
use crate::error::{Error, Result};
use crate::layers::*;
use crate::state::{Gradients, NetworkState, Param};

pub const CHUNK: usize = 4;

/// Probabilities are clamped into `[PROB_FLOOR, 1 − PROB_FLOOR]` inside
/// the logarithms of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// `count` images of `height × width × channels`, channels fastest, values
/// in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Images {
    count: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Images {
    pub fn new(
        count: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let per = height * width * channels;
        if count == 0 || per == 0 {
            return Err(Error::InvalidArgument(
                "images need positive count and extents".into(),
            ));
        }
        if data.len() != count * per {
            return Err(Error::Shape {
                what: "image payload".into(),
                expected: vec![count, height, width, channels],
                got: vec![data.len()],
            });
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel {} of image {} is {} (expected a value in [0, 1])",
                i % per,
                i / per,
                data[i]
            )));
        }
        Ok(Images {
            count,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn pixels_per_image(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let per = self.pixels_per_image();
        &self.data[i * per..(i + 1) * per]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Images at the given positions, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.pixels_per_image());
        for &i in idx {
            if i >= self.count {
                return Err(Error::InvalidArgument(format!(
                    "image index {i} out of range {}",
                    self.count
                )));
            }
            data.extend_from_slice(self.image(i));
        }
        Images::new(idx.len(), self.height, self.width, self.channels, data)
    }
}

/// Images with one binary label per attribute (`N × K` matrix of 0/1).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Images,
    pub labels: Mat,
}

impl Batch {
    pub fn new(images: Images, labels: Mat) -> Result<Self> {
        if labels.rows() != images.count() {
            return Err(Error::Shape {
                what: "labels".into(),
                expected: vec![images.count()],
                got: vec![labels.rows()],
            });
        }
        if labels.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        Ok(Batch { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn attributes(&self) -> usize {
        self.labels.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let k = self.attributes();
        let mut lab = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            lab.extend_from_slice(self.labels.row(i));
        }
        Batch::new(
            self.images.select(idx)?,
            Matrix::from_vec(idx.len(), k, lab)?,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; sample `i` of the batch draws its masks from a
    /// stream derived from `(seed, i)`.
    Train {
        seed: u64,
    },
    Eval,
}

struct SCache {
    arg: Vec<usize>,
    pooled: Vec<f64>,
    scale: Vec<f64>,
    out: Vec<f64>,
}

struct TrunkCache {
    c1_cols: Vec<f64>,
    c1: Vec<f64>,
    s2: SCache,
    c3_cols: Vec<f64>,
    c3: Vec<f64>,
    s4: SCache,
    /// Patch matrix of the S4 output; every subnetwork's C5 reads it.
    c5_cols: Vec<f64>,
}

struct SubCache {
    c5: Vec<f64>,
    s6: SCache,
    c7_cols: Option<Vec<f64>>,
    c7: Vec<f64>,
    n8_scale: Vec<f64>,
    n8: Vec<f64>,
    c9_cols: Option<Vec<f64>>,
    c9: Vec<f64>,
    f10: Vec<f64>,
    f10_mask: Option<Vec<f64>>,
    f10_out: Vec<f64>,
    f11: Vec<f64>,
    f11_mask: Option<Vec<f64>>,
    f11_out: Vec<f64>,
    logit: f64,
    p: f64,
}

struct SampleCache {
    trunk: TrunkCache,
    /// Patch matrices of the fused sums, when that layer fuses.
    c7_fused_cols: Option<Vec<f64>>,
    c9_fused_cols: Option<Vec<f64>>,
    subs: Vec<SubCache>,
}

/// Activations of a batch forward pass, consumed by [`backward`].
pub struct Cache {
    samples: Vec<SampleCache>,
    checksum: u64,
}

pub struct Forward {
    /// `N × K` sigmoid outputs.
    pub probabilities: Mat,
    /// `N × K` pre-sigmoid outputs.
    pub logits: Mat,
    pub cache: Cache,
}

impl Forward {
    /// Post-activation C9 maps of sample `n`, one `(L, κ, κ)` tensor per
    /// subnetwork.
    pub fn c9_maps(&self, arch: &ArchitectureSpec, n: usize) -> Result<Vec<Tensor>> {
        let s = arch.shapes()?;
        self.cache.samples[n]
            .subs
            .iter()
            .map(|c| Ok(DenseTensor::new(s.c9.to_vec(), c.c9.clone())?))
            .collect()
    }
}

fn finite(layer: &str, sub: Option<usize>, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        return Ok(());
    }
    Err(Error::NonFinite(match sub {
        Some(i) => format!("layer {layer} of subnetwork {i}"),
        None => format!("layer {layer}"),
    }))
}

fn positions(s: Chw) -> usize {
    s[1] * s[2]
}

fn hwc_to_chw(x: &[f64], shape: Chw) -> Vec<f64> {
    let [c, h, w] = shape;
    let mut out = vec![0.0; x.len()];
    for y in 0..h {
        for xx in 0..w {
            for ch in 0..c {
                out[(ch * h + y) * w + xx] = x[(y * w + xx) * c + ch];
            }
        }
    }
    out
}

fn s_forward(x: &[f64], in_shape: Chw, pool: &PoolSpec, norm: &LrnSpec, out_shape: Chw) -> SCache {
    let (pooled, arg) = maxpool_forward(x, in_shape, pool, out_shape);
    let (out, scale) = lrn_forward(&pooled, out_shape, norm);
    SCache {
        arg,
        pooled,
        scale,
        out,
    }
}

fn s_backward(
    dy: &[f64],
    c: &SCache,
    input_len: usize,
    out_shape: Chw,
    norm: &LrnSpec,
) -> Vec<f64> {
    let dp = lrn_backward(dy, &c.pooled, &c.out, &c.scale, out_shape, norm);
    maxpool_backward(&dp, &c.arg, input_len)
}

fn conv(cols: &[f64], p: &Param, out: Chw) -> Vec<f64> {
    conv_forward(cols, &p.w, &p.b, positions(out))
}

fn sum_maps<'a>(maps: impl Iterator<Item = &'a Vec<f64>>, len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for m in maps {
        for (a, v) in acc.iter_mut().zip(m) {
            *a += v;
        }
    }
    acc
}

fn dropout(x: &[f64], rate: f64, rng: Option<&mut ChaCha8Rng>) -> (Option<Vec<f64>>, Vec<f64>) {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            let mask: Vec<f64> = x
                .iter()
                .map(|_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect();
            let out = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
            (Some(mask), out)
        }
        _ => (None, x.to_vec()),
    }
}

fn sample_seed(seed: u64, i: usize) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn forward_sample(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    sh: &Shapes,
    image: &[f64],
    dropout_seed: Option<u64>,
) -> Result<SampleCache> {
    let x = hwc_to_chw(image, sh.input);
    let c1_cols = im2col(&x, sh.input, &arch.c1, sh.c1);
    let mut c1 = conv(&c1_cols, &state.c1, sh.c1);
    relu_inplace(&mut c1);
    finite("C1", None, &c1)?;
    let s2 = s_forward(&c1, sh.c1, &arch.s2_pool, &arch.s2_norm, sh.s2);
    finite("S2", None, &s2.out)?;
    let c3_cols = im2col(&s2.out, sh.s2, &arch.c3, sh.c3);
    let mut c3 = conv(&c3_cols, &state.c3, sh.c3);
    relu_inplace(&mut c3);
    finite("C3", None, &c3)?;
    let s4 = s_forward(&c3, sh.c3, &arch.s4_pool, &arch.s4_norm, sh.s4);
    finite("S4", None, &s4.out)?;
    let c5_cols = im2col(&s4.out, sh.s4, &arch.c5, sh.c5);

    let k = state.subnetworks();
    let mut c5s = Vec::with_capacity(k);
    let mut s6s = Vec::with_capacity(k);
    for (i, sp) in state.subnets.iter().enumerate() {
        let mut c5 = conv(&c5_cols, &sp.c5, sh.c5);
        relu_inplace(&mut c5);
        finite("C5", Some(i), &c5)?;
        let s6 = s_forward(&c5, sh.c5, &arch.s6_pool, &arch.s6_norm, sh.s6);
        finite("S6", Some(i), &s6.out)?;
        c5s.push(c5);
        s6s.push(s6);
    }

    let s6_len: usize = sh.s6.iter().product();
    let c7_fused_cols = arch.fuses(FusionLayer::C7).then(|| {
        let sum = sum_maps(s6s.iter().map(|s| &s.out), s6_len);
        im2col(&sum, sh.s6, &arch.c7, sh.c7)
    });
    let mut c7s = Vec::with_capacity(k);
    let mut c7_own = Vec::with_capacity(k);
    let mut n8s = Vec::with_capacity(k);
    for (i, sp) in state.subnets.iter().enumerate() {
        let own = match c7_fused_cols {
            Some(_) => None,
            None => Some(im2col(&s6s[i].out, sh.s6, &arch.c7, sh.c7)),
        };
        let cols = own.as_ref().or(c7_fused_cols.as_ref()).unwrap();
        let mut c7 = conv(cols, &sp.c7, sh.c7);
        relu_inplace(&mut c7);
        finite("C7", Some(i), &c7)?;
        let (n8, scale) = lrn_forward(&c7, sh.c7, &arch.n8_norm);
        finite("N8", Some(i), &n8)?;
        c7s.push(c7);
        c7_own.push(own);
        n8s.push((n8, scale));
    }

    let c7_len: usize = sh.c7.iter().product();
    let c9_fused_cols = arch.fuses(FusionLayer::C9).then(|| {
        let sum = sum_maps(n8s.iter().map(|(n, _)| n), c7_len);
        im2col(&sum, sh.c7, &arch.c9, sh.c9)
    });

    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let mut subs = Vec::with_capacity(k);
    let iter = c5s.into_iter().zip(s6s).zip(c7s).zip(c7_own).zip(n8s);
    for (i, ((((c5, s6), c7), c7_cols), (n8, n8_scale))) in iter.enumerate() {
        let sp = &state.subnets[i];
        let own = match c9_fused_cols {
            Some(_) => None,
            None => Some(im2col(&n8, sh.c7, &arch.c9, sh.c9)),
        };
        let cols = own.as_ref().or(c9_fused_cols.as_ref()).unwrap();
        let mut c9 = conv(cols, &sp.c9, sh.c9);
        relu_inplace(&mut c9);
        finite("C9", Some(i), &c9)?;
        let mut f10 = dense_forward(&c9, &sp.f10.w, &sp.f10.b);
        relu_inplace(&mut f10);
        finite("F10", Some(i), &f10)?;
        let (f10_mask, f10_out) = dropout(&f10, arch.dropout, rng.as_mut());
        let mut f11 = dense_forward(&f10_out, &sp.f11.w, &sp.f11.b);
        relu_inplace(&mut f11);
        finite("F11", Some(i), &f11)?;
        let (f11_mask, f11_out) = dropout(&f11, arch.dropout, rng.as_mut());
        let logit = dense_forward(&f11_out, &sp.out.w, &sp.out.b)[0];
        finite("output", Some(i), &[logit])?;
        subs.push(SubCache {
            c5,
            s6,
            c7_cols,
            c7,
            n8_scale,
            n8,
            c9_cols: own,
            c9,
            f10,
            f10_mask,
            f10_out,
            f11,
            f11_mask,
            f11_out,
            logit,
            p: sigmoid(logit),
        });
    }

    Ok(SampleCache {
        trunk: TrunkCache {
            c1_cols,
            c1,
            s2,
            c3_cols,
            c3,
            s4,
            c5_cols,
        },
        c7_fused_cols,
        c9_fused_cols,
        subs,
    })
}

fn masked(dy: Vec<f64>, mask: &Option<Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => dy.iter().zip(m).map(|(d, m)| d * m).collect(),
        None => dy,
    }
}

/// Accumulates this sample's parameter gradients into `g`, given
/// `∂C/∂logit` per subnetwork.
fn backward_sample(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    sh: &Shapes,
    cache: &SampleCache,
    dlogit: &[f64],
    g: &mut Gradients,
) {
    let k = state.subnetworks();
    let (pos7, pos9) = (positions(sh.c7), positions(sh.c9));
    let c7_len: usize = sh.c7.iter().product();
    let s6_len: usize = sh.s6.iter().product();

    // Output down to the C9 input (the N8 maps or their fused sum).
    let mut dcols9_fused = cache.c9_fused_cols.as_ref().map(|c| vec![0.0; c.len()]);
    let mut dn8: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let (sc, sp) = (&cache.subs[i], &state.subnets[i]);
        let gp = &mut g.subnets[i];
        let d_f11_out = dense_backward(
            &[dlogit[i]],
            &sc.f11_out,
            &sp.out.w,
            &mut gp.out.w,
            &mut gp.out.b,
        );
        let mut d_f11 = masked(d_f11_out, &sc.f11_mask);
        relu_backward_inplace(&mut d_f11, &sc.f11);
        let d_f10_out =
            dense_backward(&d_f11, &sc.f10_out, &sp.f11.w, &mut gp.f11.w, &mut gp.f11.b);
        let mut d_f10 = masked(d_f10_out, &sc.f10_mask);
        relu_backward_inplace(&mut d_f10, &sc.f10);
        let mut d_c9 = dense_backward(&d_f10, &sc.c9, &sp.f10.w, &mut gp.f10.w, &mut gp.f10.b);
        relu_backward_inplace(&mut d_c9, &sc.c9);
        let cols = sc
            .c9_cols
            .as_ref()
            .or(cache.c9_fused_cols.as_ref())
            .unwrap();
        let dcols = conv_backward(&d_c9, cols, &sp.c9.w, &mut gp.c9.w, &mut gp.c9.b, pos9);
        match dcols9_fused.as_mut() {
            Some(acc) => acc.iter_mut().zip(&dcols).for_each(|(a, d)| *a += d),
            None => dn8.push(col2im(&dcols, sh.c7, &arch.c9, sh.c9)),
        }
    }
    if let Some(acc) = dcols9_fused {
        // The fused sum feeds every subnetwork's C9, and each N8 map enters
        // that sum with coefficient one.
        let d = col2im(&acc, sh.c7, &arch.c9, sh.c9);
        debug_assert_eq!(d.len(), c7_len);
        dn8 = vec![d; k];
    }

    // N8 and C7 down to the C7 input.
    let mut dcols7_fused = cache.c7_fused_cols.as_ref().map(|c| vec![0.0; c.len()]);
    let mut ds6: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let (sc, sp) = (&cache.subs[i], &state.subnets[i]);
        let gp = &mut g.subnets[i];
        let mut d_c7 = lrn_backward(&dn8[i], &sc.c7, &sc.n8, &sc.n8_scale, sh.c7, &arch.n8_norm);
        relu_backward_inplace(&mut d_c7, &sc.c7);
        let cols = sc
            .c7_cols
            .as_ref()
            .or(cache.c7_fused_cols.as_ref())
            .unwrap();
        let dcols = conv_backward(&d_c7, cols, &sp.c7.w, &mut gp.c7.w, &mut gp.c7.b, pos7);
        match dcols7_fused.as_mut() {
            Some(acc) => acc.iter_mut().zip(&dcols).for_each(|(a, d)| *a += d),
            None => ds6.push(col2im(&dcols, sh.s6, &arch.c7, sh.c7)),
        }
    }
    if let Some(acc) = dcols7_fused {
        let d = col2im(&acc, sh.s6, &arch.c7, sh.c7);
        debug_assert_eq!(d.len(), s6_len);
        ds6 = vec![d; k];
    }

    // S6 and C5; all C5 layers read the same S4 patches.
    let t = &cache.trunk;
    let mut dcols5 = vec![0.0; t.c5_cols.len()];
    for i in 0..k {
        let (sc, sp) = (&cache.subs[i], &state.subnets[i]);
        let gp = &mut g.subnets[i];
        let mut d_c5 = s_backward(&ds6[i], &sc.s6, sc.c5.len(), sh.s6, &arch.s6_norm);
        relu_backward_inplace(&mut d_c5, &sc.c5);
        let d = conv_backward(
            &d_c5,
            &t.c5_cols,
            &sp.c5.w,
            &mut gp.c5.w,
            &mut gp.c5.b,
            positions(sh.c5),
        );
        dcols5.iter_mut().zip(&d).for_each(|(a, v)| *a += v);
    }

    // Shared trunk: the gradient arriving at S4 already sums every
    // subnetwork's contribution.
    let ds4 = col2im(&dcols5, sh.s4, &arch.c5, sh.c5);
    let mut d_c3 = s_backward(&ds4, &t.s4, t.c3.len(), sh.s4, &arch.s4_norm);
    relu_backward_inplace(&mut d_c3, &t.c3);
    let dcols3 = conv_backward(
        &d_c3,
        &t.c3_cols,
        &state.c3.w,
        &mut g.c3.w,
        &mut g.c3.b,
        positions(sh.c3),
    );
    let ds2 = col2im(&dcols3, sh.s2, &arch.c3, sh.c3);
    let mut d_c1 = s_backward(&ds2, &t.s2, t.c1.len(), sh.s2, &arch.s2_norm);
    relu_backward_inplace(&mut d_c1, &t.c1);
    conv_backward(
        &d_c1,
        &t.c1_cols,
        &state.c1.w,
        &mut g.c1.w,
        &mut g.c1.b,
        positions(sh.c1),
    );
}

fn check_inputs(state: &NetworkState, arch: &ArchitectureSpec, images: &Images) -> Result<Shapes> {
    let sh = arch.shapes()?;
    let want = NetworkState::zeros(arch)?;
    if !state.same_layout(&want) {
        return Err(Error::Shape {
            what: "network parameters".into(),
            expected: vec![want.parameter_count()],
            got: vec![state.parameter_count()],
        });
    }
    let dims = images.dims();
    let expected = [arch.input_height, arch.input_width, arch.input_channels];
    if dims != expected {
        return Err(Error::Shape {
            what: "input image".into(),
            expected: expected.to_vec(),
            got: dims.to_vec(),
        });
    }
    Ok(sh)
}

fn dropout_seed(mode: Mode, i: usize) -> Option<u64> {
    match mode {
        Mode::Train { seed } => Some(sample_seed(seed, i)),
        Mode::Eval => None,
    }
}

/// Runs the batch, keeping every activation for [`backward`].
pub fn forward(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    images: &Images,
    mode: Mode,
) -> Result<Forward> {
    let sh = check_inputs(state, arch, images)?;
    let samples: Vec<SampleCache> = (0..images.count())
        .into_par_iter()
        .map(|i| forward_sample(state, arch, &sh, images.image(i), dropout_seed(mode, i)))
        .collect::<Result<_>>()?;
    let k = state.subnetworks();
    let probabilities = Matrix::from_fn(samples.len(), k, |n, i| samples[n].subs[i].p);
    let logits = Matrix::from_fn(samples.len(), k, |n, i| samples[n].subs[i].logit);
    Ok(Forward {
        probabilities,
        logits,
        cache: Cache {
            samples,
            checksum: state.checksum(),
        },
    })
}

/// Evaluation-mode probabilities without keeping activations.
pub fn predict(state: &NetworkState, arch: &ArchitectureSpec, images: &Images) -> Result<Mat> {
    outputs(state, arch, images, |s| s.p)
}

/// Evaluation-mode logits without keeping activations.
pub fn predict_logits(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    images: &Images,
) -> Result<Mat> {
    outputs(state, arch, images, |s| s.logit)
}

fn outputs(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    images: &Images,
    pick: impl Fn(&SubCache) -> f64 + Sync,
) -> Result<Mat> {
    let sh = check_inputs(state, arch, images)?;
    let k = state.subnetworks();
    let rows: Vec<Vec<f64>> = (0..images.count())
        .into_par_iter()
        .map(|i| {
            let c = forward_sample(state, arch, &sh, images.image(i), None)?;
            Ok(c.subs.iter().map(&pick).collect())
        })
        .collect::<Result<_>>()?;
    Ok(Matrix::from_vec(rows.len(), k, rows.concat())?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    /// `C_1 … C_K`, each averaged over the batch.
    pub per_attribute: Vec<f64>,
    /// `Σ_i C_i`
    pub total: f64,
}

/// Binary cross-entropy of logits `z`, `ln(1 + e^z) − y z` per entry. Equal
/// to [`loss`] of `σ(z)` wherever that does not clamp, and exact for
/// saturated outputs, so `σ(z) − y` is its gradient everywhere.
pub fn loss_from_logits(z: &Mat, y: &Mat) -> Result<LossReport> {
    if z.shape() != y.shape() {
        return Err(Error::Shape {
            what: "loss".into(),
            expected: z.shape().to_vec(),
            got: y.shape().to_vec(),
        });
    }
    let (n, k) = (z.rows(), z.cols());
    let mut per = vec![0.0; k];
    for r in 0..n {
        for i in 0..k {
            let (v, t) = (z[(r, i)], y[(r, i)]);
            per[i] += v.max(0.0) + (-v.abs()).exp().ln_1p() - t * v;
        }
    }
    for c in &mut per {
        *c /= n as f64;
    }
    Ok(LossReport {
        total: per.iter().sum(),
        per_attribute: per,
    })
}

/// Binary cross-entropy per attribute,
/// `C_i = −(1/N) Σ_n [y ln p + (1 − y) ln(1 − p)]`.
pub fn loss(p: &Mat, y: &Mat) -> Result<LossReport> {
    if p.shape() != y.shape() {
        return Err(Error::Shape {
            what: "loss".into(),
            expected: p.shape().to_vec(),
            got: y.shape().to_vec(),
        });
    }
    let (n, k) = (p.rows(), p.cols());
    let mut per = vec![0.0; k];
    for r in 0..n {
        for i in 0..k {
            let q = p[(r, i)].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            let t = y[(r, i)];
            per[i] -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
        }
    }
    for c in &mut per {
        *c /= n as f64;
    }
    Ok(LossReport {
        total: per.iter().sum(),
        per_attribute: per,
    })
}

fn output_gradient(p: &[f64], y: &[f64], n: usize, weights: Option<&[f64]>) -> Vec<f64> {
    p.iter()
        .zip(y)
        .enumerate()
        .map(|(i, (p, y))| weights.map_or(1.0, |w| w[i]) * (p - y) / n as f64)
        .collect()
}

fn check_weights(weights: Option<&[f64]>, k: usize) -> Result<()> {
    match weights {
        Some(w) if w.len() != k => Err(Error::Shape {
            what: "loss weights".into(),
            expected: vec![k],
            got: vec![w.len()],
        }),
        _ => Ok(()),
    }
}

fn reduce(parts: Vec<Gradients>, zero: Gradients) -> Gradients {
    parts.into_iter().fold(zero, |mut acc, g| {
        acc.add_scaled(1.0, &g);
        acc
    })
}

/// Gradients of `Σ_i w_i C_i` (all `w_i = 1` when `weights` is `None`) for
/// every parameter. Shared trunk parameters receive the sum over
/// subnetworks; fused layers route gradient to every subnetwork whose maps
/// entered the sum.
pub fn backward(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    fwd: &Forward,
    labels: &Mat,
    weights: Option<&[f64]>,
) -> Result<Gradients> {
    let sh = arch.shapes()?;
    let k = state.subnetworks();
    let n = fwd.cache.samples.len();
    if fwd.cache.checksum != state.checksum() {
        return Err(Error::InvalidArgument(
            "cache was produced by a different network state".into(),
        ));
    }
    if labels.shape() != [n, k] {
        return Err(Error::Shape {
            what: "labels".into(),
            expected: vec![n, k],
            got: labels.shape().to_vec(),
        });
    }
    check_weights(weights, k)?;
    let zero = state.zeros_like();
    let parts: Vec<Gradients> = fwd
        .cache
        .samples
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut g = zero.clone();
            for (j, s) in chunk.iter().enumerate() {
                let r = c * CHUNK + j;
                let d = output_gradient(fwd.probabilities.row(r), labels.row(r), n, weights);
                backward_sample(state, arch, &sh, s, &d, &mut g);
            }
            g
        })
        .collect();
    Ok(reduce(parts, zero))
}

/// Forward and backward one sample at a time; the same numbers as
/// [`forward`] followed by [`backward`] without holding a whole batch of
/// activations.
pub fn loss_and_gradients(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    batch: &Batch,
    mode: Mode,
    weights: Option<&[f64]>,
) -> Result<(LossReport, Gradients)> {
    let sh = check_inputs(state, arch, &batch.images)?;
    let k = state.subnetworks();
    let n = batch.len();
    if batch.attributes() != k {
        return Err(Error::Shape {
            what: "labels".into(),
            expected: vec![n, k],
            got: batch.labels.shape().to_vec(),
        });
    }
    check_weights(weights, k)?;
    let zero = state.zeros_like();
    let idx: Vec<usize> = (0..n).collect();
    let parts: Vec<(Vec<f64>, Gradients)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = zero.clone();
            let mut logits = Vec::with_capacity(chunk.len() * k);
            for &r in chunk {
                let s = forward_sample(
                    state,
                    arch,
                    &sh,
                    batch.images.image(r),
                    dropout_seed(mode, r),
                )?;
                let p: Vec<f64> = s.subs.iter().map(|c| c.p).collect();
                let d = output_gradient(&p, batch.labels.row(r), n, weights);
                backward_sample(state, arch, &sh, &s, &d, &mut g);
                logits.extend(s.subs.iter().map(|c| c.logit));
            }
            Ok((logits, g))
        })
        .collect::<Result<_>>()?;
    let mut logits = Vec::with_capacity(n * k);
    let mut grads = Vec::with_capacity(parts.len());
    for (z, g) in parts {
        logits.extend(z);
        grads.push(g);
    }
    let z = Matrix::from_vec(n, k, logits)?;
    Ok((loss_from_logits(&z, &batch.labels)?, reduce(grads, zero)))
}

/// Gradient descent: every parameter moves by `−η ·` its gradient.
pub fn sgd_step(state: &mut NetworkState, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate {lr} must be positive"
        )));
    }
    if !state.same_layout(grads) {
        return Err(Error::InvalidArgument(
            "gradient layout does not match the network".into(),
        ));
    }
    if let Some((name, _)) = grads
        .params()
        .into_iter()
        .find(|(_, p)| !p.w.iter().chain(&p.b).all(|x| x.is_finite()))
    {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    state.add_scaled(-lr, grads);
    Ok(())
}

/// Evaluation-mode C9 maps of one `H × W × C` image: one `(L, κ, κ)`
/// tensor per subnetwork, after the ReLU.
pub fn extract_c9_features(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    image: &[f64],
) -> Result<Vec<Tensor>> {
    let one = Images::new(
        1,
        arch.input_height,
        arch.input_width,
        arch.input_channels,
        image.to_vec(),
    )?;
    let sh = check_inputs(state, arch, &one)?;
    let c = forward_sample(state, arch, &sh, one.image(0), None)?;
    c.subs
        .into_iter()
        .map(|s| Ok(DenseTensor::new(sh.c9.to_vec(), s.c9)?))
        .collect()
}

/// [`extract_c9_features`] for every image, in order.
pub fn extract_c9_batch(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    images: &Images,
) -> Result<Vec<Vec<Tensor>>> {
    let sh = check_inputs(state, arch, images)?;
    (0..images.count())
        .into_par_iter()
        .map(|i| {
            let c = forward_sample(state, arch, &sh, images.image(i), None)?;
            c.subs
                .into_iter()
                .map(|s| Ok(DenseTensor::new(sh.c9.to_vec(), s.c9)?))
                .collect()
        })
        .collect()
}
