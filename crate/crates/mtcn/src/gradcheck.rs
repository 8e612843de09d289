//! Central finite differences against the analytic gradients.

use rayon::prelude::*;

use crate::arch::ArchitectureSpec;
use crate::error::Result;
use crate::net::{loss_and_gradients, loss_from_logits, predict_logits, Batch, Mode};
use crate::state::NetworkState;

/// Entries whose relative error reaches this value fail the check.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub step: f64,
    /// Check at most this many evenly strided entries per tensor.
    pub max_entries: Option<usize>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step: 1e-5,
            max_entries: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TensorCheck {
    /// Parameter block plus `.w` or `.b`.
    pub name: String,
    pub checked: usize,
    /// `max |analytic − fd| / max(1e-8, |fd|)` over entries, each at its
    /// best-agreeing step.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < GRADCHECK_TOLERANCE
    }
}

fn total_loss(state: &NetworkState, arch: &ArchitectureSpec, batch: &Batch) -> Result<f64> {
    Ok(loss_from_logits(&predict_logits(state, arch, &batch.images)?, &batch.labels)?.total)
}

/// Compares backpropagated gradients of the total loss with central
/// differences, dropout disabled.
///
/// A difference whose stencil straddles a ReLU or max-pooling kink is off
/// by O(1) however correct the gradient is, so an entry that fails at
/// `step` is retried at `step / 10` and `10 · step` and reports its best
/// agreement. A wrong gradient disagrees at every step.
pub fn gradcheck(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    batch: &Batch,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let mut arch = arch.clone();
    arch.dropout = 0.0;
    let (_, grads) = loss_and_gradients(state, &arch, batch, Mode::Eval, None)?;
    let h = opts.step;
    let mut tensors = Vec::new();
    let blocks: Vec<(String, usize, usize)> = state
        .params()
        .iter()
        .map(|(n, p)| (n.clone(), p.w.len(), p.b.len()))
        .collect();
    for (block, (name, nw, nb)) in blocks.into_iter().enumerate() {
        for (is_bias, len) in [(false, nw), (true, nb)] {
            let stride = opts
                .max_entries
                .map_or(1, |m| len.div_ceil(m.max(1)).max(1));
            let entries: Vec<usize> = (0..len).step_by(stride).collect();
            let errs: Vec<(f64, f64)> = entries
                .par_iter()
                .map(|&e| {
                    let eval = |delta: f64| {
                        let mut s = state.clone();
                        let mut ps = s.params_mut();
                        let p = &mut ps[block].1;
                        if is_bias {
                            p.b[e] += delta;
                        } else {
                            p.w[e] += delta;
                        }
                        total_loss(&s, &arch, batch)
                    };
                    let gp = &grads.params()[block].1;
                    let a = if is_bias { gp.b[e] } else { gp.w[e] };
                    let mut best = (f64::INFINITY, f64::INFINITY);
                    for step in [h, h / 10.0, h * 10.0] {
                        let fd = (eval(step)? - eval(-step)?) / (2.0 * step);
                        let abs = (a - fd).abs();
                        let rel = abs / fd.abs().max(1e-8);
                        if rel < best.0 {
                            best = (rel, abs);
                        }
                        if rel < GRADCHECK_TOLERANCE {
                            break;
                        }
                    }
                    Ok(best)
                })
                .collect::<Result<_>>()?;
            tensors.push(TensorCheck {
                name: format!("{name}.{}", if is_bias { "b" } else { "w" }),
                checked: entries.len(),
                max_rel_error: errs.iter().map(|e| e.0).fold(0.0, f64::max),
                max_abs_error: errs.iter().map(|e| e.1).fold(0.0, f64::max),
            });
        }
    }
    Ok(GradcheckReport { tensors })
}
