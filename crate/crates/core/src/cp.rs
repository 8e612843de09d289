//! CANDECOMP/PARAFAC decomposition by alternating least squares, and the
//! best rank-1 approximation (higher-order power iteration with restarts).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{norm2, solve_right_spd, sym_eigen, Matrix};
use crate::scalar::Scalar;
use crate::tensor::{increment, outer_product, DenseTensor};

/// Rank-`r` CP model: `Σ_k λ_k a_k⁽¹⁾ ∘ … ∘ a_k⁽ᴺ⁾`.
///
/// Factor `n` is an `I_n × r` matrix with unit-norm columns; weights are
/// sorted by descending magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors<T> {
    weights: Vec<T>,
    factors: Vec<Matrix<T>>,
}

impl<T: Scalar> CpFactors<T> {
    /// Validates shapes and unit-norm columns (within `1e-8`, loose enough
    /// for factors read back from `f32` sources).
    pub fn new(weights: Vec<T>, factors: Vec<Matrix<T>>) -> Result<Self> {
        if weights.is_empty() || factors.is_empty() {
            return Err(Error::Empty("CpFactors"));
        }
        let r = weights.len();
        for f in &factors {
            if f.cols() != r {
                return Err(Error::DimensionMismatch {
                    op: "CpFactors::new",
                    left: vec![r],
                    right: f.shape().to_vec(),
                });
            }
            for k in 0..r {
                let n = norm2(&f.col(k));
                if (n - T::one()).abs() > T::lit(1e-8) {
                    return Err(Error::InvalidArgument(format!(
                        "factor column {k} has norm {n}, expected 1"
                    )));
                }
            }
        }
        Ok(Self { weights, factors })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn factors(&self) -> &[Matrix<T>] {
        &self.factors
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }

    /// Flip the sign of column `k` of factor `mode`, absorbing it into `λ_k`.
    pub fn flip_into_weight(&mut self, k: usize, mode: usize) {
        let f = &mut self.factors[mode];
        for i in 0..f.rows() {
            f[(i, k)] = -f[(i, k)];
        }
        self.weights[k] = -self.weights[k];
    }

    pub fn reconstruct(&self) -> Result<DenseTensor<T>> {
        let shape = self.shape();
        let mut out = DenseTensor::zeros(&shape)?;
        let mut idx = vec![0usize; shape.len()];
        let r = self.rank();
        for v in out.data_mut().iter_mut() {
            let mut acc = T::zero();
            for k in 0..r {
                let mut p = self.weights[k];
                for (m, f) in self.factors.iter().enumerate() {
                    p *= f[(idx[m], k)];
                }
                acc += p;
            }
            *v = acc;
            increment(&mut idx, &shape);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct CpOptions {
    pub rank: usize,
    /// Stop when the fit changes by less than this between sweeps.
    pub tol: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    /// Build the components one at a time by rank-1 deflation instead of
    /// the joint ALS update.
    pub greedy_deflation: bool,
    /// Added to the diagonal of every normal-equations matrix.
    pub ridge: f64,
}

impl Default for CpOptions {
    fn default() -> Self {
        Self {
            rank: 1,
            tol: 1e-8,
            max_sweeps: 500,
            seed: 0,
            greedy_deflation: false,
            ridge: 1e-12,
        }
    }
}

impl CpOptions {
    pub fn rank(rank: usize) -> Self {
        Self {
            rank,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CpReport<T> {
    pub factors: CpFactors<T>,
    /// Fit `1 - ‖X - X̂‖ / ‖X‖` after each sweep (or each deflated component).
    pub fit_history: Vec<T>,
    pub sweeps: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl<T: Scalar> CpReport<T> {
    pub fn fit(&self) -> T {
        self.fit_history.last().copied().unwrap_or(T::one())
    }
}

fn gaussian_unit<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    loop {
        let v: Vec<T> = (0..n).map(|_| T::lit(StandardNormal.sample(rng))).collect();
        let nv = norm2(&v);
        if nv > T::zero() {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

/// Leading left singular vectors of each unfolding, padded with seeded
/// Gaussian columns once `rank` exceeds the unfolding's numerical rank.
fn hosvd_init<T: Scalar>(
    x: &DenseTensor<T>,
    rank: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Matrix<T>>> {
    let mut out = Vec::with_capacity(x.order());
    for n in 1..=x.order() {
        let unf = x.unfold(n)?;
        let gram = unf.transpose().gram();
        let eig = sym_eigen(&gram)?;
        let top = eig.values.first().copied().unwrap_or(T::zero());
        let numerical_rank = eig
            .values
            .iter()
            .take_while(|&&l| top > T::zero() && l > top * T::lit(1e-12))
            .count();
        let rows = unf.rows();
        let mut f = Matrix::zeros(rows, rank);
        for k in 0..rank {
            let col = if k < numerical_rank {
                eig.vectors.col(k)
            } else {
                gaussian_unit(rows, rng)
            };
            f.set_col(k, &col);
        }
        out.push(f);
    }
    Ok(out)
}

/// Matricized tensor times Khatri-Rao product for mode `n` (0-based):
/// `M[i, k] = Σ x[idx] ∏_{m≠n} A_m[idx_m, k]` with `idx_n = i`.
fn mttkrp<T: Scalar>(x: &DenseTensor<T>, factors: &[Matrix<T>], n: usize) -> Matrix<T> {
    let shape = x.shape();
    let r = factors[0].cols();
    let mut out = Matrix::zeros(shape[n], r);
    let mut idx = vec![0usize; shape.len()];
    let mut prod = vec![T::zero(); r];
    for &v in x.data() {
        if v != T::zero() {
            prod.iter_mut().for_each(|p| *p = v);
            for (m, f) in factors.iter().enumerate() {
                if m == n {
                    continue;
                }
                let row = f.row(idx[m]);
                for (p, &a) in prod.iter_mut().zip(row) {
                    *p *= a;
                }
            }
            let dst = &mut out.as_mut_slice()[idx[n] * r..(idx[n] + 1) * r];
            for (d, &p) in dst.iter_mut().zip(&prod) {
                *d += p;
            }
        }
        increment(&mut idx, shape);
    }
    out
}

fn relative_fit<T: Scalar>(x: &DenseTensor<T>, xnorm: T, model: &CpFactors<T>) -> Result<T> {
    let rec = model.reconstruct()?;
    let err = x
        .data()
        .iter()
        .zip(rec.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt();
    Ok(T::one() - err / xnorm)
}

fn sort_components<T: Scalar>(weights: Vec<T>, factors: Vec<Matrix<T>>) -> CpFactors<T> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Stable sort keeps first-occurrence order among ties.
    order.sort_by(|&a, &b| weights[b].abs().partial_cmp(&weights[a].abs()).unwrap());
    let weights = order.iter().map(|&k| weights[k]).collect();
    let factors = factors
        .iter()
        .map(|f| Matrix::from_fn(f.rows(), order.len(), |i, c| f[(i, order[c])]))
        .collect();
    CpFactors { weights, factors }
}

/// Rank-`r` CP decomposition by alternating least squares.
///
/// A zero tensor yields all-zero weights (with arbitrary unit columns)
/// rather than an error.
pub fn cp_als<T: Scalar>(x: &DenseTensor<T>, opts: &CpOptions) -> Result<CpReport<T>> {
    if opts.rank == 0 {
        return Err(Error::InvalidArgument("CP rank must be >= 1".into()));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("cp_als input"));
    }
    let mut warnings = Vec::new();
    let shape = x.shape().to_vec();
    let total: usize = shape.iter().product();
    let min_other = shape.iter().map(|&d| total / d).min().unwrap_or(1);
    if opts.rank > min_other {
        warnings.push(format!(
            "rank {} exceeds {min_other}, the smallest product of the other extents; \
             the least-squares subproblems are rank deficient",
            opts.rank
        ));
    }
    if opts.greedy_deflation {
        let mut rep = cp_greedy(x, opts)?;
        rep.warnings.extend(warnings);
        return Ok(rep);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let r = opts.rank;
    let mut factors = hosvd_init(x, r, &mut rng)?;
    let xnorm = x.frobenius_norm();
    if xnorm == T::zero() {
        return Ok(CpReport {
            factors: CpFactors {
                weights: vec![T::zero(); r],
                factors,
            },
            fit_history: Vec::new(),
            sweeps: 0,
            converged: true,
            warnings,
        });
    }

    let ridge = T::lit(opts.ridge);
    let tol = T::lit(opts.tol);
    let mut weights = vec![T::one(); r];
    let mut fit_history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        for n in 0..shape.len() {
            let mut v = Matrix::from_fn(r, r, |_, _| T::one());
            for (m, f) in factors.iter().enumerate() {
                if m != n {
                    let g = f.gram();
                    for (a, &b) in v.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *a *= b;
                    }
                }
            }
            for k in 0..r {
                v[(k, k)] += ridge;
            }
            let m = mttkrp(x, &factors, n);
            let mut a = solve_right_spd(&m, &v)?;
            for k in 0..r {
                let col = a.col(k);
                let nrm = norm2(&col);
                if nrm > T::zero() {
                    a.set_col(k, &col.iter().map(|&c| c / nrm).collect::<Vec<_>>());
                } else {
                    a.set_col(k, &factors[n].col(k));
                }
                weights[k] = nrm;
            }
            factors[n] = a;
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::NonFinite("cp_als weights"));
        }
        let model = CpFactors {
            weights: weights.clone(),
            factors: factors.clone(),
        };
        let fit = relative_fit(x, xnorm, &model)?;
        let prev = fit_history.last().copied();
        fit_history.push(fit);
        if let Some(p) = prev {
            if (fit - p).abs() < tol {
                converged = true;
                break;
            }
        }
        if fit >= T::one() - T::epsilon() {
            converged = true;
            break;
        }
    }

    Ok(CpReport {
        factors: sort_components(weights, factors),
        fit_history,
        sweeps,
        converged,
        warnings,
    })
}

fn cp_greedy<T: Scalar>(x: &DenseTensor<T>, opts: &CpOptions) -> Result<CpReport<T>> {
    let shape = x.shape().to_vec();
    let xnorm = x.frobenius_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut residual = x.clone();
    let mut weights = Vec::with_capacity(opts.rank);
    let mut cols: Vec<Vec<Vec<T>>> = vec![Vec::new(); shape.len()];
    let mut fit_history = Vec::new();
    let mut sweeps = 0;
    let r1 = Rank1Options {
        tol: opts.tol.min(1e-12),
        max_sweeps: opts.max_sweeps,
        restarts: 4,
        seed: opts.seed,
    };
    for _ in 0..opts.rank {
        let vectors = if residual.frobenius_norm() > xnorm * T::lit(1e-14) {
            let best = rank1_best(&residual, &r1)?;
            sweeps += best.sweeps;
            let refs: Vec<&[T]> = best.vectors.iter().map(|v| v.as_slice()).collect();
            let mut term = outer_product(&refs)?;
            term.scale(best.rho);
            for (d, &t) in residual.data_mut().iter_mut().zip(term.data()) {
                *d -= t;
            }
            weights.push(best.rho);
            best.vectors
        } else {
            weights.push(T::zero());
            shape.iter().map(|&d| gaussian_unit(d, &mut rng)).collect()
        };
        for (m, v) in vectors.into_iter().enumerate() {
            cols[m].push(v);
        }
        if xnorm > T::zero() {
            fit_history.push(T::one() - residual.frobenius_norm() / xnorm);
        }
    }
    let factors = cols
        .iter()
        .map(|c| Matrix::from_columns(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(CpReport {
        factors: sort_components(weights, factors),
        fit_history,
        sweeps,
        converged: true,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone)]
pub struct Rank1Options {
    pub tol: f64,
    pub max_sweeps: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for Rank1Options {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_sweeps: 2000,
            restarts: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rank1<T> {
    /// `X` contracted with every returned vector; nonnegative.
    pub rho: T,
    pub vectors: Vec<Vec<T>>,
    /// Total power-iteration sweeps over all restarts.
    pub sweeps: usize,
}

/// Best rank-1 approximation by higher-order power iteration.
///
/// The first start uses the leading singular vectors of each unfolding, the
/// remaining `restarts - 1` starts are seeded Gaussian; the largest `ρ` wins.
pub fn rank1_best<T: Scalar>(x: &DenseTensor<T>, opts: &Rank1Options) -> Result<Rank1<T>> {
    if !x.is_finite() {
        return Err(Error::NonFinite("rank1_best input"));
    }
    if x.frobenius_norm() == T::zero() {
        return Err(Error::ZeroTensor);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let order = x.order();
    let tol = T::lit(opts.tol);
    let mut best: Option<(T, Vec<Vec<T>>)> = None;
    let mut total_sweeps = 0;
    for start in 0..opts.restarts.max(1) {
        let mut us: Vec<Vec<T>> = if start == 0 {
            hosvd_init(x, 1, &mut rng)?
                .into_iter()
                .map(|f| f.col(0))
                .collect()
        } else {
            x.shape()
                .iter()
                .map(|&d| gaussian_unit(d, &mut rng))
                .collect()
        };
        let mut rho = T::zero();
        for sweep in 0..opts.max_sweeps {
            total_sweeps += 1;
            let mut last = T::zero();
            for n in 0..order {
                let refs: Vec<&[T]> = us.iter().map(|u| u.as_slice()).collect();
                let v = x.contract_all_but(&refs, n + 1)?;
                let nv = norm2(&v);
                if nv == T::zero() {
                    // Orthogonal start: keep the previous vector for this mode.
                    continue;
                }
                us[n] = v.into_iter().map(|c| c / nv).collect();
                last = nv;
            }
            let done = sweep > 0 && (last - rho).abs() <= tol * last.max(T::one());
            rho = last;
            if done {
                break;
            }
        }
        let refs: Vec<&[T]> = us.iter().map(|u| u.as_slice()).collect();
        let mut rho = x.contract_all(&refs)?;
        if rho < T::zero() {
            us[0].iter_mut().for_each(|c| *c = -*c);
            rho = -rho;
        }
        if best.as_ref().is_none_or(|(b, _)| rho > *b) {
            best = Some((rho, us));
        }
    }
    let (rho, vectors) = best.expect("at least one start");
    Ok(Rank1 {
        rho,
        vectors,
        sweeps: total_sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruct_one_hot() {
        let e = |n: usize, k: usize| {
            let mut m = Matrix::zeros(n, 1);
            m[(k, 0)] = 1.0;
            m
        };
        let f = CpFactors::new(vec![1.0], vec![e(2, 1), e(3, 0), e(2, 1)]).unwrap();
        let t = f.reconstruct().unwrap();
        assert_eq!(t.frobenius_norm(), 1.0);
        assert_eq!(t.get(&[1, 0, 1]), 1.0);
    }

    #[test]
    fn zero_weights_reconstruct_zero() {
        let m = Matrix::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let f = CpFactors::new(vec![0.0, 0.0], vec![m.clone(), m]).unwrap();
        assert_eq!(f.reconstruct().unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn rejects_non_unit_columns() {
        let m = Matrix::from_fn(2, 1, |_, _| 1.0);
        assert!(CpFactors::new(vec![1.0], vec![m]).is_err());
    }

    #[test]
    fn zero_tensor_gives_zero_weights() {
        let x = DenseTensor::<f64>::zeros(&[3, 2, 2]).unwrap();
        let rep = cp_als(&x, &CpOptions::rank(2)).unwrap();
        assert_eq!(rep.factors.weights(), &[0.0, 0.0]);
        assert!(matches!(
            rank1_best(&x, &Rank1Options::default()),
            Err(Error::ZeroTensor)
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let x = DenseTensor::new(vec![2], vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(
            cp_als(&x, &CpOptions::rank(1)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rank_zero_rejected() {
        let x = DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        assert!(cp_als(&x, &CpOptions::rank(0)).is_err());
    }

    #[test]
    fn oversized_rank_warns() {
        let x = DenseTensor::from_fn(&[2, 2], |i| (i[0] * 2 + i[1] + 1) as f64).unwrap();
        let rep = cp_als(&x, &CpOptions::rank(4)).unwrap();
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn weights_sorted() {
        let x = DenseTensor::from_fn(&[3, 4, 2], |i| {
            ((i[0] * 7 + i[1] * 3 + i[2] * 5) % 11) as f64 - 5.0
        })
        .unwrap();
        let rep = cp_als(&x, &CpOptions::rank(3)).unwrap();
        let w = rep.factors.weights();
        assert!(w.windows(2).all(|p| p[0].abs() >= p[1].abs()));
    }
}
