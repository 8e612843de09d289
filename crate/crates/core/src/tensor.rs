//! Dense N-way tensors stored row-major (last index fastest).
//!
//! Mode indices in the public API are 1-based: mode `n` refers to the
//! extent `shape[n - 1]`.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "tensor needs order >= 1 and positive extents".into(),
        });
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "element count overflows usize".into(),
        })
}

impl<T: Scalar> DenseTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("data length {} != product of extents {len}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        })
    }

    /// Build a tensor by evaluating `f` at every multi-index (0-based).
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// View a matrix as an order-2 tensor.
    pub fn from_matrix(m: &Matrix<T>) -> Self {
        Self {
            shape: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Extent of 1-based mode `n`.
    pub fn extent(&self, n: usize) -> Result<usize> {
        self.check_mode(n)?;
        Ok(self.shape[n - 1])
    }

    fn check_mode(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.order() {
            return Err(Error::ModeOutOfRange {
                mode: n,
                order: self.order(),
            });
        }
        Ok(())
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Product of extents before and after 1-based mode `n`.
    fn split_extents(&self, n: usize) -> (usize, usize, usize) {
        let left: usize = self.shape[..n - 1].iter().product();
        let right: usize = self.shape[n..].iter().product();
        (left, self.shape[n - 1], right)
    }

    /// Mode-`n` unfolding: an `I_n × (∏_{m≠n} I_m)` matrix whose columns run
    /// over the remaining indices in row-major order.
    pub fn unfold(&self, n: usize) -> Result<Matrix<T>> {
        self.check_mode(n)?;
        let (left, mid, right) = self.split_extents(n);
        let cols = left * right;
        let mut out = vec![T::zero(); mid * cols];
        for l in 0..left {
            for i in 0..mid {
                let src = &self.data[(l * mid + i) * right..(l * mid + i + 1) * right];
                let dst = &mut out[i * cols + l * right..i * cols + (l + 1) * right];
                dst.copy_from_slice(src);
            }
        }
        Matrix::from_vec(mid, cols, out)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: &Matrix<T>, n: usize, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if n == 0 || n > shape.len() {
            return Err(Error::ModeOutOfRange {
                mode: n,
                order: shape.len(),
            });
        }
        let mid = shape[n - 1];
        if m.rows() != mid || m.rows() * m.cols() != len {
            return Err(Error::DimensionMismatch {
                op: "fold",
                left: m.shape().to_vec(),
                right: shape.to_vec(),
            });
        }
        let left: usize = shape[..n - 1].iter().product();
        let right: usize = shape[n..].iter().product();
        let cols = left * right;
        let src = m.as_slice();
        let mut data = vec![T::zero(); len];
        for l in 0..left {
            for i in 0..mid {
                data[(l * mid + i) * right..(l * mid + i + 1) * right]
                    .copy_from_slice(&src[i * cols + l * right..i * cols + (l + 1) * right]);
            }
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// n-mode product `X ×_n U` with `U` of size `J × I_n`.
    pub fn mode_n_product(&self, u: &Matrix<T>, n: usize) -> Result<Self> {
        self.check_mode(n)?;
        if u.cols() != self.shape[n - 1] {
            return Err(Error::DimensionMismatch {
                op: "mode_n_product",
                left: self.shape.clone(),
                right: u.shape().to_vec(),
            });
        }
        let prod = u.matmul(&self.unfold(n)?)?;
        let mut shape = self.shape.clone();
        shape[n - 1] = u.rows();
        Self::fold(&prod, n, &shape)
    }

    /// Sequential n-mode products over distinct modes.
    pub fn multi_mode_product(&self, us: &[(&Matrix<T>, usize)]) -> Result<Self> {
        let mut seen = vec![false; self.order() + 1];
        for &(_, n) in us {
            self.check_mode(n)?;
            if seen[n] {
                return Err(Error::DuplicateMode(n));
            }
            seen[n] = true;
        }
        let mut out = self.clone();
        for &(u, n) in us {
            out = out.mode_n_product(u, n)?;
        }
        Ok(out)
    }

    /// Mode-`n` contracted tensor-vector product. The result has order one
    /// less than `self`; contracting an order-1 tensor yields a scalar stored
    /// as a shape-`[1]` tensor.
    pub fn contract_vector(&self, v: &[T], n: usize) -> Result<Self> {
        self.check_mode(n)?;
        let (left, mid, right) = self.split_extents(n);
        if v.len() != mid {
            return Err(Error::DimensionMismatch {
                op: "contract_vector",
                left: self.shape.clone(),
                right: vec![v.len()],
            });
        }
        let mut data = vec![T::zero(); left * right];
        for l in 0..left {
            let dst = &mut data[l * right..(l + 1) * right];
            for (i, &vi) in v.iter().enumerate() {
                let src = &self.data[(l * mid + i) * right..(l * mid + i + 1) * right];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += vi * s;
                }
            }
        }
        let mut shape: Vec<usize> = self.shape.clone();
        shape.remove(n - 1);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(Self { shape, data })
    }

    /// Contract every mode with one vector each, `X ×̄₁ v₁ ×̄₂ v₂ … ×̄_N v_N`.
    pub fn contract_all(&self, vs: &[&[T]]) -> Result<T> {
        if vs.len() != self.order() {
            return Err(Error::DimensionMismatch {
                op: "contract_all",
                left: self.shape.clone(),
                right: vs.iter().map(|v| v.len()).collect(),
            });
        }
        let mut cur = self.clone();
        for (m, v) in vs.iter().enumerate().rev() {
            cur = cur.contract_vector(v, m + 1)?;
        }
        Ok(cur.data[0])
    }

    /// Contract every mode except `skip` (1-based); returns a vector of
    /// length `I_skip`.
    pub fn contract_all_but(&self, vs: &[&[T]], skip: usize) -> Result<Vec<T>> {
        self.check_mode(skip)?;
        if vs.len() != self.order() {
            return Err(Error::DimensionMismatch {
                op: "contract_all_but",
                left: self.shape.clone(),
                right: vs.iter().map(|v| v.len()).collect(),
            });
        }
        let mut cur = self.clone();
        for m in (1..=self.order()).rev() {
            if m != skip {
                cur = cur.contract_vector(vs[m - 1], m)?;
            }
        }
        Ok(cur.data)
    }

    /// The `k`-th (0-based) slice along 1-based mode `n`.
    pub fn slice(&self, n: usize, k: usize) -> Result<Self> {
        self.check_mode(n)?;
        let (left, mid, right) = self.split_extents(n);
        if k >= mid {
            return Err(Error::InvalidArgument(format!(
                "slice index {k} out of range for extent {mid}"
            )));
        }
        let mut data = Vec::with_capacity(left * right);
        for l in 0..left {
            data.extend_from_slice(&self.data[(l * mid + k) * right..(l * mid + k + 1) * right]);
        }
        let mut shape = self.shape.clone();
        shape.remove(n - 1);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(Self { shape, data })
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn inner(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch {
                op: "inner",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(crate::matrix::dot(&self.data, &other.data))
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: T, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch {
                op: "add_scaled",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }
}

/// Outer product `v₁ ∘ v₂ ∘ … ∘ v_m`.
pub fn outer_product<T: Scalar>(vs: &[&[T]]) -> Result<DenseTensor<T>> {
    if vs.is_empty() {
        return Err(Error::Empty("outer_product"));
    }
    let shape: Vec<usize> = vs.iter().map(|v| v.len()).collect();
    let len = check_shape(&shape)?;
    let mut data = Vec::with_capacity(len);
    data.extend_from_slice(vs[0]);
    for v in &vs[1..] {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &a in &data {
            next.extend(v.iter().map(|&b| a * b));
        }
        data = next;
    }
    Ok(DenseTensor { shape, data })
}

/// Advance a row-major multi-index; wraps to all zeros after the last one.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return;
        }
        idx[d] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: &[usize]) -> DenseTensor<f64> {
        let n: usize = shape.iter().product();
        DenseTensor::new(shape.to_vec(), (1..=n).map(|x| x as f64).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DenseTensor::<f64>::zeros(&[]).is_err());
        assert!(DenseTensor::<f64>::zeros(&[2, 0]).is_err());
        assert!(DenseTensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn mode_product_errors() {
        let x = seq(&[2, 3, 4]);
        let u = Matrix::<f64>::identity(2);
        assert!(matches!(
            x.mode_n_product(&u, 0),
            Err(Error::ModeOutOfRange { .. })
        ));
        assert!(matches!(
            x.mode_n_product(&u, 4),
            Err(Error::ModeOutOfRange { .. })
        ));
        assert!(matches!(
            x.mode_n_product(&u, 2),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            x.multi_mode_product(&[(&u, 1), (&u, 1)]),
            Err(Error::DuplicateMode(1))
        ));
    }

    #[test]
    fn mode_product_shape() {
        let x = seq(&[2, 3, 4]);
        let u = Matrix::from_fn(5, 3, |i, j| (i + j) as f64);
        assert_eq!(x.mode_n_product(&u, 2).unwrap().shape(), &[2, 5, 4]);
    }

    #[test]
    fn unfold_matrix_mode1_is_itself() {
        let x = seq(&[2, 3]);
        let m = x.unfold(1).unwrap();
        assert_eq!(m.as_slice(), x.data());
        assert_eq!(m.shape(), [2, 3]);
    }

    #[test]
    fn contract_order_one_gives_scalar() {
        let s = 1.0 / 2f64.sqrt();
        let x = DenseTensor::new(vec![2], vec![s, s]).unwrap();
        let c = x.contract_vector(&[s, s], 1).unwrap();
        assert_eq!(c.shape(), &[1]);
        assert!((c.data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn norms() {
        assert_eq!(
            DenseTensor::<f64>::zeros(&[3, 2]).unwrap().frobenius_norm(),
            0.0
        );
        let mut x = DenseTensor::<f64>::zeros(&[3, 2, 2]).unwrap();
        x.set(&[1, 0, 1], 1.0);
        assert_eq!(x.frobenius_norm(), 1.0);
        assert!(x.inner(&seq(&[3, 2])).is_err());
    }

    #[test]
    fn outer_product_basics() {
        assert!(outer_product::<f64>(&[]).is_err());
        let a = [1.0, 2.0];
        let single = outer_product(&[&a[..]]).unwrap();
        assert_eq!(single.shape(), &[2]);
        assert_eq!(single.data(), &a);
        let b = [3.0, 4.0, 5.0];
        let m = outer_product(&[&a[..], &b[..]]).unwrap();
        assert_eq!(m.data(), &[3.0, 4.0, 5.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn slice_selects() {
        let x = seq(&[2, 3, 2]);
        let s = x.slice(2, 1).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[3.0, 4.0, 9.0, 10.0]);
    }
}
