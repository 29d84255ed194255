//! Minimal dense-network toolkit: row-major batch matrices, the five layer
//! kinds used by the model, exact backward passes and finite-difference
//! gradient checking.
//!
//! Everything is generic over [`Real`] so the same code trains in `f32` and
//! is gradient-checked in `f64`.

mod gradcheck;
mod layers;

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use gradcheck::{
    gradient_check, push_kink_signs, BlockError, Differentiable, GradReport, LayerProbe, FD_STEPS,
};
pub use layers::{
    Affine, BoundedSigmoid, Dropout, InstanceNorm, Layer, PRelu, Param, Tape, INSTANCE_NORM_EPS,
    PRELU_INIT,
};

use crate::error::{Error, Result};

/// Floating-point element type of network tensors.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tag stored in checkpoints.
    const DTYPE: u8;
    const BYTES: usize;

    /// `C ← α·A·B + β·C` over strided views.
    ///
    /// # Safety
    /// Every strided index of the `m×k`, `k×n` and `m×n` views must lie
    /// inside the corresponding slice.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn f(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: u8 = 4;
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        unsafe {
            matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const DTYPE: u8 = 8;
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        unsafe {
            matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Row-major `rows × cols` matrix; rows are batch samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix::from_vec",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equal-length rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "Matrix::from_rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::f(v.to_f64().unwrap()))
                .collect(),
        }
    }
}

/// `A·Bᵀ` for `A: r×k`, `B: n×k`.
pub fn matmul_nt<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimension");
    mul_nt(a, &b.data, b.rows)
}

/// `A·B` for `A: r×k`, `B: k×n`.
pub fn matmul_nn<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    assert_eq!(a.cols, b.rows, "matmul_nn inner dimension");
    mul_nn(a, &b.data, b.cols)
}

/// `A·Bᵀ` with `B` given as a row-major `n×a.cols` slice.
pub(crate) fn mul_nt<T: Real>(a: &Matrix<T>, b: &[T], n: usize) -> Matrix<T> {
    let k = a.cols;
    assert_eq!(b.len(), n * k, "mul_nt operand size");
    let mut c = Matrix::zeros(a.rows, n);
    if a.rows == 0 || n == 0 {
        return c;
    }
    // SAFETY: views match the asserted shapes of the three buffers.
    unsafe {
        T::gemm_raw(
            a.rows,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            T::zero(),
            c.data.as_mut_ptr(),
            n as isize,
            1,
        )
    }
    c
}

/// `A·B` with `B` given as a row-major `a.cols×n` slice.
pub(crate) fn mul_nn<T: Real>(a: &Matrix<T>, b: &[T], n: usize) -> Matrix<T> {
    let k = a.cols;
    assert_eq!(b.len(), k * n, "mul_nn operand size");
    let mut c = Matrix::zeros(a.rows, n);
    if a.rows == 0 || n == 0 {
        return c;
    }
    // SAFETY: views match the asserted shapes of the three buffers.
    unsafe {
        T::gemm_raw(
            a.rows,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            T::zero(),
            c.data.as_mut_ptr(),
            n as isize,
            1,
        )
    }
    c
}

/// `C += Aᵀ·B` for `A: r×m`, `B: r×n`, `C: m×n` row-major.
pub fn accumulate_tn<T: Real>(c: &mut [T], a: &Matrix<T>, b: &Matrix<T>) {
    assert_eq!(a.rows, b.rows, "accumulate_tn batch dimension");
    assert_eq!(c.len(), a.cols * b.cols, "accumulate_tn output size");
    if a.rows == 0 || c.is_empty() {
        return;
    }
    // SAFETY: views match the asserted shapes of the three buffers.
    unsafe {
        T::gemm_raw(
            a.cols,
            a.rows,
            b.cols,
            T::one(),
            a.data.as_ptr(),
            1,
            a.cols as isize,
            b.data.as_ptr(),
            b.cols as isize,
            1,
            T::one(),
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn products_match_naive_loops() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let want = naive(&a, &b, m, k, n);

        let am = Matrix::from_vec(m, k, a.clone()).unwrap();
        let bm = Matrix::from_vec(k, n, b.clone()).unwrap();
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-13);
        assert!(close(matmul_nn(&am, &bm).data(), &want));

        let bt = Matrix::from_vec(n, k, transpose(&b, k, n)).unwrap();
        assert!(close(matmul_nt(&am, &bt).data(), &want));

        let at = Matrix::from_vec(k, m, transpose(&a, m, k)).unwrap();
        let mut c = vec![1.0; m * n];
        accumulate_tn(&mut c, &at, &bm);
        let shifted: Vec<f64> = want.iter().map(|v| v + 1.0).collect();
        assert!(close(&c, &shifted));
    }

    #[test]
    fn from_rows_checks_widths() {
        assert!(Matrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let m = Matrix::<f32>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }
}
