use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use crate::error::{Error, Result};

/// Which floating-point width a model runs in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// 32-bit, used for training and inference.
    Standard,
    /// 64-bit, required by finite-difference gradient checks.
    Verification,
}

/// Scalar element type of a [`Tensor`].
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + Default
    + Debug
    + Display
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    const PRECISION: Precision;
    const BYTES: usize;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    fn to_bits_u64(self) -> u64;
}

impl Float for f32 {
    const PRECISION: Precision = Precision::Standard;
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
}

impl Float for f64 {
    const PRECISION: Precision = Precision::Verification;
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
}

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&s| s == 0) {
            return Err(Error::Invalid(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape("Tensor::new", &shape, &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    /// Builds a matrix from `f64` rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().map(|&x| T::of(x))).collect();
        Self {
            shape: vec![rows.len(), cols],
            data,
        }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), values.iter().map(|&x| T::of(x)).collect())
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    /// Number of rows when viewed as a matrix (leading extent).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all trailing extents.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }

    pub(crate) fn as_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::Invalid(format!(
                "{op} expects a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }
}

/// `out += a (n×k) · b (k×p)`.
pub(crate) fn gemm_nn<T: Float>(a: &[T], b: &[T], out: &mut [T], n: usize, k: usize, p: usize) {
    for i in 0..n {
        let out_row = &mut out[i * p..(i + 1) * p];
        for (c, &aic) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aic == T::zero() {
                continue;
            }
            let b_row = &b[c * p..(c + 1) * p];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aic * bv;
            }
        }
    }
}

/// `out += a (n×k) · bᵀ` where `b` is `p×k`.
pub(crate) fn gemm_nt<T: Float>(a: &[T], b: &[T], out: &mut [T], n: usize, k: usize, p: usize) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..p {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            out[i * p + j] += acc;
        }
    }
}

/// `out += aᵀ · b` where `a` is `n×k` and `b` is `n×p`; `out` is `k×p`.
pub(crate) fn gemm_tn<T: Float>(a: &[T], b: &[T], out: &mut [T], n: usize, k: usize, p: usize) {
    for i in 0..n {
        let b_row = &b[i * p..(i + 1) * p];
        for (c, &aic) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aic == T::zero() {
                continue;
            }
            let out_row = &mut out[c * p..(c + 1) * p];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aic * bv;
            }
        }
    }
}

pub fn matmul<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, k) = a.as_matrix("matmul")?;
    let (k2, p) = b.as_matrix("matmul")?;
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = Tensor::zeros(&[n, p]);
    gemm_nn(a.data(), b.data(), out.data_mut(), n, k, p);
    Ok(out)
}

/// `a · bᵀ`.
pub fn matmul_nt<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, k) = a.as_matrix("matmul_nt")?;
    let (p, k2) = b.as_matrix("matmul_nt")?;
    if k != k2 {
        return Err(Error::shape("matmul_nt", a.shape(), b.shape()));
    }
    let mut out = Tensor::zeros(&[n, p]);
    gemm_nt(a.data(), b.data(), out.data_mut(), n, k, p);
    Ok(out)
}

/// Same-padded 1-D convolution over the token axis.
///
/// `seq` is `n×d_in`, `kernel` is `w×d_in×d_out` with odd `w`; positions outside the
/// sequence read as zero.
pub fn conv1d<T: Float>(seq: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d_in, w, d_out) = conv_dims(seq, kernel)?;
    let mut out = Tensor::zeros(&[n, d_out]);
    let r = w / 2;
    let (x, k, o) = (seq.data(), kernel.data(), &mut out.data);
    for i in 0..n {
        for t in 0..w {
            let Some(src) = (i + t).checked_sub(r).filter(|&s| s < n) else {
                continue;
            };
            let k_t = &k[t * d_in * d_out..(t + 1) * d_in * d_out];
            gemm_nn(
                &x[src * d_in..(src + 1) * d_in],
                k_t,
                &mut o[i * d_out..(i + 1) * d_out],
                1,
                d_in,
                d_out,
            );
        }
    }
    Ok(out)
}

pub(crate) fn conv_dims<T: Float>(
    seq: &Tensor<T>,
    kernel: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (n, d_in) = seq.as_matrix("conv1d")?;
    if kernel.shape().len() != 3 || kernel.shape()[1] != d_in {
        return Err(Error::shape("conv1d", seq.shape(), kernel.shape()));
    }
    let (w, d_out) = (kernel.shape()[0], kernel.shape()[2]);
    if w % 2 == 0 {
        return Err(Error::Invalid(format!(
            "conv1d window must be odd, got {w}"
        )));
    }
    Ok((n, d_in, w, d_out))
}

pub fn relu<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    out
}

/// Row-wise softmax. Entries equal to `-inf` are masked and receive exactly zero
/// weight; a row with no finite entry is rejected.
pub fn softmax_rows<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c) = x.as_matrix("softmax_rows")?;
    let mut out = Tensor::zeros(&[n, c]);
    for i in 0..n {
        let row = x.row(i);
        let max = row
            .iter()
            .copied()
            .filter(|v| *v != T::neg_infinity())
            .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.max(v))))
            .ok_or_else(|| Error::Invalid(format!("softmax row {i} is fully masked")))?;
        let dst = out.row_mut(i);
        let mut total = T::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = if v == T::neg_infinity() {
                T::zero()
            } else {
                (v - max).exp()
            };
            total += *d;
        }
        for d in dst.iter_mut() {
            *d = *d / total;
        }
    }
    Ok(out)
}

/// Feature-wise concatenation of matrices with equal row counts.
pub fn concat_cols<T: Float>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Invalid("concat of zero tensors".into()))?;
    let n = first.as_matrix("concat_cols")?.0;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (r, c) = p.as_matrix("concat_cols")?;
        if r != n {
            return Err(Error::shape("concat_cols", first.shape(), p.shape()));
        }
        widths.push(c);
    }
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(n * total);
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.row(i));
        }
    }
    Tensor::new(vec![n, total], data)
}

/// Lower bound applied to probabilities before taking the log in cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

/// `-ln(max(pred[gold], LOG_FLOOR))` for a single distribution.
pub fn cross_entropy<T: Float>(pred: &[T], gold: usize) -> Result<T> {
    if gold >= pred.len() {
        return Err(Error::Invalid(format!(
            "gold class {gold} out of range for {} classes",
            pred.len()
        )));
    }
    if cfg!(debug_assertions) {
        let total: f64 = pred.iter().map(|p| p.as_f64()).sum();
        if (total - 1.0).abs() > 1e-6 || pred.iter().any(|p| *p < T::zero()) {
            return Err(Error::Invalid(format!(
                "cross_entropy expects a distribution, row sums to {total}"
            )));
        }
    }
    Ok(-pred[gold].max(T::of(LOG_FLOOR)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_and_dot() {
        let eye = Tensor::<f64>::identity(2);
        let col = Tensor::from_rows(&[&[3.0], &[4.0]]);
        assert_eq!(matmul(&eye, &col).unwrap(), col);
        let row = Tensor::<f64>::from_rows(&[&[1.0, 2.0]]);
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_rejects_mismatch_with_both_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[2, 3]);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("matmul"), "{err}");
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::<f64>::from_rows(&[&[1.0], &[-2.0], &[3.0]]);
        let k = Tensor::from_f64(&[3, 1, 1], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(conv1d(&x, &k).unwrap(), x);
    }

    #[test]
    fn conv_zero_padded_difference() {
        let x = Tensor::<f64>::from_rows(&[&[1.0], &[2.0], &[3.0]]);
        let k = Tensor::from_f64(&[3, 1, 1], &[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(conv1d(&x, &k).unwrap().data(), &[-2.0, -2.0, 2.0]);
    }

    #[test]
    fn conv_rejects_even_window() {
        let x = Tensor::<f64>::zeros(&[3, 1]);
        let k = Tensor::<f64>::zeros(&[2, 1, 1]);
        assert!(conv1d(&x, &k).is_err());
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&Tensor::<f64>::from_rows(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        for x in [-30.0, 0.0, 7.5, 1e3] {
            let t = Tensor::<f64>::new(vec![1, 2], vec![x, f64::NEG_INFINITY]).unwrap();
            assert_eq!(softmax_rows(&t).unwrap().data(), &[1.0, 0.0]);
        }
        let masked = Tensor::<f64>::new(vec![1, 2], vec![f64::NEG_INFINITY; 2]).unwrap();
        assert!(softmax_rows(&masked).is_err());
    }

    #[test]
    fn relu_clamps_negatives() {
        let t = Tensor::<f32>::from_rows(&[&[-1.0, 2.0]]);
        assert_eq!(relu(&t).data(), &[0.0, 2.0]);
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = [0.25f64; 4];
        assert!((cross_entropy(&uniform, 0).unwrap() - 1.386_294_361_119_890_6).abs() < 1e-12);
        assert_eq!(cross_entropy(&[1.0f64, 0.0], 0).unwrap(), 0.0);
        let clamped = cross_entropy(&[1.0f64, 0.0], 1).unwrap();
        assert!((clamped - (1e12f64).ln()).abs() < 1e-9);
        assert!(cross_entropy(&[0.7f64, 0.7], 0).is_err());
    }

    #[test]
    fn tensor_rejects_bad_length() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::new(vec![0, 2], vec![]).is_err());
    }
}
