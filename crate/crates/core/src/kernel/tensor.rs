use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use super::KernelError;
use crate::rng::seeded;

/// Dense row-major real tensor.
///
/// A rank-0 tensor (empty shape) holds a single scalar.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, KernelError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(KernelError::InvalidShape { shape: shape.to_vec() });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(KernelError::DataLength { expected, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite { op: "construct" });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    /// Standard normal entries drawn from `rng`.
    pub fn gaussian<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        Self::from_fn(shape, |_| rng.sample(StandardNormal))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize), KernelError> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(KernelError::RankMismatch { op: "2-d op", expected: 2, shape: self.shape.clone() }),
        }
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn transposed(&self) -> Result<Tensor, KernelError> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor::from_parts(vec![c, r], out))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// Standard normal tensor from a fresh generator seeded with `seed`.
pub fn gaussian_sample(shape: &[usize], seed: u64) -> Tensor {
    Tensor::gaussian(shape, &mut seeded(seed))
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).field("data", &self.data).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(
            Tensor::new(&[2, 3], vec![0.0; 5]),
            Err(KernelError::DataLength { expected: 6, got: 5 })
        ));
    }

    #[test]
    fn rejects_non_finite_and_zero_dims() {
        assert!(Tensor::new(&[1], vec![f64::NAN]).is_err());
        assert!(Tensor::new(&[0, 2], vec![]).is_err());
    }

    #[test]
    fn gaussian_is_seed_deterministic() {
        let a = gaussian_sample(&[4, 4], 7);
        let b = gaussian_sample(&[4, 4], 7);
        let c = gaussian_sample(&[4, 4], 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
