//! Fréchet distance between Gaussians fitted to two sample sets.
//!
//! `d² = ‖μ₁ − μ₂‖² + tr Σ₁ + tr Σ₂ − 2·tr (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2}`.
//! The last trace equals the sum of singular values of `Σ₁^{1/2} Σ₂^{1/2}`,
//! which one-sided Jacobi computes to high relative accuracy.

use alloc::vec;
use alloc::vec::Vec;

use super::MetricsError;

/// Added to each covariance diagonal.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

const SWEEPS: usize = 100;

/// Row-major square matrix helpers.
fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and column eigenvectors (row-major `n × n`).
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..SWEEPS {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j] * a[i * n + j]).sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= f64::EPSILON * f64::EPSILON * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Principal square root of a symmetric PSD matrix; negative eigenvalues
/// are clamped to zero.
pub fn sqrt_psd(a: &[f64], n: usize) -> Vec<f64> {
    let (w, v) = symmetric_eigen(a, n);
    let mut out = vec![0.0; n * n];
    for (k, &lam) in w.iter().enumerate() {
        let r = libm::sqrt(lam.max(0.0));
        for i in 0..n {
            let vik = v[i * n + k] * r;
            for j in 0..n {
                out[i * n + j] += vik * v[j * n + k];
            }
        }
    }
    out
}

/// Sum of singular values of a square matrix (one-sided Jacobi).
pub fn nuclear_norm(a: &[f64], n: usize) -> f64 {
    // work on columns of a copy
    let mut u = a.to_vec();
    for _ in 0..SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..n {
                    let (x, y) = (u[k * n + p], u[k * n + q]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for k in 0..n {
                    let (x, y) = (u[k * n + p], u[k * n + q]);
                    u[k * n + p] = c * x - s * y;
                    u[k * n + q] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (0..n).map(|j| libm::sqrt((0..n).map(|k| u[k * n + j] * u[k * n + j]).sum::<f64>())).sum()
}

/// Sample mean and unbiased covariance (plus the ridge) of row vectors.
pub fn fit_gaussian(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    let n = rows.len();
    if n < 2 {
        return Err(MetricsError::InsufficientSamples { got: n, need: 2 });
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(MetricsError::DimensionMismatch);
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let c = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = c;
            cov[j * d + i] = c;
        }
        cov[i * d + i] += COVARIANCE_RIDGE;
    }
    Ok((mean, cov))
}

/// Fréchet distance between Gaussian fits of two sets of equal-length rows.
pub fn frechet_descriptor_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, MetricsError> {
    let (m1, s1) = fit_gaussian(a)?;
    let (m2, s2) = fit_gaussian(b)?;
    let d = m1.len();
    if m2.len() != d {
        return Err(MetricsError::DimensionMismatch);
    }
    let mean_term: f64 = m1.iter().zip(&m2).map(|(x, y)| (x - y) * (x - y)).sum();
    let tr1: f64 = (0..d).map(|i| s1[i * d + i]).sum();
    let tr2: f64 = (0..d).map(|i| s2[i * d + i]).sum();
    let cross = nuclear_norm(&matmul(&sqrt_psd(&s1, d), &sqrt_psd(&s2, d), d), d);
    Ok((mean_term + tr1 + tr2 - 2.0 * cross).max(0.0))
}
