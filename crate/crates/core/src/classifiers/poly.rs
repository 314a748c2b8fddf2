//! Degree-2 polynomial network: linear least squares over the quadratic
//! expansion of a 3-band pixel, one output per class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::SampleSet;
use crate::scalar::Scalar;

pub const POLY_INPUTS: usize = 3;
pub const POLY_TERMS: usize = 10;

/// Ridge weight relative to the mean diagonal of the normal matrix.
pub const RIDGE_FACTOR: f64 = 1e-8;

/// `[1, x1, x2, x3, x1², x2², x3², x1x2, x1x3, x2x3]`.
pub fn expand_quadratic<T: Scalar>(x: &[T; 3]) -> [T; POLY_TERMS] {
    let [a, b, c] = *x;
    [T::one(), a, b, c, a * a, b * b, c * c, a * b, a * c, b * c]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyModel<T = f64> {
    /// `weights[class][term]`.
    pub weights: [[T; POLY_TERMS]; 3],
}

impl<T: Scalar> PolyModel<T> {
    pub fn new(weights: [[T; POLY_TERMS]; 3]) -> Result<Self> {
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("polynomial weights must be finite".into()));
        }
        Ok(PolyModel { weights })
    }

    pub fn scores(&self, x: &[T]) -> [T; 3] {
        let phi = expand_quadratic(&[x[0], x[1], x[2]]);
        self.weights.map(|row| row.iter().zip(&phi).map(|(w, p)| *w * *p).sum())
    }
}

/// Solves `A·X = B` for symmetric positive definite `A` (n×n, row-major)
/// with `m` right-hand sides by Cholesky factorization.
pub(crate) fn cholesky_solve<T: Scalar>(a: &[T], b: &[T], n: usize, m: usize) -> Result<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return Err(Error::Numerical(format!(
                        "normal matrix not positive definite at pivot {i} ({s})"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut x = b.to_vec();
    for c in 0..m {
        for i in 0..n {
            let mut s = x[i * m + c];
            for k in 0..i {
                s -= l[i * n + k] * x[k * m + c];
            }
            x[i * m + c] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i * m + c];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k * m + c];
            }
            x[i * m + c] = s / l[i * n + i];
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("least-squares solution is not finite".into()));
    }
    Ok(x)
}

/// Ridge-regularized least-squares fit of one-hot class targets on the
/// quadratic expansion. Deterministic.
pub fn train_polynomial<T: Scalar>(samples: &SampleSet<T>) -> Result<PolyModel<T>> {
    if samples.feature_dim() != POLY_INPUTS {
        return Err(Error::Arity { expected: POLY_INPUTS, found: samples.feature_dim() });
    }
    if samples.len() < POLY_TERMS {
        return Err(Error::EmptySet(format!(
            "polynomial fit needs at least {POLY_TERMS} samples, got {}",
            samples.len()
        )));
    }
    if samples.class_count() < 2 {
        return Err(Error::Degenerate("polynomial fit needs at least two classes".into()));
    }
    let mut gram = vec![T::zero(); POLY_TERMS * POLY_TERMS];
    let mut rhs = vec![T::zero(); POLY_TERMS * 3];
    for (x, label) in samples.iter() {
        let phi = expand_quadratic(&[x[0], x[1], x[2]]);
        for i in 0..POLY_TERMS {
            for j in 0..=i {
                gram[i * POLY_TERMS + j] += phi[i] * phi[j];
            }
            rhs[i * 3 + label.index()] += phi[i];
        }
    }
    for i in 0..POLY_TERMS {
        for j in 0..i {
            gram[j * POLY_TERMS + i] = gram[i * POLY_TERMS + j];
        }
    }
    let trace: T = (0..POLY_TERMS).map(|i| gram[i * POLY_TERMS + i]).sum();
    let lambda = T::lit(RIDGE_FACTOR) * trace / T::lit(POLY_TERMS as f64);
    for i in 0..POLY_TERMS {
        gram[i * POLY_TERMS + i] += lambda;
    }
    let sol = cholesky_solve(&gram, &rhs, POLY_TERMS, 3)?;
    let mut weights = [[T::zero(); POLY_TERMS]; 3];
    for (k, row) in weights.iter_mut().enumerate() {
        for (i, w) in row.iter_mut().enumerate() {
            *w = sol[i * 3 + k];
        }
    }
    PolyModel::new(weights)
}
