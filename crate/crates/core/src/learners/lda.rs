//! Two-class linear discriminant analysis with a pooled, ridge-regularized
//! covariance.

use serde::Serialize;

use super::LearnerError;
use crate::data::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "F: Scalar")]
pub struct LdaModel<F> {
    /// Row-major 2 × p.
    pub class_means: Vec<F>,
    /// Lower Cholesky factor of `Σ_pooled + λI`, row-major p × p.
    pub pooled_covariance_factor: Vec<F>,
    pub log_priors: [F; 2],
    pub lambda: F,
    /// `(Σ + λI)⁻¹ μ_k`, row-major 2 × p.
    coefficients: Vec<F>,
    /// `−½ μ_kᵀ (Σ + λI)⁻¹ μ_k + log π_k`.
    intercepts: [F; 2],
    n_features: usize,
}

/// In-place Cholesky `A = L Lᵀ`; returns `None` unless `A` is positive definite.
pub fn cholesky<F: Scalar>(a: &[F], p: usize) -> Option<Vec<F>> {
    let mut l = vec![F::zero(); p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > F::zero()) {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Some(l)
}

/// Solve `L Lᵀ x = b` given the lower factor `L`.
pub fn cholesky_solve<F: Scalar>(l: &[F], p: usize, b: &[F]) -> Vec<F> {
    let mut z = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            let t = l[i * p + k] * z[k];
            z[i] -= t;
        }
        z[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            let t = l[k * p + i] * z[k];
            z[i] -= t;
        }
        z[i] /= l[i * p + i];
    }
    z
}

pub fn fit_lda<F: Scalar>(x: Matrix<'_, F>, y: &[u8], lambda: F) -> Result<LdaModel<F>, LearnerError> {
    let (n, p) = (x.n_rows(), x.n_cols());
    let mut counts = [0usize; 2];
    for &l in y {
        counts[l as usize] += 1;
    }
    for class in 0..2u8 {
        if counts[class as usize] < 2 {
            return Err(LearnerError::LdaDegenerate { class, count: counts[class as usize] });
        }
    }

    let mut means = vec![F::zero(); 2 * p];
    for i in 0..n {
        let k = y[i] as usize;
        for (j, &v) in x.row(i).iter().enumerate() {
            means[k * p + j] += v;
        }
    }
    for k in 0..2 {
        let c = F::from_usize_lossy(counts[k]);
        means[k * p..(k + 1) * p].iter_mut().for_each(|m| *m /= c);
    }

    let mut cov = vec![F::zero(); p * p];
    let mut centered = vec![F::zero(); p];
    for i in 0..n {
        let k = y[i] as usize;
        for (j, &v) in x.row(i).iter().enumerate() {
            centered[j] = v - means[k * p + j];
        }
        for a in 0..p {
            let ca = centered[a];
            if ca == F::zero() {
                continue;
            }
            for b in 0..=a {
                cov[a * p + b] += ca * centered[b];
            }
        }
    }
    let dof = F::from_usize_lossy(n - 2);
    for a in 0..p {
        for b in 0..=a {
            let v = cov[a * p + b] / dof;
            cov[a * p + b] = v;
            cov[b * p + a] = v;
        }
        cov[a * p + a] += lambda;
    }

    let factor = cholesky(&cov, p).ok_or(LearnerError::LdaSingular)?;
    let log_priors = [
        F::from_f64_lossy((counts[0] as f64 / n as f64).ln()),
        F::from_f64_lossy((counts[1] as f64 / n as f64).ln()),
    ];
    let mut coefficients = Vec::with_capacity(2 * p);
    let mut intercepts = [F::zero(); 2];
    for k in 0..2 {
        let mu = &means[k * p..(k + 1) * p];
        let w = cholesky_solve(&factor, p, mu);
        let quad: F = mu.iter().zip(&w).map(|(&m, &wi)| m * wi).sum();
        intercepts[k] = -F::HALF * quad + log_priors[k];
        coefficients.extend(w);
    }

    Ok(LdaModel {
        class_means: means,
        pooled_covariance_factor: factor,
        log_priors,
        lambda,
        coefficients,
        intercepts,
        n_features: p,
    })
}

impl<F: Scalar> LdaModel<F> {
    pub fn discriminants(&self, row: &[F]) -> [F; 2] {
        let p = self.n_features;
        let mut d = self.intercepts;
        for (k, dk) in d.iter_mut().enumerate() {
            let w = &self.coefficients[k * p..(k + 1) * p];
            *dk += row.iter().zip(w).map(|(&v, &wi)| v * wi).sum::<F>();
        }
        d
    }

    /// `δ₁(x) − δ₀(x) = wᵀx + c`, returned as `(w, c)`.
    pub fn linear_decision(&self) -> (Vec<F>, F) {
        let p = self.n_features;
        let w = (0..p).map(|j| self.coefficients[p + j] - self.coefficients[j]).collect();
        (w, self.intercepts[1] - self.intercepts[0])
    }

    /// Label 1 iff `δ₁ > δ₀`; equal discriminants give label 0.
    pub fn predict_row(&self, row: &[F]) -> u8 {
        let [d0, d1] = self.discriminants(row);
        u8::from(d1 > d0)
    }

    /// Softmax posterior of label 1 over the two discriminants.
    pub fn vote_share(&self, row: &[F]) -> f64 {
        let [d0, d1] = self.discriminants(row);
        1.0 / (1.0 + (d0.as_f64() - d1.as_f64()).exp())
    }
}
