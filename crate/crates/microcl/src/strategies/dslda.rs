//! Streaming linear discriminant analysis over a frozen feature extractor.
//!
//! The deep network is used only as a fixed feature map; classification
//! happens in closed form on top of streaming second-order statistics:
//!
//! * per-class feature means, updated one sample at a time,
//! * a single pooled within-class scatter matrix, updated with a Welford
//!   cross-product step so the streaming result equals the two-pass batch
//!   statistics up to floating-point noise regardless of arrival order
//!   within a class.
//!
//! Prediction shrinks the pooled covariance toward the identity,
//! `S' = (1 - s) * S + s * I`, factorizes it with a Cholesky decomposition,
//! and scores each seen class with the Gaussian discriminant
//!
//! ```text
//! d_c(x) = mu_c' S'^-1 x - 0.5 * mu_c' S'^-1 mu_c + ln(n_c / n)
//! ```
//!
//! Ties resolve to the lowest class index; with no data at all the
//! degenerate prediction is class 0.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct DsldaState {
    classes: usize,
    dim: usize,
    counts: Vec<u64>,
    /// `[classes, dim]` per-class running means.
    means: Vec<f64>,
    /// `[dim, dim]` pooled within-class scatter (sum of centered outer
    /// products), shared across classes.
    scatter: Vec<f64>,
    /// Identity-shrinkage coefficient in `[0, 1]`.
    pub shrinkage: f64,
}

impl DsldaState {
    pub fn new(classes: usize, dim: usize, shrinkage: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&shrinkage) {
            return Err(Error::Config(format!(
                "shrinkage must lie in [0, 1], got {shrinkage}"
            )));
        }
        Ok(DsldaState {
            classes,
            dim,
            counts: vec![0; classes],
            means: vec![0.0; classes * dim],
            scatter: vec![0.0; dim * dim],
            shrinkage,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self, class: usize) -> u64 {
        self.counts[class]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class * self.dim..(class + 1) * self.dim]
    }

    /// Stored scalars (means + scatter + counts), for overhead accounting.
    pub fn stored_scalars(&self) -> usize {
        self.means.len() + self.scatter.len() + self.counts.len()
    }

    /// Consume one feature vector with its label.
    pub fn update(&mut self, x: &[f64], y: usize) -> Result<()> {
        if y >= self.classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: self.classes,
            });
        }
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch {
                layer: "lda features".into(),
                expected: format!("{}", self.dim),
                got: format!("{}", x.len()),
            });
        }
        self.counts[y] += 1;
        let n = self.counts[y] as f64;
        let mean = &mut self.means[y * self.dim..(y + 1) * self.dim];
        // delta_old = x - mu_old; after the mean step the new residual is
        // delta_old * (n-1)/n, so the Welford cross-product update is the
        // symmetric rank-1 term (n-1)/n * delta_old delta_old'.
        let delta: Vec<f64> = x.iter().zip(mean.iter()).map(|(a, b)| a - b).collect();
        for (m, d) in mean.iter_mut().zip(&delta) {
            *m += d / n;
        }
        let coef = (n - 1.0) / n;
        for (i, d_i) in delta.iter().enumerate() {
            let di = coef * d_i;
            let row = &mut self.scatter[i * self.dim..(i + 1) * self.dim];
            for (s, d_j) in row.iter_mut().zip(&delta) {
                *s += di * d_j;
            }
        }
        Ok(())
    }

    /// Pooled within-class covariance (scatter / total count).
    pub fn covariance(&self) -> Result<Vec<f64>> {
        let n = self.total();
        if n == 0 {
            return Err(Error::Numerical(
                "covariance requested before any sample was seen".into(),
            ));
        }
        Ok(self.scatter.iter().map(|v| v / n as f64).collect())
    }

    fn shrunk_covariance(&self) -> Result<Vec<f64>> {
        let mut cov = self.covariance()?;
        let s = self.shrinkage;
        for v in cov.iter_mut() {
            *v *= 1.0 - s;
        }
        for i in 0..self.dim {
            cov[i * self.dim + i] += s;
        }
        Ok(cov)
    }

    /// Class predictions for an `[n, dim]` feature batch.
    ///
    /// Only classes with at least one seen sample compete; before any data
    /// at all, every row degenerates to class 0.
    pub fn predict(&self, features: &Tensor) -> Result<Vec<usize>> {
        if features.item_len() != self.dim {
            return Err(Error::ShapeMismatch {
                layer: "lda features".into(),
                expected: format!("{}", self.dim),
                got: format!("{}", features.item_len()),
            });
        }
        let seen: Vec<usize> = (0..self.classes).filter(|&c| self.counts[c] > 0).collect();
        if seen.is_empty() {
            return Ok(vec![0; features.batch()]);
        }
        let total = self.total() as f64;
        let chol = Cholesky::factor(&self.shrunk_covariance()?, self.dim)?;
        // Precompute w_c = S'^-1 mu_c and the constant term per seen class.
        let mut w = Vec::with_capacity(seen.len());
        let mut b = Vec::with_capacity(seen.len());
        for &c in &seen {
            let mu = self.mean(c);
            let wc = chol.solve(mu);
            let quad: f64 = mu.iter().zip(&wc).map(|(m, v)| m * v).sum();
            let prior = (self.counts[c] as f64 / total).ln();
            b.push(prior - 0.5 * quad);
            w.push(wc);
        }
        let mut out = Vec::with_capacity(features.batch());
        for i in 0..features.batch() {
            let x = features.item(i);
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (k, &c) in seen.iter().enumerate() {
                let score: f64 = b[k] + w[k].iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
                // Strict '>' keeps the lowest class index on exact ties.
                if score > best_score {
                    best_score = score;
                    best = c;
                }
            }
            out.push(best);
        }
        Ok(out)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// with forward/back-substitution solves.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Vec<f64>,
    dim: usize,
}

impl Cholesky {
    /// Factor a row-major `dim x dim` SPD matrix as `A = L L'`.
    pub fn factor(a: &[f64], dim: usize) -> Result<Self> {
        if a.len() != dim * dim {
            return Err(Error::ShapeMismatch {
                layer: "cholesky".into(),
                expected: format!("{}x{dim}", dim),
                got: format!("{} values", a.len()),
            });
        }
        let mut l = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut sum = a[i * dim + j];
                for k in 0..j {
                    sum -= l[i * dim + k] * l[j * dim + k];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::Numerical(format!(
                            "matrix is not positive definite (pivot {i} = {sum}); \
                             increase the shrinkage"
                        )));
                    }
                    l[i * dim + j] = sum.sqrt();
                } else {
                    l[i * dim + j] = sum / l[j * dim + j];
                }
            }
        }
        Ok(Cholesky { l, dim })
    }

    /// Solve `A x = b` via the two triangular systems.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[i * d + k] * y[k];
            }
            y[i] = sum / self.l[i * d + i];
        }
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let mut sum = y[i];
            for k in i + 1..d {
                sum -= self.l[k * d + i] * x[k];
            }
            x[i] = sum / self.l[i * d + i];
        }
        x
    }
}
