//! Gaussian copula: correlation validation with Cholesky factorization,
//! sampling of uniforms, fitting from data, and joint sampling through
//! marginal quantiles.

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{DistributionError, DistributionSpec};
use crate::special::{norm_cdf, norm_quantile};

/// Tolerance for symmetry and unit-diagonal checks.
pub const SHAPE_TOL: f64 = 1e-12;
/// Smallest and largest diagonal jitter tried when fitting.
pub const FIT_JITTER_START: f64 = 1e-10;
pub const FIT_JITTER_MAX: f64 = 1e-6;
/// Minimum rows accepted by [`fit_gaussian_copula`].
pub const MIN_FIT_ROWS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CopulaError {
    #[error("correlation matrix shape error: {0}")]
    Shape(String),
    #[error("correlation matrix is not positive definite: leading minor {minor} fails (pivot {pivot:e})")]
    NotPositiveDefinite { minor: usize, pivot: f64 },
    #[error("dimension mismatch: model has {model} coordinates, got {got} marginals")]
    DimensionMismatch { model: usize, got: usize },
    #[error("need at least {needed} rows to fit a copula, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("sample {value} in row {row}, column {column} is outside its marginal's support")]
    Support { row: usize, column: usize, value: f64 },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

type Result<T> = std::result::Result<T, CopulaError>;

/// A validated correlation matrix with its lower Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CorrelationModel {
    matrix: Vec<Vec<f64>>,
    factor: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for CorrelationModel {
    type Error = CopulaError;

    fn try_from(m: Vec<Vec<f64>>) -> Result<Self> {
        validate_correlation(m)
    }
}

impl From<CorrelationModel> for Vec<Vec<f64>> {
    fn from(model: CorrelationModel) -> Self {
        model.matrix
    }
}

fn check_shape(m: &[Vec<f64>]) -> Result<()> {
    let dim = m.len();
    if dim < 2 {
        return Err(CopulaError::Shape(format!("dimension {dim} < 2")));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != dim {
            return Err(CopulaError::Shape(format!(
                "row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(CopulaError::Shape(format!("entry ({i}, {j}) is not finite")));
        }
        if (row[i] - 1.0).abs() > SHAPE_TOL {
            return Err(CopulaError::Shape(format!("diagonal entry {i} is {} not 1", row[i])));
        }
    }
    for i in 0..dim {
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > SHAPE_TOL {
                return Err(CopulaError::Shape(format!("entries ({i}, {j}) and ({j}, {i}) differ")));
            }
        }
    }
    Ok(())
}

/// Cholesky factorization; the error names the 1-based leading minor that fails.
fn cholesky(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let pivot = m[i][i] - s;
                if !(pivot > 0.0) {
                    return Err(CopulaError::NotPositiveDefinite { minor: i + 1, pivot });
                }
                l[i][i] = pivot.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Validates a correlation matrix and computes its Cholesky factor. No repair
/// is attempted.
pub fn validate_correlation(matrix: Vec<Vec<f64>>) -> Result<CorrelationModel> {
    check_shape(&matrix)?;
    let factor = cholesky(&matrix)?;
    Ok(CorrelationModel { matrix, factor })
}

/// Like [`validate_correlation`], but first adds `jitter` to the diagonal and
/// renormalizes back to unit diagonal (off-diagonals shrink by `1 + jitter`).
pub fn validate_correlation_with_jitter(matrix: Vec<Vec<f64>>, jitter: f64) -> Result<CorrelationModel> {
    check_shape(&matrix)?;
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(CopulaError::Shape(format!("jitter {jitter} must be finite and >= 0")));
    }
    let repaired: Vec<Vec<f64>> = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, v)| if i == j { 1.0 } else { v / (1.0 + jitter) })
                .collect()
        })
        .collect();
    validate_correlation(repaired)
}

impl CorrelationModel {
    pub fn identity(dim: usize) -> Result<Self> {
        let m = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        validate_correlation(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ`.
    pub fn factor(&self) -> &[Vec<f64>] {
        &self.factor
    }

    /// Correlated standard normals `L z`.
    pub fn sample_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        self.factor
            .iter()
            .map(|row| row.iter().zip(&z).map(|(l, z)| l * z).sum())
            .collect()
    }

    /// One draw of uniforms from the copula.
    pub fn sample_copula<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_latent(rng).into_iter().map(to_open_unit).collect()
    }

    /// Joint draw `(F₁⁻¹(u₁), …, Fₙ⁻¹(uₙ))`.
    pub fn joint_sample<R: Rng + ?Sized>(
        &self,
        marginals: &[DistributionSpec],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if marginals.len() != self.dim() {
            return Err(CopulaError::DimensionMismatch {
                model: self.dim(),
                got: marginals.len(),
            });
        }
        let u = self.sample_copula(rng);
        u.iter()
            .zip(marginals)
            .map(|(u, m)| m.quantile(*u).map_err(CopulaError::from))
            .collect()
    }
}

// Φ(z) clamped to the open unit interval so extreme latent draws stay invertible.
fn to_open_unit(z: f64) -> f64 {
    norm_cdf(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Fits a Gaussian copula: `u = F(x)` per column, Pearson correlation of
/// `Φ⁻¹(u)`, then validation with escalating diagonal jitter if needed.
pub fn fit_gaussian_copula(samples: &[Vec<f64>], marginals: &[DistributionSpec]) -> Result<CorrelationModel> {
    let dim = marginals.len();
    if samples.len() < MIN_FIT_ROWS {
        return Err(CopulaError::TooFewRows {
            needed: MIN_FIT_ROWS,
            got: samples.len(),
        });
    }
    let mut latent: Vec<Vec<f64>> = vec![Vec::with_capacity(samples.len()); dim];
    for (row_idx, row) in samples.iter().enumerate() {
        if row.len() != dim {
            return Err(CopulaError::DimensionMismatch { model: row.len(), got: dim });
        }
        for (column, (&x, m)) in row.iter().zip(marginals).enumerate() {
            if !m.in_support(x) {
                return Err(CopulaError::Support { row: row_idx, column, value: x });
            }
            let u = m.cdf(x).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            latent[column].push(norm_quantile(u));
        }
    }

    let n = samples.len() as f64;
    let centered: Vec<Vec<f64>> = latent
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n;
            col.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut corr = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        corr[i][i] = 1.0;
        for j in 0..i {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = if norms[i] > 0.0 && norms[j] > 0.0 {
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }

    match validate_correlation(corr.clone()) {
        Ok(model) => Ok(model),
        Err(CopulaError::NotPositiveDefinite { .. }) => {
            let mut jitter = FIT_JITTER_START;
            loop {
                match validate_correlation_with_jitter(corr.clone(), jitter) {
                    Ok(model) => {
                        log::debug!("copula fit repaired with diagonal jitter {jitter:e}");
                        return Ok(model);
                    }
                    Err(e @ CopulaError::NotPositiveDefinite { .. }) => {
                        if jitter >= FIT_JITTER_MAX {
                            return Err(e);
                        }
                        jitter *= 10.0;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Err(e) => Err(e),
    }
}
