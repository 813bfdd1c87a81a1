use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Catalog;
use crate::error::{Error, Result};

/// Multivariate normal prior on `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub struct GaussianPrior {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    precision: Vec<f64>,
    /// Lower Cholesky factor of the covariance, row-major.
    chol: Vec<f64>,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct PriorRepr {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<PriorRepr> for GaussianPrior {
    type Error = Error;
    fn try_from(r: PriorRepr) -> Result<Self> {
        GaussianPrior::new(r.mean, r.covariance)
    }
}

impl From<GaussianPrior> for PriorRepr {
    fn from(p: GaussianPrior) -> Self {
        let d = p.dim();
        PriorRepr {
            covariance: (0..d).map(|i| (0..d).map(|j| p.covariance[(i, j)]).collect()).collect(),
            mean: p.mean,
        }
    }
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d < 2 {
            return Err(Error::invalid("prior dimension must be at least 2"));
        }
        if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("covariance must be d x d"));
        }
        if mean.iter().chain(covariance.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("prior parameters must be finite"));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
        for i in 0..d {
            for j in 0..i {
                let scale = cov[(i, j)].abs().max(cov[(j, i)].abs()).max(1.0);
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("covariance must be symmetric"));
                }
            }
        }
        Self::from_matrix(mean, cov)
    }

    fn from_matrix(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
        let l = chol.l();
        let precision = chol.inverse();
        let log_det: f64 = (0..d).map(|i| 2.0 * l[(i, i)].ln()).sum();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean,
            covariance: cov,
            precision: row_major(&precision),
            chol: row_major(&l),
            log_norm,
        })
    }

    /// `N(0, variance * I)`.
    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::invalid("variance must be positive"));
        }
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        Self::new(vec![0.0; d], cov)
    }

    /// Sample mean and covariance of the first `sample_size` catalog items
    /// (all of them when `None`), plus `ridge * I`.
    pub fn fit_to_catalog(catalog: &Catalog, sample_size: Option<usize>, ridge: f64) -> Result<Self> {
        let n = sample_size.unwrap_or(catalog.len()).min(catalog.len());
        if n < 2 {
            return Err(Error::invalid("need at least 2 items to fit a prior"));
        }
        if !(ridge >= 0.0) {
            return Err(Error::invalid("ridge must be nonnegative"));
        }
        let d = catalog.dim();
        let items = &catalog.alternatives()[..n];
        let mut mean = vec![0.0; d];
        for a in items {
            mean.iter_mut().zip(&a.features).for_each(|(m, x)| *m += x / n as f64);
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for a in items {
            let c = DVector::from_iterator(d, a.features.iter().zip(&mean).map(|(x, m)| x - m));
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        Self::from_matrix(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.covariance[(i, j)]
    }

    /// Row-major precision matrix.
    pub(crate) fn precision(&self) -> &[f64] {
        &self.precision
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let d = self.dim();
        let c: Vec<f64> = theta.iter().zip(&self.mean).map(|(t, m)| t - m).collect();
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.precision[i * d..(i + 1) * d];
            quad += c[i] * row.iter().zip(&c).map(|(p, x)| p * x).sum::<f64>();
        }
        self.log_norm - 0.5 * quad
    }

    /// `½ log2((2 pi e)^d det Sigma)`.
    pub fn entropy_bits(&self) -> f64 {
        (0.5 * self.dim() as f64 - self.log_norm) * std::f64::consts::LOG2_E
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| {
                self.mean[i]
                    + self.chol[i * d..i * d + i + 1]
                        .iter()
                        .zip(&g)
                        .map(|(l, x)| l * x)
                        .sum::<f64>()
            })
            .collect()
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect()
}
