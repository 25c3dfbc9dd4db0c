use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use super::Standardizer;

pub const LENGTHSCALE_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
pub const SIGNAL_VAR_GRID: [f64; 3] = [0.5, 1.0, 2.0];
pub const BASE_NOISE_VAR: f64 = 1e-6;
pub const MAX_NOISE_VAR: f64 = 1e-2;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GpError {
    #[error("no observations")]
    Empty,
    #[error("inputs have inconsistent dimensions")]
    Dimension,
    #[error("non-finite target value")]
    NonFinite,
    #[error("SingularKernel: Cholesky failed up to jitter {0}")]
    SingularKernel(f64),
}

/// Isotropic Matérn-5/2 covariance.
pub fn matern52(r: f64, lengthscale: f64, signal_var: f64) -> f64 {
    let s = 5f64.sqrt() * r / lengthscale;
    signal_var * (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn kernel_matrix(x: &[Vec<f64>], lengthscale: f64, signal_var: f64, noise_var: f64) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        let k = matern52(distance(&x[i], &x[j]), lengthscale, signal_var);
        if i == j {
            k + noise_var
        } else {
            k
        }
    })
}

struct Cell {
    lengthscale: f64,
    signal_var: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
}

fn fit_cell(x: &[Vec<f64>], y: &DVector<f64>, lengthscale: f64, signal_var: f64, noise_var: f64) -> Option<Cell> {
    let chol = kernel_matrix(x, lengthscale, signal_var, noise_var).cholesky()?;
    let alpha = chol.solve(y);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let n = y.len() as f64;
    let lml = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    lml.is_finite().then_some(Cell { lengthscale, signal_var, chol, alpha, lml })
}

/// Exact GP regression on unit-cube inputs with standardized targets.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    standardizer: Standardizer,
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub log_marginal_likelihood: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_std: Vec<f64>,
}

impl GpModel {
    /// Fits with the default hyperparameter grid.
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self, GpError> {
        Self::fit_grid(x, y, &LENGTHSCALE_GRID, &SIGNAL_VAR_GRID)
    }

    /// Picks `(lengthscale, signal_var)` maximizing the log marginal
    /// likelihood over the grid (first maximum in grid order wins). Jitter
    /// starts at 1e-6 and grows tenfold while no cell factorizes.
    pub fn fit_grid(
        x: &[Vec<f64>],
        y: &[f64],
        lengthscales: &[f64],
        signal_vars: &[f64],
    ) -> Result<Self, GpError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(if x.is_empty() { GpError::Empty } else { GpError::Dimension });
        }
        let dim = x[0].len();
        if x.iter().any(|p| p.len() != dim) {
            return Err(GpError::Dimension);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite);
        }
        let standardizer = Standardizer::fit(y);
        let y_std: Vec<f64> = y.iter().map(|&v| standardizer.apply(v)).collect();
        let yv = DVector::from_column_slice(&y_std);

        let mut noise_var = BASE_NOISE_VAR;
        loop {
            let mut best: Option<Cell> = None;
            for &l in lengthscales {
                for &s in signal_vars {
                    if let Some(cell) = fit_cell(x, &yv, l, s, noise_var) {
                        if best.as_ref().is_none_or(|b| cell.lml > b.lml) {
                            best = Some(cell);
                        }
                    }
                }
            }
            if let Some(cell) = best {
                return Ok(Self {
                    x: x.to_vec(),
                    standardizer,
                    lengthscale: cell.lengthscale,
                    signal_var: cell.signal_var,
                    noise_var,
                    log_marginal_likelihood: cell.lml,
                    chol: cell.chol,
                    alpha: cell.alpha,
                    y_std,
                });
            }
            if noise_var >= MAX_NOISE_VAR {
                return Err(GpError::SingularKernel(noise_var));
            }
            noise_var = (noise_var * 10.0).min(MAX_NOISE_VAR);
        }
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Smallest observed target, in standardized units.
    pub fn best_standardized(&self) -> f64 {
        self.y_std.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Posterior mean and variance in standardized target units.
    pub fn posterior_standardized(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| matern52(distance(xi, x), self.lengthscale, self.signal_var)),
        );
        let mu = k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a nonzero diagonal");
        let var = (self.signal_var - v.dot(&v)).max(0.0);
        (mu, var)
    }

    /// Posterior mean and variance in the original target units.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let (mu, var) = self.posterior_standardized(x);
        let s = self.standardizer.std;
        (self.standardizer.invert(mu), var * s * s)
    }
}
