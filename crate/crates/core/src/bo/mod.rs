//! GP-EI Bayesian optimization: a Matérn-5/2 Gaussian-process surrogate
//! fitted on unit-cube inputs, maximized over a random candidate set.

pub mod gp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub use gp::{matern52, GpError, GpModel, LENGTHSCALE_GRID, SIGNAL_VAR_GRID};

use crate::proposers::{random_config, Proposal, ProposalContext, ProposeError, Proposer};
use crate::space::{Config, ParamSpec, SearchSpace};

/// Per-parameter affine map to `[0, 1]`, in log space for log-scale params.
#[derive(Debug, Clone)]
pub struct Normalizer {
    params: Vec<ParamSpec>,
}

impl Normalizer {
    pub fn new(space: &SearchSpace) -> Self {
        Self { params: space.params().to_vec() }
    }

    pub fn to_unit(&self, config: &Config) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| p.to_unit(config.get(&p.name).unwrap_or(p.default)))
            .collect()
    }

    pub fn values_to_unit(&self, values: &[f64]) -> Vec<f64> {
        self.params.iter().zip(values).map(|(p, &v)| p.to_unit(v)).collect()
    }

    /// Raw parameter values (unrounded) for a unit-cube point.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        self.params.iter().zip(unit).map(|(p, &u)| p.from_unit(u)).collect()
    }
}

/// Target standardization; a zero spread is treated as unit spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Self { mean, std: if std > 0.0 && std.is_finite() { std } else { 1.0 } }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement for minimization.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64, xi: f64) -> f64 {
    let improvement = best - mu - xi;
    if sigma <= 0.0 {
        return improvement.max(0.0);
    }
    let z = improvement / sigma;
    (improvement * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// Exploration offset, in standardized target units.
    pub xi: f64,
    pub candidates: usize,
    pub initial_design: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self { xi: 0.01, candidates: 2048, initial_design: 3 }
    }
}

pub struct BoProposer {
    id: String,
    acq: AcquisitionConfig,
    rng: ChaCha8Rng,
}

impl BoProposer {
    pub fn new(acq: AcquisitionConfig, seed: u64) -> Self {
        assert!(acq.candidates >= 1 && acq.initial_design >= 1, "M >= 1 and n0 >= 1");
        Self { id: "bo_gp".to_string(), acq, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

/// Scores candidates by EI under `gp` and returns the first maximizer.
pub fn argmax_ei<'a>(
    gp: &GpModel,
    normalizer: &Normalizer,
    candidates: &'a [Config],
    xi: f64,
) -> Option<(&'a Config, f64)> {
    let best = gp.best_standardized();
    let mut top: Option<(&Config, f64)> = None;
    for c in candidates {
        let (mu, var) = gp.posterior_standardized(&normalizer.to_unit(c));
        let ei = expected_improvement(mu, var.sqrt(), best, xi);
        if top.is_none_or(|(_, t)| ei > t) {
            top = Some((c, ei));
        }
    }
    top
}

impl Proposer for BoProposer {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_stateful(&self) -> bool {
        true
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, ProposeError> {
        let trials = ctx.history.trials();
        if trials.len() < self.acq.initial_design {
            let mut p = Proposal::new(random_config(ctx.space, &mut self.rng), self.id.clone());
            p.annotations.insert("bo_phase", "initial");
            return Ok(p);
        }
        let normalizer = Normalizer::new(ctx.space);
        let x: Vec<Vec<f64>> = trials.iter().map(|t| normalizer.to_unit(&t.config)).collect();
        let y: Vec<f64> = trials.iter().map(|t| t.loss).collect();
        let gp = GpModel::fit(&x, &y).map_err(|e| ProposeError::Surrogate(e.to_string()))?;

        let candidates: Vec<Config> =
            (0..self.acq.candidates).map(|_| random_config(ctx.space, &mut self.rng)).collect();
        let (config, ei) = argmax_ei(&gp, &normalizer, &candidates, self.acq.xi)
            .expect("at least one candidate");
        let mut p = Proposal::new(config.clone(), self.id.clone());
        p.annotations.insert("bo_phase", "ei");
        p.annotations.insert("ei", ei);
        p.annotations.insert("lengthscale", gp.lengthscale);
        p.annotations.insert("signal_var", gp.signal_var);
        Ok(p)
    }
}
