//! Two-dimensional test landscapes and their shifted variants.

use std::f64::consts::{E, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, EvalResult, Objective};
use crate::space::{Config, SearchSpace};

/// Diagonal quadratic `(x - center)' diag(1, kappa) (x - center)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub center: [f64; 2],
    pub kappa: f64,
}

// Centers chosen so uniform random search over [-5, 5]^2 lands near the
// reported random-search numbers for these two tasks.
pub const QUAD2D: Quadratic = Quadratic { center: [-4.0, 3.0], kappa: 1.0 };
pub const QUAD2D_ILLCOND: Quadratic = Quadratic { center: [4.0, -3.5], kappa: 10.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToyFunction {
    Ackley,
    Branin,
    Rosenbrock,
    Himmelblau,
    Quad2d(Quadratic),
    Quad2dIllcond(Quadratic),
}

pub const TOY_NAMES: [&str; 6] =
    ["ackley", "branin", "rosenbrock", "himmelblau", "quad2d", "quad2d_illcond"];

impl ToyFunction {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "ackley" | "ack" => ToyFunction::Ackley,
            "branin" | "bran" => ToyFunction::Branin,
            "rosenbrock" | "rosen" => ToyFunction::Rosenbrock,
            "himmelblau" | "himmel" => ToyFunction::Himmelblau,
            "quad2d" => ToyFunction::Quad2d(QUAD2D),
            "quad2d_illcond" => ToyFunction::Quad2dIllcond(QUAD2D_ILLCOND),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ToyFunction::Ackley => "ackley",
            ToyFunction::Branin => "branin",
            ToyFunction::Rosenbrock => "rosenbrock",
            ToyFunction::Himmelblau => "himmelblau",
            ToyFunction::Quad2d(_) => "quad2d",
            ToyFunction::Quad2dIllcond(_) => "quad2d_illcond",
        }
    }

    /// Short row label used in tables (`ack`, `bran`, ...).
    pub fn short_name(&self) -> &'static str {
        match self {
            ToyFunction::Ackley => "ack",
            ToyFunction::Branin => "bran",
            ToyFunction::Rosenbrock => "rosen",
            ToyFunction::Himmelblau => "himmel",
            ToyFunction::Quad2d(_) => "quad2d",
            ToyFunction::Quad2dIllcond(_) => "quad2d_illcond",
        }
    }

    pub fn domain(&self) -> [(f64, f64); 2] {
        match self {
            ToyFunction::Branin => [(-5.0, 10.0), (0.0, 15.0)],
            ToyFunction::Rosenbrock => [(-5.0, 10.0), (-5.0, 10.0)],
            _ => [(-5.0, 5.0), (-5.0, 5.0)],
        }
    }

    pub fn known_min(&self) -> f64 {
        match self {
            ToyFunction::Branin => 5.0 / (4.0 * PI),
            _ => 0.0,
        }
    }

    /// One global minimizer.
    pub fn argmin(&self) -> [f64; 2] {
        match self {
            ToyFunction::Ackley => [0.0, 0.0],
            ToyFunction::Branin => [PI, 2.275],
            ToyFunction::Rosenbrock => [1.0, 1.0],
            ToyFunction::Himmelblau => [3.0, 2.0],
            ToyFunction::Quad2d(q) | ToyFunction::Quad2dIllcond(q) => q.center,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let [x1, x2] = x;
        match self {
            ToyFunction::Ackley => {
                let r = (0.5 * (x1 * x1 + x2 * x2)).sqrt();
                let c = 0.5 * ((2.0 * PI * x1).cos() + (2.0 * PI * x2).cos());
                // Round-off can leave a few ulps below zero near the origin.
                (-20.0 * (-0.2 * r).exp() - c.exp() + E + 20.0).max(0.0)
            }
            ToyFunction::Branin => {
                let b = 5.1 / (4.0 * PI * PI);
                let c = 5.0 / PI;
                let t = 1.0 / (8.0 * PI);
                let inner = x2 - b * x1 * x1 + c * x1 - 6.0;
                inner * inner + 10.0 * (1.0 - t) * x1.cos() + 10.0
            }
            ToyFunction::Rosenbrock => (1.0 - x1).powi(2) + 100.0 * (x2 - x1 * x1).powi(2),
            ToyFunction::Himmelblau => {
                (x1 * x1 + x2 - 11.0).powi(2) + (x1 + x2 * x2 - 7.0).powi(2)
            }
            ToyFunction::Quad2d(q) | ToyFunction::Quad2dIllcond(q) => {
                let d1 = x1 - q.center[0];
                let d2 = x2 - q.center[1];
                d1 * d1 + q.kappa * d2 * d2
            }
        }
    }
}

/// Draws the shift `c`, each component from U(0, 1), reproducibly from `seed`.
pub fn draw_shift(seed: u64) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [rng.random::<f64>(), rng.random::<f64>()]
}

/// A test function, optionally evaluated at `x - shift`.
#[derive(Debug, Clone)]
pub struct ToyObjective {
    pub function: ToyFunction,
    pub shift: Option<[f64; 2]>,
    space: SearchSpace,
}

impl ToyObjective {
    pub fn new(function: ToyFunction) -> Self {
        Self { function, shift: None, space: SearchSpace::toy(function.domain()) }
    }

    pub fn shifted(function: ToyFunction, seed: u64) -> Self {
        Self::with_shift(function, draw_shift(seed))
    }

    pub fn with_shift(function: ToyFunction, shift: [f64; 2]) -> Self {
        Self { shift: Some(shift), ..Self::new(function) }
    }

    pub fn eval_point(&self, x: [f64; 2]) -> f64 {
        match self.shift {
            Some(c) => self.function.eval([x[0] - c[0], x[1] - c[1]]),
            None => self.function.eval(x),
        }
    }

    /// `ack`, `shifted_ack`, ...
    pub fn label(&self) -> String {
        match self.shift {
            Some(_) => format!("shifted_{}", self.function.short_name()),
            None => self.function.short_name().to_string(),
        }
    }
}

impl Objective for ToyObjective {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, config: &Config) -> Result<EvalResult, EvalError> {
        let values = config.values();
        let [x1, x2] = values[..] else {
            return Err(EvalError::InvalidConfig(format!(
                "expected 2 coordinates, got {}",
                values.len()
            )));
        };
        let loss = self.eval_point([x1, x2]);
        EvalResult::pure(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<ToyFunction> {
        TOY_NAMES.iter().map(|n| ToyFunction::from_name(n).unwrap()).collect()
    }

    #[test]
    fn exact_minima() {
        assert_eq!(ToyFunction::Ackley.eval([0.0, 0.0]), 0.0);
        assert_eq!(ToyFunction::Rosenbrock.eval([1.0, 1.0]), 0.0);
        assert_eq!(ToyFunction::Himmelblau.eval([3.0, 2.0]), 0.0);
        assert_eq!(ToyFunction::Quad2d(QUAD2D).eval(QUAD2D.center), 0.0);
    }

    #[test]
    fn branin_minimum_matches_closed_form() {
        // At x1 = pi the quadratic term vanishes for x2 = 2.275 and
        // cos(pi) = -1, leaving s * t = 10 / (8 pi).
        let oracle = 10.0 / (8.0 * PI);
        assert!((oracle - 0.397887).abs() < 1e-6);
        for x in [[PI, 2.275], [-PI, 12.275], [3.0 * PI, 2.475]] {
            assert!((ToyFunction::Branin.eval(x) - oracle).abs() < 1e-5, "{x:?}");
        }
    }

    #[test]
    fn minima_within_tolerance() {
        for f in all() {
            let v = f.eval(f.argmin());
            assert!((v - f.known_min()).abs() < 1e-9, "{}: {v}", f.name());
        }
    }

    #[test]
    fn names_roundtrip() {
        for f in all() {
            assert_eq!(ToyFunction::from_name(f.name()), Some(f));
            assert_eq!(ToyFunction::from_name(f.short_name()), Some(f));
        }
        assert_eq!(ToyFunction::from_name("sphere"), None);
    }

    #[test]
    fn shift_is_seeded_and_unit() {
        let a = draw_shift(7);
        assert_eq!(a, draw_shift(7));
        assert_ne!(a, draw_shift(8));
        assert!(a.iter().all(|c| (0.0..1.0).contains(c)));
    }

    #[test]
    fn shifted_minimum_moves_by_c() {
        for f in all() {
            let obj = ToyObjective::shifted(f, 3);
            let c = obj.shift.unwrap();
            let x = f.argmin();
            let v = obj.eval_point([x[0] + c[0], x[1] + c[1]]);
            assert!((v - f.eval(x)).abs() < 1e-9, "{}", f.name());
        }
    }

    #[test]
    fn labels() {
        assert_eq!(ToyObjective::new(ToyFunction::Ackley).label(), "ack");
        assert_eq!(ToyObjective::shifted(ToyFunction::Branin, 1).label(), "shifted_bran");
    }

    #[test]
    fn objective_reads_config() {
        let mut obj = ToyObjective::new(ToyFunction::Rosenbrock);
        let cfg = obj.space().config_from_values(&[1.0, 1.0]).unwrap();
        let r = obj.evaluate(&cfg).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.duration_s, 0.0);
    }
}
