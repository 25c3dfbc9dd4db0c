use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::{EvalError, EvalResult, Objective};
use crate::space::{Config, SearchSpace, SpaceError, ValidationErrors};

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("cannot read task file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed task file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("row {index} does not fit the space: {errors}")]
    BadRow { index: usize, errors: ValidationErrors },
    #[error("row {index} has non-finite loss")]
    NonFiniteLoss { index: usize },
    #[error("rows {first} and {second} share the key {key}")]
    DuplicateRow { first: usize, second: usize, key: String },
}

#[derive(Deserialize)]
struct TaskFile {
    space: Value,
    #[serde(default = "default_metric")]
    metric_name: String,
    rows: Vec<RowFile>,
}

#[derive(Deserialize)]
struct RowFile {
    config: serde_json::Map<String, Value>,
    loss: f64,
}

fn default_metric() -> String {
    "validation error rate".to_string()
}

/// Precomputed losses keyed by canonical config text.
#[derive(Debug, Clone)]
pub struct TabularTask {
    pub name: String,
    pub metric_name: String,
    space: SearchSpace,
    rows: HashMap<String, f64>,
    grid: Vec<Config>,
}

impl TabularTask {
    pub fn new(
        name: impl Into<String>,
        space: SearchSpace,
        metric_name: impl Into<String>,
        rows: Vec<(Config, f64)>,
    ) -> Result<Self, TabularError> {
        let mut map = HashMap::with_capacity(rows.len());
        let mut index_of = HashMap::with_capacity(rows.len());
        let mut grid = Vec::with_capacity(rows.len());
        for (index, (config, loss)) in rows.into_iter().enumerate() {
            if !loss.is_finite() {
                return Err(TabularError::NonFiniteLoss { index });
            }
            // Re-validate so keys are always canonical for this space.
            let config = space
                .validate(&config.to_json())
                .map_err(|errors| TabularError::BadRow { index, errors })?;
            let key = space.canonical_json(&config);
            if let Some(&first) = index_of.get(&key) {
                return Err(TabularError::DuplicateRow { first, second: index, key });
            }
            index_of.insert(key.clone(), index);
            map.insert(key, loss);
            grid.push(config);
        }
        Ok(Self { name: name.into(), metric_name: metric_name.into(), space, rows: map, grid })
    }

    /// Task file: `{space, metric_name, rows: [{config, loss}]}`. `space` is
    /// either an inline space object, a builtin space name, or a path
    /// relative to the task file.
    pub fn load(path: &Path) -> Result<Self, TabularError> {
        let text = std::fs::read_to_string(path)?;
        let file: TaskFile = serde_json::from_str(&text)?;
        let space = match &file.space {
            Value::String(s) => match SearchSpace::builtin(s) {
                Ok(space) => space,
                Err(_) => {
                    let p = path.parent().unwrap_or(Path::new(".")).join(s);
                    SearchSpace::from_json(&std::fs::read_to_string(p)?)?
                }
            },
            other => serde_json::from_value(other.clone())?,
        };
        let mut rows = Vec::with_capacity(file.rows.len());
        for (index, row) in file.rows.into_iter().enumerate() {
            let config = space
                .validate(&row.config)
                .map_err(|errors| TabularError::BadRow { index, errors })?;
            rows.push((config, row.loss));
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::new(name, space, file.metric_name, rows)
    }

    pub fn lookup(&self, config: &Config) -> Result<f64, EvalError> {
        let key = self.space.canonical_json(config);
        self.rows.get(&key).copied().ok_or(EvalError::MissingRow(key))
    }

    /// Tabulated configurations in file order.
    pub fn grid(&self) -> &[Config] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl Objective for TabularTask {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, config: &Config) -> Result<EvalResult, EvalError> {
        EvalResult::pure(self.lookup(config)?)
    }
}
