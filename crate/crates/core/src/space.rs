//! Hyperparameter search spaces: typed domains, validation of proposed
//! configurations, inverse-CDF sampling, and the verbatim description lines
//! that go into prompts.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::pyfmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Float,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub lower: f64,
    pub upper: f64,
    pub log_scale: bool,
    pub default: f64,
    /// The exact line shown to the model when describing this parameter.
    pub description: String,
}

impl ParamSpec {
    /// Maps a value to `[0, 1]`, affinely in log space for log-scale params.
    pub fn to_unit(&self, v: f64) -> f64 {
        if self.upper == self.lower {
            return 0.0;
        }
        if self.log_scale {
            (v.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln())
        } else {
            (v - self.lower) / (self.upper - self.lower)
        }
    }

    /// Inverse of [`to_unit`](Self::to_unit); no rounding, no clamping.
    pub fn from_unit(&self, u: f64) -> f64 {
        if self.log_scale {
            (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp()
        } else {
            self.lower + u * (self.upper - self.lower)
        }
    }

    fn check(&self) -> Result<(), SpaceError> {
        let bad = |reason: &str| SpaceError::InvalidParam {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if !(self.lower.is_finite() && self.upper.is_finite() && self.default.is_finite()) {
            return Err(bad("bounds and default must be finite"));
        }
        if self.lower > self.upper {
            return Err(bad("lower > upper"));
        }
        if self.default < self.lower || self.default > self.upper {
            return Err(bad("default outside [lower, upper]"));
        }
        if self.log_scale && self.lower <= 0.0 {
            return Err(bad("log-scale parameter needs lower > 0"));
        }
        if self.kind == ParamKind::Integer
            && [self.lower, self.upper, self.default].iter().any(|v| v.fract() != 0.0)
        {
            return Err(bad("integer parameter with non-integral bound or default"));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("vector key requires at least one parameter")]
    EmptyVector,
    #[error("unknown builtin space `{0}`")]
    UnknownBuiltin(String),
    #[error("malformed space definition: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Deserialize)]
struct RawSpace {
    model_name: String,
    params: Vec<ParamSpec>,
    #[serde(default)]
    example_config_text: String,
    #[serde(default)]
    vector_key: Option<String>,
}

/// An ordered set of hyperparameter domains. Parameter order is the
/// canonical serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct SearchSpace {
    pub model_name: String,
    params: Vec<ParamSpec>,
    pub example_config_text: String,
    /// When set, configurations are exchanged as `{"<key>": [v1, v2, ...]}`
    /// rather than one key per parameter (used by the 2-D test functions).
    #[serde(skip_serializing_if = "Option::is_none")]
    vector_key: Option<String>,
}

impl TryFrom<RawSpace> for SearchSpace {
    type Error = SpaceError;

    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        let mut space =
            SearchSpace::new(raw.model_name, raw.params, raw.example_config_text)?;
        if let Some(key) = raw.vector_key {
            space = space.with_vector_key(key)?;
        }
        Ok(space)
    }
}

const BUILTIN_SVM: &str = include_str!("../assets/spaces/svm.json");
const BUILTIN_LR: &str = include_str!("../assets/spaces/lr.json");
const BUILTIN_RF: &str = include_str!("../assets/spaces/rf.json");
const BUILTIN_NN: &str = include_str!("../assets/spaces/nn.json");

/// Names accepted by [`SearchSpace::builtin`].
pub const BUILTIN_SPACES: [&str; 4] = ["svm", "lr", "rf", "nn"];

impl SearchSpace {
    pub fn new(
        model_name: impl Into<String>,
        params: Vec<ParamSpec>,
        example_config_text: impl Into<String>,
    ) -> Result<Self, SpaceError> {
        let mut seen = BTreeSet::new();
        for p in &params {
            p.check()?;
            if !seen.insert(p.name.as_str()) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Self {
            model_name: model_name.into(),
            params,
            example_config_text: example_config_text.into(),
            vector_key: None,
        })
    }

    pub fn with_vector_key(mut self, key: impl Into<String>) -> Result<Self, SpaceError> {
        if self.params.is_empty() {
            return Err(SpaceError::EmptyVector);
        }
        self.vector_key = Some(key.into());
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, SpaceError> {
        serde_json::from_str(text).map_err(|e| SpaceError::Parse(e.to_string()))
    }

    /// One of the bundled sklearn spaces: `svm`, `lr`, `rf`, `nn`.
    pub fn builtin(name: &str) -> Result<Self, SpaceError> {
        let text = match name {
            "svm" => BUILTIN_SVM,
            "lr" | "logreg" | "logistic_regression" => BUILTIN_LR,
            "rf" | "random_forest" => BUILTIN_RF,
            "nn" | "neural_net" => BUILTIN_NN,
            other => return Err(SpaceError::UnknownBuiltin(other.to_string())),
        };
        Self::from_json(text)
    }

    /// Two linear float coordinates `x1`, `x2` exchanged as `{"x": [x1, x2]}`.
    pub fn toy(domain: [(f64, f64); 2]) -> Self {
        let params = domain
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                let name = format!("x{}", i + 1);
                ParamSpec {
                    description: format!(
                        "{name}, Type: UniformFloat, Range: [{}, {}]",
                        pyfmt::number(lo),
                        pyfmt::number(hi)
                    ),
                    name,
                    kind: ParamKind::Float,
                    lower: lo,
                    upper: hi,
                    log_scale: false,
                    default: 0.5 * (lo + hi),
                }
            })
            .collect();
        Self::new("2-dimensional function", params, r#"{"x": [x1, x2]}"#)
            .and_then(|s| s.with_vector_key("x"))
            .expect("toy domain must be well-formed")
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn vector_key(&self) -> Option<&str> {
        self.vector_key.as_deref()
    }

    pub fn defaults(&self) -> Config {
        Config {
            entries: self
                .params
                .iter()
                .map(|p| (p.name.clone(), ParamValue::of_kind(p.kind, p.default)))
                .collect(),
        }
    }

    /// Newline-joined description lines in parameter order.
    pub fn describe(&self) -> String {
        self.params
            .iter()
            .map(|p| p.description.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Inverse-CDF map from one uniform per parameter to a configuration.
    /// Integer parameters round half-up after mapping and are clamped.
    pub fn sample(&self, unit: &[f64]) -> Config {
        assert_eq!(unit.len(), self.params.len(), "one uniform per parameter");
        let entries = self
            .params
            .iter()
            .zip(unit)
            .map(|(p, &u)| {
                let v = if u <= 0.0 {
                    p.lower
                } else if u >= 1.0 {
                    p.upper
                } else {
                    p.from_unit(u).clamp(p.lower, p.upper)
                };
                let v = match p.kind {
                    ParamKind::Float => v,
                    ParamKind::Integer => (v + 0.5).floor().clamp(p.lower, p.upper),
                };
                (p.name.clone(), ParamValue::of_kind(p.kind, v))
            })
            .collect();
        Config { entries }
    }

    /// Builds a config from values given in parameter order, checking it.
    pub fn config_from_values(&self, values: &[f64]) -> Result<Config, ValidationErrors> {
        let raw: Map<String, Value> = self
            .params
            .iter()
            .zip(values)
            .map(|(p, &v)| (p.name.clone(), json_number(v)))
            .collect();
        if values.len() != self.params.len() {
            let mut errors = ValidationErrors::default();
            for p in self.params.iter().skip(values.len()) {
                errors.push(ValidationError::Missing(p.name.clone()));
            }
            for i in self.params.len()..values.len() {
                errors.push(ValidationError::Extra(format!("value #{}", i + 1)));
            }
            return Err(errors);
        }
        self.validate(&raw)
    }

    pub fn validate(&self, raw: &Map<String, Value>) -> Result<Config, ValidationErrors> {
        self.validate_with(raw, OutOfRangePolicy::Reject)
    }

    pub fn validate_value(&self, raw: &Value) -> Result<Config, ValidationErrors> {
        match raw {
            Value::Object(map) => self.validate(map),
            other => Err(ValidationErrors(vec![ValidationError::NotAnObject(
                other.to_string(),
            )])),
        }
    }

    /// Checks key completeness, types and ranges, collecting every violation.
    pub fn validate_with(
        &self,
        raw: &Map<String, Value>,
        policy: OutOfRangePolicy,
    ) -> Result<Config, ValidationErrors> {
        let expanded;
        let raw = match self.expand_vector(raw)? {
            Some(map) => {
                expanded = map;
                &expanded
            }
            None => raw,
        };

        let mut errors = ValidationErrors::default();
        for key in raw.keys() {
            if self.param(key).is_none() {
                errors.push(ValidationError::Extra(key.clone()));
            }
        }

        let mut entries = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let Some(value) = raw.get(&p.name) else {
                errors.push(ValidationError::Missing(p.name.clone()));
                continue;
            };
            let Some(mut v) = value.as_f64().filter(|v| v.is_finite()) else {
                errors.push(ValidationError::NotANumber {
                    name: p.name.clone(),
                    found: value.to_string(),
                });
                continue;
            };
            if p.kind == ParamKind::Integer && v.fract() != 0.0 {
                match policy {
                    OutOfRangePolicy::Reject => {
                        errors.push(ValidationError::NonIntegral { name: p.name.clone(), value: v });
                        continue;
                    }
                    OutOfRangePolicy::Clamp => v = (v + 0.5).floor(),
                }
            }
            if v < p.lower || v > p.upper {
                match policy {
                    OutOfRangePolicy::Reject => {
                        errors.push(ValidationError::OutOfRange {
                            name: p.name.clone(),
                            value: v,
                            lower: p.lower,
                            upper: p.upper,
                        });
                        continue;
                    }
                    OutOfRangePolicy::Clamp => v = v.clamp(p.lower, p.upper),
                }
            }
            entries.push((p.name.clone(), ParamValue::of_kind(p.kind, v)));
        }

        if errors.is_empty() {
            Ok(Config { entries })
        } else {
            Err(errors)
        }
    }

    fn expand_vector(
        &self,
        raw: &Map<String, Value>,
    ) -> Result<Option<Map<String, Value>>, ValidationErrors> {
        let Some(key) = &self.vector_key else {
            return Ok(None);
        };
        let Some(vector) = raw.get(key) else {
            // Per-parameter keys are accepted as well (trial logs use them).
            return Ok(None);
        };
        let mut errors = ValidationErrors::default();
        for extra in raw.keys().filter(|k| *k != key) {
            errors.push(ValidationError::Extra(extra.clone()));
        }
        match vector.as_array() {
            Some(items) if items.len() == self.params.len() => {
                if !errors.is_empty() {
                    return Err(errors);
                }
                Ok(Some(
                    self.params
                        .iter()
                        .zip(items)
                        .map(|(p, v)| (p.name.clone(), v.clone()))
                        .collect(),
                ))
            }
            _ => {
                errors.push(ValidationError::BadVector {
                    key: key.clone(),
                    expected: self.params.len(),
                    found: vector.to_string(),
                });
                Err(errors)
            }
        }
    }

    /// Single-line JSON in parameter order, Python `json.dumps` spacing.
    /// Integers have no decimal point; floats use the shortest round-trip
    /// rendering.
    pub fn canonical_json(&self, config: &Config) -> String {
        let render = |name: &str| -> String {
            match config.value(name) {
                Some(v) => v.render(),
                None => "null".to_string(),
            }
        };
        match &self.vector_key {
            Some(key) => {
                let items: Vec<String> = self.params.iter().map(|p| render(&p.name)).collect();
                format!("{{{}: [{}]}}", quote(key), items.join(", "))
            }
            None => {
                let items: Vec<String> = self
                    .params
                    .iter()
                    .map(|p| format!("{}: {}", quote(&p.name), render(&p.name)))
                    .collect();
                format!("{{{}}}", items.join(", "))
            }
        }
    }

    /// Parses and validates text produced by [`canonical_json`](Self::canonical_json).
    pub fn parse_config(&self, text: &str) -> Result<Config, ValidationErrors> {
        match serde_json::from_str::<Value>(text) {
            Ok(v) => self.validate_value(&v),
            Err(e) => Err(ValidationErrors(vec![ValidationError::NotAnObject(e.to_string())])),
        }
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

fn json_number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

/// How out-of-range or non-integral proposals are treated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutOfRangePolicy {
    #[default]
    Reject,
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("missing({0})")]
    Missing(String),
    #[error("extra({0})")]
    Extra(String),
    #[error("out_of_range({name}): {value} not in [{lower}, {upper}]")]
    OutOfRange { name: String, value: f64, lower: f64, upper: f64 },
    #[error("non_integral({name}): {value}")]
    NonIntegral { name: String, value: f64 },
    #[error("not_a_number({name}): {found}")]
    NotANumber { name: String, found: String },
    #[error("bad_vector({key}): expected {expected} numbers, found {found}")]
    BadVector { key: String, expected: usize, found: String },
    #[error("not_an_object: {0}")]
    NotAnObject(String),
}

/// Every violation found while validating one configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl ValidationErrors {
    fn push(&mut self, e: ValidationError) {
        self.0.push(e);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ValidationError> {
        self.0.iter()
    }
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

impl std::error::Error for ValidationErrors {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
}

impl ParamValue {
    fn of_kind(kind: ParamKind, v: f64) -> Self {
        match kind {
            ParamKind::Integer => ParamValue::Int(v as i64),
            ParamKind::Float => ParamValue::Float(v),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            ParamValue::Int(i) => i as f64,
            ParamValue::Float(x) => x,
        }
    }

    fn render(self) -> String {
        match self {
            ParamValue::Int(i) => i.to_string(),
            ParamValue::Float(x) => pyfmt::float_repr(x),
        }
    }
}

/// A hyperparameter setting, with entries in its space's parameter order.
///
/// Built through a [`SearchSpace`] (`validate`, `sample`, `defaults`);
/// deserialized configs should be re-validated against their space.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    entries: Vec<(String, ParamValue)>,
}

impl Config {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.value(name).map(ParamValue::as_f64)
    }

    pub fn value(&self, name: &str) -> Option<ParamValue> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v.as_f64()))
    }

    /// Values in parameter order.
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, v)| v.as_f64()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Plain JSON object (per-parameter keys), as written to trial logs.
    pub fn to_json(&self) -> Map<String, Value> {
        self.entries
            .iter()
            .map(|(n, v)| {
                let value = match v {
                    ParamValue::Int(i) => Value::from(*i),
                    ParamValue::Float(x) => json_number(*x),
                };
                (n.clone(), value)
            })
            .collect()
    }
}

impl Serialize for Config {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (name, value) in &self.entries {
            match value {
                ParamValue::Int(i) => map.serialize_entry(name, i)?,
                ParamValue::Float(x) => map.serialize_entry(name, x)?,
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Config {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ConfigVisitor;

        impl<'de> Visitor<'de> for ConfigVisitor {
            type Value = Config;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object of numbers")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Config, A::Error> {
                let mut entries = Vec::new();
                while let Some((name, value)) = access.next_entry::<String, Value>()? {
                    let v = if let Some(i) = value.as_i64() {
                        ParamValue::Int(i)
                    } else if let Some(x) = value.as_f64() {
                        ParamValue::Float(x)
                    } else {
                        return Err(de::Error::custom(format!("`{name}` is not a number")));
                    };
                    entries.push((name, v));
                }
                Ok(Config { entries })
            }
        }

        deserializer.deserialize_map(ConfigVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn builtin_spaces_load() {
        for name in BUILTIN_SPACES {
            let s = SearchSpace::builtin(name).unwrap();
            assert!(!s.is_empty());
            assert!(s.defaults().len() == s.len());
        }
        assert_eq!(SearchSpace::builtin("nn").unwrap().len(), 5);
        assert_eq!(SearchSpace::builtin("rf").unwrap().len(), 4);
        assert!(matches!(SearchSpace::builtin("xgb"), Err(SpaceError::UnknownBuiltin(_))));
    }

    #[test]
    fn nn_defaults_validate() {
        let nn = SearchSpace::builtin("nn").unwrap();
        let raw = json!({"alpha": 1e-3, "batch_size": 32, "depth": 3, "learning_rate_init": 1e-3, "width": 64});
        let cfg = nn.validate(&obj(raw)).unwrap();
        assert_eq!(cfg, nn.defaults());
    }

    #[test]
    fn depth_four_is_out_of_range() {
        let nn = SearchSpace::builtin("nn").unwrap();
        let raw = json!({"alpha": 1e-3, "batch_size": 32, "depth": 4, "learning_rate_init": 1e-3, "width": 64});
        let errs = nn.validate(&obj(raw)).unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert!(matches!(&errs.0[0], ValidationError::OutOfRange { name, .. } if name == "depth"));
    }

    #[test]
    fn missing_key_reported() {
        let svm = SearchSpace::builtin("svm").unwrap();
        let errs = svm.validate(&obj(json!({"C": 1.0}))).unwrap_err();
        assert_eq!(errs.0, vec![ValidationError::Missing("gamma".into())]);
    }

    #[test]
    fn all_violations_are_collected() {
        let nn = SearchSpace::builtin("nn").unwrap();
        let raw = json!({"alpha": 5.0, "batch_size": 32.5, "depth": "deep", "width": 64, "momentum": 0.9});
        let errs = nn.validate(&obj(raw)).unwrap_err();
        let kinds: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
        assert_eq!(errs.0.len(), 5, "{kinds:?}");
        assert!(errs.0.contains(&ValidationError::Extra("momentum".into())));
        assert!(errs.0.contains(&ValidationError::Missing("learning_rate_init".into())));
        assert!(errs.iter().any(|e| matches!(e, ValidationError::NonIntegral { name, .. } if name == "batch_size")));
        assert!(errs.iter().any(|e| matches!(e, ValidationError::NotANumber { name, .. } if name == "depth")));
        assert!(errs.iter().any(|e| matches!(e, ValidationError::OutOfRange { name, .. } if name == "alpha")));
    }

    #[test]
    fn clamp_policy() {
        let nn = SearchSpace::builtin("nn").unwrap();
        let raw = json!({"alpha": 5.0, "batch_size": 300, "depth": 2.4, "learning_rate_init": 1e-3, "width": 64});
        let cfg = nn.validate_with(&obj(raw), OutOfRangePolicy::Clamp).unwrap();
        assert_eq!(cfg.get("alpha"), Some(1.0));
        assert_eq!(cfg.get("batch_size"), Some(256.0));
        assert_eq!(cfg.get("depth"), Some(2.0));
    }

    #[test]
    fn sample_endpoints_and_midpoint() {
        let svm = SearchSpace::builtin("svm").unwrap();
        assert_eq!(svm.sample(&[0.5, 0.5]).get("C"), Some(1.0));
        assert_eq!(svm.sample(&[0.0, 0.0]).get("C"), Some(0.0009765625));
        assert_eq!(svm.sample(&[1.0, 1.0]).get("gamma"), Some(1024.0));
        let nn = SearchSpace::builtin("nn").unwrap();
        let top = nn.sample(&[1.0; 5]);
        assert_eq!(top.get("width"), Some(1024.0));
        assert_eq!(top.value("width"), Some(ParamValue::Int(1024)));
        assert_eq!(nn.sample(&[0.0; 5]).get("width"), Some(16.0));
    }

    #[test]
    fn integer_rounding_is_half_up() {
        let space = SearchSpace::new(
            "m",
            vec![ParamSpec {
                name: "k".into(),
                kind: ParamKind::Integer,
                lower: 0.0,
                upper: 4.0,
                log_scale: false,
                default: 0.0,
                description: String::new(),
            }],
            "",
        )
        .unwrap();
        // u = 0.625 maps to exactly 2.5.
        assert_eq!(space.sample(&[0.625]).get("k"), Some(3.0));
        assert_eq!(space.sample(&[0.6]).get("k"), Some(2.0));
    }

    #[test]
    fn describe_svm_and_empty() {
        let svm = SearchSpace::builtin("svm").unwrap();
        assert!(svm.describe().contains(
            "gamma, Kernel coefficient for rbf, Type: UniformFloat, Range: [0.0009765625, 1024.0], Default: 0.1, on log-scale"
        ));
        let nn = SearchSpace::builtin("nn").unwrap();
        let text = nn.describe();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("alpha, l2 regularization"));
        let empty = SearchSpace::new("m", vec![], "").unwrap();
        assert_eq!(empty.describe(), "");
    }

    #[test]
    fn canonical_json_formats() {
        let svm = SearchSpace::builtin("svm").unwrap();
        let cfg = svm.validate(&obj(json!({"gamma": 0.1, "C": 1}))).unwrap();
        assert_eq!(svm.canonical_json(&cfg), r#"{"C": 1.0, "gamma": 0.1}"#);
        assert_eq!(svm.canonical_json(&cfg), svm.canonical_json(&cfg.clone()));
        let nn = SearchSpace::builtin("nn").unwrap();
        assert_eq!(
            nn.canonical_json(&nn.defaults()),
            r#"{"alpha": 0.001, "batch_size": 32, "depth": 3, "learning_rate_init": 0.001, "width": 64}"#
        );
    }

    #[test]
    fn toy_space_uses_vector_shape() {
        let toy = SearchSpace::toy([(-5.0, 10.0), (0.0, 15.0)]);
        let cfg = toy.validate(&obj(json!({"x": [2.5, 2]}))).unwrap();
        assert_eq!(cfg.values(), vec![2.5, 2.0]);
        assert_eq!(toy.canonical_json(&cfg), r#"{"x": [2.5, 2.0]}"#);
        // Per-parameter keys, as stored in trial logs, are accepted too.
        let again = toy.validate(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
        let errs = toy.validate(&obj(json!({"x": [1.0]}))).unwrap_err();
        assert!(matches!(errs.0[0], ValidationError::BadVector { .. }));
    }

    #[test]
    fn invalid_specs_rejected() {
        let p = |lower: f64, default: f64, log_scale: bool, kind| ParamSpec {
            name: "p".into(),
            kind,
            lower,
            upper: 10.0,
            log_scale,
            default,
            description: String::new(),
        };
        assert!(SearchSpace::new("m", vec![p(0.0, 11.0, false, ParamKind::Float)], "").is_err());
        assert!(SearchSpace::new("m", vec![p(0.0, 1.0, true, ParamKind::Float)], "").is_err());
        assert!(SearchSpace::new("m", vec![p(0.5, 1.0, false, ParamKind::Integer)], "").is_err());
        let dup = vec![p(0.0, 1.0, false, ParamKind::Float), p(0.0, 1.0, false, ParamKind::Float)];
        assert_eq!(SearchSpace::new("m", dup, ""), Err(SpaceError::DuplicateName("p".into())));
    }

    #[test]
    fn space_file_roundtrip() {
        let nn = SearchSpace::builtin("nn").unwrap();
        let text = serde_json::to_string(&nn).unwrap();
        assert_eq!(SearchSpace::from_json(&text).unwrap(), nn);
        let bad = r#"{"model_name": "m", "params": [{"name": "a", "kind": "float", "lower": 2, "upper": 1, "log_scale": false, "default": 1, "description": ""}]}"#;
        assert!(SearchSpace::from_json(bad).is_err());
    }
}
