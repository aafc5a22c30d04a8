//! Typed, bounded hyperparameter and fidelity spaces.
//!
//! Every parameter has a unit-cube encoding shared by the model-based
//! optimizers (DE, KDE) and the surrogate predictor:
//!
//! * continuous and integer parameters map affinely to `[0, 1]`, in log
//!   space when flagged; integers round half-up on the way back,
//! * ordinals are encoded by rank exactly like integers over the index,
//! * categoricals use half-open buckets `[i/k, (i+1)/k)`, with the last
//!   bucket closed so that `u = 1.0` decodes to the last choice.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{0}` is not assigned")]
    MissingParameter(String),
    #[error("value {value} is outside the domain of `{name}`")]
    OutOfRange { name: String, value: String },
    #[error("unit coordinate {u} for `{name}` is outside [0, 1]")]
    UnitOutOfRange { name: String, u: f64 },
    #[error("no bin count given for `{0}`")]
    MissingBins(String),
    #[error("`{name}` needs at least 2 bins, got {bins}")]
    TooFewBins { name: String, bins: usize },
    #[error("invalid fidelity space: {0}")]
    InvalidFidelity(String),
    #[error("expected {expected} unit coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A single hyperparameter or fidelity value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Float(f) => Some(f),
            Value::Str(_) => None,
        }
    }

    /// Appends a type-tagged byte encoding used for hashing and exact lookup.
    pub fn write_canonical(&self, out: &mut Vec<u8>) {
        match self {
            Value::Int(i) => {
                out.push(b'i');
                out.extend_from_slice(&i.to_le_bytes());
            }
            Value::Float(f) => {
                out.push(b'f');
                // -0.0 and 0.0 compare equal and must hash equal
                let f = if *f == 0.0 { 0.0f64 } else { *f };
                out.extend_from_slice(&f.to_bits().to_le_bytes());
            }
            Value::Str(s) => {
                out.push(b's');
                out.extend_from_slice(&(s.len() as u64).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Continuous,
    Integer,
    Categorical,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Continuous { lower: f64, upper: f64, log: bool },
    Integer { lower: i64, upper: i64, log: bool },
    Categorical { choices: Vec<Value> },
    Ordinal { choices: Vec<Value> },
}

/// One named, validated dimension of a configuration or fidelity space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamDoc", into = "ParamDoc")]
pub struct HyperparameterSpec {
    name: String,
    domain: Domain,
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

impl HyperparameterSpec {
    pub fn new(name: impl Into<String>, domain: Domain) -> Result<Self, SpaceError> {
        let name = name.into();
        let invalid = |reason: &str| SpaceError::InvalidSpec {
            name: name.clone(),
            reason: reason.to_string(),
        };
        if name.is_empty() {
            return Err(invalid("name must be non-empty"));
        }
        match &domain {
            Domain::Continuous { lower, upper, log } => {
                if !lower.is_finite() || !upper.is_finite() {
                    return Err(invalid("bounds must be finite"));
                }
                if lower >= upper {
                    return Err(invalid("lower must be < upper"));
                }
                if *log && *lower <= 0.0 {
                    return Err(invalid("log scale requires lower > 0"));
                }
            }
            Domain::Integer { lower, upper, log } => {
                if lower >= upper {
                    return Err(invalid("lower must be < upper"));
                }
                if *log && *lower <= 0 {
                    return Err(invalid("log scale requires lower > 0"));
                }
            }
            Domain::Categorical { choices } | Domain::Ordinal { choices } => {
                if choices.is_empty() {
                    return Err(invalid("choices must be non-empty"));
                }
                for (i, a) in choices.iter().enumerate() {
                    if let Value::Float(f) = a {
                        if !f.is_finite() {
                            return Err(invalid("choices must be finite"));
                        }
                    }
                    if choices[..i].contains(a) {
                        return Err(invalid("choices must be pairwise distinct"));
                    }
                }
            }
        }
        Ok(Self { name, domain })
    }

    pub fn float(name: impl Into<String>, lower: f64, upper: f64, log: bool) -> Result<Self, SpaceError> {
        Self::new(name, Domain::Continuous { lower, upper, log })
    }

    pub fn int(name: impl Into<String>, lower: i64, upper: i64, log: bool) -> Result<Self, SpaceError> {
        Self::new(name, Domain::Integer { lower, upper, log })
    }

    pub fn categorical<V: Into<Value>>(
        name: impl Into<String>,
        choices: impl IntoIterator<Item = V>,
    ) -> Result<Self, SpaceError> {
        Self::new(
            name,
            Domain::Categorical {
                choices: choices.into_iter().map(Into::into).collect(),
            },
        )
    }

    pub fn ordinal<V: Into<Value>>(
        name: impl Into<String>,
        choices: impl IntoIterator<Item = V>,
    ) -> Result<Self, SpaceError> {
        Self::new(
            name,
            Domain::Ordinal {
                choices: choices.into_iter().map(Into::into).collect(),
            },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> ParamKind {
        match self.domain {
            Domain::Continuous { .. } => ParamKind::Continuous,
            Domain::Integer { .. } => ParamKind::Integer,
            Domain::Categorical { .. } => ParamKind::Categorical,
            Domain::Ordinal { .. } => ParamKind::Ordinal,
        }
    }

    pub fn is_log(&self) -> bool {
        matches!(
            self.domain,
            Domain::Continuous { log: true, .. } | Domain::Integer { log: true, .. }
        )
    }

    /// Number of distinct values, `None` for continuous parameters.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.domain {
            Domain::Continuous { .. } => None,
            Domain::Integer { lower, upper, .. } => Some((upper - lower + 1) as usize),
            Domain::Categorical { choices } | Domain::Ordinal { choices } => Some(choices.len()),
        }
    }

    fn out_of_range(&self, v: &Value) -> SpaceError {
        SpaceError::OutOfRange {
            name: self.name.clone(),
            value: v.to_string(),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (&self.domain, v) {
            (Domain::Continuous { lower, upper, .. }, Value::Float(x)) => *lower <= *x && *x <= *upper,
            (Domain::Integer { lower, upper, .. }, Value::Int(x)) => lower <= x && x <= upper,
            (Domain::Categorical { choices }, v) | (Domain::Ordinal { choices }, v) => choices.contains(v),
            _ => false,
        }
    }

    fn choice_index(&self, v: &Value) -> Option<usize> {
        match &self.domain {
            Domain::Categorical { choices } | Domain::Ordinal { choices } => {
                choices.iter().position(|c| c == v)
            }
            _ => None,
        }
    }

    /// Encodes `v` into `[0, 1]`.
    pub fn to_unit(&self, v: &Value) -> Result<f64, SpaceError> {
        if !self.contains(v) {
            return Err(self.out_of_range(v));
        }
        let u = match (&self.domain, v) {
            (Domain::Continuous { lower, upper, log }, Value::Float(x)) => {
                if *log {
                    (x.ln() - lower.ln()) / (upper.ln() - lower.ln())
                } else {
                    (x - lower) / (upper - lower)
                }
            }
            (Domain::Integer { lower, upper, log }, Value::Int(x)) => {
                let (l, h, x) = (*lower as f64, *upper as f64, *x as f64);
                if *log {
                    (x.ln() - l.ln()) / (h.ln() - l.ln())
                } else {
                    (x - l) / (h - l)
                }
            }
            (Domain::Categorical { choices }, v) => {
                let i = self.choice_index(v).expect("contains checked");
                (i as f64 + 0.5) / choices.len() as f64
            }
            (Domain::Ordinal { choices }, v) => {
                let i = self.choice_index(v).expect("contains checked");
                if choices.len() == 1 {
                    0.0
                } else {
                    i as f64 / (choices.len() - 1) as f64
                }
            }
            _ => unreachable!("contains checked the value type"),
        };
        Ok(u.clamp(0.0, 1.0))
    }

    /// Decodes a unit coordinate back into a legal value.
    pub fn from_unit(&self, u: f64) -> Result<Value, SpaceError> {
        if !(0.0..=1.0).contains(&u) {
            return Err(SpaceError::UnitOutOfRange {
                name: self.name.clone(),
                u,
            });
        }
        Ok(match &self.domain {
            Domain::Continuous { lower, upper, log } => {
                if u == 0.0 {
                    Value::Float(*lower)
                } else if u == 1.0 {
                    Value::Float(*upper)
                } else if *log {
                    let x = (lower.ln() + u * (upper.ln() - lower.ln())).exp();
                    Value::Float(x.clamp(*lower, *upper))
                } else {
                    Value::Float((lower + u * (upper - lower)).clamp(*lower, *upper))
                }
            }
            Domain::Integer { lower, upper, log } => {
                let (l, h) = (*lower as f64, *upper as f64);
                let x = if *log {
                    (l.ln() + u * (h.ln() - l.ln())).exp()
                } else {
                    l + u * (h - l)
                };
                Value::Int((round_half_up(x) as i64).clamp(*lower, *upper))
            }
            Domain::Categorical { choices } => {
                let k = choices.len();
                let i = ((u * k as f64).floor() as usize).min(k - 1);
                choices[i].clone()
            }
            Domain::Ordinal { choices } => {
                let k = choices.len();
                let i = (round_half_up(u * (k - 1) as f64) as usize).min(k - 1);
                choices[i].clone()
            }
        })
    }

    /// Decodes after clipping `u` into `[0, 1]`.
    pub fn from_unit_clipped(&self, u: f64) -> Value {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        self.from_unit(u).expect("clipped coordinate is in range")
    }

    /// Draws a value uniformly (log-uniformly where flagged).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        let r: f64 = rng.random();
        match &self.domain {
            Domain::Continuous { .. } => self.from_unit_clipped(r),
            Domain::Integer { lower, upper, log } => {
                // Widen by half a unit on both sides so every integer gets
                // an equal share of the (transformed) interval.
                let (lo, hi) = (*lower as f64 - 0.5, *upper as f64 + 0.5);
                let x = if *log {
                    let (a, b) = (lo.ln(), hi.ln());
                    (a + r * (b - a)).exp()
                } else {
                    lo + r * (hi - lo)
                };
                Value::Int((round_half_up(x) as i64).clamp(*lower, *upper))
            }
            Domain::Categorical { choices } | Domain::Ordinal { choices } => {
                choices[rng.random_range(0..choices.len())].clone()
            }
        }
    }

    /// Grid values along this dimension, in increasing order.
    ///
    /// `bins` is ignored for categorical and ordinal parameters, which always
    /// contribute all of their choices.
    pub fn grid(&self, bins: Option<usize>) -> Result<Vec<Value>, SpaceError> {
        match &self.domain {
            Domain::Categorical { choices } | Domain::Ordinal { choices } => Ok(choices.clone()),
            Domain::Continuous { .. } | Domain::Integer { .. } => {
                let bins = bins.ok_or_else(|| SpaceError::MissingBins(self.name.clone()))?;
                if bins < 2 {
                    return Err(SpaceError::TooFewBins {
                        name: self.name.clone(),
                        bins,
                    });
                }
                let mut out: Vec<Value> = Vec::with_capacity(bins);
                for i in 0..bins {
                    let u = if i + 1 == bins {
                        1.0
                    } else {
                        i as f64 / (bins - 1) as f64
                    };
                    let v = self.from_unit(u)?;
                    if out.last() != Some(&v) {
                        out.push(v);
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn min_value(&self) -> Value {
        self.from_unit(0.0).expect("0 is in range")
    }

    /// The highest value; for fidelities this is the target fidelity.
    pub fn max_value(&self) -> Value {
        match &self.domain {
            Domain::Categorical { choices } | Domain::Ordinal { choices } => {
                choices.last().expect("non-empty").clone()
            }
            _ => self.from_unit(1.0).expect("1 is in range"),
        }
    }

    /// Nearest legal value to a numeric target (numeric domains only).
    pub fn snap(&self, x: f64) -> Option<Value> {
        match &self.domain {
            Domain::Continuous { lower, upper, .. } => Some(Value::Float(x.clamp(*lower, *upper))),
            Domain::Integer { lower, upper, .. } => {
                Some(Value::Int((round_half_up(x) as i64).clamp(*lower, *upper)))
            }
            Domain::Ordinal { choices } | Domain::Categorical { choices } => {
                let mut best: Option<(&Value, f64)> = None;
                for c in choices {
                    let d = (c.as_f64()? - x).abs();
                    // ties go to the later (higher) choice
                    if best.is_none_or(|(_, bd)| d <= bd) {
                        best = Some((c, d));
                    }
                }
                best.map(|(c, _)| c.clone())
            }
        }
    }
}

/// Serialized form of a parameter (`space.json` entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDoc {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_fidelity: Option<Value>,
}

impl From<HyperparameterSpec> for ParamDoc {
    fn from(spec: HyperparameterSpec) -> Self {
        let kind = spec.kind();
        let (lower, upper, log, choices) = match spec.domain {
            Domain::Continuous { lower, upper, log } => {
                (Some(Value::Float(lower)), Some(Value::Float(upper)), Some(log), None)
            }
            Domain::Integer { lower, upper, log } => {
                (Some(Value::Int(lower)), Some(Value::Int(upper)), Some(log), None)
            }
            Domain::Categorical { choices } | Domain::Ordinal { choices } => (None, None, None, Some(choices)),
        };
        ParamDoc {
            name: spec.name,
            kind,
            lower,
            upper,
            log,
            choices,
            max_fidelity: None,
        }
    }
}

impl TryFrom<ParamDoc> for HyperparameterSpec {
    type Error = SpaceError;

    fn try_from(doc: ParamDoc) -> Result<Self, SpaceError> {
        let invalid = |reason: &str| SpaceError::InvalidSpec {
            name: doc.name.clone(),
            reason: reason.to_string(),
        };
        let log = doc.log.unwrap_or(false);
        let domain = match doc.kind {
            ParamKind::Continuous => {
                let lower = doc.lower.as_ref().and_then(Value::as_f64).ok_or_else(|| invalid("missing lower"))?;
                let upper = doc.upper.as_ref().and_then(Value::as_f64).ok_or_else(|| invalid("missing upper"))?;
                Domain::Continuous { lower, upper, log }
            }
            ParamKind::Integer => {
                let as_int = |v: &Option<Value>| match v {
                    Some(Value::Int(i)) => Some(*i),
                    Some(Value::Float(f)) if f.fract() == 0.0 => Some(*f as i64),
                    _ => None,
                };
                let lower = as_int(&doc.lower).ok_or_else(|| invalid("missing integer lower"))?;
                let upper = as_int(&doc.upper).ok_or_else(|| invalid("missing integer upper"))?;
                Domain::Integer { lower, upper, log }
            }
            ParamKind::Categorical => Domain::Categorical {
                choices: doc.choices.clone().ok_or_else(|| invalid("missing choices"))?,
            },
            ParamKind::Ordinal => Domain::Ordinal {
                choices: doc.choices.clone().ok_or_else(|| invalid("missing choices"))?,
            },
        };
        let spec = HyperparameterSpec::new(doc.name.clone(), domain)?;
        if let Some(max) = &doc.max_fidelity {
            let expected = spec.max_value();
            if expected.as_f64() != max.as_f64() {
                return Err(invalid("max_fidelity does not match the upper bound"));
            }
        }
        Ok(spec)
    }
}

/// An assignment of one value per parameter, in space order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(IndexMap<String, Value>);

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        self.0.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<K: Into<String>, V: Into<Value>> FromIterator<(K, V)> for Configuration {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

/// Per-parameter grid resolution for [`ConfigurationSpace::discretize_grid`].
#[derive(Debug, Clone, Default)]
pub struct GridBins {
    default: Option<usize>,
    per_param: HashMap<String, usize>,
}

impl GridBins {
    pub fn uniform(bins: usize) -> Self {
        Self {
            default: Some(bins),
            per_param: HashMap::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, bins: usize) -> Self {
        self.per_param.insert(name.into(), bins);
        self
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.per_param.get(name).copied().or(self.default)
    }
}

fn validate_assignment(
    params: &[HyperparameterSpec],
    assigned: &IndexMap<String, Value>,
) -> Result<(), SpaceError> {
    if let Some(name) = assigned.keys().find(|n| !params.iter().any(|p| p.name() == n.as_str())) {
        return Err(SpaceError::UnknownParameter(name.clone()));
    }
    for p in params {
        let v = assigned
            .get(p.name())
            .ok_or_else(|| SpaceError::MissingParameter(p.name().to_string()))?;
        if !p.contains(v) {
            return Err(p.out_of_range(v));
        }
    }
    Ok(())
}

fn cartesian<T: Clone>(axes: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for v in axis {
                let mut row = prefix.clone();
                row.push(v.clone());
                next.push(row);
            }
        }
        out = next;
    }
    out
}

/// An ordered, flat hyperparameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<HyperparameterSpec>", into = "Vec<HyperparameterSpec>")]
pub struct ConfigurationSpace {
    params: Vec<HyperparameterSpec>,
}

impl TryFrom<Vec<HyperparameterSpec>> for ConfigurationSpace {
    type Error = SpaceError;

    fn try_from(params: Vec<HyperparameterSpec>) -> Result<Self, SpaceError> {
        Self::new(params)
    }
}

impl From<ConfigurationSpace> for Vec<HyperparameterSpec> {
    fn from(space: ConfigurationSpace) -> Self {
        space.params
    }
}

impl ConfigurationSpace {
    pub fn new(params: Vec<HyperparameterSpec>) -> Result<Self, SpaceError> {
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name() == p.name()) {
                return Err(SpaceError::DuplicateName(p.name().to_string()));
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[HyperparameterSpec] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&HyperparameterSpec> {
        self.params.iter().find(|p| p.name() == name)
    }

    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        validate_assignment(&self.params, &config.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        self.params
            .iter()
            .map(|p| (p.name().to_string(), p.sample(rng)))
            .collect()
    }

    pub fn to_unit_vec(&self, config: &Configuration) -> Result<Vec<f64>, SpaceError> {
        self.params
            .iter()
            .map(|p| {
                let v = config
                    .get(p.name())
                    .ok_or_else(|| SpaceError::MissingParameter(p.name().to_string()))?;
                p.to_unit(v)
            })
            .collect()
    }

    pub fn from_unit_vec(&self, u: &[f64]) -> Result<Configuration, SpaceError> {
        if u.len() != self.params.len() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.params.len(),
                got: u.len(),
            });
        }
        let mut config = Configuration::new();
        for (p, &x) in self.params.iter().zip(u) {
            config.insert(p.name(), p.from_unit(x)?);
        }
        Ok(config)
    }

    /// Decodes after clipping every coordinate into `[0, 1]`.
    pub fn from_unit_vec_clipped(&self, u: &[f64]) -> Configuration {
        self.params
            .iter()
            .zip(u)
            .map(|(p, &x)| (p.name().to_string(), p.from_unit_clipped(x)))
            .collect()
    }

    /// Type-tagged bytes identifying a configuration, in space order.
    pub fn canonical_key(&self, config: &Configuration) -> Vec<u8> {
        let mut out = Vec::new();
        for p in &self.params {
            match config.get(p.name()) {
                Some(v) => v.write_canonical(&mut out),
                None => out.push(b'-'),
            }
        }
        out
    }

    /// Cartesian grid over per-parameter grids, first parameter varying
    /// slowest. A configuration's position in the output is its config id.
    pub fn discretize_grid(&self, bins: &GridBins) -> Result<Vec<Configuration>, SpaceError> {
        let axes = self
            .params
            .iter()
            .map(|p| p.grid(bins.get(p.name())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(cartesian(&axes)
            .into_iter()
            .map(|row| {
                self.params
                    .iter()
                    .map(|p| p.name().to_string())
                    .zip(row)
                    .collect()
            })
            .collect())
    }
}

/// A point in the fidelity space, one numeric value per dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FidelityPoint(IndexMap<String, Value>);

impl FidelityPoint {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        self.0.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Numeric values in insertion order.
    pub fn values_f64(&self) -> Vec<f64> {
        self.0.values().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Total order: lexicographic with the first (primary) dimension most
    /// significant. This refines the componentwise product order.
    pub fn compare(&self, other: &FidelityPoint) -> Ordering {
        let a = self.values_f64();
        let b = other.values_f64();
        for (x, y) in a.iter().zip(&b) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        a.len().cmp(&b.len())
    }
}

impl<K: Into<String>, V: Into<Value>> FromIterator<(K, V)> for FidelityPoint {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

/// One or two numeric fidelity dimensions; the first is the primary one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParamDoc>", into = "Vec<ParamDoc>")]
pub struct FidelitySpace {
    dims: Vec<HyperparameterSpec>,
}

impl TryFrom<Vec<ParamDoc>> for FidelitySpace {
    type Error = SpaceError;

    fn try_from(docs: Vec<ParamDoc>) -> Result<Self, SpaceError> {
        let dims = docs
            .into_iter()
            .map(HyperparameterSpec::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dims)
    }
}

impl From<FidelitySpace> for Vec<ParamDoc> {
    fn from(space: FidelitySpace) -> Self {
        space
            .dims
            .into_iter()
            .map(|d| {
                let max = d.max_value();
                let mut doc = ParamDoc::from(d);
                doc.max_fidelity = Some(max);
                doc
            })
            .collect()
    }
}

impl FidelitySpace {
    pub fn new(dims: Vec<HyperparameterSpec>) -> Result<Self, SpaceError> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(SpaceError::InvalidFidelity(format!(
                "expected one or two dimensions, got {}",
                dims.len()
            )));
        }
        for (i, d) in dims.iter().enumerate() {
            if dims[..i].iter().any(|q| q.name() == d.name()) {
                return Err(SpaceError::DuplicateName(d.name().to_string()));
            }
            match d.domain() {
                Domain::Categorical { .. } => {
                    return Err(SpaceError::InvalidFidelity(format!(
                        "`{}` is categorical",
                        d.name()
                    )))
                }
                Domain::Ordinal { choices } => {
                    let nums: Option<Vec<f64>> = choices.iter().map(Value::as_f64).collect();
                    let ok = nums.is_some_and(|n| n.windows(2).all(|w| w[0] < w[1]) && n[0] > 0.0);
                    if !ok {
                        return Err(SpaceError::InvalidFidelity(format!(
                            "ordinal `{}` needs positive, increasing numeric choices",
                            d.name()
                        )));
                    }
                }
                Domain::Continuous { lower, .. } if *lower <= 0.0 => {
                    return Err(SpaceError::InvalidFidelity(format!("`{}` must be positive", d.name())))
                }
                Domain::Integer { lower, .. } if *lower <= 0 => {
                    return Err(SpaceError::InvalidFidelity(format!("`{}` must be positive", d.name())))
                }
                _ => {}
            }
        }
        Ok(Self { dims })
    }

    /// Single-dimension shorthand.
    pub fn single(dim: HyperparameterSpec) -> Result<Self, SpaceError> {
        Self::new(vec![dim])
    }

    pub fn dims(&self) -> &[HyperparameterSpec] {
        &self.dims
    }

    pub fn primary(&self) -> &HyperparameterSpec {
        &self.dims[0]
    }

    pub fn max_point(&self) -> FidelityPoint {
        self.dims
            .iter()
            .map(|d| (d.name().to_string(), d.max_value()))
            .collect()
    }

    pub fn min_point(&self) -> FidelityPoint {
        self.dims
            .iter()
            .map(|d| (d.name().to_string(), d.min_value()))
            .collect()
    }

    pub fn is_max(&self, point: &FidelityPoint) -> bool {
        point.compare(&self.max_point()) == Ordering::Equal
    }

    /// Primary dimension set to the nearest legal value of `primary`, all
    /// other dimensions at their maximum.
    pub fn with_primary(&self, primary: f64) -> FidelityPoint {
        let mut point = self.max_point();
        let d = self.primary();
        point.insert(d.name(), d.snap(primary).expect("fidelities are numeric"));
        point
    }

    pub fn validate(&self, point: &FidelityPoint) -> Result<(), SpaceError> {
        validate_assignment(&self.dims, &point.0)
    }

    /// Per-dimension fraction `b / b_max`, in `(0, 1]`.
    pub fn fractions(&self, point: &FidelityPoint) -> Result<Vec<f64>, SpaceError> {
        self.validate(point)?;
        Ok(self
            .dims
            .iter()
            .map(|d| {
                let b = point.get(d.name()).and_then(Value::as_f64).expect("validated");
                b / d.max_value().as_f64().expect("numeric")
            })
            .collect())
    }

    pub fn to_unit_vec(&self, point: &FidelityPoint) -> Result<Vec<f64>, SpaceError> {
        self.dims
            .iter()
            .map(|d| {
                let v = point
                    .get(d.name())
                    .ok_or_else(|| SpaceError::MissingParameter(d.name().to_string()))?;
                d.to_unit(v)
            })
            .collect()
    }

    pub fn canonical_key(&self, point: &FidelityPoint) -> Vec<u8> {
        let mut out = Vec::new();
        for d in &self.dims {
            match point.get(d.name()) {
                Some(v) => v.write_canonical(&mut out),
                None => out.push(b'-'),
            }
        }
        out
    }

    /// Cartesian fidelity grid with `steps` points per numeric dimension.
    pub fn grid(&self, steps: &GridBins) -> Result<Vec<FidelityPoint>, SpaceError> {
        let axes = self
            .dims
            .iter()
            .map(|d| match steps.get(d.name()) {
                // a single step is the target fidelity alone
                Some(1) => Ok(vec![d.max_value()]),
                n => d.grid(n),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(cartesian(&axes)
            .into_iter()
            .map(|row| self.dims.iter().map(|d| d.name().to_string()).zip(row).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn log_c() -> HyperparameterSpec {
        HyperparameterSpec::float("C", 2f64.powi(-10), 2f64.powi(10), true).unwrap()
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(HyperparameterSpec::float("x", 1.0, 1.0, false).is_err());
        assert!(HyperparameterSpec::float("x", 0.0, 1.0, true).is_err());
        assert!(HyperparameterSpec::int("x", 0, 5, true).is_err());
        assert!(HyperparameterSpec::categorical::<&str>("x", []).is_err());
        assert!(HyperparameterSpec::categorical("x", ["a", "a"]).is_err());
        assert!(HyperparameterSpec::float("", 0.0, 1.0, false).is_err());
        let a = HyperparameterSpec::float("x", 0.0, 1.0, false).unwrap();
        assert_eq!(
            ConfigurationSpace::new(vec![a.clone(), a]),
            Err(SpaceError::DuplicateName("x".into()))
        );
    }

    #[test]
    fn single_choice_categorical_always_samples_it() {
        let p = HyperparameterSpec::categorical("act", ["relu"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(p.sample(&mut rng), Value::from("relu"));
        }
    }

    #[test]
    fn log_uniform_median_is_geometric_midpoint() {
        let p = log_c();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut xs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng).as_f64().unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        assert!((median - 1.0).abs() < 0.1, "median {median}");
    }

    #[test]
    fn linear_integer_frequencies_are_uniform() {
        let p = HyperparameterSpec::int("depth", 1, 3, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            match p.sample(&mut rng) {
                Value::Int(i) => counts[(i - 1) as usize] += 1,
                v => panic!("unexpected {v:?}"),
            }
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn unit_boundaries() {
        let p = HyperparameterSpec::float("x", -2.0, 3.0, false).unwrap();
        assert_eq!(p.to_unit(&Value::Float(-2.0)).unwrap(), 0.0);
        assert_eq!(p.to_unit(&Value::Float(3.0)).unwrap(), 1.0);
        let q = HyperparameterSpec::int("n", 4, 256, true).unwrap();
        assert_eq!(q.to_unit(&Value::Int(4)).unwrap(), 0.0);
        assert_eq!(q.to_unit(&Value::Int(256)).unwrap(), 1.0);
        assert_eq!(q.from_unit(1.0).unwrap(), Value::Int(256));
    }

    #[test]
    fn log_unit_midpoint_is_one() {
        let v = log_c().from_unit(0.5).unwrap().as_f64().unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn categorical_buckets() {
        let p = HyperparameterSpec::categorical("c", ["a", "b", "c"]).unwrap();
        assert_eq!(p.from_unit(0.5).unwrap(), Value::from("b"));
        assert_eq!(p.from_unit(0.0).unwrap(), Value::from("a"));
        assert_eq!(p.from_unit(1.0).unwrap(), Value::from("c"));
        assert_eq!(p.from_unit(1.0 / 3.0).unwrap(), Value::from("b"));
    }

    #[test]
    fn out_of_range_rejected() {
        let p = HyperparameterSpec::float("x", 0.0, 1.0, false).unwrap();
        assert!(p.to_unit(&Value::Float(1.5)).is_err());
        assert!(p.to_unit(&Value::Int(1)).is_err());
        assert!(p.from_unit(1.01).is_err());
        assert!(p.from_unit(-0.01).is_err());
    }

    #[test]
    fn ordinal_reports_choice_values() {
        let p = HyperparameterSpec::ordinal("batch", [8i64, 16, 32, 64]).unwrap();
        assert_eq!(p.to_unit(&Value::Int(8)).unwrap(), 0.0);
        assert_eq!(p.to_unit(&Value::Int(64)).unwrap(), 1.0);
        assert_eq!(p.from_unit(0.4).unwrap(), Value::Int(16));
        assert_eq!(p.snap(20.0), Some(Value::Int(16)));
        assert_eq!(p.snap(24.0), Some(Value::Int(32)));
    }

    #[test]
    fn grid_svm_and_logreg_sizes() {
        let svm = ConfigurationSpace::new(vec![
            log_c(),
            HyperparameterSpec::float("gamma", 2f64.powi(-10), 2f64.powi(10), true).unwrap(),
        ])
        .unwrap();
        assert_eq!(svm.discretize_grid(&GridBins::uniform(21)).unwrap().len(), 441);
        let lr = ConfigurationSpace::new(vec![
            HyperparameterSpec::float("alpha", 1e-5, 1.0, true).unwrap(),
            HyperparameterSpec::float("eta0", 1e-5, 1.0, true).unwrap(),
        ])
        .unwrap();
        assert_eq!(lr.discretize_grid(&GridBins::uniform(25)).unwrap().len(), 625);
    }

    #[test]
    fn grid_categorical_passthrough_and_order() {
        let space = ConfigurationSpace::new(vec![
            HyperparameterSpec::categorical("c", ["a", "b", "c"]).unwrap(),
        ])
        .unwrap();
        let grid = space.discretize_grid(&GridBins::default()).unwrap();
        let values: Vec<_> = grid.iter().map(|c| c.get("c").unwrap().clone()).collect();
        assert_eq!(values, vec![Value::from("a"), Value::from("b"), Value::from("c")]);

        let space = ConfigurationSpace::new(vec![
            HyperparameterSpec::int("a", 1, 2, false).unwrap(),
            HyperparameterSpec::categorical("b", ["x", "y"]).unwrap(),
        ])
        .unwrap();
        let grid = space.discretize_grid(&GridBins::uniform(2)).unwrap();
        let order: Vec<String> = grid
            .iter()
            .map(|c| format!("{}{}", c.get("a").unwrap(), c.get("b").unwrap()))
            .collect();
        assert_eq!(order, ["1x", "1y", "2x", "2y"]);
    }

    #[test]
    fn grid_errors_and_integer_dedup() {
        let p = HyperparameterSpec::float("x", 0.0, 1.0, false).unwrap();
        assert!(matches!(p.grid(Some(1)), Err(SpaceError::TooFewBins { .. })));
        assert!(matches!(p.grid(None), Err(SpaceError::MissingBins(_))));
        let leaf = HyperparameterSpec::int("min_samples_leaf", 1, 2, false).unwrap();
        assert_eq!(leaf.grid(Some(10)).unwrap(), vec![Value::Int(1), Value::Int(2)]);
        let depth = HyperparameterSpec::int("max_depth", 1, 50, true).unwrap();
        let g = depth.grid(Some(10)).unwrap();
        assert_eq!(g.first(), Some(&Value::Int(1)));
        assert_eq!(g.last(), Some(&Value::Int(50)));
        assert!(g.windows(2).all(|w| w[0].as_f64() < w[1].as_f64()));
    }

    #[test]
    fn fidelity_space_rules() {
        let epochs = HyperparameterSpec::int("epochs", 3, 243, false).unwrap();
        let sub = HyperparameterSpec::float("subsample", 0.1, 1.0, false).unwrap();
        let fs = FidelitySpace::new(vec![epochs.clone(), sub.clone()]).unwrap();
        assert!(fs.is_max(&fs.max_point()));
        let p = fs.with_primary(27.2);
        assert_eq!(p.get("epochs"), Some(&Value::Int(27)));
        assert_eq!(p.get("subsample"), Some(&Value::Float(1.0)));
        assert!(fs.min_point().compare(&fs.max_point()).is_lt());
        assert!(FidelitySpace::new(vec![]).is_err());
        assert!(FidelitySpace::single(HyperparameterSpec::categorical("c", ["a"]).unwrap()).is_err());
        let fr = fs.fractions(&p).unwrap();
        assert!((fr[0] - 27.0 / 243.0).abs() < 1e-15);
    }

    #[test]
    fn space_json_roundtrip() {
        let space = ConfigurationSpace::new(vec![
            log_c(),
            HyperparameterSpec::int("depth", 1, 3, false).unwrap(),
            HyperparameterSpec::categorical("act", ["relu", "tanh"]).unwrap(),
            HyperparameterSpec::ordinal("batch", [8i64, 16]).unwrap(),
        ])
        .unwrap();
        let json = serde_json::to_string(&space).unwrap();
        assert!(json.contains("\"kind\":\"continuous\""));
        let back: ConfigurationSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, space);

        let fs = FidelitySpace::single(HyperparameterSpec::int("iter", 10, 1000, false).unwrap()).unwrap();
        let json = serde_json::to_string(&fs).unwrap();
        assert!(json.contains("\"max_fidelity\":1000"));
        let back: FidelitySpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fs);
    }
}
