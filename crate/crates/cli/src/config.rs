use std::fmt;

use nondense_core::covering::TileOffset;
use nondense_core::haar::ThetaMode;
use nondense_core::{Norm, WeightVector};
use serde::{Deserialize, Serialize};

use crate::Command;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub i: Vec<f64>,
    pub j: Vec<f64>,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            i: vec![1.0],
            j: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Euclid,
    Sup,
}

impl NormKind {
    pub fn norm(self) -> Norm {
        match self {
            NormKind::Euclid => Norm::Euclid,
            NormKind::Sup => Norm::Sup,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NormKind::Euclid => "euclid",
            NormKind::Sup => "sup",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Enumeration-tree nodes per shortest-vector call.
    pub node_limit: u64,
    /// Survivor boxes per cover level.
    pub box_cap: u64,
    /// Fail with exit code 3 instead of truncating the cover.
    pub strict: bool,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            node_limit: 100_000_000,
            box_cap: 10_000_000,
            strict: false,
        }
    }
}

/// Calibration constants. They are not derived from first principles and are
/// echoed into every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    /// `None` uses the analytic value `(3^L - 1) vol(V_r)`.
    pub k3: Option<f64>,
    pub c11: f64,
    pub lambda1: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            k0: 1.0,
            k1: 1.0,
            k2: 1.0,
            k3: None,
            c11: 2.0,
            lambda1: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub format: Format,
    pub path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub weights: Weights,
    /// Row-major basis for `delta`, `nondiv` and `cover`.
    pub basis: Option<Vec<Vec<f64>>>,
    /// Row-major `m x n` matrix `A`.
    pub a: Option<Vec<f64>>,
    pub norm: NormKind,
    pub c: f64,
    pub eps: Option<Vec<f64>>,
    pub r: f64,
    pub t: f64,
    pub k: usize,
    pub n_samples: u64,
    pub q_bound: u64,
    pub t_max: f64,
    pub dt: f64,
    pub theta: ThetaMode,
    pub offset: TileOffset,
    pub sweep_t: Option<Vec<f64>>,
    pub skip: usize,
    pub counts: Option<Vec<u64>>,
    pub sizes: Option<Vec<f64>>,
    pub oracle_n: u64,
    pub oracle_depth: u32,
    pub oracle_tol: f64,
    pub assert_slope: bool,
    pub budgets: Budgets,
    pub constants: Constants,
    pub output: Output,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            weights: Weights::default(),
            basis: None,
            a: None,
            norm: NormKind::default(),
            c: 0.25,
            eps: None,
            r: 0.5,
            t: 2.0,
            k: 8,
            n_samples: 100_000,
            q_bound: 10_000,
            t_max: 15.0,
            dt: 0.01,
            theta: ThetaMode::default(),
            offset: TileOffset::default(),
            sweep_t: None,
            skip: 1,
            counts: None,
            sizes: None,
            oracle_n: 4,
            oracle_depth: 10,
            oracle_tol: 0.05,
            assert_slope: false,
            budgets: Budgets::default(),
            constants: Constants::default(),
            output: Output::default(),
        }
    }
}

/// A rejected configuration field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.message)
    }
}

fn fail<T>(field: &str, message: impl Into<String>) -> Result<T, FieldError> {
    Err(FieldError {
        field: field.into(),
        message: message.into(),
    })
}

fn require(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<(), FieldError> {
    if ok {
        Ok(())
    } else {
        fail(field, message())
    }
}

impl RunConfig {
    pub fn weight_vector(&self) -> WeightVector {
        WeightVector::new(self.weights.i.clone(), self.weights.j.clone())
            .expect("weights are validated before dispatch")
    }

    /// Fills command-specific defaults so the echoed config is complete.
    pub fn resolve(&mut self, cmd: Command) {
        if self.eps.is_none() {
            self.eps = match cmd {
                Command::Mu => Some(vec![0.05]),
                Command::Nondiv => Some(vec![0.4, 0.2, 0.1, 0.05]),
                _ => None,
            };
        }
        if self.sweep_t.is_none() && matches!(cmd, Command::Cover) {
            self.sweep_t = Some(
                [0.0, 0.5, 1.0, 1.5, 2.0]
                    .iter()
                    .map(|s| s * self.t)
                    .collect(),
            );
        }
    }

    pub fn validate(&self, cmd: Command) -> Result<(), FieldError> {
        let w = WeightVector::new(self.weights.i.clone(), self.weights.j.clone()).map_err(|e| {
            FieldError {
                field: "weights".into(),
                message: e.to_string(),
            }
        })?;
        let (m, n, d) = (w.m(), w.n(), w.d());
        require(self.budgets.node_limit > 0, "budgets.node_limit", || {
            "must be positive".into()
        })?;
        require(self.budgets.box_cap > 0, "budgets.box_cap", || {
            "must be positive".into()
        })?;
        self.validate_constants()?;

        let needs_a = matches!(cmd, Command::Bad | Command::Orbit);
        if let Some(a) = &self.a {
            require(a.len() == m * n, "a", || {
                format!(
                    "needs {} entries for an {m} x {n} matrix, got {}",
                    m * n,
                    a.len()
                )
            })?;
            require(a.iter().all(|x| x.is_finite()), "a", || {
                "entries must be finite".into()
            })?;
            require(
                !(self.basis.is_some()
                    && matches!(cmd, Command::Nondiv | Command::Cover | Command::Dim)),
                "a",
                || "give either `a` or `basis`, not both".into(),
            )?;
        } else if needs_a {
            return fail("a", format!("required: row-major {m} x {n} matrix"));
        }
        if let Some(b) = &self.basis {
            require(
                b.len() == d && b.iter().all(|r| r.len() == d),
                "basis",
                || format!("must be a {d} x {d} matrix to match the weights"),
            )?;
            require(b.iter().flatten().all(|x| x.is_finite()), "basis", || {
                "entries must be finite".into()
            })?;
        }

        match cmd {
            Command::Delta | Command::OracleCf => {}
            Command::Bad | Command::Orbit => {
                if cmd == Command::Bad {
                    self.check_c()?;
                    require(self.q_bound >= 1, "q_bound", || "must be at least 1".into())?;
                }
                require(self.t_max > 0.0 && self.t_max.is_finite(), "t_max", || {
                    format!("must be positive, got {}", self.t_max)
                })?;
                require(self.dt > 0.0 && self.dt <= self.t_max, "dt", || {
                    format!("must lie in (0, t_max], got {}", self.dt)
                })?;
            }
            Command::Mu => {
                require(d == 2, "weights", || {
                    format!("Haar sampling needs d = 2, got d = {d}")
                })?;
                require(self.n_samples >= 1, "n_samples", || {
                    "must be at least 1".into()
                })?;
                let eps = self.eps.as_deref().unwrap_or_default();
                require(!eps.is_empty(), "eps", || "must not be empty".into())?;
                require(
                    eps.iter().all(|e| *e >= 0.0 && e.is_finite()),
                    "eps",
                    || "entries must be finite and nonnegative".into(),
                )?;
            }
            Command::Nondiv => {
                require(self.t >= 0.0 && self.t.is_finite(), "t", || {
                    format!("must be nonnegative, got {}", self.t)
                })?;
                require(self.n_samples >= 1, "n_samples", || {
                    "must be at least 1".into()
                })?;
                let eps = self.eps.as_deref().unwrap_or_default();
                require(!eps.is_empty(), "eps", || "must not be empty".into())?;
                require(eps.iter().all(|e| *e > 0.0 && *e < 1.0), "eps", || {
                    "entries must lie in (0, 1)".into()
                })?;
                require(eps.windows(2).all(|p| p[1] < p[0]), "eps", || {
                    "must be strictly decreasing".into()
                })?;
            }
            Command::Cover => self.validate_cover()?,
            Command::Dim => match (&self.counts, &self.sizes) {
                (None, None) => self.validate_cover()?,
                (Some(c), Some(s)) => {
                    require(c.len() == s.len(), "sizes", || {
                        format!("has {} entries but counts has {}", s.len(), c.len())
                    })?;
                    require(s.iter().all(|x| *x > 0.0 && x.is_finite()), "sizes", || {
                        "entries must be positive".into()
                    })?;
                }
                (Some(_), None) => return fail("sizes", "required when counts is given"),
                (None, Some(_)) => return fail("counts", "required when sizes is given"),
            },
        }
        if matches!(cmd, Command::OracleCf | Command::Dim) {
            require(self.oracle_n >= 1, "oracle_n", || {
                "must be at least 1".into()
            })?;
            require(self.oracle_depth >= 4, "oracle_depth", || {
                format!("must be at least 4, got {}", self.oracle_depth)
            })?;
            require(self.oracle_tol > 0.0, "oracle_tol", || {
                "must be positive".into()
            })?;
        }
        Ok(())
    }

    fn check_c(&self) -> Result<(), FieldError> {
        require(self.c > 0.0 && self.c < 1.0, "c", || {
            format!("must lie in (0, 1), got {}", self.c)
        })
    }

    fn validate_cover(&self) -> Result<(), FieldError> {
        self.check_c()?;
        require(self.r > 0.0 && self.r.is_finite(), "r", || {
            format!("must be positive, got {}", self.r)
        })?;
        require(self.t > 0.0 && self.t.is_finite(), "t", || {
            format!("must be positive, got {}", self.t)
        })?;
        require(self.k >= 1, "k", || "must be at least 1".into())?;
        if let Some(s) = &self.sweep_t {
            require(
                s.iter().all(|x| *x >= 0.0 && x.is_finite()),
                "sweep_t",
                || "entries must be nonnegative".into(),
            )?;
        }
        Ok(())
    }

    fn validate_constants(&self) -> Result<(), FieldError> {
        let c = &self.constants;
        for (name, v) in [
            ("constants.k0", c.k0),
            ("constants.k1", c.k1),
            ("constants.k2", c.k2),
            ("constants.c11", c.c11),
            ("constants.lambda1", c.lambda1),
        ] {
            require(v > 0.0 && v.is_finite(), name, || {
                format!("must be positive, got {v}")
            })?;
        }
        if let Some(k3) = c.k3 {
            require(k3 > 0.0 && k3.is_finite(), "constants.k3", || {
                format!("must be positive, got {k3}")
            })?;
        }
        Ok(())
    }
}

/// Applies a `key=value` override. `key` may be dotted (`budgets.box_cap`);
/// `value` is parsed as JSON and falls back to a string.
pub fn apply_override(doc: &mut serde_json::Value, spec: &str) -> Result<(), FieldError> {
    let Some((key, raw)) = spec.split_once('=') else {
        return fail(spec, "override must have the form key=value");
    };
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.into()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (idx, part) in parts.iter().enumerate() {
        let obj = match node {
            serde_json::Value::Object(map) => map,
            _ => return fail(key, "parent is not an object"),
        };
        if idx + 1 == parts.len() {
            obj.insert((*part).into(), value);
            return Ok(());
        }
        node = obj
            .entry(*part)
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

/// Builds a config from defaults, an optional JSON document and overrides.
pub fn load(text: Option<&str>, overrides: &[String]) -> Result<RunConfig, FieldError> {
    let mut doc = match text {
        Some(t) => serde_json::from_str(t).map_err(|e| FieldError {
            field: "config".into(),
            message: e.to_string(),
        })?,
        None => serde_json::json!({}),
    };
    if !doc.is_object() {
        return fail("config", "top level must be a JSON object");
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    serde_json::from_value(doc).map_err(|e| FieldError {
        field: field_of(&e.to_string()),
        message: e.to_string(),
    })
}

fn field_of(msg: &str) -> String {
    // serde names the offending key in backticks
    msg.split('`').nth(1).unwrap_or("config").to_string()
}
