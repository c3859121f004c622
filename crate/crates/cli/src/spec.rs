//! Target specification files.
//!
//! ```json
//! {"kind": "builtin", "name": "gaussian", "support": [null, "inf"], "theta": 1.0}
//! {"kind": "table", "grid": [[-3, 0.004], [0, 0.4], [3, 0.004]]}
//! {"kind": "expression", "expr": "exp(-x)", "support": [0, null]}
//! ```

use std::path::Path;
use std::sync::Arc;

use exmex::prelude::*;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};
use stein_core::{validate_target, Density, Interval, QuadratureConfig, RealFn, TargetDistribution};

use crate::{io, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Builtin,
    Table,
    Expression,
}

/// Support endpoints; `null` or `"inf"`/`"-inf"` mark an infinite end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support(pub Interval);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub kind: TargetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Support>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self::builtin("gaussian")
    }
}

impl TargetSpec {
    pub fn builtin(name: &str) -> Self {
        Self {
            kind: TargetKind::Builtin,
            name: Some(name.into()),
            grid: None,
            expr: None,
            support: None,
            theta: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::new("SPEC_PARSE", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_json(&io::read_text(path)?)
    }

    fn invalid(msg: impl Into<String>) -> CliError {
        CliError::new("SPEC_INVALID", msg)
    }

    /// The density this spec describes, before validation.
    pub fn density(&self) -> Result<Density, CliError> {
        let support = self.support.map(|s| s.0);
        match self.kind {
            TargetKind::Builtin => {
                let name = self.name.as_deref().ok_or_else(|| Self::invalid("builtin target needs `name`"))?;
                match name {
                    "gaussian" => Ok(Density::gaussian_on(support.unwrap_or(Interval::REAL_LINE))),
                    "exponential" => {
                        let d = Density::exponential(1.0);
                        match support {
                            Some(s) if s != d.support() => {
                                Err(Self::invalid("the exponential builtin lives on (0, inf)"))
                            }
                            _ => Ok(d),
                        }
                    }
                    "uniform" => {
                        let s = support.ok_or_else(|| Self::invalid("uniform target needs a bounded `support`"))?;
                        Ok(Density::uniform(s)?)
                    }
                    other => Err(Self::invalid(format!(
                        "unknown builtin `{other}` (expected gaussian, exponential or uniform)"
                    ))),
                }
            }
            TargetKind::Table => {
                let grid = self.grid.as_ref().ok_or_else(|| Self::invalid("table target needs `grid`"))?;
                Ok(Density::log_linear_table(grid, support)?)
            }
            TargetKind::Expression => {
                let expr = self.expr.as_ref().ok_or_else(|| Self::invalid("expression target needs `expr`"))?;
                let f = compile_expression(expr)?;
                Ok(Density::new(expr.clone(), support.unwrap_or(Interval::REAL_LINE), move |x| f(x)))
            }
        }
    }

    pub fn build(&self) -> Result<TargetDistribution, CliError> {
        if let Some(t) = self.theta {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Self::invalid(format!("theta must be positive, got {t}")));
            }
        }
        Ok(validate_target(self.density()?, &QuadratureConfig::default())?)
    }
}

/// Compile a formula in the single variable `x`.
pub fn compile_expression(expr: &str) -> Result<RealFn, CliError> {
    let flat = exmex::parse::<f64>(expr).map_err(|e| CliError::new("EXPR_PARSE", format!("`{expr}`: {e}")))?;
    match flat.var_names() {
        [] => {
            let c = flat
                .eval(&[])
                .map_err(|e| CliError::new("EXPR_PARSE", format!("`{expr}`: {e}")))?;
            Ok(Arc::new(move |_| c))
        }
        [v] if v == "x" => Ok(Arc::new(move |x| flat.eval(&[x]).unwrap_or(f64::NAN))),
        names => Err(CliError::new(
            "EXPR_PARSE",
            format!("`{expr}` may only use the variable x, found {names:?}"),
        )),
    }
}

impl Serialize for Support {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        for v in [self.0.lo, self.0.hi] {
            if v.is_finite() {
                t.serialize_element(&v)?;
            } else if v > 0.0 {
                t.serialize_element("inf")?;
            } else {
                t.serialize_element("-inf")?;
            }
        }
        t.end()
    }
}

impl<'de> Deserialize<'de> for Support {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum End {
            Num(f64),
            Text(String),
        }
        let [lo, hi]: [Option<End>; 2] = Deserialize::deserialize(d)?;
        let read = |e: Option<End>, default: f64| -> Result<f64, D::Error> {
            match e {
                None => Ok(default),
                Some(End::Num(v)) => Ok(v),
                Some(End::Text(t)) => match t.as_str() {
                    "inf" | "+inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    _ => Err(de::Error::custom(format!("bad support endpoint `{t}`"))),
                },
            }
        };
        let lo = read(lo, f64::NEG_INFINITY)?;
        let hi = read(hi, f64::INFINITY)?;
        Interval::new(lo, hi)
            .map(Support)
            .ok_or_else(|| de::Error::custom(format!("support ({lo}, {hi}) is empty")))
    }
}
