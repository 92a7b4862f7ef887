//! Result records and their CSV / JSON serialisation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Number, Value};

use crate::CliError;

pub const CSV_HEADER: [&str; 7] = ["experiment", "check", "params", "measured", "bound", "budget", "pass"];

/// Seventeen significant digits: enough to round-trip every f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    Real(f64),
    Int(i64),
}

impl Param {
    fn render(&self) -> String {
        match self {
            Param::Real(x) => fmt_f64(*x),
            Param::Int(n) => n.to_string(),
        }
    }
}

/// One inequality check `measured <= bound + budget`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    pub check: &'static str,
    pub params: Vec<(&'static str, Param)>,
    pub measured: f64,
    pub bound: f64,
    pub budget: f64,
}

impl ResultRecord {
    pub fn new(experiment: &str, check: &'static str, measured: f64, bound: f64) -> Self {
        ResultRecord {
            experiment: experiment.to_string(),
            check,
            params: Vec::new(),
            measured,
            bound,
            budget: 0.0,
        }
    }

    pub fn real(mut self, key: &'static str, v: f64) -> Self {
        self.params.push((key, Param::Real(v)));
        self
    }

    pub fn int(mut self, key: &'static str, v: usize) -> Self {
        self.params.push((key, Param::Int(v as i64)));
        self
    }

    pub fn budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    /// NaN anywhere fails the check.
    pub fn pass(&self) -> bool {
        self.measured <= self.bound + self.budget
    }

    pub fn margin(&self) -> f64 {
        self.bound + self.budget - self.measured
    }

    pub fn params_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={}", v.render()))
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub fn write_csv(path: &Path, records: &[ResultRecord]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.experiment.as_str(),
            r.check,
            &r.params_string(),
            &fmt_f64(r.measured),
            &fmt_f64(r.bound),
            &fmt_f64(r.budget),
            if r.pass() { "true" } else { "false" },
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Per-check worst (smallest) margin `bound + budget - measured`.
pub fn worst_margins(records: &[ResultRecord]) -> Value {
    let mut worst: BTreeMap<String, &ResultRecord> = BTreeMap::new();
    for r in records {
        let key = format!("{}/{}", r.experiment, r.check);
        let replace = match worst.get(&key) {
            Some(w) => r.margin() < w.margin() || r.margin().is_nan(),
            None => true,
        };
        if replace {
            worst.insert(key, r);
        }
    }
    let mut out = Map::new();
    for (key, r) in worst {
        out.insert(
            key,
            serde_json::json!({
                "margin": r.margin(),
                "params": r.params_string(),
                "measured": r.measured,
                "bound": r.bound,
                "budget": r.budget,
            }),
        );
    }
    Value::Object(out)
}

/// Rewrite every float in `v` with seventeen significant digits.
pub fn fix_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked is_f64");
            Number::from_str(&fmt_f64(x)).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(fix_floats).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, fix_floats(v))).collect()),
        other => other,
    }
}

pub fn write_json(path: &Path, value: Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&fix_floats(value))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
