use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// One line of the train table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRow {
    pub algorithm: String,
    pub n1: usize,
    pub omega: f64,
    /// `⟨‖μ_Nr‖²⟩` over the train set.
    pub mean_sq_field_residual: f64,
    /// `⟨(J μ_Nr)²⟩`, the linearized objective residual.
    pub mean_sq_linearized_objective_residual: f64,
}

/// One line of the test table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRow {
    pub algorithm: String,
    pub n1: usize,
    pub gradient: String,
    /// `‖μ*_Nr‖`.
    pub field_residual_norm: f64,
    /// `C(μ*_N)` from a full simulation; the ground truth has `C = 0`.
    pub simulated_objective_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ScoreReport {
    /// Dimension chosen by the energy criterion.
    pub n: usize,
    pub n1: Vec<usize>,
    pub eps_scaled: f64,
    pub objective_at_trial_point: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_gradient: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub train: Vec<TrainRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub test: Vec<TestRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_cosine: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ScoreReport {
    pub fn train_row(&self, algorithm: &str, n1: usize) -> Option<&TrainRow> {
        self.train
            .iter()
            .find(|r| r.algorithm == algorithm && r.n1 == n1)
    }

    pub fn test_row(&self, algorithm: &str, n1: usize, gradient: &str) -> Option<&TestRow> {
        self.test
            .iter()
            .find(|r| r.algorithm == algorithm && r.n1 == n1 && r.gradient == gradient)
    }

    pub fn train_csv(&self) -> String {
        let mut out = String::from(
            "row,n1,algorithm,omega,mean_sq_field_residual,mean_sq_linearized_objective_residual\n",
        );
        for (i, r) in self.train.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                i + 1,
                r.n1,
                r.algorithm,
                fmt_f64(r.omega),
                fmt_f64(r.mean_sq_field_residual),
                fmt_f64(r.mean_sq_linearized_objective_residual)
            );
        }
        out
    }

    pub fn test_csv(&self) -> String {
        let mut out = String::from(
            "row,gradient,n1,algorithm,field_residual_norm,simulated_objective_residual\n",
        );
        for (i, r) in self.test.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                i + 1,
                r.gradient,
                r.n1,
                r.algorithm,
                fmt_f64(r.field_residual_norm),
                fmt_f64(r.simulated_objective_residual)
            );
        }
        out
    }

    /// Checks the finite, nonnegative invariant on every table entry.
    pub fn validate(&self) -> Result<()> {
        let train = self.train.iter().flat_map(|r| {
            [
                r.omega,
                r.mean_sq_field_residual,
                r.mean_sq_linearized_objective_residual,
            ]
        });
        let test = self
            .test
            .iter()
            .flat_map(|r| [r.field_residual_norm, r.simulated_objective_residual]);
        if train.chain(test).any(|v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::numerical(
                "score report has a negative or non-finite entry",
            ));
        }
        Ok(())
    }
}

/// Writes `section` into `report.json` under `path`'s directory, keeping
/// any other sections already present. Keys are emitted in sorted order.
pub fn merge_report_json(path: &Path, section: &str, value: Value, config: Value) -> Result<()> {
    let mut root = match fs::read_to_string(path) {
        Ok(text) => match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => map,
            _ => Map::new(),
        },
        Err(_) => Map::new(),
    };
    root.insert("schema".into(), Value::String("ospca-report v1".into()));
    root.insert("config".into(), config);
    root.insert(section.into(), value);
    let mut text = serde_json::to_string_pretty(&Value::Object(root))
        .map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
