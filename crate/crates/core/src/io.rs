//! File formats: headerless comma-separated matrices, the JSON model bundle,
//! and the JSON reports. All indices in these formats are 1-based and all
//! JSON objects have a fixed key order.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::counterexample::{AlternativeFactorization, Verification};
use crate::design::{DesignError, DesignMatrix, FactorSet, IdentifiabilityReport, Verdict};
use crate::model::{AssumptionReport, FactorModel, ModelError};
use crate::recovery::RecoveryResult;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}, field {field}: cannot parse {text:?} as a number")]
    BadNumber {
        line: usize,
        field: usize,
        text: String,
    },
    #[error("{0}: rows have unequal lengths")]
    Ragged(&'static str),
    #[error("{0}: matrix is empty")]
    Empty(&'static str),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn parse_rows<T: std::str::FromStr>(text: &str) -> Result<Vec<Vec<T>>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(field, s)| {
                s.parse::<T>().map_err(|_| IoError::BadNumber {
                    line: line + 1,
                    field: field + 1,
                    text: s.to_string(),
                })
            })
            .collect::<Result<Vec<T>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>, IoError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(IoError::Empty(what));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(IoError::Ragged(what));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Real matrix from headerless CSV, one row per line.
pub fn read_matrix_csv(text: &str) -> Result<DMatrix<f64>, IoError> {
    rows_to_matrix(&parse_rows::<f64>(text)?, "matrix")
}

/// Design matrix from headerless CSV of 0/1 integers.
pub fn read_design_csv(text: &str) -> Result<DesignMatrix, IoError> {
    Ok(DesignMatrix::new(&parse_rows::<i64>(text)?)?)
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|&x| format_float(x)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_design_csv(q: &DesignMatrix) -> String {
    let mut out = String::new();
    for row in q.to_rows() {
        let fields: Vec<String> = row.iter().map(u8::to_string).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// JSON model bundle: `theta`, `a`, `q` as arrays of rows, optional `bound_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub theta: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub q: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_c: Option<f64>,
}

impl ModelBundle {
    pub fn from_model(model: &FactorModel) -> Self {
        ModelBundle {
            theta: matrix_to_rows(model.theta()),
            a: matrix_to_rows(model.loadings()),
            q: model
                .design()
                .to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(i64::from).collect())
                .collect(),
            bound_c: model.explicit_bound(),
        }
    }

    pub fn to_model(&self) -> Result<FactorModel, IoError> {
        let q = DesignMatrix::new(&self.q)?;
        let theta = rows_to_matrix(&self.theta, "theta")?;
        let a = rows_to_matrix(&self.a, "a")?;
        Ok(FactorModel::new(theta, a, q, self.bound_c)?)
    }

    /// Parses a bundle, or the `bundle` member of a counterexample document.
    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let value: Value = serde_json::from_str(text)?;
        let inner = match value {
            Value::Object(mut map) if map.contains_key("bundle") => map.remove("bundle").unwrap_or(Value::Null),
            other => other,
        };
        Ok(serde_json::from_value(inner)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }
}

fn one_based(set: &FactorSet) -> Vec<usize> {
    set.iter().map(|f| f + 1).collect()
}

fn verdict_value(v: Verdict) -> Value {
    match v.as_bool() {
        Some(b) => Value::Bool(b),
        None => Value::String("undefined".into()),
    }
}

#[derive(Serialize)]
struct ReportDoc {
    k: usize,
    j: usize,
    masking: Vec<Vec<bool>>,
    theta_identifiable: Vec<bool>,
    a_identifiable: Vec<Value>,
    intersection_sets: Vec<Vec<usize>>,
    warnings: Vec<String>,
}

pub fn report_to_json(report: &IdentifiabilityReport) -> String {
    let doc = ReportDoc {
        k: report.k,
        j: report.j,
        masking: report.masking.clone(),
        theta_identifiable: report.theta_identifiable.clone(),
        a_identifiable: report.a_identifiable.iter().copied().map(verdict_value).collect(),
        intersection_sets: report.intersection_sets.iter().map(one_based).collect(),
        warnings: report.warnings.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("report serializes")
}

#[derive(Serialize)]
struct RankFailureDoc {
    pattern: Vec<usize>,
    rank: usize,
    required: usize,
}

#[derive(Serialize)]
struct AssumptionDoc {
    overall: bool,
    a1_theta_rank_ok: bool,
    theta_rank: usize,
    theta_min_singular: f64,
    a2_failures: Vec<RankFailureDoc>,
    a3_violations: Vec<[usize; 2]>,
    a4_ok: bool,
    a4_max_entry: f64,
    bound_c: f64,
}

fn assumption_doc(report: &AssumptionReport) -> AssumptionDoc {
    AssumptionDoc {
        overall: report.overall,
        a1_theta_rank_ok: report.a1_theta_rank_ok,
        theta_rank: report.theta_rank,
        theta_min_singular: report.theta_min_singular,
        a2_failures: report
            .a2_failures
            .iter()
            .map(|f| RankFailureDoc {
                pattern: one_based(&f.pattern),
                rank: f.rank,
                required: f.required,
            })
            .collect(),
        a3_violations: report.a3_violations.iter().map(|&(j, k)| [j + 1, k + 1]).collect(),
        a4_ok: report.a4_ok,
        a4_max_entry: report.a4_max_entry,
        bound_c: report.bound_c,
    }
}

pub fn assumptions_to_json(report: &AssumptionReport) -> String {
    serde_json::to_string_pretty(&assumption_doc(report)).expect("report serializes")
}

#[derive(Serialize)]
struct PerturbationDoc {
    kind: &'static str,
    k: usize,
    k_prime: usize,
    epsilon: f64,
}

#[derive(Serialize)]
struct VerificationDoc {
    recomposition_error: f64,
    perturbed_angle: f64,
    assumptions: AssumptionDoc,
}

#[derive(Serialize)]
struct CounterexampleDoc {
    bundle: ModelBundle,
    perturbation: PerturbationDoc,
    verification: VerificationDoc,
}

/// The alternative bundle, the perturbation that produced it and its
/// verification. [`ModelBundle::from_json`] reads the `bundle` member back.
pub fn counterexample_to_json(
    base: &FactorModel,
    alt: &AlternativeFactorization,
    verification: &Verification,
) -> String {
    let doc = CounterexampleDoc {
        bundle: ModelBundle::from_model(&alt.to_model(base)),
        perturbation: PerturbationDoc {
            kind: alt.kind.tag(),
            k: alt.perturbation.k + 1,
            k_prime: alt.perturbation.k_prime + 1,
            epsilon: alt.perturbation.epsilon,
        },
        verification: VerificationDoc {
            recomposition_error: verification.recomposition_error,
            perturbed_angle: alt.perturbed_angle(base),
            assumptions: assumption_doc(&verification.assumptions),
        },
    };
    serde_json::to_string_pretty(&doc).expect("counterexample serializes")
}

#[derive(Serialize)]
struct DirectionDoc {
    factor: usize,
    vector: Vec<f64>,
}

#[derive(Serialize)]
struct DiagnosticsDoc {
    tol: f64,
    intersection_dims: Vec<usize>,
    skipped: Vec<usize>,
    max_residual: Option<f64>,
}

#[derive(Serialize)]
struct RecoveryDoc {
    directions: Vec<DirectionDoc>,
    loadings: Option<Vec<Vec<f64>>>,
    residuals: Option<Vec<f64>>,
    diagnostics: DiagnosticsDoc,
}

fn diagnostics_doc(result: &RecoveryResult, tol: f64) -> DiagnosticsDoc {
    DiagnosticsDoc {
        tol,
        intersection_dims: result.intersection_dims.clone(),
        skipped: result.skipped.iter().map(|f| f + 1).collect(),
        max_residual: result
            .loadings
            .as_ref()
            .map(|l| l.residuals.iter().fold(0.0_f64, |acc, &r| acc.max(r))),
    }
}

pub fn recovery_to_json(result: &RecoveryResult, tol: f64) -> String {
    let doc = RecoveryDoc {
        directions: result
            .directions
            .iter()
            .map(|(f, v)| DirectionDoc {
                factor: f + 1,
                vector: v.iter().copied().collect(),
            })
            .collect(),
        loadings: result.loadings.as_ref().map(|l| matrix_to_rows(&l.loadings)),
        residuals: result.loadings.as_ref().map(|l| l.residuals.clone()),
        diagnostics: diagnostics_doc(result, tol),
    };
    serde_json::to_string_pretty(&doc).expect("recovery serializes")
}

/// Diagnostics block alone, for the CSV output mode.
pub fn recovery_diagnostics_json(result: &RecoveryResult, tol: f64) -> String {
    serde_json::to_string_pretty(&diagnostics_doc(result, tol)).expect("diagnostics serialize")
}

/// Recovered directions as the columns of an `N × d` matrix.
pub fn directions_matrix(result: &RecoveryResult) -> Option<DMatrix<f64>> {
    if result.directions.is_empty() {
        return None;
    }
    let cols: Vec<_> = result.directions.iter().map(|(_, v)| v.clone()).collect();
    Some(DMatrix::from_columns(&cols))
}
