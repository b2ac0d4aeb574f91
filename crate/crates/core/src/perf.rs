//! Benchmark ingestion, polynomial regression and performance-goal checks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use twofloat::TwoFloat;

use crate::catalog::{Catalog, RuleConfig};
use crate::finding::{Finding, Target};
use crate::span::{LineIndex, SourceSpan};
use crate::yaml;

pub const MAX_DEGREE: usize = 4;
/// Smallest pivot accepted while solving the normalized normal equations.
pub const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub predictor_name: String,
    pub response_name: String,
    pub points: Vec<(f64, f64)>,
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfModel {
    pub degree: usize,
    /// β₀..β_d in original units.
    pub coefficients: Vec<f64>,
    pub rmse: f64,
    pub n: usize,
    pub predictor_name: String,
    pub response_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl FromStr for Comparator {
    type Err = PerfError;

    fn from_str(s: &str) -> Result<Self, PerfError> {
        match s.trim() {
            "<=" | "≤" | "le" => Ok(Comparator::AtMost),
            ">=" | "≥" | "ge" => Ok(Comparator::AtLeast),
            other => Err(PerfError::GoalsInvalid(format!("unknown comparator `{other}`"))),
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::AtMost => "<=",
            Comparator::AtLeast => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfGoal {
    pub response_name: String,
    pub comparator: Comparator,
    pub threshold: f64,
    pub at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub satisfied: bool,
    pub predicted: f64,
    /// Distance to the threshold, positive on the satisfying side.
    pub margin: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerfError {
    #[error("CSV syntax error in row {row}: {message}")]
    CsvSyntax { row: usize, message: String },
    #[error("no data rows")]
    EmptyData,
    #[error("{n} points cannot determine a degree-{degree} polynomial")]
    InsufficientData { n: usize, degree: usize },
    #[error("degree {0} exceeds the maximum of {MAX_DEGREE}")]
    DegreeTooHigh(usize),
    #[error("normal equations are ill-conditioned (pivot {pivot:e})")]
    IllConditioned { pivot: f64 },
    #[error("goal is about `{goal}` but the model predicts `{model}`")]
    NameMismatch { goal: String, model: String },
    #[error("invalid goals document: {0}")]
    GoalsInvalid(String),
}

/// Parse `x_name,y_name` CSV with an optional leading `# source: <label>` line.
pub fn ingest_benchmark(text: &str) -> Result<SampleSet, PerfError> {
    let source = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| l.trim().strip_prefix('#'))
        .and_then(|l| l.trim_start().strip_prefix("source:"))
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty());
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| PerfError::CsvSyntax { row: 1, message: e.to_string() })?.clone();
    if header.len() != 2 || header.iter().any(str::is_empty) {
        return Err(PerfError::CsvSyntax { row: 1, message: "expected a header `x_name,y_name`".into() });
    }
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| PerfError::CsvSyntax { row, message: e.to_string() })?;
        if record.len() != 2 {
            return Err(PerfError::CsvSyntax { row, message: format!("expected 2 fields, found {}", record.len()) });
        }
        let cell = |j: usize| -> Result<f64, PerfError> {
            let v: f64 = record[j]
                .parse()
                .map_err(|_| PerfError::CsvSyntax { row, message: format!("`{}` is not a number", &record[j]) })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(PerfError::CsvSyntax { row, message: format!("`{}` is not finite", &record[j]) })
            }
        };
        points.push((cell(0)?, cell(1)?));
    }
    if points.is_empty() {
        return Err(PerfError::EmptyData);
    }
    Ok(SampleSet { predictor_name: header[0].to_owned(), response_name: header[1].to_owned(), points, source })
}

/// Solve `a x = b` in place by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<TwoFloat>>, mut b: Vec<TwoFloat>) -> Result<Vec<TwoFloat>, PerfError> {
    let n = b.len();
    for col in 0..n {
        let pivot_row =
            (col..n).max_by(|&i, &j| a[i][col].abs().hi().total_cmp(&a[j][col].abs().hi())).expect("non-empty");
        let pivot = a[pivot_row][col].abs().hi();
        if pivot < PIVOT_EPS {
            return Err(PerfError::IllConditioned { pivot });
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let d = f * a[col][k];
                a[row][k] -= d;
            }
            let d = f * b[col];
            b[row] -= d;
        }
    }
    let mut x = vec![TwoFloat::from(0.0); n];
    for row in (0..n).rev() {
        let s = (row + 1..n).fold(TwoFloat::from(0.0), |acc, k| acc + a[row][k] * x[k]);
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn horner_dd(coefficients: &[TwoFloat], x: TwoFloat) -> TwoFloat {
    coefficients.iter().rev().fold(TwoFloat::from(0.0), |acc, &c| acc * x + c)
}

/// Ordinary least squares on `[1, x, …, x^d]`. The predictor is centered and
/// scaled by a power of two into `[-1, 1]`, the normal equations are formed
/// and solved in double-double arithmetic, and coefficients are returned in
/// original units.
pub fn fit_ols(samples: &SampleSet, degree: usize) -> Result<PerfModel, PerfError> {
    if degree > MAX_DEGREE {
        return Err(PerfError::DegreeTooHigh(degree));
    }
    let n = samples.points.len();
    if n == 0 {
        return Err(PerfError::EmptyData);
    }
    if degree + 1 > n {
        return Err(PerfError::InsufficientData { n, degree });
    }
    let mean = samples.points.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let spread = samples.points.iter().map(|p| (p.0 - mean).abs()).fold(0.0, f64::max);
    let scale = if spread > 0.0 { 2f64.powi(spread.log2().ceil() as i32) } else { 1.0 };
    // x - mean is exact in double-double and division by a power of two is exact
    let z: Vec<TwoFloat> = samples.points.iter().map(|p| TwoFloat::new_sub(p.0, mean) / scale).collect();
    let m = degree + 1;
    let zero = TwoFloat::from(0.0);
    let mut ata = vec![vec![zero; m]; m];
    let mut aty = vec![zero; m];
    for (&zi, &(_, y)) in z.iter().zip(&samples.points) {
        let mut powers = vec![TwoFloat::from(1.0); m];
        for k in 1..m {
            powers[k] = powers[k - 1] * zi;
        }
        for r in 0..m {
            for c in 0..m {
                ata[r][c] += powers[r] * powers[c];
            }
            aty[r] += powers[r] * y;
        }
    }
    let inv_n = TwoFloat::from(1.0) / n as f64;
    let ata = ata.into_iter().map(|row| row.into_iter().map(|v| v * inv_n).collect()).collect();
    let aty = aty.into_iter().map(|v| v * inv_n).collect();
    let gamma = solve(ata, aty)?;
    let sse: f64 = z
        .iter()
        .zip(&samples.points)
        .map(|(&zi, &(_, y))| f64::from(TwoFloat::from(y) - horner_dd(&gamma, zi)).powi(2))
        .sum();
    // Σ γ_k ((x - mean)/scale)^k expanded into powers of x
    let mut beta = vec![zero; m];
    for (k, g) in gamma.iter().enumerate() {
        let gk = *g / scale.powi(k as i32);
        let mut shift = TwoFloat::from(1.0);
        for j in (0..=k).rev() {
            beta[j] += gk * binomial(k, j) * shift;
            shift *= -mean;
        }
    }
    Ok(PerfModel {
        degree,
        coefficients: beta.into_iter().map(f64::from).collect(),
        rmse: (sse / n as f64).sqrt(),
        n,
        predictor_name: samples.predictor_name.clone(),
        response_name: samples.response_name.clone(),
    })
}

pub fn predict(model: &PerfModel, x: f64) -> f64 {
    horner(&model.coefficients, x)
}

pub fn check_goal(model: &PerfModel, goal: &PerfGoal) -> Result<Verdict, PerfError> {
    if goal.response_name != model.response_name {
        return Err(PerfError::NameMismatch { goal: goal.response_name.clone(), model: model.response_name.clone() });
    }
    let predicted = predict(model, goal.at);
    let margin = match goal.comparator {
        Comparator::AtMost => goal.threshold - predicted,
        Comparator::AtLeast => predicted - goal.threshold,
    };
    Ok(Verdict { satisfied: margin >= 0.0, predicted, margin, rmse: model.rmse })
}

/// One entry of `goals.yaml`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    pub response: String,
    pub comparator: String,
    pub threshold: f64,
    pub at: f64,
    /// CSV path relative to the goals file.
    pub data: String,
    #[serde(default = "default_degree")]
    pub degree: usize,
}

fn default_degree() -> usize {
    1
}

impl GoalSpec {
    pub fn goal(&self) -> Result<PerfGoal, PerfError> {
        if !self.threshold.is_finite() || !self.at.is_finite() {
            return Err(PerfError::GoalsInvalid("threshold and at must be finite".into()));
        }
        Ok(PerfGoal {
            response_name: self.response.clone(),
            comparator: self.comparator.parse()?,
            threshold: self.threshold,
            at: self.at,
        })
    }
}

/// Goals with the source span of each list item.
pub fn parse_goals(text: &str, file: &str) -> Result<Vec<(GoalSpec, SourceSpan)>, PerfError> {
    let root = yaml::parse(text).map_err(|e| PerfError::GoalsInvalid(e.to_string()))?;
    if root.is_null() {
        return Ok(Vec::new());
    }
    let items = root.as_seq().ok_or_else(|| PerfError::GoalsInvalid("expected a list of goals".into()))?;
    let lines = LineIndex::new(text);
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let spec: GoalSpec = serde_json::from_value(item.to_json())
                .map_err(|e| PerfError::GoalsInvalid(format!("goal {i}: {e}")))?;
            Ok((spec, SourceSpan::new(file, item.start, item.end, &lines)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalOutcome {
    pub index: usize,
    pub goal: PerfGoal,
    pub model: PerfModel,
    pub source: Option<String>,
    pub verdict: Verdict,
}

/// Check every goal in a goals document. `read` returns the CSV text for a
/// `data` path; a goal whose data or fit fails is an error.
pub fn evaluate_goals(
    text: &str,
    file: &str,
    read: &mut dyn FnMut(&str) -> Result<String, String>,
    catalog: &Catalog,
    config: &RuleConfig,
) -> Result<(Vec<GoalOutcome>, Vec<Finding>), PerfError> {
    let mut outcomes = Vec::new();
    let mut findings = Vec::new();
    for (index, (spec, span)) in parse_goals(text, file)?.into_iter().enumerate() {
        let goal = spec.goal()?;
        let csv = read(&spec.data).map_err(|e| PerfError::GoalsInvalid(format!("goal {index}: {e}")))?;
        let samples = ingest_benchmark(&csv)?;
        let model = fit_ols(&samples, spec.degree)?;
        let verdict = check_goal(&model, &goal)?;
        if !verdict.satisfied {
            findings.extend(goal_findings(&goal, &verdict, span, index.to_string(), catalog, config));
        }
        outcomes.push(GoalOutcome { index, goal, model, source: samples.source, verdict });
    }
    Ok((outcomes, findings))
}

/// P001 findings for a violated goal.
pub fn goal_findings(
    goal: &PerfGoal,
    verdict: &Verdict,
    span: SourceSpan,
    subject: String,
    catalog: &Catalog,
    config: &RuleConfig,
) -> Vec<Finding> {
    catalog
        .entries_for(Target::Perf)
        .filter(|e| e.detection.detector == "perf_goal" && config.is_enabled(&e.rule_id))
        .map(|entry| {
            let data = BTreeMap::from([
                ("response".to_owned(), json!(goal.response_name)),
                ("comparator".to_owned(), json!(goal.comparator.to_string())),
                ("threshold".to_owned(), json!(goal.threshold)),
                ("at".to_owned(), json!(goal.at)),
                ("predicted".to_owned(), json!(verdict.predicted)),
                ("margin".to_owned(), json!(verdict.margin)),
                ("rmse".to_owned(), json!(verdict.rmse)),
            ]);
            catalog.finding(
                entry,
                format!(
                    "predicted {} {:.4} at {} violates goal {} {}",
                    goal.response_name, verdict.predicted, goal.at, goal.comparator, goal.threshold
                ),
                span.clone(),
                subject.clone(),
                data,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[(f64, f64)]) -> SampleSet {
        SampleSet { predictor_name: "x".into(), response_name: "latency".into(), points: points.to_vec(), source: None }
    }

    #[test]
    fn ingest_rows_and_source() {
        let s = ingest_benchmark("# source: STREAM\nsize,bandwidth\n1,2\n2,4\n3,6.5\n").unwrap();
        assert_eq!(s.points.len(), 3);
        assert_eq!(s.source.as_deref(), Some("STREAM"));
        assert_eq!((s.predictor_name.as_str(), s.response_name.as_str()), ("size", "bandwidth"));
    }

    #[test]
    fn ingest_errors() {
        assert!(matches!(ingest_benchmark("x,y\nabc,1.0\n"), Err(PerfError::CsvSyntax { row: 2, .. })));
        assert!(matches!(ingest_benchmark("x,y\n1,2\n3,inf\n"), Err(PerfError::CsvSyntax { row: 3, .. })));
        assert_eq!(ingest_benchmark("x,y\n"), Err(PerfError::EmptyData));
    }

    #[test]
    fn exact_line_and_mean() {
        let m = fit_ols(&set(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]), 1).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-12 && (m.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(m.rmse < 1e-12);
        assert!((predict(&m, 10.0) - 21.0).abs() < 1e-10);
        let m = fit_ols(&set(&[(0.0, 5.0), (3.0, 5.0), (7.0, 5.0)]), 0).unwrap();
        assert!((m.coefficients[0] - 5.0).abs() < 1e-12);
        assert_eq!(predict(&m, 1e6), 5.0);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(fit_ols(&set(&[(0.0, 1.0)]), 1).unwrap_err(), PerfError::InsufficientData { n: 1, degree: 1 });
        assert!(matches!(
            fit_ols(&set(&[(2.0, 1.0), (2.0, 3.0), (2.0, 4.0)]), 1),
            Err(PerfError::IllConditioned { .. })
        ));
        assert_eq!(fit_ols(&set(&[(0.0, 1.0); 6]), 5).unwrap_err(), PerfError::DegreeTooHigh(5));
    }

    #[test]
    fn goals() {
        let m = PerfModel {
            degree: 1,
            coefficients: vec![1.0, 2.0],
            rmse: 0.0,
            n: 3,
            predictor_name: "x".into(),
            response_name: "latency".into(),
        };
        let goal =
            |t| PerfGoal { response_name: "latency".into(), comparator: Comparator::AtMost, threshold: t, at: 10.0 };
        let v = check_goal(&m, &goal(30.0)).unwrap();
        assert!(v.satisfied);
        assert_eq!((v.predicted, v.margin), (21.0, 9.0));
        let v = check_goal(&m, &goal(20.0)).unwrap();
        assert!(!v.satisfied);
        let f = goal_findings(
            &goal(20.0),
            &v,
            SourceSpan::file_start("goals.yaml"),
            "0".into(),
            &Catalog::builtin(),
            &RuleConfig::default(),
        );
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].rule_id, "P001");
        let mut other = goal(1.0);
        other.response_name = "throughput".into();
        assert!(matches!(check_goal(&m, &other), Err(PerfError::NameMismatch { .. })));
    }

    #[test]
    fn goals_document() {
        let text = "- response: latency\n  comparator: '<='\n  threshold: 20\n  at: 10\n  data: bench/lat.csv\n";
        let mut read = |p: &str| {
            assert_eq!(p, "bench/lat.csv");
            Ok("# source: LINPACK\nload,latency\n0,1\n1,3\n2,5\n".to_owned())
        };
        let (outcomes, findings) =
            evaluate_goals(text, "goals.yaml", &mut read, &Catalog::builtin(), &RuleConfig::default()).unwrap();
        assert_eq!(outcomes.len(), 1);
        assert_eq!(outcomes[0].source.as_deref(), Some("LINPACK"));
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].span.start_line, 1);
        assert!(parse_goals("- response: x\n  comparator: '<'\n  threshold: 1\n  at: 1\n  data: a\n", "g").unwrap()[0]
            .0
            .goal()
            .is_err());
    }
}
