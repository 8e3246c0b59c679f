//! Confusion counts, per-run metrics, the repeated test-run protocol and
//! cross-run aggregation.
//!
//! Ratios with a zero denominator are reported as 0 and flagged degenerate.
//! Confidence intervals are `t(0.975, n-1) * sd / sqrt(n)` with the sample
//! standard deviation; both the sd and the half-width are kept.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cohort::{CohortCriteria, PatientRecord};
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureSpace, WindowedPatient};
use crate::models::TrainedModel;
use crate::par;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionCounts> {
    if labels.len() != predictions.len() {
        return Err(Error::Data(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y == 1, p == 1) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Sensitivity,
    Specificity,
    Precision,
    Npv,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Precision,
        Metric::Npv,
        Metric::F1,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::Precision => "precision",
            Metric::Npv => "npv",
            Metric::F1 => "f1",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Metric::Sensitivity => "Sensitivity (Recall)",
            Metric::Specificity => "Specificity",
            Metric::Precision => "Precision (PPV)",
            Metric::Npv => "NPV",
            Metric::F1 => "F1-Score",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub npv: f64,
    pub f1: f64,
    /// Metrics whose defining ratio was 0/0 (reported as 0).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<Metric>,
}

impl RunMetrics {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::Precision => self.precision,
            Metric::Npv => self.npv,
            Metric::F1 => self.f1,
        }
    }
}

pub fn compute_metrics(c: &ConfusionCounts) -> RunMetrics {
    let mut degenerate = Vec::new();
    let mut ratio = |m: Metric, num: u64, den: u64| {
        if den == 0 {
            degenerate.push(m);
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let sensitivity = ratio(Metric::Sensitivity, c.tp, c.tp + c.fn_);
    let specificity = ratio(Metric::Specificity, c.tn, c.tn + c.fp);
    let precision = ratio(Metric::Precision, c.tp, c.tp + c.fp);
    let npv = ratio(Metric::Npv, c.tn, c.tn + c.fn_);
    let f1 = if precision + sensitivity == 0.0 {
        degenerate.push(Metric::F1);
        0.0
    } else {
        2.0 * precision * sensitivity / (precision + sensitivity)
    };
    RunMetrics {
        sensitivity,
        specificity,
        precision,
        npv,
        f1,
        degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; absent for a single run.
    pub sd: Option<f64>,
    /// 95% t-interval half-width; absent for a single run.
    pub ci_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_runs: usize,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
    pub precision: MetricSummary,
    pub npv: MetricSummary,
    pub f1: MetricSummary,
}

impl AggregateReport {
    pub fn get(&self, m: Metric) -> &MetricSummary {
        match m {
            Metric::Sensitivity => &self.sensitivity,
            Metric::Specificity => &self.specificity,
            Metric::Precision => &self.precision,
            Metric::Npv => &self.npv,
            Metric::F1 => &self.f1,
        }
    }
}

fn t_quantile_975(df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975)
}

pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
    if n < 2 {
        return MetricSummary {
            mean,
            sd: None,
            ci_half_width: None,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    MetricSummary {
        mean,
        sd: Some(sd),
        ci_half_width: Some(t_quantile_975((n - 1) as f64) * sd / (n as f64).sqrt()),
    }
}

pub fn aggregate(runs: &[RunMetrics]) -> AggregateReport {
    let col = |m: Metric| summarize(&runs.iter().map(|r| r.get(m)).collect::<Vec<_>>());
    AggregateReport {
        n_runs: runs.len(),
        sensitivity: col(Metric::Sensitivity),
        specificity: col(Metric::Specificity),
        precision: col(Metric::Precision),
        npv: col(Metric::Npv),
        f1: col(Metric::F1),
    }
}

/// Anything that labels patients: the ML arm (window, featurize, threshold)
/// and the LLM arm (prompt, endpoint, parse) both implement this.
pub trait PatientClassifier: Sync {
    fn name(&self) -> String;
    fn classify_batch(&self, patients: &[PatientRecord]) -> Result<Vec<u8>>;
}

/// Scores raw patients with a trained model over its training feature space.
pub struct ModelClassifier<'a> {
    pub model: &'a TrainedModel,
    pub space: &'a FeatureSpace,
    pub criteria: &'a CohortCriteria,
}

impl ModelClassifier<'_> {
    pub fn new<'a>(model: &'a TrainedModel, space: &'a FeatureSpace, criteria: &'a CohortCriteria) -> Result<ModelClassifier<'a>> {
        if model.space_hash != space.manifest_hash() {
            return Err(Error::Data(format!(
                "{} model was trained on a different feature space",
                model.kind
            )));
        }
        Ok(ModelClassifier { model, space, criteria })
    }

    pub fn score_batch(&self, patients: &[PatientRecord]) -> Result<Vec<f64>> {
        par::try_map(patients, |p| {
            let x = featurize(&WindowedPatient::new(p, self.criteria), self.space);
            self.model.predict_score(&x)
        })
    }
}

impl PatientClassifier for ModelClassifier<'_> {
    fn name(&self) -> String {
        self.model.kind.to_string()
    }

    fn classify_batch(&self, patients: &[PatientRecord]) -> Result<Vec<u8>> {
        let t = self.model.decision_threshold;
        Ok(self.score_batch(patients)?.into_iter().map(|s| (s >= t) as u8).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub n_patients: usize,
    pub counts: ConfusionCounts,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub runs: Vec<RunResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_runs: Vec<usize>,
    pub aggregate: AggregateReport,
}

/// Classifies every run and aggregates the per-run metrics in run order.
/// Runs without positives are skipped with a warning.
pub fn evaluate_runs(classifier: &dyn PatientClassifier, runs: &[Vec<PatientRecord>]) -> Result<ModelEvaluation> {
    if runs.is_empty() {
        return Err(Error::Config("no test runs to evaluate".into()));
    }
    let name = classifier.name();
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let labels: Vec<u8> = run.iter().map(|p| p.label.as_u8()).collect();
        if !labels.contains(&1) {
            warn!("{name}: test run {i} has no positive patients; skipped");
            skipped.push(i);
            continue;
        }
        let preds = classifier.classify_batch(run)?;
        let counts = confusion(&labels, &preds)?;
        results.push(RunResult {
            run: i,
            n_patients: run.len(),
            metrics: compute_metrics(&counts),
            counts,
        });
    }
    if results.is_empty() {
        return Err(Error::Data(format!("{name}: every test run was skipped")));
    }
    let aggregate = aggregate(&results.iter().map(|r| r.metrics.clone()).collect::<Vec<_>>());
    Ok(ModelEvaluation {
        model: name,
        runs: results,
        skipped_runs: skipped,
        aggregate,
    })
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

/// `0.910 ±(0.046)` with the CI half-width, or the bare mean for one run.
pub fn format_cell(s: &MetricSummary) -> String {
    match s.ci_half_width {
        Some(ci) => format!("{} ±({})", fmt3(s.mean), fmt3(ci)),
        None => fmt3(s.mean),
    }
}

/// Plain-text comparison table, one row per model.
pub fn render_table(evals: &[ModelEvaluation]) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(Metric::ALL.iter().map(|m| m.header().to_string()));
    let rows: Vec<Vec<String>> = evals
        .iter()
        .map(|e| {
            let mut r = vec![e.model.clone()];
            r.extend(Metric::ALL.iter().map(|&m| format_cell(e.aggregate.get(m))));
            r
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "| {} |", padded.join(" | "));
    };
    line(&header, &mut out);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&rule, &mut out);
    for r in &rows {
        line(r, &mut out);
    }
    out
}

/// One CSV row per model with mean, sd and CI half-width for each metric.
pub fn write_csv(path: &Path, evals: &[ModelEvaluation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["model".to_string(), "n_runs".to_string()];
    for m in Metric::ALL {
        for suffix in ["mean", "sd", "ci_half_width"] {
            header.push(format!("{}_{suffix}", m.key()));
        }
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for e in evals {
        let mut rec = vec![e.model.clone(), e.aggregate.n_runs.to_string()];
        for m in Metric::ALL {
            let s = e.aggregate.get(m);
            rec.push(format!("{:.6}", s.mean));
            rec.push(opt(s.sd));
            rec.push(opt(s.ci_half_width));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_basics() {
        let c = confusion(&[1, 0], &[1, 0]).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (1, 1, 0, 0));
        let c = confusion(&[1; 10], &[0; 10]).unwrap();
        assert_eq!(c.fn_, 10);
        assert_eq!(confusion(&[], &[]).unwrap(), ConfusionCounts::default());
        assert!(confusion(&[1], &[]).is_err());
    }

    #[test]
    fn one_percent_run_arithmetic() {
        let m = compute_metrics(&ConfusionCounts {
            tp: 7,
            fp: 89,
            fn_: 3,
            tn: 901,
        });
        assert!((m.sensitivity - 0.7).abs() < 1e-4);
        assert!((m.specificity - 901.0 / 990.0).abs() < 1e-12);
        assert!((m.specificity - 0.9101).abs() < 1e-4);
        assert!((m.precision - 0.0729).abs() < 1e-4);
        assert!((m.npv - 0.9967).abs() < 1e-4);
        assert!((m.f1 - 0.1321).abs() < 1e-4);
        assert!(m.degenerate.is_empty());
    }

    #[test]
    fn zero_over_zero_is_flagged() {
        let m = compute_metrics(&ConfusionCounts {
            tp: 0,
            fp: 0,
            fn_: 10,
            tn: 990,
        });
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate.contains(&Metric::Precision));
        assert!(m.degenerate.contains(&Metric::F1));
        let perfect = compute_metrics(&ConfusionCounts {
            tp: 10,
            fp: 0,
            fn_: 0,
            tn: 990,
        });
        for k in Metric::ALL {
            assert_eq!(perfect.get(k), 1.0);
        }
    }

    #[test]
    fn identical_runs_have_zero_spread() {
        let m = compute_metrics(&ConfusionCounts {
            tp: 7,
            fp: 89,
            fn_: 3,
            tn: 901,
        });
        let agg = aggregate(&vec![m.clone(); 10]);
        assert_eq!(agg.n_runs, 10);
        assert!((agg.f1.mean - m.f1).abs() < 1e-15);
        assert_eq!(agg.f1.sd, Some(0.0));
        assert_eq!(agg.f1.ci_half_width, Some(0.0));
    }

    #[test]
    fn ci_uses_student_t() {
        let s = summarize(&[1.0, 2.0, 3.0]);
        // t(0.975, 2) = 4.302652729911275
        assert!((s.ci_half_width.unwrap() - 4.302652729911275 * 1.0 / 3f64.sqrt()).abs() < 1e-9);
        assert_eq!(summarize(&[0.5]).sd, None);
    }

    #[test]
    fn table_has_five_metric_columns() {
        let m = compute_metrics(&ConfusionCounts {
            tp: 9,
            fp: 300,
            fn_: 1,
            tn: 690,
        });
        let e = ModelEvaluation {
            model: "LR".into(),
            runs: vec![],
            skipped_runs: vec![],
            aggregate: aggregate(&[m.clone(), m]),
        };
        let t = render_table(&[e]);
        let header = t.lines().next().unwrap();
        for m in Metric::ALL {
            assert!(header.contains(m.header()));
        }
        let row = t.lines().nth(2).unwrap();
        assert_eq!(row.matches('±').count(), 5);
        assert!(row.contains("0.900 ±(0.000)"));
    }

    proptest! {
        #[test]
        fn sensitivity_reconstructs_tp(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            let c = ConfusionCounts { tp, fp, fn_, tn };
            let m = compute_metrics(&c);
            prop_assert_eq!((m.sensitivity * (tp + fn_) as f64).round() as u64, tp);
            if tn + fn_ > 0 {
                prop_assert_eq!(m.npv, tn as f64 / (tn + fn_) as f64);
            }
        }

        #[test]
        fn lowering_threshold_is_monotone(scores in proptest::collection::vec(0.0f64..1.0, 2..60), seed_ in 0u64..100) {
            let labels: Vec<u8> = scores.iter().enumerate().map(|(i, _)| ((i as u64 + seed_) % 3 == 0) as u8).collect();
            let mut ts = scores.clone();
            ts.sort_by(|a, b| b.total_cmp(a));
            let mut prev: Option<RunMetrics> = None;
            for t in ts {
                let preds: Vec<u8> = scores.iter().map(|&s| (s >= t) as u8).collect();
                let m = compute_metrics(&confusion(&labels, &preds).unwrap());
                if let Some(p) = &prev {
                    prop_assert!(m.sensitivity >= p.sensitivity);
                    prop_assert!(m.specificity <= p.specificity);
                }
                prev = Some(m);
            }
        }
    }
}
