//! Stage orchestration over a single declarative config.
//!
//! Output layout under `output_dir`:
//!
//! | path                                  | stage               |
//! |---------------------------------------|---------------------|
//! | `cohort.jsonl`, `cohort.meta.json`    | generate            |
//! | `splits.json`                         | featurize           |
//! | `features/space.json`                 | featurize           |
//! | `features/train.jsonl`                | featurize           |
//! | `features/reserve_negatives.jsonl`    | featurize           |
//! | `features/test_run_NN.jsonl`          | featurize           |
//! | `models/<kind>.json`                  | train               |
//! | `models/<kind>.search.json`           | train               |
//! | `models/<kind>.threshold.json`        | calibrate           |
//! | `metrics/metrics.{json,csv}`          | evaluate            |
//! | `metrics/table.txt`                   | evaluate            |
//! | `explain/<kind>.importance.csv`       | explain (trees)     |
//! | `explain/<kind>.<id>.{shap.json,waterfall.csv}` | explain   |
//! | `llm/finetune.jsonl`                  | llm export-finetune |
//! | `llm/metrics.json`, `llm/predictions.jsonl`, `llm/audit.jsonl` | llm evaluate |
//! | `table.txt`, `metrics/report.{json,csv}` | report           |
//! | `stages/<stage>.json`                 | every stage         |
//! | `provenance.json`                     | every stage         |
//!
//! Stage seeds: cohort `derive(seed, ["cohort"])`, split `["split"]`,
//! search and training `["train"]`, calibration `["calibrate", kind]`,
//! SHAP `["explain"]`, LLM retry jitter `["llm"]`.

mod artifacts;
mod config;

pub use artifacts::{hash_json, record_provenance, Layout, Provenance, Stage, StageManifest, StageRun};
pub use config::{CalibrationSection, CohortSection, ExplainSection, LlmSection, ModelsSection, PipelineConfig};

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::calibrate::{cv_threshold, ThresholdReport};
use crate::cohort::io::{read_cohort, read_json, read_jsonl, write_cohort, write_json, write_jsonl, CohortCounts, CohortMetadata};
use crate::cohort::{apply_eligibility, generate_synthetic_cohort, make_splits, Label, PatientRecord, SplitIds, Splits};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_runs, render_table, write_csv, ModelClassifier, ModelEvaluation};
use crate::explain::{background_rows, export_waterfall, gain_importance, shap_values, write_importance_csv, write_waterfall_csv, ShapConfig, ShapExplanation, WaterfallRecord};
use crate::features::{build_feature_space, design_matrix, featurize, read_design_matrix, window_all, write_design_matrix, DesignMatrix, FeatureSpace, WindowedPatient};
use crate::llm::{export_finetune_dataset, AuditLog, ChatEndpoint, HttpEndpoint, LlmClassifier};
use crate::models::{random_search, train, ModelKind, SearchResult, TrainedModel};
use crate::{par, seed};

/// What a stage wrote, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<String>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmPredictionRecord {
    pub run: usize,
    pub id: String,
    pub label: u8,
    pub answer: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRecord {
    pub model: ModelKind,
    pub patient_id: String,
    pub label: u8,
    pub explanation: ShapExplanation,
    pub waterfall: Vec<WaterfallRecord>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub layout: Layout,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        par::set_workers(config.workers);
        let layout = Layout::new(config.output_dir.clone());
        Ok(Pipeline { config, layout })
    }

    // ---- config hashes -------------------------------------------------

    fn hash_generate(&self) -> Result<String> {
        let input_digest = match &self.config.cohort.input {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                Some(hash_json(&bytes)?)
            }
            None => None,
        };
        hash_json(&json!(["generate", self.config.seed, self.config.cohort, input_digest]))
    }

    fn hash_featurize(&self) -> Result<String> {
        hash_json(&json!(["featurize", self.hash_generate()?, self.config.split]))
    }

    fn hash_train(&self) -> Result<String> {
        hash_json(&json!(["train", self.hash_featurize()?, self.config.models]))
    }

    fn hash_calibrate(&self) -> Result<String> {
        hash_json(&json!(["calibrate", self.hash_train()?, self.config.calibration]))
    }

    fn hash_evaluate(&self) -> Result<String> {
        hash_json(&json!(["evaluate", self.hash_calibrate()?]))
    }

    fn hash_explain(&self) -> Result<String> {
        hash_json(&json!(["explain", self.hash_train()?, self.config.explain]))
    }

    fn llm_section(&self) -> Result<&LlmSection> {
        self.config
            .llm
            .as_ref()
            .ok_or_else(|| Error::Config("llm: section missing from config".into()))
    }

    fn hash_llm_export(&self) -> Result<String> {
        let g = self.llm_section()?.load_guidelines()?;
        hash_json(&json!(["llm-export-finetune", self.hash_featurize()?, g]))
    }

    fn hash_llm_evaluate(&self) -> Result<String> {
        let llm = self.llm_section()?;
        hash_json(&json!(["llm-evaluate", self.hash_featurize()?, llm, llm.load_guidelines()?]))
    }

    fn hash_report(&self, with_llm: bool) -> Result<String> {
        let llm = if with_llm { Some(self.hash_llm_evaluate()?) } else { None };
        hash_json(&json!(["report", self.hash_evaluate()?, llm]))
    }

    // ---- helpers ---------------------------------------------------------

    fn timed(&self, stage: Stage, hash: &str, f: impl FnOnce() -> Result<StageOutcome>) -> Result<StageOutcome> {
        let started = chrono::Utc::now();
        let clock = Instant::now();
        info!("stage {} starting", stage.as_str());
        let outcome = f()?;
        self.layout.write_manifest(stage, hash, outcome.outputs.clone())?;
        record_provenance(
            &self.layout,
            stage,
            StageRun {
                config_hash: hash.to_string(),
                started: started.to_rfc3339(),
                finished: chrono::Utc::now().to_rfc3339(),
                elapsed_ms: clock.elapsed().as_millis(),
            },
        )?;
        info!("stage {} done: {}", stage.as_str(), outcome.summary);
        Ok(outcome)
    }

    fn load_cohort(&self) -> Result<Vec<PatientRecord>> {
        self.layout.require(Stage::Generate, &self.hash_generate()?)?;
        read_cohort(&self.layout.path("cohort.jsonl"))
    }

    /// Rebuilds the split patient lists from the cohort file and `splits.json`.
    pub fn load_splits(&self) -> Result<Splits> {
        let cohort = self.load_cohort()?;
        self.layout.require(Stage::Featurize, &self.hash_featurize()?)?;
        let ids: SplitIds = read_json(&self.layout.path("splits.json"))?;
        let by_id: HashMap<&str, &PatientRecord> = cohort.iter().map(|p| (p.id.as_str(), p)).collect();
        let fetch = |list: &[String]| -> Result<Vec<PatientRecord>> {
            list.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|p| (*p).clone())
                        .ok_or_else(|| Error::Data(format!("splits.json names patient {id} missing from the cohort")))
                })
                .collect()
        };
        Ok(Splits {
            train: fetch(&ids.train)?,
            test_runs: ids.test_runs.iter().map(|r| fetch(r)).collect::<Result<_>>()?,
            reserve: fetch(&ids.reserve)?,
        })
    }

    pub fn load_space(&self) -> Result<FeatureSpace> {
        self.layout.require(Stage::Featurize, &self.hash_featurize()?)?;
        read_json(&self.layout.path("features/space.json"))
    }

    pub fn load_train_matrix(&self) -> Result<DesignMatrix> {
        let space = self.load_space()?;
        read_design_matrix(&self.layout.path("features/train.jsonl"), &space)
    }

    fn model_path(kind: ModelKind) -> String {
        format!("models/{}.json", kind.as_str())
    }

    fn search_path(kind: ModelKind) -> String {
        format!("models/{}.search.json", kind.as_str())
    }

    fn threshold_path(kind: ModelKind) -> String {
        format!("models/{}.threshold.json", kind.as_str())
    }

    pub fn load_model(&self, kind: ModelKind) -> Result<TrainedModel> {
        self.layout.require(Stage::Train, &self.hash_train()?)?;
        let path = self.layout.path(&Self::model_path(kind));
        if !path.exists() {
            return Err(Error::MissingArtifact { stage: "train", path });
        }
        TrainedModel::load(&path)
    }

    /// The trained model with its calibrated decision threshold applied.
    pub fn load_calibrated(&self, kind: ModelKind) -> Result<TrainedModel> {
        let model = self.load_model(kind)?;
        self.layout.require(Stage::Calibrate, &self.hash_calibrate()?)?;
        let path = self.layout.path(&Self::threshold_path(kind));
        if !path.exists() {
            return Err(Error::MissingArtifact { stage: "calibrate", path });
        }
        let report: ThresholdReport = read_json(&path)?;
        model.with_threshold(report.chosen_threshold)
    }

    fn endpoint(&self, llm: &LlmSection) -> Result<Box<dyn ChatEndpoint>> {
        if let Some(mock) = &llm.mock {
            return Ok(Box::new(mock.clone()));
        }
        let mut cfg = llm.endpoint.clone().expect("validated: endpoint or mock present");
        cfg.seed = seed::derive(self.config.seed, &["llm"]);
        let audit = AuditLog::create(&self.layout.path("llm/audit.jsonl"))?;
        Ok(Box::new(HttpEndpoint::new(cfg, Some(audit))?))
    }

    // ---- stages ----------------------------------------------------------

    pub fn generate(&self) -> Result<StageOutcome> {
        let hash = self.hash_generate()?;
        self.timed(Stage::Generate, &hash, || {
            self.layout.ensure_dirs(&[""])?;
            let criteria = &self.config.cohort.criteria;
            let (patients, synthetic) = match (self.config.synthetic(), &self.config.cohort.input) {
                (Some(s), _) => (generate_synthetic_cohort(&s)?, Some(s)),
                (None, Some(input)) => (read_cohort(input)?, None),
                (None, None) => unreachable!("validated"),
            };
            let n_raw = patients.len();
            let mut patients = apply_eligibility(&patients, criteria);
            patients.sort_by(|a, b| a.id.cmp(&b.id));
            write_cohort(&self.layout.path("cohort.jsonl"), &patients)?;
            let counts = CohortCounts::of(&patients);
            write_json(
                &self.layout.path("cohort.meta.json"),
                &CohortMetadata {
                    config: synthetic,
                    seed: seed::derive(self.config.seed, &["cohort"]),
                    counts: counts.clone(),
                    config_hash: Some(hash.clone()),
                },
            )?;
            Ok(StageOutcome {
                stage: Stage::Generate,
                outputs: vec!["cohort.jsonl".into(), "cohort.meta.json".into()],
                summary: format!("{} eligible of {n_raw} patients ({} CRC)", counts.patients, counts.crc),
            })
        })
    }

    pub fn featurize(&self) -> Result<StageOutcome> {
        let hash = self.hash_featurize()?;
        let cohort = self.load_cohort()?;
        self.timed(Stage::Featurize, &hash, || {
            self.layout.ensure_dirs(&["features"])?;
            let criteria = &self.config.cohort.criteria;
            let splits = make_splits(&cohort, &self.config.split_plan())?;
            write_json(&self.layout.path("splits.json"), &splits.ids())?;

            let train_w = window_all(&splits.train, criteria);
            let space = build_feature_space(&train_w)?;
            write_json(&self.layout.path("features/space.json"), &space)?;
            let mut outputs = vec!["splits.json".to_string(), "features/space.json".to_string()];

            let mut save = |rel: String, patients: &[PatientRecord]| -> Result<()> {
                let m = design_matrix(&window_all(patients, criteria), &space);
                write_design_matrix(&self.layout.path(&rel), &m)?;
                outputs.push(rel);
                Ok(())
            };
            save("features/train.jsonl".into(), &splits.train)?;
            let reserve_neg: Vec<PatientRecord> = splits.reserve.iter().filter(|p| p.label == Label::NonCRC).cloned().collect();
            save("features/reserve_negatives.jsonl".into(), &reserve_neg)?;
            for (i, run) in splits.test_runs.iter().enumerate() {
                save(format!("features/test_run_{i:02}.jsonl"), run)?;
            }
            Ok(StageOutcome {
                stage: Stage::Featurize,
                outputs,
                summary: format!(
                    "{} features; train {}, {} test runs, {} reserve negatives",
                    space.dim(),
                    splits.train.len(),
                    splits.test_runs.len(),
                    reserve_neg.len()
                ),
            })
        })
    }

    pub fn train(&self) -> Result<StageOutcome> {
        let hash = self.hash_train()?;
        let matrix = self.load_train_matrix()?;
        self.timed(Stage::Train, &hash, || {
            self.layout.ensure_dirs(&["models"])?;
            let m = &self.config.models;
            let train_seed = seed::derive(self.config.seed, &["train"]);
            let mut outputs = Vec::new();
            let mut lines = Vec::new();
            for &kind in &m.kinds {
                let search = random_search(kind, &matrix, &m.search_space(kind), m.n_iters, m.k_folds, train_seed)?;
                let model = train(kind, &matrix, &search.best, train_seed)?;
                model.save(&self.layout.path(&Self::model_path(kind)))?;
                write_json(&self.layout.path(&Self::search_path(kind)), &search)?;
                outputs.push(Self::model_path(kind));
                outputs.push(Self::search_path(kind));
                lines.push(format!("{kind} cv F1 {:.3}", search.cv_f1));
            }
            Ok(StageOutcome {
                stage: Stage::Train,
                outputs,
                summary: lines.join("; "),
            })
        })
    }

    pub fn load_search(&self, kind: ModelKind) -> Result<SearchResult> {
        self.layout.require(Stage::Train, &self.hash_train()?)?;
        read_json(&self.layout.path(&Self::search_path(kind)))
    }

    pub fn calibrate(&self) -> Result<StageOutcome> {
        let hash = self.hash_calibrate()?;
        let matrix = self.load_train_matrix()?;
        let space = self.load_space()?;
        let reserve = read_design_matrix(&self.layout.path("features/reserve_negatives.jsonl"), &space)?;
        let searches = self.config.models.kinds.iter().map(|&k| self.load_search(k)).collect::<Result<Vec<_>>>()?;
        self.timed(Stage::Calibrate, &hash, || {
            let c = &self.config.calibration;
            let mut outputs = Vec::new();
            let mut lines = Vec::new();
            for search in &searches {
                let kind = search.kind;
                let s = seed::derive(self.config.seed, &["calibrate", kind.as_str()]);
                let report = cv_threshold(kind, &search.best, &matrix, &reserve.rows, c.k_folds, c.target_prevalence, s)?;
                write_json(&self.layout.path(&Self::threshold_path(kind)), &report)?;
                outputs.push(Self::threshold_path(kind));
                lines.push(format!("{kind} threshold {:.4}", report.chosen_threshold));
            }
            Ok(StageOutcome {
                stage: Stage::Calibrate,
                outputs,
                summary: lines.join("; "),
            })
        })
    }

    pub fn evaluate(&self) -> Result<StageOutcome> {
        let hash = self.hash_evaluate()?;
        let splits = self.load_splits()?;
        let space = self.load_space()?;
        let models = self.config.models.kinds.iter().map(|&k| self.load_calibrated(k)).collect::<Result<Vec<_>>>()?;
        self.timed(Stage::Evaluate, &hash, || {
            self.layout.ensure_dirs(&["metrics"])?;
            let criteria = &self.config.cohort.criteria;
            let evals = models
                .iter()
                .map(|m| evaluate_runs(&ModelClassifier::new(m, &space, criteria)?, &splits.test_runs))
                .collect::<Result<Vec<ModelEvaluation>>>()?;
            write_json(&self.layout.path("metrics/metrics.json"), &evals)?;
            write_csv(&self.layout.path("metrics/metrics.csv"), &evals)?;
            let table = render_table(&evals);
            std::fs::write(self.layout.path("metrics/table.txt"), &table).map_err(|e| Error::io(self.layout.path("metrics/table.txt"), e))?;
            Ok(StageOutcome {
                stage: Stage::Evaluate,
                outputs: vec!["metrics/metrics.json".into(), "metrics/metrics.csv".into(), "metrics/table.txt".into()],
                summary: format!("{} models over {} runs\n{table}", evals.len(), splits.test_runs.len()),
            })
        })
    }

    /// SHAP explanation of one patient (default: the first CRC patient of the
    /// first test run) plus gain importance for tree ensembles.
    pub fn explain(&self, kind: ModelKind, patient_id: Option<&str>) -> Result<StageOutcome> {
        let hash = self.hash_explain()?;
        let model = self.load_model(kind)?;
        let matrix = self.load_train_matrix()?;
        let splits = self.load_splits()?;
        let cohort = self.load_cohort()?;
        self.timed(Stage::Explain, &hash, || {
            self.layout.ensure_dirs(&["explain"])?;
            let patient = match patient_id {
                Some(id) => cohort
                    .iter()
                    .find(|p| p.id == id)
                    .ok_or_else(|| Error::Config(format!("patient `{id}` is not in the cohort")))?,
                None => splits
                    .test_runs
                    .first()
                    .and_then(|r| r.iter().filter(|p| p.label == Label::CRC).min_by(|a, b| a.id.cmp(&b.id)))
                    .ok_or_else(|| Error::Data("no CRC patient in the first test run".into()))?,
            };
            let e = &self.config.explain;
            let x = featurize(&WindowedPatient::new(patient, &self.config.cohort.criteria), &matrix.space);
            let explain_seed = seed::derive(self.config.seed, &["explain"]);
            let background = background_rows(&matrix, e.background, explain_seed);
            let shap_cfg = ShapConfig {
                max_exact_features: e.max_exact_features,
                n_permutations: e.n_permutations,
                seed: explain_seed,
            };
            let expl = shap_values(&model, &x, &background, &shap_cfg)?;
            let names: Vec<String> = (0..matrix.space.dim()).map(|c| matrix.space.display(c).to_string()).collect();
            let waterfall = export_waterfall(&expl, &x, &names, e.top_k);

            let stem = format!("explain/{}.{}", kind.as_str(), patient.id);
            let mut outputs = vec![format!("{stem}.shap.json"), format!("{stem}.waterfall.csv")];
            write_waterfall_csv(&self.layout.path(&outputs[1]), &waterfall)?;
            write_json(
                &self.layout.path(&outputs[0]),
                &ExplainRecord {
                    model: kind,
                    patient_id: patient.id.clone(),
                    label: patient.label.as_u8(),
                    explanation: expl.clone(),
                    waterfall,
                },
            )?;
            if let Some(ens) = model.ensemble() {
                let table = gain_importance(ens, &names)?;
                let rel = format!("explain/{}.importance.csv", kind.as_str());
                write_importance_csv(&self.layout.path(&rel), &table)?;
                outputs.push(rel);
            }
            Ok(StageOutcome {
                stage: Stage::Explain,
                outputs,
                summary: format!(
                    "{kind} on {}: base {:.4}, prediction {:.4}, additivity gap {:.2e}",
                    patient.id,
                    expl.base_value,
                    expl.prediction,
                    expl.additivity_gap()
                ),
            })
        })
    }

    pub fn llm_export_finetune(&self) -> Result<StageOutcome> {
        let hash = self.hash_llm_export()?;
        let guidelines = self.llm_section()?.load_guidelines()?;
        let splits = self.load_splits()?;
        self.timed(Stage::LlmExportFinetune, &hash, || {
            self.layout.ensure_dirs(&["llm"])?;
            let n = export_finetune_dataset(&splits.train, &self.config.cohort.criteria, &guidelines, &self.layout.path("llm/finetune.jsonl"))?;
            Ok(StageOutcome {
                stage: Stage::LlmExportFinetune,
                outputs: vec!["llm/finetune.jsonl".into()],
                summary: format!("{n} fine-tuning records"),
            })
        })
    }

    pub fn llm_evaluate(&self) -> Result<StageOutcome> {
        let hash = self.hash_llm_evaluate()?;
        let llm = self.llm_section()?;
        let guidelines = llm.load_guidelines()?;
        let splits = self.load_splits()?;
        self.timed(Stage::LlmEvaluate, &hash, || {
            self.layout.ensure_dirs(&["llm"])?;
            let endpoint = self.endpoint(llm)?;
            let classifier = LlmClassifier::new(llm.name.clone(), endpoint.as_ref(), &guidelines, &self.config.cohort.criteria, llm.max_concurrency());
            let eval = evaluate_runs(&classifier, &splits.test_runs)?;
            let mut preds = classifier.take_predictions().into_iter();
            let mut records = Vec::new();
            for r in &eval.runs {
                for p in &splits.test_runs[r.run] {
                    let (id, pred) = preds.next().expect("one prediction per evaluated patient");
                    debug_assert_eq!(id, p.id);
                    records.push(LlmPredictionRecord {
                        run: r.run,
                        id,
                        label: p.label.as_u8(),
                        answer: pred.answer,
                        probability: pred.probability,
                        explanation: pred.explanation,
                    });
                }
            }
            write_json(&self.layout.path("llm/metrics.json"), &eval)?;
            write_jsonl(&self.layout.path("llm/predictions.jsonl"), &records)?;
            let mut outputs = vec!["llm/metrics.json".to_string(), "llm/predictions.jsonl".to_string()];
            if llm.mock.is_none() {
                outputs.push("llm/audit.jsonl".into());
            }
            Ok(StageOutcome {
                stage: Stage::LlmEvaluate,
                outputs,
                summary: format!(
                    "{}: sensitivity {:.3}, specificity {:.3}",
                    eval.model,
                    eval.aggregate.sensitivity.mean,
                    eval.aggregate.specificity.mean
                ),
            })
        })
    }

    /// Reads back the LLM predictions file.
    pub fn load_llm_predictions(&self) -> Result<Vec<LlmPredictionRecord>> {
        self.layout.require(Stage::LlmEvaluate, &self.hash_llm_evaluate()?)?;
        read_jsonl(&self.layout.path("llm/predictions.jsonl"))
    }

    /// Combined comparison table: every configured model plus the LLM arm
    /// when its metrics are current.
    pub fn report(&self) -> Result<StageOutcome> {
        self.layout.require(Stage::Evaluate, &self.hash_evaluate()?)?;
        let mut evals: Vec<ModelEvaluation> = read_json(&self.layout.path("metrics/metrics.json"))?;
        let with_llm = match &self.config.llm {
            Some(_) => self.layout.is_fresh(Stage::LlmEvaluate, &self.hash_llm_evaluate()?),
            None => false,
        };
        if with_llm {
            evals.push(read_json(&self.layout.path("llm/metrics.json"))?);
        }
        let hash = self.hash_report(with_llm)?;
        self.timed(Stage::Report, &hash, || {
            write_json(&self.layout.path("metrics/report.json"), &evals)?;
            write_csv(&self.layout.path("metrics/report.csv"), &evals)?;
            let table = render_table(&evals);
            let path = self.layout.path("table.txt");
            std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
            Ok(StageOutcome {
                stage: Stage::Report,
                outputs: vec!["table.txt".into(), "metrics/report.json".into(), "metrics/report.csv".into()],
                summary: table,
            })
        })
    }

    /// Every stage in order; the LLM stages run when the config has an
    /// `llm` section.
    pub fn run(&self) -> Result<Vec<StageOutcome>> {
        let mut out = vec![self.generate()?, self.featurize()?, self.train()?, self.calibrate()?, self.evaluate()?];
        if self.config.llm.is_some() {
            out.push(self.llm_export_finetune()?);
            out.push(self.llm_evaluate()?);
        }
        out.push(self.report()?);
        Ok(out)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.layout.root.clone()
    }
}
