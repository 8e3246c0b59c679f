//! Declarative pipeline configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortCriteria, SplitPlan, SyntheticCohortConfig};
use crate::error::{Error, Result};
use crate::llm::{EndpointConfig, GuidelineSpec, MockEndpoint};
use crate::models::hyper::{default_search_space, SearchSpace};
use crate::models::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSection {
    /// Generate a synthetic cohort with these settings...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticCohortConfig>,
    /// ...or read an existing cohort (JSON Lines of patient records).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub criteria: CohortCriteria,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub kinds: Vec<ModelKind>,
    /// Random-search candidates per kind.
    pub n_iters: usize,
    pub k_folds: usize,
    /// Per-kind replacements for the default search space, keyed by kind name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub search_spaces: BTreeMap<String, SearchSpace>,
}

impl ModelsSection {
    pub fn search_space(&self, kind: ModelKind) -> SearchSpace {
        self.search_spaces
            .iter()
            .find(|(k, _)| k.parse::<ModelKind>().ok() == Some(kind))
            .map(|(_, s)| s.clone())
            .unwrap_or_else(|| default_search_space(kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub k_folds: usize,
    pub target_prevalence: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            k_folds: 5,
            target_prevalence: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub top_k: usize,
    pub background: usize,
    pub max_exact_features: usize,
    pub n_permutations: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            top_k: 10,
            background: crate::explain::DEFAULT_BACKGROUND,
            max_exact_features: 12,
            n_permutations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    /// Row label in the comparison table.
    #[serde(default = "default_llm_name")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointConfig>,
    /// Offline rulebook; takes precedence over `endpoint` when both are set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockEndpoint>,
    /// JSON file holding a guideline block; the built-in one otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidelines: Option<PathBuf>,
}

fn default_llm_name() -> String {
    "LLM".into()
}

impl LlmSection {
    pub fn load_guidelines(&self) -> Result<GuidelineSpec> {
        match &self.guidelines {
            None => Ok(GuidelineSpec::default()),
            Some(p) => crate::cohort::io::read_json(p),
        }
    }

    pub fn max_concurrency(&self) -> usize {
        self.endpoint.as_ref().map_or(4, |e| e.max_concurrency)
    }
}

fn default_workers() -> usize {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; every stage seed is derived from it by stage name.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for data-parallel stages; 0 keeps the library default.
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub cohort: CohortSection,
    pub split: SplitPlan,
    pub models: ModelsSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmSection>,
}

fn field(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

impl PipelineConfig {
    /// Parses a JSON config; decoding errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            field(&path, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.cohort.synthetic, &self.cohort.input) {
            (Some(_), Some(_)) => return Err(field("cohort", "set only one of `synthetic` and `input`")),
            (None, None) => return Err(field("cohort", "needs `synthetic` or `input`")),
            (Some(s), None) => s.validate().map_err(|e| field("cohort.synthetic", e))?,
            _ => {}
        }
        self.cohort.criteria.validate().map_err(|e| field("cohort.criteria", e))?;
        self.split.validate().map_err(|e| field("split", e))?;
        if self.models.kinds.is_empty() {
            return Err(field("models.kinds", "list at least one model kind"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for k in &self.models.kinds {
            if !seen.insert(k.as_str()) {
                return Err(field("models.kinds", format!("{k} listed twice")));
            }
        }
        if self.models.n_iters == 0 {
            return Err(field("models.n_iters", "must be at least 1"));
        }
        if self.models.k_folds < 2 {
            return Err(field("models.k_folds", "must be at least 2"));
        }
        for (name, space) in &self.models.search_spaces {
            name.parse::<ModelKind>().map_err(|e| field(&format!("models.search_spaces.{name}"), e))?;
            space.validate().map_err(|e| field(&format!("models.search_spaces.{name}"), e))?;
        }
        if self.calibration.k_folds < 2 {
            return Err(field("calibration.k_folds", "must be at least 2"));
        }
        let p = self.calibration.target_prevalence;
        if !(p > 0.0 && p < 1.0) {
            return Err(field("calibration.target_prevalence", format!("must lie in (0, 1), got {p}")));
        }
        if self.explain.background == 0 {
            return Err(field("explain.background", "must be at least 1"));
        }
        if let Some(llm) = &self.llm {
            if llm.endpoint.is_none() && llm.mock.is_none() {
                return Err(field("llm", "needs `endpoint` or `mock`"));
            }
            if let Some(ep) = &llm.endpoint {
                ep.validate().map_err(|e| field("llm.endpoint", e))?;
            }
        }
        Ok(())
    }

    /// The cohort generator settings with the derived cohort seed applied.
    pub fn synthetic(&self) -> Option<SyntheticCohortConfig> {
        self.cohort.synthetic.clone().map(|mut s| {
            s.seed = crate::seed::derive(self.seed, &["cohort"]);
            s
        })
    }

    /// The split plan with the derived split seed applied.
    pub fn split_plan(&self) -> SplitPlan {
        let mut plan = self.split.clone();
        plan.seed = crate::seed::derive(self.seed, &["split"]);
        plan
    }
}
