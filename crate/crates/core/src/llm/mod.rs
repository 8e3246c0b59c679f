//! LLM arm: patient serialization, prompt assembly, chat-completions calls,
//! response parsing and the fine-tuning export.

pub mod endpoint;
pub mod finetune;
pub mod parse;
pub mod prompt;

pub use endpoint::{
    complete_batch, parse_lenient, predict_with_endpoint, redact, AuditLog, ChatEndpoint, EndpointConfig, HttpEndpoint, MockEndpoint,
    MockRule, RetryPolicy,
};
pub use finetune::{export_finetune_dataset, finetune_examples, ChatRecord, FineTuneExample};
pub use parse::{parse_response, ParsedPrediction};
pub use prompt::{build_prompt, serialize_patient, GenerationParams, GuidelineSpec, PromptBundle};

use std::sync::Mutex;

use crate::cohort::{CohortCriteria, PatientRecord};
use crate::error::Result;
use crate::evaluate::PatientClassifier;
use crate::features::WindowedPatient;

/// Label-producing predictor for the shared evaluation harness: the parsed
/// answer is the label, probabilities are only recorded.
pub struct LlmClassifier<'a> {
    pub name: String,
    pub endpoint: &'a dyn ChatEndpoint,
    pub guidelines: &'a GuidelineSpec,
    pub criteria: &'a CohortCriteria,
    pub max_concurrency: usize,
    predictions: Mutex<Vec<(String, ParsedPrediction)>>,
}

impl<'a> LlmClassifier<'a> {
    pub fn new(name: impl Into<String>, endpoint: &'a dyn ChatEndpoint, guidelines: &'a GuidelineSpec, criteria: &'a CohortCriteria, max_concurrency: usize) -> Self {
        LlmClassifier {
            name: name.into(),
            endpoint,
            guidelines,
            criteria,
            max_concurrency,
            predictions: Mutex::new(Vec::new()),
        }
    }

    pub fn bundles(&self, patients: &[PatientRecord]) -> Vec<PromptBundle> {
        patients
            .iter()
            .map(|p| build_prompt(&serialize_patient(&WindowedPatient::new(p, self.criteria)), self.guidelines))
            .collect()
    }

    /// Every (patient id, parsed prediction) seen so far, in call order.
    pub fn take_predictions(&self) -> Vec<(String, ParsedPrediction)> {
        std::mem::take(&mut *self.predictions.lock().expect("prediction log poisoned"))
    }
}

impl PatientClassifier for LlmClassifier<'_> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn classify_batch(&self, patients: &[PatientRecord]) -> Result<Vec<u8>> {
        let replies = complete_batch(self.endpoint, &self.bundles(patients), self.max_concurrency);
        let parsed = parse_lenient(replies)?;
        let labels = parsed.iter().map(|p| u8::from(p.answer)).collect();
        self.predictions
            .lock()
            .expect("prediction log poisoned")
            .extend(patients.iter().map(|p| p.id.clone()).zip(parsed));
        Ok(labels)
    }
}
