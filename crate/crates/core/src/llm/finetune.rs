//! Chat-format fine-tuning export: one system/user/assistant triplet per
//! training patient.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, serialize_patient, GuidelineSpec};
use crate::cohort::io::write_jsonl;
use crate::cohort::{CohortCriteria, Label, PatientRecord};
use crate::error::Result;
use crate::features::WindowedPatient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneExample {
    pub id: String,
    pub system_text: String,
    pub user_text: String,
    pub assistant_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Wire record: `{"messages": [system, user, assistant]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub messages: Vec<ChatMessage>,
}

pub fn gold_reply(label: Label) -> &'static str {
    match label {
        Label::CRC => "Answer: Yes\nProbability score: 100%",
        Label::NonCRC => "Answer: No\nProbability score: 0%",
    }
}

/// Builds examples sorted by patient id.
pub fn finetune_examples(patients: &[PatientRecord], criteria: &CohortCriteria, guidelines: &GuidelineSpec) -> Vec<FineTuneExample> {
    let mut sorted: Vec<&PatientRecord> = patients.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    sorted
        .into_iter()
        .map(|p| {
            let wp = WindowedPatient::new(p, criteria);
            let bundle = build_prompt(&serialize_patient(&wp), guidelines);
            FineTuneExample {
                id: p.id.clone(),
                system_text: bundle.system_text,
                user_text: bundle.user_text,
                assistant_text: gold_reply(p.label).to_string(),
            }
        })
        .collect()
}

impl From<&FineTuneExample> for ChatRecord {
    fn from(e: &FineTuneExample) -> Self {
        let msg = |role: &str, content: &str| ChatMessage {
            role: role.into(),
            content: content.into(),
        };
        ChatRecord {
            messages: vec![
                msg("system", &e.system_text),
                msg("user", &e.user_text),
                msg("assistant", &e.assistant_text),
            ],
        }
    }
}

/// Writes the dataset as JSON Lines and returns the number of records.
pub fn export_finetune_dataset(patients: &[PatientRecord], criteria: &CohortCriteria, guidelines: &GuidelineSpec, path: &Path) -> Result<usize> {
    let records: Vec<ChatRecord> = finetune_examples(patients, criteria, guidelines).iter().map(ChatRecord::from).collect();
    write_jsonl(path, &records)?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::io::read_jsonl;
    use crate::features::fixtures;
    use crate::llm::parse::parse_response;

    #[test]
    fn one_record_per_patient_in_id_order() {
        let mut ps = fixtures::three();
        ps.reverse();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ft.jsonl");
        let n = export_finetune_dataset(&ps, &CohortCriteria::default(), &GuidelineSpec::default(), &path).unwrap();
        assert_eq!(n, ps.len());
        let back: Vec<ChatRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back.len(), n);
        let ex = finetune_examples(&ps, &CohortCriteria::default(), &GuidelineSpec::default());
        let ids: Vec<&str> = ex.iter().map(|e| e.id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        for (e, r) in ex.iter().zip(&back) {
            let roles: Vec<&str> = r.messages.iter().map(|m| m.role.as_str()).collect();
            assert_eq!(roles, ["system", "user", "assistant"]);
            let p = ps.iter().find(|p| p.id == e.id).unwrap();
            assert_eq!(parse_response(&e.assistant_text).unwrap().answer, p.label == Label::CRC);
        }
        let first = std::fs::read(&path).unwrap();
        export_finetune_dataset(&ps, &CohortCriteria::default(), &GuidelineSpec::default(), &path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let ps = fixtures::three();
        let err = export_finetune_dataset(&ps, &CohortCriteria::default(), &GuidelineSpec::default(), Path::new("/nonexistent/dir/ft.jsonl"));
        assert!(matches!(err, Err(crate::Error::Io { .. })));
    }
}
