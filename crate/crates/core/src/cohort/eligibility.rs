use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ClinicalEvent, CodeSystem, PatientRecord};
use crate::error::{Error, Result};

pub const MIN_AGE: u32 = 18;
pub const MAX_AGE: u32 = 44;

/// Eligibility and observation-window rules. A "month" is 30 days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCriteria {
    pub exclusion_codes: BTreeSet<(CodeSystem, String)>,
    pub min_history_days: i64,
    pub window_start_days_before_index: i64,
    pub window_end_days_before_index: i64,
}

impl Default for CohortCriteria {
    fn default() -> Self {
        let codes = [
            // personal history of colorectal malignancy
            (CodeSystem::ICD10, "Z85.038"),
            (CodeSystem::ICD10, "Z85.048"),
            (CodeSystem::SNOMEDCT, "429699009"),
            // family history
            (CodeSystem::ICD10, "Z80.0"),
            (CodeSystem::SNOMEDCT, "312824007"),
            // Crohn's disease
            (CodeSystem::ICD10, "K50.90"),
            (CodeSystem::SNOMEDCT, "34000006"),
            // Lynch syndrome
            (CodeSystem::SNOMEDCT, "315058005"),
            // ulcerative colitis
            (CodeSystem::ICD10, "K51.90"),
            (CodeSystem::SNOMEDCT, "64766004"),
        ];
        CohortCriteria {
            exclusion_codes: codes
                .into_iter()
                .map(|(s, c)| (s, c.to_string()))
                .collect(),
            min_history_days: 210,
            window_start_days_before_index: 210,
            window_end_days_before_index: 30,
        }
    }
}

impl CohortCriteria {
    pub fn validate(&self) -> Result<()> {
        let (start, end) = (
            self.window_start_days_before_index,
            self.window_end_days_before_index,
        );
        if !(start > end && end >= 0) {
            return Err(Error::Config(format!(
                "window must satisfy start > end >= 0, got start={start} end={end}"
            )));
        }
        if self.min_history_days < 0 {
            return Err(Error::Config("min_history_days must be >= 0".into()));
        }
        Ok(())
    }

    fn is_excluded(&self, event: &ClinicalEvent) -> bool {
        // BTreeSet<(CodeSystem, String)> lookup without allocating.
        self.exclusion_codes
            .range((event.code_system, String::new())..)
            .take_while(|(s, _)| *s == event.code_system)
            .any(|(_, c)| *c == event.code)
    }

    pub fn in_window(&self, days_before: i64) -> bool {
        days_before >= self.window_end_days_before_index
            && days_before < self.window_start_days_before_index
    }
}

pub fn is_eligible(patient: &PatientRecord, criteria: &CohortCriteria) -> bool {
    if !(MIN_AGE..=MAX_AGE).contains(&patient.age_years) {
        return false;
    }
    if patient.events.iter().any(|e| criteria.is_excluded(e)) {
        return false;
    }
    match patient.earliest_event() {
        Some(first) => (patient.index_date - first).num_days() >= criteria.min_history_days,
        None => false,
    }
}

/// Keeps patients aged 18-44 with no exclusion code anywhere in their history
/// and at least `min_history_days` of recorded history before the index date.
pub fn apply_eligibility(patients: &[PatientRecord], criteria: &CohortCriteria) -> Vec<PatientRecord> {
    patients
        .iter()
        .filter(|p| is_eligible(p, criteria))
        .cloned()
        .collect()
}

/// Events whose distance to the index date `d` (in days) satisfies
/// `window_end <= d < window_start`, in input order.
pub fn extract_window(patient: &PatientRecord, criteria: &CohortCriteria) -> Vec<ClinicalEvent> {
    patient
        .events
        .iter()
        .filter(|e| criteria.in_window(e.days_before(patient.index_date)))
        .cloned()
        .collect()
}
