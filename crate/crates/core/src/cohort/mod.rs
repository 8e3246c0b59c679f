//! Patient and event data model, eligibility and window rules, the
//! balanced-train / multi-run test split, and a seeded synthetic cohort
//! generator.

mod eligibility;
mod generate;
pub mod io;
mod split;
pub mod vocabulary;

use std::collections::BTreeSet;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eligibility::{apply_eligibility, extract_window, is_eligible, CohortCriteria};
pub use generate::{generate_synthetic_cohort, SyntheticCohortConfig};
pub use split::{make_splits, SplitIds, SplitPlan, Splits};
pub use vocabulary::{VocabEntry, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Condition,
    LabResult,
    Observation,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Condition => "condition",
            EventKind::LabResult => "lab",
            EventKind::Observation => "observation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CodeSystem {
    ICD10,
    SNOMEDCT,
    LOINC,
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CodeSystem::ICD10 => "ICD10",
            CodeSystem::SNOMEDCT => "SNOMEDCT",
            CodeSystem::LOINC => "LOINC",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEvent {
    pub kind: EventKind,
    pub code_system: CodeSystem,
    pub code: String,
    /// Human-readable name; the LLM arm serializes names, not codes.
    pub display: String,
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl ClinicalEvent {
    pub fn validate(&self) -> Result<()> {
        if self.display.trim().is_empty() {
            return Err(Error::Data(format!(
                "event {}:{} has an empty display name",
                self.code_system, self.code
            )));
        }
        if self.kind == EventKind::Condition && self.value.is_some() {
            return Err(Error::Data(format!(
                "condition {}:{} carries a value",
                self.code_system, self.code
            )));
        }
        if let Some(v) = self.value {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "event {}:{} has a non-finite value",
                    self.code_system, self.code
                )));
            }
        }
        Ok(())
    }

    /// Days between this event and `index` (positive when the event precedes it).
    pub fn days_before(&self, index: NaiveDate) -> i64 {
        (index - self.date).num_days()
    }

    pub fn key(&self) -> (EventKind, CodeSystem, &str) {
        (self.kind, self.code_system, self.code.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Race {
    White,
    Black,
    Asian,
    Other,
    NotSpecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ethnicity {
    NotHispanic,
    Hispanic,
    MexicanOrPuertoRican,
    NotSpecified,
}

impl Gender {
    pub fn label(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
        }
    }
}

impl Race {
    pub fn label(self) -> &'static str {
        match self {
            Race::White => "White",
            Race::Black => "Black",
            Race::Asian => "Asian",
            Race::Other => "Other",
            Race::NotSpecified => "NotSpecified",
        }
    }
}

impl Ethnicity {
    pub fn label(self) -> &'static str {
        match self {
            Ethnicity::NotHispanic => "NotHispanic",
            Ethnicity::Hispanic => "Hispanic",
            Ethnicity::MexicanOrPuertoRican => "MexicanOrPuertoRican",
            Ethnicity::NotSpecified => "NotSpecified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    CRC,
    NonCRC,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::CRC => 1,
            Label::NonCRC => 0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::CRC
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub age_years: u32,
    pub gender: Gender,
    pub race: Race,
    pub ethnicity: Ethnicity,
    /// Sorted ascending by date.
    pub events: Vec<ClinicalEvent>,
    /// Diagnosis date for cases, synthetic anchor date for controls.
    pub index_date: NaiveDate,
    pub label: Label,
}

impl PatientRecord {
    /// Sorts events by date (stable) and validates each one.
    pub fn normalize(&mut self) -> Result<()> {
        self.events.sort_by_key(|e| e.date);
        self.events.iter().try_for_each(ClinicalEvent::validate)
    }

    pub fn earliest_event(&self) -> Option<NaiveDate> {
        self.events.iter().map(|e| e.date).min()
    }

    pub fn codes(&self) -> BTreeSet<(CodeSystem, &str)> {
        self.events
            .iter()
            .map(|e| (e.code_system, e.code.as_str()))
            .collect()
    }
}
