//! Prompt assembly: the fixed instruction preamble, the guideline block and
//! the serialized patient.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cohort::{ClinicalEvent, Ethnicity, EventKind, Race};
use crate::features::WindowedPatient;

/// Role definition, reasoning steps and output format, byte-for-byte.
pub const PREAMBLE: &str = include_str!("preamble.txt");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_tokens: 4096,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub generation: GenerationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineSpec {
    pub symptoms_early: Vec<String>,
    pub symptoms_advanced: Vec<String>,
    pub high_risk_conditions: Vec<String>,
    pub high_risk_labs: Vec<String>,
    pub high_risk_observations: Vec<String>,
}

fn owned(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for GuidelineSpec {
    fn default() -> Self {
        GuidelineSpec {
            symptoms_early: owned(&[
                "Changes in bowel habits (diarrhea, constipation, narrow stool)",
                "Persistent feeling of needing a bowel movement",
                "Rectal bleeding (bright red) or blood in stool (dark brown/black)",
                "Cramping or abdominal pain",
                "Weakness, fatigue, unintended weight loss",
                "Anemia (low red blood cell count)",
            ]),
            symptoms_advanced: owned(&[
                "Enlarged liver",
                "Jaundice (yellowing of the skin/eyes)",
                "Difficulty breathing (due to cancer spreading to lungs)",
            ]),
            high_risk_conditions: owned(&[
                "Malignant neoplastic disease",
                "Fresh blood passed per rectum",
                "Hemorrhage of rectum and anus",
                "Colitis",
                "Pain due to neoplastic disease",
                "Hemorrhoids",
                "Melena",
                "Malignant tumor of anus",
                "Rectal hemorrhage",
                "Localized enlarged lymph nodes",
                "Altered bowel function",
                "Human immunodeficiency virus infection",
                "Gastrointestinal hemorrhage",
                "Intra-abdominal and pelvic swelling, mass and lump",
                "Rectal pain",
                "History of disorder of digestive system",
                "Chronic constipation",
            ]),
            high_risk_labs: owned(&[
                "Glomerular filtration rate/1.73 sq M.predicted Volume Rate/Area",
                "Carbon dioxide, total Moles/volume",
                "Cholesterol in HDL Mass/volume",
                "Erythrocyte distribution width Ratio",
                "Chloride Moles/volume",
                "Monocytes/100 leukocytes",
                "Potassium Moles/volume",
                "Alkaline phosphatase Enzymatic activity/volume",
                "Prothrombin time (PT)",
                "Anion gap",
            ]),
            high_risk_observations: owned(&[
                "Significant weight change",
                "Pain severity - 0-10 verbal numeric rating Score - Reported",
            ]),
        }
    }
}

impl GuidelineSpec {
    pub fn render(&self) -> String {
        let mut out = String::from("<Guidelines>\n\n1. Symptoms and Signs\n - Early Stages:\n");
        let bullets = |out: &mut String, items: &[String]| {
            for i in items {
                let _ = writeln!(out, " - * {i}");
            }
        };
        bullets(&mut out, &self.symptoms_early);
        out.push_str(" - Advanced Stages:\n");
        bullets(&mut out, &self.symptoms_advanced);
        out.push_str("2. High-Risk Conditions\n");
        bullets(&mut out, &self.high_risk_conditions);
        out.push_str("3. High-Risk Lab tests\n");
        bullets(&mut out, &self.high_risk_labs);
        out.push_str("4. High-Risk observations\n");
        bullets(&mut out, &self.high_risk_observations);
        out.truncate(out.trim_end().len());
        out
    }
}

pub fn build_prompt(user_text: &str, guidelines: &GuidelineSpec) -> PromptBundle {
    PromptBundle {
        system_text: format!("{PREAMBLE}\n\n{}", guidelines.render()),
        user_text: user_text.to_string(),
        generation: GenerationParams::default(),
    }
}

fn race_text(r: Race) -> &'static str {
    match r {
        Race::NotSpecified => "Not specified",
        other => other.label(),
    }
}

fn ethnicity_text(e: Ethnicity) -> &'static str {
    match e {
        Ethnicity::NotHispanic => "Not Hispanic or Latino",
        Ethnicity::Hispanic => "Hispanic or Latino",
        Ethnicity::MexicanOrPuertoRican => "Mexican or Puerto Rican",
        Ethnicity::NotSpecified => "Not specified",
    }
}

fn with_value(name: &str, e: &ClinicalEvent) -> String {
    match (e.value, e.unit.as_deref()) {
        (Some(v), Some(u)) if !u.is_empty() => format!("{name} ({v:?} {u})"),
        (Some(v), _) => format!("{name} ({v:?})"),
        (None, _) => name.to_string(),
    }
}

/// Renders the windowed history as a demographics line followed by the
/// CONDITIONS, LAB RESULTS and OBSERVATIONS blocks. Entries are deduplicated
/// by display name and listed in order of first occurrence; conditions and
/// observations keep their first instance, labs show their latest value.
pub fn serialize_patient(wp: &WindowedPatient<'_>) -> String {
    let p = wp.patient;
    let mut conditions: Vec<String> = Vec::new();
    let mut labs: Vec<(&str, &ClinicalEvent)> = Vec::new();
    let mut lab_slot: HashMap<&str, usize> = HashMap::new();
    let mut observations: Vec<String> = Vec::new();
    let mut seen: HashMap<(EventKind, &str), ()> = HashMap::new();
    // events are date-sorted; a stable sort keeps same-day input order
    let mut events: Vec<&ClinicalEvent> = wp.events.iter().collect();
    events.sort_by_key(|e| e.date);
    for e in events {
        let name = e.display.as_str();
        match e.kind {
            EventKind::Condition => {
                if seen.insert((e.kind, name), ()).is_none() {
                    conditions.push(name.to_string());
                }
            }
            EventKind::Observation => {
                if seen.insert((e.kind, name), ()).is_none() {
                    observations.push(with_value(name, e));
                }
            }
            EventKind::LabResult => match lab_slot.get(name) {
                Some(&i) => {
                    if e.value.is_some() || labs[i].1.value.is_none() {
                        labs[i].1 = e;
                    }
                }
                None => {
                    lab_slot.insert(name, labs.len());
                    labs.push((name, e));
                }
            },
        }
    }
    let labs: Vec<String> = labs.iter().map(|(n, e)| with_value(n, e)).collect();
    format!(
        "DEMOGRAPHICS: age {}, gender {}, race {}, ethnicity {}\nCONDITIONS: [{}]\nLAB RESULTS: [{}]\nOBSERVATIONS: [{}]",
        p.age_years,
        p.gender.label(),
        race_text(p.race),
        ethnicity_text(p.ethnicity),
        conditions.join(", "),
        labs.join(", "),
        observations.join(", ")
    )
}
