//! Fixture vocabulary for the synthetic generator.
//!
//! Condition, lab and observation names follow the guideline block of the
//! prompt template plus a set of common background codes. `signal_weight` is
//! the log-odds weight applied (times the cohort's signal strength) to cases;
//! background and prenatal entries carry zero weight.

use serde::{Deserialize, Serialize};

use super::{CodeSystem, EventKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueModel {
    pub mean: f64,
    pub sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// Sign of the case shift (+1 raises the value in cases, -1 lowers it).
    pub direction: f64,
    /// Clamp generated values at this floor.
    #[serde(default)]
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub kind: EventKind,
    pub code_system: CodeSystem,
    pub code: String,
    pub display: String,
    /// Probability a control patient has this code at least once.
    pub base_rate: f64,
    /// Mean number of additional occurrences once present.
    pub extra_occurrences: f64,
    pub signal_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ValueModel>,
    #[serde(default)]
    pub female_only: bool,
    /// Recorded at the start of every patient's history.
    #[serde(default)]
    pub anchor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub entries: Vec<VocabEntry>,
}

impl Vocabulary {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn signal_entries(&self) -> impl Iterator<Item = &VocabEntry> {
        self.entries.iter().filter(|e| e.signal_weight > 0.0)
    }

    pub fn find(&self, display: &str) -> Option<&VocabEntry> {
        self.entries.iter().find(|e| e.display == display)
    }
}

fn cond(system: CodeSystem, code: &str, display: &str, base: f64, w: f64) -> VocabEntry {
    VocabEntry {
        kind: EventKind::Condition,
        code_system: system,
        code: code.into(),
        display: display.into(),
        base_rate: base,
        extra_occurrences: 0.6,
        signal_weight: w,
        value: None,
        female_only: false,
        anchor: false,
    }
}

#[allow(clippy::too_many_arguments)]
fn lab(code: &str, display: &str, unit: &str, mean: f64, sd: f64, base: f64, w: f64, dir: f64) -> VocabEntry {
    VocabEntry {
        kind: EventKind::LabResult,
        code_system: CodeSystem::LOINC,
        code: code.into(),
        display: display.into(),
        base_rate: base,
        extra_occurrences: 0.8,
        signal_weight: w,
        value: Some(ValueModel {
            mean,
            sd,
            unit: Some(unit.into()),
            direction: dir,
            min: 0.0,
        }),
        female_only: false,
        anchor: false,
    }
}

fn obs(system: CodeSystem, code: &str, display: &str, value: Option<(f64, f64, &str, f64)>, base: f64, w: f64) -> VocabEntry {
    VocabEntry {
        kind: EventKind::Observation,
        code_system: system,
        code: code.into(),
        display: display.into(),
        base_rate: base,
        extra_occurrences: 1.0,
        signal_weight: w,
        value: value.map(|(mean, sd, unit, dir)| ValueModel {
            mean,
            sd,
            unit: (!unit.is_empty()).then(|| unit.to_string()),
            direction: dir,
            min: 0.0,
        }),
        female_only: false,
        anchor: false,
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        use CodeSystem::{ICD10, LOINC, SNOMEDCT};
        let mut entries = vec![
            // guideline high-risk conditions and early symptoms
            cond(SNOMEDCT, "363346000", "Malignant neoplastic disease", 0.02, 0.96),
            cond(SNOMEDCT, "6913000", "Fresh blood passed per rectum", 0.01, 1.6),
            cond(ICD10, "K62.5", "Hemorrhage of rectum and anus", 0.01, 1.44),
            cond(SNOMEDCT, "64226004", "Colitis", 0.02, 0.8),
            cond(ICD10, "K64.9", "Hemorrhoids", 0.04, 0.96),
            cond(ICD10, "K92.1", "Melena", 0.01, 1.28),
            cond(SNOMEDCT, "12063002", "Rectal hemorrhage", 0.015, 1.6),
            cond(SNOMEDCT, "88111009", "Altered bowel function", 0.02, 1.12),
            cond(ICD10, "K92.2", "Gastrointestinal hemorrhage", 0.01, 1.28),
            cond(ICD10, "R19.00", "Intra-abdominal and pelvic swelling, mass and lump", 0.01, 1.28),
            cond(ICD10, "K62.89", "Rectal pain", 0.01, 1.12),
            cond(SNOMEDCT, "236069009", "Chronic constipation", 0.03, 0.96),
            cond(ICD10, "R10.9", "Abdominal pain", 0.08, 1.12),
            cond(ICD10, "D50.9", "Iron deficiency anemia", 0.03, 1.28),
            cond(ICD10, "R19.7", "Diarrhea", 0.05, 0.64),
            cond(ICD10, "R53.83", "Fatigue", 0.08, 0.48),
            // background conditions
            cond(ICD10, "I10", "Essential hypertension", 0.06, 0.0),
            cond(ICD10, "F41.9", "Anxiety disorder", 0.12, 0.0),
            cond(ICD10, "J06.9", "Acute upper respiratory infection", 0.15, 0.0),
            cond(ICD10, "M54.50", "Low back pain", 0.10, 0.0),
            cond(ICD10, "F32.9", "Major depressive disorder", 0.08, 0.0),
            cond(ICD10, "E66.9", "Obesity", 0.10, 0.0),
            cond(ICD10, "J45.909", "Asthma", 0.07, 0.0),
            cond(ICD10, "G43.909", "Migraine", 0.06, 0.0),
            cond(ICD10, "N39.0", "Urinary tract infection", 0.07, 0.0),
            cond(ICD10, "K21.9", "Gastro-esophageal reflux disease", 0.06, 0.0),
            cond(ICD10, "E11.9", "Type 2 diabetes mellitus", 0.04, 0.0),
            cond(ICD10, "E55.9", "Vitamin D deficiency", 0.06, 0.0),
            // labs
            lab("718-7", "Hemoglobin", "g/dL", 13.5, 1.3, 0.35, 0.8, -1.0),
            lab("788-0", "Erythrocyte distribution width Ratio", "%", 13.2, 1.0, 0.30, 0.8, 1.0),
            lab("2039-6", "Carcinoembryonic Ag", "ng/mL", 1.5, 0.8, 0.02, 1.0, 1.0),
            lab("33914-3", "Glomerular filtration rate/1.73 sq M.predicted", "mL/min/{1.73_m2}", 105.0, 15.0, 0.30, 0.4, -1.0),
            lab("2028-9", "Carbon dioxide, total", "mmol/L", 25.0, 2.5, 0.30, 0.0, 1.0),
            lab("2085-9", "Cholesterol in HDL", "mg/dL", 52.0, 12.0, 0.15, 0.3, -1.0),
            lab("2075-0", "Chloride", "mmol/L", 103.0, 2.5, 0.30, 0.0, 1.0),
            lab("5905-5", "Monocytes/100 leukocytes", "%", 7.0, 2.0, 0.30, 0.4, 1.0),
            lab("2823-3", "Potassium", "mmol/L", 4.1, 0.35, 0.30, 0.0, 1.0),
            lab("6768-6", "Alkaline phosphatase", "U/L", 75.0, 20.0, 0.25, 0.5, 1.0),
            lab("5902-2", "Prothrombin time (PT)", "s", 12.5, 1.0, 0.06, 0.3, 1.0),
            lab("33037-3", "Anion gap", "mmol/L", 9.0, 2.5, 0.25, 0.0, 1.0),
            lab("2777-1", "Phosphate", "mg/dL", 3.6, 0.5, 0.10, 0.4, 1.0),
            lab("2708-6", "Oxygen saturation", "%", 98.0, 1.2, 0.15, 0.3, -1.0),
            lab("2345-7", "Glucose", "mg/dL", 95.0, 15.0, 0.35, 0.0, 1.0),
            lab("777-3", "Platelets", "10*3/uL", 250.0, 55.0, 0.35, 0.4, 1.0),
            lab("2276-4", "Ferritin", "ng/mL", 80.0, 50.0, 0.08, 0.6, -1.0),
            // observations
            obs(LOINC, "39156-5", "Body mass index (BMI) [Ratio]", Some((26.0, 5.0, "kg/m2", -1.0)), 0.8, 0.3),
            obs(SNOMEDCT, "161832001", "Significant weight change", None, 0.02, 0.9),
            obs(LOINC, "72514-3", "Pain severity - 0-10 verbal numeric rating Score - Reported", Some((2.0, 2.0, "{score}", 1.0)), 0.2, 0.6),
            obs(LOINC, "8867-4", "Heart rate", Some((75.0, 10.0, "/min", 1.0)), 0.6, 0.0),
            obs(LOINC, "8310-5", "Body temperature", Some((36.8, 0.3, "Cel", 1.0)), 0.5, 0.0),
            obs(LOINC, "8480-6", "Systolic blood pressure", Some((118.0, 12.0, "mm[Hg]", 1.0)), 0.6, 0.0),
            obs(LOINC, "72166-2", "Tobacco smoking status", None, 0.3, 0.2),
        ];
        // prenatal care: present in both groups, no generative signal
        for (code, display, base) in [
            ("Z34.90", "Encounter for supervision of normal pregnancy", 0.08),
            ("Z34.00", "Encounter for supervision of normal first pregnancy", 0.03),
        ] {
            let mut e = cond(ICD10, code, display, base, 0.0);
            e.female_only = true;
            e.extra_occurrences = 2.0;
            entries.push(e);
        }
        let mut weight = obs(LOINC, "29463-7", "Body weight", Some((78.0, 18.0, "kg", 1.0)), 1.0, 0.0);
        weight.anchor = true;
        weight.value.as_mut().unwrap().min = 35.0;
        entries.push(weight);
        Vocabulary { entries }
    }
}
