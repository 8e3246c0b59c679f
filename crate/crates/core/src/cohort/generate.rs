use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::vocabulary::{VocabEntry, Vocabulary};
use super::{ClinicalEvent, Ethnicity, Gender, Label, PatientRecord, Race};
use crate::error::{Error, Result};
use crate::{par, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCohortConfig {
    pub n_patients: usize,
    pub prevalence: f64,
    #[serde(default)]
    pub seed: u64,
    /// Log-odds weight multiplier on designated risk codes for cases.
    pub signal_strength: f64,
    #[serde(default)]
    pub vocabulary: Vocabulary,
    #[serde(default = "default_min_history")]
    pub min_history_days: i64,
    #[serde(default = "default_max_history")]
    pub max_history_days: i64,
}

fn default_min_history() -> i64 {
    210
}

fn default_max_history() -> i64 {
    420
}

impl Default for SyntheticCohortConfig {
    fn default() -> Self {
        SyntheticCohortConfig {
            n_patients: 20_000,
            prevalence: 0.01,
            seed: 0,
            signal_strength: 2.0,
            vocabulary: Vocabulary::default(),
            min_history_days: default_min_history(),
            max_history_days: default_max_history(),
        }
    }
}

impl SyntheticCohortConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::Config(format!(
                "prevalence must lie in (0, 1), got {}",
                self.prevalence
            )));
        }
        if self.vocabulary.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return Err(Error::Config("signal_strength must be a finite value >= 0".into()));
        }
        if self.min_history_days < 1 || self.max_history_days < self.min_history_days {
            return Err(Error::Config(
                "history bounds must satisfy 1 <= min_history_days <= max_history_days".into(),
            ));
        }
        for e in &self.vocabulary.entries {
            if !(0.0..=1.0).contains(&e.base_rate) || e.extra_occurrences < 0.0 {
                return Err(Error::Config(format!("vocabulary entry `{}` has invalid rates", e.display)));
            }
            if e.display.trim().is_empty() {
                return Err(Error::Config(format!("vocabulary entry {} has no display name", e.code)));
            }
        }
        Ok(())
    }

    pub fn n_positive(&self) -> usize {
        (self.n_patients as f64 * self.prevalence).round() as usize
    }
}

/// Case events on signal-bearing codes fall within this many days of index.
pub const SYMPTOM_HORIZON_DAYS: i64 = 210;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn pick<T: Copy>(rng: &mut impl Rng, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for &(item, w) in items {
        if u < w {
            return item;
        }
        u -= w;
    }
    items[items.len() - 1].0
}

fn demographics(rng: &mut impl Rng, label: Label) -> (u32, Gender, Race, Ethnicity) {
    match label {
        // case mix of the source cohort
        Label::CRC => {
            let age: f64 = Normal::new(33.35, 6.88).unwrap().sample(rng);
            let age = age.round().clamp(18.0, 44.0) as u32;
            let gender = pick(rng, &[(Gender::Male, 0.3366), (Gender::Female, 0.6634)]);
            let race = pick(
                rng,
                &[
                    (Race::White, 0.6151),
                    (Race::Black, 0.1651),
                    (Race::Asian, 0.0539),
                    (Race::Other, 0.0956),
                    (Race::NotSpecified, 0.0702),
                ],
            );
            let ethnicity = pick(
                rng,
                &[
                    (Ethnicity::NotHispanic, 0.8035),
                    (Ethnicity::Hispanic, 0.1818),
                    (Ethnicity::MexicanOrPuertoRican, 0.0147),
                ],
            );
            (age, gender, race, ethnicity)
        }
        Label::NonCRC => {
            let age = rng.random_range(18..=44);
            let gender = pick(rng, &[(Gender::Male, 0.45), (Gender::Female, 0.55)]);
            let race = pick(
                rng,
                &[
                    (Race::White, 0.58),
                    (Race::Black, 0.14),
                    (Race::Asian, 0.07),
                    (Race::Other, 0.11),
                    (Race::NotSpecified, 0.10),
                ],
            );
            let ethnicity = pick(
                rng,
                &[
                    (Ethnicity::NotHispanic, 0.75),
                    (Ethnicity::Hispanic, 0.17),
                    (Ethnicity::MexicanOrPuertoRican, 0.02),
                    (Ethnicity::NotSpecified, 0.06),
                ],
            );
            (age, gender, race, ethnicity)
        }
    }
}

fn make_event(entry: &VocabEntry, date: NaiveDate, value: Option<f64>) -> ClinicalEvent {
    ClinicalEvent {
        kind: entry.kind,
        code_system: entry.code_system,
        code: entry.code.clone(),
        display: entry.display.clone(),
        date,
        value,
        unit: entry.value.as_ref().and_then(|v| v.unit.clone()),
    }
}

fn draw_value(rng: &mut impl Rng, entry: &VocabEntry, shift: f64) -> Option<f64> {
    entry.value.as_ref().map(|vm| {
        let mean = vm.mean + vm.direction * shift * 0.5 * vm.sd;
        let v = Normal::new(mean, vm.sd.max(1e-9)).unwrap().sample(rng).max(vm.min);
        (v * 100.0).round() / 100.0
    })
}

fn generate_patient(config: &SyntheticCohortConfig, index: usize, label: Label) -> PatientRecord {
    let mut rng = seed::rng(seed::derive_index(config.seed, index as u64));
    let (age_years, gender, race, ethnicity) = demographics(&mut rng, label);

    let epoch = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
    let index_date = epoch + Duration::days(rng.random_range(0..2190));
    let history = rng.random_range(config.min_history_days..=config.max_history_days);
    let y = if label.is_positive() { 1.0 } else { 0.0 };

    let mut events = Vec::new();
    for entry in &config.vocabulary.entries {
        if entry.female_only && gender != Gender::Female {
            continue;
        }
        let shift = y * config.signal_strength * entry.signal_weight;
        if entry.anchor {
            let value = draw_value(&mut rng, entry, shift);
            events.push(make_event(entry, index_date - Duration::days(history), value));
        }
        let p = sigmoid(logit(entry.base_rate) + shift);
        if rng.random::<f64>() >= p {
            continue;
        }
        let extra = if entry.extra_occurrences > 0.0 {
            Poisson::new(entry.extra_occurrences).unwrap().sample(&mut rng) as usize
        } else {
            0
        };
        // symptoms of an evolving tumour cluster in the months before diagnosis
        let horizon = if shift > 0.0 { history.min(SYMPTOM_HORIZON_DAYS) } else { history };
        for _ in 0..=extra {
            let days_before = rng.random_range(1..=horizon);
            let value = draw_value(&mut rng, entry, shift);
            events.push(make_event(entry, index_date - Duration::days(days_before), value));
        }
    }
    events.sort_by_key(|e| e.date);

    PatientRecord {
        id: format!("P{index:06}"),
        age_years,
        gender,
        race,
        ethnicity,
        events,
        index_date,
        label,
    }
}

/// Generates `n_patients` eligible patients, exactly `round(n * prevalence)`
/// of them CRC cases. Presence of each vocabulary code follows
/// `sigmoid(logit(base_rate) + y * signal_strength * weight)` and valued codes
/// shift by half a standard deviation per unit of case log-odds.
///
/// Every patient draws from its own seeded stream, so output is identical
/// for equal configs regardless of worker count.
pub fn generate_synthetic_cohort(config: &SyntheticCohortConfig) -> Result<Vec<PatientRecord>> {
    config.validate()?;
    let n = config.n_patients;
    let n_pos = config.n_positive();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(config.seed, &["labels"])));
    let mut labels = vec![Label::NonCRC; n];
    for &i in &order[..n_pos] {
        labels[i] = Label::CRC;
    }
    Ok(par::map_range(n, |i| generate_patient(config, i, labels[i])))
}
