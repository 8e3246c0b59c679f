//! Sparse feature representation: one-hot demographics, condition counts and
//! mean lab/observation values over the observation window.

mod io;
mod standardize;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{extract_window, ClinicalEvent, CodeSystem, CohortCriteria, EventKind, PatientRecord};
use crate::error::{Error, Result};
use crate::par;

pub use io::{read_design_matrix, write_design_matrix, SparseRow};
pub use standardize::{standardize, FeatureStats, STD_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DemographicField {
    Gender,
    AgeBand,
    Race,
    Ethnicity,
}

impl DemographicField {
    fn as_str(self) -> &'static str {
        match self {
            DemographicField::Gender => "gender",
            DemographicField::AgeBand => "age_band",
            DemographicField::Race => "race",
            DemographicField::Ethnicity => "ethnicity",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gender" => DemographicField::Gender,
            "age_band" => DemographicField::AgeBand,
            "race" => DemographicField::Race,
            "ethnicity" => DemographicField::Ethnicity,
            _ => return None,
        })
    }
}

/// Feature identity. Codes are identified by (kind, system, code); display
/// names are carried separately and never used for matching.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKey {
    Demographic { field: DemographicField, category: String },
    Code { kind: EventKind, system: CodeSystem, code: String },
}

impl FeatureKey {
    pub fn is_one_hot(&self) -> bool {
        matches!(self, FeatureKey::Demographic { .. })
    }

    pub fn parse(name: &str) -> Result<Self> {
        if let Some((field, category)) = name.split_once('=') {
            let field = DemographicField::parse(field)
                .ok_or_else(|| Error::Data(format!("unknown demographic feature `{name}`")))?;
            return Ok(FeatureKey::Demographic {
                field,
                category: category.to_string(),
            });
        }
        let mut parts = name.splitn(3, ':');
        let (kind, system, code) = match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(s), Some(c)) => (k, s, c),
            _ => return Err(Error::Data(format!("malformed feature name `{name}`"))),
        };
        let kind = match kind {
            "condition" => EventKind::Condition,
            "lab" => EventKind::LabResult,
            "observation" => EventKind::Observation,
            _ => return Err(Error::Data(format!("unknown feature kind in `{name}`"))),
        };
        let system = match system {
            "ICD10" => CodeSystem::ICD10,
            "SNOMEDCT" => CodeSystem::SNOMEDCT,
            "LOINC" => CodeSystem::LOINC,
            _ => return Err(Error::Data(format!("unknown code system in `{name}`"))),
        };
        Ok(FeatureKey::Code {
            kind,
            system,
            code: code.to_string(),
        })
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKey::Demographic { field, category } => write!(f, "{}={}", field.as_str(), category),
            FeatureKey::Code { kind, system, code } => write!(f, "{}:{}:{}", kind.as_str(), system, code),
        }
    }
}

pub fn age_band(age: u32) -> &'static str {
    match age {
        0..=24 => "18-24",
        25..=29 => "25-29",
        30..=34 => "30-34",
        35..=39 => "35-39",
        _ => "40-44",
    }
}

fn demographic_keys(p: &PatientRecord) -> [FeatureKey; 4] {
    let key = |field, category: &str| FeatureKey::Demographic {
        field,
        category: category.to_string(),
    };
    [
        key(DemographicField::Gender, p.gender.label()),
        key(DemographicField::AgeBand, age_band(p.age_years)),
        key(DemographicField::Race, p.race.label()),
        key(DemographicField::Ethnicity, p.ethnicity.label()),
    ]
}

fn code_key(e: &ClinicalEvent) -> FeatureKey {
    FeatureKey::Code {
        kind: e.kind,
        system: e.code_system,
        code: e.code.clone(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpaceManifest {
    names: Vec<String>,
    display: Vec<String>,
}

/// Ordered, immutable feature dictionary built from training data only.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpaceManifest", into = "SpaceManifest")]
pub struct FeatureSpace {
    keys: Vec<FeatureKey>,
    names: Vec<String>,
    display: Vec<String>,
    index: HashMap<FeatureKey, usize>,
}

impl PartialEq for FeatureSpace {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl TryFrom<SpaceManifest> for FeatureSpace {
    type Error = Error;

    fn try_from(m: SpaceManifest) -> Result<Self> {
        if m.names.len() != m.display.len() {
            return Err(Error::Data("feature manifest names/display length differ".into()));
        }
        let keys = m.names.iter().map(|n| FeatureKey::parse(n)).collect::<Result<Vec<_>>>()?;
        FeatureSpace::from_parts(keys, m.display)
    }
}

impl From<FeatureSpace> for SpaceManifest {
    fn from(s: FeatureSpace) -> Self {
        SpaceManifest {
            names: s.names,
            display: s.display,
        }
    }
}

impl FeatureSpace {
    pub fn from_parts(keys: Vec<FeatureKey>, display: Vec<String>) -> Result<Self> {
        let names: Vec<String> = keys.iter().map(ToString::to_string).collect();
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate feature `{k}`")));
            }
        }
        Ok(FeatureSpace {
            keys,
            names,
            display,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.keys.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    pub fn name(&self, col: usize) -> &str {
        &self.names[col]
    }

    /// Human-readable label for a column (display name for codes).
    pub fn display(&self, col: usize) -> &str {
        &self.display[col]
    }

    pub fn column(&self, key: &FeatureKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn column_by_name(&self, name: &str) -> Option<usize> {
        FeatureKey::parse(name).ok().and_then(|k| self.column(&k))
    }

    pub fn one_hot_mask(&self) -> Vec<bool> {
        self.keys.iter().map(FeatureKey::is_one_hot).collect()
    }

    /// SHA-256 over the ordered names; identifies the space in model documents.
    pub fn manifest_hash(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Sparse vector with strictly increasing columns, all below `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(usize, f64)>,
    dim: usize,
}

impl FeatureVector {
    /// Builds a vector from (column, value) pairs. Zero values are dropped.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Data("duplicate column in feature vector".into()));
        }
        if let Some(&(c, _)) = entries.last() {
            if c >= dim {
                return Err(Error::Data(format!("column {c} out of range for dimension {dim}")));
            }
        }
        if entries.iter().any(|e| !e.1.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        entries.retain(|e| e.1 != 0.0);
        Ok(FeatureVector { entries, dim })
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector { entries: Vec::new(), dim }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        FeatureVector {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
            dim: values.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, col: usize) -> f64 {
        match self.entries.binary_search_by_key(&col, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(c, x) in &self.entries {
            v[c] = x;
        }
        v
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(c, x)| weights[c] * x).sum()
    }

    /// Copy of `self` with the given columns overwritten (zero removes the entry).
    /// `overrides` must be sorted by column.
    pub fn with_overrides(&self, overrides: &[(usize, f64)]) -> FeatureVector {
        let mut out = Vec::with_capacity(self.entries.len() + overrides.len());
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() || j < overrides.len() {
            let a = self.entries.get(i).map(|e| e.0).unwrap_or(usize::MAX);
            let b = overrides.get(j).map(|e| e.0).unwrap_or(usize::MAX);
            if a < b {
                out.push(self.entries[i]);
                i += 1;
            } else {
                if overrides[j].1 != 0.0 {
                    out.push(overrides[j]);
                }
                if a == b {
                    i += 1;
                }
                j += 1;
            }
        }
        FeatureVector { entries: out, dim: self.dim }
    }
}

/// Rows, 0/1 labels and the space they live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<u8>,
    #[serde(default)]
    pub ids: Vec<String>,
    pub space: FeatureSpace,
}

impl DesignMatrix {
    pub fn new(rows: Vec<FeatureVector>, labels: Vec<u8>, ids: Vec<String>, space: FeatureSpace) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if !ids.is_empty() && ids.len() != rows.len() {
            return Err(Error::Data("row ids do not match row count".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.dim() != space.dim()) {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                actual: r.dim(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        Ok(DesignMatrix { rows, labels, ids, space })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: if self.ids.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.ids[i].clone()).collect()
            },
            space: self.space.clone(),
        }
    }
}

/// A patient together with the events that fall in its observation window.
#[derive(Debug, Clone)]
pub struct WindowedPatient<'a> {
    pub patient: &'a PatientRecord,
    pub events: Vec<ClinicalEvent>,
}

impl<'a> WindowedPatient<'a> {
    pub fn new(patient: &'a PatientRecord, criteria: &CohortCriteria) -> Self {
        WindowedPatient {
            patient,
            events: extract_window(patient, criteria),
        }
    }
}

pub fn window_all<'a>(patients: &'a [PatientRecord], criteria: &CohortCriteria) -> Vec<WindowedPatient<'a>> {
    let refs: Vec<&'a PatientRecord> = patients.iter().collect();
    par::map(&refs, |p| WindowedPatient::new(p, criteria))
}

/// One column per demographic category and per distinct code seen in the
/// training windows. Demographic columns come first, then codes, both in a
/// fixed sorted order.
pub fn build_feature_space(train: &[WindowedPatient<'_>]) -> Result<FeatureSpace> {
    if train.is_empty() {
        return Err(Error::Data("cannot build a feature space from an empty training set".into()));
    }
    let mut demo = BTreeSet::new();
    let mut codes: BTreeMap<FeatureKey, String> = BTreeMap::new();
    for wp in train {
        demo.extend(demographic_keys(wp.patient));
        for e in &wp.events {
            codes.entry(code_key(e)).or_insert_with(|| e.display.clone());
        }
    }
    let mut keys = Vec::with_capacity(demo.len() + codes.len());
    let mut display = Vec::with_capacity(keys.capacity());
    for k in demo {
        display.push(k.to_string());
        keys.push(k);
    }
    for (k, d) in codes {
        keys.push(k);
        display.push(d);
    }
    FeatureSpace::from_parts(keys, display)
}

/// Demographic one-hots, condition occurrence counts, and the mean of
/// in-window values for labs and observations. A lab or observation code with
/// no recorded values contributes its occurrence count. Codes absent from the
/// space are ignored.
pub fn featurize(wp: &WindowedPatient<'_>, space: &FeatureSpace) -> FeatureVector {
    let mut entries: Vec<(usize, f64)> = demographic_keys(wp.patient)
        .iter()
        .filter_map(|k| space.column(k).map(|c| (c, 1.0)))
        .collect();

    let mut acc: BTreeMap<usize, (EventKind, usize, Vec<f64>)> = BTreeMap::new();
    for e in &wp.events {
        let Some(col) = space.column(&code_key(e)) else { continue };
        let slot = acc.entry(col).or_insert_with(|| (e.kind, 0, Vec::new()));
        slot.1 += 1;
        if let Some(v) = e.value {
            slot.2.push(v);
        }
    }
    for (col, (kind, count, mut values)) in acc {
        let x = if kind == EventKind::Condition || values.is_empty() {
            count as f64
        } else {
            // summation order fixed so the mean does not depend on event order
            values.sort_by(f64::total_cmp);
            values.iter().sum::<f64>() / values.len() as f64
        };
        entries.push((col, x));
    }
    FeatureVector::new(space.dim(), entries).expect("columns come from the space")
}

/// Featurizes every patient against `space` (embarrassingly parallel).
pub fn design_matrix(patients: &[WindowedPatient<'_>], space: &FeatureSpace) -> DesignMatrix {
    let rows = par::map(patients, |wp| featurize(wp, space));
    DesignMatrix {
        rows,
        labels: patients.iter().map(|wp| wp.patient.label.as_u8()).collect(),
        ids: patients.iter().map(|wp| wp.patient.id.clone()).collect(),
        space: space.clone(),
    }
}

/// Maps a matrix built on its own space onto `train_space`: shared features
/// keep their values, train-only features are zero, test-only features drop.
pub fn align_to_space(test: &DesignMatrix, train_space: &FeatureSpace) -> DesignMatrix {
    let map: Vec<Option<usize>> = test.space.keys().iter().map(|k| train_space.column(k)).collect();
    let rows = test
        .rows
        .iter()
        .map(|r| {
            let entries = r
                .entries()
                .iter()
                .filter_map(|&(c, v)| map[c].map(|nc| (nc, v)))
                .collect();
            FeatureVector::new(train_space.dim(), entries).expect("mapped columns are unique")
        })
        .collect();
    DesignMatrix {
        rows,
        labels: test.labels.clone(),
        ids: test.ids.clone(),
        space: train_space.clone(),
    }
}


#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::fixtures::*;
    use super::*;
    use crate::cohort::{Label, Race};

    fn windows(ps: &[PatientRecord]) -> Vec<WindowedPatient<'_>> {
        window_all(ps, &CohortCriteria::default())
    }

    #[test]
    fn fixture_space_matches_hand_enumeration() {
        let ps = three();
        let space = build_feature_space(&windows(&ps)).unwrap();
        // gender=Female, age_band=30-34, race=NotSpecified, race=White,
        // ethnicity=NotHispanic, I10, K62.5, 718-7, 8867-4 (glucose and body
        // weight fall outside the window)
        let expected = [
            "gender=Female",
            "age_band=30-34",
            "race=NotSpecified",
            "race=White",
            "ethnicity=NotHispanic",
            "condition:ICD10:I10",
            "condition:ICD10:K62.5",
            "lab:LOINC:718-7",
            "observation:LOINC:8867-4",
        ];
        assert_eq!(space.names(), expected);
        assert_eq!(space.display(7), "Hemoglobin");
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(build_feature_space(&[]).is_err());
    }

    #[test]
    fn counts_and_means() {
        let ps = three();
        let w = windows(&ps);
        let space = build_feature_space(&w).unwrap();
        let x = featurize(&w[0], &space);
        assert_eq!(x.get(space.column_by_name("condition:ICD10:I10").unwrap()), 2.0);
        assert_eq!(x.get(space.column_by_name("lab:LOINC:718-7").unwrap()), 12.0);
        assert_eq!(x.get(space.column_by_name("race=White").unwrap()), 1.0);
        assert_eq!(x.get(space.column_by_name("race=NotSpecified").unwrap()), 0.0);
    }

    #[test]
    fn unseen_codes_are_dropped() {
        let ps = three();
        let w = windows(&ps[..1]);
        let space = build_feature_space(&w).unwrap();
        let other = windows(&ps[1..2]);
        let x = featurize(&other[0], &space);
        // only demographics shared with P1 survive
        assert!(x.entries().iter().all(|&(c, _)| space.keys()[c].is_one_hot()));
    }

    #[test]
    fn alignment_zero_fills_and_drops() {
        let ps = three();
        let w = windows(&ps);
        let train_space = build_feature_space(&w[..1]).unwrap();
        let test_space = build_feature_space(&w[1..]).unwrap();
        let test = design_matrix(&w[1..], &test_space);
        let aligned = align_to_space(&test, &train_space);
        assert_eq!(aligned.dim(), train_space.dim());
        // equivalent to featurizing directly against the train space
        let direct = design_matrix(&w[1..], &train_space);
        assert_eq!(aligned.rows, direct.rows);
        // identical spaces: identity
        let same = align_to_space(&direct, &train_space);
        assert_eq!(same, direct);
        // empty input keeps the train dimension
        let empty = design_matrix(&[], &test_space);
        let e = align_to_space(&empty, &train_space);
        assert!(e.is_empty());
        assert_eq!(e.dim(), train_space.dim());
    }

    #[test]
    fn alignment_dim_100_with_60_shared() {
        use crate::cohort::{CodeSystem, EventKind};
        let key = |i: usize| FeatureKey::Code {
            kind: EventKind::Condition,
            system: CodeSystem::ICD10,
            code: format!("X{i:03}"),
        };
        let train_keys: Vec<_> = (0..100).map(key).collect();
        let train_space = FeatureSpace::from_parts(train_keys.clone(), vec!["d".into(); 100]).unwrap();
        // test space: 60 shared + 20 test-only
        let test_keys: Vec<_> = (40..120).map(key).collect();
        let test_space = FeatureSpace::from_parts(test_keys, vec!["d".into(); 80]).unwrap();
        let rows = (0..5).map(|_| FeatureVector::from_dense(&[1.0; 80])).collect();
        let m = DesignMatrix::new(rows, vec![0; 5], vec![], test_space).unwrap();
        let a = align_to_space(&m, &train_space);
        assert_eq!(a.dim(), 100);
        let zero_cols = (0..100).filter(|&c| a.rows.iter().all(|r| r.get(c) == 0.0)).count();
        assert_eq!(zero_cols, 40);
        assert!(a.rows.iter().all(|r| r.nnz() == 60));
    }

    #[test]
    fn condition_total_matches_in_window_events() {
        let ps = three();
        let w = windows(&ps);
        let space = build_feature_space(&w).unwrap();
        let m = design_matrix(&w, &space);
        let cond_cols: Vec<usize> = (0..space.dim())
            .filter(|&c| space.name(c).starts_with("condition:"))
            .collect();
        let total: f64 = m.rows.iter().map(|r| cond_cols.iter().map(|&c| r.get(c)).sum::<f64>()).sum();
        let events = w
            .iter()
            .flat_map(|wp| &wp.events)
            .filter(|e| e.kind == EventKind::Condition)
            .count();
        assert_eq!(total, events as f64);
    }

    #[test]
    fn space_serde_round_trip_and_hash() {
        let ps = three();
        let space = build_feature_space(&windows(&ps)).unwrap();
        let json = serde_json::to_string(&space).unwrap();
        let back: FeatureSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, space);
        assert_eq!(back.manifest_hash(), space.manifest_hash());
        assert_eq!(back.column_by_name("lab:LOINC:718-7"), space.column_by_name("lab:LOINC:718-7"));
    }

    #[test]
    fn overrides_merge() {
        let v = FeatureVector::new(6, vec![(1, 1.0), (3, 3.0), (5, 5.0)]).unwrap();
        let o = v.with_overrides(&[(0, 9.0), (3, 0.0), (4, 4.0)]);
        assert_eq!(o.entries(), &[(0, 9.0), (1, 1.0), (4, 4.0), (5, 5.0)]);
    }

    #[test]
    fn vector_rejects_bad_columns() {
        assert!(FeatureVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(FeatureVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(FeatureVector::new(3, vec![(1, f64::NAN)]).is_err());
    }

    proptest! {
        #[test]
        fn featurize_ignores_event_order(perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let ps = three();
            let w = windows(&ps);
            let space = build_feature_space(&w).unwrap();
            for wp in &w {
                let mut shuffled = wp.clone();
                shuffled.events.shuffle(&mut crate::seed::rng(perm_seed));
                prop_assert_eq!(featurize(&shuffled, &space), featurize(wp, &space));
            }
        }

        #[test]
        fn aligned_columns_subset_of_train(n_shared in 0usize..10) {
            let ps = three();
            let w = windows(&ps);
            let train_space = build_feature_space(&w[..(n_shared % 3) + 1]).unwrap();
            let test_space = build_feature_space(&w).unwrap();
            let aligned = align_to_space(&design_matrix(&w, &test_space), &train_space);
            for r in &aligned.rows {
                prop_assert!(r.entries().iter().all(|&(c, _)| c < train_space.dim()));
            }
        }
    }

    #[test]
    fn missing_race_gets_its_own_column() {
        let ps = vec![
            patient("A", Race::White, Label::CRC, vec![]),
            patient("B", Race::NotSpecified, Label::NonCRC, vec![]),
        ];
        let space = build_feature_space(&windows(&ps)).unwrap();
        assert!(space.column_by_name("race=White").is_some());
        assert!(space.column_by_name("race=NotSpecified").is_some());
        assert!(space.column_by_name("race=Black").is_none());
    }
}
