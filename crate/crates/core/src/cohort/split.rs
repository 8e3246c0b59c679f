use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{Label, PatientRecord};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_pos: usize,
    pub train_neg: usize,
    pub n_test_runs: usize,
    pub test_pos_per_run: usize,
    pub test_neg_per_run: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SplitPlan {
    /// 1853/1853 balanced training set and ten 10+990 test runs.
    pub fn full_scale(seed: u64) -> Self {
        SplitPlan {
            train_pos: 1853,
            train_neg: 1853,
            n_test_runs: 10,
            test_pos_per_run: 10,
            test_neg_per_run: 990,
            seed,
        }
    }

    /// 150/150 balanced training set and ten 5+495 test runs.
    pub fn desk_scale(seed: u64) -> Self {
        SplitPlan {
            train_pos: 150,
            train_neg: 150,
            n_test_runs: 10,
            test_pos_per_run: 5,
            test_neg_per_run: 495,
            seed,
        }
    }

    pub fn test_prevalence(&self) -> f64 {
        self.test_pos_per_run as f64 / (self.test_pos_per_run + self.test_neg_per_run) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_test_runs == 0 || self.test_pos_per_run == 0 || self.test_neg_per_run == 0 {
            return Err(Error::Config("split plan needs at least one run with both classes".into()));
        }
        if self.train_pos == 0 || self.train_neg == 0 {
            return Err(Error::Config("split plan needs both classes in training".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<PatientRecord>,
    pub test_runs: Vec<Vec<PatientRecord>>,
    /// Patients used neither for training nor testing (available for
    /// prevalence-matched calibration).
    pub reserve: Vec<PatientRecord>,
}

impl Splits {
    pub fn ids(&self) -> SplitIds {
        let ids = |ps: &[PatientRecord]| ps.iter().map(|p| p.id.clone()).collect::<Vec<_>>();
        SplitIds {
            train: ids(&self.train),
            test_runs: self.test_runs.iter().map(|r| ids(r)).collect(),
            reserve: ids(&self.reserve),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub test_runs: Vec<Vec<String>>,
    pub reserve: Vec<String>,
}

fn sorted_by_id(mut v: Vec<PatientRecord>) -> Vec<PatientRecord> {
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

/// Samples a balanced training set and `n_test_runs` test runs without
/// replacement. CRC patients never repeat between training and test runs or
/// across runs; controls are disjoint across runs whenever the pool allows,
/// otherwise each run samples its controls independently from the pool left
/// after training.
pub fn make_splits(patients: &[PatientRecord], plan: &SplitPlan) -> Result<Splits> {
    plan.validate()?;
    let mut pos: Vec<&PatientRecord> = patients.iter().filter(|p| p.label == Label::CRC).collect();
    let mut neg: Vec<&PatientRecord> = patients.iter().filter(|p| p.label == Label::NonCRC).collect();
    // canonical order first so the result does not depend on input order
    pos.sort_by(|a, b| a.id.cmp(&b.id));
    neg.sort_by(|a, b| a.id.cmp(&b.id));

    let need_pos = plan.train_pos + plan.n_test_runs * plan.test_pos_per_run;
    if pos.len() < need_pos {
        return Err(Error::Split {
            label: "CRC",
            needed: need_pos,
            available: pos.len(),
        });
    }
    let need_neg = plan.train_neg + plan.test_neg_per_run;
    if neg.len() < need_neg {
        return Err(Error::Split {
            label: "Non-CRC",
            needed: need_neg,
            available: neg.len(),
        });
    }

    let mut rng = seed::rng(seed::derive(plan.seed, &["split"]));
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let train: Vec<PatientRecord> = pos[..plan.train_pos]
        .iter()
        .chain(&neg[..plan.train_neg])
        .map(|p| (*p).clone())
        .collect();

    let pool = &neg[plan.train_neg..];
    let disjoint = pool.len() >= plan.n_test_runs * plan.test_neg_per_run;
    if !disjoint {
        log::warn!(
            "control pool of {} cannot fill {} disjoint runs of {}; controls may repeat across runs",
            pool.len(),
            plan.n_test_runs,
            plan.test_neg_per_run
        );
    }

    let mut used_neg = BTreeSet::new();
    let mut test_runs = Vec::with_capacity(plan.n_test_runs);
    for r in 0..plan.n_test_runs {
        let start = plan.train_pos + r * plan.test_pos_per_run;
        let run_pos = &pos[start..start + plan.test_pos_per_run];
        let run_neg: Vec<&PatientRecord> = if disjoint {
            pool[r * plan.test_neg_per_run..(r + 1) * plan.test_neg_per_run].to_vec()
        } else {
            pool.choose_multiple(&mut rng, plan.test_neg_per_run).copied().collect()
        };
        used_neg.extend(run_neg.iter().map(|p| p.id.as_str()));
        let run = run_pos.iter().chain(&run_neg).map(|p| (*p).clone()).collect();
        test_runs.push(sorted_by_id(run));
    }

    let reserve = pos[need_pos..]
        .iter()
        .chain(pool.iter().filter(|p| !used_neg.contains(p.id.as_str())))
        .map(|p| (*p).clone())
        .collect();

    Ok(Splits {
        train: sorted_by_id(train),
        test_runs,
        reserve: sorted_by_id(reserve),
    })
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;
    use proptest::prelude::*;

    use super::*;
    use crate::cohort::{Ethnicity, Gender, Race};

    pub(crate) fn bare_cohort(n_pos: usize, n_neg: usize) -> Vec<PatientRecord> {
        (0..n_pos + n_neg)
            .map(|i| PatientRecord {
                id: format!("P{i:06}"),
                age_years: 30,
                gender: Gender::Female,
                race: Race::White,
                ethnicity: Ethnicity::NotHispanic,
                events: vec![],
                index_date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
                label: if i < n_pos { Label::CRC } else { Label::NonCRC },
            })
            .collect()
    }

    fn count(run: &[PatientRecord], label: Label) -> usize {
        run.iter().filter(|p| p.label == label).count()
    }

    #[test]
    fn desk_plan_runs_at_one_percent() {
        let cohort = bare_cohort(200, 19_800);
        let plan = SplitPlan::desk_scale(9);
        let s = make_splits(&cohort, &plan).unwrap();
        assert_eq!(count(&s.train, Label::CRC), 150);
        assert_eq!(count(&s.train, Label::NonCRC), 150);
        assert_eq!(s.test_runs.len(), 10);
        for run in &s.test_runs {
            assert_eq!(run.len(), 500);
            assert_eq!(count(run, Label::CRC) as f64 / run.len() as f64, 0.01);
        }
        assert_eq!(s.reserve.len(), 19_800 - 150 - 4_950);
    }

    #[test]
    fn insufficient_patients_name_the_label() {
        let plan = SplitPlan::desk_scale(1);
        match make_splits(&bare_cohort(100, 19_800), &plan) {
            Err(Error::Split { label, needed, available }) => {
                assert_eq!((label, needed, available), ("CRC", 200, 100));
            }
            other => panic!("unexpected {other:?}"),
        }
        match make_splits(&bare_cohort(200, 600), &plan) {
            Err(Error::Split { label, .. }) => assert_eq!(label, "Non-CRC"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn small_control_pool_samples_within_runs() {
        let plan = SplitPlan::desk_scale(2);
        let s = make_splits(&bare_cohort(200, 1_000), &plan).unwrap();
        for run in &s.test_runs {
            let ids: BTreeSet<_> = run.iter().map(|p| &p.id).collect();
            assert_eq!(ids.len(), 500);
            assert_eq!(count(run, Label::NonCRC), 495);
        }
        let train_ids: BTreeSet<_> = s.train.iter().map(|p| &p.id).collect();
        for run in &s.test_runs {
            assert!(run.iter().all(|p| !train_ids.contains(&p.id)));
        }
    }

    #[test]
    fn input_order_does_not_matter() {
        let cohort = bare_cohort(200, 6_000);
        let mut rev = cohort.clone();
        rev.reverse();
        let plan = SplitPlan::desk_scale(5);
        assert_eq!(make_splits(&cohort, &plan).unwrap(), make_splits(&rev, &plan).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn crc_ids_are_disjoint(seed in any::<u64>(), runs in 1usize..8, tp in 1usize..5, tn in 5usize..60) {
            let plan = SplitPlan { train_pos: 20, train_neg: 20, n_test_runs: runs, test_pos_per_run: tp, test_neg_per_run: tn, seed };
            let cohort = bare_cohort(20 + runs * tp + 3, 20 + runs * tn);
            let s = make_splits(&cohort, &plan).unwrap();
            let mut seen: BTreeSet<String> = s.train.iter().filter(|p| p.label == Label::CRC).map(|p| p.id.clone()).collect();
            let mut test_pos = 0;
            for run in &s.test_runs {
                prop_assert_eq!(count(run, Label::CRC), tp);
                prop_assert_eq!(count(run, Label::NonCRC), tn);
                for p in run.iter().filter(|p| p.label == Label::CRC) {
                    prop_assert!(seen.insert(p.id.clone()));
                    test_pos += 1;
                }
            }
            prop_assert_eq!(test_pos, runs * tp);
            prop_assert_eq!(make_splits(&cohort, &plan).unwrap(), s);
        }
    }
}
