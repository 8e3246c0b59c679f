//! Compares the rayon pool against a single worker on the hot paths.
//!
//! With default features each group runs twice: `sequential` inside a
//! one-thread pool and `parallel` on the global pool. Under
//! `--no-default-features` only the plain sequential build is measured, so
//! comparing the two invocations also covers the feature flag itself.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eocrc_core::calibrate::cv_threshold;
use eocrc_core::cohort::{generate_synthetic_cohort, CohortCriteria, PatientRecord, SyntheticCohortConfig};
use eocrc_core::explain::shap::{shap_values, ShapConfig};
use eocrc_core::features::{build_feature_space, design_matrix, window_all, DesignMatrix};
use eocrc_core::models::{default_search_space, preset, random_search, train, ModelKind};
use eocrc_core::par;

fn cohort() -> Vec<PatientRecord> {
    let config = SyntheticCohortConfig {
        n_patients: 2000,
        prevalence: 0.1,
        seed: 7,
        ..SyntheticCohortConfig::default()
    };
    generate_synthetic_cohort(&config).unwrap()
}

fn matrix(patients: &[PatientRecord]) -> DesignMatrix {
    let criteria = CohortCriteria::default();
    let windowed = window_all(patients, &criteria);
    let space = build_feature_space(&windowed).unwrap();
    design_matrix(&windowed, &space)
}

/// Runs `f` under each available execution mode.
fn modes(c: &mut Criterion, group: &str, f: impl Fn() + Sync) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function(BenchmarkId::from_parameter("sequential"), |b| b.iter(|| single.install(&f)));
        g.bench_function(BenchmarkId::from_parameter("parallel"), |b| b.iter(&f));
    }
    #[cfg(not(feature = "parallel"))]
    g.bench_function(BenchmarkId::from_parameter("sequential"), |b| b.iter(&f));
    g.finish();
}

fn benches(c: &mut Criterion) {
    log::info!("parallel build: {}", par::is_parallel());
    let patients = cohort();
    let m = matrix(&patients);

    modes(c, "generate", || {
        black_box(cohort());
    });
    modes(c, "featurize", || {
        black_box(matrix(&patients));
    });
    let space = default_search_space(ModelKind::LR);
    modes(c, "random_search_lr", || {
        black_box(random_search(ModelKind::LR, &m, &space, 4, 3, 1).unwrap());
    });
    let xgb = preset(ModelKind::XGBoost);
    modes(c, "cv_threshold_xgboost", || {
        black_box(cv_threshold(ModelKind::XGBoost, &xgb, &m, &[], 3, 0.01, 1).unwrap());
    });
    let model = train(ModelKind::XGBoost, &m, &xgb, 1).unwrap();
    let background: Vec<_> = m.rows[..16].to_vec();
    let shap = ShapConfig { n_permutations: 64, ..ShapConfig::default() };
    modes(c, "shap", || {
        black_box(shap_values(&model, &m.rows[0], &background, &shap).unwrap());
    });
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
