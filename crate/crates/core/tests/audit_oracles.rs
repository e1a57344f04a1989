use std::collections::{BTreeMap, BTreeSet};

use medfx::audit::{
    predict_proba, roc_auc, run_split_experiment, shuffle_labels, split_record_wise, split_subject_wise, train_forest,
    ExperimentConfig, ForestParams, LabelScheme, SplitStrategy,
};
use medfx::data::{CohortDataset, CohortLabel};
use medfx::simgen::{simulate_cohort, CohortSimConfig};
use medfx::stats::normal_cdf;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn two_gaussians(rng: &mut ChaCha8Rng, n: usize, delta: f64) -> (Vec<Vec<Option<f64>>>, Vec<usize>) {
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let rows = labels.iter().map(|&c| vec![Some(c as f64 * delta + rng.sample::<f64, _>(StandardNormal))]).collect();
    (rows, labels)
}

#[test]
fn forest_accuracy_approaches_bayes_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let delta = 1.0;
    let (train, train_y) = two_gaussians(&mut rng, 400, delta);
    let (test, test_y) = two_gaussians(&mut rng, 4000, delta);
    let train_refs: Vec<&[Option<f64>]> = train.iter().map(Vec::as_slice).collect();
    let test_refs: Vec<&[Option<f64>]> = test.iter().map(Vec::as_slice).collect();
    // leaves of 25 keep the one-dimensional forest from memorising the noise
    let params = ForestParams { n_trees: 300, min_leaf: 25, seed: 3, ..ForestParams::default() };
    let model = train_forest(&train_refs, &train_y, 2, &params).unwrap();
    let proba = predict_proba(&model, &test_refs).unwrap();
    let correct = proba.iter().zip(&test_y).filter(|(p, &y)| usize::from(p[1] > p[0]) == y).count();
    let accuracy = correct as f64 / test_y.len() as f64;
    let bayes = normal_cdf(delta / 2.0);
    assert!((accuracy - bayes).abs() <= 0.05, "accuracy {accuracy} vs Bayes {bayes}");
}

#[test]
fn probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let rows: Vec<Vec<Option<f64>>> =
        (0..60).map(|_| (0..4).map(|j| if j == 2 && rng.random_bool(0.2) { None } else { Some(rng.random()) }).collect()).collect();
    let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let refs: Vec<&[Option<f64>]> = rows.iter().map(Vec::as_slice).collect();
    let model = train_forest(&refs, &labels, 3, &ForestParams { n_trees: 50, ..ForestParams::default() }).unwrap();
    for p in predict_proba(&model, &refs).unwrap() {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn quick(strategy: SplitStrategy, scheme: LabelScheme, multiclass: bool, repeats: usize, trees: usize) -> ExperimentConfig {
    ExperimentConfig {
        strategy,
        scheme,
        repeats,
        forest: ForestParams { n_trees: trees, ..ForestParams::default() },
        multiclass,
        seed: 13,
        ..ExperimentConfig::default()
    }
}

#[test]
fn full_shuffle_record_wise_is_chance() {
    let data = simulate_cohort(&CohortSimConfig { seed: 33, ..CohortSimConfig::default() }).unwrap();
    let auc = run_split_experiment(&data, &quick(SplitStrategy::RecordWise, LabelScheme::FullShuffle, false, 100, 60)).unwrap();
    assert_eq!(auc.len(), 100);
    assert!((mean(&auc) - 0.5).abs() < 0.05, "mean {}", mean(&auc));
}

#[test]
fn exchangeable_rows_give_chance_auc() {
    let cfg = CohortSimConfig { fingerprint_sd: 0.0, class_effect: 0.0, seed: 34, ..CohortSimConfig::default() };
    let data = simulate_cohort(&cfg).unwrap();
    let auc = run_split_experiment(&data, &quick(SplitStrategy::RecordWise, LabelScheme::Original, false, 100, 60)).unwrap();
    assert!((mean(&auc) - 0.5).abs() < 0.05, "mean {}", mean(&auc));
}

#[test]
fn identities_are_recognisable_from_fingerprints() {
    let cfg = CohortSimConfig { class_effect: 0.0, seed: 35, ..CohortSimConfig::default() };
    let data = simulate_cohort(&cfg).unwrap();
    let auc = run_split_experiment(&data, &quick(SplitStrategy::RecordWise, LabelScheme::Original, true, 5, 150)).unwrap();
    assert!(mean(&auc) >= 0.95, "identity AUC {}", mean(&auc));
}

#[test]
fn experiment_is_reproducible() {
    let data = simulate_cohort(&CohortSimConfig { n_cases: 4, n_controls: 4, samples_per_participant: 20, seed: 36, ..CohortSimConfig::default() }).unwrap();
    let cfg = quick(SplitStrategy::SubjectWise, LabelScheme::BlockShuffle, false, 10, 30);
    assert_eq!(run_split_experiment(&data, &cfg).unwrap(), run_split_experiment(&data, &cfg).unwrap());
}

#[test]
fn shuffled_subject_wise_repeats_keep_both_classes_on_each_side() {
    let data = simulate_cohort(&CohortSimConfig { n_cases: 3, n_controls: 3, samples_per_participant: 5, p_features: 2, seed: 37, ..CohortSimConfig::default() }).unwrap();
    for scheme in [LabelScheme::BlockShuffle, LabelScheme::FullShuffle] {
        let auc = run_split_experiment(&data, &quick(SplitStrategy::SubjectWise, scheme, false, 60, 5)).unwrap();
        assert_eq!(auc.len(), 60);
    }
}

fn small_cohort(seed: u64, cases: usize, controls: usize, samples: usize) -> CohortDataset {
    simulate_cohort(&CohortSimConfig {
        n_cases: cases,
        n_controls: controls,
        samples_per_participant: samples,
        p_features: 3,
        seed,
        ..CohortSimConfig::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_ignores_increasing_transforms(
        scores in prop::collection::vec(-5.0f64..5.0, 2..40),
        bits in prop::collection::vec(any::<bool>(), 40),
    ) {
        let labels = &bits[..scores.len()];
        prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
        let mapped: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        prop_assert_eq!(roc_auc(&scores, labels).unwrap(), roc_auc(&mapped, labels).unwrap());
    }

    #[test]
    fn record_wise_plans_halve_each_participant(seed in 0u64..500, samples in 2usize..9) {
        let data = small_cohort(seed, 2, 3, samples);
        let plan = split_record_wise(&data, seed).unwrap();
        prop_assert!(plan.is_partition(data.n_rows()));
        for rows in data.participant_rows().values() {
            let train = rows.iter().filter(|r| plan.train.contains(r)).count();
            prop_assert!(train == samples / 2 || train == samples.div_ceil(2));
        }
    }

    #[test]
    fn subject_wise_plans_never_share_participants(seed in 0u64..500, cases in 2usize..6, controls in 2usize..6) {
        let data = small_cohort(seed, cases, controls, 3);
        let plan = split_subject_wise(&data, 0.5, seed).unwrap();
        prop_assert!(plan.is_partition(data.n_rows()));
        let side = |ids: &[usize]| -> BTreeSet<String> { ids.iter().map(|&i| data.rows()[i].participant_id.clone()).collect() };
        prop_assert!(side(&plan.train).is_disjoint(&side(&plan.test)));
    }

    #[test]
    fn block_shuffle_relabels_whole_participants(seed in 0u64..500, cases in 1usize..6, controls in 1usize..6) {
        let data = small_cohort(seed, cases, controls, 4);
        let shuffled = shuffle_labels(&data, LabelScheme::BlockShuffle, seed);
        let mut per: BTreeMap<&str, BTreeSet<CohortLabel>> = BTreeMap::new();
        for r in shuffled.rows() {
            per.entry(r.participant_id.as_str()).or_default().insert(r.label);
        }
        prop_assert!(per.values().all(|s| s.len() == 1));
        let count = |d: &CohortDataset| d.participants().iter().filter(|(_, l)| *l == CohortLabel::Case).count();
        prop_assert_eq!(count(&data), count(&shuffled));
    }

    #[test]
    fn full_shuffle_keeps_label_histogram(seed in 0u64..500) {
        let data = small_cohort(seed, 3, 2, 5);
        let shuffled = shuffle_labels(&data, LabelScheme::FullShuffle, seed);
        let hist = |d: &CohortDataset| d.rows().iter().filter(|r| r.label == CohortLabel::Case).count();
        prop_assert_eq!(hist(&data), hist(&shuffled));
    }
}
