use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tabclass::balance::{kmeans_smote, SmoteConfig};
use tabclass::data::{FeatureKind, Matrix, Schema, Table};
use tabclass::eval::{confusion, cross_validate, metrics, ConfusionMatrix, EvalMode, PipelineOptions};
use tabclass::featsel::chi2_scores;
use tabclass::learners::adaboost::fit_adaboost_traced;
use tabclass::learners::lda::fit_lda;
use tabclass::learners::{self, LearnerKind, LearnerParams, LearnerSpec, TreeParams};

fn table(rows: Vec<Vec<f64>>, labels: Vec<u8>, kinds: Vec<FeatureKind>) -> Table<f64> {
    let names = (0..kinds.len()).map(|j| format!("x{j}")).collect();
    Table::new(rows, labels, Schema::new(names, kinds, "y").unwrap()).unwrap()
}

#[test]
fn adaboost_two_round_hand_trace() {
    // x = 1..10, y = 0 0 0 1 1 1 1 1 1 0.
    // Round 1 (uniform weights): best stump x <= 3.5, only x = 10 wrong, ε = 0.1, α = ln 3.
    // Correct rows shrink to 0.1/3 each, the wrong one grows to 0.3: normalized 1/18 and 1/2.
    // Round 2: x <= 9.5 (left → 1, right → 0) misclassifies x = 1..3, ε = 3/18, α = ½ ln 5.
    let xs: Vec<f64> = (1..=10).map(f64::from).collect();
    let y = [0, 0, 0, 1, 1, 1, 1, 1, 1, 0];
    let (model, trace) = fit_adaboost_traced(Matrix::new(&xs, 10, 1), &y, 2);
    assert_eq!(model.rounds_run, 2);
    assert!((trace[0].epsilon - 0.1).abs() < 1e-12);
    assert!((model.alphas[0] - 3f64.ln()).abs() < 1e-12);
    for (i, w) in trace[0].weights.iter().enumerate() {
        let expected = if i == 9 { 0.5 } else { 1.0 / 18.0 };
        assert!((w - expected).abs() < 1e-12, "w[{i}] = {w}");
    }
    assert!((trace[1].epsilon - 1.0 / 6.0).abs() < 1e-12);
    assert!((model.alphas[1] - 0.5 * 5f64.ln()).abs() < 1e-12);
    // sign(ln 3 · h1 + ½ ln 5 · h2): rows 1..3 → 0, 4..9 → 1, and 10 → 1 since ln 3 > ½ ln 5.
    let predicted: Vec<u8> = xs.iter().map(|&v| model.predict_row(&[v])).collect();
    assert_eq!(predicted, vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 1]);
}

#[test]
fn adaboost_stops_on_perfect_stump() {
    let xs = [0.0, 1.0, 2.0, 3.0];
    let (model, trace) = fit_adaboost_traced(Matrix::new(&xs, 4, 1), &[0, 0, 1, 1], 50);
    assert_eq!(model.rounds_run, 1);
    assert_eq!(trace[0].epsilon, 0.0);
    assert!((model.alphas[0] - 0.5 * ((1.0 - 1e-10) / 1e-10f64).ln()).abs() < 1e-9);
}

#[test]
fn lda_one_dimensional_boundary() {
    let xs = [0.0f64, 1.0, 4.0, 5.0];
    let m = fit_lda(Matrix::new(&xs, 4, 1), &[0, 0, 1, 1], 0.0).unwrap();
    let (w, c) = m.linear_decision();
    assert!((-c / w[0] - 2.5).abs() < 1e-9);
}

#[test]
fn chi2_analytic_values() {
    let n = 40;
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
    let rows = labels.iter().map(|&l| vec![7.0, f64::from(l)]).collect();
    let t = table(rows, labels, vec![FeatureKind::Continuous, FeatureKind::Binary]);
    let s = chi2_scores(&t);
    assert_eq!(s[0], 0.0);
    assert!((s[1] - n as f64).abs() < 1e-9);
}

fn mean_null_chi2(kind: FeatureKind, values: impl Fn(&mut ChaCha8Rng) -> f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 400;
    let xs: Vec<f64> = (0..n).map(|_| values(&mut rng)).collect();
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n / 3)).collect();
    let permutations = 1000;
    let mut total = 0.0;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        let t = table(xs.iter().map(|&v| vec![v]).collect(), labels.clone(), vec![kind]);
        total += chi2_scores(&t)[0];
    }
    total / permutations as f64
}

#[test]
fn chi2_null_mean_near_degrees_of_freedom() {
    // 4 ordinal levels × 2 classes → 3 d.o.f.; 8 equal-frequency bins → 7.
    let ordinal = mean_null_chi2(FeatureKind::Ordinal, |r| f64::from(r.gen_range(0..4)));
    assert!((ordinal - 3.0).abs() < 0.3, "ordinal mean {ordinal}");
    let continuous = mean_null_chi2(FeatureKind::Continuous, |r| r.gen_range(0.0..1.0));
    assert!((continuous - 7.0).abs() < 0.7, "continuous mean {continuous}");
}

#[test]
fn metric_identities() {
    let m = metrics(&ConfusionMatrix { tp: 2, fp: 1, fn_: 1, tn: 6 });
    assert!((m.accuracy - 0.8).abs() < 1e-15);
    for v in [m.precision, m.recall, m.f1] {
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }
    let none = metrics(&confusion(&[0, 0, 0], &[0, 0, 0]).unwrap());
    assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    assert!(none.undefined.precision && none.undefined.recall && none.undefined.f1);
}

#[test]
fn smote_segment_example() {
    let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 5.0], vec![5.0, 6.0], vec![6.0, 5.0], vec![6.0, 6.0]];
    let t = table(rows, vec![1, 1, 0, 0, 0, 0], vec![FeatureKind::Continuous; 2]);
    let config = SmoteConfig { n_clusters: 1, k_neighbors: 1, ..SmoteConfig::default() };
    let out = kmeans_smote(&t, &config, 4).unwrap();
    assert_eq!(out.table.n_rows(), 8);
    for s in 6..8 {
        let row = out.table.row(s);
        assert_eq!(row[1], 0.0);
        assert!((0.0..=1.0).contains(&row[0]));
        assert_eq!(out.table.labels()[s], 1);
    }
}

#[test]
fn fully_grown_tree_memorizes_training_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let labels: Vec<u8> = (0..200).map(|_| u8::from(rng.gen_bool(0.3))).collect();
    let t = table(rows, labels, vec![FeatureKind::Continuous; 2]);
    let spec = LearnerSpec::default_for(LearnerKind::DecisionTree, 0);
    let model = learners::fit(&spec, t.matrix(), t.labels()).unwrap();
    assert_eq!(learners::predict(&model, t.matrix()).unwrap(), t.labels());
}

#[test]
fn duplicated_rows_leak_through_paper_faithful_folds() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let base_labels: Vec<u8> = (0..50).map(|_| u8::from(rng.gen_bool(0.5))).collect();
    let rows = base.iter().chain(&base).cloned().collect();
    let labels = base_labels.iter().chain(&base_labels).copied().collect();
    let t = table(rows, labels, vec![FeatureKind::Continuous; 2]);
    let spec = LearnerSpec::default_for(LearnerKind::DecisionTree, 0);
    let out = cross_validate(&t, &spec, &PipelineOptions::plain(EvalMode::PaperFaithful), 10, 1).unwrap();
    // Labels are pure noise, so anything well above chance comes from the twins.
    assert!(out.report.accuracy > 0.85, "accuracy {}", out.report.accuracy);
}

#[test]
fn depth_zero_tree_predicts_the_majority() {
    let rows = (0..100).map(|i| vec![f64::from(i)]).collect();
    let labels = (0..100).map(|i| u8::from(i % 10 == 0)).collect();
    let t = table(rows, labels, vec![FeatureKind::Continuous]);
    let spec = LearnerSpec::new(LearnerParams::DecisionTree(TreeParams { max_depth: Some(0), min_samples_split: 2 }), 0);
    let out = cross_validate(&t, &spec, &PipelineOptions::plain(EvalMode::LeakageSafe), 10, 0).unwrap();
    assert!((out.report.accuracy - 0.9).abs() < 1e-12);
    assert_eq!(out.report.recall, 0.0);
}
