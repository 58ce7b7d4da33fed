mod common;

use common::*;
use phmadv::anomaly::{segment_score, ResidualStats};
use phmadv::attacks::AttackMethod;
use phmadv::container::Persist;
use phmadv::data::{windows_for_runs, DetectionSynth, PrognosticsSynth, Task, WindowedSample, DEFAULT_RUL_CAP};
use phmadv::eval::{
    clean_detection_scores, mse, pr_auc, roc_auc, roc_curve, sweep_detection, sweep_prognostics, RobustnessReport,
    ScoredSet, SweepConfig,
};
use phmadv::models::{NormalityModel, RulArch, RulModel};
use phmadv::pipeline::window_residuals;
use phmadv::Error;
use proptest::prelude::*;

fn detection_fixture() -> (NormalityModel, ResidualStats, Vec<WindowedSample>) {
    let synth = DetectionSynth {
        channels: 3,
        run_length: 40,
        onset: 20,
        normal_runs: 4,
        fault_runs: 4,
        ..Default::default()
    };
    let runs = synth.generate(5).unwrap();
    let mut rng = rng(41);
    let model = small_lstm(&mut rng, 3, 5, 4);
    let samples = windows_for_runs(&runs, 5, Task::Detection, DEFAULT_RUL_CAP, 3).unwrap();
    let normal: Vec<WindowedSample> = samples.iter().filter(|s| !s.abnormal).cloned().collect();
    let stats = ResidualStats::fit_default(&window_residuals(&model, &normal).unwrap()).unwrap();
    (model, stats, samples)
}

fn rul_fixture() -> (RulModel, Vec<WindowedSample>) {
    let arch = RulArch {
        window: 10,
        conv1_filters: 3,
        conv1_kernel: (3, 5),
        conv2_filters: 4,
        conv2_kernel: (4, 1),
        ..Default::default()
    };
    let runs = PrognosticsSynth {
        runs: 3,
        min_length: 30,
        max_length: 40,
        ..Default::default()
    }
    .generate(6)
    .unwrap();
    let mut model = random_cnn(&mut rng(42), arch);
    model.dense_bias = phmadv::Tensor::vector(vec![20.0]);
    let samples = windows_for_runs(&runs, 10, Task::Prognostics, DEFAULT_RUL_CAP, 4).unwrap();
    (model, samples)
}

#[test]
fn zero_only_grid_equals_clean_evaluation() {
    let (model, stats, samples) = detection_fixture();
    let cfg = SweepConfig::new(AttackMethod::Bim, vec![0.0]);
    let outcome = sweep_detection(&model, &stats, &samples, &cfg, &[]).unwrap();
    assert_eq!(outcome.report.rows.len(), 1);
    let refs: Vec<&WindowedSample> = samples.iter().collect();
    let scores = clean_detection_scores(&model, &stats, &refs).unwrap();
    for (s, sample) in scores.iter().zip(&samples) {
        assert_eq!(
            s.to_bits(),
            segment_score(&model, &stats, &sample.segment().unwrap())
                .unwrap()
                .to_bits()
        );
    }
    let set = ScoredSet::new(scores, samples.iter().map(|s| s.abnormal).collect()).unwrap();
    assert_eq!(outcome.report.rows[0].auc_roc, Some(roc_auc(&set).unwrap()));
    assert_eq!(outcome.report.rows[0].auc_prc, Some(pr_auc(&set).unwrap()));

    let (model, samples) = rul_fixture();
    let outcome = sweep_prognostics(&model, &samples, &SweepConfig::new(AttackMethod::Fgsm, vec![0.0]), &[]).unwrap();
    let preds: Vec<f64> = samples.iter().map(|s| model.predict(&s.window).unwrap()).collect();
    let truths: Vec<f64> = samples.iter().map(|s| s.rul().unwrap()).collect();
    assert_eq!(outcome.report.rows[0].mse, Some(mse(&preds, &truths).unwrap()));
}

#[test]
fn detection_report_structure() {
    let (model, stats, samples) = detection_fixture();
    let cfg = SweepConfig::new(AttackMethod::Bim, vec![0.0, 0.00025, 0.00825, 0.035]);
    let outcome = sweep_detection(&model, &stats, &samples, &cfg, &[0, 3]).unwrap();
    let csv = outcome.report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epsilon,auc_roc,auc_prc");
    assert_eq!(lines.len(), 5);
    let eps: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(eps.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(outcome.report.metadata.model_hash, model.content_hash());
    assert_eq!(outcome.report.metadata.samples, samples.len());
    for level in &outcome.levels {
        assert_eq!(level.perturbed.len(), 2);
        for (p, o) in level.perturbed.iter().zip(&outcome.originals) {
            assert!(p.max_abs_diff(o) <= level.epsilon + 1e-12);
        }
    }
    let back = RobustnessReport::from_json(&outcome.report.to_json().unwrap()).unwrap();
    assert_eq!(back, outcome.report);
}

#[test]
fn sweeps_are_deterministic_and_degrade_prognostics() {
    let (model, samples) = rul_fixture();
    let cfg = SweepConfig::new(AttackMethod::Bim, vec![0.0, 0.05, 0.2]);
    let a = sweep_prognostics(&model, &samples, &cfg, &[1]).unwrap();
    let b = sweep_prognostics(&model, &samples, &cfg, &[1]).unwrap();
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(a.levels, b.levels);
    let mses: Vec<f64> = a.report.rows.iter().map(|r| r.mse.unwrap()).collect();
    assert!(mses.windows(2).all(|w| w[1] > w[0]), "{mses:?}");
}

#[test]
fn sample_fraction_shrinks_the_campaign() {
    let (model, stats, samples) = detection_fixture();
    let mut cfg = SweepConfig::new(AttackMethod::Fgsm, vec![0.0, 0.01]);
    cfg.sample_fraction = 0.5;
    cfg.seed = 9;
    let outcome = sweep_detection(&model, &stats, &samples, &cfg, &[]).unwrap();
    assert_eq!(outcome.provenance.len(), samples.len().div_ceil(2));
    assert!(outcome.provenance.windows(2).all(|w| w[0] != w[1]));
}

#[test]
fn bad_grid_and_keep_are_rejected() {
    let (model, stats, samples) = detection_fixture();
    let cfg = SweepConfig::new(AttackMethod::Bim, vec![0.01, 0.02]);
    assert!(matches!(
        sweep_detection(&model, &stats, &samples, &cfg, &[]),
        Err(Error::Config(_))
    ));
    let cfg = SweepConfig::new(AttackMethod::Bim, vec![0.0]);
    assert!(matches!(
        sweep_detection(&model, &stats, &samples, &cfg, &[samples.len()]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn roc_curve_is_monotone_and_closed() {
    let mut rng = rng(43);
    let scores: Vec<f64> = (0..30)
        .map(|i| ((i * 7) % 11) as f64 + if i % 3 == 0 { 0.5 } else { 0.0 })
        .collect();
    let labels: Vec<bool> = (0..30)
        .map(|i| (i * 5 + rand::Rng::random_range(&mut rng, 0..3)) % 4 == 0)
        .collect();
    let set = ScoredSet::new(scores, labels).unwrap();
    let curve = roc_curve(&set).unwrap();
    assert_eq!((curve[0].fpr, curve[0].tpr), (0.0, 0.0));
    let last = curve.last().unwrap();
    assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    assert!(curve.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
}

fn scored(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (
        proptest::collection::vec(-10.0f64..10.0, len),
        proptest::collection::vec(any::<bool>(), len),
    )
        .prop_filter("both classes", |(_, l)| l.iter().any(|&b| b) && l.iter().any(|&b| !b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn roc_auc_ignores_monotone_transforms((scores, labels) in scored(24)) {
        let base = roc_auc(&ScoredSet::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() * 5.0 - 2.0).collect();
        let warped = roc_auc(&ScoredSet::new(warped, labels).unwrap()).unwrap();
        prop_assert_eq!(base, warped);
    }

    #[test]
    fn flipping_labels_complements_roc_auc((scores, labels) in scored(20)) {
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
        let auc = roc_auc(&ScoredSet::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let other = roc_auc(&ScoredSet::new(scores, flipped).unwrap()).unwrap();
        prop_assert!((auc + other - 1.0).abs() <= 1e-12, "{} + {}", auc, other);
    }

    #[test]
    fn pr_auc_lies_in_the_unit_interval((scores, labels) in scored(16)) {
        let ap = pr_auc(&ScoredSet::new(scores, labels).unwrap()).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
    }
}
