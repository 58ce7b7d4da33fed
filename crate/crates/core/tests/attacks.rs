mod common;

use common::*;
use phmadv::anomaly::{mahalanobis_score, residual, segment_score, ResidualStats, Status};
use phmadv::attacks::{
    adversarial_loss_detection, adversarial_loss_regression, bim, clip, fgsm, AdversarialLoss, AttackConfig, Objective,
};
use phmadv::models::{LstmArch, NormalityModel, RulArch, RulModel};
use phmadv::Tensor;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SMALL_CNN: RulArch = RulArch {
    window: 12,
    channels: 6,
    conv1_filters: 4,
    conv1_kernel: (3, 3),
    conv2_filters: 5,
    conv2_kernel: (4, 1),
};

struct DetectionCase {
    model: NormalityModel,
    stats: ResidualStats,
}

impl DetectionCase {
    fn new(rng: &mut ChaCha8Rng, n: usize, window: usize) -> Self {
        let model = small_lstm(rng, n, window, 4);
        let residuals: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let w = random_tensor(rng, &[window, n], -1.0, 1.0);
                let actual = random_tensor(rng, &[n], -1.0, 1.0);
                residual(&model, &w, &actual).unwrap().into_data()
            })
            .collect();
        let stats = ResidualStats::fit(&residuals, 1e-3).unwrap();
        Self { model, stats }
    }

    fn objective(&self, status: Status) -> AdversarialLoss<'_> {
        AdversarialLoss::Detection {
            model: &self.model,
            stats: &self.stats,
            status,
        }
    }

    fn segment(&self, rng: &mut ChaCha8Rng) -> Tensor {
        let arch = self.model.arch();
        random_tensor(rng, &[arch.window + 1, arch.input_width], -1.0, 1.0)
    }
}

fn split_segment(segment: &Tensor) -> (Tensor, Tensor) {
    let rows = segment.shape()[0];
    let n = segment.shape()[1];
    let window = Tensor::new(vec![rows - 1, n], segment.data()[..(rows - 1) * n].to_vec()).unwrap();
    let actual = Tensor::vector(segment.row(rows - 1).to_vec());
    (window, actual)
}

#[test]
fn detection_loss_sign_follows_the_label() {
    let mut rng = rng(31);
    let case = DetectionCase::new(&mut rng, 3, 5);
    for _ in 0..10 {
        let (window, actual) = split_segment(&case.segment(&mut rng));
        let score = mahalanobis_score(&case.stats, &residual(&case.model, &window, &actual).unwrap()).unwrap();
        let normal = adversarial_loss_detection(&case.model, &case.stats, &window, &actual, Status::Normal).unwrap();
        let abnormal =
            adversarial_loss_detection(&case.model, &case.stats, &window, &actual, Status::Abnormal).unwrap();
        assert_eq!(normal, score);
        assert_eq!(abnormal, -score);
    }
}

#[test]
fn perfect_prediction_is_a_fixed_point() {
    let arch = LstmArch {
        input_width: 2,
        hidden: 3,
        layers: 2,
        window: 4,
    };
    let mut model = NormalityModel::zeros(arch).unwrap();
    model.b_out = Tensor::vector(vec![0.5, -1.5]);
    let stats = ResidualStats::from_precision(vec![0.0, 0.0], Tensor::eye(2)).unwrap();
    let mut data = vec![0.3; 8];
    data.extend([0.5, -1.5]);
    let segment = Tensor::new(vec![5, 2], data).unwrap();
    let objective = AdversarialLoss::Detection {
        model: &model,
        stats: &stats,
        status: Status::Normal,
    };
    let (loss, grad) = objective.loss_and_gradient(&segment).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.data().iter().all(|&g| g == 0.0));
    let example = bim(&objective, &segment, &AttackConfig::bim(0.1, 5)).unwrap();
    assert_eq!(example.perturbed, segment);
}

#[test]
fn regression_loss_is_squared_error() {
    let mut model = RulModel::zeros(RulArch::default()).unwrap();
    model.dense_bias = Tensor::vector(vec![10.0]);
    let window = Tensor::full(&[35, 21], 0.25);
    assert_eq!(adversarial_loss_regression(&model, &window, 0.0).unwrap(), 100.0);
    assert_eq!(adversarial_loss_regression(&model, &window, 10.0).unwrap(), 0.0);
}

#[test]
fn regression_gradient_matches_finite_differences() {
    let mut rng = rng(32);
    let (model, window) = cnn_instance(&mut rng, RulArch::default(), 1e-4);
    let true_rul = 60.0;
    let objective = AdversarialLoss::Regression {
        model: &model,
        true_rul,
    };
    let (_, grad) = objective.loss_and_gradient(&window).unwrap();
    let coords = sample_coords(&mut rng, window.len(), 20);
    for i in coords {
        let mut plus = window.clone();
        plus.data_mut()[i] += FD_STEP;
        let mut minus = window.clone();
        minus.data_mut()[i] -= FD_STEP;
        let numeric = (objective.loss(&plus).unwrap() - objective.loss(&minus).unwrap()) / (2.0 * FD_STEP);
        assert!(
            rel_err(grad.data()[i], numeric) <= FD_TOLERANCE,
            "coord {i}: {} vs {numeric}",
            grad.data()[i]
        );
    }
}

#[test]
fn bim_raises_the_score_of_normal_samples() {
    let mut rng = rng(33);
    for _ in 0..10 {
        let case = DetectionCase::new(&mut rng, 3, 5);
        let segment = case.segment(&mut rng);
        let cfg = AttackConfig::bim(0.02, 10);
        let example = bim(&case.objective(Status::Normal), &segment, &cfg).unwrap();
        assert!(example.linf() <= cfg.eta() + 1e-12);
        let before = segment_score(&case.model, &case.stats, &segment).unwrap();
        let after = segment_score(&case.model, &case.stats, &example.perturbed).unwrap();
        assert!(after >= before, "{after} < {before}");
        assert_eq!(example.loss_before, before);
        assert_eq!(example.loss_after, after);
    }
}

#[test]
fn attacks_ascend_their_objective_on_average() {
    let mut rng = rng(34);
    let case = DetectionCase::new(&mut rng, 3, 5);
    let cfg = AttackConfig::bim(0.05, 10);
    let (mut clean, mut attacked) = (0.0, 0.0);
    for i in 0..120 {
        let status = if i % 2 == 0 { Status::Normal } else { Status::Abnormal };
        let example = bim(&case.objective(status), &case.segment(&mut rng), &cfg).unwrap();
        clean += example.loss_before;
        attacked += example.loss_after;
    }
    assert!(attacked >= clean, "detection: {attacked} < {clean}");

    let mut model = random_cnn(&mut rng, SMALL_CNN);
    model.dense_bias = Tensor::vector(vec![50.0]);
    let (mut clean, mut attacked) = (0.0, 0.0);
    for _ in 0..120 {
        let window = random_tensor(&mut rng, &[12, 6], -1.0, 1.0);
        let objective = AdversarialLoss::Regression {
            model: &model,
            true_rul: rng.random_range(0.0..130.0),
        };
        let example = bim(&objective, &window, &cfg).unwrap();
        clean += example.loss_before;
        attacked += example.loss_after;
    }
    assert!(attacked >= clean, "regression: {attacked} < {clean}");
}

#[test]
fn attacks_are_deterministic() {
    let mut rng = rng(35);
    let case = DetectionCase::new(&mut rng, 4, 6);
    let segment = case.segment(&mut rng);
    let cfg = AttackConfig::bim(0.1, 7);
    let a = bim(&case.objective(Status::Abnormal), &segment, &cfg).unwrap();
    let b = bim(&case.objective(Status::Abnormal), &segment, &cfg).unwrap();
    assert!(a
        .perturbed
        .data()
        .iter()
        .zip(b.perturbed.data())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    let f1 = fgsm(&case.objective(Status::Normal), &segment, 0.1).unwrap();
    let f2 = fgsm(&case.objective(Status::Normal), &segment, 0.1).unwrap();
    assert_eq!(f1, f2);
}

#[test]
fn fgsm_moves_every_coordinate_by_the_budget() {
    let mut rng = rng(36);
    let case = DetectionCase::new(&mut rng, 3, 5);
    let segment = case.segment(&mut rng);
    let example = fgsm(&case.objective(Status::Normal), &segment, 0.07).unwrap();
    let (_, grad) = case.objective(Status::Normal).loss_and_gradient(&segment).unwrap();
    for ((x, p), g) in segment.data().iter().zip(example.perturbed.data()).zip(grad.data()) {
        let expected = if *g == 0.0 { 0.0 } else { 0.07 * g.signum() };
        assert!((p - x - expected).abs() < 1e-14, "{p} - {x} vs {expected}");
    }
}

fn feasible_pair(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (0.0f64..1.0).prop_flat_map(move |eta| {
        (
            proptest::collection::vec(-5.0f64..5.0, len),
            proptest::collection::vec(-1.0f64..=1.0, len),
            Just(eta),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bim_respects_the_budget(
        seed in any::<u64>(),
        eps in 0.0f64..0.5,
        iterations in 1usize..6,
        normal in any::<bool>(),
    ) {
        let mut rng = rng(seed);
        let case = DetectionCase::new(&mut rng, 2, 3);
        let segment = case.segment(&mut rng);
        let example = bim(&case.objective(Status::from_abnormal(!normal)), &segment, &AttackConfig::bim(eps, iterations)).unwrap();
        prop_assert!(example.linf() <= eps + 1e-12);
    }

    #[test]
    fn clip_is_idempotent((x, offsets, eta) in feasible_pair(12)) {
        let x = Tensor::vector(x);
        let candidate = Tensor::vector(x.data().iter().zip(&offsets).map(|(v, o)| v + o * 3.0).collect());
        let once = clip(&x, &candidate, eta);
        prop_assert!(once.max_abs_diff(&x) <= eta + 1e-12);
        let twice = clip(&x, &once, eta);
        prop_assert_eq!(once, twice);
    }
}
