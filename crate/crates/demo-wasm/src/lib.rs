//! In-browser demo: a tiny LSTM anomaly detector trained on synthetic
//! data, attacked window by window or across a budget grid.
//!
//! All logic lives in [`DemoState`] so it runs natively under `cargo test`;
//! the `wasm_bindgen` layer only converts results to JSON strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use phmadv::anomaly::{decide, segment_score, Status};
use phmadv::attacks::{attack, AdversarialLoss, AttackMethod};
use phmadv::data::{DetectionSynth, Task, WindowedSample, DEFAULT_RUL_CAP};
use phmadv::eval::{sweep_detection, ReportRow, SweepConfig};
use phmadv::models::TrainConfig;
use phmadv::pipeline::{evaluation_windows, fit_detection, DetectionFit, DetectionSetup};

const CHANNELS: usize = 3;
const RUN_LENGTH: usize = 80;
const ONSET: usize = 40;
const WINDOW: usize = 8;

pub struct DemoState {
    fit: DetectionFit,
    samples: Vec<WindowedSample>,
}

#[derive(Debug, Serialize)]
pub struct AttackView {
    pub run: u64,
    pub end_index: usize,
    pub abnormal: bool,
    pub epsilon: f64,
    pub threshold: f64,
    pub clean_score: f64,
    pub attacked_score: f64,
    pub clean_flagged: bool,
    pub attacked_flagged: bool,
    pub linf: f64,
    /// `[channel][row]`
    pub clean: Vec<Vec<f64>>,
    pub perturbed: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub samples: usize,
    pub abnormal: usize,
    pub threshold: f64,
    pub final_loss: f64,
    pub channels: usize,
    pub window: usize,
}

fn columns(t: &phmadv::Tensor) -> Vec<Vec<f64>> {
    let width = t.shape()[1];
    (0..width)
        .map(|c| t.data().iter().skip(c).step_by(width).copied().collect())
        .collect()
}

pub fn parse_method(name: &str) -> phmadv::Result<AttackMethod> {
    match name.to_ascii_lowercase().as_str() {
        "fgsm" => Ok(AttackMethod::Fgsm),
        "bim" => Ok(AttackMethod::Bim),
        other => Err(phmadv::Error::Config(format!("unknown attack {other:?}"))),
    }
}

impl DemoState {
    /// Generates data and trains the detector. Takes well under a second
    /// in an optimized build.
    pub fn build(seed: u64) -> phmadv::Result<Self> {
        let train_runs = DetectionSynth {
            channels: CHANNELS,
            run_length: RUN_LENGTH,
            onset: ONSET,
            normal_runs: 8,
            fault_runs: 0,
            ..Default::default()
        }
        .generate(seed)?;
        let setup = DetectionSetup {
            window: WINDOW,
            hidden: 8,
            layers: 1,
            stride: 2,
            train: TrainConfig {
                learning_rate: 0.01,
                batch_size: 16,
                epochs: 8,
                seed,
                ..Default::default()
            },
            ..Default::default()
        };
        let fit = fit_detection(&train_runs, &setup)?;
        let test_runs = DetectionSynth {
            channels: CHANNELS,
            run_length: RUN_LENGTH,
            onset: ONSET,
            normal_runs: 3,
            fault_runs: 3,
            fault_shift: 3.0,
            ..Default::default()
        }
        .generate(seed.wrapping_add(1))?;
        let samples = evaluation_windows(
            &test_runs,
            &fit.standardizer,
            WINDOW,
            Task::Detection,
            DEFAULT_RUL_CAP,
            3,
        )?;
        Ok(Self { fit, samples })
    }

    pub fn summary(&self) -> Summary {
        Summary {
            samples: self.samples.len(),
            abnormal: self.samples.iter().filter(|s| s.abnormal).count(),
            threshold: self.fit.threshold,
            final_loss: self.fit.history.last().copied().unwrap_or(f64::NAN),
            channels: CHANNELS,
            window: WINDOW,
        }
    }

    /// Attacks one test window and reports how its score and decision move.
    pub fn attack_sample(&self, index: usize, epsilon: f64, method: AttackMethod) -> phmadv::Result<AttackView> {
        let sample = self.samples.get(index).ok_or_else(|| {
            phmadv::Error::Config(format!(
                "sample {index} out of range for {} samples",
                self.samples.len()
            ))
        })?;
        let (model, stats) = (&self.fit.model, &self.fit.stats);
        let segment = sample.segment()?;
        let clean_score = segment_score(model, stats, &segment)?;
        let (perturbed, attacked_score) = if epsilon == 0.0 {
            (segment.clone(), clean_score)
        } else {
            let cfg = SweepConfig::new(method, vec![0.0, epsilon]).attack_config(epsilon);
            let objective = AdversarialLoss::Detection {
                model,
                stats,
                status: Status::from_abnormal(sample.abnormal),
            };
            let example = attack(method, &objective, &segment, &cfg)?;
            let score = segment_score(model, stats, &example.perturbed)?;
            (example.perturbed, score)
        };
        let linf = segment
            .data()
            .iter()
            .zip(perturbed.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(AttackView {
            run: sample.provenance.run_id,
            end_index: sample.provenance.end_index,
            abnormal: sample.abnormal,
            epsilon,
            threshold: self.fit.threshold,
            clean_score,
            attacked_score,
            clean_flagged: decide(clean_score, self.fit.threshold).status == Status::Abnormal,
            attacked_flagged: decide(attacked_score, self.fit.threshold).status == Status::Abnormal,
            linf,
            clean: columns(&segment),
            perturbed: columns(&perturbed),
        })
    }

    /// AUC-ROC and AUC-PRC of the whole test set at each budget.
    pub fn sweep(&self, epsilons: &[f64], method: AttackMethod) -> phmadv::Result<Vec<ReportRow>> {
        let cfg = SweepConfig::new(method, epsilons.to_vec());
        Ok(
            sweep_detection(&self.fit.model, &self.fit.stats, &self.samples, &cfg, &[])?
                .report
                .rows,
        )
    }
}

fn js_error(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json(value: &impl Serialize) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(js_error)
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Ok(Demo {
            state: DemoState::build(u64::from(seed)).map_err(js_error)?,
        })
    }

    /// JSON [`Summary`].
    pub fn summary(&self) -> Result<String, JsError> {
        to_json(&self.state.summary())
    }

    /// JSON [`AttackView`].
    pub fn attack(&self, index: usize, epsilon: f64, method: &str) -> Result<String, JsError> {
        let method = parse_method(method).map_err(js_error)?;
        to_json(&self.state.attack_sample(index, epsilon, method).map_err(js_error)?)
    }

    /// JSON array of `{epsilon, auc_roc, auc_prc}` rows.
    pub fn sweep(&self, epsilons: Vec<f64>, method: &str) -> Result<String, JsError> {
        let method = parse_method(method).map_err(js_error)?;
        to_json(&self.state.sweep(&epsilons, method).map_err(js_error)?)
    }
}
