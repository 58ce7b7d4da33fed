//! End-to-end fitting of the two model families from raw runs: channel
//! standardization, windowing, training and (for detection) residual
//! calibration.

use serde::{Deserialize, Serialize};

use crate::anomaly::{
    mahalanobis_score, quantile_threshold, residual, ResidualStats, DEFAULT_LAMBDA_SCALE, DEFAULT_THRESHOLD_QUANTILE,
};
use crate::data::{windows_for_runs, RunLabel, RunRecord, Standardizer, Target, Task, WindowedSample, DEFAULT_RUL_CAP};
use crate::error::{Error, Result};
use crate::models::{train, LstmArch, NormalityModel, RulArch, RulModel, TrainConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionSetup {
    pub window: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Share of normal runs held out to fit residual statistics and the
    /// threshold.
    pub calibration_fraction: f64,
    /// Keep every `stride`-th training window.
    pub stride: usize,
    pub lambda_scale: f64,
    pub threshold_quantile: f64,
    pub train: TrainConfig,
}

impl Default for DetectionSetup {
    fn default() -> Self {
        Self {
            window: LstmArch::DEFAULT_WINDOW,
            hidden: LstmArch::DEFAULT_HIDDEN,
            layers: LstmArch::DEFAULT_LAYERS,
            calibration_fraction: 0.2,
            stride: 1,
            lambda_scale: DEFAULT_LAMBDA_SCALE,
            threshold_quantile: DEFAULT_THRESHOLD_QUANTILE,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectionFit {
    pub standardizer: Standardizer,
    pub model: NormalityModel,
    pub stats: ResidualStats,
    pub threshold: f64,
    pub history: Vec<f64>,
}

/// Residual of every detection sample against its next-sample target.
pub fn window_residuals(model: &NormalityModel, samples: &[WindowedSample]) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|s| {
            let Target::Next(next) = &s.target else {
                return Err(Error::Contract("residuals need next-sample targets".into()));
            };
            Ok(residual(model, &s.window, &Tensor::vector(next.clone()))?.into_data())
        })
        .collect()
}

/// Trains the normality model on normal runs only. The last
/// `calibration_fraction` of them are held out for residual statistics.
pub fn fit_detection(runs: &[RunRecord], setup: &DetectionSetup) -> Result<DetectionFit> {
    let normal: Vec<RunRecord> = runs.iter().filter(|r| r.label == RunLabel::Normal).cloned().collect();
    if normal.len() < 2 {
        return Err(Error::Contract(format!(
            "detection training needs at least 2 normal runs, found {}",
            normal.len()
        )));
    }
    if !(setup.calibration_fraction > 0.0 && setup.calibration_fraction < 1.0) {
        return Err(Error::Config(format!(
            "calibration fraction {} outside (0, 1)",
            setup.calibration_fraction
        )));
    }
    let standardizer = Standardizer::fit(&normal)?;
    let normal = standardizer.apply_runs(&normal)?;
    let held_out = ((normal.len() as f64 * setup.calibration_fraction).round() as usize).clamp(1, normal.len() - 1);
    let (fit_runs, calibration_runs) = normal.split_at(normal.len() - held_out);

    let arch = LstmArch {
        input_width: normal[0].channels(),
        hidden: setup.hidden,
        layers: setup.layers,
        window: setup.window,
    };
    let train_windows = windows_for_runs(fit_runs, setup.window, Task::Detection, DEFAULT_RUL_CAP, setup.stride)?;
    let initial = NormalityModel::new(arch, setup.train.seed)?;
    let outcome = train(&initial, &train_windows, &setup.train)?;

    let calibration = windows_for_runs(calibration_runs, setup.window, Task::Detection, DEFAULT_RUL_CAP, 1)?;
    let residuals = window_residuals(&outcome.model, &calibration)?;
    if residuals.is_empty() {
        return Err(Error::Contract("calibration runs are shorter than the window".into()));
    }
    let stats = ResidualStats::fit_relative(&residuals, setup.lambda_scale)?;
    let scores = residuals
        .iter()
        .map(|r| mahalanobis_score(&stats, &Tensor::vector(r.clone())))
        .collect::<Result<Vec<f64>>>()?;
    let threshold = quantile_threshold(&scores, setup.threshold_quantile)?;
    Ok(DetectionFit {
        standardizer,
        model: outcome.model,
        stats,
        threshold,
        history: outcome.history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrognosticsSetup {
    pub arch: RulArch,
    pub rul_cap: f64,
    pub stride: usize,
    pub train: TrainConfig,
}

impl Default for PrognosticsSetup {
    fn default() -> Self {
        Self {
            arch: RulArch::default(),
            rul_cap: DEFAULT_RUL_CAP,
            stride: 1,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrognosticsFit {
    pub standardizer: Standardizer,
    pub model: RulModel,
    pub history: Vec<f64>,
}

/// Trains the RUL regressor on standardized sensor windows. The output bias
/// starts at the mean training target.
pub fn fit_prognostics(runs: &[RunRecord], setup: &PrognosticsSetup) -> Result<PrognosticsFit> {
    let standardizer = Standardizer::fit(runs)?;
    let scaled = standardizer.apply_runs(runs)?;
    let arch = RulArch {
        channels: standardizer.channels(),
        ..setup.arch
    };
    let windows = windows_for_runs(&scaled, arch.window, Task::Prognostics, setup.rul_cap, setup.stride)?;
    if windows.is_empty() {
        return Err(Error::Contract(format!(
            "no run is at least {} cycles long",
            arch.window
        )));
    }
    let mut initial = RulModel::new(arch, setup.train.seed)?;
    let mean_target = windows.iter().filter_map(WindowedSample::rul).sum::<f64>() / windows.len() as f64;
    initial.dense_bias = Tensor::vector(vec![mean_target]);
    let outcome = train(&initial, &windows, &setup.train)?;
    Ok(PrognosticsFit {
        standardizer,
        model: outcome.model,
        history: outcome.history,
    })
}

/// Standardized evaluation windows.
pub fn evaluation_windows(
    runs: &[RunRecord],
    standardizer: &Standardizer,
    window: usize,
    task: Task,
    rul_cap: f64,
    stride: usize,
) -> Result<Vec<WindowedSample>> {
    windows_for_runs(&standardizer.apply_runs(runs)?, window, task, rul_cap, stride)
}
