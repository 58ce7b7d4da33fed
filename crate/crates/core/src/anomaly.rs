//! Residual-based anomaly scoring: residual `R_t = x_t - f(window)`,
//! Mahalanobis distance to the normal-residual distribution, threshold.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::container::{Container, Persist};
use crate::error::{Error, Result};
use crate::models::{LstmVars, NormalityModel};
use crate::tensor::{Tape, Tensor, Var};

/// Default regularizer as a fraction of the mean residual variance.
pub const DEFAULT_LAMBDA_SCALE: f64 = 1e-6;
pub const DEFAULT_THRESHOLD_QUANTILE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Normal,
    Abnormal,
}

impl Status {
    pub fn from_abnormal(abnormal: bool) -> Self {
        if abnormal {
            Status::Abnormal
        } else {
            Status::Normal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyDecision {
    pub score: f64,
    pub threshold: f64,
    pub status: Status,
}

/// Abnormal iff `score > threshold`.
pub fn decide(score: f64, threshold: f64) -> AnomalyDecision {
    AnomalyDecision {
        score,
        threshold,
        status: Status::from_abnormal(score > threshold),
    }
}

/// Mean and regularized inverse covariance of normal-data residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    pub mean: Vec<f64>,
    /// `[n, n]`, sample covariance with an N-1 denominator.
    pub covariance: Tensor,
    /// `[n, n]`, inverse of `covariance + lambda * I`.
    pub precision: Tensor,
    pub lambda: f64,
}

impl ResidualStats {
    /// Fits from residual vectors with an explicit regularizer.
    pub fn fit(residuals: &[Vec<f64>], lambda: f64) -> Result<Self> {
        let (mean, covariance) = mean_and_covariance(residuals)?;
        Self::from_moments(mean, covariance, lambda)
    }

    /// Fits with `lambda = 1e-6 * trace(cov) / n`.
    pub fn fit_default(residuals: &[Vec<f64>]) -> Result<Self> {
        Self::fit_relative(residuals, DEFAULT_LAMBDA_SCALE)
    }

    /// Fits with `lambda = scale * trace(cov) / n`.
    pub fn fit_relative(residuals: &[Vec<f64>], scale: f64) -> Result<Self> {
        let (mean, covariance) = mean_and_covariance(residuals)?;
        let n = mean.len();
        let trace: f64 = (0..n).map(|i| covariance.data()[i * n + i]).sum();
        Self::from_moments(mean, covariance, scale * trace / n as f64)
    }

    pub fn from_moments(mean: Vec<f64>, covariance: Tensor, lambda: f64) -> Result<Self> {
        let n = mean.len();
        if covariance.shape() != [n, n] {
            return Err(Error::shape(
                "residual_stats",
                format!("covariance {:?} for {n} channels", covariance.shape()),
            ));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "regularizer must be finite and >= 0, got {lambda}"
            )));
        }
        let mut reg = DMatrix::from_row_slice(n, n, covariance.data());
        for i in 0..n {
            reg[(i, i)] += lambda;
        }
        let chol = reg.cholesky().ok_or(Error::RegularizationRequired)?;
        let inv = chol.inverse();
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::RegularizationRequired);
        }
        let mut precision = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                precision.data_mut()[i * n + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
        Ok(Self {
            mean,
            covariance,
            precision,
            lambda,
        })
    }

    /// Stats with a given mean and precision (covariance left as its
    /// inverse). Mostly useful in tests.
    pub fn from_precision(mean: Vec<f64>, precision: Tensor) -> Result<Self> {
        let n = mean.len();
        if precision.shape() != [n, n] {
            return Err(Error::shape(
                "residual_stats",
                format!("precision {:?} for {n} channels", precision.shape()),
            ));
        }
        let inv = DMatrix::from_row_slice(n, n, precision.data())
            .try_inverse()
            .ok_or(Error::RegularizationRequired)?;
        let covariance = Tensor::new(vec![n, n], inv.transpose().as_slice().to_vec())?;
        Ok(Self {
            mean,
            covariance,
            precision,
            lambda: 0.0,
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Records the score `sqrt((r - mean)^T P (r - mean))` of an `[n]`
    /// residual.
    pub fn score_on<'t>(&self, residual: Var<'t>) -> Result<Var<'t>> {
        let n = self.width();
        if residual.shape() != [n] {
            return Err(Error::shape(
                "mahalanobis",
                format!("residual {:?}, stats width {n}", residual.shape()),
            ));
        }
        let tape = residual.tape();
        let mean = tape.constant(Tensor::vector(self.mean.clone()));
        let precision = tape.constant(self.precision.clone());
        let centered = residual.sub(mean)?.reshape(&[1, n])?;
        let quad = centered.matmul(precision)?.mul(centered)?.sum()?;
        // Rounding can push the form a hair below zero next to the mean.
        quad.relu()?.sqrt()
    }
}

fn mean_and_covariance(residuals: &[Vec<f64>]) -> Result<(Vec<f64>, Tensor)> {
    let n = residuals.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::Contract("no residuals to fit".into()));
    }
    if residuals.len() < n + 1 {
        return Err(Error::Contract(format!(
            "{} residuals cannot fit a {n}-channel covariance; need at least {}",
            residuals.len(),
            n + 1
        )));
    }
    if let Some(bad) = residuals.iter().find(|r| r.len() != n) {
        return Err(Error::shape(
            "residual_stats",
            format!("residual of width {} among width {n}", bad.len()),
        ));
    }
    let count = residuals.len() as f64;
    let mut mean = vec![0.0; n];
    for r in residuals {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let mut cov = vec![0.0; n * n];
    for r in residuals {
        for i in 0..n {
            let di = r[i] - mean[i];
            for j in i..n {
                cov[i * n + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = cov[i * n + j] / (count - 1.0);
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    Ok((mean, Tensor::new(vec![n, n], cov)?))
}

/// `actual - f(window)`.
pub fn residual(model: &NormalityModel, window: &Tensor, actual: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let vars = model.record(&tape, false);
    let r = residual_on(
        model,
        &vars,
        tape.constant(window.clone()),
        tape.constant(actual.clone()),
    )?;
    let value = r.value().clone();
    Ok(value)
}

pub fn residual_on<'t>(
    model: &NormalityModel,
    vars: &LstmVars<'t>,
    window: Var<'t>,
    actual: Var<'t>,
) -> Result<Var<'t>> {
    let n = model.arch().input_width;
    if actual.shape() != [n] {
        return Err(Error::shape(
            "residual",
            format!("actual {:?}, model width {n}", actual.shape()),
        ));
    }
    actual.sub(model.predict_on(vars, window)?)
}

pub fn mahalanobis_score(stats: &ResidualStats, r: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    stats.score_on(tape.constant(r.clone()))?.item()
}

/// Records the anomaly score of a `[T + 1, n]` segment: the first `T`
/// rows are the lagged window, the last row the measured sample.
pub fn segment_score_on<'t>(
    model: &NormalityModel,
    vars: &LstmVars<'t>,
    stats: &ResidualStats,
    segment: Var<'t>,
) -> Result<Var<'t>> {
    let arch = model.arch();
    if segment.shape() != [arch.window + 1, arch.input_width] {
        return Err(Error::shape(
            "segment_score",
            format!(
                "segment {:?}, expected [{}, {}]",
                segment.shape(),
                arch.window + 1,
                arch.input_width
            ),
        ));
    }
    let window = segment.slice(0, 0, arch.window)?;
    let actual = segment.slice(0, arch.window, 1)?.reshape(&[arch.input_width])?;
    stats.score_on(residual_on(model, vars, window, actual)?)
}

/// Anomaly score `o_t` of a `[T + 1, n]` segment.
pub fn segment_score(model: &NormalityModel, stats: &ResidualStats, segment: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    let vars = model.record(&tape, false);
    segment_score_on(model, &vars, stats, tape.constant(segment.clone()))?.item()
}

/// Empirical `q`-quantile (linear interpolation between order statistics).
pub fn quantile_threshold(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Contract("no calibration scores".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("quantile {q} outside [0, 1]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// A fitted detector: normality model, residual statistics and threshold.
#[derive(Debug, Clone)]
pub struct Detector {
    pub model: NormalityModel,
    pub stats: ResidualStats,
    pub threshold: f64,
}

impl Detector {
    pub fn score(&self, segment: &Tensor) -> Result<f64> {
        segment_score(&self.model, &self.stats, segment)
    }

    pub fn decide(&self, segment: &Tensor) -> Result<AnomalyDecision> {
        Ok(decide(self.score(segment)?, self.threshold))
    }
}

pub(crate) const STATS_KIND: &str = "residual-stats";

#[derive(Serialize, Deserialize)]
struct StatsArch {
    width: usize,
    lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
}

impl ResidualStats {
    /// Container carrying the stats and, optionally, a decision threshold.
    pub fn to_container_with_threshold(&self, threshold: Option<f64>) -> Container {
        let arch = StatsArch {
            width: self.width(),
            lambda: self.lambda,
            threshold,
        };
        let mut c = Container::new(STATS_KIND, serde_json::to_value(arch).expect("plain struct serializes"));
        c.push("mean", &Tensor::vector(self.mean.clone()));
        c.push("covariance", &self.covariance);
        c.push("precision", &self.precision);
        c
    }

    /// Threshold stored alongside the stats, if any.
    pub fn threshold_in(c: &Container) -> Result<Option<f64>> {
        c.expect_kind(STATS_KIND)?;
        Ok(c.architecture_as::<StatsArch>()?.threshold)
    }
}

impl Persist for ResidualStats {
    fn to_container(&self) -> Container {
        self.to_container_with_threshold(None)
    }

    fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(STATS_KIND)?;
        let arch: StatsArch = c.architecture_as()?;
        let n = arch.width;
        Ok(Self {
            mean: c.tensor("mean", &[n])?.into_data(),
            covariance: c.tensor("covariance", &[n, n])?,
            precision: c.tensor("precision", &[n, n])?,
            lambda: arch.lambda,
        })
    }
}
