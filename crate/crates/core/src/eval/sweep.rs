use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{mse, pr_auc, roc_auc, ScoredSet};
use super::report::{ReportMetadata, ReportRow, RobustnessReport};
use crate::anomaly::{segment_score, ResidualStats, Status};
use crate::attacks::{attack, AdversarialLoss, AttackConfig, AttackMethod, DEFAULT_ITERATIONS};
use crate::container::Persist;
use crate::data::{Provenance, Task, WindowedSample};
use crate::error::{Error, Result};
use crate::models::{NormalityModel, RulModel};
use crate::tensor::Tensor;

/// Budget grid and attack schedule of a robustness campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub method: AttackMethod,
    /// Strictly increasing, starting at 0.
    pub epsilons: Vec<f64>,
    /// Per-step size. `None` means `epsilon / iterations`; a fixed value is
    /// capped at each budget.
    pub alpha: Option<f64>,
    pub iterations: usize,
    /// Fraction of test windows attacked, drawn once with `seed`.
    pub sample_fraction: f64,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(method: AttackMethod, epsilons: Vec<f64>) -> Self {
        Self {
            method,
            epsilons,
            alpha: None,
            iterations: DEFAULT_ITERATIONS,
            sample_fraction: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.epsilons.first() {
            Some(0.0) => {}
            _ => return Err(Error::Config("the epsilon list must start at 0".into())),
        }
        if self
            .epsilons
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::Config(format!(
                "epsilons must be strictly increasing: {:?}",
                self.epsilons
            )));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "sample fraction {} outside (0, 1]",
                self.sample_fraction
            )));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("alpha must be positive, got {a}")));
            }
        }
        for &e in &self.epsilons {
            self.attack_config(e).validate()?;
        }
        Ok(())
    }

    pub fn attack_config(&self, epsilon: f64) -> AttackConfig {
        match self.method {
            AttackMethod::Fgsm => AttackConfig::fgsm(epsilon),
            AttackMethod::Bim => {
                let mut cfg = AttackConfig::bim(epsilon, self.iterations);
                if let Some(a) = self.alpha {
                    cfg.alpha = a.min(epsilon);
                }
                cfg
            }
        }
    }

    /// Indices of the samples a campaign evaluates, in ascending order.
    pub fn select(&self, total: usize) -> Vec<usize> {
        if self.sample_fraction >= 1.0 {
            return (0..total).collect();
        }
        let keep = ((total as f64 * self.sample_fraction).ceil() as usize).clamp(1.min(total), total);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut chosen = rand::seq::index::sample(&mut rng, total, keep).into_vec();
        chosen.sort_unstable();
        chosen
    }
}

/// Per-budget raw outputs: anomaly scores or RUL predictions, aligned with
/// [`SweepOutcome::provenance`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonOutcome {
    pub epsilon: f64,
    pub values: Vec<f64>,
    /// Perturbed inputs for the samples listed in `keep`, same order.
    pub perturbed: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub report: RobustnessReport,
    pub provenance: Vec<Provenance>,
    /// Ground truth: abnormal flags for detection, empty for prognostics.
    pub labels: Vec<bool>,
    /// True RUL for prognostics, empty for detection.
    pub truths: Vec<f64>,
    /// Clean inputs for the samples listed in `keep`.
    pub originals: Vec<Tensor>,
    pub levels: Vec<EpsilonOutcome>,
}

impl SweepOutcome {
    pub fn scored_set(&self, level: usize) -> Result<ScoredSet> {
        ScoredSet::new(self.levels[level].values.clone(), self.labels.clone())
    }
}

#[cfg(feature = "parallel")]
fn map_ordered<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_ordered<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..count).map(f).collect()
}

/// Anomaly scores of unmodified detection samples.
pub fn clean_detection_scores(
    model: &NormalityModel,
    stats: &ResidualStats,
    samples: &[&WindowedSample],
) -> Result<Vec<f64>> {
    map_ordered(samples.len(), |i| segment_score(model, stats, &samples[i].segment()?))
}

/// RUL predictions on unmodified windows.
pub fn clean_predictions(model: &RulModel, samples: &[&WindowedSample]) -> Result<Vec<f64>> {
    map_ordered(samples.len(), |i| model.predict(&samples[i].window))
}

pub fn detection_metrics(scores: Vec<f64>, labels: Vec<bool>) -> Result<(f64, f64)> {
    let set = ScoredSet::new(scores, labels)?;
    Ok((roc_auc(&set)?, pr_auc(&set)?))
}

fn wrap(provenance: Provenance, err: Error) -> Error {
    Error::AttackFailed {
        provenance: provenance.to_string(),
        source: Box::new(err),
    }
}

fn check_keep(keep: &[usize], total: usize) -> Result<()> {
    match keep.iter().find(|&&k| k >= total) {
        Some(k) => Err(Error::Contract(format!(
            "kept sample {k} out of range for {total} samples"
        ))),
        None => Ok(()),
    }
}

/// Detection campaign: every selected sample's `[T + 1, n]` segment is
/// attacked with the label-signed score loss, then rescored. `keep` lists
/// positions (within the selection) whose perturbed segments are retained.
pub fn sweep_detection(
    model: &NormalityModel,
    stats: &ResidualStats,
    samples: &[WindowedSample],
    cfg: &SweepConfig,
    keep: &[usize],
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let chosen: Vec<&WindowedSample> = cfg.select(samples.len()).into_iter().map(|i| &samples[i]).collect();
    check_keep(keep, chosen.len())?;
    let labels: Vec<bool> = chosen.iter().map(|s| s.abnormal).collect();
    let mut levels = Vec::with_capacity(cfg.epsilons.len());
    let mut rows = Vec::with_capacity(cfg.epsilons.len());
    for &epsilon in &cfg.epsilons {
        let (values, perturbed) = if epsilon == 0.0 {
            let scores = clean_detection_scores(model, stats, &chosen)?;
            let kept = keep.iter().map(|&k| chosen[k].segment()).collect::<Result<_>>()?;
            (scores, kept)
        } else {
            let attack_cfg = cfg.attack_config(epsilon);
            let results = map_ordered(chosen.len(), |i| {
                let sample = chosen[i];
                let objective = AdversarialLoss::Detection {
                    model,
                    stats,
                    status: Status::from_abnormal(sample.abnormal),
                };
                let run = || -> Result<(f64, Tensor)> {
                    let example = attack(cfg.method, &objective, &sample.segment()?, &attack_cfg)?;
                    let score = segment_score(model, stats, &example.perturbed)?;
                    Ok((score, example.perturbed))
                };
                let (score, perturbed) = run().map_err(|e| wrap(sample.provenance, e))?;
                Ok((score, keep.contains(&i).then_some(perturbed)))
            })?;
            split(results, keep)
        };
        let (auc_roc, auc_prc) = detection_metrics(values.clone(), labels.clone())?;
        rows.push(ReportRow::detection(epsilon, auc_roc, auc_prc));
        levels.push(EpsilonOutcome {
            epsilon,
            values,
            perturbed,
        });
    }
    let originals = keep.iter().map(|&k| chosen[k].segment()).collect::<Result<_>>()?;
    let metadata = ReportMetadata::new(
        Task::Detection,
        cfg,
        model.content_hash(),
        Some(stats.content_hash()),
        chosen.len(),
    );
    Ok(SweepOutcome {
        report: RobustnessReport::new(metadata, rows)?,
        provenance: chosen.iter().map(|s| s.provenance).collect(),
        labels,
        truths: Vec::new(),
        originals,
        levels,
    })
}

/// Prognostics campaign: every selected window is attacked to maximize the
/// squared error against its true RUL.
pub fn sweep_prognostics(
    model: &RulModel,
    samples: &[WindowedSample],
    cfg: &SweepConfig,
    keep: &[usize],
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let chosen: Vec<&WindowedSample> = cfg.select(samples.len()).into_iter().map(|i| &samples[i]).collect();
    check_keep(keep, chosen.len())?;
    let truths = chosen
        .iter()
        .map(|s| {
            s.rul()
                .ok_or_else(|| Error::Contract(format!("sample {} has no RUL target", s.provenance)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut levels = Vec::with_capacity(cfg.epsilons.len());
    let mut rows = Vec::with_capacity(cfg.epsilons.len());
    for &epsilon in &cfg.epsilons {
        let (values, perturbed) = if epsilon == 0.0 {
            let kept = keep.iter().map(|&k| chosen[k].window.clone()).collect();
            (clean_predictions(model, &chosen)?, kept)
        } else {
            let attack_cfg = cfg.attack_config(epsilon);
            let results = map_ordered(chosen.len(), |i| {
                let sample = chosen[i];
                let objective = AdversarialLoss::Regression {
                    model,
                    true_rul: truths[i],
                };
                let run = || -> Result<(f64, Tensor)> {
                    let example = attack(cfg.method, &objective, &sample.window, &attack_cfg)?;
                    Ok((model.predict(&example.perturbed)?, example.perturbed))
                };
                let (pred, perturbed) = run().map_err(|e| wrap(sample.provenance, e))?;
                Ok((pred, keep.contains(&i).then_some(perturbed)))
            })?;
            split(results, keep)
        };
        rows.push(ReportRow::prognostics(epsilon, mse(&values, &truths)?));
        levels.push(EpsilonOutcome {
            epsilon,
            values,
            perturbed,
        });
    }
    let originals = keep.iter().map(|&k| chosen[k].window.clone()).collect();
    let metadata = ReportMetadata::new(Task::Prognostics, cfg, model.content_hash(), None, chosen.len());
    Ok(SweepOutcome {
        report: RobustnessReport::new(metadata, rows)?,
        provenance: chosen.iter().map(|s| s.provenance).collect(),
        labels: Vec::new(),
        truths,
        originals,
        levels,
    })
}

fn split(results: Vec<(f64, Option<Tensor>)>, keep: &[usize]) -> (Vec<f64>, Vec<Tensor>) {
    let mut values = Vec::with_capacity(results.len());
    let mut kept: Vec<(usize, Tensor)> = Vec::new();
    for (i, (v, t)) in results.into_iter().enumerate() {
        values.push(v);
        if let Some(t) = t {
            kept.push((i, t));
        }
    }
    let perturbed = keep
        .iter()
        .map(|k| kept.iter().find(|(i, _)| i == k).expect("kept sample").1.clone())
        .collect();
    (values, perturbed)
}
