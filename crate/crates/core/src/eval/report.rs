use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{PrPoint, RocPoint};
use super::sweep::{SweepConfig, SweepOutcome};
use crate::attacks::AttackMethod;
use crate::data::Task;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::FORMAT_VERSION;

/// One budget level. Detection rows carry the two AUCs, prognostics rows
/// the MSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc_roc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc_prc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse: Option<f64>,
}

impl ReportRow {
    pub fn detection(epsilon: f64, auc_roc: f64, auc_prc: f64) -> Self {
        Self {
            epsilon,
            auc_roc: Some(auc_roc),
            auc_prc: Some(auc_prc),
            mse: None,
        }
    }

    pub fn prognostics(epsilon: f64, mse: f64) -> Self {
        Self {
            epsilon,
            auc_roc: None,
            auc_prc: None,
            mse: Some(mse),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub format_version: u32,
    pub task: Task,
    pub attack: AttackMethod,
    pub iterations: usize,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub sample_fraction: f64,
    pub samples: usize,
    /// Metrics are computed over individual windows, not aggregated runs.
    pub granularity: String,
    pub model_hash: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stats_hash: Option<String>,
    #[serde(default)]
    pub dataset: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_hash: Option<String>,
}

impl ReportMetadata {
    pub fn new(task: Task, cfg: &SweepConfig, model_hash: String, stats_hash: Option<String>, samples: usize) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            task,
            attack: cfg.method,
            iterations: match cfg.method {
                AttackMethod::Fgsm => 1,
                AttackMethod::Bim => cfg.iterations,
            },
            alpha: cfg.alpha,
            seed: cfg.seed,
            sample_fraction: cfg.sample_fraction,
            samples,
            granularity: "per-window".into(),
            model_hash,
            stats_hash,
            dataset: String::new(),
            config_hash: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
}

impl RobustnessReport {
    pub fn new(metadata: ReportMetadata, rows: Vec<ReportRow>) -> Result<Self> {
        let report = Self { metadata, rows };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        match self.rows.first() {
            Some(r) if r.epsilon == 0.0 => {}
            _ => {
                return Err(Error::Contract(
                    "report must start with the clean row at epsilon 0".into(),
                ))
            }
        }
        if self
            .rows
            .windows(2)
            .any(|w| w[1].epsilon.partial_cmp(&w[0].epsilon) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::Contract("report epsilons must be strictly increasing".into()));
        }
        let complete = |r: &ReportRow| match self.metadata.task {
            Task::Detection => r.auc_roc.is_some() && r.auc_prc.is_some(),
            Task::Prognostics => r.mse.is_some(),
        };
        if !self.rows.iter().all(complete) {
            return Err(Error::Contract("report rows do not match the task's metrics".into()));
        }
        Ok(())
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.epsilon).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.metadata.task {
            Task::Detection => {
                out.push_str("epsilon,auc_roc,auc_prc\n");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{}",
                        r.epsilon,
                        r.auc_roc.unwrap_or(f64::NAN),
                        r.auc_prc.unwrap_or(f64::NAN)
                    );
                }
            }
            Task::Prognostics => {
                out.push_str("epsilon,mse\n");
                for r in &self.rows {
                    let _ = writeln!(out, "{},{}", r.epsilon, r.mse.unwrap_or(f64::NAN));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        report.validate()?;
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Schema {
                path: path.to_path_buf(),
                detail: j.to_string(),
            },
            other => other,
        })
    }

    /// Fixed-width text table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        match self.metadata.task {
            Task::Detection => {
                let _ = writeln!(out, "{:>12}  {:>8}  {:>8}", "epsilon", "AUC-ROC", "AUC-PRC");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{:>12}  {:>8.4}  {:>8.4}",
                        r.epsilon,
                        r.auc_roc.unwrap_or(f64::NAN),
                        r.auc_prc.unwrap_or(f64::NAN)
                    );
                }
            }
            Task::Prognostics => {
                let _ = writeln!(out, "{:>12}  {:>10}", "epsilon", "MSE");
                for r in &self.rows {
                    let _ = writeln!(out, "{:>12}  {:>10.2}", r.epsilon, r.mse.unwrap_or(f64::NAN));
                }
            }
        }
        out
    }
}

pub fn roc_curve_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    out
}

pub fn pr_curve_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("threshold,recall,precision\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.recall, p.precision);
    }
    out
}

/// True and predicted RUL per window, one prediction column per budget.
pub fn rul_trajectories_csv(outcome: &SweepOutcome) -> Result<String> {
    if outcome.truths.len() != outcome.provenance.len() {
        return Err(Error::Contract("trajectories need a prognostics sweep".into()));
    }
    let mut out = String::from("run,end_index,true_rul");
    for level in &outcome.levels {
        let _ = write!(out, ",pred_eps_{}", level.epsilon);
    }
    out.push('\n');
    for (i, (p, truth)) in outcome.provenance.iter().zip(&outcome.truths).enumerate() {
        let _ = write!(out, "{},{},{}", p.run_id, p.end_index, truth);
        for level in &outcome.levels {
            let _ = write!(out, ",{}", level.values[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Clean and perturbed series of one `[rows, channels]` input, long format.
pub fn signal_dump_csv(clean: &Tensor, perturbed: &Tensor) -> Result<String> {
    if clean.shape() != perturbed.shape() || clean.shape().len() != 2 {
        return Err(Error::shape(
            "signal_dump_csv",
            format!("{:?} vs {:?}", clean.shape(), perturbed.shape()),
        ));
    }
    let width = clean.shape()[1];
    let mut out = String::from("row,channel,clean,perturbed\n");
    for (i, (c, p)) in clean.data().iter().zip(perturbed.data()).enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i / width, i % width, c, p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(rows: Vec<ReportRow>) -> Result<RobustnessReport> {
        let cfg = SweepConfig::new(AttackMethod::Bim, rows.iter().map(|r| r.epsilon).collect());
        RobustnessReport::new(
            ReportMetadata::new(Task::Prognostics, &cfg, "abc".into(), None, 3),
            rows,
        )
    }

    #[test]
    fn csv_header_and_rows() {
        let r = report(vec![
            ReportRow::prognostics(0.0, 242.5),
            ReportRow::prognostics(0.025, 421.0),
        ])
        .unwrap();
        assert_eq!(r.to_csv(), "epsilon,mse\n0,242.5\n0.025,421\n");
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(report(vec![ReportRow::prognostics(0.1, 1.0)]).is_err());
        assert!(report(vec![ReportRow::prognostics(0.0, 1.0), ReportRow::prognostics(0.0, 2.0)]).is_err());
        assert!(report(vec![ReportRow::detection(0.0, 0.9, 0.9)]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let r = report(vec![ReportRow::prognostics(0.0, 1.5)]).unwrap();
        assert_eq!(RobustnessReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn signal_dump_layout() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = a.map(|v| v + 0.5);
        let csv = signal_dump_csv(&a, &b).unwrap();
        assert_eq!(csv.lines().nth(3), Some("1,0,3,3.5"));
    }
}
