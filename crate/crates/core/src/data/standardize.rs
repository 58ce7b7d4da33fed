use crate::container::{Container, Persist};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::RunRecord;

/// Channels with a smaller spread are treated as constant.
const MIN_STD: f64 = 1e-8;

/// Per-channel z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Always `>= MIN_STD`; degenerate channels store 1.
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits means and sample standard deviations (N-1) over every row of
    /// every run.
    pub fn fit(runs: &[RunRecord]) -> Result<Self> {
        let first = runs
            .iter()
            .find(|r| !r.is_empty())
            .ok_or_else(|| Error::Contract("cannot fit a standardizer on no samples".into()))?;
        let n = first.channels();
        let mut count = 0usize;
        let mut sum = vec![0.0; n];
        for run in runs {
            if run.channels() != n {
                return Err(Error::shape(
                    "standardizer",
                    format!("run {} has {} channels, expected {n}", run.id, run.channels()),
                ));
            }
            for i in 0..run.len() {
                for (s, v) in sum.iter_mut().zip(run.samples.row(i)) {
                    *s += v;
                }
            }
            count += run.len();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut ss = vec![0.0; n];
        for run in runs {
            for i in 0..run.len() {
                for ((acc, v), m) in ss.iter_mut().zip(run.samples.row(i)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = ss
            .iter()
            .map(|s| {
                let sd = if count > 1 {
                    (s / (count - 1) as f64).sqrt()
                } else {
                    0.0
                };
                if sd < MIN_STD || !sd.is_finite() {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.shape()[1] != self.channels() {
            return Err(Error::shape(
                "standardize",
                format!("{:?} vs {} channels", x.shape(), self.channels()),
            ));
        }
        Ok(())
    }

    /// `(v - mean) / std` per channel of a `[rows, channels]` tensor.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mut out = x.clone();
        let n = self.channels();
        for row in out.data_mut().chunks_mut(n) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mut out = x.clone();
        let n = self.channels();
        for row in out.data_mut().chunks_mut(n) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    pub fn apply_run(&self, run: &RunRecord) -> Result<RunRecord> {
        let mut out = run.clone();
        out.samples = self.apply(&run.samples)?;
        Ok(out)
    }

    pub fn apply_runs(&self, runs: &[RunRecord]) -> Result<Vec<RunRecord>> {
        runs.iter().map(|r| self.apply_run(r)).collect()
    }
}

pub(crate) const STANDARDIZER_KIND: &str = "standardizer";

impl Persist for Standardizer {
    fn to_container(&self) -> Container {
        let mut c = Container::new(STANDARDIZER_KIND, serde_json::json!({ "channels": self.channels() }));
        c.push("mean", &Tensor::vector(self.mean.clone()));
        c.push("std", &Tensor::vector(self.std.clone()));
        c
    }

    fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(STANDARDIZER_KIND)?;
        let n = c.architecture["channels"]
            .as_u64()
            .ok_or_else(|| Error::Container("standardizer without channel count".into()))? as usize;
        Ok(Self {
            mean: c.tensor("mean", &[n])?.into_data(),
            std: c.tensor("std", &[n])?.into_data(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RunLabel;

    fn run(rows: Vec<Vec<f64>>) -> RunRecord {
        RunRecord::new(1, RunLabel::Normal, Tensor::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let r = run(vec![vec![7.0], vec![7.0], vec![7.0]]);
        let s = Standardizer::fit(std::slice::from_ref(&r)).unwrap();
        assert_eq!(s.std, vec![1.0]);
        assert_eq!(s.apply(&r.samples).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_point_channel() {
        let r = run(vec![vec![0.0], vec![2.0]]);
        let s = Standardizer::fit(std::slice::from_ref(&r)).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert!((s.std[0] - 2f64.sqrt()).abs() < 1e-15);
        let z = s.apply(&r.samples).unwrap();
        assert!((z.data()[0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((z.data()[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(Standardizer::fit(&[]).is_err());
    }
}
