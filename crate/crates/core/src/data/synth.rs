//! Desk-scale synthetic surrogates for the detection and prognostics
//! datasets.
//!
//! Detection runs are a coupled multichannel AR(2) process. A fault adds
//! a mean shift and a variance inflation to the innovations of a subset
//! of channels from the onset sample on. Prognostics runs drift along an
//! exponential degradation curve until failure at the last cycle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tep::{TEP_TRAIN_ONSET, TEP_WIDTH};
use super::{RunLabel, RunRecord, CMAPSS_SENSORS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Detection,
    Prognostics,
}

const BURN_IN: usize = 50;
/// Sensors that stay constant over a run, mirroring the flat channels of
/// single-condition turbofan data.
const FLAT_SENSORS: [usize; 6] = [0, 4, 9, 15, 17, 18];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSynth {
    pub channels: usize,
    pub run_length: usize,
    pub onset: usize,
    pub normal_runs: usize,
    pub fault_runs: usize,
    /// Innovation mean shift on affected channels, in innovation std units.
    pub fault_shift: f64,
    /// Innovation std multiplier on affected channels.
    pub fault_inflation: f64,
}

impl Default for DetectionSynth {
    fn default() -> Self {
        Self {
            channels: TEP_WIDTH,
            run_length: 100,
            onset: TEP_TRAIN_ONSET,
            normal_runs: 50,
            fault_runs: 50,
            fault_shift: 2.0,
            fault_inflation: 1.5,
        }
    }
}

impl DetectionSynth {
    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.run_length == 0 {
            return Err(Error::Config(
                "synthetic runs need at least one channel and one sample".into(),
            ));
        }
        if self.normal_runs + self.fault_runs == 0 {
            return Err(Error::Config("at least one run is required".into()));
        }
        Ok(())
    }

    /// Normal runs get ids `1..=normal_runs`, fault runs follow. Fault
    /// classes cycle through 1..=20.
    pub fn generate(&self, seed: u64) -> Result<Vec<RunRecord>> {
        self.validate()?;
        let mut runs = Vec::with_capacity(self.normal_runs + self.fault_runs);
        for i in 0..self.normal_runs {
            runs.push(self.generate_run(i as u64 + 1, run_seed(seed, 0, i), RunLabel::Normal)?);
        }
        for i in 0..self.fault_runs {
            let label = RunLabel::Fault {
                class: (i % 20) as u8 + 1,
                onset: self.onset,
            };
            let id = (self.normal_runs + i) as u64 + 1;
            runs.push(self.generate_run(id, run_seed(seed, 1, i), label)?);
        }
        Ok(runs)
    }

    /// One run driven by `run_seed`. A normal and a fault run with the same
    /// seed share every sample before the onset.
    pub fn generate_run(&self, id: u64, run_seed: u64, label: RunLabel) -> Result<RunRecord> {
        let n = self.channels;
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let (a1, a2, coupling) = (0.6, -0.2, 0.15);
        let mut prev = vec![0.0; n];
        let mut prev2 = vec![0.0; n];
        let mut out = Vec::with_capacity(self.run_length * n);
        for t in 0..BURN_IN + self.run_length {
            let index = t.checked_sub(BURN_IN);
            let mut next = vec![0.0; n];
            for c in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                let mut innovation = z;
                if let (Some(i), RunLabel::Fault { class, onset }) = (index, label) {
                    if i >= onset && fault_affects(class, c) {
                        let sign = if class % 2 == 0 { -1.0 } else { 1.0 };
                        innovation = self.fault_inflation * z + sign * self.fault_shift;
                    }
                }
                let neighbour = prev[(c + n - 1) % n];
                let signed = if c % 2 == 0 { coupling } else { -coupling };
                next[c] = a1 * prev[c] + a2 * prev2[c] + signed * neighbour + innovation;
            }
            if index.is_some() {
                for (c, v) in next.iter().enumerate() {
                    let offset = 10.0 * c as f64;
                    let scale = 1.0 + (c % 5) as f64;
                    out.push(offset + scale * v);
                }
            }
            prev2 = std::mem::replace(&mut prev, next);
        }
        let mut run = RunRecord::new(id, label, Tensor::new(vec![self.run_length, n], out)?)?;
        run.times = (1..=self.run_length as u64).collect();
        run.sampling_minutes = Some(3.0);
        Ok(run)
    }
}

fn fault_affects(class: u8, channel: usize) -> bool {
    (channel + class as usize).is_multiple_of(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrognosticsSynth {
    pub runs: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Noise std relative to the drift at failure.
    pub noise: f64,
}

impl Default for PrognosticsSynth {
    fn default() -> Self {
        Self {
            runs: 40,
            min_length: 150,
            max_length: 300,
            noise: 0.15,
        }
    }
}

impl PrognosticsSynth {
    pub fn generate(&self, seed: u64) -> Result<Vec<RunRecord>> {
        if self.runs == 0 {
            return Err(Error::Config("at least one run is required".into()));
        }
        if self.min_length == 0 || self.min_length > self.max_length {
            return Err(Error::Config(format!(
                "run length range {}..={} is empty",
                self.min_length, self.max_length
            )));
        }
        (0..self.runs)
            .map(|i| self.generate_run(i as u64 + 1, run_seed(seed, 2, i)))
            .collect()
    }

    pub fn generate_run(&self, id: u64, run_seed: u64) -> Result<RunRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let len = rng.random_range(self.min_length..=self.max_length);
        let rate = rng.random_range(3.0..5.0);
        let initial_wear = rng.random_range(0.0..0.1);
        let mut sensors = Vec::with_capacity(len * CMAPSS_SENSORS);
        let mut settings = Vec::with_capacity(len * 3);
        for t in 1..=len {
            let progress = t as f64 / len as f64;
            let health = initial_wear + ((rate * progress).exp() - 1.0) / (rate.exp() - 1.0);
            for c in 0..CMAPSS_SENSORS {
                let base = 100.0 + 10.0 * c as f64;
                if FLAT_SENSORS.contains(&c) {
                    sensors.push(base);
                    continue;
                }
                let sign = if c % 3 == 0 { -1.0 } else { 1.0 };
                let sensitivity = sign * (1.0 + 0.2 * (c % 5) as f64);
                let z: f64 = StandardNormal.sample(&mut rng);
                sensors.push(base + sensitivity * health + self.noise * z);
            }
            let s1: f64 = StandardNormal.sample(&mut rng);
            let s2: f64 = StandardNormal.sample(&mut rng);
            settings.extend_from_slice(&[0.002 * s1, 0.0003 * s2, 100.0]);
        }
        let mut run = RunRecord::new(
            id,
            RunLabel::Unlabeled,
            Tensor::new(vec![len, CMAPSS_SENSORS], sensors)?,
        )?;
        run.settings = Some(Tensor::new(vec![len, 3], settings)?);
        Ok(run)
    }
}

/// Independent per-run seed derived from the dataset seed.
fn run_seed(seed: u64, stream: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * index as u128);
    rng.random()
}

/// Default-sized synthetic dataset. For detection, `n_runs` normal and
/// `n_runs` fault runs are produced.
pub fn synth_generate(kind: SynthKind, n_runs: usize, seed: u64) -> Result<Vec<RunRecord>> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    match kind {
        SynthKind::Detection => DetectionSynth {
            normal_runs: n_runs,
            fault_runs: n_runs,
            ..Default::default()
        }
        .generate(seed),
        SynthKind::Prognostics => PrognosticsSynth {
            runs: n_runs,
            ..Default::default()
        }
        .generate(seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        for kind in [SynthKind::Detection, SynthKind::Prognostics] {
            assert_eq!(
                synth_generate(kind, 3, 11).unwrap(),
                synth_generate(kind, 3, 11).unwrap()
            );
        }
        assert_ne!(
            synth_generate(SynthKind::Detection, 2, 1).unwrap(),
            synth_generate(SynthKind::Detection, 2, 2).unwrap()
        );
    }

    #[test]
    fn fault_diverges_only_after_onset() {
        let cfg = DetectionSynth {
            run_length: 60,
            onset: 25,
            ..Default::default()
        };
        let normal = cfg.generate_run(1, 99, RunLabel::Normal).unwrap();
        let fault = cfg
            .generate_run(1, 99, RunLabel::Fault { class: 5, onset: 25 })
            .unwrap();
        let n = cfg.channels;
        assert_eq!(normal.samples.data()[..25 * n], fault.samples.data()[..25 * n]);
        assert_ne!(normal.samples.row(25), fault.samples.row(25));
        for t in 25..60 {
            assert_ne!(normal.samples.row(t), fault.samples.row(t), "row {t}");
        }
    }

    #[test]
    fn detection_layout() {
        let runs = synth_generate(SynthKind::Detection, 2, 0).unwrap();
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[0].label, RunLabel::Normal);
        assert!(matches!(runs[3].label, RunLabel::Fault { class: 2, .. }));
        assert!(runs.iter().all(|r| r.samples.shape() == [100, 52]));
    }

    #[test]
    fn prognostics_runs_vary_in_length_and_fail_at_the_end() {
        let runs = synth_generate(SynthKind::Prognostics, 5, 3).unwrap();
        let lens: Vec<usize> = runs.iter().map(RunRecord::len).collect();
        assert!(lens.iter().all(|l| (150..=300).contains(l)));
        assert!(lens.windows(2).any(|w| w[0] != w[1]));
        // Sensor 1 drifts upward over the run.
        let r = &runs[0];
        let early: f64 = (0..10).map(|i| r.samples.row(i)[1]).sum();
        let late: f64 = (r.len() - 10..r.len()).map(|i| r.samples.row(i)[1]).sum();
        assert!(late > early);
    }

    #[test]
    fn zero_runs_is_rejected() {
        assert!(synth_generate(SynthKind::Detection, 0, 0).is_err());
    }
}
