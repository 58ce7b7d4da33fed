//! Run records, file formats, standardization, window extraction and
//! synthetic surrogates.

mod cmapss;
mod standardize;
mod synth;
mod tep;
mod windows;

pub use cmapss::{
    read_cmapss, read_cmapss_dir, read_cmapss_test_dir, read_rul_file, write_cmapss, CMAPSS_COLUMNS, CMAPSS_SENSORS,
};
pub use standardize::Standardizer;
pub use synth::{synth_generate, DetectionSynth, PrognosticsSynth, SynthKind};
pub use tep::{
    read_measurement_csv, read_tep_csv, read_tep_dir, write_tep_csv, TepSplit, TEP_TEST_ONSET, TEP_TRAIN_ONSET,
    TEP_WIDTH,
};
pub use windows::{make_windows, windows_for_runs, Provenance, Target, Task, WindowedSample, DEFAULT_RUL_CAP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Health label attached to a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunLabel {
    Normal,
    /// Process fault `class` (1..=20) switched on at sample index `onset`.
    Fault {
        class: u8,
        onset: usize,
    },
    /// Run-to-failure trajectory without a detection label.
    Unlabeled,
}

impl RunLabel {
    /// Whether the sample at `index` is abnormal.
    pub fn is_abnormal_at(&self, index: usize) -> bool {
        matches!(*self, RunLabel::Fault { onset, .. } if index >= onset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub id: u64,
    pub label: RunLabel,
    /// Time stamps (cycle or sample index), strictly increasing.
    pub times: Vec<u64>,
    /// `[len, channels]`, rows in time order.
    pub samples: Tensor,
    /// Operating settings `[len, 3]` (C-MAPSS only).
    pub settings: Option<Tensor>,
    /// Informational sampling period in minutes.
    pub sampling_minutes: Option<f64>,
    /// Remaining life after the last sample; 0 for run-to-failure data.
    pub rul_at_end: f64,
}

impl RunRecord {
    pub fn new(id: u64, label: RunLabel, samples: Tensor) -> Result<Self> {
        if samples.shape().len() != 2 {
            return Err(Error::shape(
                "run",
                format!("samples must be [len, channels], got {:?}", samples.shape()),
            ));
        }
        let len = samples.shape()[0] as u64;
        Ok(Self {
            id,
            label,
            times: (1..=len).collect(),
            samples,
            settings: None,
            sampling_minutes: None,
            rul_at_end: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.len() {
            return Err(Error::Contract(format!(
                "run {}: {} time stamps for {} samples",
                self.id,
                self.times.len(),
                self.len()
            )));
        }
        if let Some(w) = self.times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Contract(format!(
                "run {}: time {} follows {}",
                self.id, w[1], w[0]
            )));
        }
        Ok(())
    }
}
