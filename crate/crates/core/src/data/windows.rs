use serde::{Deserialize, Serialize};

use super::RunRecord;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default piecewise-linear RUL cap, in cycles.
pub const DEFAULT_RUL_CAP: f64 = 130.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Detection,
    Prognostics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// The sample that follows the window.
    Next(Vec<f64>),
    /// Remaining useful life at the window's last cycle.
    Rul(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: u64,
    /// Row index (0-based) of the window's last sample.
    pub end_index: usize,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run {} @ {}", self.run_id, self.end_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSample {
    /// `[T, n]`
    pub window: Tensor,
    pub target: Target,
    pub provenance: Provenance,
    /// Ground-truth status of the sample being scored. Detection windows
    /// take the status of their target sample; prognostics windows are
    /// always `false`.
    pub abnormal: bool,
}

impl WindowedSample {
    /// The window with its next-sample target appended as a final row:
    /// `[T + 1, n]`. Only meaningful for detection samples.
    pub fn segment(&self) -> Result<Tensor> {
        let Target::Next(next) = &self.target else {
            return Err(Error::Contract("segment() needs a next-sample target".into()));
        };
        let shape = self.window.shape();
        let mut data = self.window.data().to_vec();
        data.extend_from_slice(next);
        Tensor::new(vec![shape[0] + 1, shape[1]], data)
    }

    pub fn rul(&self) -> Option<f64> {
        match self.target {
            Target::Rul(r) => Some(r),
            Target::Next(_) => None,
        }
    }
}

/// Stride-1 windows of length `window` over one run.
///
/// Detection windows end at rows `window-1 ..= len-2` (their target is the
/// following row), giving `len - window` samples. Prognostics windows end
/// at rows `window-1 ..= len-1` with target
/// `min(rul_at_end + len - (end + 1), rul_cap)`. Runs too short for a
/// single window yield nothing.
pub fn make_windows(run: &RunRecord, window: usize, task: Task, rul_cap: f64) -> Result<Vec<WindowedSample>> {
    if window == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    let len = run.len();
    let n = run.channels();
    let last_end = match task {
        Task::Detection if len > window => len - 2,
        Task::Prognostics if len >= window => len - 1,
        _ => return Ok(Vec::new()),
    };
    let data = run.samples.data();
    (window - 1..=last_end)
        .map(|end| {
            let start = end + 1 - window;
            let w = Tensor::new(vec![window, n], data[start * n..(end + 1) * n].to_vec())?;
            let (target, abnormal) = match task {
                Task::Detection => (
                    Target::Next(run.samples.row(end + 1).to_vec()),
                    run.label.is_abnormal_at(end + 1),
                ),
                Task::Prognostics => {
                    let remaining = run.rul_at_end + (len - (end + 1)) as f64;
                    (Target::Rul(remaining.min(rul_cap)), false)
                }
            };
            Ok(WindowedSample {
                window: w,
                target,
                provenance: Provenance {
                    run_id: run.id,
                    end_index: end,
                },
                abnormal,
            })
        })
        .collect()
}

/// Windows over several runs, keeping every `stride`-th window of each run.
pub fn windows_for_runs(
    runs: &[RunRecord],
    window: usize,
    task: Task,
    rul_cap: f64,
    stride: usize,
) -> Result<Vec<WindowedSample>> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for run in runs {
        out.extend(make_windows(run, window, task, rul_cap)?.into_iter().step_by(stride));
    }
    Ok(out)
}
