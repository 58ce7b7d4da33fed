//! Where a command's runs come from: files on disk or the synthetic
//! generators.

use std::path::{Path, PathBuf};

use serde::Serialize;

use phmadv::data::{
    read_cmapss_dir, read_cmapss_test_dir, read_tep_dir, DetectionSynth, PrognosticsSynth, RunRecord, TepSplit,
    TEP_TEST_ONSET, TEP_TRAIN_ONSET, TEP_WIDTH,
};

use crate::CliError;

/// Seeds of the testing split are derived from the dataset seed so that
/// `synth --seed s` and `attack-eval --synth --seed s` see the same runs.
const TEST_SALT: u64 = 0x7465_7374;

pub fn split_seed(seed: u64, split: TepSplit) -> u64 {
    match split {
        TepSplit::Train => seed,
        TepSplit::Test => seed ^ TEST_SALT,
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DataSource {
    Files {
        path: PathBuf,
    },
    Synthetic {
        detection: Option<DetectionSynth>,
        prognostics: Option<PrognosticsSynth>,
        seed: u64,
    },
}

impl DataSource {
    pub fn describe(&self) -> String {
        match self {
            DataSource::Files { path } => path.display().to_string(),
            DataSource::Synthetic {
                detection: Some(d),
                seed,
                ..
            } => format!(
                "synthetic detection: {} normal + {} fault runs x {} samples, {} channels, onset {}, seed {seed}",
                d.normal_runs, d.fault_runs, d.run_length, d.channels, d.onset
            ),
            DataSource::Synthetic {
                prognostics: Some(p),
                seed,
                ..
            } => format!(
                "synthetic prognostics: {} engines, {}..={} cycles, seed {seed}",
                p.runs, p.min_length, p.max_length
            ),
            DataSource::Synthetic { .. } => "synthetic".into(),
        }
    }
}

/// Path or synth switch, validated to be exactly one of the two.
pub fn choose(data: Option<PathBuf>, synth: Option<bool>) -> Result<Option<PathBuf>, CliError> {
    match (data, synth.unwrap_or(false)) {
        (Some(_), true) => Err(CliError::Usage("--data and --synth are mutually exclusive".into())),
        (Some(p), false) => {
            if !p.exists() {
                return Err(CliError::Data(format!("data path {} does not exist", p.display())));
            }
            Ok(Some(p))
        }
        (None, true) => Ok(None),
        (None, false) => Err(CliError::Usage("either --data or --synth is required".into())),
    }
}

pub struct DetectionSizes {
    pub runs: Option<usize>,
    pub fault_runs: Option<usize>,
    pub channels: usize,
    pub length: Option<usize>,
    pub onset: Option<usize>,
}

pub fn detection_synth(sizes: &DetectionSizes, split: TepSplit) -> Result<DetectionSynth, CliError> {
    let runs = sizes.runs.unwrap_or(50);
    if runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let (default_length, default_onset) = match split {
        TepSplit::Train => (500, TEP_TRAIN_ONSET),
        TepSplit::Test => (960, TEP_TEST_ONSET),
    };
    if sizes.channels == 0 {
        return Err(CliError::Usage("--channels must be at least 1".into()));
    }
    Ok(DetectionSynth {
        channels: sizes.channels,
        run_length: sizes.length.unwrap_or(default_length),
        onset: sizes.onset.unwrap_or(default_onset),
        normal_runs: runs,
        fault_runs: sizes.fault_runs.unwrap_or(runs),
        ..DetectionSynth::default()
    })
}

pub fn prognostics_synth(
    runs: Option<usize>,
    min: Option<usize>,
    max: Option<usize>,
) -> Result<PrognosticsSynth, CliError> {
    let defaults = PrognosticsSynth::default();
    let synth = PrognosticsSynth {
        runs: runs.unwrap_or(defaults.runs),
        min_length: min.unwrap_or(defaults.min_length),
        max_length: max.unwrap_or(defaults.max_length),
        ..defaults
    };
    if synth.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    if synth.min_length == 0 || synth.min_length > synth.max_length {
        return Err(CliError::Usage(format!(
            "--min-length {} and --max-length {} do not form a range",
            synth.min_length, synth.max_length
        )));
    }
    Ok(synth)
}

pub fn load_detection(
    path: Option<&Path>,
    sizes: &DetectionSizes,
    split: TepSplit,
    seed: u64,
) -> Result<(Vec<RunRecord>, DataSource), CliError> {
    match path {
        Some(p) => {
            let runs = read_tep_dir(p, split, sizes.onset, None)?;
            Ok((runs, DataSource::Files { path: p.to_path_buf() }))
        }
        None => {
            let synth = detection_synth(sizes, split)?;
            let seed = split_seed(seed, split);
            let runs = synth.generate(seed)?;
            let source = DataSource::Synthetic {
                detection: Some(synth),
                prognostics: None,
                seed,
            };
            Ok((runs, source))
        }
    }
}

pub fn load_prognostics(
    path: Option<&Path>,
    synth: Result<PrognosticsSynth, CliError>,
    split: TepSplit,
    seed: u64,
) -> Result<(Vec<RunRecord>, DataSource), CliError> {
    match path {
        Some(p) => {
            let runs = match split {
                TepSplit::Train => read_cmapss_dir(p)?,
                TepSplit::Test => read_cmapss_test_dir(p)?,
            };
            Ok((runs, DataSource::Files { path: p.to_path_buf() }))
        }
        None => {
            let synth = synth?;
            let seed = split_seed(seed, split);
            let runs = synth.generate(seed)?;
            let source = DataSource::Synthetic {
                detection: None,
                prognostics: Some(synth),
                seed,
            };
            Ok((runs, source))
        }
    }
}

pub const DEFAULT_DETECTION_CHANNELS: usize = TEP_WIDTH;

pub fn check_width(runs: &[RunRecord], expected: usize, what: &str) -> Result<(), CliError> {
    match runs.iter().find(|r| r.channels() != expected) {
        Some(r) => Err(CliError::Data(format!(
            "run {} has {} channels but the {what} expects {expected}",
            r.id,
            r.channels()
        ))),
        None => Ok(()),
    }
}
