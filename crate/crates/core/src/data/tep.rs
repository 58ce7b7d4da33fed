//! Tennessee-Eastman-style measurement CSV.
//!
//! Header `run,t,m1,...,m52`, then one row per sample: run id, sample
//! index, 52 measurements. One file holds one label group; the label is
//! supplied by the caller.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{RunLabel, RunRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TEP_WIDTH: usize = 52;
/// Fault onset in training runs: 1 hour at a 3-minute sampling period.
pub const TEP_TRAIN_ONSET: usize = 20;
/// Fault onset in testing runs: 8 hours at a 3-minute sampling period.
pub const TEP_TEST_ONSET: usize = 160;
const SAMPLING_MINUTES: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TepSplit {
    Train,
    Test,
}

impl TepSplit {
    pub fn onset(self) -> usize {
        match self {
            TepSplit::Train => TEP_TRAIN_ONSET,
            TepSplit::Test => TEP_TEST_ONSET,
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            TepSplit::Train => "train",
            TepSplit::Test => "test",
        }
    }
}

/// Reads a 52-measurement TEP CSV.
pub fn read_tep_csv(path: &Path, label: RunLabel) -> Result<Vec<RunRecord>> {
    read_measurement_csv(path, label, Some(TEP_WIDTH))
}

/// Reads a `run,t,m1..mK` CSV, optionally enforcing `K`.
pub fn read_measurement_csv(path: &Path, label: RunLabel, width: Option<usize>) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_measurement_csv(&text, path, label, width)
}

fn schema(path: &Path, detail: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

pub(crate) fn parse_measurement_csv(
    text: &str,
    path: &Path,
    label: RunLabel,
    width: Option<usize>,
) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(schema(path, "missing header row"));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "run" || cols[1] != "t" {
        return Err(schema(
            path,
            format!("missing header: expected `run,t,m1,...`, found {header:?}"),
        ));
    }
    let channels = cols.len() - 2;
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("m{}", k + 1) {
            return Err(schema(path, format!("column {} is {c:?}, expected m{}", k + 3, k + 1)));
        }
    }
    if let Some(w) = width {
        if channels != w {
            return Err(schema(path, format!("{channels} measurement columns, expected {w}")));
        }
    }

    let mut runs: BTreeMap<u64, (Vec<u64>, Vec<f64>)> = BTreeMap::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let parse_err = |detail: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            detail,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != channels + 2 {
            return Err(parse_err(format!(
                "expected {} fields, found {}",
                channels + 2,
                fields.len()
            )));
        }
        let run: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad run id {:?}", fields[0])))?;
        let t: u64 = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("bad sample index {:?}", fields[1])))?;
        let (times, values) = runs.entry(run).or_default();
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::Ordering {
                    path: path.to_path_buf(),
                    run,
                    detail: format!("line {line_no}: sample {t} does not follow {prev}"),
                });
            }
        }
        times.push(t);
        for f in &fields[2..] {
            values.push(f.parse().map_err(|_| parse_err(format!("bad number {f:?}")))?);
        }
    }

    runs.into_iter()
        .map(|(id, (times, values))| {
            let len = times.len();
            let mut run = RunRecord::new(id, label, Tensor::new(vec![len, channels], values)?)?;
            run.times = times;
            run.sampling_minutes = Some(SAMPLING_MINUTES);
            Ok(run)
        })
        .collect()
}

/// Writes runs to a measurement CSV. All runs must share a width.
pub fn write_tep_csv(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let width = runs.first().map_or(TEP_WIDTH, RunRecord::channels);
    let mut out = String::from("run,t");
    for k in 1..=width {
        let _ = write!(out, ",m{k}");
    }
    out.push('\n');
    for run in runs {
        if run.channels() != width {
            return Err(schema(
                path,
                format!("run {} has width {}, expected {width}", run.id, run.channels()),
            ));
        }
        for (i, t) in run.times.iter().enumerate() {
            let _ = write!(out, "{},{}", run.id, t);
            for v in run.samples.row(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `<dir>/<split>/normal.csv` and every `<dir>/<split>/fault_KK.csv`.
///
/// Fault onsets follow the split (`TEP_TRAIN_ONSET` / `TEP_TEST_ONSET`)
/// unless `onset` overrides them. With `width: None` any measurement
/// count is accepted as long as the files agree.
pub fn read_tep_dir(dir: &Path, split: TepSplit, onset: Option<usize>, width: Option<usize>) -> Result<Vec<RunRecord>> {
    let sub = dir.join(split.dir_name());
    let entries = std::fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))?;
    let mut files: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    files.sort();
    let onset = onset.unwrap_or(split.onset());
    let mut runs = Vec::new();
    for file in files {
        let Some(stem) = file.file_stem().map(|s| s.to_string_lossy().to_string()) else {
            continue;
        };
        if file.extension().is_none_or(|x| x != "csv") {
            continue;
        }
        let label = if stem == "normal" {
            RunLabel::Normal
        } else if let Some(k) = stem.strip_prefix("fault_") {
            let class: u8 = k
                .parse()
                .map_err(|_| schema(&file, format!("cannot read fault class from {stem:?}")))?;
            RunLabel::Fault { class, onset }
        } else {
            continue;
        };
        runs.extend(read_measurement_csv(&file, label, width)?);
    }
    if runs.is_empty() {
        return Err(schema(&sub, "no normal.csv or fault_KK.csv files"));
    }
    let w = runs[0].channels();
    if let Some(bad) = runs.iter().find(|r| r.channels() != w) {
        return Err(schema(
            &sub,
            format!("run {} has width {}, others {w}", bad.id, bad.channels()),
        ));
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(width: usize, runs: &[(u64, usize)]) -> String {
        let mut s = String::from("run,t");
        for k in 1..=width {
            s.push_str(&format!(",m{k}"));
        }
        s.push('\n');
        for &(run, len) in runs {
            for t in 1..=len {
                s.push_str(&format!("{run},{t}"));
                for k in 0..width {
                    s.push_str(&format!(",{}", (t * 100 + k) as f64 * 0.5));
                }
                s.push('\n');
            }
        }
        s
    }

    #[test]
    fn training_run_shape() {
        let runs =
            parse_measurement_csv(&csv(52, &[(1, 500)]), Path::new("d.csv"), RunLabel::Normal, Some(52)).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].samples.shape(), &[500, 52]);
    }

    #[test]
    fn testing_run_shape() {
        let label = RunLabel::Fault {
            class: 3,
            onset: TEP_TEST_ONSET,
        };
        let runs = parse_measurement_csv(&csv(52, &[(7, 960)]), Path::new("d.csv"), label, Some(52)).unwrap();
        assert_eq!(runs[0].samples.shape(), &[960, 52]);
        assert_eq!(runs[0].label, label);
    }

    #[test]
    fn missing_header_is_schema_error() {
        let text = csv(52, &[(1, 3)]);
        let body: String = text.lines().skip(1).collect::<Vec<_>>().join("\n");
        let err = parse_measurement_csv(&body, Path::new("d.csv"), RunLabel::Normal, Some(52)).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err:?}");
    }

    #[test]
    fn wrong_width_is_schema_error() {
        let err =
            parse_measurement_csv(&csv(51, &[(1, 3)]), Path::new("d.csv"), RunLabel::Normal, Some(52)).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err:?}");
    }
}
