//! C-MAPSS text files: whitespace-separated, 26 columns, no header.
//! Columns are engine id, cycle, three operating settings, 21 sensors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{RunLabel, RunRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CMAPSS_COLUMNS: usize = 26;
pub const CMAPSS_SENSORS: usize = 21;
const SETTINGS: usize = 3;

struct Row {
    cycle: u64,
    settings: [f64; SETTINGS],
    sensors: Vec<f64>,
}

pub fn read_cmapss(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cmapss(&text, path)
}

pub(crate) fn parse_cmapss(text: &str, path: &Path) -> Result<Vec<RunRecord>> {
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut runs: BTreeMap<u64, Vec<Row>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != CMAPSS_COLUMNS {
            return Err(parse_err(
                line_no,
                format!("expected {CMAPSS_COLUMNS} columns, found {}", fields.len()),
            ));
        }
        let id =
            parse_integer(fields[0]).ok_or_else(|| parse_err(line_no, format!("bad engine id {:?}", fields[0])))?;
        let cycle = parse_integer(fields[1]).ok_or_else(|| parse_err(line_no, format!("bad cycle {:?}", fields[1])))?;
        let mut values = Vec::with_capacity(CMAPSS_COLUMNS - 2);
        for (col, f) in fields[2..].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(line_no, format!("column {}: bad number {f:?}", col + 3)))?;
            values.push(v);
        }
        let rows = runs.entry(id).or_default();
        if let Some(prev) = rows.last() {
            if cycle <= prev.cycle {
                return Err(Error::Ordering {
                    path: path.to_path_buf(),
                    run: id,
                    detail: format!("line {line_no}: cycle {cycle} does not follow cycle {}", prev.cycle),
                });
            }
        }
        rows.push(Row {
            cycle,
            settings: [values[0], values[1], values[2]],
            sensors: values[SETTINGS..].to_vec(),
        });
    }

    runs.into_iter()
        .map(|(id, rows)| {
            let len = rows.len();
            let mut sensors = Vec::with_capacity(len * CMAPSS_SENSORS);
            let mut settings = Vec::with_capacity(len * SETTINGS);
            for r in &rows {
                sensors.extend_from_slice(&r.sensors);
                settings.extend_from_slice(&r.settings);
            }
            let mut run = RunRecord::new(
                id,
                RunLabel::Unlabeled,
                Tensor::new(vec![len, CMAPSS_SENSORS], sensors)?,
            )?;
            run.times = rows.iter().map(|r| r.cycle).collect();
            run.settings = Some(Tensor::new(vec![len, SETTINGS], settings)?);
            Ok(run)
        })
        .collect()
}

/// Accepts integers written either plainly (`12`) or as floats (`12.0`).
fn parse_integer(s: &str) -> Option<u64> {
    s.parse::<u64>().ok().or_else(|| {
        let v: f64 = s.parse().ok()?;
        (v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64).then_some(v as u64)
    })
}

/// Reads the one-value-per-line `RUL_*.txt` file that accompanies a
/// truncated test set. Line `k` holds the true RUL of engine `k`.
pub fn read_rul_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                detail: format!("bad RUL value {:?}", l.trim()),
            })
        })
        .collect()
}

/// Reads the training split of a C-MAPSS directory.
///
/// Prefers `train_*.txt`; falls back to every `*.txt` that is not a
/// `RUL_*` or `test_*` file. A plain file path is read directly.
pub fn read_cmapss_dir(path: &Path) -> Result<Vec<RunRecord>> {
    if path.is_file() {
        return read_cmapss(path);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let name = |p: &PathBuf| {
        p.file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default()
    };
    let train: Vec<PathBuf> = files.iter().filter(|p| name(p).starts_with("train")).cloned().collect();
    let chosen = if train.is_empty() {
        files
            .into_iter()
            .filter(|p| !name(p).starts_with("RUL") && !name(p).starts_with("test"))
            .collect()
    } else {
        train
    };
    if chosen.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            detail: "no C-MAPSS .txt files found".into(),
        });
    }
    let mut runs = Vec::new();
    let mut next_id = 1;
    for file in chosen {
        for mut run in read_cmapss(&file)? {
            run.id = next_id;
            next_id += 1;
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Reads the test split of a C-MAPSS directory: every `test_*.txt`, each
/// paired with `RUL_<suffix>.txt` when that file exists so truncated
/// engines carry their remaining life past the last cycle. A plain file
/// path is read directly as complete run-to-failure data.
pub fn read_cmapss_test_dir(path: &Path) -> Result<Vec<RunRecord>> {
    if path.is_file() {
        return read_cmapss(path);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "txt")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("test"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            detail: "no C-MAPSS test_*.txt files found".into(),
        });
    }
    let mut runs = Vec::new();
    let mut next_id = 1;
    for file in files {
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default();
        let rul_path = file.with_file_name(format!("RUL{}", &name["test".len()..]));
        let mut part = read_cmapss(&file)?;
        if rul_path.is_file() {
            let ruls = read_rul_file(&rul_path)?;
            if ruls.len() != part.len() {
                return Err(Error::Schema {
                    path: rul_path,
                    detail: format!("{} RUL values for {} engines", ruls.len(), part.len()),
                });
            }
            for (run, rul) in part.iter_mut().zip(ruls) {
                run.rul_at_end = rul;
            }
        }
        for mut run in part {
            run.id = next_id;
            next_id += 1;
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Writes runs in C-MAPSS layout. Values use the shortest round-trip
/// decimal representation, so reading the file back is lossless.
pub fn write_cmapss(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let mut out = String::new();
    for run in runs {
        if run.channels() != CMAPSS_SENSORS {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                detail: format!(
                    "run {} has {} sensors, C-MAPSS needs {CMAPSS_SENSORS}",
                    run.id,
                    run.channels()
                ),
            });
        }
        for (i, t) in run.times.iter().enumerate() {
            let _ = write!(out, "{} {}", run.id, t);
            match &run.settings {
                Some(s) => {
                    for v in s.row(i) {
                        let _ = write!(out, " {v}");
                    }
                }
                None => out.push_str(" 0 0 0"),
            }
            for v in run.samples.row(i) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: u64, cycle: u64) -> String {
        let mut s = format!("{id} {cycle} -0.0005 0.0004 100.0");
        for k in 0..CMAPSS_SENSORS {
            s.push_str(&format!(" {}", 500.0 + k as f64));
        }
        s
    }

    #[test]
    fn single_line_is_one_row() {
        let runs = parse_cmapss(&line(1, 1), Path::new("x.txt")).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].id, 1);
        assert_eq!(runs[0].times, vec![1]);
        assert_eq!(runs[0].samples.shape(), &[1, 21]);
        assert_eq!(runs[0].settings.as_ref().unwrap().data(), &[-0.0005, 0.0004, 100.0]);
        assert_eq!(runs[0].samples.data()[0], 500.0);
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(parse_cmapss("", Path::new("x.txt")).unwrap().is_empty());
    }

    #[test]
    fn short_line_names_its_number() {
        let mut text = format!("{}\n{}\n", line(1, 1), line(1, 2));
        let full = line(1, 3);
        let short: Vec<&str> = full.split(' ').take(25).collect();
        text.push_str(&short.join(" "));
        let err = parse_cmapss(&text, Path::new("x.txt")).unwrap_err();
        match err {
            Error::Parse { line, ref detail, .. } => {
                assert_eq!(line, 3);
                assert!(detail.contains("25"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn decreasing_cycle_is_an_ordering_error() {
        let text = format!("{}\n{}\n", line(2, 5), line(2, 4));
        let err = parse_cmapss(&text, Path::new("x.txt")).unwrap_err();
        assert!(matches!(err, Error::Ordering { run: 2, .. }));
    }

    #[test]
    fn runs_grouped_by_engine() {
        let text = [line(2, 1), line(1, 1), line(2, 2), line(1, 2), line(1, 3)].join("\n");
        let runs = parse_cmapss(&text, Path::new("x.txt")).unwrap();
        assert_eq!(
            runs.iter().map(|r| (r.id, r.len())).collect::<Vec<_>>(),
            vec![(1, 3), (2, 2)]
        );
    }
}
