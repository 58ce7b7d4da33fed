mod common;

use std::collections::HashSet;

use common::*;
use phmadv::data::{
    make_windows, read_cmapss, read_cmapss_dir, read_cmapss_test_dir, read_tep_csv, read_tep_dir, synth_generate,
    windows_for_runs, write_cmapss, write_tep_csv, DetectionSynth, RunLabel, RunRecord, Standardizer, SynthKind, Task,
    TepSplit, DEFAULT_RUL_CAP, TEP_TEST_ONSET, TEP_TRAIN_ONSET,
};
use phmadv::{Error, Tensor};
use proptest::prelude::*;

fn tep_runs(len: usize, seed: u64) -> (Vec<RunRecord>, Vec<RunRecord>) {
    let synth = DetectionSynth {
        run_length: len,
        normal_runs: 2,
        fault_runs: 1,
        ..Default::default()
    };
    let runs = synth.generate(seed).unwrap();
    let (normal, fault) = runs.into_iter().partition(|r| r.label == RunLabel::Normal);
    (normal, fault)
}

#[test]
fn tep_directory_labels_follow_the_split_onset() {
    let dir = tempfile::tempdir().unwrap();
    for (split, len) in [(TepSplit::Train, 40), (TepSplit::Test, 200)] {
        let (normal, fault) = tep_runs(len, 3);
        let sub = dir.path().join(split.dir_name());
        std::fs::create_dir_all(&sub).unwrap();
        write_tep_csv(&sub.join("normal.csv"), &normal).unwrap();
        write_tep_csv(&sub.join("fault_01.csv"), &fault).unwrap();

        let runs = read_tep_dir(dir.path(), split, None, None).unwrap();
        assert_eq!(runs.len(), 3);
        let faulty = runs.iter().find(|r| r.label != RunLabel::Normal).unwrap();
        assert_eq!(
            faulty.label,
            RunLabel::Fault {
                class: 1,
                onset: split.onset()
            }
        );

        let windows = make_windows(faulty, 10, Task::Detection, DEFAULT_RUL_CAP).unwrap();
        for w in &windows {
            assert_eq!(w.abnormal, w.provenance.end_index + 1 >= split.onset());
        }
        assert!(windows.iter().any(|w| w.abnormal) && windows.iter().any(|w| !w.abnormal));
    }
    assert_eq!((TEP_TRAIN_ONSET, TEP_TEST_ONSET), (20, 160));
}

#[test]
fn tep_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (normal, _) = tep_runs(30, 8);
    let path = dir.path().join("normal.csv");
    write_tep_csv(&path, &normal).unwrap();
    let back = read_tep_csv(&path, RunLabel::Normal).unwrap();
    assert_eq!(back.len(), normal.len());
    for (a, b) in back.iter().zip(&normal) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.times, b.times);
        assert!(a
            .samples
            .data()
            .iter()
            .zip(b.samples.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn missing_tep_directory_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_tep_dir(dir.path(), TepSplit::Train, None, None).unwrap_err();
    assert!(err.is_data_error());
    assert!(err.to_string().contains("train"), "{err}");
}

#[test]
fn cmapss_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let runs = synth_generate(SynthKind::Prognostics, 4, 12).unwrap();
    write_cmapss(&dir.path().join("train_FD003.txt"), &runs).unwrap();
    std::fs::write(dir.path().join("RUL_FD003.txt"), "12\n40\n").unwrap();
    let back = read_cmapss_dir(dir.path()).unwrap();
    assert_eq!(back.len(), 4);
    for (a, b) in back.iter().zip(&runs) {
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.times, b.times);
    }
    let direct = read_cmapss(&dir.path().join("train_FD003.txt")).unwrap();
    assert_eq!(direct.len(), 4);
}

#[test]
fn truncated_test_runs_take_their_rul_file() {
    let dir = tempfile::tempdir().unwrap();
    let runs = synth_generate(SynthKind::Prognostics, 2, 13).unwrap();
    write_cmapss(&dir.path().join("test_FD003.txt"), &runs).unwrap();
    std::fs::write(dir.path().join("RUL_FD003.txt"), "12\n40\n").unwrap();
    let back = read_cmapss_test_dir(dir.path()).unwrap();
    assert_eq!(back.iter().map(|r| r.rul_at_end).collect::<Vec<_>>(), vec![12.0, 40.0]);
    let last = make_windows(&back[0], 35, Task::Prognostics, 1e9)
        .unwrap()
        .pop()
        .unwrap();
    assert_eq!(last.rul(), Some(12.0));

    std::fs::write(dir.path().join("RUL_FD003.txt"), "12\n").unwrap();
    assert!(matches!(read_cmapss_test_dir(dir.path()), Err(Error::Schema { .. })));
}

#[test]
fn cmapss_rejects_wrong_sensor_count_on_write() {
    let dir = tempfile::tempdir().unwrap();
    let run = RunRecord::new(1, RunLabel::Unlabeled, Tensor::zeros(&[3, 20])).unwrap();
    let err = write_cmapss(&dir.path().join("x.txt"), &[run]).unwrap_err();
    assert!(matches!(err, Error::Schema { .. }));
}

#[test]
fn window_provenance_is_unique() {
    for kind in [SynthKind::Detection, SynthKind::Prognostics] {
        let runs = synth_generate(kind, 3, 4).unwrap();
        let task = match kind {
            SynthKind::Detection => Task::Detection,
            SynthKind::Prognostics => Task::Prognostics,
        };
        let windows = windows_for_runs(&runs, 15, task, DEFAULT_RUL_CAP, 1).unwrap();
        let seen: HashSet<_> = windows.iter().map(|w| w.provenance).collect();
        assert_eq!(seen.len(), windows.len());
        for w in &windows {
            let run = runs.iter().find(|r| r.id == w.provenance.run_id).unwrap();
            assert!(w.provenance.end_index < run.len());
        }
    }
}

#[test]
fn different_seeds_give_different_data() {
    let a = synth_generate(SynthKind::Detection, 2, 1).unwrap();
    let b = synth_generate(SynthKind::Detection, 2, 2).unwrap();
    assert_ne!(a[0].samples, b[0].samples);
    assert_eq!(a, synth_generate(SynthKind::Detection, 2, 1).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_invert_round_trip(
        rows in 2usize..12,
        values in proptest::collection::vec(-1e3f64..1e3, 48),
        scale in 1e-3f64..1e3,
    ) {
        let n = 4;
        let data: Vec<f64> = values.iter().cycle().take(rows * n).map(|v| v * scale).collect();
        let run = RunRecord::new(1, RunLabel::Normal, Tensor::new(vec![rows, n], data).unwrap()).unwrap();
        let s = Standardizer::fit(std::slice::from_ref(&run)).unwrap();
        let z = s.apply(&run.samples).unwrap();
        let back = s.invert(&z).unwrap();
        for (a, b) in back.data().iter().zip(run.samples.data()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{} vs {}", a, b);
        }
        prop_assert!(s.std.iter().all(|&v| v >= 1e-8));
    }

    #[test]
    fn standardized_training_channels_are_centered(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let x = random_tensor(&mut rng, &[20, 3], -50.0, 50.0);
        let run = RunRecord::new(1, RunLabel::Normal, x).unwrap();
        let s = Standardizer::fit(std::slice::from_ref(&run)).unwrap();
        let z = s.apply(&run.samples).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = (0..20).map(|i| z.row(i)[c]).collect();
            let mean = col.iter().sum::<f64>() / 20.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 19.0;
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((var - 1.0).abs() < 1e-10);
        }
    }
}
