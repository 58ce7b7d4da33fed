use std::collections::BTreeMap;

use serde_json::{json, Value};

use phmadv::anomaly::ResidualStats;
use phmadv::attacks::{AttackMethod, DEFAULT_ITERATIONS};
use phmadv::container::{Container, Persist};
use phmadv::data::{write_cmapss, write_tep_csv, RunLabel, RunRecord, Standardizer, Task, TepSplit, DEFAULT_RUL_CAP};
use phmadv::eval::{
    pr_curve, pr_curve_csv, roc_curve, roc_curve_csv, rul_trajectories_csv, signal_dump_csv, sweep_detection,
    sweep_prognostics, RobustnessReport, SweepConfig, SweepOutcome,
};
use phmadv::models::{NormalityModel, RulArch, RulModel, TrainConfig};
use phmadv::pipeline::{evaluation_windows, fit_detection, fit_prognostics, DetectionSetup, PrognosticsSetup};

use crate::args::{required, AttackArg, AttackEvalArgs, FormatArg, Layered, ReportArgs, SynthArgs, TaskArg, TrainArgs};
use crate::output::{config_hash, Outputs};
use crate::source::{self, DetectionSizes, DEFAULT_DETECTION_CHANNELS};
use crate::CliError;

const MODEL_FILE: &str = "model.json";
const STATS_FILE: &str = "stats.json";
const STANDARDIZER_FILE: &str = "standardizer.json";

const DETECTION_EPSILONS: [f64; 4] = [0.0, 0.00025, 0.00825, 0.035];
const RUL_EPSILONS: [f64; 4] = [0.0, 0.025, 0.045, 0.065];

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let kind = required(args.kind, "kind")?;
    let out = required(args.out.clone(), "out")?;
    let seed = args.seed.unwrap_or(0);
    let mut outputs = Outputs::create(&out)?;
    let mut sources = Vec::new();
    match kind {
        TaskArg::Detection => {
            for split in [TepSplit::Train, TepSplit::Test] {
                let sizes = DetectionSizes {
                    runs: args.runs,
                    fault_runs: args.fault_runs,
                    channels: args.channels.unwrap_or(DEFAULT_DETECTION_CHANNELS),
                    length: match split {
                        TepSplit::Train => args.train_length,
                        TepSplit::Test => args.test_length,
                    },
                    onset: None,
                };
                let (runs, src) = source::load_detection(None, &sizes, split, seed)?;
                for (name, group) in tep_groups(runs) {
                    outputs.write_with(&format!("{}/{name}", split.dir_name()), |p| write_tep_csv(p, &group))?;
                }
                sources.push(src);
            }
        }
        TaskArg::Rul => {
            for split in [TepSplit::Train, TepSplit::Test] {
                let synth = source::prognostics_synth(args.runs, args.min_length, args.max_length);
                let (runs, src) = source::load_prognostics(None, synth, split, seed)?;
                let name = format!("{}_SYN.txt", split.dir_name());
                outputs.write_with(&name, |p| write_cmapss(p, &runs))?;
                sources.push(src);
            }
        }
    }
    let (config, hash) = config_hash(&args)?;
    let written = outputs.len();
    let root = outputs.finish("synth", seed, config, &hash, json!({ "splits": sources }))?;
    println!("wrote {written} data files to {}", root.display());
    Ok(())
}

/// Normal runs in `normal.csv`, fault runs in one `fault_KK.csv` per class.
fn tep_groups(runs: Vec<RunRecord>) -> BTreeMap<String, Vec<RunRecord>> {
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for run in runs {
        let name = match run.label {
            RunLabel::Fault { class, .. } => format!("fault_{class:02}.csv"),
            _ => "normal.csv".to_string(),
        };
        groups.entry(name).or_default().push(run);
    }
    groups
}

fn positive(value: Option<usize>, default: usize, flag: &str) -> Result<usize, CliError> {
    match value.unwrap_or(default) {
        0 => Err(CliError::Usage(format!("--{flag} must be at least 1"))),
        v => Ok(v),
    }
}

fn train_config(args: &TrainArgs, seed: u64) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    Ok(TrainConfig {
        learning_rate: args.learning_rate.unwrap_or(d.learning_rate),
        batch_size: positive(args.batch_size, d.batch_size, "batch-size")?,
        epochs: positive(args.epochs, d.epochs, "epochs")?,
        seed,
        ..d
    })
}

fn history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, loss) in history.iter().enumerate() {
        out.push_str(&format!("{},{loss}\n", i + 1));
    }
    out
}

fn stamp(container: &mut Container, seed: u64, hash: &str) {
    container.metadata.insert("seed".into(), json!(seed));
    container.metadata.insert("config_hash".into(), json!(hash));
    container.metadata.insert("command".into(), json!("train"));
}

fn save_container(outputs: &mut Outputs, name: &str, container: &Container) -> Result<(), CliError> {
    outputs.write(name, container.to_json()?)
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let task = required(args.task, "task")?;
    let out = required(args.out.clone(), "out")?;
    let path = source::choose(args.data.clone(), args.synth)?;
    let seed = args.seed.unwrap_or(0);
    let train_cfg = train_config(&args, seed)?;
    let stride = positive(args.stride, 1, "stride")?;

    match task {
        TaskArg::Detection => {
            let sizes = DetectionSizes {
                runs: args.runs,
                fault_runs: args.fault_runs,
                channels: args.channels.unwrap_or(DEFAULT_DETECTION_CHANNELS),
                length: args.train_length,
                onset: args.onset,
            };
            let (runs, src) = source::load_detection(path.as_deref(), &sizes, TepSplit::Train, seed)?;
            let d = DetectionSetup::default();
            let setup = DetectionSetup {
                window: positive(args.window, d.window, "window")?,
                hidden: positive(args.hidden, d.hidden, "hidden")?,
                layers: positive(args.layers, d.layers, "layers")?,
                calibration_fraction: args.calibration_fraction.unwrap_or(d.calibration_fraction),
                stride,
                lambda_scale: args.lambda_scale.unwrap_or(d.lambda_scale),
                threshold_quantile: args.threshold_quantile.unwrap_or(d.threshold_quantile),
                train: train_cfg,
            };
            let (config, hash) = config_hash(&json!({ "task": task, "data": src, "setup": setup }))?;
            eprintln!("training detection model on {} runs ({})", runs.len(), src.describe());
            let fit = fit_detection(&runs, &setup)?;

            let mut outputs = Outputs::create(&out)?;
            let mut model = fit.model.to_container();
            stamp(&mut model, seed, &hash);
            save_container(&mut outputs, MODEL_FILE, &model)?;
            let mut stats = fit.stats.to_container_with_threshold(Some(fit.threshold));
            stamp(&mut stats, seed, &hash);
            save_container(&mut outputs, STATS_FILE, &stats)?;
            save_container(&mut outputs, STANDARDIZER_FILE, &fit.standardizer.to_container())?;
            outputs.write("loss_history.csv", history_csv(&fit.history))?;
            let details = json!({
                "model_hash": model.content_hash()?,
                "stats_hash": stats.content_hash()?,
                "threshold": fit.threshold,
                "final_loss": fit.history.last(),
            });
            outputs.finish("train", seed, config, &hash, details)?;
            println!(
                "detection model: final loss {:.6}, threshold {:.4}, written to {}",
                fit.history.last().copied().unwrap_or(f64::NAN),
                fit.threshold,
                out.display()
            );
        }
        TaskArg::Rul => {
            let synth = source::prognostics_synth(args.runs, args.min_length, args.max_length);
            let (runs, src) = source::load_prognostics(path.as_deref(), synth, TepSplit::Train, seed)?;
            let d = PrognosticsSetup::default();
            let rul_cap = args.rul_cap.unwrap_or(d.rul_cap);
            if rul_cap.is_nan() || rul_cap <= 0.0 {
                return Err(CliError::Usage(format!("--rul-cap must be positive, got {rul_cap}")));
            }
            let setup = PrognosticsSetup {
                arch: RulArch {
                    window: positive(args.window, d.arch.window, "window")?,
                    ..d.arch
                },
                rul_cap,
                stride,
                train: train_cfg,
            };
            let (config, hash) = config_hash(&json!({ "task": task, "data": src, "setup": setup }))?;
            eprintln!("training RUL model on {} engines ({})", runs.len(), src.describe());
            let fit = fit_prognostics(&runs, &setup)?;

            let mut outputs = Outputs::create(&out)?;
            let mut model = fit.model.to_container();
            stamp(&mut model, seed, &hash);
            model.metadata.insert("rul_cap".into(), json!(rul_cap));
            save_container(&mut outputs, MODEL_FILE, &model)?;
            save_container(&mut outputs, STANDARDIZER_FILE, &fit.standardizer.to_container())?;
            outputs.write("loss_history.csv", history_csv(&fit.history))?;
            let details = json!({
                "model_hash": model.content_hash()?,
                "final_loss": fit.history.last(),
            });
            outputs.finish("train", seed, config, &hash, details)?;
            println!(
                "RUL model: final loss {:.4}, written to {}",
                fit.history.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
    }
    Ok(())
}

/// `count` positions spread evenly over `0..total`.
fn spread(count: usize, total: usize) -> Vec<usize> {
    let count = count.min(total);
    (0..count).map(|i| i * total / count).collect()
}

fn sweep_config(args: &AttackEvalArgs, task: TaskArg, seed: u64) -> Result<SweepConfig, CliError> {
    let default_grid = match task {
        TaskArg::Detection => DETECTION_EPSILONS.to_vec(),
        TaskArg::Rul => RUL_EPSILONS.to_vec(),
    };
    let cfg = SweepConfig {
        method: match args.attack.unwrap_or(AttackArg::Bim) {
            AttackArg::Fgsm => AttackMethod::Fgsm,
            AttackArg::Bim => AttackMethod::Bim,
        },
        epsilons: args.epsilons.clone().unwrap_or(default_grid),
        alpha: args.alpha,
        iterations: positive(args.iterations, DEFAULT_ITERATIONS, "iterations")?,
        sample_fraction: args.sample_fraction.unwrap_or(1.0),
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_container(path: &std::path::Path) -> Result<Container, CliError> {
    Ok(Container::load(path)?)
}

pub fn attack_eval(args: AttackEvalArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let task = required(args.task, "task")?;
    let model_dir = required(args.model_dir.clone(), "model-dir")?;
    let out = required(args.out.clone(), "out")?;
    let path = source::choose(args.data.clone(), args.synth)?;
    let seed = args.seed.unwrap_or(0);
    let stride = positive(args.stride, 1, "stride")?;
    let cfg = sweep_config(&args, task, seed)?;
    let dump = args.dump_signals.unwrap_or(0);
    let raw_units = args.raw_units.unwrap_or(false);

    let standardizer = Standardizer::load(&model_dir.join(STANDARDIZER_FILE))?;
    let model_container = load_container(&model_dir.join(MODEL_FILE))?;

    let (outcome, src) = match task {
        TaskArg::Detection => {
            let model = NormalityModel::from_container(&model_container)?;
            let stats = ResidualStats::load(&model_dir.join(STATS_FILE))?;
            let sizes = DetectionSizes {
                runs: args.runs,
                fault_runs: args.fault_runs,
                channels: standardizer.channels(),
                length: args.test_length,
                onset: args.onset,
            };
            let (runs, src) = source::load_detection(path.as_deref(), &sizes, TepSplit::Test, seed)?;
            source::check_width(&runs, standardizer.channels(), "trained model")?;
            let windows = evaluation_windows(
                &runs,
                &standardizer,
                model.arch().window,
                Task::Detection,
                DEFAULT_RUL_CAP,
                stride,
            )?;
            if windows.is_empty() {
                return Err(CliError::Data(format!(
                    "no test run is longer than the window of {}",
                    model.arch().window
                )));
            }
            let keep = spread(dump, cfg.select(windows.len()).len());
            eprintln!("attacking {} detection windows ({})", windows.len(), src.describe());
            (sweep_detection(&model, &stats, &windows, &cfg, &keep)?, src)
        }
        TaskArg::Rul => {
            let model = RulModel::from_container(&model_container)?;
            let rul_cap = model_container
                .metadata
                .get("rul_cap")
                .and_then(Value::as_f64)
                .unwrap_or(DEFAULT_RUL_CAP);
            let synth = source::prognostics_synth(args.runs, args.min_length, args.max_length);
            let (runs, src) = source::load_prognostics(path.as_deref(), synth, TepSplit::Test, seed)?;
            source::check_width(&runs, standardizer.channels(), "trained model")?;
            let window = model.arch().window;
            let windows = evaluation_windows(&runs, &standardizer, window, Task::Prognostics, rul_cap, stride)?;
            if windows.is_empty() {
                return Err(CliError::Data(format!("no test engine has at least {window} cycles")));
            }
            let keep = spread(dump, cfg.select(windows.len()).len());
            eprintln!("attacking {} RUL windows ({})", windows.len(), src.describe());
            (sweep_prognostics(&model, &windows, &cfg, &keep)?, src)
        }
    };

    let effective = json!({
        "task": task,
        "data": src,
        "sweep": cfg,
        "stride": stride,
        "dump_signals": dump,
        "raw_units": raw_units,
        "model_hash": outcome.report.metadata.model_hash,
    });
    let (config, hash) = config_hash(&effective)?;
    let mut report = outcome.report.clone();
    report.metadata.dataset = src.describe();
    report.metadata.config_hash = Some(hash.clone());

    let mut outputs = Outputs::create(&out)?;
    outputs.write("report.csv", report.to_csv())?;
    outputs.write("report.json", report.to_json()?)?;
    write_curves(&mut outputs, &outcome, task)?;
    write_signals(&mut outputs, &outcome, &standardizer, raw_units)?;
    outputs.finish(
        "attack-eval",
        seed,
        config,
        &hash,
        json!({ "samples": report.metadata.samples }),
    )?;
    print!("{}", report.to_table());
    Ok(())
}

fn write_curves(outputs: &mut Outputs, outcome: &SweepOutcome, task: TaskArg) -> Result<(), CliError> {
    match task {
        TaskArg::Detection => {
            for (i, level) in outcome.levels.iter().enumerate() {
                let set = outcome.scored_set(i)?;
                outputs.write(
                    &format!("curves/roc_eps_{}.csv", level.epsilon),
                    roc_curve_csv(&roc_curve(&set)?),
                )?;
                outputs.write(
                    &format!("curves/pr_eps_{}.csv", level.epsilon),
                    pr_curve_csv(&pr_curve(&set)?),
                )?;
            }
        }
        TaskArg::Rul => outputs.write("curves/rul_trajectories.csv", rul_trajectories_csv(outcome)?)?,
    }
    Ok(())
}

fn write_signals(
    outputs: &mut Outputs,
    outcome: &SweepOutcome,
    standardizer: &Standardizer,
    raw: bool,
) -> Result<(), CliError> {
    let keep = spread(outcome.originals.len(), outcome.provenance.len());
    let units = |t: &phmadv::Tensor| if raw { standardizer.invert(t) } else { Ok(t.clone()) };
    for (k, &position) in keep.iter().enumerate() {
        let p = outcome.provenance[position];
        let clean = units(&outcome.originals[k])?;
        for level in outcome.levels.iter().filter(|l| l.epsilon > 0.0) {
            let perturbed = units(&level.perturbed[k])?;
            let name = format!("signals/run{}_t{}_eps{}.csv", p.run_id, p.end_index, level.epsilon);
            outputs.write(&name, signal_dump_csv(&clean, &perturbed)?)?;
        }
    }
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<(), CliError> {
    for (i, path) in args.reports.iter().enumerate() {
        let report = RobustnessReport::load(path)?;
        match args.format {
            FormatArg::Table => {
                if args.reports.len() > 1 {
                    if i > 0 {
                        println!();
                    }
                    println!("{}", path.display());
                }
                let m = &report.metadata;
                println!(
                    "{:?} / {:?}, {} iterations, {} windows, {}",
                    m.task, m.attack, m.iterations, m.samples, m.dataset
                );
                print!("{}", report.to_table());
            }
            FormatArg::Csv => print!("{}", report.to_csv()),
            FormatArg::Json => print!("{}", report.to_json()?),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_is_even_and_bounded() {
        assert_eq!(spread(3, 9), vec![0, 3, 6]);
        assert_eq!(spread(5, 2), vec![0, 1]);
        assert!(spread(0, 10).is_empty());
    }

    #[test]
    fn tep_groups_split_by_class() {
        let runs = phmadv::data::synth_generate(phmadv::data::SynthKind::Detection, 3, 1).unwrap();
        let groups = tep_groups(runs);
        assert!(groups.contains_key("normal.csv"));
        assert!(groups.keys().any(|k| k.starts_with("fault_")));
    }

    #[test]
    fn default_grids_start_clean() {
        for task in [TaskArg::Detection, TaskArg::Rul] {
            let cfg = sweep_config(&AttackEvalArgs::default(), task, 0).unwrap();
            assert_eq!(cfg.epsilons.len(), 4);
            assert_eq!(cfg.epsilons[0], 0.0);
        }
    }
}
