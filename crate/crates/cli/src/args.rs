//! Command-line and config-file settings.
//!
//! Every subcommand reads a flat settings struct. Each field can come from
//! a flag or from the JSON file named by `--config`; a flag always wins.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "phmadv",
    about = "Gradient-sign adversarial attacks on time-series anomaly detection and RUL models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic datasets in the TEP CSV or C-MAPSS text formats.
    Synth(SynthArgs),
    /// Train a normality model (detection) or a RUL regressor.
    Train(TrainArgs),
    /// Attack every test window across an epsilon grid and report metrics.
    AttackEval(AttackEvalArgs),
    /// Print or convert robustness reports.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    /// Residual-based anomaly detection (TEP-style data).
    Detection,
    /// Remaining-useful-life regression (C-MAPSS-style data).
    #[serde(alias = "prognostics")]
    #[value(alias = "prognostics")]
    Rul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AttackArg {
    Fgsm,
    Bim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Table,
    Csv,
    Json,
}

/// Generates the struct plus `or`, which fills unset fields from another
/// instance.
macro_rules! layered {
    (
        $(#[$meta:meta])*
        pub struct $name:ident {
            $( $(#[$fmeta:meta])* pub $field:ident : Option<$ty:ty>, )*
        }
    ) => {
        $(#[$meta])*
        pub struct $name {
            $( $(#[$fmeta])* pub $field: Option<$ty>, )*
        }

        impl $name {
            pub fn or(self, fallback: Self) -> Self {
                Self { $( $field: self.$field.or(fallback.$field), )* }
            }
        }
    };
}

layered! {
    #[derive(Debug, Clone, Default, PartialEq, clap::Args, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    pub struct SynthArgs {
        /// JSON file with any of these settings (snake_case keys)
        #[arg(long)]
        #[serde(skip)]
        pub config: Option<PathBuf>,
        /// Dataset family to generate
        #[arg(long, value_enum)]
        #[serde(alias = "task")]
        pub kind: Option<TaskArg>,
        /// Normal runs (detection) or engines (rul) per split [default: 50 / 40]
        #[arg(long)]
        pub runs: Option<usize>,
        /// Fault runs per split, detection only [default: same as --runs]
        #[arg(long)]
        pub fault_runs: Option<usize>,
        /// Measurement channels, detection only [default: 52]
        #[arg(long)]
        pub channels: Option<usize>,
        /// Samples per training run, detection only [default: 500]
        #[arg(long)]
        pub train_length: Option<usize>,
        /// Samples per testing run, detection only [default: 960]
        #[arg(long)]
        pub test_length: Option<usize>,
        /// Shortest engine life in cycles, rul only [default: 150]
        #[arg(long)]
        pub min_length: Option<usize>,
        /// Longest engine life in cycles, rul only [default: 300]
        #[arg(long)]
        pub max_length: Option<usize>,
        /// Random seed [default: 0]
        #[arg(long)]
        pub seed: Option<u64>,
        /// Output directory
        #[arg(long)]
        #[serde(skip_serializing)]
        pub out: Option<PathBuf>,
    }
}

layered! {
    #[derive(Debug, Clone, Default, PartialEq, clap::Args, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    pub struct TrainArgs {
        /// JSON file with any of these settings (snake_case keys)
        #[arg(long)]
        #[serde(skip)]
        pub config: Option<PathBuf>,
        /// Model family to train
        #[arg(long, value_enum)]
        #[serde(alias = "target")]
        pub task: Option<TaskArg>,
        /// Dataset root: a TEP directory with train/ (detection) or a C-MAPSS file or directory (rul)
        #[arg(long)]
        pub data: Option<PathBuf>,
        /// Train on freshly generated synthetic data instead of --data
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub synth: Option<bool>,
        /// Synthetic normal runs or engines [default: 50 / 40]
        #[arg(long)]
        pub runs: Option<usize>,
        /// Synthetic fault runs, detection only [default: same as --runs]
        #[arg(long)]
        pub fault_runs: Option<usize>,
        /// Synthetic channel count, detection only [default: 52]
        #[arg(long)]
        pub channels: Option<usize>,
        /// Synthetic training run length, detection only [default: 500]
        #[arg(long)]
        pub train_length: Option<usize>,
        /// Synthetic shortest engine life, rul only [default: 150]
        #[arg(long)]
        pub min_length: Option<usize>,
        /// Synthetic longest engine life, rul only [default: 300]
        #[arg(long)]
        pub max_length: Option<usize>,
        /// Fault onset index overriding the TEP convention (20 train / 160 test)
        #[arg(long)]
        pub onset: Option<usize>,
        /// Seed for data generation, initialization and shuffling [default: 0]
        #[arg(long)]
        pub seed: Option<u64>,
        /// Input window length [default: 120 detection / 35 rul]
        #[arg(long)]
        pub window: Option<usize>,
        /// LSTM hidden size [default: 50]
        #[arg(long)]
        pub hidden: Option<usize>,
        /// Stacked LSTM layers [default: 2]
        #[arg(long)]
        pub layers: Option<usize>,
        /// Training epochs [default: 30]
        #[arg(long)]
        pub epochs: Option<usize>,
        /// Mini-batch size [default: 64]
        #[arg(long)]
        pub batch_size: Option<usize>,
        /// Adam step size [default: 0.001]
        #[arg(long)]
        pub learning_rate: Option<f64>,
        /// Keep every k-th training window [default: 1]
        #[arg(long)]
        pub stride: Option<usize>,
        /// Share of normal runs held out for residual statistics [default: 0.2]
        #[arg(long)]
        pub calibration_fraction: Option<f64>,
        /// Covariance regularizer as a multiple of trace/n [default: 1e-6]
        #[arg(long)]
        pub lambda_scale: Option<f64>,
        /// Calibration quantile used as decision threshold [default: 0.99]
        #[arg(long)]
        pub threshold_quantile: Option<f64>,
        /// RUL target cap in cycles [default: 130]
        #[arg(long)]
        pub rul_cap: Option<f64>,
        /// Output directory
        #[arg(long)]
        #[serde(skip_serializing)]
        pub out: Option<PathBuf>,
    }
}

layered! {
    #[derive(Debug, Clone, Default, PartialEq, clap::Args, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    pub struct AttackEvalArgs {
        /// JSON file with any of these settings (snake_case keys)
        #[arg(long)]
        #[serde(skip)]
        pub config: Option<PathBuf>,
        /// Which trained model family to attack
        #[arg(long, value_enum)]
        #[serde(alias = "target")]
        pub task: Option<TaskArg>,
        /// Directory written by `train`
        #[arg(long)]
        pub model_dir: Option<PathBuf>,
        /// Dataset root: a TEP directory with test/ (detection) or a C-MAPSS file or directory (rul)
        #[arg(long)]
        pub data: Option<PathBuf>,
        /// Evaluate on freshly generated synthetic test data instead of --data
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub synth: Option<bool>,
        /// Synthetic normal runs or engines [default: 50 / 40]
        #[arg(long)]
        pub runs: Option<usize>,
        /// Synthetic fault runs, detection only [default: same as --runs]
        #[arg(long)]
        pub fault_runs: Option<usize>,
        /// Synthetic testing run length, detection only [default: 960]
        #[arg(long)]
        pub test_length: Option<usize>,
        /// Synthetic shortest engine life, rul only [default: 150]
        #[arg(long)]
        pub min_length: Option<usize>,
        /// Synthetic longest engine life, rul only [default: 300]
        #[arg(long)]
        pub max_length: Option<usize>,
        /// Fault onset index overriding the TEP convention (20 train / 160 test)
        #[arg(long)]
        pub onset: Option<usize>,
        /// Seed for synthetic data and window subsampling [default: 0]
        #[arg(long)]
        pub seed: Option<u64>,
        /// Attack method [default: bim]
        #[arg(long, value_enum)]
        pub attack: Option<AttackArg>,
        /// Comma-separated budgets starting at 0 [default: 0,0.00025,0.00825,0.035 detection / 0,0.025,0.045,0.065 rul]
        #[arg(long, value_delimiter = ',')]
        #[serde(alias = "epsilon_list")]
        pub epsilons: Option<Vec<f64>>,
        /// Fixed BIM step size, capped at each budget [default: epsilon / iterations]
        #[arg(long)]
        pub alpha: Option<f64>,
        /// BIM iterations [default: 10]
        #[arg(long)]
        pub iterations: Option<usize>,
        /// Share of test windows to attack [default: 1]
        #[arg(long)]
        pub sample_fraction: Option<f64>,
        /// Keep every k-th test window [default: 1]
        #[arg(long)]
        pub stride: Option<usize>,
        /// Number of windows whose clean and perturbed signals are dumped [default: 0]
        #[arg(long)]
        pub dump_signals: Option<usize>,
        /// Write signal dumps in raw sensor units instead of standardized units
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub raw_units: Option<bool>,
        /// Output directory
        #[arg(long)]
        #[serde(skip_serializing)]
        pub out: Option<PathBuf>,
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct ReportArgs {
    /// report.json files written by `attack-eval`
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value = "table")]
    pub format: FormatArg,
}

/// Reads a settings struct from a JSON file.
pub fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

/// Settings from the command line, with unset fields filled from `--config`.
pub trait Layered: Sized + serde::de::DeserializeOwned {
    fn config_path(&self) -> Option<&Path>;
    fn layer(self, file: Self) -> Self;

    fn resolve(self) -> Result<Self, CliError> {
        match self.config_path() {
            Some(path) => {
                let file = read_config(path)?;
                Ok(self.layer(file))
            }
            None => Ok(self),
        }
    }
}

macro_rules! impl_layered {
    ($($name:ident),*) => {$(
        impl Layered for $name {
            fn config_path(&self) -> Option<&Path> {
                self.config.as_deref()
            }

            fn layer(self, file: Self) -> Self {
                self.or(file)
            }
        }
    )*};
}

impl_layered!(SynthArgs, TrainArgs, AttackEvalArgs);

pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required setting --{flag}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_the_file() {
        let flags = TrainArgs {
            epochs: Some(3),
            ..Default::default()
        };
        let file: TrainArgs = serde_json::from_str(r#"{"epochs": 9, "hidden": 12, "task": "rul"}"#).unwrap();
        let merged = flags.or(file);
        assert_eq!(merged.epochs, Some(3));
        assert_eq!(merged.hidden, Some(12));
        assert_eq!(merged.task, Some(TaskArg::Rul));
    }

    #[test]
    fn campaign_file_keys_are_accepted() {
        let text = r#"{"attack": "fgsm", "epsilon_list": [0, 0.1], "alpha": 0.01, "iterations": 4, "seed": 3, "target": "detection"}"#;
        let args: AttackEvalArgs = serde_json::from_str(text).unwrap();
        assert_eq!(args.attack, Some(AttackArg::Fgsm));
        assert_eq!(args.epsilons, Some(vec![0.0, 0.1]));
        assert_eq!(args.task, Some(TaskArg::Detection));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<SynthArgs>(r#"{"rnus": 3}"#).is_err());
    }

    #[test]
    fn paths_never_enter_the_recorded_config() {
        let args = SynthArgs {
            out: Some("x".into()),
            config: Some("c.json".into()),
            seed: Some(1),
            ..Default::default()
        };
        let json = serde_json::to_string(&args).unwrap();
        assert!(!json.contains("c.json") && !json.contains("\"out\""), "{json}");
    }
}
