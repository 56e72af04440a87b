//! Experiment configs: a TOML file names one study kind and its full
//! parameter grid; the runner writes one table-shaped CSV plus the raw
//! reports as JSON.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use streamspc::simulation::{
    run_arl_experiment, run_diagnosis_experiment, run_type1_experiment, write_arl_csv,
    write_diagnosis_csv, write_type1_csv, ArlReport, DiagnosisMethod, DiagnosisReport,
    MonitorMethod, ScenarioKind, ScenarioSpec, Type1Kind, Type1Report,
};

use crate::CliError;

fn default_blocks() -> usize {
    12
}

fn default_rho() -> f64 {
    0.5
}

fn default_monitor_methods() -> Vec<MonitorMethod> {
    vec![MonitorMethod::Apc, MonitorMethod::PcaT2q]
}

fn default_diagnosis_methods() -> Vec<DiagnosisMethod> {
    vec![DiagnosisMethod::Pcsr, DiagnosisMethod::Leb]
}

/// One experiment description. The `kind` key selects the study; list-valued
/// fields form a full grid, one report per grid cell.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    /// False-alarm-rate study: empirical exceedance of the analytic limit.
    Type1 {
        variant: Type1Kind,
        p: Vec<usize>,
        nu: Vec<f64>,
        alpha: f64,
        reps: usize,
        seed: u64,
    },
    /// Run-length study: calibrate to a target in-control ARL, then measure
    /// detection delay per shift size.
    Arl {
        scenario: ScenarioKind,
        p: usize,
        #[serde(default = "default_blocks")]
        blocks: usize,
        #[serde(default = "default_rho")]
        rho: f64,
        shift_fraction: f64,
        delta: Vec<f64>,
        target_arl: f64,
        reps: usize,
        seed: u64,
        #[serde(default = "default_monitor_methods")]
        methods: Vec<MonitorMethod>,
    },
    /// Diagnosis-accuracy study: selection quality on post-change windows.
    Diagnosis {
        scenario: ScenarioKind,
        p: usize,
        #[serde(default = "default_blocks")]
        blocks: usize,
        #[serde(default = "default_rho")]
        rho: f64,
        shift_fraction: Vec<f64>,
        delta: Vec<f64>,
        reps: usize,
        seed: u64,
        #[serde(default = "default_diagnosis_methods")]
        methods: Vec<DiagnosisMethod>,
    },
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Type1 { seed, .. }
            | ExperimentConfig::Arl { seed, .. }
            | ExperimentConfig::Diagnosis { seed, .. } => *seed,
        }
    }
}

/// CSV and JSON paths produced for one config.
pub struct ExperimentOutput {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub cells: usize,
}

/// Run every grid cell, then write `<stem>.csv` (table) and `<stem>.json`
/// (raw reports) under `out_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    stem: &str,
    out_dir: &Path,
) -> Result<ExperimentOutput, CliError> {
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let json_path = out_dir.join(format!("{stem}.json"));
    let write = |csv: String, json: String, cells: usize| -> Result<ExperimentOutput, CliError> {
        std::fs::write(&csv_path, csv)
            .map_err(|e| CliError::data(format!("{}: {e}", csv_path.display())))?;
        std::fs::write(&json_path, json)
            .map_err(|e| CliError::data(format!("{}: {e}", json_path.display())))?;
        Ok(ExperimentOutput { csv: csv_path.clone(), json: json_path.clone(), cells })
    };
    match config {
        ExperimentConfig::Type1 { variant, p, nu, alpha, reps, seed } => {
            let mut reports: Vec<Type1Report> = Vec::new();
            for &p in p {
                for &nu in nu {
                    reports.push(
                        run_type1_experiment(*variant, p, nu, *alpha, *reps, *seed)
                            .map_err(CliError::from_core_data)?,
                    );
                }
            }
            let mut csv = Vec::new();
            write_type1_csv(&reports, &mut csv).expect("vec write cannot fail");
            let json = serde_json::to_string_pretty(&reports).expect("report serialization");
            write(String::from_utf8(csv).expect("csv is utf-8"), json, reports.len())
        }
        ExperimentConfig::Arl {
            scenario,
            p,
            blocks,
            rho,
            shift_fraction,
            delta,
            target_arl,
            reps,
            seed,
            methods,
        } => {
            let mut reports: Vec<ArlReport> = Vec::new();
            for &delta in delta {
                let spec = ScenarioSpec {
                    kind: *scenario,
                    p: *p,
                    blocks: *blocks,
                    rho: *rho,
                    shift_fraction: *shift_fraction,
                    delta,
                    seed: *seed,
                };
                reports.push(
                    run_arl_experiment(&spec, methods, *target_arl, *reps, *seed)
                        .map_err(CliError::from_core_data)?,
                );
            }
            let mut csv = Vec::new();
            write_arl_csv(&reports, &mut csv).expect("vec write cannot fail");
            let json = serde_json::to_string_pretty(&reports).expect("report serialization");
            write(String::from_utf8(csv).expect("csv is utf-8"), json, reports.len())
        }
        ExperimentConfig::Diagnosis {
            scenario,
            p,
            blocks,
            rho,
            shift_fraction,
            delta,
            reps,
            seed,
            methods,
        } => {
            let mut reports: Vec<DiagnosisReport> = Vec::new();
            for &ps in shift_fraction {
                for &delta in delta {
                    let spec = ScenarioSpec {
                        kind: *scenario,
                        p: *p,
                        blocks: *blocks,
                        rho: *rho,
                        shift_fraction: ps,
                        delta,
                        seed: *seed,
                    };
                    reports.push(
                        run_diagnosis_experiment(&spec, methods, *reps, *seed)
                            .map_err(CliError::from_core_data)?,
                    );
                }
            }
            let mut csv = Vec::new();
            write_diagnosis_csv(&reports, &mut csv).expect("vec write cannot fail");
            let json = serde_json::to_string_pretty(&reports).expect("report serialization");
            write(String::from_utf8(csv).expect("csv is utf-8"), json, reports.len())
        }
    }
}
