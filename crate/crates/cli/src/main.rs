//! Batch front end for the monitoring pipeline: fit and persist PC models,
//! calibrate control limits, stream observation files through the chart,
//! diagnose post-alarm windows, and run the simulation studies.
//!
//! Exit codes: 0 clean, 10 alarm raised, 2 usage error, 3 data error.

mod experiment;
mod io;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use streamspc::diagnosis::{diagnose, diagnose_leb, PathConfig};
use streamspc::monitoring::{
    calibrate, monitor_step, write_chart_csv, AlarmTarget, CalibrationMode, CalibrationReport,
    EwmaVarianceMode, MonitorConfig, MonitorState, Observation,
};
use streamspc::pca::PCModel;

use crate::experiment::ExperimentConfig;
use crate::io::Table;
use crate::manifest::RunManifest;

const EXIT_ALARM: u8 = 10;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;

/// Failure with the exit code it maps to.
pub struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError { message: message.into(), code: EXIT_USAGE }
    }

    fn data(message: impl Into<String>) -> CliError {
        CliError { message: message.into(), code: EXIT_DATA }
    }

    /// Core errors raised while consuming input files.
    fn from_core_data(err: streamspc::Error) -> CliError {
        CliError::data(err.to_string())
    }

    /// Core errors raised while validating caller-supplied parameters.
    fn from_core_usage(err: streamspc::Error) -> CliError {
        CliError::usage(err.to_string())
    }
}

#[derive(Parser)]
#[command(name = "streamspc", version, about = "Multistream monitoring and diagnosis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a principal component model from in-control observations
    Fit(FitArgs),
    /// Compute the control limit for a fitted model
    Calibrate(CalibrateArgs),
    /// Stream observation files through the control chart
    Monitor(MonitorArgs),
    /// Recover the shifted variables from a post-alarm window
    Diagnose(DiagnoseArgs),
    /// Run a simulation study described by a TOML config
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct FitArgs {
    /// In-control observations, one row per observation
    input: PathBuf,
    /// First line holds column names
    #[arg(long)]
    header: bool,
    /// Divide each column by its sample standard deviation before fitting;
    /// later inputs must be scaled the same way (scales recorded in the
    /// manifest)
    #[arg(long)]
    standardize: bool,
    /// Absolute eigenvalue floor (default: 1e-8 of the largest eigenvalue)
    #[arg(long)]
    eig_floor: Option<f64>,
    /// Where to write the model JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group = ArgGroup::new("threshold").required(true))]
#[command(group = ArgGroup::new("alarm").required(true))]
struct CalibrateArgs {
    /// Fitted model JSON
    model: PathBuf,
    /// EWMA smoothing weight in (0, 1]
    #[arg(long)]
    gamma: f64,
    /// Soft-threshold applied to squared standardized scores
    #[arg(long, group = "threshold")]
    nu: Option<f64>,
    /// Derive nu from a per-stream significance level instead
    #[arg(long, group = "threshold")]
    nu_significance: Option<f64>,
    /// Per-step false alarm rate
    #[arg(long, group = "alarm")]
    alpha: Option<f64>,
    /// Target in-control average run length instead of alpha
    #[arg(long, group = "alarm")]
    target_arl: Option<f64>,
    /// How the limit is computed
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    /// EWMA variance convention used in standardization
    #[arg(long, value_enum, default_value_t = VarianceArg::Paper)]
    variance_mode: VarianceArg,
    /// Monte-Carlo replications (ignored by the analytic mode)
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Where to write the calibration JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Analytic,
    MonteCarlo,
}

impl From<ModeArg> for CalibrationMode {
    fn from(arg: ModeArg) -> CalibrationMode {
        match arg {
            ModeArg::Auto => CalibrationMode::Auto,
            ModeArg::Analytic => CalibrationMode::Analytic,
            ModeArg::MonteCarlo => CalibrationMode::MonteCarlo,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceArg {
    Paper,
    Asymptotic,
    ExactTimeVarying,
}

impl From<VarianceArg> for EwmaVarianceMode {
    fn from(arg: VarianceArg) -> EwmaVarianceMode {
        match arg {
            VarianceArg::Paper => EwmaVarianceMode::Paper,
            VarianceArg::Asymptotic => EwmaVarianceMode::Asymptotic,
            VarianceArg::ExactTimeVarying => EwmaVarianceMode::ExactTimeVarying,
        }
    }
}

#[derive(Args)]
struct MonitorArgs {
    /// Fitted model JSON
    model: PathBuf,
    /// Calibration JSON from `calibrate`
    calibration: PathBuf,
    /// Observation files, monitored in order as one stream
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Inputs are images (plain-text PGM P2 or a CSV pixel matrix), one
    /// observation per image row
    #[arg(long)]
    image: bool,
    /// First line of each CSV holds column names
    #[arg(long)]
    header: bool,
    /// Include per-stream contribution columns in the chart CSV
    #[arg(long)]
    contributions: bool,
    /// Where to write the chart CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Fitted model JSON
    model: PathBuf,
    /// Post-alarm out-of-control window, one row per observation
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Pcsr)]
    method: MethodArg,
    /// Regularization-path grid size
    #[arg(long, default_value_t = 50)]
    path_points: usize,
    /// First line holds column names (used in the report table)
    #[arg(long)]
    header: bool,
    /// Input is an image (plain-text PGM P2 or a CSV pixel matrix)
    #[arg(long)]
    image: bool,
    /// Where to write the diagnosis JSON (printed table is always shown)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    /// Whitened PC-domain recovery
    Pcsr,
    /// Per-coordinate benchmark in the original domain
    Leb,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment description
    config: PathBuf,
    /// Directory for the CSV/JSON outputs (default: current directory)
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Calibrate(args) => cmd_calibrate(&args),
        Command::Monitor(args) => cmd_monitor(&args),
        Command::Diagnose(args) => cmd_diagnose(&args),
        Command::Experiment(args) => cmd_experiment(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn load_model(path: &Path) -> Result<PCModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    PCModel::from_json(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn cmd_fit(args: &FitArgs) -> Result<u8, CliError> {
    let Table { mut data, names } = io::read_matrix_csv(&args.input, args.header)?;
    let mut scales: Option<Vec<f64>> = None;
    if args.standardize {
        let n = data.nrows();
        if n < 2 {
            return Err(CliError::data(format!(
                "{}: need at least 2 rows to standardize",
                args.input.display()
            )));
        }
        let mut sds = Vec::with_capacity(data.ncols());
        for j in 0..data.ncols() {
            let col = data.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            if !(var > 0.0) {
                let name = names
                    .as_ref()
                    .map_or_else(|| format!("column {}", j + 1), |ns| ns[j].clone());
                return Err(CliError::data(format!(
                    "{}: {name} has zero variance, cannot standardize",
                    args.input.display()
                )));
            }
            sds.push(var.sqrt());
        }
        for j in 0..data.ncols() {
            data.column_mut(j).scale_mut(1.0 / sds[j]);
        }
        scales = Some(sds);
    }
    if let Some(floor) = args.eig_floor {
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(CliError::usage(format!("--eig-floor must be positive, got {floor}")));
        }
    }
    let model = match args.eig_floor {
        Some(floor) => PCModel::fit(&data, floor),
        None => PCModel::fit_default_floor(&data),
    }
    .map_err(CliError::from_core_data)?;
    model
        .save(&args.out)
        .map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
    let mut manifest = RunManifest::new("fit", &[&args.input], &[&args.out]);
    manifest.column_sds = scales;
    manifest.write_beside(&args.out)?;
    println!(
        "fitted model: {} streams from {} observations -> {}",
        model.dim(),
        data.nrows(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<u8, CliError> {
    let model = load_model(&args.model)?;
    let nu = match (args.nu, args.nu_significance) {
        (Some(nu), None) => nu,
        (None, Some(sig)) => {
            streamspc::monitoring::nu_from_significance(sig).map_err(CliError::from_core_usage)?
        }
        _ => unreachable!("clap group enforces exactly one"),
    };
    let target = match (args.alpha, args.target_arl) {
        (Some(alpha), None) => AlarmTarget::Alpha(alpha),
        (None, Some(arl)) => AlarmTarget::TargetArl(arl),
        _ => unreachable!("clap group enforces exactly one"),
    };
    let cfg = MonitorConfig::new(args.gamma, nu, target)
        .map_err(CliError::from_core_usage)?
        .with_variance_mode(args.variance_mode.into())
        .with_calibration(args.mode.into());
    let report =
        calibrate(&model, &cfg, args.reps, args.seed).map_err(CliError::from_core_usage)?;
    std::fs::write(&args.out, report.to_json() + "\n")
        .map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
    RunManifest::new("calibrate", &[&args.model], &[&args.out])
        .with_seed(args.seed)
        .write_beside(&args.out)?;
    match report.empirical_arl {
        Some(arl) => println!(
            "control limit {:.6} ({:?} calibration, empirical in-control ARL {arl:.1}) -> {}",
            report.r0,
            report.mode,
            args.out.display()
        ),
        None => println!(
            "control limit {:.6} ({:?} calibration) -> {}",
            report.r0,
            report.mode,
            args.out.display()
        ),
    }
    Ok(0)
}

fn load_calibration(path: &Path) -> Result<CalibrationReport, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    CalibrationReport::from_json(&text)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_observations(path: &Path, image: bool, header: bool) -> Result<Table, CliError> {
    if image {
        io::read_image_matrix(path)
    } else {
        io::read_matrix_csv(path, header)
    }
}

fn cmd_monitor(args: &MonitorArgs) -> Result<u8, CliError> {
    let model = load_model(&args.model)?;
    let report = load_calibration(&args.calibration)?;
    let cfg = MonitorConfig::new(report.gamma, report.nu, AlarmTarget::Alpha(report.alpha))
        .map_err(CliError::from_core_data)?
        .with_variance_mode(report.variance_mode);
    let mut state = MonitorState::new(model.dim(), report.r0).map_err(CliError::from_core_data)?;
    let mut points = Vec::new();
    for input in &args.inputs {
        let table = read_observations(input, args.image, args.header)?;
        if table.data.ncols() != model.dim() {
            return Err(CliError::data(format!(
                "{}: observations have {} streams, model expects {}",
                input.display(),
                table.data.ncols(),
                model.dim()
            )));
        }
        for i in 0..table.data.nrows() {
            let obs = Observation {
                values: table.data.row(i).transpose(),
                t: state.t() + 1,
            };
            let point = monitor_step(&mut state, &model, &obs, &cfg, args.contributions)
                .map_err(CliError::from_core_data)?;
            points.push(point);
        }
    }
    let mut csv = Vec::new();
    write_chart_csv(&points, &mut csv).expect("vec write cannot fail");
    std::fs::write(&args.out, csv)
        .map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
    let inputs: Vec<&Path> = std::iter::once(args.model.as_path())
        .chain(std::iter::once(args.calibration.as_path()))
        .chain(args.inputs.iter().map(PathBuf::as_path))
        .collect();
    RunManifest::new("monitor", &inputs, &[&args.out]).write_beside(&args.out)?;
    match state.first_alarm() {
        Some(t) => {
            println!("alarm at t={t} (of {} observations) -> {}", points.len(), args.out.display());
            Ok(EXIT_ALARM)
        }
        None => {
            println!("no alarm in {} observations -> {}", points.len(), args.out.display());
            Ok(0)
        }
    }
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<u8, CliError> {
    let model = load_model(&args.model)?;
    let table = read_observations(&args.input, args.image, args.header)?;
    if table.data.ncols() != model.dim() {
        return Err(CliError::data(format!(
            "{}: observations have {} streams, model expects {}",
            args.input.display(),
            table.data.ncols(),
            model.dim()
        )));
    }
    let cfg = PathConfig { n_points: args.path_points, ..PathConfig::default() };
    let result = match args.method {
        MethodArg::Pcsr => diagnose(&model, &table.data, &cfg),
        MethodArg::Leb => diagnose_leb(&model, &table.data, &cfg),
    }
    .map_err(CliError::from_core_data)?;
    if result.best.support.is_empty() {
        println!("no variables selected (window of {} observations)", table.data.nrows());
    } else {
        println!(
            "selected {} of {} variables (r = {:.6}, BIC = {:.4}):",
            result.best.support.len(),
            model.dim(),
            result.best.r,
            result.best_bic
        );
        println!("{:>8}  {:<20} {:>12}", "index", "variable", "shift");
        for &j in &result.best.support {
            let name = table
                .names
                .as_ref()
                .map_or_else(|| format!("x{j}"), |ns| ns[j].clone());
            println!("{:>8}  {:<20} {:>12.6}", j, name, result.best.mu_hat[j]);
        }
    }
    if let Some(out) = &args.out {
        std::fs::write(out, result.to_json() + "\n")
            .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
        RunManifest::new("diagnose", &[&args.model, &args.input], &[out]).write_beside(out)?;
    }
    Ok(0)
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<u8, CliError> {
    let config = ExperimentConfig::load(&args.config)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::data(format!("{}: {e}", args.out_dir.display())))?;
    let stem = args
        .config
        .file_stem()
        .map_or_else(|| "experiment".to_string(), |s| s.to_string_lossy().into_owned());
    let output = experiment::run_experiment(&config, &stem, &args.out_dir)?;
    RunManifest::new("experiment", &[&args.config], &[&output.csv, &output.json])
        .with_seed(config.seed())
        .with_config(&args.config)
        .write_beside(&output.csv)?;
    println!(
        "{} cells -> {} and {}",
        output.cells,
        output.csv.display(),
        output.json.display()
    );
    Ok(0)
}
