//! Command-line front end: simulate gaugings, calibrate, verify, analyze
//! accuracy, and map points through the kinematics, all over JSON files.
//!
//! Exit codes: 0 success, 2 configuration problem, 3 reachability problem,
//! 4 measurement-data problem, 5 solver failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use orthocal::accuracy::{
    analytic_covariance_for, monte_carlo_covariance, AccuracyReport, NoiseModel,
};
use orthocal::differential::{posture_jacobian, Posture};
use orthocal::identification::{
    build_system, expected_improvement, solve_linear, solve_nonlinear, CalibrationResult,
    IdentificationError, ImprovementTable, ParameterSubset, SolveMethod,
};
use orthocal::kinematics::{
    constraint_residuals, direct_kinematics, inverse_kinematics, CartesianPoint,
    ConfigurationIndices, GeometryConfig, JointVector, KinematicsError, ParameterDeltas,
    ParameterSet,
};
use orthocal::measurement::{
    predict_deviations_exact_with, simulate_readings_with, MeasurementError, MeasurementSet,
    PostureCommandMode, SimulationOptions,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_REACH: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_SOLVER: u8 = 5;

#[derive(Parser)]
#[command(name = "orthocal", version, about = "Leg-observation calibration toolkit for Orthoglide-type translational parallel manipulators")]
struct Cli {
    /// Machine geometry JSON; defaults to the built-in prototype.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one gauging procedure and write the measurement set.
    Simulate(SimulateArgs),
    /// Identify parameters from a measurement file.
    Calibrate(CalibrateArgs),
    /// Compare a measurement file against a previous calibration.
    Verify(VerifyArgs),
    /// Parameter-uncertainty analysis under gauge noise.
    Accuracy(AccuracyArgs),
    /// Inverse kinematics: TCP position (mm) to joint readings.
    Ik(PointArgs),
    /// Direct kinematics: joint readings (mm, absolute) to TCP position.
    Fk(PointArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// True parameter deltas JSON ({"drho_mm":[..],"dL_mm":[..]}).
    #[arg(long)]
    params: PathBuf,
    #[arg(long = "sigma-mm", default_value_t = 0.0)]
    sigma_mm: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: u32,
    /// Round each raw reading to this dial resolution (off by default).
    #[arg(long = "quantize-mm")]
    quantize_mm: Option<f64>,
    #[arg(long = "command-mode", value_enum, default_value_t = CommandModeArg::CartesianNominalIk)]
    command_mode: CommandModeArg,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Measurement-set JSON file.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = SubsetArg::Full)]
    subset: SubsetArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Linear)]
    method: MethodArg,
    /// Write the calibration report JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Dump the posture Jacobians and the system matrix as JSON.
    #[arg(long = "dump-jacobian")]
    dump_jacobian: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Measurement-set JSON file to verify.
    input: PathBuf,
    /// Calibration report written by `calibrate` (predicts the residuals
    /// that remain after compensation).
    #[arg(long, conflicts_with = "params")]
    result: Option<PathBuf>,
    /// Bare parameter deltas (predicts the deviations of an uncompensated
    /// machine with those parameters).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AccuracyArgs {
    #[arg(long = "sigma-mm", default_value_t = 0.01)]
    sigma_mm: f64,
    #[arg(long, default_value_t = 1)]
    repeats: u32,
    /// Run a Monte Carlo cross-check with this many trials.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SubsetArg::Full)]
    subset: SubsetArg,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PointArgs {
    x: f64,
    y: f64,
    z: f64,
    /// Parameter deltas JSON; nominal when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsetArg {
    Full,
    Rho,
    Length,
}

impl From<SubsetArg> for ParameterSubset {
    fn from(s: SubsetArg) -> Self {
        match s {
            SubsetArg::Full => ParameterSubset::Full,
            SubsetArg::Rho => ParameterSubset::OffsetsOnly,
            SubsetArg::Length => ParameterSubset::LengthsOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Linear,
    Nonlinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum CommandModeArg {
    CartesianNominalIk,
    DirectJoint,
}

impl From<CommandModeArg> for PostureCommandMode {
    fn from(m: CommandModeArg) -> Self {
        match m {
            CommandModeArg::CartesianNominalIk => PostureCommandMode::CartesianNominalIk,
            CommandModeArg::DirectJoint => PostureCommandMode::DirectJoint,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

type CmdResult = Result<(), Failure>;

fn kinematics_failure(err: KinematicsError) -> Failure {
    match err {
        KinematicsError::InvalidConfig(_) => Failure::new(EXIT_CONFIG, err.to_string()),
        _ => Failure::new(EXIT_REACH, err.to_string()),
    }
}

fn measurement_failure(err: MeasurementError) -> Failure {
    match err {
        MeasurementError::Unreachable { .. } | MeasurementError::GaugeMiss { .. } => {
            Failure::new(EXIT_REACH, err.to_string())
        }
        _ => Failure::new(EXIT_DATA, err.to_string()),
    }
}

fn identification_failure(err: IdentificationError) -> Failure {
    match err {
        IdentificationError::Measurement(inner) => measurement_failure(inner),
        _ => Failure::new(EXIT_SOLVER, err.to_string()),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<GeometryConfig, Failure> {
    let config = match path {
        None => GeometryConfig::prototype(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                Failure::new(EXIT_CONFIG, format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                Failure::new(EXIT_CONFIG, format!("invalid config {}: {e}", p.display()))
            })?
        }
    };
    config
        .validate()
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    Ok(config)
}

fn load_params(path: &Path, config: &GeometryConfig) -> Result<ParameterSet, Failure> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::new(EXIT_CONFIG, format!("cannot read parameters {}: {e}", path.display()))
    })?;
    let deltas: ParameterDeltas = serde_json::from_str(&text).map_err(|e| {
        Failure::new(EXIT_CONFIG, format!("invalid parameters {}: {e}", path.display()))
    })?;
    let params = deltas.into_parameter_set(config);
    if !params.is_valid() {
        return Err(Failure::new(
            EXIT_CONFIG,
            "invalid parameters: every leg length must stay positive",
        ));
    }
    Ok(params)
}

fn load_measurements(path: &Path) -> Result<MeasurementSet, Failure> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::new(EXIT_DATA, format!("cannot read measurements {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::new(EXIT_DATA, format!("invalid measurement set {}: {e}", path.display()))
    })
}

fn write_output(path: &Path, payload: &str) -> CmdResult {
    fs::write(path, payload)
        .map_err(|e| Failure::new(1, format!("cannot write {}: {e}", path.display())))
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Everything `calibrate` learned, in one self-contained file.
#[derive(Serialize, Deserialize)]
struct CalibrationReport {
    subset: ParameterSubset,
    method: SolveMethod,
    identified: ParameterDeltas,
    iterations: usize,
    residuals_before_mm: Vec<f64>,
    residuals_after_mm: Vec<f64>,
    rms_before_mm: f64,
    rms_after_mm: f64,
    singular_values: Vec<f64>,
    improvement: ImprovementTable,
}

impl CalibrationReport {
    fn from_result(
        result: &CalibrationResult,
        measurements: &MeasurementSet,
        singular_values: Vec<f64>,
        config: &GeometryConfig,
    ) -> Self {
        CalibrationReport {
            subset: result.subset,
            method: result.method,
            identified: result.identified.to_deltas(config),
            iterations: result.iterations,
            residuals_before_mm: result.residuals_before.iter().copied().collect(),
            residuals_after_mm: result.residuals_after.iter().copied().collect(),
            rms_before_mm: result.rms_before_mm,
            rms_after_mm: result.rms_after_mm,
            singular_values,
            improvement: expected_improvement(measurements, result),
        }
    }
}

#[derive(Serialize)]
struct VerifyRow {
    label: String,
    measured_mm: f64,
    predicted_mm: f64,
    difference_mm: f64,
}

#[derive(Serialize)]
struct VerifyReport {
    prediction_source: String,
    rows: Vec<VerifyRow>,
    measured_rms_mm: f64,
    measured_max_mm: f64,
    predicted_rms_mm: f64,
    difference_rms_mm: f64,
    difference_max_mm: f64,
}

#[derive(Serialize)]
struct AccuracyFileReport {
    analytic: AccuracyReport,
    monte_carlo: Option<AccuracyReport>,
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn print_measurement_table(set: &MeasurementSet) {
    println!("measurement   value [mm]");
    for m in set.entries() {
        println!("{:<12}  {:+8.4}", m.label(), m.value_mm);
    }
}

fn print_calibration_tables(report: &CalibrationReport, measurements: &MeasurementSet) {
    let d = &report.identified;
    println!(
        "identified parameters [mm]  (subset: {}, method: {})",
        report.subset, report.method
    );
    println!(
        "  drho = ({:+.3}, {:+.3}, {:+.3})   dL = ({:+.3}, {:+.3}, {:+.3})",
        d.joint_offsets_mm[0],
        d.joint_offsets_mm[1],
        d.joint_offsets_mm[2],
        d.leg_length_deltas_mm[0],
        d.leg_length_deltas_mm[1],
        d.leg_length_deltas_mm[2],
    );
    println!();
    println!("residuals [mm]");
    println!("measurement    measured   after-fit");
    for (i, m) in measurements.entries().iter().enumerate() {
        println!(
            "{:<12}  {:+9.4}  {:+9.4}",
            m.label(),
            report.residuals_before_mm[i],
            report.residuals_after_mm[i]
        );
    }
    println!(
        "r.m.s.        {:9.4}  {:9.4}",
        report.rms_before_mm, report.rms_after_mm
    );
    println!();
    println!("aggregated (+ minus -) deviations [mm]");
    println!("pair       before     after");
    for row in &report.improvement.rows {
        println!(
            "d{}_{}    {:+8.3}  {:+8.3}",
            row.dir, row.leg, row.before_mm, row.after_mm
        );
    }
    println!(
        "r.m.s.    {:8.3}  {:8.3}",
        report.improvement.rms_before_mm, report.improvement.rms_after_mm
    );
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> CmdResult {
    let config = load_config(&cli.config)?;
    let params = load_params(&args.params, &config)?;
    let options = SimulationOptions {
        command_mode: args.command_mode.into(),
        quantization_mm: args.quantize_mm,
    };
    if args.repeats < 1 {
        return Err(Failure::new(EXIT_CONFIG, "--repeats must be at least 1"));
    }
    if args.sigma_mm < 0.0 {
        return Err(Failure::new(EXIT_CONFIG, "--sigma-mm must be non-negative"));
    }
    let set = simulate_readings_with(
        &params,
        &config,
        args.sigma_mm,
        args.seed,
        args.repeats,
        options,
    )
    .map_err(measurement_failure)?;
    let payload = to_pretty_json(&set);
    match &args.output {
        Some(path) => write_output(path, &payload)?,
        None => print!("{payload}"),
    }
    if !cli.json && args.output.is_some() {
        print_measurement_table(&set);
    }
    Ok(())
}

fn cmd_calibrate(cli: &Cli, args: &CalibrateArgs) -> CmdResult {
    let config = load_config(&cli.config)?;
    let measurements = load_measurements(&args.input)?;
    let system = build_system(&measurements, &config);
    let subset: ParameterSubset = args.subset.into();

    if let Some(path) = &args.dump_jacobian {
        #[derive(Serialize)]
        struct JacobianDump {
            postures: Vec<(String, [[f64; 6]; 3])>,
            system_matrix: Vec<[f64; 6]>,
        }
        let dump = JacobianDump {
            postures: Posture::ALL
                .iter()
                .map(|p| (p.to_string(), posture_jacobian(*p, &config).rows()))
                .collect(),
            system_matrix: (0..12)
                .map(|r| std::array::from_fn(|c| system.matrix[(r, c)]))
                .collect(),
        };
        write_output(path, &to_pretty_json(&dump))?;
    }

    let result = match args.method {
        MethodArg::Linear => solve_linear(&system, subset).map_err(identification_failure)?,
        MethodArg::Nonlinear => {
            let initial = solve_linear(&system, subset)
                .map_err(identification_failure)?
                .identified;
            solve_nonlinear(&measurements, &config, subset, &initial)
                .map_err(identification_failure)?
        }
    };
    let report = CalibrationReport::from_result(
        &result,
        &measurements,
        system.singular_values(subset),
        &config,
    );
    let payload = to_pretty_json(&report);
    if let Some(path) = &args.output {
        write_output(path, &payload)?;
    }
    if cli.json {
        print!("{payload}");
    } else {
        print_calibration_tables(&report, &measurements);
    }
    Ok(())
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> CmdResult {
    let config = load_config(&cli.config)?;
    let measurements = load_measurements(&args.input)?;
    let measured = measurements.values();

    let (predicted, source): ([f64; 12], String) = match (&args.result, &args.params) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::new(EXIT_DATA, format!("cannot read result {}: {e}", path.display()))
            })?;
            let report: CalibrationReport = serde_json::from_str(&text).map_err(|e| {
                Failure::new(EXIT_DATA, format!("invalid result {}: {e}", path.display()))
            })?;
            if report.residuals_after_mm.len() != 12 {
                return Err(Failure::new(EXIT_DATA, "result file carries malformed residuals"));
            }
            let mut v = [0.0; 12];
            v.copy_from_slice(&report.residuals_after_mm);
            (v, format!("post-compensation residuals from {}", path.display()))
        }
        (None, Some(path)) => {
            let params = load_params(path, &config)?;
            let set = predict_deviations_exact_with(
                &params,
                &config,
                PostureCommandMode::CartesianNominalIk,
            )
            .map_err(measurement_failure)?;
            (set.values(), format!("exact model with parameters from {}", path.display()))
        }
        _ => {
            return Err(Failure::new(
                EXIT_CONFIG,
                "verify needs exactly one of --result or --params",
            ))
        }
    };

    let difference: Vec<f64> = measured
        .iter()
        .zip(predicted)
        .map(|(m, p)| m - p)
        .collect();
    let report = VerifyReport {
        prediction_source: source,
        rows: measurements
            .entries()
            .iter()
            .zip(predicted)
            .map(|(m, p)| VerifyRow {
                label: m.label(),
                measured_mm: m.value_mm,
                predicted_mm: p,
                difference_mm: m.value_mm - p,
            })
            .collect(),
        measured_rms_mm: rms(&measured),
        measured_max_mm: max_abs(&measured),
        predicted_rms_mm: rms(&predicted),
        difference_rms_mm: rms(&difference),
        difference_max_mm: max_abs(&difference),
    };

    let payload = to_pretty_json(&report);
    if let Some(path) = &args.output {
        write_output(path, &payload)?;
    }
    if cli.json {
        print!("{payload}");
    } else {
        println!("prediction: {}", report.prediction_source);
        println!("measurement    measured  predicted  difference");
        for row in &report.rows {
            println!(
                "{:<12}  {:+9.4}  {:+9.4}  {:+10.4}",
                row.label, row.measured_mm, row.predicted_mm, row.difference_mm
            );
        }
        println!(
            "measured: rms {:.4} mm, max {:.4} mm",
            report.measured_rms_mm, report.measured_max_mm
        );
        println!(
            "agreement: rms {:.4} mm, max {:.4} mm",
            report.difference_rms_mm, report.difference_max_mm
        );
    }
    Ok(())
}

fn cmd_accuracy(cli: &Cli, args: &AccuracyArgs) -> CmdResult {
    let config = load_config(&cli.config)?;
    if args.sigma_mm < 0.0 {
        return Err(Failure::new(EXIT_CONFIG, "--sigma-mm must be non-negative"));
    }
    if args.repeats < 1 {
        return Err(Failure::new(EXIT_CONFIG, "--repeats must be at least 1"));
    }
    let noise = NoiseModel::new(args.sigma_mm, args.repeats);
    let subset: ParameterSubset = args.subset.into();
    // the system matrix only depends on the geometry
    let probe = MeasurementSet::from_values(orthocal::measurement::Provenance::Predicted, [0.0; 12]);
    let system = build_system(&probe, &config);
    let analytic = analytic_covariance_for(&system, &noise, subset)
        .map_err(|e| Failure::new(EXIT_SOLVER, e.to_string()))?;

    let monte_carlo = match args.trials {
        None => None,
        Some(trials) => {
            if trials < 100 {
                return Err(Failure::new(EXIT_CONFIG, "--trials must be at least 100"));
            }
            Some(
                monte_carlo_covariance(
                    &ParameterSet::nominal(&config),
                    &config,
                    &noise,
                    trials,
                    args.seed,
                    subset,
                )
                .map_err(|e| Failure::new(EXIT_SOLVER, e.to_string()))?,
            )
        }
    };

    let report = AccuracyFileReport { analytic, monte_carlo };
    let payload = to_pretty_json(&report);
    if let Some(path) = &args.output {
        write_output(path, &payload)?;
    }
    if cli.json {
        print!("{payload}");
    } else {
        let names = ["drho_x", "drho_y", "drho_z", "dL_x", "dL_y", "dL_z"];
        println!(
            "parameter std devs [mm] at sigma = {} mm, repeats = {} (subset: {})",
            args.sigma_mm, args.repeats, subset
        );
        println!(
            "parameter   analytic  uncorrelated{}",
            if report.monte_carlo.is_some() { "  monte-carlo" } else { "" }
        );
        for i in 0..6 {
            let unc = report
                .analytic
                .std_devs_uncorrelated_mm
                .map(|u| format!("{:12.4}", u[i]))
                .unwrap_or_default();
            let mc = report
                .monte_carlo
                .as_ref()
                .map(|m| format!("  {:11.4}", m.std_devs_mm[i]))
                .unwrap_or_default();
            println!("{:<9}  {:9.4}  {unc}{mc}", names[i], report.analytic.std_devs_mm[i]);
        }
    }
    Ok(())
}

fn cmd_kinematics(cli: &Cli, args: &PointArgs, inverse: bool) -> CmdResult {
    let config = load_config(&cli.config)?;
    let params = match &args.params {
        Some(path) => load_params(path, &config)?,
        None => ParameterSet::nominal(&config),
    };
    if inverse {
        let p = CartesianPoint::new(args.x, args.y, args.z);
        let rho = inverse_kinematics(&p, &params, &ConfigurationIndices::default())
            .map_err(kinematics_failure)?;
        let res = constraint_residuals(&p, &rho, &params);
        println!("{} {} {}", rho.0[0], rho.0[1], rho.0[2]);
        println!(
            "constraint residuals [mm^2]: {:.3e} {:.3e} {:.3e}",
            res[0], res[1], res[2]
        );
        if !rho.within_limits(&config) {
            println!("warning: outside software joint limits");
        }
    } else {
        let rho = JointVector::new(args.x, args.y, args.z);
        let p = direct_kinematics(&rho, &params).map_err(kinematics_failure)?;
        let res = constraint_residuals(&p, &rho, &params);
        println!("{} {} {}", p.0[0], p.0[1], p.0[2]);
        println!(
            "constraint residuals [mm^2]: {:.3e} {:.3e} {:.3e}",
            res[0], res[1], res[2]
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Calibrate(args) => cmd_calibrate(cli, args),
        Command::Verify(args) => cmd_verify(cli, args),
        Command::Accuracy(args) => cmd_accuracy(cli, args),
        Command::Ik(args) => cmd_kinematics(cli, args, true),
        Command::Fk(args) => cmd_kinematics(cli, args, false),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
