//! `pcbf`: run, sweep and validate passivity-preserving safety filters.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 divergence,
//! 3 passivity violation detected, 4 validation suite failure.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use passive_cbf::sim::{energy_audit, parse_values, run_scenario, AuditSummary, ScenarioConfig, SweepParam};
use passive_cbf::validate::{run_all, Fault, ValidateOptions};
use passive_cbf::Error;
use rayon::prelude::*;

use output::{config_hash, trajectory_csv, write_json, AuditFile, RunManifest};

#[derive(Parser)]
#[command(name = "pcbf", version, about = "Passivity-preserving CBF safety filtering on port-Hamiltonian mechanical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trajectory, audit and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simulate a scenario once per value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// One of Ebar, qbar, k, gamma, alpha_E.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 0.5,1,2.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the seeded property suites and print a pass/fail table.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report as JSON into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inject a defect to confirm the suites catch it.
        #[arg(long, value_enum, hide = true)]
        fault: Option<FaultArg>,
    },
}

#[derive(clap::Args)]
struct Overrides {
    /// Time step in seconds; overrides the config.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Horizon in seconds; overrides the config.
    #[arg(long = "t-final", allow_negative_numbers = true)]
    t_final: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    CorruptedGradient,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Divergence(String),
    Passivity(String),
    Validation,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Io(_) => 1,
            Self::Divergence(_) => 2,
            Self::Passivity(_) => 3,
            Self::Validation => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut cfg = ScenarioConfig::from_toml_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if let Some(dt) = overrides.dt {
        cfg.integrator.dt = dt;
    }
    if let Some(t) = overrides.t_final {
        cfg.integrator.t_final = t;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

/// Simulates and writes `<name>_trajectory.csv` and `<name>_audit.json`.
fn simulate_to(cfg: &ScenarioConfig, out: &Path) -> Result<(AuditSummary, Vec<PathBuf>), Failure> {
    let traj = run_scenario(cfg).map_err(|e| match e {
        Error::Divergence { .. } => Failure::Divergence(format!("{}: {e}", cfg.name)),
        other => Failure::Config(format!("{}: {other}", cfg.name)),
    })?;
    let audit = energy_audit(&traj);
    let csv = out.join(format!("{}_trajectory.csv", cfg.name));
    fs::write(&csv, trajectory_csv(&traj)).map_err(io_err(&csv))?;
    let json = out.join(format!("{}_audit.json", cfg.name));
    let file = AuditFile {
        scenario: &cfg.name,
        dt: traj.dt,
        audit: &audit,
    };
    write_json(&json, &file).map_err(io_err(&json))?;
    Ok((audit, vec![csv, json]))
}

fn passivity_status(name: &str, audit: &AuditSummary) -> Result<(), Failure> {
    if audit.passivity_failures > 0 {
        return Err(Failure::Passivity(format!(
            "{name}: passivity monitor flagged {} of {} samples",
            audit.passivity_failures,
            audit.steps + 1
        )));
    }
    Ok(())
}

fn run(config: &Path, out: &Path, overrides: &Overrides) -> Result<(), Failure> {
    let cfg = load(config, overrides)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let (audit, mut outputs) = simulate_to(&cfg, out)?;
    let manifest_path = out.join(format!("{}_manifest.json", cfg.name));
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        scenario: cfg.name.clone(),
        suite: "simulate",
        config_sha256: config_hash(&cfg),
        outputs,
    };
    write_json(&manifest_path, &manifest).map_err(io_err(&manifest_path))?;
    println!(
        "{}: {} steps, S_cl {} -> {}, filter removed {:.6e} J, min h {}, passivity failures {}",
        cfg.name,
        audit.steps,
        audit.s_cl_initial,
        audit.s_cl_final,
        audit.filter_energy_removed,
        audit.min_h.map_or("n/a".into(), |h| format!("{h:.6e}")),
        audit.passivity_failures
    );
    passivity_status(&cfg.name, &audit)
}

/// `0.5` -> `0.5`, `-1` -> `m1`: file-name-safe rendering of a sweep value.
fn value_tag(v: f64) -> String {
    format!("{v}").replace('-', "m")
}

const SUMMARY_HEADER: &str = "run,param,value,status,steps,S_cl_initial,S_cl_final,max_K_e,max_q1,min_h,max_h_violation,filter_energy_removed,active_steps,passivity_failures,singular_steps,max_balance_error";

fn sweep(config: &Path, out: &Path, param: &str, values: &str, overrides: &Overrides) -> Result<(), Failure> {
    let base = load(config, overrides)?;
    let param: SweepParam = param.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let values = parse_values(values).map_err(|e| Failure::Config(e.to_string()))?;
    let runs = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            cfg.set(param, v);
            cfg.name = format!("{}_{}_{}", base.name, param, value_tag(v));
            cfg.validate().map_err(|e| Failure::Config(format!("{param} = {v}: {e}")))?;
            Ok((v, cfg))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    fs::create_dir_all(out).map_err(io_err(out))?;

    let results: Vec<_> = runs
        .par_iter()
        .map(|(v, cfg)| (*v, cfg, simulate_to(cfg, out)))
        .collect();

    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let mut outputs = Vec::new();
    let mut worst: Option<Failure> = None;
    for (v, cfg, result) in results {
        match result {
            Ok((a, paths)) => {
                let status = if a.passivity_failures > 0 { "passivity-violation" } else { "ok" };
                summary.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    cfg.name,
                    param,
                    v,
                    status,
                    a.steps,
                    a.s_cl_initial,
                    a.s_cl_final,
                    a.max_kinetic_energy,
                    a.max_q[0],
                    a.min_h.map_or(String::new(), |h| h.to_string()),
                    a.max_h_violation,
                    a.filter_energy_removed,
                    a.active_steps,
                    a.passivity_failures,
                    a.singular_steps,
                    a.max_balance_error
                ));
                outputs.extend(paths);
                if let Err(f) = passivity_status(&cfg.name, &a) {
                    eprintln!("{f:?}");
                    worst.get_or_insert(f);
                }
            }
            Err(f) => {
                let status = if matches!(f, Failure::Divergence(_)) { "diverged" } else { "error" };
                summary.push_str(&format!("{},{},{},{status},,,,,,,,,,,,\n", cfg.name, param, v));
                eprintln!("{f:?}");
                if !matches!(worst, Some(Failure::Divergence(_))) {
                    worst = Some(f);
                }
            }
        }
    }
    let summary_path = out.join(format!("{}_sweep_{}.csv", base.name, param));
    fs::write(&summary_path, &summary).map_err(io_err(&summary_path))?;
    outputs.push(summary_path.clone());
    let manifest_path = out.join(format!("{}_sweep_{}_manifest.json", base.name, param));
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        scenario: base.name.clone(),
        suite: "sweep",
        config_sha256: config_hash(&base),
        outputs,
    };
    write_json(&manifest_path, &manifest).map_err(io_err(&manifest_path))?;
    print!("{summary}");
    worst.map_or(Ok(()), Err)
}

fn validate(seed: u64, out: Option<&Path>, fault: Option<FaultArg>) -> Result<(), Failure> {
    let opts = ValidateOptions {
        seed,
        fault: match fault {
            Some(FaultArg::CorruptedGradient) => Fault::CorruptedGradient,
            None => Fault::None,
        },
        ..ValidateOptions::default()
    };
    let report = run_all(&opts);
    println!("{report}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(format!("validate_seed{seed}.json"));
        write_json(&path, &report).map_err(io_err(&path))?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { config, out, overrides } => run(config, out, overrides),
        Command::Sweep {
            config,
            out,
            param,
            values,
            overrides,
        } => sweep(config, out, param, values, overrides),
        Command::Validate { seed, out, fault } => validate(*seed, out.as_deref(), *fault),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("error: config: {m}"),
                Failure::Io(m) => eprintln!("error: io: {m}"),
                Failure::Divergence(m) => eprintln!("error: divergence: {m}"),
                Failure::Passivity(m) => eprintln!("error: {m}"),
                Failure::Validation => eprintln!("error: validation suites failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
