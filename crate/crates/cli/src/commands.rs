//! Subcommand implementations. Each returns the process exit code.

use std::fs;
use std::path::{Path, PathBuf};

use sliding_core::audit::{run_all, run_check, AuditReport, Check, SamplerConfig};
use sliding_core::integrator::{integrate, IntegrationError, Trajectory};
use sliding_core::{CharacteristicMap, GeneratingMap, Vector};

use crate::config::ScenarioConfig;
use crate::output::{write_csv, EventsFile, Header, TrajectoryTable};
use crate::{plotdata, scenarios, CliError, EXIT_AUDIT_FAILED, EXIT_OK, EXIT_RUNTIME};

/// Paths written by `simulate`.
pub fn output_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let base = prefix.as_os_str().to_owned();
    let mut csv = base.clone();
    csv.push(".csv");
    let mut events = base;
    events.push(".events.json");
    (PathBuf::from(csv), PathBuf::from(events))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

/// Integrate a validated config.
pub fn run_scenario(
    cfg: &ScenarioConfig,
) -> Result<Result<Trajectory, IntegrationError>, CliError> {
    let pf = scenarios::build(cfg)?;
    let law = GeneratingMap::new(cfg.law()?);
    let opts = cfg.options()?;
    Ok(integrate(
        &pf,
        &law,
        &Vector::from_vec(cfg.x0.clone()),
        cfg.t0,
        &opts,
    ))
}

/// Run a config and write `<prefix>.csv` and `<prefix>.events.json`.
/// Integration failures still write the partial trajectory.
pub fn simulate(config: &Path, prefix: &Path) -> Result<u8, CliError> {
    let cfg = ScenarioConfig::load(config)?;
    let pf = scenarios::build(&cfg)?;
    let (traj, error) = match run_scenario(&cfg)? {
        Ok(t) => (t, None),
        Err(e) => (e.partial.clone(), Some(e.to_string())),
    };
    let (csv_path, events_path) = output_paths(prefix);
    let mut csv = Vec::new();
    write_csv(&mut csv, &Header::new(&cfg), pf.surface(), &traj).expect("writing to memory");
    write_file(&csv_path, &csv)?;
    write_file(
        &events_path,
        EventsFile::new(&traj, error.clone()).to_json().as_bytes(),
    )?;
    match error {
        Some(msg) => {
            eprintln!("error: integration failed: {msg}");
            Ok(EXIT_RUNTIME)
        }
        None => Ok(EXIT_OK),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditArgs {
    pub law: String,
    pub check: String,
    pub trials: usize,
    pub seed: u64,
    pub dim: usize,
}

/// Run the requested audit. `check = "all"` yields one report per law check.
pub fn audit_reports(args: &AuditArgs) -> Result<Vec<AuditReport>, CliError> {
    let law = CharacteristicMap::by_name(&args.law)?;
    let cfg = SamplerConfig::new(args.seed, args.trials, args.dim)?;
    if args.check == "all" {
        Ok(run_all(&law, &cfg)?)
    } else {
        let check: Check = args.check.parse()?;
        Ok(vec![run_check(check, &law, &cfg)?])
    }
}

/// JSON for the reports: a single object for one check, an array for `all`.
pub fn audit_json(args: &AuditArgs, reports: &[AuditReport]) -> String {
    let value = if args.check == "all" {
        serde_json::to_value(reports)
    } else {
        serde_json::to_value(&reports[0])
    };
    serde_json::to_string_pretty(&value.expect("reports serialize")).expect("value serializes")
}

pub fn audit(args: &AuditArgs, out: Option<&Path>) -> Result<u8, CliError> {
    let reports = audit_reports(args)?;
    let json = audit_json(args, &reports);
    match out {
        Some(path) => write_file(path, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    for r in reports.iter().filter(|r| !r.passed()) {
        eprintln!(
            "{} {}: {} of {} trials failed (worst violation {:e})",
            r.law, r.check, r.failures, r.trials, r.worst_violation
        );
    }
    Ok(if reports.iter().all(AuditReport::passed) {
        EXIT_OK
    } else {
        EXIT_AUDIT_FAILED
    })
}

pub fn plot(input: &Path, cols: Option<&[String]>, out: &Path) -> Result<u8, CliError> {
    let table = TrajectoryTable::read(input)?;
    let selected = plotdata::select_columns(&table, cols)?;
    write_file(out, plotdata::render(&table, &selected).as_bytes())?;
    Ok(EXIT_OK)
}
