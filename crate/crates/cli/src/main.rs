use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aggdiff_cli::runner::{run, RunOptions};
use aggdiff_cli::scenario::{builtin, builtin_scenarios, Method, Scenario};
use aggdiff_cli::{export, CliError};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "aggdiff",
    about = "1D aggregation-diffusion predator-prey simulations: finite-volume and particle solvers, steady-state diagnostics"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fv,
    Particles,
    Both,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Fv => Method::Fv,
            MethodArg::Particles => Method::Particles,
            MethodArg::Both => Method::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: either the name of a built-in or a path to a JSON
    /// config file.
    Run {
        scenario: String,
        /// Solver selection; defaults to the scenario's own setting.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Output directory for CSV/JSON artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the final time.
        #[arg(long)]
        t_final: Option<f64>,
        /// Override the reporting interval.
        #[arg(long)]
        report_dt: Option<f64>,
        /// Write additional density snapshots at this interval (initial and
        /// final snapshots are always written).
        #[arg(long)]
        snap_dt: Option<f64>,
        /// Fit a bump layout to the final state and write layout.json /
        /// analysis.json.
        #[arg(long)]
        analyze_steady: bool,
    },
    /// Run every built-in scenario, each into <out>/<name>.
    RunAll {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run up to this many scenarios in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        snap_dt: Option<f64>,
        #[arg(long)]
        analyze_steady: bool,
    },
    /// List the built-in scenarios.
    List,
}

fn load_scenario(name_or_path: &str) -> Result<Scenario, CliError> {
    if let Some(sc) = builtin(name_or_path) {
        return Ok(sc);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "'{name_or_path}' is neither a built-in scenario nor an existing config file"
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn run_one(scenario: &Scenario, options: &RunOptions, out: &Path) -> Result<(), CliError> {
    let outcome = run(scenario, options)?;
    export::export(&outcome, out)?;
    let report = &outcome.report;
    println!(
        "{}: classification {:?}, steady_time {:?}, wave {}, outputs in {}",
        scenario.name,
        report.classification,
        report.steady_time,
        if report.wave.is_some() { "yes" } else { "no" },
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Run {
            scenario,
            method,
            out,
            t_final,
            report_dt,
            snap_dt,
            analyze_steady,
        } => {
            let options = RunOptions {
                method: method.map(Method::from),
                t_final,
                report_dt,
                snap_dt,
                analyze_steady,
            };
            load_scenario(&scenario).and_then(|sc| run_one(&sc, &options, &out))
        }
        Command::RunAll {
            out,
            jobs,
            method,
            snap_dt,
            analyze_steady,
        } => {
            let options = RunOptions {
                method: method.map(Method::from),
                t_final: None,
                report_dt: None,
                snap_dt,
                analyze_steady,
            };
            run_all(&out, jobs.max(1), &options)
        }
        Command::List => {
            for sc in builtin_scenarios() {
                println!(
                    "{:<16} alpha={:<5} cells={:<4} domain=[{}, {}] t_final={}",
                    sc.name, sc.alpha, sc.n_cells, sc.domain[0], sc.domain[1], sc.t_final
                );
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run_all(out: &Path, jobs: usize, options: &RunOptions) -> Result<(), CliError> {
    let scenarios = builtin_scenarios();
    let mut failures: Vec<(String, CliError)> = Vec::new();
    for chunk in scenarios.chunks(jobs) {
        let results: Vec<(String, Result<(), CliError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|sc| {
                    let dir = out.join(&sc.name);
                    scope.spawn(move || (sc.name.clone(), run_one(sc, options, &dir)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("runner panicked")).collect()
        });
        for (name, result) in results {
            if let Err(e) = result {
                failures.push((name, e));
            }
        }
    }
    if let Some((name, e)) = failures.into_iter().next() {
        eprintln!("scenario {name} failed");
        return Err(e);
    }
    Ok(())
}
