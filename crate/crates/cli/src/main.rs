use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twinsim::config::Config;
use twinsim::experiment::{
    analytic_csv, default_t_grid, rows_to_csv, run_optimal, run_sweep, run_validation,
    with_threads,
};
use twinsim::sim::run_replication;
use twinsim::{Error, Overlap, RngStream};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "twinsim", version, about = "Digital-twin synchronization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every configured (policy, delta, lambda) cell.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Dump the event trace of the first replication of the first cell.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Run the full delta x lambda x policy grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Compare no-twinning Monte Carlo against the closed forms.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Pair latched estimates with the occupancy form (negative control).
        #[arg(long)]
        crossed: bool,
    },
    /// Solve the rate-constrained twinning MDP and compare with PRTP/PPTP.
    Optimal {
        #[command(flatten)]
        common: Common,
        /// Average twinning-rate budget; overrides the config.
        #[arg(long, value_name = "RATE")]
        budget: Option<f64>,
        /// Where to write the policy tables (default: standard error).
        #[arg(long, value_name = "PATH")]
        table: Option<PathBuf>,
    },
    /// Print closed-form expected-cost curves.
    Analytic {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON scenario/experiment file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output file (default: standard output).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Replications; overrides the config.
    #[arg(long)]
    reps: Option<u64>,
    /// Simulated horizon; overrides the config.
    #[arg(long, value_name = "T")]
    horizon: Option<f64>,
    /// Overlapping-query semantics; overrides the config.
    #[arg(long, value_parser = parse_overlap)]
    overlap: Option<Overlap>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_overlap(s: &str) -> Result<Overlap, String> {
    s.parse()
}

enum Failure {
    Usage(String),
    Validation(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

impl Common {
    fn load(&self) -> Result<Config, Failure> {
        let mut cfg = Config::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = self.reps {
            if reps == 0 {
                return Err(Failure::Usage("--reps must be at least 1".into()));
            }
            cfg.replications = reps;
        }
        if let Some(h) = self.horizon {
            if !h.is_finite() || h <= 0.0 {
                return Err(Failure::Usage("--horizon must be positive".into()));
            }
            cfg.horizon = h;
        }
        if let Some(o) = self.overlap {
            cfg.scenario = cfg.scenario.with_overlap(o);
        }
        Ok(cfg)
    }

    fn emit(&self, text: &str) -> Result<(), Failure> {
        write_or_print(self.out.as_deref(), text)
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { common, trace } => {
            let cfg = common.load()?;
            let sweep = cfg.sweep()?;
            let rows = with_threads(common.threads, || run_sweep(&cfg.scenario, &sweep))?;
            common.emit(&rows_to_csv(&rows))?;
            if let Some(path) = trace {
                let sc = cfg.scenario.with_delta(sweep.delta_grid[0])?;
                let policy = sweep.policies[0].with_rate(sweep.lambda_grid[0])?;
                let mut rng = RngStream::new(sweep.seed, 0);
                let rep = run_replication(&sc, &policy, &sweep.costs, sweep.horizon, &mut rng, true)?;
                let dump = rep.trace.map(|t| t.dump()).unwrap_or_default();
                fs::write(&path, dump).map_err(|e| io_failure(&path, e))?;
            }
            Ok(())
        }
        Command::Sweep { common } => {
            let cfg = common.load()?;
            let sweep = cfg.sweep()?;
            let rows = with_threads(common.threads, || run_sweep(&cfg.scenario, &sweep))?;
            common.emit(&rows_to_csv(&rows))
        }
        Command::Validate { common, crossed } => {
            let cfg = common.load()?;
            let report = with_threads(common.threads, || {
                run_validation(&cfg.scenario, &cfg.tau_grid, cfg.replications, cfg.seed, crossed)
            })?;
            common.emit(&report.to_csv())?;
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            eprintln!(
                "{verdict}: {} points, max |z| = {:.3} (threshold {})",
                report.points.len(),
                report.max_abs_z(),
                report.threshold
            );
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Validation(format!(
                    "max |z| {:.3} exceeds {}",
                    report.max_abs_z(),
                    report.threshold
                )))
            }
        }
        Command::Optimal {
            common,
            budget,
            table,
        } => {
            let cfg = common.load()?;
            let budget = budget
                .or(cfg.budget)
                .ok_or_else(|| Failure::Usage("optimal needs --budget or a config `budget`".into()))?;
            if !budget.is_finite() || budget <= 0.0 {
                return Err(Failure::Usage("--budget must be a positive rate".into()));
            }
            let report = with_threads(common.threads, || {
                run_optimal(&cfg.scenario, &cfg.costs, budget, cfg.replications, cfg.horizon, cfg.seed)
            })?;
            let mut tables = String::new();
            for e in &report.entries {
                tables.push_str(&format!("# cost\t{}\n", e.cost.label()));
                tables.push_str(&format!("# residual\t{:.3e}\n", e.residual));
                tables.push_str(&e.solution.to_table());
            }
            match &table {
                Some(p) => fs::write(p, &tables).map_err(|e| io_failure(p, e))?,
                None => eprint!("{tables}"),
            }
            common.emit(&report.comparison_csv())
        }
        Command::Analytic { common } => {
            let cfg = common.load()?;
            let ts = cfg.t_grid.clone().unwrap_or_else(default_t_grid);
            common.emit(&analytic_csv(&cfg.scenario, &cfg.deltas, &ts)?)
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Validation(msg) => eprintln!("validation failed: {msg}"),
                Failure::Numerical(msg) => eprintln!("numerical failure: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
