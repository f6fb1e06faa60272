//! Command-line front end: experiments, single trials, complexity sweeps and
//! the golden self test.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or config
//! errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use d2dcc::complexity;
use d2dcc::simrunner::{self, Scheme, Sweep, TrialOptions};
use d2dcc::{Error, Execution, ScenarioConfig, SolverOptions};

#[derive(Parser)]
#[command(name = "d2dcc", version, about = "D2D-assisted multi-antenna coded caching simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo experiment; writes the per-scheme summary CSV.
    Run(RunArgs),
    /// One channel draw, with a verbose report per scheme.
    Trial(TrialArgs),
    /// Complexity bounds over the number of D2D groups, as CSV.
    Complexity(ComplexityArgs),
    /// Golden checks on the small worked examples.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// Scenario config file (TOML, `key = value`). Defaults to the built-in
    /// K=3 scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Schemes to run (repeat or comma separate). Defaults to all.
    #[arg(long = "scheme", value_enum, value_delimiter = ',')]
    schemes: Vec<Scheme>,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
    /// SCA iteration cap.
    #[arg(long, default_value_t = SolverOptions::default().max_iter)]
    max_iter: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config key to sweep.
    #[arg(long, requires = "values")]
    sweep: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',', requires = "sweep")]
    values: Vec<f64>,
}

#[derive(Args)]
struct TrialArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long)]
    tau: usize,
    #[arg(long = "L")]
    l: usize,
    /// Subfiles delivered by groups smaller than τ+1.
    #[arg(long, default_value_t = 0)]
    m: usize,
    /// Restricted spatial DoF as `α,β,P`.
    #[arg(long, value_delimiter = ',')]
    restricted: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig, Error> {
        match &self.config {
            Some(path) => ScenarioConfig::load(path),
            None => Ok(ScenarioConfig::default()),
        }
    }

    fn schemes(&self) -> Vec<Scheme> {
        if self.schemes.is_empty() {
            Scheme::ALL.to_vec()
        } else {
            self.schemes.clone()
        }
    }

    fn options(&self) -> TrialOptions {
        TrialOptions {
            solver: SolverOptions { max_iter: self.max_iter, ..SolverOptions::default() },
            exec: if self.sequential { Execution::Sequential } else { Execution::Parallel },
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> Result<ExitCode, Error> {
    let config = args.common.config()?;
    let sweep = args.sweep.map(|name| Sweep { name, values: args.values });
    let experiment = simrunner::run_experiment(
        &config,
        sweep.as_ref(),
        &args.common.schemes(),
        args.trials,
        args.common.seed,
        &args.common.options(),
    )?;
    simrunner::write_summary_csv(&experiment.summary, output(&args.out)?)?;
    let failed: usize = experiment.summary.iter().map(|r| r.n_failed).sum();
    if failed > 0 {
        eprintln!("{failed} trial(s) failed and were excluded from the means");
    }
    Ok(ExitCode::SUCCESS)
}

fn trial(args: TrialArgs) -> Result<ExitCode, Error> {
    let config = args.common.config()?;
    let chans = d2dcc::channel::sample(&config, args.common.seed)?;
    let mut out = io::stdout().lock();
    let mut all_ok = true;
    for scheme in args.common.schemes() {
        let report = simrunner::run_trial_on(&config, &chans, args.common.seed, scheme, &args.common.options())?;
        all_ok &= report.ok();
        writeln!(out, "{report}")?;
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn complexity_sweep(args: ComplexityArgs) -> Result<ExitCode, Error> {
    let restricted = match args.restricted.as_deref() {
        None => None,
        Some(&[alpha, beta, p]) => Some((alpha, beta, p)),
        Some(_) => return Err(Error::Parameter("--restricted takes exactly three values α,β,P".into())),
    };
    let rows = complexity::sweep(args.tau, args.l, args.m, restricted)?;
    complexity::write_sweep_csv(&rows, output(&args.out)?)?;
    Ok(ExitCode::SUCCESS)
}

fn selftest() -> Result<ExitCode, Error> {
    let checks = simrunner::selftest()?;
    for c in &checks {
        println!("{c}");
    }
    Ok(if checks.iter().all(|c| c.passed()) { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Trial(a) => trial(a),
        Command::Complexity(a) => complexity_sweep(a),
        Command::Selftest => selftest(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parameter(_) | Error::Unsupported(_) | Error::TooLarge(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}
