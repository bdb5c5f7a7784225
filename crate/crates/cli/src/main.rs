use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use carbon_market::model::ClearingModelKind;
use carbon_market_cli::error::{code, CliError};
use carbon_market_cli::harness::{run_sweep, ExperimentConfig, SweepArgs, WORKERS_ENV};
use carbon_market_cli::report::run_report;
use carbon_market_cli::solve::{emit, render_solve, run_solve, SolveArgs};
use carbon_market_cli::{parse_model, parse_range, Format};

#[derive(Parser)]
#[command(name = "carbon-market", version, about = "Carbon-aware electricity market clearing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear one market and write the solution with its metrics.
    Solve(SolveCmd),
    /// Sweep carbon-cost ranges with every consumer carbon-sensitive.
    SweepCosts(SweepCostsCmd),
    /// Sweep the fraction of carbon-sensitive consumers at one carbon-cost range.
    SweepFraction(SweepFractionCmd),
    /// Render plot-data tables from result files or experiment directories.
    Report(ReportCmd),
}

#[derive(Args)]
struct Source {
    /// builtin:3bus, rts-gmlc:<dir>, or a scenario file path.
    #[arg(long)]
    network: Option<String>,
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "network")]
    scenario: Option<PathBuf>,
    /// Reject unknown keys in scenario files.
    #[arg(long)]
    strict: bool,
}

impl Source {
    fn network(&self) -> String {
        match (&self.scenario, &self.network) {
            (Some(p), _) => format!("file:{}", p.display()),
            (None, Some(n)) => n.clone(),
            (None, None) => "builtin:3bus".into(),
        }
    }
}

#[derive(Args)]
struct SolveCmd {
    /// carbon-cost, fixed, flexible or carbon-flow.
    #[arg(long, value_parser = parse_model, default_value = "carbon-cost")]
    model: ClearingModelKind,
    #[command(flatten)]
    source: Source,
    /// Seed for the carbon-cost draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Draw carbon costs from this range ($/t), e.g. 30:60.
    #[arg(long, value_parser = parse_range)]
    range: Option<[f64; 2]>,
    /// Percent of consumers that get a carbon cost.
    #[arg(long)]
    fraction: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct SweepCommon {
    #[command(flatten)]
    source: Source,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, num_args = 1.., value_parser = parse_model, default_values = ["carbon-cost", "carbon-flow"])]
    models: Vec<ClearingModelKind>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Format of the plot-data tables.
    #[arg(long, default_value = "csv")]
    format: Format,
}

impl SweepCommon {
    fn args(&self, out: PathBuf) -> SweepArgs {
        SweepArgs {
            network: self.source.network(),
            strict: self.source.strict,
            workers: self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
            out,
            format: self.format,
        }
    }
}

#[derive(Args)]
struct SweepCostsCmd {
    #[command(flatten)]
    common: SweepCommon,
    /// Carbon-cost ranges ($/t) as lo:hi; an empty list runs nothing.
    #[arg(long, num_args = 0.., value_parser = parse_range, default_values = ["10:20", "10:40", "30:60", "50:80"])]
    ranges: Vec<[f64; 2]>,
    /// Experiment directory.
    #[arg(long, default_value = "results/sweep-costs")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepFractionCmd {
    #[command(flatten)]
    common: SweepCommon,
    /// Percent of carbon-sensitive consumers.
    #[arg(long, num_args = 0.., default_values = ["10", "20", "30", "40", "50", "60", "70", "80", "90", "100"])]
    fractions: Vec<f64>,
    /// Carbon-cost range ($/t).
    #[arg(long, value_parser = parse_range, default_value = "30:60")]
    range: [f64; 2],
    /// Experiment directory.
    #[arg(long, default_value = "results/sweep-fraction")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportCmd {
    /// result.json files or experiment directories.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Directory for the rendered tables.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Solve(c) => {
            let args = SolveArgs {
                model: Some(c.model),
                network: c.source.network,
                scenario: c.source.scenario,
                seed: c.seed,
                range: c.range,
                fraction: c.fraction,
                out: c.out,
                format: c.format,
                strict: c.source.strict,
            };
            let out = run_solve(&args)?;
            emit(&render_solve(&out, args.format)?, args.out.as_deref())?;
            if !out.converged() {
                eprintln!("warning: carbon-flow iteration stopped before converging; best iterate written");
                return Ok(code::NON_CONVERGENCE);
            }
            Ok(code::OK)
        }
        Command::SweepCosts(c) => {
            let s = &c.common;
            let cfg = ExperimentConfig::sweep_costs(&s.source.network(), &c.ranges, s.seed, s.trials, &s.models);
            let m = run_sweep(&s.args(c.out.clone()), &cfg).with_context(|| format!("sweep into {}", c.out.display()))?;
            if !m.complete {
                eprintln!("warning: some runs did not solve; see {}", c.out.join("manifest.json").display());
            }
            Ok(code::OK)
        }
        Command::SweepFraction(c) => {
            let s = &c.common;
            let cfg = ExperimentConfig::sweep_fraction(&s.source.network(), &c.fractions, c.range, s.seed, s.trials, &s.models);
            let m = run_sweep(&s.args(c.out.clone()), &cfg).with_context(|| format!("sweep into {}", c.out.display()))?;
            if !m.complete {
                eprintln!("warning: some runs did not solve; see {}", c.out.join("manifest.json").display());
            }
            Ok(code::OK)
        }
        Command::Report(c) => {
            for name in run_report(&c.results, c.format, &c.out)? {
                println!("{}", c.out.join(name).display());
            }
            Ok(code::OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.downcast_ref::<CliError>().map_or(code::INTERNAL, CliError::exit_code))
        }
    }
}
