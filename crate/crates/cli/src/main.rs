use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use povmsim::experiment::{
    self, ExperimentConfig, ExperimentError, OutputFormat, Party, PovmSource, Report,
    DEFAULT_ENTROPY_SAMPLES,
};
use povmsim::oracle::optimal_chsh_settings;
use povmsim::povm::USER_EPS;
use povmsim::protocol::DEFAULT_MAX_ROUNDS;

/// Classical simulation of bipartite qubit POVMs on an EPR pair.
#[derive(Parser, Debug)]
#[command(name = "povmsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the protocol and compare outcomes with the exact distribution.
    Simulate(SimulateArgs),
    /// Print the exact joint distribution and marginals.
    Oracle(OracleArgs),
    /// Estimate the CHSH value at the optimal settings.
    Chsh(ChshArgs),
    /// Report communication cost: rounds, plain bits, block-coded bits.
    Cost(CostArgs),
    /// Check a POVM file against the completeness conditions.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct PovmArgs {
    /// POVM file, `sic`, `random:<n>` or `projective:<x>,<y>,<z>`.
    #[arg(long)]
    povm_a: PovmSource,
    #[arg(long)]
    povm_b: PovmSource,
    /// Completeness tolerance for POVM files.
    #[arg(long, default_value_t = USER_EPS)]
    povm_eps: f64,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
    max_rounds: u32,
    /// Worker threads; defaults to the available cores. Does not affect output.
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, default_value = "json")]
    format: OutputFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    povms: PovmArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Shared-direction samples for the d′ entropy estimate.
    #[arg(long, default_value_t = DEFAULT_ENTROPY_SAMPLES)]
    entropy_samples: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    povms: PovmArgs,
    /// Seed for `random:<n>` POVMs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ChshArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct CostArgs {
    #[arg(long, default_value = "random:4")]
    povm_a: PovmSource,
    #[arg(long, default_value = "random:4")]
    povm_b: PovmSource,
    #[arg(long, default_value_t = USER_EPS)]
    povm_eps: f64,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = DEFAULT_ENTROPY_SAMPLES)]
    entropy_samples: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    file: PathBuf,
    #[arg(long, default_value_t = USER_EPS)]
    povm_eps: f64,
}

fn parallelism(requested: Option<usize>) -> usize {
    requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn config(povm_a: PovmSource, povm_b: PovmSource, povm_eps: f64, run: &RunArgs, entropy_samples: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed: run.seed,
        trials: run.trials,
        povm_a,
        povm_b,
        povm_eps,
        max_rounds: run.max_rounds,
        entropy_samples,
        parallelism: parallelism(run.parallelism),
    }
}

fn emit(report: &impl Report, output: &OutputArgs) -> Result<(), ExperimentError> {
    let text = report.render(output.format);
    let written = match &output.out {
        Some(path) => fs::write(path, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    };
    written.map_err(|e| ExperimentError::Config(format!("cannot write report: {e}")))
}

fn validate(file: &Path, eps: f64) -> Result<(), ExperimentError> {
    let p = experiment::validate_file(file, eps)?;
    println!("ok: {} elements", p.len());
    Ok(())
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Simulate(args) => {
            let p = args.povms;
            let cfg = config(p.povm_a, p.povm_b, p.povm_eps, &args.run, args.entropy_samples);
            emit(&experiment::simulate(&cfg)?, &args.output)
        }
        Command::Oracle(args) => {
            let p = args.povms;
            let a = p.povm_a.resolve(Party::Alice, args.seed, p.povm_eps)?;
            let b = p.povm_b.resolve(Party::Bob, args.seed, p.povm_eps)?;
            emit(&experiment::oracle_report(&a, &b), &args.output)
        }
        Command::Chsh(args) => {
            let r = &args.run;
            let report = experiment::chsh_experiment(
                optimal_chsh_settings(),
                r.trials,
                r.seed,
                r.max_rounds,
                parallelism(r.parallelism),
            )?;
            emit(&report, &args.output)
        }
        Command::Cost(args) => {
            let cfg = config(args.povm_a, args.povm_b, args.povm_eps, &args.run, args.entropy_samples);
            emit(&experiment::cost(&cfg)?, &args.output)
        }
        Command::Validate(args) => validate(&args.file, args.povm_eps),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
