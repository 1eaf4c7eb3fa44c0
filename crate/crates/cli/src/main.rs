//! `clusterinf`: cluster-robust inference for linear regression from the command line.

mod commands;
mod config;
mod error;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Overrides, RunConfig};
use error::{CliError, CliResult};
use report::Report;

#[derive(Parser, Debug)]
#[command(name = "clusterinf", version, about = "Cluster-robust inference for linear regression")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV data file.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bootstrap (and randomization) replications.
    #[arg(long, global = true)]
    boot_reps: Option<usize>,
    /// Auxiliary distribution for wild bootstrap weights.
    #[arg(long, global = true, value_enum)]
    aux: Option<Aux>,
    /// Clustering column, or two comma-separated columns for two-way clustering.
    #[arg(long, global = true)]
    cluster: Option<String>,
    /// Column whose fixed effects are partialled out.
    #[arg(long, global = true)]
    absorb: Option<String>,
    /// Variance estimator used to studentize bootstrap statistics.
    #[arg(long, global = true, value_enum)]
    studentize: Option<Stud>,
    /// Comma-separated methods, e.g. cv1,cv3,wcr.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Coefficient under test.
    #[arg(long, global = true)]
    coefficient: Option<String>,
    #[arg(long, global = true, value_enum)]
    format: Option<Fmt>,
    /// Directory for per-cluster and per-replicate CSV arrays.
    #[arg(long, global = true)]
    csv_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "CLUSTERINF_THREADS")]
    threads: Option<usize>,
    /// Write the main output here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Coefficient tests with analytic and bootstrap methods.
    #[command(alias = "test")]
    Fit,
    /// Cluster sizes, leverage, partial leverage and effective cluster counts.
    Diagnose,
    /// Score tests comparing pairs of nested clustering levels.
    Leveltest,
    /// Randomization inference over treatment assignments.
    Ri,
    /// Monte Carlo rejection frequencies.
    Simulate,
    /// Write a synthetic state-year panel as CSV.
    Generate,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Aux {
    Rademacher,
    Webb,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Stud {
    Cv1,
    Cv3,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Fmt {
    Text,
    Json,
    Csv,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            data: self.data.clone(),
            seed: self.seed,
            boot_reps: self.boot_reps,
            aux: self.aux.map(|a| match a {
                Aux::Rademacher => "rademacher".into(),
                Aux::Webb => "webb".into(),
            }),
            cluster: self.cluster.clone(),
            absorb: self.absorb.clone(),
            studentize: self.studentize.map(|s| match s {
                Stud::Cv1 => "cv1".into(),
                Stud::Cv3 => "cv3".into(),
            }),
            methods: self.methods.clone(),
            coefficient: self.coefficient.clone(),
            format: self.format.map(|f| match f {
                Fmt::Text => "text".into(),
                Fmt::Json => "json".into(),
                Fmt::Csv => "csv".into(),
            }),
            csv_dir: self.csv_dir.clone(),
        }
    }
}

fn emit(output: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Validation(format!("cannot write output: {e}")))
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot start {n} threads: {e}")))?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(cli.overrides());
    let format = cfg.format()?;

    if let Command::Generate = cli.command {
        let table = commands::generate::panel(&cfg)?;
        return emit(cli.output.as_ref(), &table.to_csv()?);
    }
    let report: Report = match cli.command {
        Command::Fit => commands::fit::run(&cfg)?,
        Command::Diagnose => commands::diagnose::run(&cfg)?,
        Command::Leveltest => commands::leveltest::run(&cfg)?,
        Command::Ri => commands::ri::run(&cfg)?,
        Command::Simulate => commands::simulate::run(&cfg)?,
        Command::Generate => unreachable!(),
    };
    if let Some(dir) = &cfg.output.csv_dir {
        report.write_arrays(dir)?;
    }
    emit(cli.output.as_ref(), &report.render(format)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
