use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "quadisrk", version, about = "Model-order reduction from transfer-function samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reduce one model (or sample file) with one method at one order.
    Reduce(ReduceArgs),
    /// Run a benchmark spec and write the error table.
    Sweep(SweepArgs),
    /// Write transfer-function samples of a model as CSV.
    SampleExport(SampleExportArgs),
    /// Check a model file: stability, Gramians, sampling symmetry, data matrices.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
struct QuadratureArgs {
    /// Lower end of the positive node range.
    #[arg(long, default_value_t = 1e-2)]
    omega_min: f64,
    /// Upper end of the positive node range.
    #[arg(long, default_value_t = 1e2)]
    omega_max: f64,
    /// Nodes per half axis.
    #[arg(long, default_value_t = 200)]
    half_count: usize,
    /// Rule file (`omega,weight`) overriding the range options.
    #[arg(long)]
    rule: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["model", "samples"]))]
struct ReduceArgs {
    /// Model JSON file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sample CSV (`s_re,s_im,H_re,H_im`); quad-isrk only.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long, default_value = "quad-isrk")]
    method: String,
    #[arg(long)]
    r: usize,
    #[command(flatten)]
    quadrature: QuadratureArgs,
    #[arg(long, default_value_t = 1e-4)]
    tau: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Comma-separated positive real initial shifts.
    #[arg(long, value_delimiter = ',')]
    shifts: Option<Vec<f64>>,
    /// Use the primitive (unorthogonalized) projection bases.
    #[arg(long)]
    primitive: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    quadrature: QuadratureArgs,
    /// Also run quad-isrk at this order and include its shift samples.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    tau: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Write the quadrature rule used.
    #[arg(long)]
    rule_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    quadrature: QuadratureArgs,
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
    let outcome = match cli.command {
        Command::Reduce(a) => commands::reduce(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::SampleExport(a) => commands::sample_export(a),
        Command::Validate(a) => commands::validate(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
