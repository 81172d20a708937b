//! `capres` — spectra, oracle searches, comparisons and checks from a JSON config.
//!
//! Exit codes: 0 success, 1 a hard check failed, 2 usage or configuration
//! error, 3 numerical or I/O failure (the failing stage is named).

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Format;
use output::Sink;
use run::{Ctx, OperatorChoice};

#[derive(Parser)]
#[command(name = "capres", version, about = "Resonances by complex absorbing potentials, complex scaling and a transfer-matrix oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of one operator.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "cap")]
        operator: OperatorChoice,
    },
    /// Resonance search in every configured window.
    Oracle(Common),
    /// Matching reports in both directions and counting sandwiches.
    Compare(Common),
    /// Spectrum, oracle and comparisons for every h of the sweep.
    Sweep(Common),
    /// Merge the JSON artifacts of the output directory into report.json.
    Report(Common),
    /// Run the configured checks.
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict output to one format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Seed for sampled points.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, action) = match &cli.command {
        Command::Spectrum { common, operator } => (common, Action::Spectrum(*operator)),
        Command::Oracle(c) => (c, Action::Oracle),
        Command::Compare(c) => (c, Action::Compare),
        Command::Sweep(c) => (c, Action::Sweep),
        Command::Report(c) => (c, Action::Report),
        Command::Run(c) => (c, Action::Run),
    };
    if let Some(n) = common.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: --threads must be a positive integer");
            return ExitCode::from(2);
        }
    }
    let loaded = match config::load(&common.config) {
        Ok(l) => l,
        Err(diagnostics) => {
            for d in diagnostics {
                eprintln!("error: {d}");
            }
            return ExitCode::from(2);
        }
    };
    let formats = match common.format {
        Some(f) => vec![f],
        None => loaded.config.output.formats.clone(),
    };
    let dir = common.out.clone().unwrap_or_else(|| loaded.config.output.directory.clone());
    let ctx = Ctx { sink: Sink { dir, sha256: loaded.sha256, formats }, config: loaded.config, seed: common.seed };
    let result = match action {
        Action::Spectrum(op) => ctx.spectrum(op).map(|_| true),
        Action::Oracle => ctx.oracle_only().map(|_| true),
        Action::Compare => ctx.compare().map(|_| true),
        Action::Sweep => ctx.sweep().map(|_| true),
        Action::Report => ctx.report().map(|_| true),
        Action::Run => ctx.run(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error in stage `{}`: {}", e.stage, e.message);
            ExitCode::from(3)
        }
    }
}

enum Action {
    Spectrum(OperatorChoice),
    Oracle,
    Compare,
    Sweep,
    Report,
    Run,
}
