use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use massart_harness::config::{CommandName, ExperimentConfig};
use massart_harness::{run, THREADS_ENV};

/// Learn halfspaces under Massart noise and check the supporting bounds.
#[derive(Parser, Debug)]
#[command(name = "massart-halfspace", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the learner over seeded trials.
    Learn(Common),
    /// Run a verification check.
    Verify(Common),
    /// Compare analytic gradients with finite differences.
    Gradcheck(Common),
    /// Measure PSGD throughput.
    Bench(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config, or JSON when the name ends in `.json`.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides `base_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match cli.command {
        Cmd::Learn(a) => (CommandName::Learn, a),
        Cmd::Verify(a) => (CommandName::Verify, a),
        Cmd::Gradcheck(a) => (CommandName::Gradcheck, a),
        Cmd::Bench(a) => (CommandName::Bench, a),
    };
    let result = ExperimentConfig::load(&args.config, name).and_then(|mut config| {
        if let Some(s) = args.seed {
            config.base_seed = s;
        }
        if let Some(o) = args.out {
            config.output.dir = o;
        }
        run(&config, args.threads)
    });
    match result {
        Ok(outcome) => {
            let s = &outcome.summary;
            println!(
                "{}: {}/{} rows passed (need {}), {} aborted; verdict {}; artifacts in {}",
                s.command,
                s.passes,
                s.rows,
                s.min_passes,
                s.aborted,
                s.verdict,
                outcome.out_dir.display()
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("massart-halfspace: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
