use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ddpmlab_cli::{plotdata::plotdata, run_with_threads, ExperimentConfig, RunError};

#[derive(Parser)]
#[command(name = "ddpmlab", version, about = "Run diffusion-sampler experiments from config files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on this.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Turn a report CSV into a gnuplot data file.
    Plotdata {
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Command) -> Result<bool, RunError> {
    match cmd {
        Command::Run { config, seed, out, threads } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.set("seed", &s.to_string())?;
            }
            let dir = out.unwrap_or_else(|| cfg.out_dir());
            let res = run_with_threads(&cfg, &dir, threads)?;
            print!("{}", res.summary.render());
            Ok(res.summary.passed())
        }
        Command::Plotdata { report, out } => {
            let n = plotdata(&report, &out)?;
            println!("wrote {n} points to {}", out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
