use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use numdiff_cli::config::ExperimentConfig;
use numdiff_cli::engine::{self, RunSummary};

#[derive(Parser)]
#[command(name = "numdiff", version, about = "Causal numerical differentiation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Run only this noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the clean signal and its noisy realizations as CSV.
    Generate(Common),
    /// Run every configured algorithm over every SNR and seed.
    Compare(Common),
    /// Sweep the NSE process-noise level against SSE and ASE.
    EtaSweep(Common),
    /// Differentiate one CSV file.
    Differentiate {
        #[arg(long)]
        config: PathBuf,
        /// Input CSV with `t,y` columns.
        #[arg(long)]
        input: PathBuf,
        /// Algorithm name from the config; the first one by default.
        #[arg(long)]
        algorithm: Option<String>,
        /// Output CSV path.
        #[arg(long)]
        output: PathBuf,
    },
}

fn load(path: &Path) -> Option<ExperimentConfig> {
    let cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return None;
        }
    };
    let (errors, warnings) = cfg.validate();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    for e in &errors {
        eprintln!("error: {e}");
    }
    errors.is_empty().then_some(cfg)
}

fn prepare(c: &Common) -> Option<ExperimentConfig> {
    let mut cfg = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &c.output {
        cfg.output_dir = out.clone();
    }
    if let Some(jobs) = c.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("warning: {e}");
        }
    }
    Some(cfg)
}

fn report(result: anyhow::Result<RunSummary>) -> ExitCode {
    match result {
        Ok(s) if s.failures == 0 => {
            println!("{} runs written to {}", s.cells, s.output_dir.display());
            ExitCode::SUCCESS
        }
        Ok(s) => {
            eprintln!("{} of {} runs failed; see {}", s.failures, s.cells, s.output_dir.display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(c) => {
            let Some(cfg) = prepare(&c) else { return ExitCode::FAILURE };
            match engine::generate(&cfg) {
                Ok(files) => {
                    println!("{} files written to {}", files.len(), cfg.output_dir.join("signals").display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Compare(c) => {
            let Some(cfg) = prepare(&c) else { return ExitCode::FAILURE };
            report(engine::compare(&cfg, &engine::default_runner))
        }
        Command::EtaSweep(c) => {
            let Some(cfg) = prepare(&c) else { return ExitCode::FAILURE };
            report(engine::eta_sweep(&cfg, &engine::default_runner))
        }
        Command::Differentiate { config, input, algorithm, output } => {
            let Some(cfg) = load(&config) else { return ExitCode::FAILURE };
            match engine::differentiate(&cfg, &input, algorithm.as_deref(), &output) {
                Ok(rows) => {
                    println!("{rows} rows written to {}", output.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
