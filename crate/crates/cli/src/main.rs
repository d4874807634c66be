use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bergmanlab::config::RunConfig;
use bergmanlab::report::RunReport;

#[derive(Parser)]
#[command(name = "bergmanlab", version, about = "Bergman-space operator laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment from a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (default: config's `output`, else ./bergmanlab-out)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (fallback: BERGMANLAB_THREADS, else all cores)
        #[arg(long)]
        threads: Option<usize>,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Execute the experiment once per sweep value with trend verdicts.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn init_threads(cli_threads: Option<usize>) {
    let threads = cli_threads.or_else(|| {
        std::env::var("BERGMANLAB_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    });
    if let Some(n) = threads {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn print_verdicts(report: &RunReport) {
    for v in &report.payload.verdicts {
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} {name}: value {value:.6e} vs threshold {threshold:.6e} ({comparison}; {operation})",
            name = v.name,
            value = v.value,
            threshold = v.threshold,
            comparison = v.comparison,
            operation = v.operation,
        );
    }
}

fn execute(
    config_path: &std::path::Path,
    out: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
    sweep_mode: bool,
) -> Result<ExitCode, Box<dyn std::error::Error>> {
    init_threads(threads);
    let mut config = RunConfig::from_path(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = if sweep_mode {
        bergmanlab::sweep(&config)?
    } else {
        bergmanlab::run(&config)?
    };
    let out_dir = out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("bergmanlab-out"));
    report.write_files(&out_dir)?;
    print_verdicts(&report);
    println!(
        "report written to {} ({} tables, {} verdicts, {:.1} ms)",
        out_dir.display(),
        report.payload.tables.len(),
        report.payload.verdicts.len(),
        report.meta.wall_ms
    );
    Ok(if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
        } => execute(&config, out, threads, seed, false),
        Command::Sweep {
            config,
            out,
            threads,
            seed,
        } => execute(&config, out, threads, seed, true),
        Command::Validate { config } => match RunConfig::from_path(&config) {
            Ok(c) => {
                println!("OK: {} ({})", config.display(), c.experiment_name());
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => Err(e.into()),
        },
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
