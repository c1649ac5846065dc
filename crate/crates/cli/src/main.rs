use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use siamcorners_cli::{cmd_eval, cmd_selftest, cmd_synth, cmd_track, cmd_train, default_out, effective_config, CliResult};
use siamcorners::selftest::format_table;

#[derive(Parser)]
#[command(name = "siamcorners", version, about = "Anchor-free Siamese corner tracker")]
struct Cli {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: out/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured extractor: oracle, toy or file.
    #[arg(long, global = true)]
    extractor: Option<String>,
    /// Prints the effective configuration as JSON and exits.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Track a sequence directory from its first ground-truth box.
    Track { sequence: PathBuf },
    /// Score result boxes against a dataset of sequence directories.
    Eval { dataset: PathBuf, results: PathBuf },
    /// Render a synthetic sequence, optionally from a JSON spec.
    Synth { spec: Option<PathBuf> },
    /// Fit the corner heads on synthetic pairs and write a parameter file.
    Train,
    /// Run the built-in numerical checks.
    Selftest,
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    let config = effective_config(cli.config.as_deref(), cli.seed, cli.extractor.as_deref())?;
    if cli.dump_config {
        print!("{}", config.to_json());
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = cli.command else {
        return Err(siamcorners_cli::CliError::input("no command given; see --help"));
    };
    let out = |name: &str| cli.out.clone().unwrap_or_else(|| default_out(name));
    match command {
        Command::Track { sequence } => {
            let dir = out("track");
            let r = cmd_track(&sequence, &config, &dir)?;
            println!("tracked {} frames in {:.3} s ({:.1} fps)", r.boxes.len(), r.seconds, r.fps);
            println!("boxes written to {}", dir.display());
        }
        Command::Eval { dataset, results } => {
            let dir = out("eval");
            let r = cmd_eval(&dataset, &results, &dir)?;
            for s in &r.sequences {
                match &s.report {
                    Ok(m) => println!("{:<24} success {:.4}  precision@20 {:.4}  norm precision {:.4}", s.name, m.success_auc, m.precision_at_20, m.norm_precision_auc),
                    Err(e) => println!("{:<24} skipped: {e}", s.name),
                }
            }
            let a = &r.aggregate;
            println!("{:<24} success {:.4}  precision@20 {:.4}  norm precision {:.4}", "mean", a.success_auc, a.precision_at_20, a.norm_precision_auc);
        }
        Command::Synth { spec } => {
            let dir = out("synth");
            let seq = cmd_synth(spec.as_deref(), cli.seed, &dir)?;
            println!("wrote {} frames to {}", seq.frames.len(), dir.display());
        }
        Command::Train => {
            let dir = out("train");
            let r = cmd_train(&config, &dir)?;
            let (first, last) = (r.losses[0], *r.losses.last().expect("at least one loss"));
            println!("loss {first:.6} -> {last:.6} over {} steps", r.losses.len() - 1);
            println!("parameters written to {}", dir.display());
        }
        Command::Selftest => {
            let (results, ok) = cmd_selftest();
            print!("{}", format_table(&results));
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
