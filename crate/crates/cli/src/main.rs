use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slabsolve::experiment::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "slabsolve", version, about = "Overlapping-slab solver experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, replacing `experiment.output`.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// `section.key=value`, may be repeated.
        #[arg(long = "override", short = 's')]
        overrides: Vec<String>,
    },
    /// Run a built-in preset.
    Preset {
        name: String,
        #[arg(long = "override", short = 's')]
        overrides: Vec<String>,
        /// Print the resolved config instead of running.
        #[arg(long)]
        show: bool,
    },
    /// List the built-in presets.
    ListPresets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> slabsolve::Result<()> {
    let (mut cfg, show) = match cli.command {
        Command::ListPresets => {
            for name in experiment::preset_names() {
                let cfg = experiment::preset(name, &[])?;
                println!("{name:<24} {}", cfg.kind.name());
            }
            return Ok(());
        }
        Command::Run { config, overrides } => {
            let text = std::fs::read_to_string(&config)?;
            (ExperimentConfig::parse_with(&text, &overrides)?, false)
        }
        Command::Preset { name, overrides, show } => (experiment::preset(&name, &overrides)?, show),
    };
    if let Some(out) = cli.out {
        cfg.output = out;
    }
    if show {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    eprintln!("running {} ({})", cfg.name, cfg.kind.name());
    let outcome = experiment::run(&cfg)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for path in outcome.write(&cfg.output)? {
        eprintln!("wrote {}", path.display());
    }
    eprintln!("finished in {:.1} s", outcome.seconds);
    Ok(())
}
