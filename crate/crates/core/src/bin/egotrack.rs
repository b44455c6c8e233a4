use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use egotrack::acceptance::{self, AcceptanceOptions};
use egotrack::app::{self, RunFlags};
use egotrack::sim::Mode;

#[derive(Parser)]
#[command(name = "egotrack", version, about = "Ego-centric sigma-point tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Feed the main filter identity ego-motion (negative control).
    #[arg(long, global = true, hide = true)]
    disable_ego_compensation: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write metrics.csv, summary.json and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `scenario.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Deploy)]
        mode: Mode,
    },
    /// Run one episode per seed in parallel and write aggregate.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `A..B` (half-open) or `A..=B`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Deploy)]
        mode: Mode,
    },
    /// Run the bundled acceptance scenarios.
    Selftest {
        /// Directory for the determinism check's run outputs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let flags = |mode| RunFlags {
        mode,
        disable_ego_compensation: cli.disable_ego_compensation,
    };
    let outcome = match cli.command {
        Command::Run { config, seed, out, mode } => app::run(&config, seed, &out, flags(mode)).map(|m| {
            println!("wrote {} files to {}", m.files.len(), m.out_dir);
        }),
        Command::Sweep { config, seeds, out, mode } => app::parse_seed_range(&seeds)
            .and_then(|seeds| app::sweep(&config, &seeds, &out, flags(mode)))
            .map(|r| {
                println!("{} of {} seeds completed; aggregate in {}", r.completed.len(), r.seeds.len(), out.display());
            }),
        Command::Selftest { out } => {
            let opts = AcceptanceOptions {
                disable_ego_compensation: cli.disable_ego_compensation,
                out_dir: out,
            };
            let start = Instant::now();
            let results = acceptance::run_all(&opts);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!(
                "{} of {} criteria passed in {:.1} s",
                results.len() - failed,
                results.len(),
                start.elapsed().as_secs_f64()
            );
            return if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
