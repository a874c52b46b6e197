use bsp_core::config::ScenarioConfig;
use bsp_core::runner::{run_scenario, run_sweep, RunError, RunOptions, SweepKind, SweepOutput};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "bsp", version, about = "Partitioned entropy-bound planning scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for candidate evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory for the generated files; defaults to the scenario's `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Timed repetitions after a discarded warm-up.
    #[arg(long, global = true, default_value_t = 1)]
    repeats: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Plan over the scenario's candidates and write records, timings and a report.
    Run { config: PathBuf },
    /// Run one parameter sweep and write sweep_<kind>.csv.
    Sweep {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(["convergence", "depth", "density", "speedup"]))]
        kind: String,
        config: PathBuf,
    },
    /// Parse and check a scenario file without running it.
    Validate { config: PathBuf },
}

fn fail(err: RunError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(match err {
        RunError::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    })
}

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    ScenarioConfig::load(path).map_err(|e| fail(e.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let options = RunOptions {
        seed: cli.common.seed,
        output_dir: cli.common.output_dir,
        repeats: cli.common.repeats,
        threads: cli.common.threads,
    };
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(c) => {
                println!("{}: ok ({} candidate paths, depth {})", config.display(), c.planning.paths, c.planning.depth);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config } => {
            let c = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_scenario(&c, &options) {
                Ok(r) => {
                    let dir = options.output_dir.as_ref().unwrap_or(&c.output_dir);
                    log::info!("wrote results to {}", dir.display());
                    println!(
                        "chosen path {} of {}: loss bound {:.6e}, pruned {:.1}%, evaluation {:.3e} s",
                        r.selection.chosen,
                        r.candidates,
                        r.selection.loss_bound,
                        100.0 * r.pruned_fraction,
                        r.timing.evaluation_wall_s.mean
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { kind, config } => {
            let kind: SweepKind = kind.parse().expect("clap restricts sweep kinds");
            let c = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_sweep(kind, &c, &options) {
                Ok(out) => {
                    let rows = match &out {
                        SweepOutput::Convergence(r) => r.len(),
                        SweepOutput::Depth(r) => r.len(),
                        SweepOutput::Density(r) => r.len(),
                        SweepOutput::Speedup(r) => r.len(),
                    };
                    println!("sweep_{kind}.csv: {rows} rows");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
