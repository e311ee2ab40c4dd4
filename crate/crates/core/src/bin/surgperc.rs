use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use surgical_perception::io::read_json;
use surgical_perception::pipeline::{run_depth, run_eval, run_fuse, run_sim, run_track, PipelineConfig};
use surgical_perception::sim::SimScenario;
use surgical_perception::Result;

#[derive(Parser)]
#[command(name = "surgperc", version, about = "Surgical tool tracking, stereo depth and tissue fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file. For `simulate` this is a scenario; omit it for the built-in one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence with ground truth.
    Simulate(Common),
    /// Track the tool with the particle filter.
    Track(Common),
    /// Estimate depth from stereo pairs or ingest external disparity maps.
    Depth(Common),
    /// Fuse tool-masked depth into a surfel model.
    Fuse(Common),
    /// Score predictions against ground truth.
    Eval(Common),
}

fn config_path(c: &Common) -> Result<&Path> {
    c.config.as_deref().ok_or_else(|| surgical_perception::Error::Config {
        field: "--config".into(),
        message: "required for this command".into(),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let mut scenario = match &c.config {
                Some(p) => read_json::<SimScenario>(p)?,
                None => SimScenario::default_scenario(),
            };
            if let Some(seed) = c.seed {
                scenario.seed = seed;
            }
            run_sim(&scenario, &c.out).map(drop)
        }
        Command::Track(c) => run_track(&PipelineConfig::load(config_path(&c)?)?, &c.out, c.seed).map(drop),
        Command::Depth(c) => run_depth(&PipelineConfig::load(config_path(&c)?)?, &c.out, c.seed).map(drop),
        Command::Fuse(c) => run_fuse(&PipelineConfig::load(config_path(&c)?)?, &c.out, c.seed).map(drop),
        Command::Eval(c) => run_eval(&PipelineConfig::load(config_path(&c)?)?, &c.out, c.seed).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("surgperc: {e}");
            ExitCode::FAILURE
        }
    }
}
