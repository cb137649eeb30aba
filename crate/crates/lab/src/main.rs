use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use pclab::config::{ExperimentConfig, Preset};
use pclab::pipeline::Pipeline;
use pclab::records::write_csv;
use pclab::sweeps::sweep_alpha;

#[derive(Parser)]
#[command(name = "pclab", version, about = "Energy probe versus softmax confidence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON overlay merged over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory holding the CIFAR-10 binary batches; synthetic data is used otherwise.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Start from the desk-scale preset instead of the full design.
    #[arg(long, global = true)]
    desk_scale: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    Train,
    Probe,
    Eval,
    SweepAlpha,
    SweepTemp,
    Report,
    Figures,
    All,
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let preset = if cli.desk_scale { Preset::Desk } else { Preset::Full };
    let mut cfg = ExperimentConfig::load(preset, cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(dir) = &cli.data {
        cfg.data.dir = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    let mut p = Pipeline::open(cfg.clone())?;
    match cli.command {
        Command::Train => p.train(),
        Command::Probe => p.probe(),
        Command::Eval => p.evaluate().map(|_| ()),
        Command::SweepAlpha => {
            let sweep = sweep_alpha(&cfg, &p)?;
            write_csv(&p.out.join("alpha.csv"), &sweep.rows)?;
            std::fs::write(p.out.join("alpha.json"), serde_json::to_string_pretty(&sweep)? + "\n")?;
            println!("selected alpha_gen {:e} ({})", sweep.selected, sweep.rule);
            Ok(())
        }
        Command::SweepTemp => p.sweep_temperature().map(|_| ()),
        Command::Report => p.report(),
        Command::Figures => p.figures(),
        Command::All => p.all().map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
