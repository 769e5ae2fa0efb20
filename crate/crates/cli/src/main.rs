use clap::{Parser, Subcommand};
use risbeam_cli::{
    cmd_baseline, cmd_beamsplit, cmd_eval, cmd_gen, cmd_gradcheck, cmd_report, cmd_train,
    exit_code_for, ExperimentSpec, Sweep,
};
use risbeam_core::config::{RisArch, SystemConfig};
use risbeam_core::error::CoreResult;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "risbeam",
    version,
    about = "Near-field wideband RIS-assisted MIMO-OFDM simulator and optimizer"
)]
struct Cli {
    /// Config file (TOML). Falls back to the built-in desk-scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master RNG seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// RIS architecture: classic | ttd-ris | sa-ris | ideal (benchmark-only).
    #[arg(long, global = true, default_value = "ttd-ris")]
    arch: String,
    /// Worker threads for batch-parallel training.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Sweep axis, e.g. snr_t=0:5:20, snr_r=0:5:20, bandwidth=5e8:5e8:2e9.
    #[arg(long, global = true)]
    sweep: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the channel dataset (train + val splits).
    Gen,
    /// Train the end-to-end model on a generated dataset.
    Train {
        /// Dataset directory (defaults to --out).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a trained checkpoint, optionally sweeping an axis.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Checkpoint path (defaults to <out>/model.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate at most this many validation scenarios.
        #[arg(long)]
        scenarios: Option<usize>,
    },
    /// Perfect-CSI projected-gradient and random baselines.
    Baseline {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        scenarios: Option<usize>,
    },
    /// Per-subcarrier beam gain profiles (PS-only vs TTD-aligned).
    Beamsplit {
        /// Focal point "x,y,z" in meters.
        #[arg(long)]
        focal: Option<String>,
    },
    /// Verify reverse-mode gradients against finite differences.
    Gradcheck,
    /// Summarize result CSVs in the output directory.
    Report,
}

fn load_config(cli: &Cli) -> CoreResult<SystemConfig> {
    let mut cfg = match &cli.config {
        Some(path) => SystemConfig::load(path)?,
        None => SystemConfig::desk_default(),
    };
    if let Some(seed) = cli.seed {
        cfg.system.rng_seed = seed;
    }
    Ok(cfg)
}

fn parse_focal(text: &str) -> CoreResult<[f64; 3]> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(risbeam_core::CoreError::config(
            "focal point must be x,y,z",
        ));
    }
    let mut out = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .trim()
            .parse()
            .map_err(|_| risbeam_core::CoreError::config(format!("bad focal coord `{p}`")))?;
    }
    Ok(out)
}

fn run(cli: Cli) -> CoreResult<()> {
    let config = load_config(&cli)?;
    let arch: RisArch = cli.arch.parse()?;
    let mut spec = ExperimentSpec::new(config, cli.out.clone(), arch);
    spec.workers = cli.workers;
    if let Some(s) = &cli.sweep {
        spec.sweep = Some(Sweep::parse(s)?);
    }
    match cli.command {
        Command::Gen => {
            let files = cmd_gen(&spec)?;
            println!("wrote {} channel sets under {}", files.len(), spec.out_dir.display());
        }
        Command::Train { dataset } => {
            let dir = dataset.unwrap_or_else(|| spec.out_dir.clone());
            let ckpt = cmd_train(&spec, &dir)?;
            println!("checkpoint: {}", ckpt.display());
        }
        Command::Eval {
            dataset,
            checkpoint,
            scenarios,
        } => {
            spec.scenarios = scenarios;
            let dir = dataset.unwrap_or_else(|| spec.out_dir.clone());
            let ckpt = checkpoint.unwrap_or_else(|| spec.out_dir.join("model.ckpt"));
            let out = cmd_eval(&spec, &dir, &ckpt)?;
            println!("results: {}", out.display());
        }
        Command::Baseline { dataset, scenarios } => {
            spec.scenarios = scenarios;
            let dir = dataset.unwrap_or_else(|| spec.out_dir.clone());
            let out = cmd_baseline(&spec, &dir)?;
            println!("baseline results: {}", out.display());
        }
        Command::Beamsplit { focal } => {
            if let Some(f) = focal {
                spec.focal = Some(parse_focal(&f)?);
            }
            let out = cmd_beamsplit(&spec)?;
            println!("profiles: {}", out.display());
        }
        Command::Gradcheck => {
            let out = cmd_gradcheck(&spec)?;
            println!("gradient report: {}", out.display());
        }
        Command::Report => {
            let out = cmd_report(&spec)?;
            println!("report: {}", out.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code_for(&err));
    }
}
