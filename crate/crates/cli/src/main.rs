use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use capfuse::evalbench::{overlay_text, plot_data_text};
use capfuse::fusenet::{load_checkpoint, save_checkpoint};
use capfuse::magloc::diagnostics_text;
use capfuse::pipeline::{align_demo, evaluate, localize, prepare_datasets, simulate_datasets, train_on};
use capfuse::sim::{read_dataset, write_dataset, Dataset};
use capfuse::{Profile, RunConfig};

#[derive(Parser)]
#[command(name = "capfuse", version, about = "Magnetic and visual pose fusion for capsule robots")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Hyperparameter preset; overrides the config.
    #[arg(long, global = true, value_parser = ["desk", "paper"])]
    profile: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate `n_datasets` seeded datasets into the --out directory.
    Simulate,
    /// Localize the magnetic stream of one dataset frame by frame.
    LocalizeMag { dataset: PathBuf },
    /// Train a fusion network; writes the checkpoint to --out and the log
    /// next to it.
    Train {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
    },
    /// Compare fusion with both baselines; writes reports into --out.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
    },
    /// Align a rendered synthetic window and report the recovery error.
    AlignDemo,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let profile: Option<Profile> = common.profile.as_deref().map(str::parse).transpose()?;
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path, profile).with_context(|| format!("reading config {}", path.display()))?,
        None => RunConfig::with_profile(profile.unwrap_or_default()),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(common: &Common) -> Result<&Path> {
    match &common.out {
        Some(p) => Ok(p),
        None => bail!("this command needs --out"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes to --out when given, otherwise to stdout.
fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(p) => write_text(p, text),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<Dataset>> {
    paths
        .iter()
        .map(|p| read_dataset(p).with_context(|| format!("reading dataset {}", p.display())))
        .collect()
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let cfg = load_config(common)?;
    match &cli.command {
        Command::Simulate => {
            let dir = require_out(common)?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (i, ds) in simulate_datasets(&cfg)?.iter().enumerate() {
                let path = dir.join(format!("dataset_{i:03}.txt"));
                write_dataset(&path, ds).with_context(|| format!("writing {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::LocalizeMag { dataset } => {
            let ds = read_dataset(dataset).with_context(|| format!("reading dataset {}", dataset.display()))?;
            let estimates = localize(&ds, &cfg)?;
            let gated = estimates.iter().filter(|e| e.gated).count();
            let text = format!(
                "{}\n# t x y z hx hy hz iterations residual curvature converged gated\n{}",
                cfg.header_line("magloc"),
                diagnostics_text(&estimates)
            );
            emit(common, &text)?;
            eprintln!("localized {} frames, {gated} gated", estimates.len());
        }
        Command::Train { datasets } => {
            let out = require_out(common)?;
            let prepared = prepare_datasets(&read_all(datasets)?, &cfg)?;
            let (ckpt, log) = train_on(&prepared, &cfg)?;
            save_checkpoint(out, &ckpt, Some(&cfg.header_line("checkpoint")))
                .with_context(|| format!("writing {}", out.display()))?;
            let mut text = format!("{}\n", cfg.header_line("trainlog"));
            text.push_str(&log.records_text());
            text.push_str(&format!(
                "# best_epoch {} stopped_early {} beta {} beta_flagged {} diverged_at {}\n",
                log.best_epoch.map_or("-".into(), |e| e.to_string()),
                log.stopped_early,
                ckpt.hyperparams.beta_loss,
                log.beta_flagged,
                log.diverged_at.map_or("-".into(), |e| e.to_string()),
            ));
            write_text(&sibling(out, ".log"), &text)?;
            if let Some(epoch) = log.diverged_at {
                bail!(capfuse::Error::TrainingDiverged { epoch });
            }
            eprintln!("trained {} epochs, best {:?}", log.records.len(), log.best_epoch);
        }
        Command::Evaluate { checkpoint, datasets } => {
            let dir = require_out(common)?;
            let ckpt = load_checkpoint(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let prepared = prepare_datasets(&read_all(datasets)?, &cfg)?;
            let comparison = evaluate(&prepared, &ckpt, &cfg)?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let report = format!("{}\n{}", cfg.header_line("rmse"), plot_data_text(&comparison.reports));
            write_text(&dir.join("rmse.txt"), &report)?;
            for (i, (runs, p)) in comparison.trajectories.iter().zip(&prepared).enumerate() {
                let text = format!("{}\n{}", cfg.header_line("overlay"), overlay_text(runs, &p.gt));
                write_text(&dir.join(format!("overlay_{i:03}.txt")), &text)?;
            }
            print!("{}", plot_data_text(&comparison.reports));
        }
        Command::AlignDemo => {
            let demo = align_demo(&cfg)?;
            emit(common, &format!("{}\n{}", cfg.header_line("aligndemo"), demo.to_text()))?;
            let (dt, dr) = demo.max_error();
            eprintln!("max error {dt:e} m, {dr:e} rad");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
