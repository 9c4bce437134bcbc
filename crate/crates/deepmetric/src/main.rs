use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deepmetric::checkpoint;
use deepmetric::commands::{self, MODEL_FILE};
use deepmetric::config::{ExperimentConfig, PartitionerConfig, SweepAxis};
use deepmetric::{CliError, Result};
use deepmetric_core::partition::PartitionerKind;

#[derive(Parser)]
#[command(name = "deepmetric", version, about = "Deep metric learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an embedder and write a checkpoint and history.csv.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a partitioner on a trained embedding and score the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Embedder checkpoint; defaults to model.ckpt in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_parser = parse_partitioner)]
        partitioner: Option<PartitionerKind>,
        /// Neighbours for kNN.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train and evaluate every variant along one axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// losses, partitioners, augmentations or resolutions.
        #[arg(long, value_parser = parse_axis)]
        sweep: Option<SweepAxis>,
        #[arg(long, value_parser = parse_partitioner)]
        partitioner: Option<PartitionerKind>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// t-SNE layout of train and test embeddings, as CSV and SVG.
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train without some classes and score seen and unseen classes.
    Openset {
        #[command(flatten)]
        common: Common,
        /// Comma-separated class ids to withhold.
        #[arg(long, value_delimiter = ',')]
        withheld: Vec<usize>,
    },
}

fn parse_partitioner(s: &str) -> std::result::Result<PartitionerKind, String> {
    PartitionerKind::parse(s).ok_or_else(|| format!("expected one of knn, lr, svm, mlp, gmm; got `{s}`"))
}

fn parse_axis(s: &str) -> std::result::Result<SweepAxis, String> {
    SweepAxis::parse(s).ok_or_else(|| format!("expected losses, partitioners, augmentations or resolutions; got `{s}`"))
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    ExperimentConfig::load(path)?.resolve(common.seed)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))
}

/// Loads the checkpoint; the experiment comes from `--config` when given,
/// otherwise from the one stored in the checkpoint.
fn model_and_config(common: &Common, checkpoint: Option<&Path>) -> Result<(deepmetric_core::embedder::Model, ExperimentConfig, PathBuf)> {
    let stored_out = common.out.clone();
    let ckpt = match (checkpoint, &stored_out) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(out)) => out.join(MODEL_FILE),
        (None, None) => return Err(CliError::Config("--checkpoint is required".into())),
    };
    let (model, stored) = checkpoint::load_model(&ckpt)?;
    let cfg = match &common.config {
        Some(_) => load_config(common)?,
        None => stored.resolve(common.seed)?,
    };
    let out = out_dir(common, &cfg)?;
    Ok((model, cfg, out))
}

fn partitioner_config(cfg: &ExperimentConfig, kind: Option<PartitionerKind>, k: Option<usize>) -> Result<PartitionerConfig> {
    let mut p = cfg.partitioner;
    if let Some(kind) = kind {
        p.kind = kind;
    }
    if let Some(k) = k {
        if k == 0 {
            return Err(CliError::Config("--k must be positive".into()));
        }
        p.k = k;
    }
    Ok(p)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, &cfg)?;
            let t = commands::cmd_train(&cfg, &out)?;
            let last = t.history.epochs.last();
            println!(
                "trained {} epochs; final softmax loss {}; checkpoint {}",
                t.history.epochs.len(),
                last.map_or(f64::NAN, |r| r.softmax_loss),
                t.checkpoint.display()
            );
        }
        Command::Evaluate { common, checkpoint, partitioner, k } => {
            let (model, cfg, out) = model_and_config(&common, checkpoint.as_deref())?;
            let pcfg = partitioner_config(&cfg, partitioner, k)?;
            let report = commands::cmd_evaluate(&model, &cfg, &pcfg, &out)?;
            for (name, value) in deepmetric::report::metric_rows(&report) {
                println!("{name}: {value}");
            }
        }
        Command::Ablate { common, sweep, partitioner, k } => {
            let mut cfg = load_config(&common)?;
            cfg.partitioner = partitioner_config(&cfg, partitioner, k)?;
            let out = out_dir(&common, &cfg)?;
            let axis = sweep
                .or(cfg.ablate.axis)
                .ok_or_else(|| CliError::Config("no sweep axis: pass --sweep or set ablate.axis".into()))?;
            let rows = commands::cmd_ablate(&cfg, axis, &out)?;
            for r in &rows {
                match (&r.report, &r.error) {
                    (Some(rep), _) => println!(
                        "{}: accuracy {} rand_index {}",
                        r.variant,
                        rep.accuracy().map_or("n/a".into(), deepmetric::report::percent),
                        rep.rand_index.map_or("n/a".into(), deepmetric::report::percent)
                    ),
                    (None, Some(e)) => println!("{}: failed: {e}", r.variant),
                    (None, None) => {}
                }
            }
        }
        Command::Project { common, checkpoint, k } => {
            let (model, cfg, out) = model_and_config(&common, checkpoint.as_deref())?;
            let k = partitioner_config(&cfg, None, k)?.k;
            let p = commands::cmd_project(&model, &cfg, k, &out)?;
            println!(
                "projected {} points; train RandIndex={} test RandIndex={}",
                p.rows,
                deepmetric::report::percent(p.train_rand_index),
                deepmetric::report::percent(p.test_rand_index)
            );
        }
        Command::Openset { common, withheld } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, &cfg)?;
            let withheld = if withheld.is_empty() { cfg.openset.withheld.clone() } else { withheld };
            let o = commands::cmd_openset(&cfg, &withheld, &out)?;
            println!(
                "seen accuracy {}; unseen accuracy {} (chance {})",
                o.seen.accuracy().map_or("n/a".into(), deepmetric::report::percent),
                o.unseen.accuracy().map_or("n/a".into(), deepmetric::report::percent),
                deepmetric::report::percent(o.unseen_chance)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
