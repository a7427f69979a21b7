use std::path::{Path, PathBuf};
use std::process::{Command as Process, ExitCode};

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use log::info;

use cfloss::backbone::propagate;
use cfloss::dataset::{build_dataset, filter_min_interactions, SplitFractions};
use cfloss::evaluator::DEFAULT_CUTOFFS;
use cfloss::io::{load_interactions, load_prepared, save_prepared, InteractionFormat};
use cfloss::loss::{LossKind, MARGIN_GRID};
use cfloss::sampler::NEGATIVE_GRID;
use cfloss::synthetic::{block_preferences, BlockConfig};
use cfloss::{adjacency, checkpoint, evaluate, train, Loss, Split};
use cfloss_cli::config::{parse_config, TrainArgs, UsageError};
use cfloss_cli::{gradcheck, report};

#[derive(Parser)]
#[command(name = "cfloss", version, about = "Train and evaluate ranking losses for collaborative filtering")]
struct Cli {
    /// Worker threads (0 lets the runtime decide)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index, filter and split a raw interaction file into a dataset directory
    Prepare {
        #[arg(long)]
        input: PathBuf,
        /// edge-list (`user item ...`) or adjacency-list (`user item item ...`)
        #[arg(long, default_value = "edge-list")]
        format: InteractionFormat,
        /// Field separator; whitespace when omitted (MovieLens `.dat` files use `::`)
        #[arg(long)]
        delimiter: Option<String>,
        /// train,valid,test fractions
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
        split: Vec<f64>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Drop users and items with fewer interactions, repeated until stable
        #[arg(long, default_value_t = 0)]
        min_interactions: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded block-preference edge list
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        users: usize,
        #[arg(long, default_value_t = 1000)]
        items: usize,
        #[arg(long, default_value_t = 50)]
        per_user: usize,
    },
    /// Train one model and write metrics, checkpoint and summary
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        args: TrainArgs,
        /// Single thread and no wall-clock column in metrics.csv (timings go to timing.csv)
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train once per grid value with shared settings and tabulate the results
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        grid: Grid,
        /// Custom grid values instead of the built-in ones
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Option<Vec<String>>,
        #[command(flatten)]
        args: TrainArgs,
        /// Run grid points as this many concurrent processes
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on a tiny random instance
    Gradcheck {
        #[arg(long)]
        loss: LossKind,
        #[arg(long, default_value_t = 0)]
        backbone_layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, allow_hyphen_values = true)]
        margin: Option<f64>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
    /// Evaluate a checkpoint on the validation or test split
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        split: SplitArg,
        /// Propagation layers; read from config.txt beside the checkpoint when omitted
        #[arg(long)]
        layers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Negatives,
    Margin,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        set_threads(cli.threads);
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => match e.downcast_ref::<UsageError>() {
            Some(u) => Cli::command().error(ErrorKind::ArgumentConflict, u).exit(),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}

fn set_threads(n: usize) {
    // Fails only if the pool already exists, which leaves the earlier setting in place.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Prepare {
            input,
            format,
            delimiter,
            split,
            seed,
            min_interactions,
            out,
        } => {
            let split = SplitFractions::new(split[0], split[1], split[2]).map_err(|e| UsageError(e.to_string()))?;
            let mut pairs = load_interactions(&input, format, delimiter.as_deref())?;
            if min_interactions > 1 {
                let before = pairs.len();
                pairs = filter_min_interactions(&pairs, min_interactions);
                info!("kept {} of {before} pairs with at least {min_interactions} interactions", pairs.len());
            }
            let ds = build_dataset(&pairs, split, seed)?;
            save_prepared(&ds, &out)?;
            println!("{}", ds.stats_line());
        }
        Command::Synth {
            out,
            seed,
            users,
            items,
            per_user,
        } => {
            let cfg = BlockConfig {
                num_users: users,
                num_items: items,
                per_user,
                ..BlockConfig::desk_scale()
            };
            let pairs = block_preferences(&cfg, seed).map_err(|e| UsageError(e.to_string()))?;
            let text: String = pairs.iter().map(|(u, i)| format!("{u} {i}\n")).collect();
            report::write(&out, text.as_bytes())?;
            println!("wrote {} pairs to {}", pairs.len(), out.display());
        }
        Command::Train {
            data,
            args,
            deterministic,
            out,
        } => {
            let cfg = args.resolve()?;
            if deterministic {
                set_threads(1);
            }
            run_train(&data, &cfg, deterministic, &out)?;
        }
        Command::Sweep {
            data,
            grid,
            values,
            args,
            jobs,
            out,
        } => run_sweep(&data, grid, values, &args, jobs, &out)?,
        Command::Gradcheck {
            loss,
            backbone_layers,
            seed,
            margin,
            negatives,
            dim,
        } => {
            let negatives = match (loss, negatives) {
                (LossKind::Bpr, Some(n)) if n != 1 => {
                    return Err(UsageError(format!("bpr uses one negative, got --negatives {n}")).into())
                }
                (LossKind::Bpr, _) => 1,
                (_, n) => n.unwrap_or(4),
            };
            let loss = Loss::new(loss, margin.unwrap_or(cfloss::loss::DEFAULT_MARGIN));
            let inst = gradcheck::random_instance(seed, negatives, dim)?;
            let r = gradcheck::check(&inst, &loss, backbone_layers)?;
            println!(
                "{} users, {} items, {} samples x {} negatives, K={backbone_layers}, loss {}",
                inst.dataset.num_users,
                inst.dataset.num_items,
                inst.batch.len(),
                negatives,
                r.loss
            );
            if r.analytic.iter().all(|&g| g == 0.0) {
                let numeric_zero = r.numeric.iter().all(|&g| g == 0.0);
                println!("analytic gradient is identically zero (finite differences zero: {numeric_zero})");
            }
            println!("max relative error {:.3e} over {} parameters", r.max_relative_error, r.analytic.len());
            if !r.passed() {
                println!("FAIL: above {:e}", gradcheck::TOLERANCE);
                return Ok(ExitCode::FAILURE);
            }
            println!("PASS");
        }
        Command::Evaluate {
            data,
            checkpoint: path,
            split,
            layers,
        } => {
            let ds = load_prepared(&data)?;
            let state = checkpoint::load(&path)?;
            if state.num_users() != ds.num_users || state.num_items() != ds.num_items {
                bail!(
                    "checkpoint holds {} users / {} items but the dataset has {} / {}",
                    state.num_users(),
                    state.num_items(),
                    ds.num_users,
                    ds.num_items
                );
            }
            let layers = match layers {
                Some(k) => k,
                None => layers_beside(&path)?,
            };
            let emb = propagate(&state, &adjacency::build_adjacency(&ds), layers)?;
            let m = evaluate(&emb, &ds, split.into(), &DEFAULT_CUTOFFS)?;
            for k in DEFAULT_CUTOFFS {
                println!("recall@{k} = {}", m.recall(k));
                println!("ndcg@{k} = {}", m.ndcg(k));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Layer count recorded in the `config.txt` written next to a checkpoint.
fn layers_beside(checkpoint: &Path) -> Result<usize> {
    let path = checkpoint.with_file_name("config.txt");
    if !path.exists() {
        return Ok(cfloss::TrainConfig::default().layers);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = parse_config(&text, &path)?;
    match cfg.get("layers") {
        Some(v) => v.parse().with_context(|| format!("layers in {}", path.display())),
        None => Ok(cfloss::TrainConfig::default().layers),
    }
}

fn run_train(data: &Path, cfg: &cfloss::TrainConfig, deterministic: bool, out: &Path) -> Result<()> {
    let ds = load_prepared(data)?;
    info!("{}", ds.stats_line());
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    report::write(&out.join("config.txt"), cfg.echo().as_bytes())?;
    let outcome = train(&ds, cfg)?;
    let r = &outcome.report;
    report::write(&out.join("metrics.csv"), &report::metrics_csv(r, !deterministic)?)?;
    if deterministic {
        report::write(&out.join("timing.csv"), &report::timing_csv(r)?)?;
    }
    checkpoint::save(&outcome.state, &out.join("checkpoint.bin"))?;
    let summary = report::summary_text(r);
    report::write(&out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn run_sweep(
    data: &Path,
    grid: Grid,
    values: Option<Vec<String>>,
    args: &TrainArgs,
    jobs: usize,
    out: &Path,
) -> Result<()> {
    let (name, values): (&str, Vec<String>) = match (grid, values) {
        (_, Some(v)) if v.iter().all(|s| s.trim().is_empty()) => {
            return Err(UsageError("--values needs at least one grid value".into()).into())
        }
        (Grid::Negatives, v) => (
            "negatives",
            v.unwrap_or_else(|| NEGATIVE_GRID.iter().map(|n| n.to_string()).collect()),
        ),
        (Grid::Margin, v) => (
            "margin",
            v.unwrap_or_else(|| MARGIN_GRID.iter().map(|m| m.to_string()).collect()),
        ),
    };
    let values: Vec<String> = values.into_iter().map(|v| v.trim().to_string()).collect();
    let base = args.resolve()?;
    match (grid, base.loss) {
        (Grid::Negatives, LossKind::Bpr) => {
            return Err(UsageError("bpr has a fixed single negative; sweep ssm or simce".into()).into())
        }
        (Grid::Margin, loss) if loss != LossKind::SimCe => {
            return Err(UsageError(format!("the margin only affects simce, not {loss}")).into())
        }
        _ => {}
    }
    // Resolve every point up front so a bad value fails before any training.
    let mut points = Vec::new();
    for v in &values {
        let mut point = args.clone();
        match grid {
            Grid::Negatives => point.negatives = Some(v.parse().map_err(|e| UsageError(format!("grid value {v:?}: {e}")))?),
            Grid::Margin => point.margin = Some(v.parse().map_err(|e| UsageError(format!("grid value {v:?}: {e}")))?),
        }
        let cfg = point.resolve()?;
        points.push((v.clone(), cfg, out.join(format!("{name}_{v}"))));
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    if jobs <= 1 {
        for (v, cfg, dir) in &points {
            info!("{name} = {v}");
            run_train(data, cfg, false, dir)?;
        }
    } else {
        let exe = std::env::current_exe().context("locating the cfloss executable")?;
        for chunk in points.chunks(jobs) {
            let mut children = Vec::new();
            for (v, cfg, dir) in chunk {
                std::fs::create_dir_all(dir)?;
                let cfg_path = dir.join("requested.txt");
                report::write(&cfg_path, cfg.echo().as_bytes())?;
                let child = Process::new(&exe)
                    .arg("train")
                    .arg("--data")
                    .arg(data)
                    .arg("--config")
                    .arg(&cfg_path)
                    .arg("--out")
                    .arg(dir)
                    .stdout(std::process::Stdio::null())
                    .spawn()
                    .with_context(|| format!("starting run for {name} = {v}"))?;
                children.push((v, child));
            }
            for (v, mut child) in children {
                let status = child.wait()?;
                if !status.success() {
                    bail!("run for {name} = {v} failed with {status}");
                }
            }
        }
    }

    let mut rows = Vec::new();
    for (v, _, dir) in &points {
        rows.push(report::sweep_row(v, &report::read_summary(&dir.join("summary.txt"))?));
    }
    let table = report::sweep_csv(name, &rows)?;
    report::write(&out.join("sweep.csv"), &table)?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}
