//! Command-line front end. Every command writes under `--out`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::config::{AblationMode, RunConfig};
use crate::corpus::parse_behaviors_file;
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_dump_csv};
use crate::grid::write_grid_csv;
use crate::pipeline::{ablate, format_ablation_table, train_and_evaluate, Dataset};
use crate::stats::{build_timeline, write_snapshot_csv};
use crate::synth::{generate, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "awrs", version, about = "Avoidance-aware news recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-bucket exposure statistics, one CSV per snapshot.
    Stats(StatsArgs),
    /// All snapshots in one scatter CSV plus grid occupancy.
    PlotData(GridArgs),
    /// Articles per engagement cell for every snapshot.
    Grid(GridArgs),
    /// Train, keep the best validation checkpoint, evaluate on test.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test (or validation) split.
    Eval(EvalArgs),
    /// Train all three ablation modes and compare.
    Ablate(AblateArgs),
    /// Generate a synthetic MIND-format corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub behaviors: PathBuf,
    #[arg(long, default_value_t = 3600)]
    pub bucket_width: i64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub behaviors: PathBuf,
    #[arg(long, default_value_t = 3600)]
    pub bucket_width: i64,
    #[arg(long, default_value_t = 5)]
    pub grid_d: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid_d: Option<usize>,
    #[arg(long)]
    pub bucket_width: Option<i64>,
    #[arg(long)]
    pub out: PathBuf,
}

impl Overrides {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.grid_d {
            cfg.model.d = d;
        }
        if let Some(w) = self.bucket_width {
            cfg.data.bucket_width = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub mode: Option<AblationMode>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `test` or `valid`.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Seeds to average over; defaults to the config seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML synthetic spec; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid_d: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs one parsed command and returns the text to print.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Stats(a) => cmd_stats(&a),
        Command::PlotData(a) => cmd_plot_data(&a),
        Command::Grid(a) => cmd_grid(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

pub fn cmd_stats(a: &StatsArgs) -> Result<String> {
    let log = parse_behaviors_file(&a.behaviors)?;
    let timeline = build_timeline(&log.records, a.bucket_width)?;
    let dir = a.out.join("snapshots");
    create_dir(&dir)?;
    for (k, s) in timeline.snapshots().iter().enumerate() {
        write_snapshot_csv(create(&dir.join(format!("bucket_{:05}.csv", k + 1)))?, s)?;
    }
    Ok(format!(
        "{} records ({} skipped), {} snapshots written to {}\n",
        log.records.len(),
        log.skipped.len(),
        timeline.len(),
        dir.display()
    ))
}

pub fn cmd_plot_data(a: &GridArgs) -> Result<String> {
    let log = parse_behaviors_file(&a.behaviors)?;
    let timeline = build_timeline(&log.records, a.bucket_width)?;
    create_dir(&a.out)?;
    timeline.write_csv(create(&a.out.join("scatter.csv"))?)?;
    write_grid_csv(create(&a.out.join("grid.csv"))?, timeline.snapshots(), a.grid_d)?;
    Ok(format!("{} snapshots written to {}\n", timeline.len(), a.out.display()))
}

pub fn cmd_grid(a: &GridArgs) -> Result<String> {
    let log = parse_behaviors_file(&a.behaviors)?;
    let timeline = build_timeline(&log.records, a.bucket_width)?;
    create_dir(&a.out)?;
    write_grid_csv(create(&a.out.join("grid.csv"))?, timeline.snapshots(), a.grid_d)?;
    Ok(format!("grid D={} over {} snapshots\n", a.grid_d, timeline.len()))
}

pub fn cmd_train(a: &RunArgs) -> Result<String> {
    let mut cfg = a.common.load()?;
    if let Some(m) = a.mode {
        cfg.model.mode = m;
    }
    let data = Dataset::load(&cfg)?;
    let out = train_and_evaluate(&cfg, &data)?;
    let dir = &a.common.out;
    create_dir(dir)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml()?)?;
    out.history.write_csv(create(&dir.join("train_log.csv"))?, true)?;
    checkpoint::save(&out.model, dir.join("model.ckpt"))?;
    write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&out.test_report)?)?;
    write_dump_csv(create(&dir.join("impressions.csv"))?, &out.test_metrics)?;
    Ok(format!(
        "best val auc {:.4} (epoch {}), test auc {:.4}, mrr {:.4}, ndcg@5 {:.4}, ndcg@10 {:.4}\n",
        out.history.best_val_auc.unwrap_or(f64::NAN),
        out.history.best_epoch.map_or("-".into(), |e| e.to_string()),
        out.test_report.auc,
        out.test_report.mrr,
        out.test_report.ndcg5,
        out.test_report.ndcg10
    ))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let mut cfg = a.common.load()?;
    let model = checkpoint::load::<f32>(&a.checkpoint)?;
    cfg.model = model.cfg.clone();
    let data = Dataset::load(&cfg)?;
    let (features, missing) = match a.split.as_str() {
        "test" => (&data.test, data.skipped_missing[2]),
        "valid" => (&data.valid, data.skipped_missing[1]),
        other => return Err(Error::Config(format!("unknown split `{other}`"))),
    };
    let (per, mut report) = evaluate(&model, &data.catalog, features, missing)?;
    report.fingerprint = Some(cfg.fingerprint());
    let dir = &a.common.out;
    create_dir(dir)?;
    write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    write_dump_csv(create(&dir.join("impressions.csv"))?, &per)?;
    Ok(format!(
        "{} impressions: auc {:.4}, mrr {:.4}, ndcg@5 {:.4}, ndcg@10 {:.4}\n",
        report.impressions, report.auc, report.mrr, report.ndcg5, report.ndcg10
    ))
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<String> {
    let cfg = a.common.load()?;
    let seeds = if a.seeds.is_empty() { vec![cfg.seed] } else { a.seeds.clone() };
    let data = Dataset::load(&cfg)?;
    let rows = ablate(&cfg, &data, &seeds)?;
    let dir = &a.common.out;
    create_dir(dir)?;
    let table = format_ablation_table(&rows);
    write_text(&dir.join("ablation.txt"), &table)?;
    write_text(&dir.join("ablation.json"), &serde_json::to_string_pretty(&rows)?)?;
    Ok(table)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let mut spec = match &a.config {
        Some(p) => SyntheticSpec::load(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(d) = a.grid_d {
        spec.d = d;
        spec.affinity.clear();
    }
    let corpus = generate(&spec)?;
    corpus.write_to_dir(&a.out)?;
    let clicks = corpus.trace.iter().filter(|t| t.label == 1).count();
    Ok(format!(
        "{} articles, {} impressions, {} clicks written to {}\n",
        corpus.articles.len(),
        corpus.records.len(),
        clicks,
        a.out.display()
    ))
}
