//! End-to-end runs: load a corpus, build features against the exposure
//! timeline, train, evaluate, and compare ablations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::config::{AblationMode, RunConfig};
use crate::corpus::{
    load_word_vectors, parse_behaviors_file, parse_news_file, ImpressionRecord, NewsCatalog, TimeSplit,
    DEFAULT_INIT_RANGE,
};
use crate::error::Result;
use crate::eval::{evaluate, ImpressionMetrics, MetricReport, SeedSummary};
use crate::model::{extract_features, AwrsModel, ImpressionFeatures, ModelSizes};
use crate::stats::{build_timeline, BucketTimeline};
use crate::train::{train, TrainingHistory};

/// A corpus split chronologically and turned into model features.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub catalog: NewsCatalog,
    pub records: Vec<ImpressionRecord>,
    pub timeline: BucketTimeline,
    pub split: TimeSplit,
    pub train: Vec<ImpressionFeatures>,
    pub valid: Vec<ImpressionFeatures>,
    pub test: Vec<ImpressionFeatures>,
    /// Impressions dropped per split (train, valid, test) for naming an
    /// article missing from the catalog.
    pub skipped_missing: [usize; 3],
    /// Malformed behaviors rows skipped while parsing.
    pub skipped_rows: usize,
}

/// Features for `records`, each read from the snapshot in force at its
/// time. Returns the features and the number of dropped impressions.
pub fn featurize<'a>(
    records: impl IntoIterator<Item = &'a ImpressionRecord>,
    catalog: &NewsCatalog,
    timeline: &BucketTimeline,
    d: usize,
    history_len: usize,
) -> (Vec<ImpressionFeatures>, usize) {
    let mut out = Vec::new();
    let mut missing = 0;
    for r in records {
        match extract_features(r, catalog, timeline.snapshot_at(r.time), d, history_len) {
            Some(f) => out.push(f),
            None => missing += 1,
        }
    }
    (out, missing)
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let catalog = parse_news_file(&cfg.data.news, cfg.model.max_title_len)?;
        let mut records = Vec::new();
        let mut skipped_rows = 0;
        for path in &cfg.data.behaviors {
            let log = parse_behaviors_file(path)?;
            skipped_rows += log.skipped.len();
            records.extend(log.records);
        }
        records.sort_by_key(|r| r.time);
        let mut data = Self::from_parts(catalog, records, cfg)?;
        data.skipped_rows = skipped_rows;
        Ok(data)
    }

    /// Builds the dataset from an already parsed catalog and time-sorted log.
    pub fn from_parts(catalog: NewsCatalog, records: Vec<ImpressionRecord>, cfg: &RunConfig) -> Result<Self> {
        let timeline = build_timeline(&records, cfg.data.bucket_width)?;
        let split = cfg.split.resolve(&records);
        let (tr, va, te) = split.partition(&records);
        let m = &cfg.model;
        let (train, s0) = featurize(tr, &catalog, &timeline, m.d, m.history_len);
        let (valid, s1) = featurize(va, &catalog, &timeline, m.d, m.history_len);
        let (test, s2) = featurize(te, &catalog, &timeline, m.d, m.history_len);
        Ok(Self {
            catalog,
            records,
            timeline,
            split,
            train,
            valid,
            test,
            skipped_missing: [s0, s1, s2],
            skipped_rows: 0,
        })
    }

    /// Same corpus with features rebuilt for another grid resolution or
    /// history length.
    pub fn refeaturize(&self, cfg: &RunConfig) -> Result<Self> {
        Self::from_parts(self.catalog.clone(), self.records.clone(), cfg)
    }
}

/// Freshly initialized model for `cfg`, with word vectors when configured.
pub fn init_model<F: Real>(cfg: &RunConfig, catalog: &NewsCatalog) -> Result<AwrsModel<F>> {
    let pretrained = match &cfg.data.word_vectors {
        Some(path) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
            let wv = load_word_vectors::<F>(path, &catalog.vocab, cfg.model.word_dim, DEFAULT_INIT_RANGE, &mut rng)?;
            log::info!("word vectors: {} of {} tokens found", wv.found, catalog.vocab.len());
            Some(wv.matrix)
        }
        None => None,
    };
    AwrsModel::new(cfg.model.clone(), ModelSizes::of(catalog), pretrained, cfg.seed)
}

pub struct RunOutcome {
    pub model: AwrsModel<f32>,
    pub history: TrainingHistory,
    pub test_metrics: Vec<ImpressionMetrics>,
    pub test_report: MetricReport,
}

/// Trains on the train split with early stopping on validation, then
/// evaluates the retained model on the test split.
pub fn train_and_evaluate(cfg: &RunConfig, data: &Dataset) -> Result<RunOutcome> {
    let mut model = init_model::<f32>(cfg, &data.catalog)?;
    let history = train(&mut model, &data.catalog, &data.train, &data.valid, &cfg.train, cfg.seed)?;
    let (test_metrics, mut test_report) = evaluate(&model, &data.catalog, &data.test, data.skipped_missing[2])?;
    test_report.fingerprint = Some(cfg.fingerprint());
    Ok(RunOutcome {
        model,
        history,
        test_metrics,
        test_report,
    })
}

/// One ablation row: a mode with its per-seed reports and their summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub reports: Vec<MetricReport>,
    pub summary: SeedSummary,
}

/// Trains every mode for every seed on the same data.
pub fn ablate(cfg: &RunConfig, data: &Dataset, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for mode in AblationMode::ALL {
        let mut reports = Vec::new();
        for &seed in seeds {
            let mut c = cfg.clone();
            c.model.mode = mode;
            c.seed = seed;
            let out = train_and_evaluate(&c, data)?;
            log::info!("{} seed {seed}: test auc {:.4}", mode.label(), out.test_report.auc);
            reports.push(out.test_report);
        }
        let summary = SeedSummary::of(seeds, &reports);
        rows.push(AblationRow { mode, reports, summary });
    }
    Ok(rows)
}

/// Fixed-width comparison table of ablation rows.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!("{:<12}{:>16}{:>16}{:>16}{:>16}\n", "mode", "AUC", "MRR", "nDCG@5", "nDCG@10");
    for r in rows {
        let cell = |m: crate::eval::MeanStd| format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std);
        s.push_str(&format!(
            "{:<12}{:>16}{:>16}{:>16}{:>16}\n",
            r.mode.label(),
            cell(r.summary.auc),
            cell(r.summary.mrr),
            cell(r.summary.ndcg5),
            cell(r.summary.ndcg10)
        ));
    }
    s
}
