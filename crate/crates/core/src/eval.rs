//! Ranking metrics per impression (AUC, MRR, nDCG@k) and their aggregation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tensor};
use crate::corpus::NewsCatalog;
use crate::error::{Error, Result};
use crate::model::{AwrsModel, ImpressionFeatures};

pub const DUMP_SCHEMA: &str = "awrs.impressions.v1";

#[derive(Clone, Debug, PartialEq)]
pub struct RankedImpression {
    pub impression_id: String,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `None` for single-class impressions.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l > 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    // Rank-sum with midranks for ties.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] > 0 {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Candidate indices by descending score, ties in original order.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Mean reciprocal rank over all positives; `None` without positives.
pub fn mrr(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let order = ranking(scores);
    let (mut sum, mut count) = (0.0, 0usize);
    for (r, &i) in order.iter().enumerate() {
        if labels[i] > 0 {
            sum += 1.0 / (r + 1) as f64;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

fn dcg(labels_in_order: impl Iterator<Item = u8>, k: usize) -> f64 {
    labels_in_order
        .take(k)
        .enumerate()
        .map(|(r, l)| (2f64.powi(l as i32) - 1.0) / ((r + 2) as f64).log2())
        .sum()
}

/// nDCG over the top `k`; `None` without positives.
pub fn ndcg_at_k(scores: &[f64], labels: &[u8], k: usize) -> Option<f64> {
    if !labels.iter().any(|&l| l > 0) {
        return None;
    }
    let actual = dcg(ranking(scores).into_iter().map(|i| labels[i]), k);
    let mut ideal: Vec<u8> = labels.to_vec();
    ideal.sort_by(|a, b| b.cmp(a));
    Some(actual / dcg(ideal.into_iter(), k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpressionMetrics {
    pub impression_id: String,
    pub auc: Option<f64>,
    pub mrr: Option<f64>,
    pub ndcg5: Option<f64>,
    pub ndcg10: Option<f64>,
}

impl ImpressionMetrics {
    pub fn of(imp: &RankedImpression) -> Self {
        Self {
            impression_id: imp.impression_id.clone(),
            auc: auc(&imp.scores, &imp.labels),
            mrr: mrr(&imp.scores, &imp.labels),
            ndcg5: ndcg_at_k(&imp.scores, &imp.labels, 5),
            ndcg10: ndcg_at_k(&imp.scores, &imp.labels, 10),
        }
    }
}

/// Dataset-level means over included impressions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub impressions: usize,
    /// Impressions with a single label class, left out of AUC.
    pub auc_excluded: usize,
    /// Impressions without positives, left out of MRR and nDCG.
    pub rank_excluded: usize,
    /// Impressions dropped because a candidate was not in the catalog.
    pub skipped_missing: usize,
    pub fingerprint: Option<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn aggregate(per: &[ImpressionMetrics], skipped_missing: usize) -> MetricReport {
    MetricReport {
        auc: mean(per.iter().filter_map(|m| m.auc)),
        mrr: mean(per.iter().filter_map(|m| m.mrr)),
        ndcg5: mean(per.iter().filter_map(|m| m.ndcg5)),
        ndcg10: mean(per.iter().filter_map(|m| m.ndcg10)),
        impressions: per.len(),
        auc_excluded: per.iter().filter(|m| m.auc.is_none()).count(),
        rank_excluded: per.iter().filter(|m| m.mrr.is_none()).count(),
        skipped_missing,
        fingerprint: None,
    }
}

/// Scores every impression with `model`.
pub fn rank_impressions<F: Real>(
    model: &AwrsModel<F>,
    catalog: &NewsCatalog,
    features: &[ImpressionFeatures],
    cache: Option<&Tensor<F>>,
) -> Result<Vec<RankedImpression>> {
    let owned;
    let cache = match cache {
        Some(c) => c,
        None => {
            owned = model.encode_catalog(catalog)?;
            &owned
        }
    };
    features
        .par_iter()
        .map(|f| {
            Ok(RankedImpression {
                impression_id: f.impression_id.clone(),
                scores: model.score_impression(catalog, f, Some(cache))?,
                labels: f.candidates.iter().map(|c| c.label).collect(),
            })
        })
        .collect()
}

/// Per-impression metrics plus their aggregate.
pub fn evaluate<F: Real>(
    model: &AwrsModel<F>,
    catalog: &NewsCatalog,
    features: &[ImpressionFeatures],
    skipped_missing: usize,
) -> Result<(Vec<ImpressionMetrics>, MetricReport)> {
    let ranked = rank_impressions(model, catalog, features, None)?;
    let per: Vec<ImpressionMetrics> = ranked.iter().map(ImpressionMetrics::of).collect();
    let report = aggregate(&per, skipped_missing);
    Ok((per, report))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// `impression_id, auc, mrr, ndcg5, ndcg10`; excluded metrics are empty.
pub fn write_dump_csv(mut out: impl Write, per: &[ImpressionMetrics]) -> Result<()> {
    writeln!(out, "# schema={DUMP_SCHEMA}").map_err(|e| Error::io("<csv>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["impression_id", "auc", "mrr", "ndcg5", "ndcg10"])?;
    for m in per {
        w.write_record([
            m.impression_id.clone(),
            fmt_opt(m.auc),
            fmt_opt(m.mrr),
            fmt_opt(m.ndcg5),
            fmt_opt(m.ndcg10),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads back a dump written by [`write_dump_csv`].
pub fn read_dump_csv(text: &str) -> Result<Vec<ImpressionMetrics>> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let parse = |s: &str| -> Option<f64> { s.parse().ok() };
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        out.push(ImpressionMetrics {
            impression_id: row[0].to_owned(),
            auc: parse(&row[1]),
            mrr: parse(&row[2]),
            ndcg5: parse(&row[3]),
            ndcg10: parse(&row[4]),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

/// Metric means and spreads over runs with different seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub auc: MeanStd,
    pub mrr: MeanStd,
    pub ndcg5: MeanStd,
    pub ndcg10: MeanStd,
}

impl SeedSummary {
    pub fn of(seeds: &[u64], reports: &[MetricReport]) -> Self {
        let pick = |f: fn(&MetricReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            seeds: seeds.to_vec(),
            auc: pick(|r| r.auc),
            mrr: pick(|r| r.mrr),
            ndcg5: pick(|r| r.ndcg5),
            ndcg10: pick(|r| r.ndcg10),
        }
    }
}
