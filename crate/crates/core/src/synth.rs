//! Synthetic MIND-format click logs whose click propensity depends on each
//! article's engagement cell.
//!
//! Articles are published over the simulated period and shown with a
//! decaying exposure schedule, so they drift across the (avoidance, EPI)
//! grid. A user clicks a shown article with probability
//! `base_rate * A'[cell] / mean_slate(A') * appeal * freshness`, clamped to
//! `[0, 1]`, where the cell is read from the statistics at the start of the
//! bucket and `mean_slate` averages `A'` over the displayed candidates
//! (falling back to the mean of `A` when that is zero). Mainstream users use `A`; contrarian users use `A` mirrored
//! along the avoidance axis.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_behaviors_tsv, ImpressionRecord};
use crate::error::{Error, Result};
use crate::grid::article_cell;
use crate::stats::StatsSnapshot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_articles: usize,
    pub n_buckets: usize,
    /// Seconds per bucket.
    pub bucket_width: i64,
    /// Epoch seconds of the first bucket.
    pub start_time: i64,
    pub impressions_per_bucket: usize,
    pub candidates_per_impression: usize,
    /// Grid resolution of `affinity`.
    pub d: usize,
    /// `d x d` propensity multipliers indexed `[epi_idx][av_idx]`; empty
    /// selects the default, which favours low avoidance.
    pub affinity: Vec<Vec<f64>>,
    pub base_rate: f64,
    pub contrarian_fraction: f64,
    pub freshness_half_life_hours: f64,
    /// Buckets an article stays in rotation after publication.
    pub article_lifetime_buckets: usize,
    pub n_categories: usize,
    pub title_len: usize,
    pub vocab_per_category: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_articles: 160,
            n_buckets: 48,
            bucket_width: 3600,
            start_time: 1_573_430_400,
            impressions_per_bucket: 40,
            candidates_per_impression: 8,
            d: 5,
            affinity: Vec::new(),
            base_rate: 0.2,
            contrarian_fraction: 0.5,
            freshness_half_life_hours: 6.0,
            article_lifetime_buckets: 16,
            n_categories: 4,
            title_len: 6,
            vocab_per_category: 30,
            seed: 0,
        }
    }
}

/// `A[e][a] = 0.1 + 1.9 (d - 1 - a) / (d - 1)`: engaging (low-avoidance)
/// cells are up to 20 times more attractive than avoided ones.
pub fn default_affinity(d: usize) -> Vec<Vec<f64>> {
    let span = (d.max(2) - 1) as f64;
    (0..d)
        .map(|_| (0..d).map(|a| 0.1 + 1.9 * (d - 1 - a) as f64 / span).collect())
        .collect()
}

/// Affinity seen by a contrarian user: `A[e][d - 1 - a]`.
pub fn mirror_affinity(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().map(|row| row.iter().rev().copied().collect()).collect()
}

impl SyntheticSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn affinity_matrix(&self) -> Vec<Vec<f64>> {
        if self.affinity.is_empty() {
            default_affinity(self.d)
        } else {
            self.affinity.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.bucket_width <= 0 || self.n_buckets == 0 {
            return fail("d, bucket_width and n_buckets must be positive".into());
        }
        if self.n_users == 0 || self.n_articles == 0 || self.candidates_per_impression == 0 {
            return fail("n_users, n_articles and candidates_per_impression must be positive".into());
        }
        if self.n_categories == 0 || self.title_len == 0 || self.vocab_per_category == 0 {
            return fail("n_categories, title_len and vocab_per_category must be positive".into());
        }
        let a = self.affinity_matrix();
        if a.len() != self.d || a.iter().any(|r| r.len() != self.d) {
            return fail(format!("affinity must be {0}x{0}", self.d));
        }
        if a.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return fail("affinity entries must be finite and >= 0".into());
        }
        if !a.iter().flatten().any(|&v| v > 0.0) || !(self.base_rate > 0.0) {
            return fail("infeasible spec: every click propensity is zero".into());
        }
        if !(0.0..=1.0).contains(&self.contrarian_fraction) {
            return fail("contrarian_fraction must lie in [0, 1]".into());
        }
        if !(self.freshness_half_life_hours > 0.0) {
            return fail("freshness_half_life_hours must be positive".into());
        }
        Ok(())
    }
}

/// One shown candidate as the generator saw it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub impression: usize,
    pub i_ue: usize,
    pub contrarian: bool,
    pub p: f64,
    pub label: u8,
}

#[derive(Clone, Debug)]
pub struct SyntheticArticle {
    pub news_id: String,
    pub category: usize,
    pub title: String,
    pub publish_time: i64,
    pub appeal: f64,
    pub push: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub articles: Vec<SyntheticArticle>,
    pub contrarian: Vec<bool>,
    pub records: Vec<ImpressionRecord>,
    pub trace: Vec<TraceRow>,
}

impl SyntheticCorpus {
    /// MIND `news.tsv` text.
    pub fn news_tsv(&self) -> String {
        let mut out = String::new();
        for a in &self.articles {
            out.push_str(&format!(
                "{}\tcat{}\tsub{}\t{}\t\t\t\t\n",
                a.news_id, a.category, a.category, a.title
            ));
        }
        out
    }

    pub fn behaviors_tsv(&self) -> String {
        write_behaviors_tsv(&self.records)
    }

    /// Writes `news.tsv` and `behaviors.tsv` under `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [("news.tsv", self.news_tsv()), ("behaviors.tsv", self.behaviors_tsv())] {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let affinity = spec.affinity_matrix();
    let mirrored = mirror_affinity(&affinity);
    let mean_a = affinity.iter().flatten().sum::<f64>() / (spec.d * spec.d) as f64;
    let w = spec.bucket_width;

    let contrarian: Vec<bool> = (0..spec.n_users).map(|_| rng.gen_bool(spec.contrarian_fraction)).collect();

    let articles: Vec<SyntheticArticle> = (0..spec.n_articles)
        .map(|i| {
            let category = rng.gen_range(0..spec.n_categories);
            let words: Vec<String> = (0..spec.title_len)
                .map(|_| format!("c{category}w{}", rng.gen_range(0..spec.vocab_per_category)))
                .collect();
            let bucket = if i < spec.candidates_per_impression {
                0
            } else {
                rng.gen_range(0..spec.n_buckets)
            };
            SyntheticArticle {
                news_id: format!("N{}", i + 1),
                category,
                title: words.join(" "),
                publish_time: spec.start_time + bucket as i64 * w,
                appeal: rng.gen_range(0.5..1.5),
                push: rng.gen_range(0.2..1.0),
            }
        })
        .collect();

    let lifetime = spec.article_lifetime_buckets.max(1) as f64;
    let mut running = StatsSnapshot::empty(spec.start_time);
    let mut clicks: Vec<Vec<String>> = vec![Vec::new(); spec.n_users];
    let mut records = Vec::new();
    let mut trace = Vec::new();
    let step = (w / spec.impressions_per_bucket.max(1) as i64).max(1);

    for b in 0..spec.n_buckets {
        let t0 = spec.start_time + b as i64 * w;
        let pre = running.clone();
        let live: Vec<(usize, f64)> = articles
            .iter()
            .enumerate()
            .filter_map(|(i, a)| {
                let age = (t0 - a.publish_time) as f64 / w as f64;
                (age >= 0.0 && age < lifetime).then(|| (i, a.push * (-3.0 * age / lifetime).exp()))
            })
            .collect();
        if live.is_empty() {
            continue;
        }
        let k = spec.candidates_per_impression.min(live.len());
        for j in 0..spec.impressions_per_bucket {
            let time = t0 + j as i64 * step;
            let user = rng.gen_range(0..spec.n_users);
            let shown: Vec<usize> = live
                .choose_multiple_weighted(&mut rng, k, |&(_, wt)| wt)
                .map_err(|e| Error::Config(format!("exposure weights: {e}")))?
                .map(|&(i, _)| i)
                .collect();
            let table = if contrarian[user] { &mirrored } else { &affinity };
            let impression = records.len();
            let cells: Vec<_> = shown.iter().map(|&i| article_cell(&pre, &articles[i].news_id, spec.d)).collect();
            let slate_mean = cells.iter().map(|c| table[c.epi_idx][c.av_idx]).sum::<f64>() / cells.len() as f64;
            let norm = if slate_mean > 0.0 { slate_mean } else { mean_a };
            let mut labels = Vec::with_capacity(shown.len());
            for (&i, &cell) in shown.iter().zip(&cells) {
                let a = &articles[i];
                let age_h = (time - a.publish_time).max(0) as f64 / 3600.0;
                let fresh = 0.5f64.powf(age_h / spec.freshness_half_life_hours);
                let p = (spec.base_rate * table[cell.epi_idx][cell.av_idx] / norm * a.appeal * fresh).clamp(0.0, 1.0);
                let label = rng.gen_bool(p) as u8;
                trace.push(TraceRow {
                    impression,
                    i_ue: cell.i_ue,
                    contrarian: contrarian[user],
                    p,
                    label,
                });
                labels.push(label);
            }
            let record = ImpressionRecord {
                impression_id: (impression + 1).to_string(),
                user_id: format!("U{}", user + 1),
                time,
                history: clicks[user].clone(),
                shown: shown
                    .iter()
                    .zip(&labels)
                    .map(|(&i, &l)| (articles[i].news_id.clone(), l))
                    .collect(),
            };
            running.apply(&record);
            for (id, l) in &record.shown {
                if *l == 1 {
                    clicks[user].push(id.clone());
                }
            }
            records.push(record);
        }
    }
    Ok(SyntheticCorpus {
        articles,
        contrarian,
        records,
        trace,
    })
}
