//! The assembled recommender: parameters, feature extraction from the
//! catalog and exposure timeline, and impression scoring.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Real, Tape, Tensor, Var};
use crate::config::{AblationMode, ModelConfig};
use crate::corpus::{ImpressionRecord, NewsCatalog};
use crate::error::{Error, Result};
use crate::grid::{article_cell, EngagementEmbeddingTable};
use crate::news_encoder::{NewsEncoder, NewsVocabSizes};
use crate::relevance::{elapsed_hours, normalized_clicks, RelevancePredictor};
use crate::stats::StatsSnapshot;
use crate::user_encoder::UserEncoder;

/// Table sizes a model is built for; stored in checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSizes {
    pub words: usize,
    pub categories: usize,
    pub entities: usize,
}

impl ModelSizes {
    pub fn of(catalog: &NewsCatalog) -> Self {
        Self {
            words: catalog.vocab.len(),
            categories: catalog.categories.len(),
            entities: catalog.entities.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryItem {
    pub article: usize,
    pub i_ue: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateFeatures {
    pub article: usize,
    pub i_ue: usize,
    pub clicks_norm: f64,
    pub elapsed_hours: f64,
    pub label: u8,
}

/// Model inputs for one impression, read from the snapshot in force at
/// the impression time.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpressionFeatures {
    pub impression_id: String,
    pub time: i64,
    /// Most recent clicks, oldest first, at most `history_len`.
    pub history: Vec<HistoryItem>,
    pub candidates: Vec<CandidateFeatures>,
}

/// Builds features for `record`; `None` when a candidate is missing from
/// the catalog. Unknown history ids are dropped.
pub fn extract_features(
    record: &ImpressionRecord,
    catalog: &NewsCatalog,
    snapshot: &StatsSnapshot,
    d: usize,
    history_len: usize,
) -> Option<ImpressionFeatures> {
    let known: Vec<(&str, usize)> = record
        .history
        .iter()
        .filter_map(|id| catalog.index_of(id).map(|i| (id.as_str(), i)))
        .collect();
    let start = known.len().saturating_sub(history_len);
    let history = known[start..]
        .iter()
        .map(|&(id, article)| HistoryItem {
            article,
            i_ue: article_cell(snapshot, id, d).i_ue,
        })
        .collect();
    let max_clicks = snapshot.max_clicks();
    let mut candidates = Vec::with_capacity(record.shown.len());
    for (id, label) in &record.shown {
        let article = catalog.index_of(id)?;
        let published = catalog.article(article).publish_time.or(snapshot.first_seen(id));
        candidates.push(CandidateFeatures {
            article,
            i_ue: article_cell(snapshot, id, d).i_ue,
            clicks_norm: normalized_clicks(snapshot.clicks(id), max_clicks),
            elapsed_hours: elapsed_hours(record.time, published),
            label: *label,
        });
    }
    Some(ImpressionFeatures {
        impression_id: record.impression_id.clone(),
        time: record.time,
        history,
        candidates,
    })
}

/// Scoring nodes for one candidate list.
pub struct ScoreOutput {
    /// `1 x n` interest scores.
    pub scores: Var,
    /// `n x 1` relevance, absent in `only_avoid` mode.
    pub r_aw: Option<Var>,
    /// Per candidate `1 x 1` preliminary interest, absent for cold users.
    pub int_prime: Vec<Var>,
    pub eta: Vec<Var>,
    pub alpha: Vec<Var>,
    pub gammas: Vec<Vec<Var>>,
}

#[derive(Clone, Debug)]
pub struct AwrsModel<F: Real> {
    pub cfg: ModelConfig,
    pub sizes: ModelSizes,
    pub store: ParamStore<F>,
    pub news: NewsEncoder,
    pub grid: EngagementEmbeddingTable,
    pub relevance: RelevancePredictor,
    pub user: UserEncoder,
}

impl<F: Real> AwrsModel<F> {
    pub fn new(cfg: ModelConfig, sizes: ModelSizes, pretrained: Option<Tensor<F>>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let news = NewsEncoder::new(
            &mut store,
            &cfg,
            NewsVocabSizes {
                words: sizes.words,
                categories: sizes.categories,
                entities: sizes.entities,
            },
            pretrained,
            &mut rng,
        )?;
        let grid = EngagementEmbeddingTable::new(&mut store, cfg.d, cfg.dim_ue, &mut rng);
        let relevance = RelevancePredictor::new(&mut store, cfg.d_news, cfg.dim_ue, cfg.d_time, &mut rng);
        let user = UserEncoder::new(&mut store, &cfg, &mut rng);
        Ok(Self {
            cfg,
            sizes,
            store,
            news,
            grid,
            relevance,
            user,
        })
    }

    pub fn mode(&self) -> AblationMode {
        self.cfg.mode
    }

    /// News vectors for every catalog article, `len x d_news`.
    pub fn encode_catalog(&self, catalog: &NewsCatalog) -> Result<Tensor<F>> {
        let rows: Vec<Vec<F>> = catalog
            .articles()
            .par_iter()
            .map(|a| {
                let mut tape = Tape::new(&self.store);
                let v = self.news.encode_news(&mut tape, a)?;
                Ok(tape.value(v).data().to_vec())
            })
            .collect::<Result<_>>()?;
        if rows.is_empty() {
            return Ok(Tensor::zeros(0, self.cfg.d_news));
        }
        Tensor::from_rows(&rows)
    }

    /// News rows for `articles`, either encoded on the tape or taken from
    /// a precomputed table as constants.
    fn news_rows<'p>(
        &self,
        tape: &mut Tape<'p, F>,
        catalog: &NewsCatalog,
        articles: &[usize],
        cache: Option<&Tensor<F>>,
    ) -> Result<Var> {
        let mut unique: Vec<usize> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let positions: Vec<usize> = articles
            .iter()
            .map(|&a| {
                *slot.entry(a).or_insert_with(|| {
                    unique.push(a);
                    unique.len() - 1
                })
            })
            .collect();
        let table = match cache {
            Some(t) => {
                let mut out = Tensor::zeros(unique.len(), self.cfg.d_news);
                for (r, &a) in unique.iter().enumerate() {
                    if a >= t.rows() {
                        return Err(Error::OutOfRange {
                            what: "news cache",
                            index: a,
                            len: t.rows(),
                        });
                    }
                    out.row_slice_mut(r).copy_from_slice(t.row_slice(a));
                }
                tape.constant(out)
            }
            None => {
                let mut vars = Vec::with_capacity(unique.len());
                for &a in &unique {
                    vars.push(self.news.encode_news(tape, catalog.article(a))?);
                }
                tape.concat_rows(&vars)?
            }
        };
        tape.gather(table, &positions)
    }

    /// Scores `candidates` for a user with `history`.
    pub fn score<'p>(
        &self,
        tape: &mut Tape<'p, F>,
        catalog: &NewsCatalog,
        history: &[HistoryItem],
        candidates: &[CandidateFeatures],
        cache: Option<&Tensor<F>>,
    ) -> Result<ScoreOutput> {
        let n = candidates.len();
        let mut articles: Vec<usize> = candidates.iter().map(|c| c.article).collect();
        articles.extend(history.iter().map(|h| h.article));
        let all_news = self.news_rows(tape, catalog, &articles, cache)?;
        let cand_news = tape.slice_rows(all_news, 0, n)?;
        let cand_idx: Vec<usize> = candidates.iter().map(|c| c.i_ue).collect();
        let cand_ue = self.grid.embed(tape, &cand_idx)?;

        let mode = self.cfg.mode;
        let r_aw = if mode == AblationMode::OnlyAvoid {
            None
        } else {
            let hours: Vec<f64> = candidates.iter().map(|c| c.elapsed_hours).collect();
            let clicks: Vec<f64> = candidates.iter().map(|c| c.clicks_norm).collect();
            Some(self.relevance.forward(tape, cand_news, cand_ue, &hours, &clicks)?.r_aw)
        };

        let mut out = ScoreOutput {
            scores: tape.constant(Tensor::zeros(1, n)),
            r_aw,
            int_prime: Vec::new(),
            eta: Vec::new(),
            alpha: Vec::new(),
            gammas: Vec::new(),
        };

        if history.is_empty() {
            out.scores = match r_aw {
                Some(r) => tape.transpose(r),
                None => tape.constant(Tensor::zeros(1, n)),
            };
            return Ok(out);
        }

        let m = history.len();
        let hist_news = tape.slice_rows(all_news, n, m)?;
        let (hist_ue, user_cand_ue) = if mode == AblationMode::OnlyRel {
            (
                tape.constant(Tensor::zeros(m, self.cfg.dim_ue)),
                tape.constant(Tensor::zeros(n, self.cfg.dim_ue)),
            )
        } else {
            let idx: Vec<usize> = history.iter().map(|h| h.i_ue).collect();
            (self.grid.embed(tape, &idx)?, cand_ue)
        };
        let hist = self.user.augment(tape, hist_news, hist_ue, &vec![true; m])?;
        let prep = self.user.prepare(tape, hist)?;
        let cands = self.user.augment_candidates(tape, cand_news, user_cand_ue)?;

        let mut scores = Vec::with_capacity(n);
        for j in 0..n {
            let n_c = tape.slice_rows(cands, j, 1)?;
            let enc = self.user.encode(tape, &prep, n_c)?;
            let score = match r_aw {
                Some(r) => {
                    let r_j = tape.slice_rows(r, j, 1)?;
                    let i = self.user.interest(tape, n_c, enc.u, r_j)?;
                    out.int_prime.push(i.int_prime);
                    out.eta.push(i.eta);
                    i.score
                }
                None => {
                    let p = self.user.preliminary_interest(tape, n_c, enc.u)?;
                    out.int_prime.push(p);
                    p
                }
            };
            out.alpha.push(enc.alpha);
            out.gammas.push(enc.gammas);
            scores.push(score);
        }
        out.scores = tape.concat_cols(&scores)?;
        Ok(out)
    }

    /// Plain scores for one impression.
    pub fn score_impression(
        &self,
        catalog: &NewsCatalog,
        features: &ImpressionFeatures,
        cache: Option<&Tensor<F>>,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let out = self.score(&mut tape, catalog, &features.history, &features.candidates, cache)?;
        Ok(tape.value(out.scores).data().iter().map(|v| v.as_f64()).collect())
    }
}
