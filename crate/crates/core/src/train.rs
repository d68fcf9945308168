//! Negative sampling, the (K+1)-way softmax loss, Adam, and the epoch
//! loop with early stopping on validation AUC.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{neg_log_softmax, ParamGrads, ParamStore, Real, Tape, Tensor};
use crate::config::TrainConfig;
use crate::corpus::{ImpressionRecord, NewsCatalog};
use crate::error::{Error, Result};
use crate::eval::{aggregate, rank_impressions, ImpressionMetrics};
use crate::model::{AwrsModel, CandidateFeatures, ImpressionFeatures};

pub const TRAIN_LOG_SCHEMA: &str = "awrs.trainlog.v1";

/// One positive with its sampled negatives. `order[j]` names the source
/// of displayed slot `j`: 0 is the positive, `i > 0` is `negatives[i - 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingInstance {
    pub impression_id: String,
    pub history: Vec<String>,
    pub positive: String,
    pub negatives: Vec<String>,
    pub time: i64,
    pub order: Vec<usize>,
}

impl TrainingInstance {
    /// Candidate ids in displayed order.
    pub fn candidates(&self) -> Vec<&str> {
        self.order
            .iter()
            .map(|&o| if o == 0 { self.positive.as_str() } else { self.negatives[o - 1].as_str() })
            .collect()
    }

    /// Slot holding the positive.
    pub fn target(&self) -> usize {
        self.order.iter().position(|&o| o == 0).expect("positive present")
    }
}

/// One instance per clicked item with `k` negatives from the same
/// impression, drawn with replacement when fewer than `k` exist. Returns
/// `None` when the impression has no negatives.
pub fn sample_negatives(record: &ImpressionRecord, k: usize, rng: &mut impl Rng) -> Option<Vec<TrainingInstance>> {
    let pool: Vec<&str> = record.not_clicked().collect();
    if pool.is_empty() {
        return None;
    }
    let out = record
        .clicked()
        .map(|pos| {
            let negatives: Vec<String> = if pool.len() >= k {
                pool.choose_multiple(rng, k).map(|s| s.to_string()).collect()
            } else {
                (0..k).map(|_| pool[rng.gen_range(0..pool.len())].to_string()).collect()
            };
            let mut order: Vec<usize> = (0..=k).collect();
            order.shuffle(rng);
            TrainingInstance {
                impression_id: record.impression_id.clone(),
                history: record.history.clone(),
                positive: pos.to_string(),
                negatives,
                time: record.time,
                order,
            }
        })
        .collect();
    Some(out)
}

/// Positive-class probability and `-log p` of a (K+1)-way softmax.
pub fn instance_loss(pos_score: f64, neg_scores: &[f64]) -> (f64, f64) {
    let mut all = Vec::with_capacity(neg_scores.len() + 1);
    all.push(pos_score);
    all.extend_from_slice(neg_scores);
    let loss = neg_log_softmax(&all, 0);
    ((-loss).exp(), loss)
}

/// Instance in feature space: index of its impression, candidates in
/// displayed order and the slot of the positive.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureInstance {
    pub impression: usize,
    pub candidates: Vec<CandidateFeatures>,
    pub target: usize,
}

/// Samples one epoch of instances from precomputed impression features.
/// Returns the instances and the number of impressions skipped for
/// having no negatives.
pub fn sample_feature_instances(
    features: &[ImpressionFeatures],
    k: usize,
    rng: &mut impl Rng,
) -> (Vec<FeatureInstance>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (i, f) in features.iter().enumerate() {
        let pool: Vec<&CandidateFeatures> = f.candidates.iter().filter(|c| c.label == 0).collect();
        let positives = f.candidates.iter().filter(|c| c.label > 0);
        if pool.is_empty() {
            if f.candidates.iter().any(|c| c.label > 0) {
                skipped += 1;
            }
            continue;
        }
        for pos in positives {
            let negs: Vec<CandidateFeatures> = if pool.len() >= k {
                pool.choose_multiple(rng, k).map(|c| **c).collect()
            } else {
                (0..k).map(|_| *pool[rng.gen_range(0..pool.len())]).collect()
            };
            let mut order: Vec<usize> = (0..=k).collect();
            order.shuffle(rng);
            let candidates = order.iter().map(|&o| if o == 0 { *pos } else { negs[o - 1] }).collect();
            out.push(FeatureInstance {
                impression: i,
                candidates,
                target: order.iter().position(|&o| o == 0).expect("positive present"),
            });
        }
    }
    out.shuffle(rng);
    (out, skipped)
}

/// Adam with bias correction, updating every trainable parameter densely.
#[derive(Clone, Debug)]
pub struct Adam<F: Real> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(store: &ParamStore<F>, lr: f64) -> Self {
        let zeros = || -> Vec<Tensor<F>> {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &ParamGrads<F>) {
        self.t += 1;
        if self.lr == 0.0 {
            return;
        }
        let (b1, b2) = (F::lit(self.beta1), F::lit(self.beta2));
        let c1 = F::lit(1.0 - self.beta1.powi(self.t as i32));
        let c2 = F::lit(1.0 - self.beta2.powi(self.t as i32));
        let lr = F::lit(self.lr);
        let eps = F::lit(self.eps);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let i = id.index();
            let g = grads.dense(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = store.get_mut(id);
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (F::one() - b1) * g;
                *v = b2 * *v + (F::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Loss, positive probability and parameter gradients of one instance.
pub fn instance_gradients<F: Real>(
    model: &AwrsModel<F>,
    catalog: &NewsCatalog,
    features: &[ImpressionFeatures],
    inst: &FeatureInstance,
    step: usize,
    lr: f64,
) -> Result<(f64, ParamGrads<F>)> {
    let mut tape = Tape::new(&model.store);
    let history = &features[inst.impression].history;
    let out = model.score(&mut tape, catalog, history, &inst.candidates, None)?;
    let loss = tape.neg_log_softmax(out.scores, inst.target)?;
    let value = tape.value(loss).item().as_f64();
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            lr,
            last_op: tape.last_op().to_string(),
        });
    }
    let grads = tape.backward(loss)?.into_params();
    Ok((value, grads))
}

/// Positive-class probability of `inst` under the current parameters.
pub fn instance_probability<F: Real>(
    model: &AwrsModel<F>,
    catalog: &NewsCatalog,
    features: &[ImpressionFeatures],
    inst: &FeatureInstance,
) -> Result<f64> {
    let mut tape = Tape::new(&model.store);
    let out = model.score(&mut tape, catalog, &features[inst.impression].history, &inst.candidates, None)?;
    let s: Vec<f64> = tape.value(out.scores).data().iter().map(|v| v.as_f64()).collect();
    let neg: Vec<f64> = s.iter().enumerate().filter(|&(j, _)| j != inst.target).map(|(_, &v)| v).collect();
    Ok(instance_loss(s[inst.target], &neg).0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_auc: Option<f64>,
    pub steps: usize,
    /// Impressions with clicks but no negatives, per epoch.
    pub skipped_no_negatives: usize,
    /// Mean loss of each optimizer step.
    pub step_losses: Vec<f64>,
}

impl TrainingHistory {
    /// `epoch, train_loss, val_auc, wall_seconds`. `wall_seconds` is left
    /// out when `include_wall` is false so logs compare byte for byte.
    pub fn write_csv(&self, mut out: impl Write, include_wall: bool) -> Result<()> {
        writeln!(out, "# schema={TRAIN_LOG_SCHEMA}").map_err(|e| Error::io("<csv>", e))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "val_auc", "wall_seconds"])?;
        for e in &self.epochs {
            let wall = if include_wall { format!("{:.3}", e.wall_seconds) } else { String::new() };
            w.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.val_auc.to_string(), wall])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Mean AUC of `model` over `features` (NaN when nothing is scorable).
pub fn validation_auc<F: Real>(
    model: &AwrsModel<F>,
    catalog: &NewsCatalog,
    features: &[ImpressionFeatures],
) -> Result<f64> {
    if features.is_empty() {
        return Ok(f64::NAN);
    }
    let ranked = rank_impressions(model, catalog, features, None)?;
    let per: Vec<ImpressionMetrics> = ranked.iter().map(ImpressionMetrics::of).collect();
    Ok(aggregate(&per, 0).auc)
}

/// Trains `model` in place. On return the model holds the parameters of
/// the best validation epoch (or the last epoch when there is no
/// validation data).
pub fn train<F: Real>(
    model: &mut AwrsModel<F>,
    catalog: &NewsCatalog,
    train_set: &[ImpressionFeatures],
    valid_set: &[ImpressionFeatures],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainingHistory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7EA1_5EED);
    let mut adam = Adam::new(&model.store, cfg.lr);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut hist = TrainingHistory::default();
    let mut best_store: Option<ParamStore<F>> = None;
    let mut since_best = 0;
    let started = Instant::now();

    'epochs: for epoch in 1..=cfg.max_epochs {
        let (instances, skipped) = sample_feature_instances(train_set, cfg.negatives, &mut rng);
        hist.skipped_no_negatives = skipped;
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        let mut capped = false;
        for batch in instances.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| hist.steps >= m) {
                capped = true;
                break;
            }
            let step = hist.steps;
            let model_ref = &*model;
            let results: Vec<Result<(f64, ParamGrads<F>)>> = if cfg.threads > 1 {
                pool.install(|| {
                    batch
                        .par_iter()
                        .map(|inst| instance_gradients(model_ref, catalog, train_set, inst, step, cfg.lr))
                        .collect()
                })
            } else {
                batch
                    .iter()
                    .map(|inst| instance_gradients(model_ref, catalog, train_set, inst, step, cfg.lr))
                    .collect()
            };
            let mut total = ParamGrads::new(&model.store);
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, g) = r?;
                batch_loss += loss;
                total.merge(&g);
            }
            total.scale(F::lit(1.0 / batch.len() as f64));
            adam.step(&mut model.store, &total);
            hist.steps += 1;
            hist.step_losses.push(batch_loss / batch.len() as f64);
            epoch_loss += batch_loss;
            seen += batch.len();
        }
        let train_loss = if seen > 0 { epoch_loss / seen as f64 } else { f64::NAN };
        let val_auc = validation_auc(model, catalog, valid_set)?;
        hist.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_auc,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        log::info!("epoch {epoch}: loss {train_loss:.5} val_auc {val_auc:.5}");

        let improved = match hist.best_val_auc {
            _ if val_auc.is_nan() => false,
            None => true,
            Some(b) => val_auc > b,
        };
        if improved {
            hist.best_val_auc = Some(val_auc);
            hist.best_epoch = Some(epoch);
            best_store = Some(model.store.clone());
            since_best = 0;
        } else if !val_auc.is_nan() {
            since_best += 1;
            if since_best >= cfg.patience {
                break 'epochs;
            }
        }
        if capped || cfg.max_steps.is_some_and(|m| hist.steps >= m) {
            break;
        }
    }
    if let Some(best) = best_store {
        model.store = best;
    }
    Ok(hist)
}
