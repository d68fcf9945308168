//! Avoidance-aware relevance: a gated mix of a content score and a
//! time/engagement score, combined with the normalized click count.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// `log(1 + clicks) / log(1 + max_clicks)`, or 0 when no article in the
/// bucket has been clicked.
pub fn normalized_clicks(clicks: u64, max_clicks: u64) -> f64 {
    if max_clicks == 0 {
        return 0.0;
    }
    ((1.0 + clicks as f64).ln() / (1.0 + max_clicks as f64).ln()).min(1.0)
}

/// Hours between `publish` (or first exposure) and `now`, floored at 0.
/// Unknown publication time gives 0.
pub fn elapsed_hours(now: i64, publish: Option<i64>) -> f64 {
    match publish {
        Some(p) => ((now - p).max(0)) as f64 / 3600.0,
        None => 0.0,
    }
}

/// Time2Vec of `tau` with frequencies `omega` and phases `phi`.
pub fn time2vec_values(tau: f64, omega: &[f64], phi: &[f64]) -> Vec<f64> {
    omega
        .iter()
        .zip(phi)
        .enumerate()
        .map(|(i, (w, p))| if i == 0 { w * tau + p } else { (w * tau + p).sin() })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RelevancePredictor {
    pub omega: ParamId,
    pub phi: ParamId,
    pub psi1_w: ParamId,
    pub psi1_b: ParamId,
    pub psi2_w: ParamId,
    pub psi2_b: ParamId,
    pub psi3_w: ParamId,
    pub psi3_b: ParamId,
    pub w_ctr: ParamId,
    pub w_r: ParamId,
    d_news: usize,
    dim_ue: usize,
    d_time: usize,
}

/// Per-candidate intermediate values, each `n x 1`.
pub struct Relevance {
    pub r_aw: Var,
    pub gate: Var,
    pub r_ic: Var,
    pub r_tue: Var,
    pub r_hat: Var,
}

impl RelevancePredictor {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        d_news: usize,
        dim_ue: usize,
        d_time: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let omega = store.add_uniform("relevance.t2v.omega", 1, d_time, 0.1, rng);
        let phi = store.add_uniform("relevance.t2v.phi", 1, d_time, std::f64::consts::PI, rng);
        let gate_in = d_news + dim_ue + d_time;
        Self {
            omega,
            phi,
            psi1_w: store.add_glorot("relevance.psi1.w", gate_in, 1, rng),
            psi1_b: store.add("relevance.psi1.b", Tensor::zeros(1, 1)),
            psi2_w: store.add_glorot("relevance.psi2.w", d_news, 1, rng),
            psi2_b: store.add("relevance.psi2.b", Tensor::zeros(1, 1)),
            psi3_w: store.add_glorot("relevance.psi3.w", dim_ue + d_time, 1, rng),
            psi3_b: store.add("relevance.psi3.b", Tensor::zeros(1, 1)),
            w_ctr: store.add("relevance.w_ctr", Tensor::scalar(F::one())),
            w_r: store.add("relevance.w_rhat", Tensor::scalar(F::one())),
            d_news,
            dim_ue,
            d_time,
        }
    }

    pub fn d_time(&self) -> usize {
        self.d_time
    }

    /// `n x d_time` Time2Vec encoding of elapsed hours.
    pub fn time2vec<F: Real>(&self, tape: &mut Tape<'_, F>, hours: &[f64]) -> Result<Var> {
        let tau = tape.constant(Tensor::new(hours.len(), 1, hours.iter().map(|&h| F::lit(h)).collect())?);
        let omega = tape.param(self.omega);
        let phi = tape.param(self.phi);
        let lin = tape.matmul(tau, omega)?;
        let lin = tape.add_row(lin, phi)?;
        if self.d_time == 1 {
            return Ok(lin);
        }
        let first = tape.slice_cols(lin, 0, 1)?;
        let rest = tape.slice_cols(lin, 1, self.d_time - 1)?;
        let rest = tape.sin(rest);
        tape.concat_cols(&[first, rest])
    }

    /// Relevance for `n` candidates: `news` is `n x d_news`, `ue` is
    /// `n x dim_ue`, `hours` and `clicks_norm` have length `n`.
    pub fn forward<F: Real>(
        &self,
        tape: &mut Tape<'_, F>,
        news: Var,
        ue: Var,
        hours: &[f64],
        clicks_norm: &[f64],
    ) -> Result<Relevance> {
        let n = tape.value(news).rows();
        if tape.value(news).cols() != self.d_news || tape.value(ue).shape() != [n, self.dim_ue] {
            return Err(Error::shape(
                "relevance",
                format!(
                    "news {:?}, ue {:?}, expected n x {} and n x {}",
                    tape.value(news).shape(),
                    tape.value(ue).shape(),
                    self.d_news,
                    self.dim_ue
                ),
            ));
        }
        if hours.len() != n || clicks_norm.len() != n {
            return Err(Error::shape(
                "relevance",
                format!("{n} candidates but {} times and {} click counts", hours.len(), clicks_norm.len()),
            ));
        }
        let t_el = self.time2vec(tape, hours)?;
        let gate_in = tape.concat_cols(&[news, ue, t_el])?;
        let gate = tape.dense(gate_in, self.psi1_w, self.psi1_b)?;
        let gate = tape.sigmoid(gate);
        let r_ic = tape.dense(news, self.psi2_w, self.psi2_b)?;
        let tue_in = tape.concat_cols(&[ue, t_el])?;
        let r_tue = tape.dense(tue_in, self.psi3_w, self.psi3_b)?;

        let a = tape.mul(gate, r_ic)?;
        let rest = tape.one_minus(gate);
        let b = tape.mul(rest, r_tue)?;
        let r_hat = tape.add(a, b)?;

        let clicks = tape.constant(Tensor::new(n, 1, clicks_norm.iter().map(|&c| F::lit(c)).collect())?);
        let w_ctr = tape.param(self.w_ctr);
        let w_r = tape.param(self.w_r);
        let c = tape.matmul(clicks, w_ctr)?;
        let r = tape.matmul(r_hat, w_r)?;
        let logit = tape.add(c, r)?;
        let r_aw = tape.sigmoid(logit);
        Ok(Relevance {
            r_aw,
            gate,
            r_ic,
            r_tue,
            r_hat,
        })
    }
}
