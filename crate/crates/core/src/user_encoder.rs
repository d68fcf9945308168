//! Avoidance-aware user encoder: candidate-aware self-attention and a
//! candidate-aware CNN over engagement-augmented clicks, attention pooling
//! into `u_aw`, and the gated interest score.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct UserHead {
    pub w_r: ParamId,
    pub w_o: ParamId,
}

#[derive(Clone, Debug)]
pub struct UserEncoder {
    pub q_u: ParamId,
    pub q_c: ParamId,
    pub heads: Vec<UserHead>,
    pub cnn_w: ParamId,
    pub cnn_b: ParamId,
    pub phi1_w: ParamId,
    pub phi1_b: ParamId,
    pub phi2_w: ParamId,
    pub phi2_b: ParamId,
    pub phi3_w: ParamId,
    pub phi3_b: ParamId,
    d_aug: usize,
    half: usize,
}

/// Engagement-augmented history `M x d_aug`; masked rows are zero.
#[derive(Clone, Debug)]
pub struct History {
    pub h: Var,
    pub mask: Vec<bool>,
}

/// Candidate-independent parts of the encoder, computed once per history.
pub struct PreparedHistory {
    history: History,
    base_scores: Vec<Var>,
    head_values: Vec<Var>,
    h_t: Var,
    cnn_base: Var,
}

impl PreparedHistory {
    pub fn history(&self) -> &History {
        &self.history
    }
}

/// Everything computed for one candidate.
pub struct UserEncoding {
    /// `1 x d_aug`.
    pub u: Var,
    /// `1 x M` click weights.
    pub alpha: Var,
    /// Per head, `M x M` attention over clicks.
    pub gammas: Vec<Var>,
    /// `M x d_aug` attention output.
    pub l: Var,
    /// `M x d_aug` CNN output.
    pub s: Var,
    pub m: Var,
}

pub struct Interest {
    pub score: Var,
    pub int_prime: Var,
    pub eta: Var,
}

impl UserEncoder {
    pub fn new<F: Real>(store: &mut ParamStore<F>, cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.d_aug();
        let head_dim = d / cfg.user_heads;
        let window = 2 * cfg.cnn_half_window + 1;
        let heads = (0..cfg.user_heads)
            .map(|k| UserHead {
                w_r: store.add_glorot(format!("user.head{k}.w_r"), d, d, rng),
                w_o: store.add_glorot(format!("user.head{k}.w_o"), d, head_dim, rng),
            })
            .collect();
        Self {
            q_u: store.add_glorot("user.q_u", d, d, rng),
            q_c: store.add_glorot("user.q_c", d, d, rng),
            heads,
            cnn_w: store.add_glorot("user.cnn.w", (window + 1) * d, d, rng),
            cnn_b: store.add("user.cnn.b", Tensor::zeros(1, d)),
            phi1_w: store.add_glorot("user.phi1.w", 2 * d, d, rng),
            phi1_b: store.add("user.phi1.b", Tensor::zeros(1, d)),
            phi2_w: store.add_glorot("user.phi2.w", 2 * d, 1, rng),
            phi2_b: store.add("user.phi2.b", Tensor::zeros(1, 1)),
            phi3_w: store.add_glorot("user.phi3.w", d, 1, rng),
            phi3_b: store.add("user.phi3.b", Tensor::zeros(1, 1)),
            d_aug: d,
            half: cfg.cnn_half_window,
        }
    }

    pub fn d_aug(&self) -> usize {
        self.d_aug
    }

    /// Concatenates news and engagement vectors per clicked item and zeroes
    /// masked rows.
    pub fn augment<F: Real>(&self, tape: &mut Tape<'_, F>, news: Var, ue: Var, mask: &[bool]) -> Result<History> {
        let h = tape.concat_cols(&[news, ue])?;
        let [m, d] = tape.value(h).shape();
        if d != self.d_aug || mask.len() != m {
            return Err(Error::shape(
                "augment",
                format!("history {m}x{d} with {} mask bits, expected width {}", mask.len(), self.d_aug),
            ));
        }
        let h = if mask.iter().all(|&b| b) {
            h
        } else {
            let mut keep = Tensor::zeros(m, d);
            for (r, &b) in mask.iter().enumerate() {
                if b {
                    keep.row_slice_mut(r).fill(F::one());
                }
            }
            let keep = tape.constant(keep);
            tape.mul(h, keep)?
        };
        Ok(History {
            h,
            mask: mask.to_vec(),
        })
    }

    /// Candidate rows `[n, ue]`, `n x d_aug`.
    pub fn augment_candidates<F: Real>(&self, tape: &mut Tape<'_, F>, news: Var, ue: Var) -> Result<Var> {
        tape.concat_cols(&[news, ue])
    }

    pub fn prepare<F: Real>(&self, tape: &mut Tape<'_, F>, history: History) -> Result<PreparedHistory> {
        if !history.mask.iter().any(|&b| b) {
            return Err(Error::EmptyHistory);
        }
        let h = history.h;
        let h_t = tape.transpose(h);
        let q_u = tape.param(self.q_u);
        let q = tape.matmul(h, q_u)?;
        let mut base_scores = Vec::with_capacity(self.heads.len());
        let mut head_values = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let w_r = tape.param(head.w_r);
            let qw = tape.matmul(q, w_r)?;
            base_scores.push(tape.matmul(qw, h_t)?);
            let w_o = tape.param(head.w_o);
            head_values.push(tape.matmul(h, w_o)?);
        }
        let window = 2 * self.half + 1;
        let w = tape.param(self.cnn_w);
        let w_hist = tape.slice_rows(w, 0, window * self.d_aug)?;
        let ctx = tape.sliding_window_concat(h, self.half);
        let cnn_base = tape.matmul(ctx, w_hist)?;
        Ok(PreparedHistory {
            history,
            base_scores,
            head_values,
            h_t,
            cnn_base,
        })
    }

    /// Per-head attention over clicks with the candidate term added to
    /// every row; returns the concatenated head outputs and the weights.
    pub fn self_attention<F: Real>(
        &self,
        tape: &mut Tape<'_, F>,
        prep: &PreparedHistory,
        n_c: Var,
    ) -> Result<(Var, Vec<Var>)> {
        let q_c = tape.param(self.q_c);
        let qc = tape.matmul(n_c, q_c)?;
        let mut outs = Vec::with_capacity(self.heads.len());
        let mut gammas = Vec::with_capacity(self.heads.len());
        for (k, head) in self.heads.iter().enumerate() {
            let w_r = tape.param(head.w_r);
            let cw = tape.matmul(qc, w_r)?;
            let cand = tape.matmul(cw, prep.h_t)?;
            let scores = tape.add_row(prep.base_scores[k], cand)?;
            let gamma = tape.softmax_rows(scores, Some(&prep.history.mask))?;
            outs.push(tape.matmul(gamma, prep.head_values[k])?);
            gammas.push(gamma);
        }
        Ok((tape.concat_cols(&outs)?, gammas))
    }

    /// `relu(W [h_{i-h}; ...; h_{i+h}; n_c] + b)` for every position.
    pub fn cnn<F: Real>(&self, tape: &mut Tape<'_, F>, prep: &PreparedHistory, n_c: Var) -> Result<Var> {
        let window = 2 * self.half + 1;
        let w = tape.param(self.cnn_w);
        let w_cand = tape.slice_rows(w, window * self.d_aug, self.d_aug)?;
        let b = tape.param(self.cnn_b);
        let c = tape.matmul(n_c, w_cand)?;
        let c = tape.add(c, b)?;
        let s = tape.add_row(prep.cnn_base, c)?;
        Ok(tape.relu(s))
    }

    /// Merges CNN and attention outputs and pools them with
    /// candidate-aware click attention.
    pub fn user_embedding<F: Real>(
        &self,
        tape: &mut Tape<'_, F>,
        prep: &PreparedHistory,
        l: Var,
        s: Var,
        n_c: Var,
    ) -> Result<(Var, Var, Var)> {
        let sl = tape.concat_cols(&[s, l])?;
        let m = tape.dense(sl, self.phi1_w, self.phi1_b)?;
        let m = tape.relu(m);
        let w = tape.param(self.phi2_w);
        let w_m = tape.slice_rows(w, 0, self.d_aug)?;
        let w_c = tape.slice_rows(w, self.d_aug, self.d_aug)?;
        let b = tape.param(self.phi2_b);
        let per_click = tape.matmul(m, w_m)?;
        let c = tape.matmul(n_c, w_c)?;
        let c = tape.add(c, b)?;
        let logits = tape.add_row(per_click, c)?;
        let logits = tape.transpose(logits);
        let alpha = tape.softmax_rows(logits, Some(&prep.history.mask))?;
        let u = tape.matmul(alpha, m)?;
        Ok((u, alpha, m))
    }

    /// Full encoder for one candidate row `n_c` (`1 x d_aug`).
    pub fn encode<F: Real>(&self, tape: &mut Tape<'_, F>, prep: &PreparedHistory, n_c: Var) -> Result<UserEncoding> {
        if tape.value(n_c).shape() != [1, self.d_aug] {
            return Err(Error::shape(
                "user_encoder",
                format!("candidate {:?}, expected 1x{}", tape.value(n_c).shape(), self.d_aug),
            ));
        }
        let (l, gammas) = self.self_attention(tape, prep, n_c)?;
        let s = self.cnn(tape, prep, n_c)?;
        let (u, alpha, m) = self.user_embedding(tape, prep, l, s, n_c)?;
        Ok(UserEncoding {
            u,
            alpha,
            gammas,
            l,
            s,
            m,
        })
    }

    /// `n_c . u` as a `1 x 1` node.
    pub fn preliminary_interest<F: Real>(&self, tape: &mut Tape<'_, F>, n_c: Var, u: Var) -> Result<Var> {
        let u_t = tape.transpose(u);
        tape.matmul(n_c, u_t)
    }

    /// `(1 - eta) r_aw + eta n_c . u` with `eta = sigmoid(Phi3 u)`.
    pub fn interest<F: Real>(&self, tape: &mut Tape<'_, F>, n_c: Var, u: Var, r_aw: Var) -> Result<Interest> {
        let int_prime = self.preliminary_interest(tape, n_c, u)?;
        let eta = tape.dense(u, self.phi3_w, self.phi3_b)?;
        let eta = tape.sigmoid(eta);
        let a = tape.one_minus(eta);
        let a = tape.mul(a, r_aw)?;
        let b = tape.mul(eta, int_prime)?;
        let score = tape.add(a, b)?;
        Ok(Interest { score, int_prime, eta })
    }
}
