//! Word-embedding news encoder: multi-head self-attention over title
//! tokens, additive-attention pooling, then a dense layer over
//! `[title, category, entities]`.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::config::ModelConfig;
use crate::corpus::{NewsArticle, PAD};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
struct TitleHead {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
}

#[derive(Clone, Debug)]
pub struct NewsEncoder {
    word: ParamId,
    heads: Vec<TitleHead>,
    head_dim: usize,
    add_w: ParamId,
    add_b: ParamId,
    add_q: ParamId,
    category: ParamId,
    entity: Option<ParamId>,
    entity_dim: usize,
    combine_w: ParamId,
    combine_b: ParamId,
    d_news: usize,
}

/// Sizes of the lookup tables the encoder needs.
#[derive(Clone, Copy, Debug)]
pub struct NewsVocabSizes {
    pub words: usize,
    pub categories: usize,
    pub entities: usize,
}

/// Intermediate values of one title encoding.
pub struct TitleEncoding {
    pub pooled: Var,
    /// Per-head token attention, `L x L`; absent for an all-PAD title.
    pub self_attention: Vec<Var>,
    /// Additive pooling weights, `1 x L`.
    pub pooling: Option<Var>,
}

impl NewsEncoder {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        cfg: &ModelConfig,
        sizes: NewsVocabSizes,
        pretrained: Option<Tensor<F>>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let word = match pretrained {
            Some(m) => {
                if m.rows() != sizes.words || m.cols() != cfg.word_dim {
                    return Err(Error::shape(
                        "word_embeddings",
                        format!("pretrained {:?}, expected {}x{}", m.shape(), sizes.words, cfg.word_dim),
                    ));
                }
                store.add("news.word", m)
            }
            None => {
                let m = crate::corpus::random_matrix(sizes.words, cfg.word_dim, crate::corpus::DEFAULT_INIT_RANGE, rng);
                store.add("news.word", m)
            }
        };
        store.set_trainable(word, cfg.train_word_embeddings);

        let head_dim = cfg.d_news / cfg.title_heads;
        let heads = (0..cfg.title_heads)
            .map(|h| TitleHead {
                wq: store.add_glorot(format!("news.head{h}.wq"), cfg.word_dim, head_dim, rng),
                wk: store.add_glorot(format!("news.head{h}.wk"), cfg.word_dim, head_dim, rng),
                wv: store.add_glorot(format!("news.head{h}.wv"), cfg.word_dim, head_dim, rng),
            })
            .collect();
        let add_w = store.add_glorot("news.additive.w", cfg.d_news, cfg.additive_hidden, rng);
        let add_b = store.add("news.additive.b", Tensor::zeros(1, cfg.additive_hidden));
        let add_q = store.add_glorot("news.additive.q", cfg.additive_hidden, 1, rng);
        let category = store.add_uniform("news.category", sizes.categories.max(1), cfg.category_dim, 0.1, rng);
        let entity = if cfg.use_entities {
            let mut t = crate::corpus::random_matrix(sizes.entities.max(1), cfg.entity_dim, 0.1, rng);
            t.row_slice_mut(0).fill(F::zero());
            Some(store.add("news.entity", t))
        } else {
            None
        };
        let in_width = cfg.d_news + cfg.category_dim + if cfg.use_entities { cfg.entity_dim } else { 0 };
        let combine_w = store.add_glorot("news.combine.w", in_width, cfg.d_news, rng);
        let combine_b = store.add("news.combine.b", Tensor::zeros(1, cfg.d_news));
        Ok(Self {
            word,
            heads,
            head_dim,
            add_w,
            add_b,
            add_q,
            category,
            entity,
            entity_dim: cfg.entity_dim,
            combine_w,
            combine_b,
            d_news: cfg.d_news,
        })
    }

    pub fn d_news(&self) -> usize {
        self.d_news
    }

    pub fn word_table(&self) -> ParamId {
        self.word
    }

    pub fn category_table(&self) -> ParamId {
        self.category
    }

    pub fn entity_table(&self) -> Option<ParamId> {
        self.entity
    }

    /// Title vector `n_t` (`1 x d_news`). PAD tokens are masked out of both
    /// attentions; an all-PAD title encodes to zeros.
    pub fn encode_title<F: Real>(&self, tape: &mut Tape<'_, F>, tokens: &[usize]) -> Result<Var> {
        Ok(self.encode_title_detailed(tape, tokens)?.pooled)
    }

    pub fn encode_title_detailed<F: Real>(&self, tape: &mut Tape<'_, F>, tokens: &[usize]) -> Result<TitleEncoding> {
        let mask: Vec<bool> = tokens.iter().map(|&t| t != PAD).collect();
        if !mask.iter().any(|&m| m) {
            return Ok(TitleEncoding {
                pooled: tape.constant(Tensor::zeros(1, self.d_news)),
                self_attention: Vec::new(),
                pooling: None,
            });
        }
        let emb = tape.embedding(self.word, tokens)?;
        let inv_sqrt = F::lit(1.0 / (self.head_dim as f64).sqrt());
        let mut head_outs = Vec::with_capacity(self.heads.len());
        let mut attn = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let wq = tape.param(head.wq);
            let wk = tape.param(head.wk);
            let wv = tape.param(head.wv);
            let q = tape.matmul(emb, wq)?;
            let k = tape.matmul(emb, wk)?;
            let v = tape.matmul(emb, wv)?;
            let kt = tape.transpose(k);
            let scores = tape.matmul(q, kt)?;
            let scores = tape.scale(scores, inv_sqrt);
            let a = tape.softmax_rows(scores, Some(&mask))?;
            head_outs.push(tape.matmul(a, v)?);
            attn.push(a);
        }
        let hidden = tape.concat_cols(&head_outs)?;

        let proj = tape.dense(hidden, self.add_w, self.add_b)?;
        let proj = tape.tanh(proj);
        let q = tape.param(self.add_q);
        let logits = tape.matmul(proj, q)?;
        let logits = tape.transpose(logits);
        let weights = tape.softmax_rows(logits, Some(&mask))?;
        let pooled = tape.matmul(weights, hidden)?;
        Ok(TitleEncoding {
            pooled,
            self_attention: attn,
            pooling: Some(weights),
        })
    }

    fn entity_channel<F: Real>(&self, tape: &mut Tape<'_, F>, entity_ids: &[usize]) -> Result<Option<Var>> {
        let Some(table) = self.entity else {
            return Ok(None);
        };
        let ids: Vec<usize> = entity_ids.iter().copied().filter(|&e| e != 0).collect();
        if ids.is_empty() {
            return Ok(Some(tape.constant(Tensor::zeros(1, self.entity_dim))));
        }
        let rows = tape.embedding(table, &ids)?;
        let weights = tape.constant(Tensor::filled(1, ids.len(), F::lit(1.0 / ids.len() as f64)));
        Ok(Some(tape.matmul(weights, rows)?))
    }

    /// News embedding `n` (`1 x d_news`) of one article.
    pub fn encode_news<F: Real>(&self, tape: &mut Tape<'_, F>, article: &NewsArticle) -> Result<Var> {
        let categories = tape.params().get(self.category).rows();
        if article.category_id >= categories {
            return Err(Error::UnknownCategory(article.category_id));
        }
        let title = self.encode_title(tape, &article.title_tokens)?;
        let cat = tape.embedding(self.category, &[article.category_id])?;
        let mut parts = vec![title, cat];
        if let Some(e) = self.entity_channel(tape, &article.entity_ids)? {
            parts.push(e);
        }
        let joined = tape.concat_cols(&parts)?;
        tape.dense(joined, self.combine_w, self.combine_b)
    }
}
