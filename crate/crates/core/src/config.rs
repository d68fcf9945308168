//! Model and training configuration, loadable from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! news = "news.tsv"
//! behaviors = ["behaviors.tsv"]
//! bucket_width = 3600
//!
//! [split]
//! mode = "days"          # or "fraction" / "cutoffs"
//! train_days = 5
//! valid_days = 1
//!
//! [model]
//! d = 5
//!
//! [train]
//! lr = 1e-5
//! negatives = 4
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ImpressionRecord, TimeSplit};
use crate::error::{Error, Result};

/// Which scoring branches are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Avoidance-aware user encoder and relevance predictor.
    #[default]
    Full,
    /// Engagement vectors zeroed inside the user encoder.
    OnlyRel,
    /// Relevance predictor bypassed: the score is the user/candidate dot product.
    OnlyAvoid,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [AblationMode::OnlyRel, AblationMode::OnlyAvoid, AblationMode::Full];

    pub fn label(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::OnlyRel => "only_rel",
            AblationMode::OnlyAvoid => "only_avoid",
        }
    }
}

impl std::str::FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AblationMode::Full),
            "only_rel" => Ok(AblationMode::OnlyRel),
            "only_avoid" => Ok(AblationMode::OnlyAvoid),
            other => Err(Error::Config(format!("unknown ablation mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub max_title_len: usize,
    pub word_dim: usize,
    pub train_word_embeddings: bool,
    /// News embedding width.
    pub d_news: usize,
    pub title_heads: usize,
    pub additive_hidden: usize,
    pub category_dim: usize,
    pub use_entities: bool,
    pub entity_dim: usize,
    /// Engagement grid resolution.
    pub d: usize,
    pub dim_ue: usize,
    pub d_time: usize,
    /// History length.
    pub history_len: usize,
    pub user_heads: usize,
    /// CNN half window; the window spans `2h + 1` clicks.
    pub cnn_half_window: usize,
    pub mode: AblationMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            max_title_len: 30,
            word_dim: 300,
            train_word_embeddings: true,
            d_news: 256,
            title_heads: 8,
            additive_hidden: 128,
            category_dim: 100,
            use_entities: true,
            entity_dim: 100,
            d: 5,
            dim_ue: 32,
            d_time: 16,
            history_len: 50,
            user_heads: 4,
            cnn_half_window: 1,
            mode: AblationMode::Full,
        }
    }
}

impl ModelConfig {
    pub fn d_aug(&self) -> usize {
        self.d_news + self.dim_ue
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.max_title_len == 0 || self.word_dim == 0 || self.d_news == 0 {
            return fail("max_title_len, word_dim and d_news must be positive".into());
        }
        if self.title_heads == 0 || self.d_news % self.title_heads != 0 {
            return fail(format!("d_news {} not divisible by title_heads {}", self.d_news, self.title_heads));
        }
        if self.user_heads == 0 || self.d_aug() % self.user_heads != 0 {
            return fail(format!(
                "d_news + dim_ue = {} not divisible by user_heads {}",
                self.d_aug(),
                self.user_heads
            ));
        }
        if self.d == 0 || self.dim_ue == 0 || self.d_time == 0 || self.history_len == 0 {
            return fail("d, dim_ue, d_time and history_len must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Negatives per positive.
    pub negatives: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    /// Worker threads for per-instance gradients; 1 is the strict
    /// single-threaded mode.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            negatives: 4,
            max_epochs: 10,
            patience: 3,
            batch_size: 32,
            max_steps: None,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::Config("negatives (K) must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.threads == 0 {
            return Err(Error::Config("batch_size and threads must be positive".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub news: PathBuf,
    pub behaviors: Vec<PathBuf>,
    #[serde(default)]
    pub word_vectors: Option<PathBuf>,
    #[serde(default = "default_bucket_width")]
    pub bucket_width: i64,
}

fn default_bucket_width() -> i64 {
    3600
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitConfig {
    Days { train_days: i64, valid_days: i64 },
    Fraction { train: f64, valid: f64 },
    Cutoffs { train_end: i64, valid_end: i64 },
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig::Days {
            train_days: 5,
            valid_days: 1,
        }
    }
}

impl SplitConfig {
    pub fn resolve(&self, records: &[ImpressionRecord]) -> TimeSplit {
        match *self {
            SplitConfig::Days {
                train_days,
                valid_days,
            } => TimeSplit::by_days(records, train_days, valid_days),
            SplitConfig::Fraction { train, valid } => TimeSplit::by_fraction(records, train, valid),
            SplitConfig::Cutoffs {
                train_end,
                valid_end,
            } => TimeSplit {
                train_end,
                valid_end,
            },
        }
    }
}

/// Everything a training run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a TOML config and resolves relative data paths against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.news);
        self.data.behaviors.iter_mut().for_each(fix);
        if let Some(p) = self.data.word_vectors.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.data.bucket_width <= 0 {
            return Err(Error::Config("bucket_width must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Short hash over the model, training and split settings plus seed.
    pub fn fingerprint(&self) -> String {
        let key = serde_json::json!({
            "seed": self.seed,
            "split": self.split,
            "model": self.model,
            "train": self.train,
            "bucket_width": self.data.bucket_width,
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
