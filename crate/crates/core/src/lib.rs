//! Avoidance-aware news recommendation.
//!
//! Exposure statistics over time buckets ([`stats`]) place every article on
//! an (avoidance, EPI) grid ([`grid`]) whose cells carry learned engagement
//! embeddings. A title encoder ([`news_encoder`]), a relevance predictor
//! ([`relevance`]) and a candidate-aware user encoder ([`user_encoder`])
//! combine into [`model::AwrsModel`], trained with [`train`] and scored
//! with [`eval`]. Gradients come from the small reverse-mode engine in
//! [`autodiff`].

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod grid;
pub mod model;
pub mod news_encoder;
pub mod pipeline;
pub mod relevance;
pub mod stats;
pub mod synth;
pub mod train;
pub mod user_encoder;

pub use config::{AblationMode, ModelConfig, RunConfig, TrainConfig};
pub use error::{Error, Result};
pub use model::AwrsModel;
