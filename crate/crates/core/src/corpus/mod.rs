//! MIND-format news and behaviors parsing, vocabularies, word vectors and
//! chronological splits.

mod behaviors;
mod news;
mod split;
mod vectors;
mod vocab;

use std::path::Path;

pub use behaviors::{
    format_mind_time, parse_behaviors_file, parse_behaviors_str, parse_mind_time, write_behaviors_jsonl,
    write_behaviors_tsv, BehaviorsLog, ImpressionRecord,
};
pub use news::{parse_news_file, parse_news_str, NewsArticle, NewsCatalog};
pub use split::TimeSplit;
pub use vectors::{load_word_vectors, random_matrix, read_word_vectors, WordVectors, DEFAULT_INIT_RANGE};
pub use vocab::{normalize, tokenize_title, Interner, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

/// A row that failed to parse and was skipped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}
