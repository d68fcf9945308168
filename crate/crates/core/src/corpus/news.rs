use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

use super::vocab::{normalize, tokenize_title, Interner, Vocabulary};
use super::{is_jsonl, RowError};

#[derive(Clone, Debug, PartialEq)]
pub struct NewsArticle {
    pub news_id: String,
    pub category_id: usize,
    pub subcategory_id: usize,
    /// Exactly `max_title_len` vocabulary indices, PAD-filled on the right.
    pub title_tokens: Vec<usize>,
    /// Indices into [`NewsCatalog::entities`]; 0 is reserved for padding.
    pub entity_ids: Vec<usize>,
    pub publish_time: Option<i64>,
    pub abstract_text: String,
}

/// Parsed news file: articles in file order plus the vocabularies built
/// while reading it. Immutable once built.
#[derive(Clone, Debug)]
pub struct NewsCatalog {
    articles: Vec<NewsArticle>,
    by_id: HashMap<String, usize>,
    pub vocab: Vocabulary,
    pub categories: Interner,
    pub subcategories: Interner,
    pub entities: Interner,
    pub max_title_len: usize,
    pub skipped: Vec<RowError>,
}

impl NewsCatalog {
    pub fn articles(&self) -> &[NewsArticle] {
        &self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn index_of(&self, news_id: &str) -> Option<usize> {
        self.by_id.get(news_id).copied()
    }

    pub fn get(&self, news_id: &str) -> Option<&NewsArticle> {
        self.index_of(news_id).map(|i| &self.articles[i])
    }

    pub fn article(&self, index: usize) -> &NewsArticle {
        &self.articles[index]
    }
}

/// One row before tokenization.
struct RawNews {
    news_id: String,
    category: String,
    subcategory: String,
    title: String,
    abstract_text: String,
    entities: Vec<String>,
    publish_time: Option<i64>,
}

#[derive(Deserialize)]
struct JsonNews {
    news_id: String,
    #[serde(default)]
    category: String,
    #[serde(default)]
    subcategory: String,
    #[serde(default)]
    title: String,
    #[serde(default, rename = "abstract")]
    abstract_text: String,
    #[serde(default)]
    entities: Vec<String>,
    #[serde(default)]
    publish_time: Option<i64>,
}

#[derive(Deserialize)]
struct MindEntity {
    #[serde(rename = "WikidataId")]
    wikidata_id: String,
}

fn parse_entities(field: &str) -> std::result::Result<Vec<String>, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    let parsed: Vec<MindEntity> =
        serde_json::from_str(field).map_err(|e| format!("bad entity json: {e}"))?;
    Ok(parsed.into_iter().map(|e| e.wikidata_id).collect())
}

fn parse_tsv_row(line: &str) -> std::result::Result<RawNews, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if !(5..=8).contains(&cols.len()) {
        return Err(format!("expected 5 to 8 tab-separated columns, got {}", cols.len()));
    }
    let mut entities = Vec::new();
    // MIND columns 6 and 7 hold title and abstract entities.
    for field in cols.iter().skip(6).take(2) {
        for e in parse_entities(field)? {
            if !entities.contains(&e) {
                entities.push(e);
            }
        }
    }
    Ok(RawNews {
        news_id: cols[0].to_owned(),
        category: cols[1].to_owned(),
        subcategory: cols[2].to_owned(),
        title: cols[3].to_owned(),
        abstract_text: cols[4].to_owned(),
        entities,
        publish_time: None,
    })
}

fn parse_json_row(line: &str) -> std::result::Result<RawNews, String> {
    let j: JsonNews = serde_json::from_str(line).map_err(|e| e.to_string())?;
    Ok(RawNews {
        news_id: j.news_id,
        category: j.category,
        subcategory: j.subcategory,
        title: j.title,
        abstract_text: j.abstract_text,
        entities: j.entities,
        publish_time: j.publish_time,
    })
}

/// Parses a MIND `news.tsv` (or the JSONL interchange form when the path
/// ends in `.jsonl`). Malformed rows are skipped and reported in
/// [`NewsCatalog::skipped`]; a duplicated news id is a hard error.
pub fn parse_news_file(path: impl AsRef<Path>, max_title_len: usize) -> Result<NewsCatalog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_news_str(&text, is_jsonl(path), max_title_len)
}

pub fn parse_news_str(text: &str, jsonl: bool, max_title_len: usize) -> Result<NewsCatalog> {
    if max_title_len == 0 {
        return Err(Error::Config("max_title_len must be at least 1".into()));
    }
    let mut raw = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = if jsonl {
            parse_json_row(line)
        } else {
            parse_tsv_row(line)
        };
        match row {
            Ok(r) => raw.push(r),
            Err(message) => skipped.push(RowError {
                line: i + 1,
                message,
            }),
        }
    }

    let mut vocab = Vocabulary::new();
    for r in &raw {
        for tok in normalize(&r.title) {
            vocab.insert(&tok);
        }
    }

    let mut categories = Interner::new();
    let mut subcategories = Interner::new();
    let mut entities = Interner::with_padding();
    let mut by_id = HashMap::with_capacity(raw.len());
    let mut articles = Vec::with_capacity(raw.len());
    for r in raw {
        if by_id.contains_key(&r.news_id) {
            return Err(Error::DuplicateNewsId(r.news_id));
        }
        by_id.insert(r.news_id.clone(), articles.len());
        articles.push(NewsArticle {
            category_id: categories.intern(&r.category),
            subcategory_id: subcategories.intern(&r.subcategory),
            title_tokens: tokenize_title(&r.title, &vocab, max_title_len),
            entity_ids: r.entities.iter().map(|e| entities.intern(e)).collect(),
            publish_time: r.publish_time,
            abstract_text: r.abstract_text,
            news_id: r.news_id,
        });
    }

    Ok(NewsCatalog {
        articles,
        by_id,
        vocab,
        categories,
        subcategories,
        entities,
        max_title_len,
        skipped,
    })
}
